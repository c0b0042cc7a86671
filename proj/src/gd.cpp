#include "dmftsim/gd.hpp"

#include "dmftsim/linalg.hpp"

#include <cmath>

namespace dmftsim {

namespace {

VectorXd loss_derivative(const LossModel& loss, const VectorXd& eta, const ModelInstance& inst) {
  VectorXd out(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) out[i] = loss.ell(eta[i], inst.eta_star[i], inst.z[i]);
  return out;
}

}  // namespace

Trajectory run_gd(const ModelInstance& inst, const LossModel& loss, const GdConfig& cfg, const VectorXd& theta0) {
  if (theta0.size() != inst.d) throw InvalidArgument("run_gd: theta0 has wrong dimension");
  if (cfg.m < 0) throw InvalidArgument("run_gd: negative horizon");
  Trajectory traj;
  traj.gamma = cfg.gamma;
  traj.lambda_ridge = cfg.lambda_ridge;
  traj.eta_star = inst.eta_star;
  traj.theta.resize(inst.d, cfg.m + 1);
  if (cfg.record_eta) traj.eta.resize(inst.n, cfg.m + 1);

  VectorXd theta = theta0;
  traj.theta.col(0) = theta;
  for (int t = 0;; ++t) {
    VectorXd eta = inst.X * theta;
    if (cfg.record_eta) traj.eta.col(t) = eta;
    if (t == cfg.m) break;
    const VectorXd ell = loss_derivative(loss, eta, inst);
    VectorXd grad = inst.X.transpose() * ell;
    theta = theta - cfg.gamma * grad - cfg.gamma * cfg.lambda_ridge * theta;
    if (!theta.allFinite()) throw NumericalError("gradient descent produced a non-finite iterate at t=" + std::to_string(t + 1));
    traj.theta.col(t + 1) = theta;
  }
  return traj;
}

double empirical_loss(const ModelInstance& inst, const LossModel& loss, double lambda_ridge, const VectorXd& theta) {
  const VectorXd eta = inst.X * theta;
  CompensatedSum acc;
  for (int i = 0; i < inst.n; ++i) acc.add(loss.L(eta[i], inst.eta_star[i], inst.z[i]));
  return acc.value() + 0.5 * lambda_ridge * theta.squaredNorm();
}

VectorXd empirical_gradient(const ModelInstance& inst, const LossModel& loss, double lambda_ridge,
                            const VectorXd& theta) {
  const VectorXd eta = inst.X * theta;
  return inst.X.transpose() * loss_derivative(loss, eta, inst) + lambda_ridge * theta;
}

std::pair<double, double> hessian_extremes(const ModelInstance& inst, const LossModel& loss, double lambda_ridge,
                                           const VectorXd& theta) {
  const VectorXd eta = inst.X * theta;
  VectorXd w(inst.n);
  for (int i = 0; i < inst.n; ++i) w[i] = loss.d1ell(eta[i], inst.eta_star[i], inst.z[i]);
  MatrixXd H = weighted_gram_signed(inst.X, w);
  H.diagonal().array() += lambda_ridge;
  return extreme_eigenvalues(H);
}

HessianReport hessian_report(const ModelInstance& inst, const LossModel& loss, double lambda_ridge,
                             const Trajectory& traj, double radius) {
  HessianReport rep;
  const double sd = std::sqrt(static_cast<double>(inst.d));
  for (int t = 0; t <= traj.horizon(); ++t) {
    const VectorXd theta = traj.theta.col(t);
    const auto [lo, hi] = hessian_extremes(inst, loss, lambda_ridge, theta);
    rep.lam_min.push_back(lo);
    rep.lam_max.push_back(hi);
    const bool inside = (theta - inst.theta_star).norm() / sd <= radius;
    rep.in_region.push_back(inside);
    if (inside && rep.first_in_region < 0) rep.first_in_region = t;
  }
  return rep;
}

JointSamples empirical_joint(const Trajectory& traj, const ModelInstance& inst) {
  const int m = traj.horizon();
  JointSamples js;
  js.theta_block.resize(inst.d, m + 2);
  js.theta_block.leftCols(m + 1) = traj.theta;
  js.theta_block.col(m + 1) = inst.theta_star;
  js.eta_block.resize(inst.n, m + 3);
  if (traj.eta.cols() == m + 1) {
    js.eta_block.leftCols(m + 1) = traj.eta;
  } else {
    js.eta_block.leftCols(m + 1) = inst.X * traj.theta;
  }
  js.eta_block.col(m + 1) = inst.eta_star;
  js.eta_block.col(m + 2) = inst.z;
  return js;
}

void align_sign(Trajectory& traj, const VectorXd& theta_star) {
  if (traj.theta.col(0).dot(theta_star) < 0.0) {
    traj.theta = -traj.theta;
    if (traj.eta.size() > 0) traj.eta = -traj.eta;
  }
}

TrajectorySummary summarize(const Trajectory& traj, const ModelInstance& inst, const LossModel& loss) {
  TrajectorySummary s;
  const double d = static_cast<double>(inst.d);
  for (int t = 0; t <= traj.horizon(); ++t) {
    const VectorXd theta = traj.theta.col(t);
    s.dist.push_back((theta - inst.theta_star).norm() / std::sqrt(d));
    s.overlap.push_back(theta.dot(inst.theta_star) / d);
    s.loss.push_back(empirical_loss(inst, loss, traj.lambda_ridge, theta));
  }
  return s;
}

}  // namespace dmftsim
