#pragma once

#include "dmftsim/model.hpp"

#include <utility>

namespace dmftsim {

struct GdConfig {
  double gamma = 0.01;
  double lambda_ridge = 0.0;
  int m = 10;
  bool record_eta = true;
};

/// Iterates are stored column-wise: theta.col(t) = theta^t, eta.col(t) = X theta^t.
struct Trajectory {
  MatrixXd theta;  // d x (m+1)
  MatrixXd eta;    // n x (m+1), empty unless record_eta
  VectorXd eta_star;
  double gamma = 0.0;
  double lambda_ridge = 0.0;

  int horizon() const { return static_cast<int>(theta.cols()) - 1; }
};

/// theta^{t+1} = theta^t - gamma X^T ell(X theta^t, X theta*, z) - gamma lambda theta^t.
Trajectory run_gd(const ModelInstance& inst, const LossModel& loss, const GdConfig& cfg, const VectorXd& theta0);

/// sum_i L(eta_i, eta*_i, z_i) + (lambda/2) ||theta||^2
double empirical_loss(const ModelInstance& inst, const LossModel& loss, double lambda_ridge, const VectorXd& theta);

/// Gradient of empirical_loss.
VectorXd empirical_gradient(const ModelInstance& inst, const LossModel& loss, double lambda_ridge,
                            const VectorXd& theta);

/// Extreme eigenvalues of lambda I + X^T diag(d1ell(X theta, X theta*, z)) X.
std::pair<double, double> hessian_extremes(const ModelInstance& inst, const LossModel& loss, double lambda_ridge,
                                           const VectorXd& theta);

struct HessianReport {
  std::vector<double> lam_min;
  std::vector<double> lam_max;
  std::vector<bool> in_region;
  int first_in_region = -1;
};

/// Hessian extremes along a trajectory; in_region is ||theta^t - theta*|| / sqrt(d) <= radius.
HessianReport hessian_report(const ModelInstance& inst, const LossModel& loss, double lambda_ridge,
                             const Trajectory& traj, double radius);

/// Rows are coordinates: theta block d x (m+2) = (theta^0..theta^m, theta*),
/// eta block n x (m+3) = (eta^0..eta^m, eta*, z).
struct JointSamples {
  MatrixXd theta_block;
  MatrixXd eta_block;
};

JointSamples empirical_joint(const Trajectory& traj, const ModelInstance& inst);

/// Flips the whole trajectory when <theta^0, theta*> < 0 (sign-symmetric models).
void align_sign(Trajectory& traj, const VectorXd& theta_star);

/// Per-iterate summary: ||theta^t - theta*|| / sqrt(d), <theta^t, theta*>/d, loss value.
struct TrajectorySummary {
  std::vector<double> dist;
  std::vector<double> overlap;
  std::vector<double> loss;
};

TrajectorySummary summarize(const Trajectory& traj, const ModelInstance& inst, const LossModel& loss);

}  // namespace dmftsim
