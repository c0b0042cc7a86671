#include "dmftsim/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace dmftsim {

double w2_1d(const VectorXd& a, const VectorXd& b) {
  if (a.size() == 0 || b.size() == 0) throw InvalidArgument("w2_1d: empty sample");
  std::vector<double> sa(a.data(), a.data() + a.size());
  std::vector<double> sb(b.data(), b.data() + b.size());
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  const size_t N = std::max(sa.size(), sb.size());
  auto quantile = [](const std::vector<double>& s, double q) {
    const auto idx = static_cast<size_t>(std::floor(q * static_cast<double>(s.size())));
    return s[std::min(idx, s.size() - 1)];
  };
  CompensatedSum acc;
  for (size_t k = 0; k < N; ++k) {
    const double q = (static_cast<double>(k) + 0.5) / static_cast<double>(N);
    const double diff = quantile(sa, q) - quantile(sb, q);
    acc.add(diff * diff);
  }
  return std::sqrt(std::max(acc.value(), 0.0) / static_cast<double>(N));
}

double ComparisonReport::max_w2() const {
  double v = 0.0;
  for (double x : w2_theta) v = std::max(v, x);
  for (double x : w2_eta) v = std::max(v, x);
  return v;
}

double ComparisonReport::max_overlap_gap() const {
  double v = 0.0;
  for (size_t t = 0; t < overlap_emp.size(); ++t) v = std::max(v, std::abs(overlap_emp[t] - overlap_dmft[t]));
  return v;
}

MatrixXd second_moments(const MatrixXd& block) {
  const auto c = block.cols();
  MatrixXd M(c, c);
  for (Eigen::Index i = 0; i < c; ++i)
    for (Eigen::Index j = 0; j <= i; ++j) {
      M(i, j) = compensated_dot_mean(block.col(i), block.col(j));
      M(j, i) = M(i, j);
    }
  return M;
}

JointSamples as_joint(const DmftLaw& law) {
  return JointSamples{law.theta_samples, law.eta_samples};
}

ComparisonReport compare_empirical_vs_dmft(const JointSamples& emp, const DmftLaw& law) {
  const int m = law.horizon();
  if (emp.theta_block.cols() != m + 2 || emp.eta_block.cols() != m + 3)
    throw InvalidArgument("compare_empirical_vs_dmft: horizon mismatch (empirical " +
                          std::to_string(emp.theta_block.cols() - 2) + ", DMFT " + std::to_string(m) + ")");
  ComparisonReport rep;
  for (int t = 0; t <= m; ++t) {
    rep.w2_theta.push_back(w2_1d(emp.theta_block.col(t), law.theta_samples.col(t)));
    rep.w2_eta.push_back(w2_1d(emp.eta_block.col(t), law.eta_samples.col(t)));
  }
  const MatrixXd Ce = second_moments(emp.theta_block);
  const MatrixXd Cd = second_moments(law.theta_samples);
  rep.cov_theta_discrepancy = (Ce.topLeftCorner(m + 1, m + 1) - Cd.topLeftCorner(m + 1, m + 1)).cwiseAbs().maxCoeff();
  // eta block: eta^0..eta^m and w* (z excluded; its law is shared by construction)
  const MatrixXd Ee = second_moments(emp.eta_block.leftCols(m + 2));
  const MatrixXd Ed = second_moments(law.eta_samples.leftCols(m + 2));
  rep.cov_eta_discrepancy = (Ee - Ed).cwiseAbs().maxCoeff();
  for (int t = 0; t <= m; ++t) {
    rep.overlap_emp.push_back(Ce(t, m + 1));
    rep.overlap_dmft.push_back(Cd(t, m + 1));
  }
  return rep;
}

LongTimeReport long_time_compare(const Trajectory& traj, const VectorXd& theta_star, const FixedPointState& fp,
                                 double step_tol) {
  const int m = traj.horizon();
  if (m < 1) throw InvalidArgument("long_time_compare: trajectory needs at least two iterates");
  if (fp.theta_pool.rows() == 0) throw InvalidArgument("long_time_compare: fixed point has no sample pool");
  const double d = static_cast<double>(traj.theta.rows());
  LongTimeReport rep;
  rep.last_step = (traj.theta.col(m) - traj.theta.col(m - 1)).norm() / std::sqrt(d);
  if (!(rep.last_step <= step_tol)) {
    throw NumericalError("long_time_compare: gradient descent not converged (last step " +
                         std::to_string(rep.last_step) + " > " + std::to_string(step_tol) + ")");
  }
  const VectorXd last = traj.theta.col(m);
  rep.w2_theta = w2_1d(last, fp.theta_pool.col(0));
  rep.overlap_emp = last.dot(theta_star) / d;
  rep.sq_norm_emp = last.squaredNorm() / d;
  rep.overlap_fp = fp.C_theta_inf(0, 1);
  rep.sq_norm_fp = fp.C_theta_inf(0, 0);
  return rep;
}

}  // namespace dmftsim
