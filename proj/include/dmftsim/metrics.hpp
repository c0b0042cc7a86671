#pragma once

#include "dmftsim/dmft.hpp"
#include "dmftsim/fixed_point.hpp"
#include "dmftsim/gd.hpp"

namespace dmftsim {

/// W2 between two empirical measures on the line via the quantile coupling on
/// the grid (k + 0.5) / N, N = max(|a|, |b|).
double w2_1d(const VectorXd& a, const VectorXd& b);

struct ComparisonReport {
  std::vector<double> w2_theta;  // per t
  std::vector<double> w2_eta;    // per t
  double cov_theta_discrepancy = 0.0;  // max_{r,s <= m} |C_emp(r,s) - C_dmft(r,s)|
  double cov_eta_discrepancy = 0.0;    // same on the eta block second moments
  std::vector<double> overlap_emp;     // <theta^t, theta*>/d
  std::vector<double> overlap_dmft;    // C_theta(t, *)
  int horizon() const { return static_cast<int>(w2_theta.size()) - 1; }
  double max_w2() const;
  double max_overlap_gap() const;
};

/// Second-moment matrix of the columns of a sample block.
MatrixXd second_moments(const MatrixXd& block);

/// Both arguments use the layout theta (..., m+2 columns) and eta (..., m+3 columns).
ComparisonReport compare_empirical_vs_dmft(const JointSamples& emp, const DmftLaw& law);

/// Sample view of a DMFT law in the JointSamples layout (for self comparisons).
JointSamples as_joint(const DmftLaw& law);

struct LongTimeReport {
  double w2_theta = 0.0;
  double overlap_emp = 0.0;   // <theta^m, theta*>/d
  double overlap_fp = 0.0;    // C_theta_inf(0,1)
  double sq_norm_emp = 0.0;   // ||theta^m||^2/d
  double sq_norm_fp = 0.0;    // C_theta_inf(0,0)
  double last_step = 0.0;     // ||theta^m - theta^{m-1}|| / sqrt(d)
};

/// Requires ||theta^m - theta^{m-1}|| / sqrt(d) <= step_tol.
LongTimeReport long_time_compare(const Trajectory& traj, const VectorXd& theta_star, const FixedPointState& fp,
                                 double step_tol = 1e-8);

}  // namespace dmftsim
