#pragma once

#include "dmftsim/linalg.hpp"
#include "dmftsim/model.hpp"
#include "dmftsim/spectral.hpp"

namespace dmftsim {

struct MonteCarloSpec {
  int K = 100000;
  std::uint64_t seed = 7;
  double jitter = 1e-10;
};

/// How theta^0 is drawn. Spectral: theta^0 = a theta* + u_diamond with the
/// diamond channels active. Independent: theta^0 ~ init_law independent of
/// theta*, every diamond channel identically zero.
enum class InitMode { Spectral, Independent };

struct DmftProblem {
  LossModel loss;
  LinkFunction link;
  ScalarDist noise = point_mass(0.0);
  ScalarDist signal = gaussian(1.0);
  PreProcess pre;
  double delta = 1.0;
  double gamma = 0.1;
  double lambda_ridge = 0.0;
  InitMode mode = InitMode::Spectral;
  ScalarDist init_law = gaussian(1.0);  // used only in Independent mode
};

/// Lower-triangular kernel storage: k[t][s] for s < t (or s <= t for
/// symmetric kernels, stored once).
using Kernel = std::vector<std::vector<double>>;

/// Monte Carlo state of the DMFT recursion. theta-side pool lives in the
/// probability space of theta*, eta-side pool in that of z; both have K paths.
class DmftState {
 public:
  DmftState(const DmftProblem& prob, const LambdaStarSolution& lam_sol, const MonteCarloSpec& mc);

  /// eta^t and the eta-side kernels at the current time (requires theta^t).
  void step_eta();
  /// theta^{t+1} and the theta-side kernels (requires eta^t).
  void step_theta();
  /// Alternates the two steps until theta^m and eta^m exist.
  void advance_to(int m);

  int theta_horizon() const { return static_cast<int>(theta_.size()) - 1; }
  int eta_horizon() const { return static_cast<int>(eta_.size()) - 1; }
  int K() const { return K_; }

  double a() const { return a_; }
  double lambda_star() const { return lambda_star_; }
  const DmftProblem& problem() const { return prob_; }

  // theta-side kernels
  double C_theta(int t, int s) const { return t >= s ? C_theta_[t][s] : C_theta_[s][t]; }
  double C_theta_star(int t) const { return C_theta_star_[t]; }
  double R_theta(int t, int s) const { return R_theta_[t][s]; }  // s < t
  double R_theta_dia(int t) const { return R_theta_dia_[t]; }

  // eta-side kernels
  double C_eta(int t, int s) const { return t >= s ? C_eta_[t][s] : C_eta_[s][t]; }
  double C_eta_dia(int t) const { return C_eta_dia_[t]; }
  double C_eta_dia_dia() const { return 1.0 - a_ * a_; }
  double R_eta(int t, int s) const { return R_eta_[t][s]; }  // s < t
  double R_eta_star(int t) const { return R_eta_star_[t]; }
  double R_eta_dia(int t) const { return R_eta_dia_[t]; }
  double R_eta_dd(int t) const { return R_eta_dd_[t]; }
  double Gamma(int t) const { return Gamma_[t]; }
  /// E[d1ell(eta^t, w*, z)]
  double mean_d1(int t) const { return mean_d1_[t]; }
  /// E[d1ell(eta^0, w*, z) T(y)]
  double mean_d1_T0() const { return mean_d1_T0_; }

  // sample pools
  const VectorXd& theta_star() const { return theta_star_; }
  const VectorXd& u_dia() const { return u_dia_; }
  const VectorXd& theta(int t) const { return theta_[t]; }
  const VectorXd& u(int t) const { return u_[t]; }
  const VectorXd& w_star() const { return w_star_; }
  const VectorXd& z() const { return z_; }
  const VectorXd& y() const { return y_; }
  const VectorXd& w(int t) const { return w_[t]; }
  const VectorXd& eta(int t) const { return eta_[t]; }
  const VectorXd& ell(int t) const { return ell_[t]; }

  /// Smallest eigenvalue (before jitter) seen in any covariance used for sampling.
  double min_eig_w() const { return min_eig_w_; }
  double min_eig_u() const { return min_eig_u_; }
  double max_jitter() const { return std::max(wfac_.max_jitter(), ufac_.max_jitter()); }

 private:
  double mean(const VectorXd& v) const { return compensated_mean(v); }
  double mean_prod(const VectorXd& a, const VectorXd& b) const { return compensated_dot_mean(a, b); }

  DmftProblem prob_;
  int K_;
  double a_;
  double lambda_star_;
  TMap tmap_;
  Rng rng_;
  IncrementalCholesky wfac_;
  IncrementalCholesky ufac_;

  // theta side
  VectorXd theta_star_, u_dia_;
  std::vector<VectorXd> theta_, u_, u_innov_;
  // eta side
  VectorXd z_, w_star_, y_, Ty_, T1y_, dphi_, Ts_;
  std::vector<VectorXd> w_, w_innov_, eta_, ell_, d1_, d2_;
  std::vector<std::vector<VectorXd>> r_eta_;  // r_eta_[t][s], s < t
  std::vector<VectorXd> r_eta_star_, r_eta_dia_, r_eta_dd_;

  Kernel C_theta_, R_theta_, C_eta_, R_eta_;
  std::vector<double> C_theta_star_, R_theta_dia_, C_eta_dia_, R_eta_star_, R_eta_dia_, R_eta_dd_, Gamma_, mean_d1_;
  double mean_d1_T0_ = 0.0;
  double min_eig_w_ = 0.0;
  double min_eig_u_ = 0.0;
};

/// Samples of the limiting law: theta block K x (m+2) = (theta^0..theta^m, theta*),
/// eta block K x (m+3) = (eta^0..eta^m, w*, z).
struct DmftLaw {
  MatrixXd theta_samples;
  MatrixXd eta_samples;
  int horizon() const { return static_cast<int>(theta_samples.cols()) - 2; }
};

DmftState init_dmft(const DmftProblem& prob, const LambdaStarSolution& lam_sol, const MonteCarloSpec& mc);

/// Runs the recursion to horizon m and returns the sample pools.
DmftLaw run_dmft(DmftState& state, int m);

DmftLaw extract_law(const DmftState& state, int m);

struct TtiReport {
  int max_lag = 0;
  /// lag_series[s-1][t] = R_theta(t+s, t)
  std::vector<std::vector<double>> lag_series;
  /// max - min of R_theta(t+s, t) over the window [t_lo, t_hi]
  std::vector<double> lag_spread;
  int t_lo = 0;
  int t_hi = 0;
  std::vector<double> R_theta_dia_abs, R_eta_dia_abs, R_eta_dd_abs;
  /// log|R_theta(t_ref+s, t_ref)| = c - rate s, least squares over s = 1..fit_lags
  double decay_rate = 0.0;
  double decay_r2 = 0.0;
  int t_ref = 0;
  /// sum_{s<t} R_theta(t, s) at the last time
  double R_theta_sum = 0.0;
};

/// TTI spreads over t in [t_lo, t_hi] (clipped to the horizon); the decay fit
/// uses t_ref = t_lo. Negative t_lo / t_hi default to the last ten usable times.
TtiReport tti_diagnostics(const DmftState& state, int max_lag = 5, int t_lo = -1, int t_hi = -1, int fit_lags = 15);

}  // namespace dmftsim
