#pragma once

#include "dmftsim/dmft.hpp"

#include <Eigen/Dense>

namespace dmftsim {

struct SolverConfig {
  int K = 100000;
  double damping = 0.5;
  double tol = 1e-8;
  int max_outer = 200;
  std::uint64_t seed = 11;
};

struct FixedPointState {
  double R_theta_inf = 0.0;
  double R_eta_inf = 0.0;
  double R_eta_star = 0.0;
  double Gamma_inf = 0.0;  // E[d1ell(eta_inf, w*, z)], not scaled by delta
  double C_eta_inf = 0.0;
  Eigen::Matrix2d C_theta_inf = Eigen::Matrix2d::Identity();
  /// columns: eta_inf, w_inf, w*, z
  MatrixXd eta_pool;
  /// columns: theta_inf, theta*, u_inf
  MatrixXd theta_pool;

  double delta = 0.0;
  double lambda_ridge = 0.0;
  int iterations = 0;
  bool converged = false;
  /// max parameter change per outer iteration
  std::vector<double> change_trace;
  /// max |residual| of the seven equations per outer iteration
  std::vector<double> residual_trace;
};

/// Root of eta + R ell(eta, w*, z) - w_inf closest to w_inf. `crossings`, when
/// given, receives the number of sign changes seen on the bracket (only
/// scanned when scan_roots is set).
double solve_eta_implicit(double R_theta_inf, double w_inf, double w_star, double z, const LossModel& loss,
                          int* crossings = nullptr, bool scan_roots = true, const double* warm_start = nullptr);

/// g(R) = lambda R + delta mean[d1 R / (1 + d1 R)] - 1 on fixed d1 samples.
double solve_R_theta(const VectorXd& d1_samples, double delta, double lambda_ridge);

/// Same reduction with eta_inf re-solved per trial R; pool columns (w_inf, w*, z).
/// On return eta (size K) holds eta_inf at the root.
double solve_R_theta(const MatrixXd& w_pool, double delta, double lambda_ridge, const LossModel& loss,
                     VectorXd& eta);

double R_theta_residual(const VectorXd& d1_samples, double delta, double lambda_ridge, double R);

/// Starting state for the damped iteration: either the tail of a DMFT run
/// (C_theta(t,t), C_theta(t,*), sum_s R_theta(t,s)) or [[1,a],[a,1]].
FixedPointState fixed_point_init_from_dmft(const DmftState& state);
FixedPointState fixed_point_init_spectral(double a);

FixedPointState iterate_fixed_point(const LossModel& loss, const LinkFunction& link, const ScalarDist& noise,
                                    const ScalarDist& signal, double delta, double gamma, double lambda_ridge,
                                    const SolverConfig& cfg, const FixedPointState& init);

/// Residuals in the order: theta equation (RMS), eta equation (RMS), C_eta,
/// C_theta (max entry), R_theta inverse, d1 average, R_eta*.
std::vector<double> fixed_point_residuals(const FixedPointState& state, const LossModel& loss);

/// Reference solution for noiseless phase retrieval: theta_inf = theta*,
/// eta_inf = w_inf = w*, u_inf = 0 and R from the scalar reduction.
FixedPointState phase_retrieval_reference(const LossModel& loss, const ScalarDist& signal, double delta, int K,
                                          std::uint64_t seed);

}  // namespace dmftsim
