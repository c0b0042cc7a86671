#pragma once

#include "dmftsim/gd.hpp"
#include "dmftsim/model.hpp"

namespace dmftsim {

/// Nodes and weights for E[f(G)], G ~ N(0,1); weights sum to one.
struct QuadratureRule {
  VectorXd nodes;
  VectorXd weights;
};

QuadratureRule gauss_hermite(int order);

/// Composite Gauss-Legendre rule for E[f(G)] on [-range, range] with the
/// normal density folded into the weights (weights renormalized to one).
QuadratureRule composite_normal_rule(int panels, int order, double range);

enum class GaussianRule { GaussHermite, CompositeLegendre };

struct QuadratureSpec {
  int gh_nodes = 64;  // Gauss-Hermite order (for G when selected, and for Gaussian z)
  GaussianRule g_rule = GaussianRule::CompositeLegendre;
  int g_panels = 4000;
  int g_order = 4;
  double g_range = 12.0;
  int z_samples = 20000;  // Monte Carlo size when z is neither a point mass nor Gaussian
  std::uint64_t seed = 1;
};

/// Discrete law of (Z_s, G^2) with Z_s = Ts(phi(G, z)), G ~ N(0,1), z ~ P(z).
class SpectralMoments {
 public:
  SpectralMoments(const PreProcess& pre, const LinkFunction& link, const ScalarDist& noise, double delta,
                  const QuadratureSpec& quad);

  double tau() const { return tau_; }
  double delta() const { return delta_; }

  /// E[Z_s / (lambda - Z_s)]
  double e_ratio(double lambda) const;
  /// E[Z_s G^2 / (lambda - Z_s)]
  double e_ratio_g2(double lambda) const;

  double psi(double lambda) const;
  double psi_prime(double lambda) const;
  double phi(double lambda) const;
  double phi_prime(double lambda) const;

 private:
  void check_domain(double lambda) const;

  double tau_;
  double delta_;
  std::vector<double> zs_;
  std::vector<double> g2_;
  std::vector<double> w_;
};

struct LambdaStarSolution {
  double lambda_star = 0.0;
  double lambda_bar = 0.0;
  double psi_prime = 0.0;
  double phi_prime = 0.0;
  double overlap_a = 0.0;
  double lam1_lim = 0.0;
  double lam2_lim = 0.0;
  double tau = 0.0;
  int bisections = 0;
  bool admissible = true;  // divergence proxy near tau
};

LambdaStarSolution solve_lambda_star(const PreProcess& pre, const LinkFunction& link, const ScalarDist& noise,
                                     double delta, const QuadratureSpec& quad = {});

/// Same solver on a prepared moment object.
LambdaStarSolution solve_lambda_star(const SpectralMoments& mom);

/// T(u) = Ts(u) / (lambda* - Ts(u)) and its derivative.
struct TMap {
  PreProcess pre;
  double lambda_star;

  double T(double y) const;
  double T1(double y) const;
};

MatrixXd build_Mn(const ModelInstance& inst, const PreProcess& pre);

struct SpectralResult {
  VectorXd theta0;  // sqrt(d) v1, <theta0, theta*> >= 0
  double lam1_emp = 0.0;
  double lam2_emp = 0.0;
  double overlap_emp = 0.0;
  double residual = 0.0;  // ||M v - lam1 v||
};

SpectralResult spectral_estimator(const ModelInstance& inst, const PreProcess& pre);
SpectralResult spectral_from_matrix(const MatrixXd& Mn, const VectorXd& theta_star);

struct TwoStageResult {
  std::vector<VectorXd> stage1;  // theta_T^0 for T = 0..T_stage (T = 0 is theta*)
  std::vector<double> gaps;      // ||theta_T^0 - sqrt(d) v1|| / sqrt(d), T = 0..T_stage
  std::vector<double> betas;     // normalizations ||M theta|| / sqrt(d), T = 1..T_stage
  Trajectory stage2;
  SpectralResult spectral;
};

/// Power iteration from theta* for T_stage steps, then gradient descent for m steps.
TwoStageResult two_stage_dynamic(const ModelInstance& inst, const PreProcess& pre, const LossModel& loss,
                                 double gamma, double lambda_ridge, int T_stage, int m);

}  // namespace dmftsim
