#pragma once

#include "dmftsim/common.hpp"

#include <optional>

namespace dmftsim {

/// Link phi(u, z) producing the response from the pre-activation u and noise z.
struct LinkFunction {
  std::string name;
  std::function<double(double, double)> eval;
  /// Weak derivative in u.
  std::function<double(double, double)> du;
  double du_bound = 1.0;
};

/// phi(u, z) = u + z.
LinkFunction linear_link();
/// phi(u, z) = |u| + z, with du(0, z) = 0.
LinkFunction abs_link();

/// Loss L(a, b, c) on (prediction, true pre-activation, noise) together with
/// ell = dL/da and the two partials of ell used by the dynamics.
struct LossModel {
  std::string name;
  std::function<double(double, double, double)> L;
  std::function<double(double, double, double)> ell;
  std::function<double(double, double, double)> d1ell;
  std::function<double(double, double, double)> d2ell;
  std::optional<double> ell_bound;
  double d1_bound = 0.0;
  double d2_bound = 0.0;
};

/// C^2 truncation h on [0, inf): 1 on [0, lower], 0 on [upper, inf),
/// a quintic smoothstep in between.
class TruncationProfile {
 public:
  TruncationProfile(double lower, double upper);

  double lower() const { return lower_; }
  double upper() const { return upper_; }

  double h(double u) const;
  double h1(double u) const;
  double h2(double u) const;

  double h1_sup() const;
  double h2_sup() const;

 private:
  double lower_;
  double upper_;
};

TruncationProfile smoothstep_profile(double lower, double upper);

/// Regularized Wirtinger-flow loss for phase retrieval, phi(b, c) = |b| + c.
LossModel rwf_loss(const TruncationProfile& profile);
/// Robust loss rho(a - b - c) with rho(x) = s^2 (sqrt(1 + (x/s)^2) - 1).
LossModel pseudo_huber_loss(double scale = 1.0);
/// Squared loss 0.5 (a - b - c)^2; ell = a - b - c.
LossModel squared_loss();
/// Identically zero loss; useful for degenerate checks.
LossModel zero_loss();

/// Spectral pre-processing Ts applied to responses before forming M_n.
struct PreProcess {
  std::string name;
  std::function<double(double)> Ts;
  std::function<double(double)> Ts1;
  double tau = 0.0;
  double lipschitz = 0.0;
  std::optional<double> clip;
};

/// Ts(y) = min(y^2, M^2); Ts1(y) = 2y 1{|y| < M}.
PreProcess phase_preprocess(double clip);

/// Scalar law with a sampler. Gaussian laws carry their parameters so that
/// quadrature can be used instead of sampling.
struct ScalarDist {
  std::string name;
  std::function<double(Rng&)> sample;
  double second_moment = 1.0;
  std::optional<double> point_mass;
  std::optional<double> gaussian_sd;  // set for centered Gaussians
};

ScalarDist point_mass(double value);
ScalarDist gaussian(double sd = 1.0);
ScalarDist rademacher();

/// Finite-size data: X (n x d) with N(0, 1/d) entries, theta* with norm sqrt(d),
/// z iid noise and y = phi(X theta*, z).
struct ModelInstance {
  int n = 0;
  int d = 0;
  double delta = 0.0;
  MatrixXd X;
  VectorXd theta_star;
  VectorXd z;
  VectorXd y;
  VectorXd eta_star;  // X theta*
};

ModelInstance make_instance(int n, int d, std::uint64_t seed, const LinkFunction& link,
                            const ScalarDist& noise, const ScalarDist& signal);

/// Builds an instance from a supplied design and signal (signal rescaled to norm sqrt(d)).
ModelInstance make_instance_from(MatrixXd X, VectorXd theta_star, VectorXd z, const LinkFunction& link);

}  // namespace dmftsim
