#include "dmftsim/model.hpp"

#include <atomic>
#include <cmath>
#include <iostream>

namespace dmftsim {

namespace {
std::atomic<bool> g_warnings_enabled{true};
std::atomic<std::uint64_t> g_warning_count{0};

double sign(double x) { return (x > 0.0) - (x < 0.0); }
}  // namespace

void log_warn(const std::string& message) {
  ++g_warning_count;
  if (g_warnings_enabled) std::cerr << "WARN: " << message << '\n';
}

void set_warnings_enabled(bool enabled) { g_warnings_enabled = enabled; }

std::uint64_t warning_count() { return g_warning_count; }

LinkFunction linear_link() {
  return {"linear", [](double u, double z) { return u + z; }, [](double, double) { return 1.0; }, 1.0};
}

LinkFunction abs_link() {
  return {"phase", [](double u, double z) { return std::abs(u) + z; },
          [](double u, double) { return sign(u); }, 1.0};
}

TruncationProfile::TruncationProfile(double lower, double upper) : lower_(lower), upper_(upper) {
  if (!(lower > 0.0) || !(upper > lower)) {
    throw InvalidArgument("truncation profile requires 0 < L_cut < U_cut, got L_cut=" + std::to_string(lower) +
                          " U_cut=" + std::to_string(upper));
  }
}

// s(x) = 6x^5 - 15x^4 + 10x^3 on [0, 1]; h = 1 - s((u - L)/(U - L)).
double TruncationProfile::h(double u) const {
  if (u <= lower_) return 1.0;
  if (u >= upper_) return 0.0;
  const double x = (u - lower_) / (upper_ - lower_);
  return 1.0 - x * x * x * (10.0 + x * (-15.0 + 6.0 * x));
}

double TruncationProfile::h1(double u) const {
  if (u <= lower_ || u >= upper_) return 0.0;
  const double w = upper_ - lower_;
  const double x = (u - lower_) / w;
  return -30.0 * x * x * (x - 1.0) * (x - 1.0) / w;
}

double TruncationProfile::h2(double u) const {
  if (u <= lower_ || u >= upper_) return 0.0;
  const double w = upper_ - lower_;
  const double x = (u - lower_) / w;
  return -60.0 * x * (2.0 * x - 1.0) * (x - 1.0) / (w * w);
}

double TruncationProfile::h1_sup() const { return 1.875 / (upper_ - lower_); }

double TruncationProfile::h2_sup() const {
  const double w = upper_ - lower_;
  return 10.0 / std::sqrt(3.0) / (w * w);
}

TruncationProfile smoothstep_profile(double lower, double upper) { return TruncationProfile(lower, upper); }

LossModel rwf_loss(const TruncationProfile& profile) {
  const TruncationProfile h = profile;
  LossModel loss;
  loss.name = "rwf";
  loss.L = [h](double a, double b, double c) {
    const double phi = std::abs(b) + c;
    const double p = phi * phi;
    const double D = a * a - p;
    return 0.5 * D * D * h.h(a * a) * h.h(p);
  };
  loss.ell = [h](double a, double b, double c) {
    const double phi = std::abs(b) + c;
    const double p = phi * phi;
    const double A = a * a;
    const double D = A - p;
    const double hp = h.h(p);
    return (2.0 * D * a * h.h(A) + D * D * a * h.h1(A)) * hp;
  };
  loss.d1ell = [h](double a, double b, double c) {
    const double phi = std::abs(b) + c;
    const double p = phi * phi;
    const double A = a * a;
    const double D = A - p;
    return (2.0 * (3.0 * A - p) * h.h(A) + (9.0 * A - p) * D * h.h1(A) + 2.0 * A * D * D * h.h2(A)) * h.h(p);
  };
  loss.d2ell = [h](double a, double b, double c) {
    const double phi = std::abs(b) + c;
    const double p = phi * phi;
    const double A = a * a;
    const double D = A - p;
    const double hA = h.h(A);
    const double h1A = h.h1(A);
    const double hp = h.h(p);
    const double h1p = h.h1(p);
    const double dell_dp = -2.0 * a * hA * hp + 2.0 * D * a * hA * h1p - 2.0 * D * a * h1A * hp + D * D * a * h1A * h1p;
    return dell_dp * 2.0 * phi * sign(b);
  };
  const double U = h.upper();
  const double s1 = h.h1_sup();
  const double s2 = h.h2_sup();
  const double rU = std::sqrt(U);
  loss.ell_bound = 2.0 * U * rU + U * U * rU * s1;
  loss.d1_bound = 6.0 * U + 9.0 * U * U * s1 + 2.0 * U * U * U * s2;
  loss.d2_bound = 2.0 * rU * (2.0 * rU + 4.0 * U * rU * s1 + U * U * rU * s1 * s1);
  return loss;
}

LossModel pseudo_huber_loss(double scale) {
  if (!(scale > 0.0)) throw InvalidArgument("pseudo-Huber scale must be positive");
  const double s = scale;
  LossModel loss;
  loss.name = "linear-pseudo-huber";
  loss.L = [s](double a, double b, double c) {
    const double r = (a - b - c) / s;
    return s * s * (std::sqrt(1.0 + r * r) - 1.0);
  };
  loss.ell = [s](double a, double b, double c) {
    const double r = a - b - c;
    return r / std::sqrt(1.0 + (r / s) * (r / s));
  };
  loss.d1ell = [s](double a, double b, double c) {
    const double r = (a - b - c) / s;
    const double q = 1.0 + r * r;
    return 1.0 / (q * std::sqrt(q));
  };
  loss.d2ell = [s](double a, double b, double c) {
    const double r = (a - b - c) / s;
    const double q = 1.0 + r * r;
    return -1.0 / (q * std::sqrt(q));
  };
  loss.ell_bound = s;
  loss.d1_bound = 1.0;
  loss.d2_bound = 1.0;
  return loss;
}

LossModel squared_loss() {
  LossModel loss;
  loss.name = "linear-squared";
  loss.L = [](double a, double b, double c) { return 0.5 * (a - b - c) * (a - b - c); };
  loss.ell = [](double a, double b, double c) { return a - b - c; };
  loss.d1ell = [](double, double, double) { return 1.0; };
  loss.d2ell = [](double, double, double) { return -1.0; };
  loss.d1_bound = 1.0;
  loss.d2_bound = 1.0;
  return loss;
}

LossModel zero_loss() {
  LossModel loss;
  loss.name = "zero";
  auto zero = [](double, double, double) { return 0.0; };
  loss.L = zero;
  loss.ell = zero;
  loss.d1ell = zero;
  loss.d2ell = zero;
  loss.ell_bound = 0.0;
  return loss;
}

PreProcess phase_preprocess(double clip) {
  if (!(clip > 0.0)) throw InvalidArgument("phase-clip pre-processing requires M_clip > 0");
  const double M = clip;
  PreProcess pre;
  pre.name = "phase-clip";
  pre.Ts = [M](double y) { return std::min(y * y, M * M); };
  // a.e. derivative; the clip point takes the saturated (zero) value
  pre.Ts1 = [M](double y) { return std::abs(y) < M ? 2.0 * y : 0.0; };
  pre.tau = M * M;
  pre.lipschitz = 2.0 * M;
  pre.clip = M;
  return pre;
}

ScalarDist point_mass(double value) {
  ScalarDist dist;
  dist.name = "point-mass";
  dist.sample = [value](Rng&) { return value; };
  dist.second_moment = value * value;
  dist.point_mass = value;
  return dist;
}

ScalarDist gaussian(double sd) {
  if (!(sd > 0.0)) throw InvalidArgument("Gaussian law requires sd > 0");
  ScalarDist dist;
  dist.name = "gaussian";
  dist.sample = [sd](Rng& rng) { return sd * std::normal_distribution<double>(0.0, 1.0)(rng); };
  dist.second_moment = sd * sd;
  dist.gaussian_sd = sd;
  return dist;
}

ScalarDist rademacher() {
  ScalarDist dist;
  dist.name = "rademacher";
  dist.sample = [](Rng& rng) { return std::bernoulli_distribution(0.5)(rng) ? 1.0 : -1.0; };
  dist.second_moment = 1.0;
  return dist;
}

ModelInstance make_instance_from(MatrixXd X, VectorXd theta_star, VectorXd z, const LinkFunction& link) {
  const auto n = X.rows();
  const auto d = X.cols();
  if (n < 2 || d < 2) throw InvalidArgument("model instance requires n, d >= 2");
  if (theta_star.size() != d || z.size() != n) throw InvalidArgument("model instance: dimension mismatch");
  const double norm = theta_star.norm();
  if (!(norm > 0.0) || !std::isfinite(norm)) throw InvalidArgument("signal has zero realized norm");
  ModelInstance inst;
  inst.n = static_cast<int>(n);
  inst.d = static_cast<int>(d);
  inst.delta = static_cast<double>(n) / static_cast<double>(d);
  inst.theta_star = theta_star * (std::sqrt(static_cast<double>(d)) / norm);
  inst.X = std::move(X);
  inst.z = std::move(z);
  inst.eta_star = inst.X * inst.theta_star;
  inst.y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) inst.y[i] = link.eval(inst.eta_star[i], inst.z[i]);
  return inst;
}

ModelInstance make_instance(int n, int d, std::uint64_t seed, const LinkFunction& link, const ScalarDist& noise,
                            const ScalarDist& signal) {
  if (n < 2 || d < 2) throw InvalidArgument("model instance requires n, d >= 2");
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  MatrixXd X(n, d);
  for (Eigen::Index j = 0; j < X.cols(); ++j)
    for (Eigen::Index i = 0; i < X.rows(); ++i) X(i, j) = scale * normal(rng);
  VectorXd theta(d);
  for (int j = 0; j < d; ++j) theta[j] = signal.sample(rng);
  VectorXd z(n);
  for (int i = 0; i < n; ++i) z[i] = noise.sample(rng);
  return make_instance_from(std::move(X), std::move(theta), std::move(z), link);
}

}  // namespace dmftsim
