#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dmftsim/fixed_point.hpp"
#include "dmftsim/gd.hpp"

#include <cmath>
#include <random>

using namespace dmftsim;

namespace {

LossModel identity_ell() {
  LossModel l;
  l.name = "identity";
  l.L = [](double a, double, double) { return 0.5 * a * a; };
  l.ell = [](double a, double, double) { return a; };
  l.d1ell = [](double, double, double) { return 1.0; };
  l.d2ell = [](double, double, double) { return 0.0; };
  l.d1_bound = 1.0;
  return l;
}

// Stieltjes transform of X^T X at -lambda for X (n x d) with N(0, 1/d)
// entries, n/d = delta, from the Marchenko-Pastur quadratic.
double mp_stieltjes(double lambda, double delta) {
  const double y = 1.0 / delta, x = lambda / delta;
  const double b = 1.0 - y + x;
  const double mw = (-b + std::sqrt(b * b + 4 * y * x)) / (2 * y * x);
  return mw / delta;
}

// Closed-form ridge fixed point for squared loss, no noise: ell = eta - w*.
struct RidgeFixedPoint {
  double R, R_eta, R_eta_star, C11, C12, C_eta;
};

RidgeFixedPoint ridge_oracle(double delta, double lambda) {
  RidgeFixedPoint f;
  f.R = mp_stieltjes(lambda, delta);
  const double q = 1.0 / (1.0 + f.R);
  f.R_eta = delta * q - delta;
  f.R_eta_star = -delta * q;
  f.C12 = -f.R * f.R_eta_star;
  // C11 = R^2 (C_eta + R_eta*^2), C_eta = delta q^2 (C11 - 2 C12 + 1)
  const double R2 = f.R * f.R, a = delta * q * q;
  f.C11 = R2 * (a * (1.0 - 2.0 * f.C12) + f.R_eta_star * f.R_eta_star) / (1.0 - R2 * a);
  f.C_eta = a * (f.C11 - 2.0 * f.C12 + 1.0);
  return f;
}

}  // namespace

TEST_CASE("implicit eta equation") {
  CHECK(solve_eta_implicit(0.7, 1.3, 0.2, 0.0, zero_loss()) == 1.3);
  CHECK(solve_eta_implicit(0.5, 3.0, 0.0, 0.0, identity_ell()) == doctest::Approx(2.0).epsilon(1e-14));
  const auto rwf = rwf_loss(smoothstep_profile(5, 10));
  for (double w : {-1.7, 0.0, 0.4, 2.2}) CHECK(std::abs(solve_eta_implicit(0.3, w, w, 0.0, rwf) - w) <= 1e-12);
  // residual of a generic solve
  const auto ph = pseudo_huber_loss();
  for (double w : {-3.0, -0.5, 0.8, 4.0}) {
    const double R = 0.6, ws = 0.3, z = 0.1;
    const double eta = solve_eta_implicit(R, w, ws, z, ph);
    CHECK(std::abs(eta + R * ph.ell(eta, ws, z) - w) <= 1e-12);
    CHECK(std::abs(eta - w) <= R * *ph.ell_bound + 1e-12);
  }
}

TEST_CASE("scalar reduction for R_theta") {
  const VectorXd ones = VectorXd::Ones(1000);
  const double r = solve_R_theta(ones, 2.0, 1.0);
  CHECK(std::abs(r - (std::sqrt(2.0) - 1.0)) <= 1e-10);
  CHECK(std::abs(R_theta_residual(ones, 2.0, 1.0, r)) <= 1e-10);
  const double big = solve_R_theta(ones, 2.0, 100.0);
  CHECK(big > 1.0 / 102.1);
  CHECK(big < 1.0 / 101.9);
  // no root: the denominator 1 + d1 R crosses zero first
  CHECK_THROWS_AS(solve_R_theta(VectorXd::Constant(100, -1.0), 2.0, 0.0), NumericalError);
}

TEST_CASE("phase retrieval reference and the scalar characterization") {
  const auto loss = rwf_loss(smoothstep_profile(5, 10));
  const int K = 20000;
  const auto ref = phase_retrieval_reference(loss, gaussian(), 10.0, K, 3);
  VectorXd d1(K);
  for (int i = 0; i < K; ++i) d1[i] = loss.d1ell(ref.eta_pool(i, 2), ref.eta_pool(i, 2), 0.0);
  const double R = ref.R_theta_inf;
  const double rhs = (d1.array() * R / (1.0 + d1.array() * R)).mean();
  CHECK(std::abs(1.0 / 10.0 - rhs) <= 1e-10);
  const auto res = fixed_point_residuals(ref, loss);
  REQUIRE(res.size() == 7);
  for (double x : res) CHECK(std::abs(x) <= 5.0 / std::sqrt(double(K)));
  auto bumped = ref;
  bumped.R_theta_inf += 0.1;
  CHECK(std::abs(fixed_point_residuals(bumped, loss)[4]) >= 0.01);
}

TEST_CASE("damped iteration converges to the phase retrieval fixed point") {
  const auto loss = rwf_loss(smoothstep_profile(5, 10));
  const int K = 20000;
  SolverConfig cfg;
  cfg.K = K;
  cfg.seed = 5;
  const auto fp = iterate_fixed_point(loss, abs_link(), point_mass(0.0), gaussian(), 10.0, 0.01, 0.0, cfg,
                                      fixed_point_init_spectral(0.9));
  CHECK(fp.converged);
  const double tol = 2.0 / std::sqrt(double(K));
  CHECK(std::abs(fp.C_theta_inf(0, 0) - 1.0) <= tol);
  CHECK(std::abs(fp.C_theta_inf(0, 1) - 1.0) <= tol);
  CHECK(fp.C_theta_inf(1, 1) == 1.0);
  CHECK(fp.C_eta_inf <= tol);
  CHECK(fp.theta_pool.col(2).squaredNorm() / K <= 1e-8);
  // R_eta* against the closed form in terms of R_eta_inf
  VectorXd d1(K);
  for (int i = 0; i < K; ++i) d1[i] = loss.d1ell(fp.eta_pool(i, 2), fp.eta_pool(i, 2), 0.0);
  CHECK(std::abs(fp.R_eta_star - (-10.0 * d1.mean() - fp.R_eta_inf)) <= 5.0 / std::sqrt(double(K)));
  const auto ref = phase_retrieval_reference(loss, gaussian(), 10.0, K, 5);
  CHECK(std::abs(fp.R_theta_inf - ref.R_theta_inf) <= 1e-6);
  // residual trace decreases at the end, down to the rounding floor
  const auto& tr = fp.residual_trace;
  REQUIRE(tr.size() >= 5);
  for (size_t i = tr.size() - 4; i < tr.size(); ++i) CHECK((tr[i] <= tr[i - 1] || tr[i] <= 1e-10));
}

TEST_CASE("ridge regression fixed point against Marchenko-Pastur and simulation") {
  const double delta = 2.0, lambda = 0.5;
  const int K = 20000;
  SolverConfig cfg;
  cfg.K = K;
  const auto fp = iterate_fixed_point(squared_loss(), linear_link(), point_mass(0.0), gaussian(), delta, 0.1, lambda,
                                      cfg, fixed_point_init_spectral(0.5));
  CHECK(fp.converged);
  const double R = mp_stieltjes(lambda, delta);
  CHECK(std::abs(fp.R_theta_inf - R) <= 1e-8);
  // overlap 1 - lambda m(-lambda)
  CHECK(std::abs(fp.C_theta_inf(0, 1) - (1.0 - lambda * R)) <= 2.0 / std::sqrt(double(K)));
  const auto rf = ridge_oracle(delta, lambda);
  CHECK(std::abs(fp.C_theta_inf(0, 1) - rf.C12) <= 2.0 / std::sqrt(double(K)));
  CHECK(std::abs(fp.C_theta_inf(0, 0) - rf.C11) <= 3.0 / std::sqrt(double(K)));
  CHECK(std::abs(fp.C_eta_inf - rf.C_eta) <= 3.0 / std::sqrt(double(K)));
  CHECK(std::abs(fp.R_eta_inf - rf.R_eta) <= 1e-8);
  CHECK(std::abs(fp.R_eta_star - rf.R_eta_star) <= 1e-8);

  const int d = 2000, n = 4000;
  const auto inst = make_instance(n, d, 17, linear_link(), point_mass(0.0), gaussian());
  const MatrixXd A = inst.X.transpose() * inst.X + lambda * MatrixXd::Identity(d, d);
  const VectorXd theta = A.ldlt().solve(inst.X.transpose() * inst.y);
  CHECK(std::abs(theta.dot(inst.theta_star) / d - fp.C_theta_inf(0, 1)) <= 0.02);
  CHECK(std::abs(theta.squaredNorm() / d - fp.C_theta_inf(0, 0)) <= 0.02);
}

TEST_CASE("loop control") {
  SolverConfig cfg;
  cfg.K = 5000;
  cfg.damping = 1.0;
  cfg.tol = 1e6;
  const auto fp = iterate_fixed_point(pseudo_huber_loss(), linear_link(), gaussian(0.1), gaussian(), 2.0, 0.2, 1.0, cfg,
                                      fixed_point_init_spectral(0.5));
  CHECK(fp.iterations == 1);
  CHECK(std::isfinite(fp.R_theta_inf));
  CHECK(std::isfinite(fp.C_theta_inf(0, 0)));
  CHECK(std::isfinite(fp.R_eta_star));
}

TEST_CASE("residual noise floor halves when K grows fourfold") {
  // analytic ridge fixed point evaluated on fresh iid pools: only the two
  // empirical second-moment residuals carry Monte Carlo error
  const double delta = 2.0, lambda = 0.5;
  const auto rf = ridge_oracle(delta, lambda);
  auto floor_at = [&](int K, std::uint64_t seed) {
    Rng rng(seed);
    std::normal_distribution<double> N01;
    FixedPointState s;
    s.delta = delta;
    s.lambda_ridge = lambda;
    s.R_theta_inf = rf.R;
    s.R_eta_inf = rf.R_eta;
    s.R_eta_star = rf.R_eta_star;
    s.Gamma_inf = 1.0;
    s.C_eta_inf = rf.C_eta;
    s.C_theta_inf << rf.C11, rf.C12, rf.C12, 1.0;
    const Eigen::LLT<Eigen::Matrix2d> ch(s.C_theta_inf);
    const Eigen::Matrix2d Lc = ch.matrixL();
    s.eta_pool.resize(K, 4);
    s.theta_pool.resize(K, 3);
    for (int i = 0; i < K; ++i) {
      const Eigen::Vector2d w = Lc * Eigen::Vector2d(N01(rng), N01(rng));
      s.eta_pool.row(i) << (w[0] + rf.R * w[1]) / (1.0 + rf.R), w[0], w[1], 0.0;
      const double ts = N01(rng), u = std::sqrt(rf.C_eta) * N01(rng);
      s.theta_pool.row(i) << rf.R * (u - rf.R_eta_star * ts), ts, u;
    }
    const auto res = fixed_point_residuals(s, squared_loss());
    for (int k : {0, 1, 4, 5, 6}) CHECK(std::abs(res[k]) <= 1e-12);
    return res[2] + res[3];
  };
  double e_small = 0.0, e_big = 0.0;
  for (std::uint64_t s = 0; s < 24; ++s) {
    e_small += floor_at(5000, 100 + s);
    e_big += floor_at(20000, 200 + s);
  }
  CAPTURE(e_small);
  CAPTURE(e_big);
  const double ratio = e_small / e_big;
  CHECK(ratio >= 1.4);
  CHECK(ratio <= 2.8);
}
