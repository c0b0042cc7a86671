#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dmftsim/model.hpp"

#include <cmath>

using namespace dmftsim;

namespace {

// central differences with step 1e-5, compared relative to max(1, |analytic|)
double rel_err(double analytic, double fd) { return std::abs(analytic - fd) / std::max(1.0, std::abs(analytic)); }

double fd_a(const std::function<double(double, double, double)>& f, double a, double b, double c, double h = 1e-5) {
  return (f(a + h, b, c) - f(a - h, b, c)) / (2 * h);
}
double fd_b(const std::function<double(double, double, double)>& f, double a, double b, double c, double h = 1e-5) {
  return (f(a, b + h, c) - f(a, b - h, c)) / (2 * h);
}

void check_derivatives(const LossModel& loss, Rng& rng, double range) {
  std::uniform_real_distribution<double> U(-range, range);
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    const double a = U(rng), b = U(rng), c = 0.2 * U(rng);
    worst = std::max(worst, rel_err(loss.ell(a, b, c), fd_a(loss.L, a, b, c)));
    worst = std::max(worst, rel_err(loss.d1ell(a, b, c), fd_a(loss.ell, a, b, c)));
    worst = std::max(worst, rel_err(loss.d2ell(a, b, c), fd_b(loss.ell, a, b, c)));
  }
  CHECK(worst <= 1e-5);
}

}  // namespace

TEST_CASE("rwf loss values at simple points") {
  const auto loss = rwf_loss(smoothstep_profile(5.0, 10.0));
  CHECK(loss.ell(1.0, 0.0, 0.0) == doctest::Approx(2.0).epsilon(1e-15));
  for (double b : {-2.0, 0.3, 1.7})
    for (double c : {0.0, 0.4}) CHECK(loss.ell(0.0, b, c) == 0.0);
  const double fd = fd_a(loss.ell, 0.7, 0.5, 0.0, 1e-6);
  CHECK(rel_err(loss.d1ell(0.7, 0.5, 0.0), fd) <= 1e-6);
}

TEST_CASE("loss derivatives agree with finite differences on random points") {
  Rng rng(2024);
  SUBCASE("rwf, points spanning the truncation band") { check_derivatives(rwf_loss(smoothstep_profile(5.0, 10.0)), rng, 3.5); }
  SUBCASE("pseudo-Huber") { check_derivatives(pseudo_huber_loss(1.0), rng, 4.0); }
  SUBCASE("pseudo-Huber, scale 0.5") { check_derivatives(pseudo_huber_loss(0.5), rng, 4.0); }
}

TEST_CASE("ell is Lipschitz in its first argument with the declared d1 bound") {
  Rng rng(7);
  std::uniform_real_distribution<double> U(-4.0, 4.0);
  for (const auto& loss : {rwf_loss(smoothstep_profile(5.0, 10.0)), pseudo_huber_loss(1.0)}) {
    CAPTURE(loss.name);
    for (int k = 0; k < 500; ++k) {
      const double a = U(rng), a2 = U(rng), b = U(rng), c = 0.1 * U(rng);
      CHECK(std::abs(loss.ell(a, b, c) - loss.ell(a2, b, c)) <= loss.d1_bound * std::abs(a - a2) * (1 + 1e-12) + 1e-14);
      CHECK(std::abs(loss.d1ell(a, b, c)) <= loss.d1_bound * (1 + 1e-12));
      CHECK(std::abs(loss.d2ell(a, b, c)) <= loss.d2_bound * (1 + 1e-12));
      if (loss.ell_bound) CHECK(std::abs(loss.ell(a, b, c)) <= *loss.ell_bound * (1 + 1e-12));
    }
  }
}

TEST_CASE("smoothstep truncation profile") {
  const auto h = smoothstep_profile(2.0, 6.0);
  CHECK(h.h(2.0) == 1.0);
  CHECK(h.h(6.0) == 0.0);
  CHECK(h.h(0.5) == 1.0);
  CHECK(h.h(9.0) == 0.0);
  CHECK(h.h(4.0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(h.h1(2.0) == 0.0);
  CHECK(h.h1(6.0) == 0.0);
  const double step = 1e-5;
  CHECK(std::abs(h.h1(4.0) - (h.h(4.0 + step) - h.h(4.0 - step)) / (2 * step)) <= 1e-8);
  CHECK(std::abs(h.h2(3.1) - (h.h1(3.1 + step) - h.h1(3.1 - step)) / (2 * step)) <= 1e-6);
  double prev = 1.0;
  for (double u = 2.0; u <= 6.0; u += 0.01) {
    CHECK(h.h(u) <= prev + 1e-15);
    CHECK(h.h1(u) <= 0.0);
    CHECK(h.h(u) >= 0.0);
    CHECK(std::abs(h.h1(u)) <= h.h1_sup() * (1 + 1e-12));
    CHECK(std::abs(h.h2(u)) <= h.h2_sup() * (1 + 1e-12));
    prev = h.h(u);
  }
  CHECK_THROWS_AS(smoothstep_profile(3.0, 3.0), InvalidArgument);
  CHECK_THROWS_AS(smoothstep_profile(4.0, 2.0), InvalidArgument);
}

TEST_CASE("phase-clip pre-processing") {
  const double M = 3.0;
  const auto pre = phase_preprocess(M);
  CHECK(pre.Ts(0.0) == 0.0);
  CHECK(pre.Ts(M) == M * M);
  CHECK(pre.Ts(2 * M) == M * M);
  CHECK(pre.Ts1(2 * M) == 0.0);
  CHECK(pre.Ts1(M / 2) == M);
  CHECK(pre.Ts1(M) == 0.0);
  CHECK(pre.tau == M * M);
  for (double y = -10; y <= 10; y += 0.05) {
    CHECK(pre.Ts(y) >= 0.0);
    CHECK(pre.Ts(y) <= pre.tau);
  }
  CHECK_THROWS_AS(phase_preprocess(0.0), InvalidArgument);
}

TEST_CASE("make_instance") {
  SUBCASE("identity link without noise gives y = X theta*") {
    const auto inst = make_instance(4, 2, 5, linear_link(), point_mass(0.0), gaussian());
    const VectorXd expect = inst.X * inst.theta_star;
    for (int i = 0; i < 4; ++i) CHECK(inst.y[i] == expect[i]);
    CHECK(inst.delta == 2.0);
  }
  SUBCASE("deterministic in the seed") {
    const auto a = make_instance(50, 20, 9, abs_link(), gaussian(0.3), gaussian());
    const auto b = make_instance(50, 20, 9, abs_link(), gaussian(0.3), gaussian());
    CHECK(a.X == b.X);
    CHECK(a.theta_star == b.theta_star);
    CHECK(a.z == b.z);
    CHECK(a.y == b.y);
    const auto c = make_instance(50, 20, 10, abs_link(), gaussian(0.3), gaussian());
    CHECK(a.X != c.X);
  }
  SUBCASE("signal rescaled to norm sqrt(d), design variance 1/d") {
    const int n = 4000, d = 2000;
    const auto inst = make_instance(n, d, 1, linear_link(), point_mass(0.0), gaussian());
    CHECK(std::abs(inst.theta_star.squaredNorm() / d - 1.0) <= 1e-12);
    const double N = static_cast<double>(n) * d;
    const double var = inst.X.squaredNorm() / N;
    // entries have variance 1/d and fourth moment 3/d^2: standard error sqrt(2/N)/d
    CHECK(std::abs(var - 1.0 / d) <= 3.0 * std::sqrt(2.0 / N) / d);
    for (int i = 0; i < n; i += 97) CHECK(inst.y[i] == doctest::Approx(inst.eta_star[i]).epsilon(1e-13));
  }
  SUBCASE("rejects small dimensions and zero signals") {
    CHECK_THROWS_AS(make_instance(1, 5, 1, linear_link(), point_mass(0.0), gaussian()), InvalidArgument);
    CHECK_THROWS_AS(make_instance(5, 1, 1, linear_link(), point_mass(0.0), gaussian()), InvalidArgument);
    CHECK_THROWS_AS(make_instance(5, 3, 1, linear_link(), point_mass(0.0), point_mass(0.0)), InvalidArgument);
  }
  SUBCASE("phase link rowwise") {
    const auto inst = make_instance(30, 10, 4, abs_link(), gaussian(0.2), rademacher());
    for (int i = 0; i < 30; ++i) CHECK(inst.y[i] == std::abs(inst.eta_star[i]) + inst.z[i]);
  }
}

TEST_CASE("link weak derivatives") {
  const auto ph = abs_link();
  CHECK(ph.du(0.0, 0.3) == 0.0);
  CHECK(ph.du(-1.2, 0.0) == -1.0);
  CHECK(ph.du(2.0, 0.0) == 1.0);
  const auto lin = linear_link();
  CHECK(lin.du(0.7, -1.0) == 1.0);
  CHECK(lin.eval(0.7, -1.0) == doctest::Approx(-0.3));
}
