#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dmftsim/spectral.hpp"

#include <cmath>

using namespace dmftsim;

namespace {

// Independent evaluation of the spectral functionals for noiseless phase
// retrieval with Ts(y) = min(y, M)^2: Z = G^2 on |G| < M, M^2 otherwise.
// Composite Simpson on [-M, M] plus the exact Gaussian tail mass.
struct ClipOracle {
  double M, delta;
  std::vector<double> g, w;
  double tail_p = 0.0, tail_g2 = 0.0;  // P(|G| > M), E[G^2; |G| > M]

  ClipOracle(double M_, double delta_, int half_panels = 6000) : M(M_), delta(delta_) {
    const int N = 2 * half_panels;
    const double h = 2 * M / N;
    for (int k = 0; k <= N; ++k) {
      const double x = -M + k * h;
      const double s = (k == 0 || k == N) ? 1.0 : (k % 2 ? 4.0 : 2.0);
      g.push_back(x);
      w.push_back(s * h / 3.0 * std::exp(-0.5 * x * x) / std::sqrt(2 * M_PI));
    }
    tail_p = std::erfc(M / std::sqrt(2.0));
    // E[G^2; |G| > M] = P(|G|>M) + 2 M pdf(M)
    tail_g2 = tail_p + 2 * M * std::exp(-0.5 * M * M) / std::sqrt(2 * M_PI);
  }
  double tau() const { return M * M; }
  double e_ratio(double l) const {
    double s = 0;
    for (size_t k = 0; k < g.size(); ++k) s += w[k] * g[k] * g[k] / (l - g[k] * g[k]);
    return s + tail_p * tau() / (l - tau());
  }
  double e_ratio_g2(double l) const {
    double s = 0;
    for (size_t k = 0; k < g.size(); ++k) s += w[k] * std::pow(g[k], 4) / (l - g[k] * g[k]);
    return s + tail_g2 * tau() / (l - tau());
  }
  double psi(double l) const { return l * (1 / delta + e_ratio(l)); }
  double phi(double l) const { return l * e_ratio_g2(l); }
};

// lambda_bar by a dense grid then golden refinement; lambda* by a grid scan
// of zeta - phi at step 1e-4 around the first coarse crossing, then bisection.
std::pair<double, double> grid_lambda_star(const ClipOracle& o) {
  const double tau = o.tau();
  double best = tau + 1e-4, best_v = o.psi(best);
  for (double l = tau + 1e-4; l <= tau + 50; l += 1e-2) {
    const double v = o.psi(l);
    if (v < best_v) best_v = v, best = l;
  }
  double a = std::max(tau + 1e-6, best - 1e-2), b = best + 1e-2;
  for (int it = 0; it < 200; ++it) {
    const double c = a + (b - a) * 0.382, d = a + (b - a) * 0.618;
    if (o.psi(c) < o.psi(d)) b = d; else a = c;
  }
  const double lam_bar = 0.5 * (a + b);
  auto f = [&](double l) { return o.psi(std::max(l, lam_bar)) - o.phi(l); };
  double coarse = tau + 1e-4;
  while (f(coarse + 1e-2) < 0 && coarse < tau + 50) coarse += 1e-2;
  double lo = coarse;
  while (f(lo + 1e-4) < 0) lo += 1e-4;
  double hi = lo + 1e-4;
  for (int it = 0; it < 100; ++it) {
    const double mid = 0.5 * (lo + hi);
    (f(mid) < 0 ? lo : hi) = mid;
  }
  return {lam_bar, 0.5 * (lo + hi)};
}

PreProcess zero_preprocess() {
  PreProcess p;
  p.name = "zero";
  p.Ts = [](double) { return 0.0; };
  p.Ts1 = [](double) { return 0.0; };
  return p;
}

}  // namespace

TEST_CASE("build_Mn") {
  SUBCASE("zero pre-processing gives the zero matrix") {
    const auto inst = make_instance(20, 5, 3, abs_link(), point_mass(0.0), gaussian());
    CHECK(build_Mn(inst, zero_preprocess()).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("single active row is rank one with trace Ts(y1)|x1|^2") {
    MatrixXd X(2, 4);
    X << 0.3, -0.2, 0.5, 0.1, 0, 0, 0, 0;
    const auto inst = make_instance_from(X, VectorXd::Ones(4), VectorXd::Zero(2), abs_link());
    const auto pre = phase_preprocess(3.0);
    const MatrixXd M = build_Mn(inst, pre);
    const double ts = pre.Ts(inst.y[0]);
    CHECK(M.trace() == doctest::Approx(ts * X.row(0).squaredNorm()).epsilon(1e-14));
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(M);
    CHECK(std::abs(es.eigenvalues()[2]) <= 1e-14);
    CHECK(std::abs(es.eigenvalues()[0]) <= 1e-14);
  }
  SUBCASE("matches the naive triple loop") {
    const auto inst = make_instance(6, 3, 11, abs_link(), gaussian(0.1), gaussian());
    const auto pre = phase_preprocess(1.0);
    const MatrixXd M = build_Mn(inst, pre);
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) {
        double s = 0;
        for (int i = 0; i < 6; ++i) s += pre.Ts(inst.y[i]) * inst.X(i, j) * inst.X(i, k);
        CHECK(std::abs(M(j, k) - s) <= 1e-12);
      }
  }
}

TEST_CASE("spectral estimator on a planted matrix") {
  const int d = 6;
  MatrixXd M = MatrixXd::Identity(d, d);
  M(0, 0) = 5.0;
  VectorXd ts = VectorXd::Ones(d);
  const auto r = spectral_from_matrix(M, ts);
  CHECK(std::abs(r.theta0[0] - std::sqrt(double(d))) <= 1e-12);
  CHECK(r.theta0.tail(d - 1).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(r.lam1_emp == doctest::Approx(5.0));
  CHECK(r.lam2_emp == doctest::Approx(1.0));
  // sign follows theta*
  const auto r2 = spectral_from_matrix(M, -ts);
  CHECK(r2.theta0[0] < 0.0);
  CHECK_THROWS_AS(spectral_from_matrix(MatrixXd::Identity(d, d), ts), NumericalError);
}

TEST_CASE("spectral estimator invariants on a random instance") {
  const auto inst = make_instance(2000, 500, 3, abs_link(), point_mass(0.0), gaussian());
  const auto r = spectral_estimator(inst, phase_preprocess(3.0));
  CHECK(std::abs(r.theta0.squaredNorm() - 500.0) <= 1e-9);
  CHECK(r.theta0.dot(inst.theta_star) >= 0.0);
  CHECK(r.residual <= 1e-8 * r.lam1_emp);
  CHECK(r.lam1_emp > r.lam2_emp);
}

TEST_CASE("lambda* against an independent dense-grid oracle") {
  const double M = 3.0;
  for (double delta : {4.0, 10.0}) {
    CAPTURE(delta);
    const auto sol = solve_lambda_star(phase_preprocess(M), abs_link(), point_mass(0.0), delta);
    const ClipOracle o(M, delta);
    const auto [lam_bar, lam_star] = grid_lambda_star(o);
    CHECK(std::abs(sol.lambda_star - lam_star) <= 1e-6);
    CHECK(std::abs(sol.lambda_bar - lam_bar) <= 1e-5);
    CHECK(sol.lambda_star >= sol.lambda_bar);
    CHECK(sol.lambda_bar > sol.tau);
    CHECK(sol.lam1_lim >= sol.lam2_lim);
    CHECK(sol.admissible);
    // overlap formula recomputed from the returned derivatives
    REQUIRE(sol.psi_prime > 0.0);
    CHECK(sol.overlap_a == doctest::Approx(std::sqrt(sol.psi_prime / (sol.psi_prime - sol.phi_prime))).epsilon(1e-14));
    // derivative values against finite differences of the oracle
    const double h = 1e-5, l = sol.lambda_star;
    CHECK(std::abs(sol.psi_prime - (o.psi(l + h) - o.psi(l - h)) / (2 * h)) <= 1e-6);
    CHECK(std::abs(sol.phi_prime - (o.phi(l + h) - o.phi(l - h)) / (2 * h)) <= 1e-6);
    CHECK(std::abs(sol.lam1_lim - delta * o.psi(l)) <= 1e-6 * sol.lam1_lim);
  }
}

TEST_CASE("spectral functional properties") {
  const SpectralMoments mom(phase_preprocess(3.0), abs_link(), point_mass(0.0), 10.0, QuadratureSpec{});
  const auto sol = solve_lambda_star(mom);
  CHECK(mom.psi(sol.lambda_bar) <= mom.psi(sol.lambda_bar + 0.01));
  CHECK(mom.psi(sol.lambda_bar) <= mom.psi(std::max(sol.lambda_bar - 0.01, mom.tau() * (1 + 1e-6))));
  const double zeta = mom.psi(std::max(sol.lambda_star, sol.lambda_bar));
  CHECK(std::abs(zeta - mom.phi(sol.lambda_star)) <= 1e-8 * std::abs(mom.phi(sol.lambda_star)));
  CHECK_THROWS(mom.psi(mom.tau()));
}

TEST_CASE("overlap grows with the aspect ratio") {
  const auto lo = solve_lambda_star(phase_preprocess(3.0), abs_link(), point_mass(0.0), 10.0);
  const auto hi = solve_lambda_star(phase_preprocess(3.0), abs_link(), point_mass(0.0), 1000.0);
  CHECK(hi.overlap_a >= lo.overlap_a);
  CHECK(hi.overlap_a <= 1.0);
}

TEST_CASE("weak-recovery failure is reported") {
  CHECK_THROWS_AS(solve_lambda_star(phase_preprocess(3.0), abs_link(), point_mass(0.0), 0.2), NumericalError);
}

TEST_CASE("two-stage dynamic") {
  SUBCASE("theta* an exact eigenvector keeps the gap at zero") {
    const int n = 40, d = 8;
    MatrixXd X = MatrixXd::Zero(n, d);
    for (int i = 0; i < n; ++i) X(i, i % d) = 0.3 + 0.01 * i;
    VectorXd ts = VectorXd::Zero(d);
    ts[0] = 1.0;
    const auto inst = make_instance_from(X, ts, VectorXd::Zero(n), abs_link());
    const auto res = two_stage_dynamic(inst, phase_preprocess(3.0), rwf_loss(smoothstep_profile(5, 10)), 0.01, 0.0, 6, 2);
    for (double g : res.gaps) CHECK(g <= 1e-14);
  }
  SUBCASE("normalization converges to lam1 and gaps shrink") {
    const auto inst = make_instance(4000, 1000, 2, abs_link(), point_mass(0.0), gaussian());
    const auto res = two_stage_dynamic(inst, phase_preprocess(3.0), rwf_loss(smoothstep_profile(5, 10)), 0.01, 0.0, 20, 1);
    for (int T = 15; T <= 20; ++T)
      CHECK(std::abs(res.betas[T - 1] - res.spectral.lam1_emp) / res.spectral.lam1_emp <= 0.05);
    CHECK(res.gaps[20] < res.gaps[5]);
    CHECK_THROWS_AS(two_stage_dynamic(inst, phase_preprocess(3.0), rwf_loss(smoothstep_profile(5, 10)), 0.01, 0.0, 0, 1),
                    InvalidArgument);
  }
}
