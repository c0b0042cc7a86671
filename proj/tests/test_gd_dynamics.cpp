#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dmftsim/gd.hpp"
#include "dmftsim/spectral.hpp"

#include <cmath>

using namespace dmftsim;

TEST_CASE("zero step size freezes the iterate") {
  const auto inst = make_instance(60, 30, 1, linear_link(), gaussian(0.1), gaussian());
  const VectorXd th0 = VectorXd::LinSpaced(30, -1, 1);
  const auto tr = run_gd(inst, pseudo_huber_loss(), GdConfig{0.0, 0.3, 5, true}, th0);
  for (int t = 0; t <= 5; ++t) CHECK(tr.theta.col(t) == th0);
}

TEST_CASE("least squares residual decreases monotonically") {
  const auto inst = make_instance(400, 100, 2, linear_link(), point_mass(0.0), gaussian());
  const auto loss = squared_loss();
  const auto tr = run_gd(inst, loss, GdConfig{0.05, 0.0, 40, true}, VectorXd::Zero(100));
  double prev = std::numeric_limits<double>::infinity();
  for (int t = 0; t <= 40; ++t) {
    const double r = (tr.eta.col(t) - inst.eta_star).norm();
    CHECK(r < prev);
    prev = r;
  }
}

TEST_CASE("trajectory satisfies the recursion and eta = X theta") {
  const auto inst = make_instance(300, 100, 4, abs_link(), point_mass(0.0), gaussian());
  const auto loss = rwf_loss(smoothstep_profile(5, 10));
  const double gamma = 0.01, lam = 0.2;
  const auto sp = spectral_estimator(inst, phase_preprocess(3.0));
  const auto tr = run_gd(inst, loss, GdConfig{gamma, lam, 8, true}, sp.theta0);
  for (int t = 0; t < 8; ++t) {
    VectorXd ell(inst.n);
    const VectorXd eta = inst.X * tr.theta.col(t);
    for (int i = 0; i < inst.n; ++i) ell[i] = loss.ell(eta[i], inst.eta_star[i], inst.z[i]);
    const VectorXd next = tr.theta.col(t) - gamma * (inst.X.transpose() * ell) - gamma * lam * tr.theta.col(t);
    CHECK((next - tr.theta.col(t + 1)).norm() <= 1e-10 * next.norm());
    CHECK((tr.eta.col(t) - eta).cwiseAbs().maxCoeff() <= 1e-12 * std::max(1.0, eta.cwiseAbs().maxCoeff()));
  }
  // rerun is bit-identical
  const auto tr2 = run_gd(inst, loss, GdConfig{gamma, lam, 8, true}, sp.theta0);
  CHECK(tr.theta == tr2.theta);
  // the gradient helper agrees with the update direction
  const VectorXd g = empirical_gradient(inst, loss, lam, tr.theta.col(3));
  CHECK(((tr.theta.col(3) - gamma * g) - tr.theta.col(4)).norm() <= 1e-10 * tr.theta.col(4).norm());
  // and is the derivative of the empirical loss
  const VectorXd dir = VectorXd::LinSpaced(100, -1, 1).normalized();
  const double h = 1e-5;
  const double fd = (empirical_loss(inst, loss, lam, tr.theta.col(3) + h * dir) -
                     empirical_loss(inst, loss, lam, tr.theta.col(3) - h * dir)) / (2 * h);
  CHECK(std::abs(fd - g.dot(dir)) <= 1e-5 * std::max(1.0, std::abs(fd)));
}

TEST_CASE("non-finite iterates abort with the iterate index") {
  const auto inst = make_instance(50, 20, 3, linear_link(), point_mass(0.0), gaussian());
  try {
    run_gd(inst, squared_loss(), GdConfig{1e200, 0.0, 10, false}, VectorXd::Ones(20));
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("t=") != std::string::npos);
  }
  CHECK_THROWS_AS(run_gd(inst, squared_loss(), GdConfig{0.1, 0.0, 3, false}, VectorXd::Ones(7)), InvalidArgument);
}

TEST_CASE("phase retrieval from the spectral start reaches theta*") {
  const auto inst = make_instance(5000, 500, 1, abs_link(), point_mass(0.0), gaussian());
  const auto loss = rwf_loss(smoothstep_profile(5, 10));
  const auto sp = spectral_estimator(inst, phase_preprocess(3.0));
  auto tr = run_gd(inst, loss, GdConfig{0.01, 0.0, 300, false}, sp.theta0);
  align_sign(tr, inst.theta_star);
  const auto sum = summarize(tr, inst, loss);
  CHECK(sum.dist.back() <= 1e-6);

  // descent contraction inside the benign region, on a 40-step window after entry
  const double radius = 0.2;
  int t0 = 0;
  while (sum.dist[t0] > radius) ++t0;
  Trajectory window = tr;
  window.theta = tr.theta.middleCols(t0, 41);
  const auto rep = hessian_report(inst, loss, 0.0, window, radius);
  CHECK(rep.first_in_region == 0);
  double c0 = std::numeric_limits<double>::infinity(), L = 0.0;
  for (int t = 0; t <= 40; ++t) {
    CHECK(rep.in_region[t]);
    c0 = std::min(c0, rep.lam_min[t]);
    L = std::max(L, rep.lam_max[t]);
  }
  REQUIRE(c0 > 0.0);
  const double r = std::max(std::abs(1 - 0.01 * c0), std::abs(1 - 0.01 * L));
  REQUIRE(r < 1.0);
  for (int t = t0 + 1; t < t0 + 40; ++t) {
    const double step_next = (tr.theta.col(t + 1) - tr.theta.col(t)).norm();
    const double step_prev = (tr.theta.col(t) - tr.theta.col(t - 1)).norm();
    CHECK(step_next <= r * step_prev * (1 + 1e-6));
  }
}

TEST_CASE("Hessian extremes") {
  const auto inst = make_instance(400, 200, 5, linear_link(), point_mass(0.0), gaussian());
  SUBCASE("unit curvature reduces to the spectrum of X^T X") {
    const auto [lo, hi] = hessian_extremes(inst, squared_loss(), 0.0, VectorXd::Zero(200));
    Eigen::JacobiSVD<MatrixXd> svd(inst.X);
    const double smax = svd.singularValues()[0], smin = svd.singularValues()[199];
    CHECK(hi == doctest::Approx(smax * smax).epsilon(1e-10));
    CHECK(lo == doctest::Approx(smin * smin).epsilon(1e-10));
  }
  SUBCASE("a large ridge dominates a bounded curvature") {
    const double op = Eigen::JacobiSVD<MatrixXd>(inst.X).singularValues()[0];
    REQUIRE(op <= 3.0);
    const auto [lo, hi] = hessian_extremes(inst, pseudo_huber_loss(), 10.0, VectorXd::LinSpaced(200, -2, 2));
    CHECK(lo >= 1.0);
    CHECK(hi <= 10.0 + op * op * 1.0 + 1e-9);
  }
  SUBCASE("phase retrieval at theta* is well conditioned") {
    const auto pr = make_instance(5000, 500, 5, abs_link(), point_mass(0.0), gaussian());
    const auto [lo, hi] = hessian_extremes(pr, rwf_loss(smoothstep_profile(5, 10)), 0.0, pr.theta_star);
    CHECK(lo > 1.0 / 50);
    CHECK(hi > lo);
  }
}

TEST_CASE("empirical joint samples") {
  const auto inst = make_instance(300, 150, 8, linear_link(), gaussian(0.1), gaussian());
  SUBCASE("m = 0 started at theta*") {
    const auto tr = run_gd(inst, pseudo_huber_loss(), GdConfig{0.1, 0.0, 0, true}, inst.theta_star);
    const auto js = empirical_joint(tr, inst);
    CHECK(js.theta_block.rows() == 150);
    CHECK(js.eta_block.rows() == 300);
    CHECK(js.theta_block.cols() == 2);
    CHECK(js.eta_block.cols() == 3);
    CHECK(js.theta_block.col(0) == js.theta_block.col(1));
    CHECK(js.eta_block.col(2) == inst.z);
  }
  SUBCASE("centered columns") {
    const auto sp = spectral_estimator(inst, phase_preprocess(2.0));
    const auto tr = run_gd(inst, pseudo_huber_loss(), GdConfig{0.2, 0.5, 4, true}, sp.theta0);
    const auto js = empirical_joint(tr, inst);
    for (int c = 0; c < js.theta_block.cols(); ++c) CHECK(std::abs(js.theta_block.col(c).mean()) <= 3.0 / std::sqrt(150.0));
  }
}

TEST_CASE("sign alignment flips the whole trajectory") {
  const auto inst = make_instance(100, 40, 9, abs_link(), point_mass(0.0), gaussian());
  auto tr = run_gd(inst, rwf_loss(smoothstep_profile(5, 10)), GdConfig{0.01, 0.0, 3, true}, -inst.theta_star);
  const MatrixXd before = tr.theta;
  align_sign(tr, inst.theta_star);
  CHECK(tr.theta == -before);
  CHECK(tr.theta.col(0).dot(inst.theta_star) > 0.0);
}
