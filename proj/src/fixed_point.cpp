#include "dmftsim/fixed_point.hpp"

#include <cmath>
#include <sstream>

namespace dmftsim {

namespace {

constexpr double kEtaTol = 1e-12;

struct EtaEquation {
  double R, w_inf, w_star, z;
  const LossModel& loss;
  double F(double eta) const { return eta + R * loss.ell(eta, w_star, z) - w_inf; }
  double dF(double eta) const { return 1.0 + R * loss.d1ell(eta, w_star, z); }
};

// Safeguarded Newton on a bracket with F(lo) < 0 < F(hi).
double polish(const EtaEquation& eq, double lo, double hi, double x) {
  double flo = eq.F(lo);
  if (flo == 0.0) return lo;
  for (int it = 0; it < 200; ++it) {
    const double fx = eq.F(x);
    if (std::abs(fx) <= kEtaTol) return x;
    if ((fx < 0.0) == (flo < 0.0)) {
      lo = x;
      flo = fx;
    } else {
      hi = x;
    }
    const double d = eq.dF(x);
    double next = d != 0.0 ? x - fx / d : lo - 1.0;
    if (!(next > std::min(lo, hi) && next < std::max(lo, hi))) next = 0.5 * (lo + hi);
    if (std::abs(hi - lo) < 1e-15 * (1.0 + std::abs(x))) return next;
    x = next;
  }
  return x;
}

}  // namespace

double solve_eta_implicit(double R, double w_inf, double w_star, double z, const LossModel& loss, int* crossings,
                          bool scan_roots, const double* warm_start) {
  if (!(R >= 0.0)) throw InvalidArgument("solve_eta_implicit: R_theta must be >= 0");
  const EtaEquation eq{R, w_inf, w_star, z, loss};
  if (crossings) *crossings = 1;
  if (R == 0.0) return w_inf;

  // bracket [w_inf - R B, w_inf + R B]; without a bound, grow until the signs differ
  double half = 0.0;
  if (loss.ell_bound) {
    half = R * *loss.ell_bound * (1.0 + 1e-12) + 1e-300;
  } else {
    half = R * (std::abs(loss.ell(w_inf, w_star, z)) + 1.0);
    for (int k = 0; k < 200 && !(eq.F(w_inf - half) <= 0.0 && eq.F(w_inf + half) >= 0.0); ++k) half *= 2.0;
  }
  const double lo = w_inf - half;
  const double hi = w_inf + half;
  const double flo = eq.F(lo);
  const double fhi = eq.F(hi);
  if (flo == 0.0) return lo;
  if (fhi == 0.0) return hi;
  if (!(flo < 0.0 && fhi > 0.0)) throw NumericalError("solve_eta_implicit: bracket does not contain a root");

  if (!scan_roots) {
    const double start = warm_start && *warm_start > lo && *warm_start < hi ? *warm_start : w_inf;
    return polish(eq, lo, hi, start);
  }

  // sign scan for multiple crossings
  constexpr int kGrid = 16;
  std::vector<double> xs(kGrid + 1), fs(kGrid + 1);
  for (int k = 0; k <= kGrid; ++k) {
    xs[k] = lo + (hi - lo) * k / kGrid;
    fs[k] = k == 0 ? flo : (k == kGrid ? fhi : eq.F(xs[k]));
  }
  int count = 0;
  double best = 0.0;
  double best_dist = std::numeric_limits<double>::infinity();
  for (int k = 0; k < kGrid; ++k) {
    if (fs[k] == 0.0 || (fs[k] < 0.0) != (fs[k + 1] < 0.0)) {
      ++count;
      double root = fs[k] == 0.0 ? xs[k] : 0.0;
      if (fs[k] != 0.0) {
        // orient so that F(a) < 0 < F(b)
        const bool rising = fs[k] < 0.0;
        const double a = rising ? xs[k] : xs[k + 1];
        const double b = rising ? xs[k + 1] : xs[k];
        const double guess = w_inf > std::min(a, b) && w_inf < std::max(a, b) ? w_inf : 0.5 * (a + b);
        root = polish(eq, a, b, guess);
      }
      if (std::abs(root - w_inf) < best_dist) {
        best_dist = std::abs(root - w_inf);
        best = root;
      }
    }
  }
  if (crossings) *crossings = count;
  return best;
}

double R_theta_residual(const VectorXd& d1, double delta, double lambda_ridge, double R) {
  CompensatedSum acc;
  for (Eigen::Index i = 0; i < d1.size(); ++i) acc.add(d1[i] * R / (1.0 + d1[i] * R));
  return lambda_ridge * R + delta * acc.value() / static_cast<double>(d1.size()) - 1.0;
}

namespace {

// Bisection for g(R) = 0 on (0, R_hi]; g(0) = -1.
template <class G, class Singular>
double bisect_R(G g, Singular singular_fraction) {
  double lo = 0.0;
  double hi = 1.0;
  double ghi = 0.0;
  for (;;) {
    const double frac = singular_fraction(hi);
    if (frac > 0.0) {
      std::ostringstream msg;
      msg << "solve_R_theta: 1 + d1ell R <= 0 on a fraction " << frac << " of samples at R=" << hi
          << " before g changed sign";
      throw NumericalError(msg.str());
    }
    ghi = g(hi);
    if (ghi >= 0.0) break;
    lo = hi;
    hi *= 2.0;
    if (hi > 1e6) throw NumericalError("solve_R_theta: no sign change of g up to R=1e6");
  }
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    const double gm = g(mid);
    if (gm == 0.0) return mid;
    if (gm < 0.0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  // pick the endpoint with the smaller |g|
  const double glo = lo > 0.0 ? g(lo) : -1.0;
  ghi = g(hi);
  return std::abs(glo) < std::abs(ghi) ? lo : hi;
}

}  // namespace

double solve_R_theta(const VectorXd& d1, double delta, double lambda_ridge) {
  if (d1.size() == 0) throw InvalidArgument("solve_R_theta: empty pool");
  auto singular = [&](double R) {
    Eigen::Index bad = 0;
    for (Eigen::Index i = 0; i < d1.size(); ++i)
      if (1.0 + d1[i] * R <= 0.0) ++bad;
    return static_cast<double>(bad) / static_cast<double>(d1.size());
  };
  return bisect_R([&](double R) { return R_theta_residual(d1, delta, lambda_ridge, R); }, singular);
}

double solve_R_theta(const MatrixXd& w_pool, double delta, double lambda_ridge, const LossModel& loss, VectorXd& eta) {
  const Eigen::Index K = w_pool.rows();
  if (K == 0) throw InvalidArgument("solve_R_theta: empty pool");
  if (eta.size() != K) eta = w_pool.col(0);
  VectorXd d1(K);
  auto refresh = [&](double R) {
    for (Eigen::Index i = 0; i < K; ++i) {
      const double warm = eta[i];
      eta[i] = solve_eta_implicit(R, w_pool(i, 0), w_pool(i, 1), w_pool(i, 2), loss, nullptr, false, &warm);
      d1[i] = loss.d1ell(eta[i], w_pool(i, 1), w_pool(i, 2));
    }
  };
  auto g = [&](double R) {
    refresh(R);
    return R_theta_residual(d1, delta, lambda_ridge, R);
  };
  auto singular = [&](double R) {
    refresh(R);
    Eigen::Index bad = 0;
    for (Eigen::Index i = 0; i < K; ++i)
      if (1.0 + d1[i] * R <= 0.0) ++bad;
    return static_cast<double>(bad) / static_cast<double>(K);
  };
  const double R = bisect_R(g, singular);
  refresh(R);
  return R;
}

FixedPointState fixed_point_init_from_dmft(const DmftState& state) {
  const int t = std::min(state.theta_horizon(), state.eta_horizon());
  FixedPointState s;
  s.C_theta_inf << state.C_theta(t, t), state.C_theta_star(t), state.C_theta_star(t), 1.0;
  double R = 0.0;
  for (int r = 0; r < t; ++r) R += state.R_theta(t, r);
  s.R_theta_inf = R;
  return s;
}

FixedPointState fixed_point_init_spectral(double a) {
  FixedPointState s;
  s.C_theta_inf << 1.0, a, a, 1.0;
  return s;
}

namespace {

struct CommonNumbers {
  VectorXd g1, g2, g3, z, theta_star;
};

CommonNumbers draw_common(const ScalarDist& noise, const ScalarDist& signal, int K, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  CommonNumbers c;
  c.theta_star.resize(K);
  for (int i = 0; i < K; ++i) c.theta_star[i] = signal.sample(rng);
  const double ms = c.theta_star.squaredNorm() / K;
  if (!(ms > 0.0)) throw InvalidArgument("signal law produced an all-zero pool");
  c.theta_star /= std::sqrt(ms);
  c.g1.resize(K);
  c.g2.resize(K);
  c.g3.resize(K);
  c.z.resize(K);
  for (int i = 0; i < K; ++i) c.g1[i] = normal(rng);
  for (int i = 0; i < K; ++i) c.g2[i] = normal(rng);
  for (int i = 0; i < K; ++i) c.g3[i] = normal(rng);
  for (int i = 0; i < K; ++i) c.z[i] = noise.sample(rng);
  return c;
}

// (w_inf, w*) ~ N(0, C) with C(1,1) = 1 built from two independent normals
MatrixXd w_pool_from(const Eigen::Matrix2d& C, const CommonNumbers& c) {
  const Eigen::Index K = c.g1.size();
  const double c12 = C(0, 1);
  const double c22 = C(1, 1);
  const double coef = c22 > 0.0 ? c12 / std::sqrt(c22) : 0.0;
  const double resid = std::max(C(0, 0) - coef * coef, 0.0);
  MatrixXd pool(K, 3);
  pool.col(1) = std::sqrt(c22) * c.g1;
  pool.col(0) = coef * c.g1 + std::sqrt(resid) * c.g2;
  pool.col(2) = c.z;
  return pool;
}

}  // namespace

std::vector<double> fixed_point_residuals(const FixedPointState& s, const LossModel& loss) {
  const Eigen::Index K = s.eta_pool.rows();
  const double delta = s.delta;
  const double R = s.R_theta_inf;
  std::vector<double> res(7, 0.0);
  if (K == 0 || s.theta_pool.rows() == 0) throw InvalidArgument("fixed_point_residuals: empty pools");

  // theta equation
  {
    const double coef = s.lambda_ridge + delta * s.Gamma_inf + s.R_eta_inf;
    const VectorXd r = -coef * s.theta_pool.col(0) - s.R_eta_star * s.theta_pool.col(1) + s.theta_pool.col(2);
    res[0] = std::sqrt(compensated_dot_mean(r, r));
  }
  VectorXd ell(K), d1(K), d2(K), inv(K), ell_sq(K);
  {
    VectorXd r(K);
    for (Eigen::Index i = 0; i < K; ++i) {
      const double eta = s.eta_pool(i, 0), ws = s.eta_pool(i, 2), z = s.eta_pool(i, 3);
      ell[i] = loss.ell(eta, ws, z);
      d1[i] = loss.d1ell(eta, ws, z);
      d2[i] = loss.d2ell(eta, ws, z);
      r[i] = eta + R * ell[i] - s.eta_pool(i, 1);
      inv[i] = 1.0 / (1.0 + d1[i] * R);
    }
    res[1] = std::sqrt(compensated_dot_mean(r, r));
  }
  res[2] = std::abs(s.C_eta_inf - delta * compensated_dot_mean(ell, ell));
  {
    const VectorXd th = s.theta_pool.col(0), ts = s.theta_pool.col(1);
    Eigen::Matrix2d C;
    C(0, 0) = compensated_dot_mean(th, th);
    C(0, 1) = C(1, 0) = compensated_dot_mean(th, ts);
    C(1, 1) = compensated_dot_mean(ts, ts);
    res[3] = (s.C_theta_inf - C).cwiseAbs().maxCoeff();
  }
  res[4] = std::abs(1.0 / R - (s.lambda_ridge + delta * s.Gamma_inf + s.R_eta_inf));
  res[5] = std::abs(delta * s.Gamma_inf + s.R_eta_inf - delta * compensated_dot_mean(d1, inv));
  res[6] = std::abs(s.R_eta_star - delta * compensated_dot_mean(d2, inv));
  return res;
}

FixedPointState iterate_fixed_point(const LossModel& loss, const LinkFunction& link, const ScalarDist& noise,
                                    const ScalarDist& signal, double delta, [[maybe_unused]] double gamma,
                                    double lambda_ridge, const SolverConfig& cfg, const FixedPointState& init) {
  (void)link;
  if (cfg.K < 2) throw InvalidArgument("fixed point: K must be >= 2");
  if (!(cfg.damping > 0.0 && cfg.damping <= 1.0)) throw InvalidArgument("fixed point: damping must lie in (0, 1]");
  if (!(cfg.tol > 0.0)) throw InvalidArgument("fixed point: tol must be > 0");
  if (!(delta > 0.0)) throw InvalidArgument("fixed point: delta must be > 0");

  const CommonNumbers cn = draw_common(noise, signal, cfg.K, cfg.seed);
  const Eigen::Index K = cfg.K;
  FixedPointState s = init;
  s.delta = delta;
  s.lambda_ridge = lambda_ridge;
  s.C_theta_inf(1, 1) = 1.0;
  s.iterations = 0;
  s.converged = false;
  s.change_trace.clear();
  s.residual_trace.clear();

  VectorXd eta;
  int max_multi = 0;
  for (int outer = 0; outer < cfg.max_outer; ++outer) {
    const MatrixXd wp = w_pool_from(s.C_theta_inf, cn);
    const double R = solve_R_theta(wp, delta, lambda_ridge, loss, eta);

    // final eta solve with the multiple-root scan
    int multi = 0;
    VectorXd ell(K), d1(K), d2(K), inv(K);
    for (Eigen::Index i = 0; i < K; ++i) {
      int crossings = 1;
      eta[i] = solve_eta_implicit(R, wp(i, 0), wp(i, 1), wp(i, 2), loss, &crossings, true);
      if (crossings > 1) ++multi;
      ell[i] = loss.ell(eta[i], wp(i, 1), wp(i, 2));
      d1[i] = loss.d1ell(eta[i], wp(i, 1), wp(i, 2));
      d2[i] = loss.d2ell(eta[i], wp(i, 1), wp(i, 2));
      inv[i] = 1.0 / (1.0 + d1[i] * R);
    }
    max_multi = std::max(max_multi, multi);

    const double Gamma = compensated_mean(d1);
    const double R_eta = 1.0 / R - lambda_ridge - delta * Gamma;
    const double R_eta_star = delta * compensated_dot_mean(d2, inv);
    const double C_eta = delta * compensated_dot_mean(ell, ell);
    const VectorXd u = std::sqrt(C_eta) * cn.g3;
    const VectorXd theta = R * (u - R_eta_star * cn.theta_star);

    Eigen::Matrix2d C_new;
    C_new(0, 0) = compensated_dot_mean(theta, theta);
    C_new(0, 1) = C_new(1, 0) = compensated_dot_mean(theta, cn.theta_star);
    C_new(1, 1) = 1.0;
    const Eigen::Matrix2d C_next = (1.0 - cfg.damping) * s.C_theta_inf + cfg.damping * C_new;

    double change = (C_next - s.C_theta_inf).cwiseAbs().maxCoeff();
    if (outer > 0) {
      change = std::max({change, std::abs(R - s.R_theta_inf), std::abs(R_eta - s.R_eta_inf),
                         std::abs(R_eta_star - s.R_eta_star), std::abs(C_eta - s.C_eta_inf)});
    }

    s.R_theta_inf = R;
    s.R_eta_inf = R_eta;
    s.R_eta_star = R_eta_star;
    s.Gamma_inf = Gamma;
    s.C_eta_inf = C_eta;
    s.eta_pool.resize(K, 4);
    s.eta_pool.col(0) = eta;
    s.eta_pool.col(1) = wp.col(0);
    s.eta_pool.col(2) = wp.col(1);
    s.eta_pool.col(3) = wp.col(2);
    s.theta_pool.resize(K, 3);
    s.theta_pool.col(0) = theta;
    s.theta_pool.col(1) = cn.theta_star;
    s.theta_pool.col(2) = u;
    // residuals are evaluated on the pools of this pass, before the damped C update
    s.C_theta_inf = C_new;
    const auto res = fixed_point_residuals(s, loss);
    s.C_theta_inf = C_next;
    double rmax = 0.0;
    for (double r : res) rmax = std::max(rmax, r);
    s.residual_trace.push_back(rmax);
    s.change_trace.push_back(change);
    s.iterations = outer + 1;
    if (!std::isfinite(change)) throw NumericalError("fixed point iteration produced non-finite parameters");
    if (change < cfg.tol) {
      s.converged = true;
      break;
    }
  }
  if (max_multi > 0) {
    log_warn("fixed point: up to " + std::to_string(max_multi) + " of " + std::to_string(K) +
             " samples per pass had several roots of the eta equation; kept the root closest to w_inf");
  }
  if (s.converged && s.residual_trace.size() >= 5) {
    const auto n = s.residual_trace.size();
    bool monotone = true;
    for (size_t i = n - 4; i < n; ++i)
      if (s.residual_trace[i] > s.residual_trace[i - 1] * (1.0 + 1e-9) + 1e-14) monotone = false;
    if (!monotone) log_warn("fixed point: residual norm not monotone over the last 5 iterations");
  }
  if (!s.converged) {
    std::ostringstream msg;
    msg << "fixed point did not converge in " << cfg.max_outer << " iterations; change trace tail:";
    const size_t n = s.change_trace.size();
    for (size_t i = n > 5 ? n - 5 : 0; i < n; ++i) msg << ' ' << s.change_trace[i];
    msg << "; residual tail:";
    for (size_t i = n > 5 ? n - 5 : 0; i < n; ++i) msg << ' ' << s.residual_trace[i];
    log_warn(msg.str());
  }
  return s;
}

FixedPointState phase_retrieval_reference(const LossModel& loss, const ScalarDist& signal, double delta, int K,
                                          std::uint64_t seed) {
  const CommonNumbers cn = draw_common(point_mass(0.0), signal, K, seed);
  FixedPointState s;
  s.delta = delta;
  s.lambda_ridge = 0.0;
  VectorXd d1(K);
  for (int i = 0; i < K; ++i) d1[i] = loss.d1ell(cn.g1[i], cn.g1[i], 0.0);
  s.R_theta_inf = solve_R_theta(d1, delta, 0.0);
  s.Gamma_inf = compensated_mean(d1);
  s.R_eta_inf = 1.0 / s.R_theta_inf - delta * s.Gamma_inf;
  s.R_eta_star = -delta * s.Gamma_inf - s.R_eta_inf;
  s.C_eta_inf = 0.0;
  s.C_theta_inf << 1.0, 1.0, 1.0, 1.0;
  s.eta_pool.resize(K, 4);
  s.eta_pool.col(0) = cn.g1;
  s.eta_pool.col(1) = cn.g1;
  s.eta_pool.col(2) = cn.g1;
  s.eta_pool.col(3).setZero();
  s.theta_pool.resize(K, 3);
  s.theta_pool.col(0) = cn.theta_star;
  s.theta_pool.col(1) = cn.theta_star;
  s.theta_pool.col(2).setZero();
  s.iterations = 0;
  s.converged = true;
  return s;
}

}  // namespace dmftsim
