#include "dmftsim/spectral.hpp"

#include "dmftsim/linalg.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <sstream>

namespace dmftsim {

QuadratureRule gauss_hermite(int order) {
  if (order < 2) throw InvalidArgument("Gauss-Hermite order must be >= 2");
  // Golub-Welsch on the Jacobi matrix of the probabilists' Hermite polynomials
  VectorXd diag = VectorXd::Zero(order);
  VectorXd sub(order - 1);
  for (int k = 1; k < order; ++k) sub[k - 1] = std::sqrt(static_cast<double>(k));
  Eigen::SelfAdjointEigenSolver<MatrixXd> es;
  es.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
  QuadratureRule gh;
  gh.nodes = es.eigenvalues();
  gh.weights = es.eigenvectors().row(0).transpose().array().square();
  // symmetrize: the rule is exact for odd polynomials only if nodes pair up
  for (int i = 0; i < order / 2; ++i) {
    const int j = order - 1 - i;
    const double x = 0.5 * (gh.nodes[j] - gh.nodes[i]);
    const double w = 0.5 * (gh.weights[i] + gh.weights[j]);
    gh.nodes[i] = -x;
    gh.nodes[j] = x;
    gh.weights[i] = gh.weights[j] = w;
  }
  if (order % 2 == 1) gh.nodes[order / 2] = 0.0;
  gh.weights /= gh.weights.sum();
  return gh;
}

QuadratureRule composite_normal_rule(int panels, int order, double range) {
  if (panels < 1 || order < 1 || !(range > 0.0)) throw InvalidArgument("composite rule: invalid parameters");
  // Gauss-Legendre nodes on [-1, 1]
  VectorXd diag = VectorXd::Zero(order);
  VectorXd sub(std::max(order - 1, 0));
  for (int k = 1; k < order; ++k) sub[k - 1] = k / std::sqrt(4.0 * k * k - 1.0);
  Eigen::SelfAdjointEigenSolver<MatrixXd> es;
  es.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
  const VectorXd x = es.eigenvalues();
  const VectorXd w = 2.0 * es.eigenvectors().row(0).transpose().array().square();
  QuadratureRule rule;
  rule.nodes.resize(static_cast<Eigen::Index>(panels) * order);
  rule.weights.resize(rule.nodes.size());
  const double h = 2.0 * range / panels;
  const double c = 1.0 / std::sqrt(2.0 * M_PI);
  for (int p = 0; p < panels; ++p) {
    const double mid = -range + (p + 0.5) * h;
    for (int k = 0; k < order; ++k) {
      const double g = mid + 0.5 * h * x[k];
      rule.nodes[p * order + k] = g;
      rule.weights[p * order + k] = 0.5 * h * w[k] * c * std::exp(-0.5 * g * g);
    }
  }
  rule.weights /= rule.weights.sum();
  return rule;
}

SpectralMoments::SpectralMoments(const PreProcess& pre, const LinkFunction& link, const ScalarDist& noise,
                                 double delta, const QuadratureSpec& quad)
    : tau_(pre.tau), delta_(delta) {
  if (!(delta > 0.0)) throw InvalidArgument("aspect ratio delta must be positive");
  if (quad.gh_nodes < 16) throw InvalidArgument("Gauss-Hermite order must be >= 16");
  const QuadratureRule gh = gauss_hermite(quad.gh_nodes);
  const QuadratureRule grule = quad.g_rule == GaussianRule::GaussHermite
                                 ? gh
                                 : composite_normal_rule(quad.g_panels, quad.g_order, quad.g_range);
  std::vector<double> zval;
  std::vector<double> zw;
  if (noise.point_mass) {
    zval.push_back(*noise.point_mass);
    zw.push_back(1.0);
  } else if (noise.gaussian_sd) {
    for (int k = 0; k < quad.gh_nodes; ++k) {
      zval.push_back(*noise.gaussian_sd * gh.nodes[k]);
      zw.push_back(gh.weights[k]);
    }
  } else {
    Rng rng(quad.seed);
    for (int k = 0; k < quad.z_samples; ++k) {
      zval.push_back(noise.sample(rng));
      zw.push_back(1.0 / quad.z_samples);
    }
  }
  for (Eigen::Index i = 0; i < grule.nodes.size(); ++i) {
    const double g = grule.nodes[i];
    for (size_t k = 0; k < zval.size(); ++k) {
      zs_.push_back(pre.Ts(link.eval(g, zval[k])));
      g2_.push_back(g * g);
      w_.push_back(grule.weights[i] * zw[k]);
    }
  }
}

void SpectralMoments::check_domain(double lambda) const {
  if (!(lambda > tau_ * (1.0 + 1e-9))) {
    std::ostringstream msg;
    msg << "spectral moments evaluated at lambda=" << lambda << " too close to the support edge tau=" << tau_;
    throw InvalidArgument(msg.str());
  }
}

double SpectralMoments::e_ratio(double lambda) const {
  check_domain(lambda);
  CompensatedSum acc;
  for (size_t i = 0; i < zs_.size(); ++i) acc.add(w_[i] * zs_[i] / (lambda - zs_[i]));
  return acc.value();
}

double SpectralMoments::e_ratio_g2(double lambda) const {
  check_domain(lambda);
  CompensatedSum acc;
  for (size_t i = 0; i < zs_.size(); ++i) acc.add(w_[i] * zs_[i] * g2_[i] / (lambda - zs_[i]));
  return acc.value();
}

double SpectralMoments::psi(double lambda) const { return lambda * (1.0 / delta_ + e_ratio(lambda)); }

double SpectralMoments::psi_prime(double lambda) const {
  check_domain(lambda);
  CompensatedSum a;
  CompensatedSum b;
  for (size_t i = 0; i < zs_.size(); ++i) {
    const double r = 1.0 / (lambda - zs_[i]);
    a.add(w_[i] * zs_[i] * r);
    b.add(w_[i] * zs_[i] * r * r);
  }
  return 1.0 / delta_ + a.value() - lambda * b.value();
}

double SpectralMoments::phi(double lambda) const { return lambda * e_ratio_g2(lambda); }

double SpectralMoments::phi_prime(double lambda) const {
  check_domain(lambda);
  CompensatedSum a;
  CompensatedSum b;
  for (size_t i = 0; i < zs_.size(); ++i) {
    const double r = 1.0 / (lambda - zs_[i]);
    a.add(w_[i] * zs_[i] * g2_[i] * r);
    b.add(w_[i] * zs_[i] * g2_[i] * r * r);
  }
  return a.value() - lambda * b.value();
}

LambdaStarSolution solve_lambda_star(const PreProcess& pre, const LinkFunction& link, const ScalarDist& noise,
                                     double delta, const QuadratureSpec& quad) {
  return solve_lambda_star(SpectralMoments(pre, link, noise, delta, quad));
}

LambdaStarSolution solve_lambda_star(const SpectralMoments& mom) {
  const double tau = mom.tau();
  LambdaStarSolution sol;
  sol.tau = tau;

  const double probe = tau * (1.0 + 1e-6);
  if (tau > 0.0) {
    const double e1 = mom.e_ratio(probe);
    const double e2 = mom.e_ratio_g2(probe);
    if (!(e1 > 1e3 && e2 > 1e3)) {
      sol.admissible = false;
      std::ostringstream msg;
      msg << "pre-processing may violate the divergence conditions near tau: E[Z/(l-Z)]=" << e1
          << ", E[Z G^2/(l-Z)]=" << e2 << " at l=tau(1+1e-6)";
      log_warn(msg.str());
    }
  }

  // lambda_bar: minimizer of the convex psi on (tau, inf)
  const double lo0 = tau > 0.0 ? tau * (1.0 + 2e-9) : 1e-12;
  double hi = std::max(2.0 * tau, 1.0);
  for (int k = 0; mom.psi_prime(hi) <= 0.0; ++k) {
    if (k > 200) throw NumericalError("could not bracket the minimizer of psi");
    hi *= 2.0;
  }
  double lo = lo0;
  if (mom.psi_prime(lo) >= 0.0) {
    sol.lambda_bar = lo;
  } else {
    const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = lo;
    double b = hi;
    double c = b - invphi * (b - a);
    double d = a + invphi * (b - a);
    double fc = mom.psi(c);
    double fd = mom.psi(d);
    for (int it = 0; it < 400 && (b - a) > 1e-13 * std::max(1.0, b); ++it) {
      if (fc < fd) {
        b = d;
        d = c;
        fd = fc;
        c = b - invphi * (b - a);
        fc = mom.psi(c);
      } else {
        a = c;
        c = d;
        fc = fd;
        d = a + invphi * (b - a);
        fd = mom.psi(d);
      }
    }
    sol.lambda_bar = 0.5 * (a + b);
  }

  const double lam_bar = sol.lambda_bar;
  auto zeta = [&](double l) { return mom.psi(std::max(l, lam_bar)); };
  auto f = [&](double l) { return zeta(l) - mom.phi(l); };

  double blo = lam_bar * (1.0 - 1e-9) + tau * 1e-9;
  if (!(blo > tau * (1.0 + 1e-9))) blo = lam_bar;
  if (f(blo) >= 0.0) {
    throw NumericalError("no sign change of zeta - phi above lambda_bar: the weak-recovery condition likely fails");
  }
  double bhi = std::max(2.0 * blo, 1.0);
  for (int k = 0; f(bhi) <= 0.0; ++k) {
    if (k > 200) throw NumericalError("no sign change of zeta - phi while doubling the upper bracket");
    bhi *= 2.0;
  }
  int it = 0;
  while (bhi - blo > 1e-10) {
    if (++it > 200) throw NumericalError("bisection for lambda* did not converge in 200 steps");
    const double mid = 0.5 * (blo + bhi);
    if (f(mid) < 0.0) {
      blo = mid;
    } else {
      bhi = mid;
    }
  }
  sol.bisections = it;
  sol.lambda_star = 0.5 * (blo + bhi);
  sol.psi_prime = mom.psi_prime(sol.lambda_star);
  sol.phi_prime = mom.phi_prime(sol.lambda_star);
  sol.overlap_a = sol.psi_prime > 0.0 ? std::sqrt(sol.psi_prime / (sol.psi_prime - sol.phi_prime)) : 0.0;
  sol.lam1_lim = mom.delta() * mom.psi(sol.lambda_star);
  sol.lam2_lim = mom.delta() * mom.psi(sol.lambda_bar);
  return sol;
}

double TMap::T(double y) const {
  const double ts = pre.Ts(y);
  return ts / (lambda_star - ts);
}

double TMap::T1(double y) const {
  const double ts = pre.Ts(y);
  const double r = lambda_star - ts;
  return lambda_star * pre.Ts1(y) / (r * r);
}

MatrixXd build_Mn(const ModelInstance& inst, const PreProcess& pre) {
  VectorXd w(inst.n);
  for (int i = 0; i < inst.n; ++i) w[i] = pre.Ts(inst.y[i]);
  return weighted_gram(inst.X, w);
}

SpectralResult spectral_from_matrix(const MatrixXd& Mn, const VectorXd& theta_star) {
  const auto d = Mn.rows();
  const EigenPairs ep = top_eigenpairs(Mn, 2);
  SpectralResult res;
  res.lam1_emp = ep.values[0];
  res.lam2_emp = ep.values[1];
  if (!(res.lam1_emp > 0.0)) throw NumericalError("spectral matrix has no positive leading eigenvalue");
  if (res.lam1_emp - res.lam2_emp < 1e-12 * res.lam1_emp) {
    throw NumericalError("degenerate leading eigenvalue: lam1 - lam2 = " + std::to_string(res.lam1_emp - res.lam2_emp));
  }
  VectorXd v = ep.vectors.col(0);
  if (v.dot(theta_star) < 0.0) v = -v;
  res.residual = (Mn * v - res.lam1_emp * v).norm();
  res.theta0 = std::sqrt(static_cast<double>(d)) * v;
  res.overlap_emp = v.dot(theta_star) / theta_star.norm();
  return res;
}

SpectralResult spectral_estimator(const ModelInstance& inst, const PreProcess& pre) {
  return spectral_from_matrix(build_Mn(inst, pre), inst.theta_star);
}

TwoStageResult two_stage_dynamic(const ModelInstance& inst, const PreProcess& pre, const LossModel& loss,
                                 double gamma, double lambda_ridge, int T_stage, int m) {
  if (T_stage < 1) throw InvalidArgument("two_stage_dynamic: T_stage must be >= 1");
  const MatrixXd Mn = build_Mn(inst, pre);
  TwoStageResult out;
  out.spectral = spectral_from_matrix(Mn, inst.theta_star);
  const double sd = std::sqrt(static_cast<double>(inst.d));
  VectorXd theta = inst.theta_star;
  out.stage1.push_back(theta);
  out.gaps.push_back((theta - out.spectral.theta0).norm() / sd);
  for (int T = 1; T <= T_stage; ++T) {
    VectorXd next = Mn * theta;
    const double beta = next.norm() / sd;
    theta = next / beta;
    out.betas.push_back(beta);
    out.stage1.push_back(theta);
    out.gaps.push_back((theta - out.spectral.theta0).norm() / sd);
  }
  GdConfig cfg;
  cfg.gamma = gamma;
  cfg.lambda_ridge = lambda_ridge;
  cfg.m = m;
  out.stage2 = run_gd(inst, loss, cfg, theta);
  return out;
}

}  // namespace dmftsim
