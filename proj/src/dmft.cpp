#include "dmftsim/dmft.hpp"

#include <cmath>
#include <sstream>

namespace dmftsim {

namespace {

VectorXd normals(Rng& rng, int K) {
  std::normal_distribution<double> normal(0.0, 1.0);
  VectorXd v(K);
  for (int i = 0; i < K; ++i) v[i] = normal(rng);
  return v;
}

VectorXd draw(const ScalarDist& dist, Rng& rng, int K) {
  VectorXd v(K);
  for (int i = 0; i < K; ++i) v[i] = dist.sample(rng);
  return v;
}

}  // namespace

DmftState::DmftState(const DmftProblem& prob, const LambdaStarSolution& lam_sol, const MonteCarloSpec& mc)
    : prob_(prob),
      K_(mc.K),
      a_(prob.mode == InitMode::Spectral ? lam_sol.overlap_a : 0.0),
      lambda_star_(lam_sol.lambda_star),
      tmap_{prob.pre, lam_sol.lambda_star},
      rng_(mc.seed),
      wfac_(mc.jitter),
      ufac_(mc.jitter) {
  if (K_ < 2) throw InvalidArgument("DMFT needs at least two Monte Carlo paths");
  if (K_ < 1000) log_warn("DMFT path count K=" + std::to_string(K_) + " is below 1000; kernels will be noisy");
  const bool spectral = prob.mode == InitMode::Spectral;
  if (spectral) {
    if (!(a_ > 0.0) || a_ > 1.0) {
      throw InvalidArgument("spectral DMFT initialization needs overlap a in (0, 1], got " + std::to_string(a_));
    }
    if (a_ < 0.05) log_warn("overlap a=" + std::to_string(a_) + " is small; diamond-channel kernels are MC dominated");
    if (!(lambda_star_ > prob.pre.tau)) throw InvalidArgument("lambda* must exceed tau");
  }

  // theta side: theta*, normalized to mean square one like the finite-d signal
  theta_star_ = draw(prob.signal, rng_, K_);
  const double ms = theta_star_.squaredNorm() / K_;
  if (!(ms > 0.0)) throw InvalidArgument("signal law produced an all-zero pool");
  theta_star_ /= std::sqrt(ms);

  VectorXd theta0;
  if (spectral) {
    // u_diamond: independent normals, orthogonalized against theta* and
    // normalized so the pool reproduces C(0,0)=1, C(0,*)=a exactly
    VectorXd g = normals(rng_, K_);
    g -= (g.dot(theta_star_) / theta_star_.squaredNorm()) * theta_star_;
    const double var = 1.0 - a_ * a_;
    u_dia_ = var > 0.0 ? VectorXd(g * std::sqrt(var * K_ / g.squaredNorm())) : VectorXd(VectorXd::Zero(K_));
    ufac_.append({}, var, "u");
    const double l00 = ufac_.row(0)[0];
    u_innov_.push_back(l00 > 0.0 ? VectorXd(u_dia_ / l00) : VectorXd(VectorXd::Zero(K_)));
    theta0 = a_ * theta_star_ + u_dia_;
  } else {
    u_dia_ = VectorXd::Zero(K_);
    theta0 = draw(prob.init_law, rng_, K_);
  }
  theta_.push_back(theta0);
  C_theta_.push_back({spectral ? 1.0 : mean_prod(theta0, theta0)});
  C_theta_star_.push_back(spectral ? a_ : mean_prod(theta0, theta_star_));
  R_theta_.push_back({});
  R_theta_dia_.push_back(spectral ? 1.0 : 0.0);

  // eta side: z, then the w* innovation (C(*,*) = 1)
  z_ = draw(prob.noise, rng_, K_);
  w_star_ = normals(rng_, K_);
  w_innov_.push_back(w_star_);
  wfac_.append({}, 1.0, "w");
  y_.resize(K_);
  Ts_.resize(K_);
  Ty_.resize(K_);
  T1y_.resize(K_);
  dphi_.resize(K_);
  for (int i = 0; i < K_; ++i) {
    y_[i] = prob.link.eval(w_star_[i], z_[i]);
    dphi_[i] = prob.link.du(w_star_[i], z_[i]);
    if (spectral) {
      Ts_[i] = prob.pre.Ts(y_[i]);
      Ty_[i] = tmap_.T(y_[i]);
      T1y_[i] = tmap_.T1(y_[i]);
    } else {
      Ts_[i] = Ty_[i] = T1y_[i] = 0.0;
    }
  }
  min_eig_w_ = 1.0;
  min_eig_u_ = spectral ? 1.0 - a_ * a_ : std::numeric_limits<double>::infinity();
}

void DmftState::step_eta() {
  const int t = eta_horizon() + 1;
  if (theta_horizon() < t) throw InvalidArgument("step_eta: theta^t not yet available");
  const bool spectral = prob_.mode == InitMode::Spectral;
  const double delta = prob_.delta;

  // covariance of (w*, w^0..w^t): diagnostics on the full block, then one new factor row
  {
    MatrixXd C(t + 2, t + 2);
    C(0, 0) = 1.0;
    for (int r = 0; r <= t; ++r) {
      C(0, r + 1) = C(r + 1, 0) = C_theta_star(r);
      for (int s = 0; s <= t; ++s) C(r + 1, s + 1) = C_theta(r, s);
    }
    min_eig_w_ = std::min(min_eig_w_, min_eigenvalue(C));
    std::vector<double> cov(t + 1);
    cov[0] = C_theta_star(t);
    for (int s = 0; s < t; ++s) cov[s + 1] = C_theta(t, s);
    std::ostringstream label;
    label << "w (t=" << t << ")";
    wfac_.append(cov, C_theta(t, t), label.str());
  }
  w_innov_.push_back(normals(rng_, K_));
  const auto& L = wfac_.row(t + 1);
  VectorXd wt = VectorXd::Zero(K_);
  for (int k = 0; k <= t + 1; ++k)
    if (L[k] != 0.0) wt += L[k] * w_innov_[k];
  w_.push_back(wt);

  VectorXd eta = wt;
  for (int s = 0; s < t; ++s) eta -= R_theta(t, s) * ell_[s];
  if (spectral) eta += R_theta_dia(t) * Ty_.cwiseProduct(w_[0]);
  VectorXd ell(K_), d1(K_), d2(K_);
  for (int i = 0; i < K_; ++i) {
    ell[i] = prob_.loss.ell(eta[i], w_star_[i], z_[i]);
    d1[i] = prob_.loss.d1ell(eta[i], w_star_[i], z_[i]);
    d2[i] = prob_.loss.d2ell(eta[i], w_star_[i], z_[i]);
  }
  if (!eta.allFinite() || !ell.allFinite()) throw NumericalError("DMFT eta pool became non-finite at t=" + std::to_string(t));
  eta_.push_back(eta);
  ell_.push_back(ell);
  d1_.push_back(d1);
  d2_.push_back(d2);

  // per-path responses
  std::vector<VectorXd> rts(t);
  for (int s = 0; s < t; ++s) {
    VectorXd acc = -R_theta(t, s) * d1_[s];
    for (int r = s + 1; r < t; ++r) acc -= R_theta(t, r) * r_eta_[r][s];
    rts[s] = d1.cwiseProduct(acc);
  }
  r_eta_.push_back(std::move(rts));
  {
    VectorXd acc = VectorXd::Zero(K_);
    for (int r = 0; r < t; ++r) acc -= R_theta(t, r) * r_eta_star_[r];
    r_eta_star_.push_back(d1.cwiseProduct(acc) + d2);
  }
  if (spectral) {
    VectorXd acc1 = R_theta_dia(t) * Ty_;
    VectorXd acc2 = R_theta_dia(t) * T1y_.cwiseProduct(dphi_).cwiseProduct(w_[0]);
    for (int s = 0; s < t; ++s) {
      acc1 -= R_theta(t, s) * r_eta_dia_[s];
      acc2 -= R_theta(t, s) * r_eta_dd_[s];
    }
    r_eta_dia_.push_back(d1.cwiseProduct(acc1));
    r_eta_dd_.push_back(d1.cwiseProduct(acc2));
  } else {
    r_eta_dia_.push_back(VectorXd::Zero(K_));
    r_eta_dd_.push_back(VectorXd::Zero(K_));
  }

  // kernels
  std::vector<double> crow(t + 1);
  for (int r = 0; r <= t; ++r) crow[r] = delta * mean_prod(ell, ell_[r]);
  C_eta_.push_back(std::move(crow));
  if (spectral) {
    C_eta_dia_.push_back(-(delta / lambda_star_) * mean_prod(ell, Ts_.cwiseProduct(eta_[0])));
  } else {
    C_eta_dia_.push_back(0.0);
  }
  std::vector<double> rrow(t);
  for (int s = 0; s < t; ++s) rrow[s] = delta * mean(r_eta_[t][s]);
  R_eta_.push_back(std::move(rrow));
  R_eta_star_.push_back(delta * mean(r_eta_star_[t]));
  R_eta_dia_.push_back(spectral ? delta * mean(r_eta_dia_[t]) : 0.0);
  R_eta_dd_.push_back(spectral ? delta * mean(r_eta_dd_[t]) : 0.0);
  mean_d1_.push_back(mean(d1));
  Gamma_.push_back(delta * mean_d1_[t]);
  if (t == 0) mean_d1_T0_ = spectral ? mean_prod(d1, Ty_) : 0.0;
}

void DmftState::step_theta() {
  const int t = theta_horizon();
  if (eta_horizon() < t) throw InvalidArgument("step_theta: eta^t not yet available");
  const bool spectral = prob_.mode == InitMode::Spectral;
  const double gamma = prob_.gamma;
  const double lambda = prob_.lambda_ridge;
  const int off = spectral ? 1 : 0;  // u_diamond occupies factor row 0

  {
    MatrixXd C(t + 1 + off, t + 1 + off);
    if (spectral) {
      C(0, 0) = C_eta_dia_dia();
      for (int r = 0; r <= t; ++r) C(0, r + 1) = C(r + 1, 0) = C_eta_dia(r);
    }
    for (int r = 0; r <= t; ++r)
      for (int s = 0; s <= t; ++s) C(r + off, s + off) = C_eta(r, s);
    min_eig_u_ = std::min(min_eig_u_, min_eigenvalue(C));
    std::vector<double> cov(t + off);
    if (spectral) cov[0] = C_eta_dia(t);
    for (int s = 0; s < t; ++s) cov[s + off] = C_eta(t, s);
    std::ostringstream label;
    label << "u (t=" << t << ")";
    ufac_.append(cov, C_eta(t, t), label.str());
  }
  u_innov_.push_back(normals(rng_, K_));
  const auto& L = ufac_.row(t + off);
  VectorXd ut = VectorXd::Zero(K_);
  for (int k = 0; k <= t + off; ++k)
    if (L[k] != 0.0) ut += L[k] * u_innov_[k];
  u_.push_back(ut);

  const double G = Gamma(t);
  VectorXd drift = -(lambda + G) * theta_[t];
  for (int s = 0; s < t; ++s) drift -= R_eta(t, s) * theta_[s];
  if (spectral) drift -= R_eta_dia(t) * theta_[0];
  drift -= (R_eta_star(t) + R_eta_dd(t)) * theta_star_;
  drift += ut;
  VectorXd next = theta_[t] + gamma * drift;
  if (!next.allFinite()) throw NumericalError("DMFT theta pool became non-finite at t=" + std::to_string(t + 1));
  theta_.push_back(next);

  // deterministic responses
  const double decay = 1.0 - gamma * lambda - gamma * G;
  std::vector<double> rrow(t + 1);
  for (int s = 0; s < t; ++s) {
    double v = decay * R_theta(t, s);
    for (int r = s + 1; r < t; ++r) v -= gamma * R_eta(t, r) * R_theta(r, s);
    rrow[s] = v;
  }
  rrow[t] = gamma;
  R_theta_.push_back(std::move(rrow));
  if (spectral) {
    double v = decay * R_theta_dia(t);
    for (int r = 0; r < t; ++r) v -= gamma * R_eta(t, r) * R_theta_dia(r);
    v -= gamma * R_eta_dia(t);
    R_theta_dia_.push_back(v);
  } else {
    R_theta_dia_.push_back(0.0);
  }

  std::vector<double> crow(t + 2);
  for (int s = 0; s <= t + 1; ++s) crow[s] = mean_prod(next, theta_[s]);
  C_theta_.push_back(std::move(crow));
  C_theta_star_.push_back(mean_prod(next, theta_star_));
}

void DmftState::advance_to(int m) {
  if (m < 0) throw InvalidArgument("DMFT horizon must be >= 0");
  while (theta_horizon() < m || eta_horizon() < m) {
    if (eta_horizon() < theta_horizon()) {
      step_eta();
    } else {
      step_theta();
    }
  }
}

DmftState init_dmft(const DmftProblem& prob, const LambdaStarSolution& lam_sol, const MonteCarloSpec& mc) {
  return DmftState(prob, lam_sol, mc);
}

DmftLaw extract_law(const DmftState& state, int m) {
  if (state.theta_horizon() < m || state.eta_horizon() < m) throw InvalidArgument("extract_law: horizon not reached");
  const int K = state.K();
  DmftLaw law;
  law.theta_samples.resize(K, m + 2);
  law.eta_samples.resize(K, m + 3);
  for (int t = 0; t <= m; ++t) {
    law.theta_samples.col(t) = state.theta(t);
    law.eta_samples.col(t) = state.eta(t);
  }
  law.theta_samples.col(m + 1) = state.theta_star();
  law.eta_samples.col(m + 1) = state.w_star();
  law.eta_samples.col(m + 2) = state.z();
  return law;
}

DmftLaw run_dmft(DmftState& state, int m) {
  state.advance_to(m);
  return extract_law(state, m);
}

TtiReport tti_diagnostics(const DmftState& state, int max_lag, int t_lo, int t_hi, int fit_lags) {
  const int T = std::min(state.theta_horizon(), state.eta_horizon());
  if (T < 10) throw InvalidArgument("tti_diagnostics needs horizon >= 10");
  TtiReport rep;
  rep.max_lag = max_lag;
  for (int s = 1; s <= max_lag; ++s) {
    std::vector<double> series;
    for (int t = 0; t + s <= T; ++t) series.push_back(state.R_theta(t + s, t));
    rep.lag_series.push_back(std::move(series));
  }
  if (t_hi < 0) t_hi = T - max_lag;
  if (t_lo < 0) t_lo = std::max(0, t_hi - 9);
  rep.t_lo = t_lo;
  rep.t_hi = t_hi;
  for (int s = 1; s <= max_lag; ++s) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (int t = t_lo; t <= t_hi && t + s <= T; ++t) {
      lo = std::min(lo, state.R_theta(t + s, t));
      hi = std::max(hi, state.R_theta(t + s, t));
    }
    rep.lag_spread.push_back(hi >= lo ? hi - lo : std::numeric_limits<double>::quiet_NaN());
  }
  for (int t = 0; t <= T; ++t) {
    rep.R_theta_dia_abs.push_back(std::abs(state.R_theta_dia(t)));
    rep.R_eta_dia_abs.push_back(std::abs(state.R_eta_dia(t)));
    rep.R_eta_dd_abs.push_back(std::abs(state.R_eta_dd(t)));
  }
  // log-linear fit of |R_theta(t_ref + s, t_ref)|
  rep.t_ref = t_lo;
  std::vector<double> xs, ys;
  for (int s = 1; s <= fit_lags && t_lo + s <= T; ++s) {
    const double v = std::abs(state.R_theta(t_lo + s, t_lo));
    if (v > 0.0) {
      xs.push_back(s);
      ys.push_back(std::log(v));
    }
  }
  if (xs.size() >= 2) {
    const double n = static_cast<double>(xs.size());
    double mx = 0, my = 0;
    for (size_t i = 0; i < xs.size(); ++i) {
      mx += xs[i] / n;
      my += ys[i] / n;
    }
    double sxx = 0, sxy = 0, syy = 0;
    for (size_t i = 0; i < xs.size(); ++i) {
      sxx += (xs[i] - mx) * (xs[i] - mx);
      sxy += (xs[i] - mx) * (ys[i] - my);
      syy += (ys[i] - my) * (ys[i] - my);
    }
    const double slope = sxy / sxx;
    rep.decay_rate = -slope;
    rep.decay_r2 = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  }
  double sum = 0.0;
  for (int s = 0; s < T; ++s) sum += state.R_theta(T, s);
  rep.R_theta_sum = sum;
  return rep;
}

}  // namespace dmftsim
