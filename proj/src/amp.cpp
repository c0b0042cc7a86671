#include "dmftsim/amp.hpp"

#include <cmath>

namespace dmftsim {

OnsagerTable::OnsagerTable(int m) : m_(m) {
  if (m < 0) throw InvalidArgument("OnsagerTable: horizon must be >= 0");
  xi_.resize(m + 1);
  zeta_.resize(m + 1);
  for (int i = 0; i <= m; ++i) {
    xi_[i].assign(i + 1, Matrix2d::Zero());
    zeta_[i].assign(i + 1, Matrix2d::Zero());
  }
  zeta_[0][0] << 1.0, 0.0, 0.0, 0.0;
}

const Matrix2d& OnsagerTable::xi(int i, int j) const {
  if (i < 0 || i > m_ || j < 0 || j > i) throw InvalidArgument("OnsagerTable::xi index out of range");
  return xi_[i][j];
}

const Matrix2d& OnsagerTable::zeta(int i, int j) const {
  if (i < 0 || i > m_ || j < -1 || j > i - 1) throw InvalidArgument("OnsagerTable::zeta index out of range");
  return zeta_[i][j + 1];
}

void OnsagerTable::set_xi(int i, int j, const Matrix2d& v) {
  if (i < 0 || i > m_ || j < 0 || j > i) throw InvalidArgument("OnsagerTable::set_xi index out of range");
  if (v(0, 1) != 0.0 || v(1, 1) != 0.0) throw InvalidArgument("OnsagerTable: xi must have a zero second column");
  xi_[i][j] = v;
}

void OnsagerTable::set_zeta(int i, int j, const Matrix2d& v) {
  if (i < 0 || i > m_ || j < -1 || j > i - 1) throw InvalidArgument("OnsagerTable::set_zeta index out of range");
  if (v(0, 1) != 0.0 || v(1, 1) != 0.0) throw InvalidArgument("OnsagerTable: zeta must have a zero second column");
  if (i == 0 && j == -1 && v != Matrix2d{{1.0, 0.0}, {0.0, 0.0}})
    throw InvalidArgument("OnsagerTable: zeta(0,-1) is fixed to [1,0;0,0]");
  zeta_[i][j + 1] = v;
}

void OnsagerTable::check_structure() const {
  for (int i = 0; i <= m_; ++i) {
    for (int j = 0; j <= i; ++j)
      if (xi_[i][j](0, 1) != 0.0 || xi_[i][j](1, 1) != 0.0) throw Error("OnsagerTable: xi second column not zero");
    for (int j = 0; j <= i; ++j)
      if (zeta_[i][j](0, 1) != 0.0 || zeta_[i][j](1, 1) != 0.0)
        throw Error("OnsagerTable: zeta second column not zero");
  }
  if (zeta_[0][0] != Matrix2d{{1.0, 0.0}, {0.0, 0.0}}) throw Error("OnsagerTable: zeta(0,-1) altered");
}

OnsagerTable onsager_from_dmft(const DmftState& dmft, int m) {
  if (dmft.theta_horizon() < m || dmft.eta_horizon() < m)
    throw InvalidArgument("onsager_from_dmft: DMFT horizon " + std::to_string(dmft.eta_horizon()) + " < " +
                          std::to_string(m));
  const double delta = dmft.problem().delta;
  OnsagerTable tab(m);
  for (int t = 0; t <= m; ++t) {
    for (int s = -1; s <= t - 1; ++s) {
      if (t == 0) continue;  // zeta(0,-1) fixed
      Matrix2d z = Matrix2d::Zero();
      z(0, 0) = s == -1 ? dmft.R_theta_dia(t) : delta * dmft.R_theta(t, s);
      tab.set_zeta(t, s, z);
    }
    for (int s = 0; s <= t; ++s) {
      Matrix2d x = Matrix2d::Zero();
      if (s == t) {
        x(0, 0) = dmft.mean_d1(t) + (t == 0 ? dmft.mean_d1_T0() : 0.0);
      } else if (s == 0) {
        x(0, 0) = (dmft.R_eta(t, 0) + dmft.R_eta_dia(t)) / delta;
      } else {
        x(0, 0) = dmft.R_eta(t, s) / delta;
      }
      if (s == 0) x(1, 0) = (dmft.R_eta_star(t) + dmft.R_eta_dd(t)) / delta;
      tab.set_xi(t, s, x);
    }
  }
  tab.check_structure();
  return tab;
}

OnsagerTable random_onsager_table(int m, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  OnsagerTable tab(m);
  for (int i = 0; i <= m; ++i) {
    for (int j = 0; j <= i; ++j) {
      Matrix2d x = Matrix2d::Zero();
      x(0, 0) = normal(rng);
      x(1, 0) = normal(rng);
      tab.set_xi(i, j, x);
    }
    for (int j = -1; j <= i - 1; ++j) {
      if (i == 0) continue;
      Matrix2d z = Matrix2d::Zero();
      z(0, 0) = normal(rng);
      z(1, 0) = normal(rng);
      tab.set_zeta(i, j, z);
    }
  }
  return tab;
}

AmpRun run_spectral_amp(const ModelInstance& inst, const LinkFunction& link, const PreProcess& pre, double lambda_star,
                        const VectorXd& theta0, const OnsagerTable& iteration, const OnsagerTable& nonlinear,
                        const LossModel& loss, double gamma, double lambda_ridge, int m) {
  const int n = inst.n;
  const int d = inst.d;
  if (theta0.size() != d) throw InvalidArgument("run_spectral_amp: theta0 has wrong dimension");
  if (m < 0) throw InvalidArgument("run_spectral_amp: m must be >= 0");
  if (iteration.horizon() < m || nonlinear.horizon() < m)
    throw InvalidArgument("run_spectral_amp: Onsager table shorter than the horizon");
  if (!(lambda_star > pre.tau)) throw InvalidArgument("run_spectral_amp: lambda* must exceed tau");
  iteration.check_structure();
  nonlinear.check_structure();
  const double delta = static_cast<double>(n) / d;
  const MatrixXd& X = inst.X;

  AmpRun run;
  run.delta = delta;
  run.theta_star = inst.theta_star;
  run.theta_rec.resize(d, m + 1);
  run.xtheta_rec.resize(n, m + 1);

  // g_j carries (theta^j, theta*) and f_j carries (ell^j, 0); the second
  // columns are kept as explicit matrices so the row-vector products below
  // use the whole 2x2 tables.
  std::vector<MatrixXd> g;  // d x 2
  std::vector<MatrixXd> f;  // n x 2

  const VectorXd Xtheta0 = X * theta0;
  const VectorXd Xstar = X * inst.theta_star;
  VectorXd Zs_x0(n);  // (1/lambda*) Z_s X theta^0
  for (int i = 0; i < n; ++i) Zs_x0[i] = pre.Ts(inst.y[i]) * Xtheta0[i] / lambda_star;

  MatrixXd b0(n, 2);
  b0.col(0) = Xtheta0 - Zs_x0;
  b0.col(1) = Xstar;
  run.b_iters.push_back(b0);

  // T(phi(b^0_2, z)), shared by every reconstruction of X theta^j
  const TMap tmap{pre, lambda_star};
  VectorXd Tb(n);
  for (int i = 0; i < n; ++i) Tb[i] = tmap.T(link.eval(b0(i, 1), inst.z[i]));

  MatrixXd g0(d, 2);
  g0.col(0) = theta0;
  g0.col(1) = inst.theta_star;
  g.push_back(g0);
  run.theta_rec.col(0) = theta0;

  auto make_f = [&](const VectorXd& xtheta) {
    MatrixXd fj = MatrixXd::Zero(n, 2);
    for (int i = 0; i < n; ++i) fj(i, 0) = loss.ell(xtheta[i], b0(i, 1), inst.z[i]);
    return fj;
  };

  {
    const VectorXd xt0 = (VectorXd::Ones(n) + Tb).cwiseProduct(b0.col(0));
    run.xtheta_rec.col(0) = xt0;
    f.push_back(make_f(xt0));
  }

  for (int j = 0; j < m; ++j) {
    // a^{j+1} = -(1/delta) X^T f_j + sum_{i<=j} g_i xi_{j,i}
    MatrixXd a = -(1.0 / delta) * (X.transpose() * f[j]);
    for (int i = 0; i <= j; ++i) a += g[i] * iteration.xi(j, i);
    run.a_iters.push_back(a);

    // g_{j+1}
    VectorXd acc = a.col(0);
    for (int i = 0; i <= j; ++i) {
      const Matrix2d& x = nonlinear.xi(j, i);
      acc -= x(0, 0) * g[i].col(0) + x(1, 0) * inst.theta_star;
    }
    MatrixXd gn(d, 2);
    gn.col(0) = (1.0 - gamma * lambda_ridge) * g[j].col(0) + gamma * delta * acc;
    gn.col(1) = inst.theta_star;
    g.push_back(gn);
    run.theta_rec.col(j + 1) = gn.col(0);

    // b^{j+1} = X g_{j+1} + (1/delta) sum_{i<=j} f_i zeta_{j+1,i} - ((1/lambda*) Z_s X theta^0, 0) zeta_{j+1,-1}
    MatrixXd b = X * gn;
    for (int i = 0; i <= j; ++i) b += (1.0 / delta) * (f[i] * iteration.zeta(j + 1, i));
    MatrixXd spec(n, 2);
    spec.col(0) = Zs_x0;
    spec.col(1).setZero();
    b -= spec * iteration.zeta(j + 1, -1);
    run.b_iters.push_back(b);

    // X theta^{j+1} recovered from b^{j+1}, then f_{j+1}
    VectorXd xt = b.col(0);
    for (int i = 0; i <= j; ++i) xt -= (1.0 / delta) * nonlinear.zeta(j + 1, i)(0, 0) * f[i].col(0);
    xt += nonlinear.zeta(j + 1, -1)(0, 0) * Tb.cwiseProduct(b0.col(0));
    run.xtheta_rec.col(j + 1) = xt;
    f.push_back(make_f(xt));
  }
  return run;
}

EquivalenceError verify_equivalence(const AmpRun& amp, const Trajectory& gd) {
  const int m = amp.horizon();
  if (gd.horizon() < m) throw InvalidArgument("verify_equivalence: GD trajectory shorter than the AMP run");
  if (gd.eta.cols() < m + 1) throw InvalidArgument("verify_equivalence: GD trajectory must record X theta^t");
  EquivalenceError err;
  for (int t = 0; t <= m; ++t) {
    const double nt = gd.theta.col(t).norm();
    const double ne = gd.eta.col(t).norm();
    err.theta = std::max(err.theta, (amp.theta_rec.col(t) - gd.theta.col(t)).norm() / std::max(nt, 1e-300));
    err.eta = std::max(err.eta, (amp.xtheta_rec.col(t) - gd.eta.col(t)).norm() / std::max(ne, 1e-300));
  }
  return err;
}

SeReport se_check(const AmpRun& amp, const DmftState& dmft) {
  const int m = amp.horizon();
  if (dmft.theta_horizon() < m || dmft.eta_horizon() < m - 1)
    throw InvalidArgument("se_check: DMFT horizon shorter than the AMP run");
  const auto d = amp.theta_rec.rows();
  const int K = dmft.K();

  // columns: theta^0..theta^m, theta*, u^0..u^{m-1}
  const int cols = (m + 1) + 1 + m;
  MatrixXd A(d, cols), D(K, cols);
  std::vector<std::string> names;
  for (int t = 0; t <= m; ++t) {
    A.col(t) = amp.theta_rec.col(t);
    D.col(t) = dmft.theta(t);
    names.push_back("theta" + std::to_string(t));
  }
  A.col(m + 1) = amp.theta_star;
  D.col(m + 1) = dmft.theta_star();
  names.push_back("theta*");
  for (int i = 0; i < m; ++i) {
    A.col(m + 2 + i) = amp.delta * amp.a_iters[i].col(0);
    D.col(m + 2 + i) = dmft.u(i);
    names.push_back("u" + std::to_string(i));
  }

  SeReport rep;
  for (int c = 0; c < cols; ++c) {
    SeEntry e{"E[" + names[c] + "]", compensated_mean(VectorXd(A.col(c))), compensated_mean(VectorXd(D.col(c)))};
    rep.entries.push_back(e);
  }
  for (int c = 0; c < cols; ++c)
    for (int k = c; k < cols; ++k) {
      SeEntry e{"E[" + names[c] + "*" + names[k] + "]", compensated_dot_mean(A.col(c), A.col(k)),
                compensated_dot_mean(D.col(c), D.col(k))};
      rep.entries.push_back(e);
    }
  for (const auto& e : rep.entries) rep.max_diff = std::max(rep.max_diff, e.diff());
  return rep;
}

}  // namespace dmftsim
