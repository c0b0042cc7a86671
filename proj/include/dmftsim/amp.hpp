#pragma once

#include "dmftsim/dmft.hpp"
#include "dmftsim/gd.hpp"

#include <Eigen/Dense>

namespace dmftsim {

using Eigen::Matrix2d;

/// Onsager coefficients. xi(i, j) for 0 <= j <= i, zeta(i, j) for -1 <= j <= i-1.
/// Only the entries the construction can produce are free: the second column
/// of every matrix is zero and zeta(0, -1) = [1, 0; 0, 0].
class OnsagerTable {
 public:
  explicit OnsagerTable(int m = 0);

  int horizon() const { return m_; }

  const Matrix2d& xi(int i, int j) const;
  const Matrix2d& zeta(int i, int j) const;
  /// Setters reject a non-zero second column.
  void set_xi(int i, int j, const Matrix2d& v);
  void set_zeta(int i, int j, const Matrix2d& v);

  /// Throws if any structural zero is violated.
  void check_structure() const;

 private:
  int m_;
  std::vector<std::vector<Matrix2d>> xi_;    // xi_[i][j], j = 0..i
  std::vector<std::vector<Matrix2d>> zeta_;  // zeta_[i][j + 1], j = -1..i-1
};

OnsagerTable onsager_from_dmft(const DmftState& dmft, int m);

/// iid N(0,1) entries on every free position.
OnsagerTable random_onsager_table(int m, std::uint64_t seed);

struct AmpRun {
  std::vector<MatrixXd> a_iters;  // a^1..a^m, d x 2
  std::vector<MatrixXd> b_iters;  // b^0..b^m, n x 2
  MatrixXd theta_rec;             // d x (m+1): theta^j carried by g_j
  MatrixXd xtheta_rec;            // n x (m+1): X theta^j recovered from b^j
  VectorXd theta_star;
  double delta = 0.0;

  int horizon() const { return static_cast<int>(b_iters.size()) - 1; }
};

/// Spectral-initialized AMP. `iteration` supplies the Onsager terms of the
/// AMP recursion itself; `nonlinear` is the table baked into the g/f
/// nonlinearities. Both equal for the genuine construction; passing different
/// tables is the negative control.
AmpRun run_spectral_amp(const ModelInstance& inst, const LinkFunction& link, const PreProcess& pre, double lambda_star,
                        const VectorXd& theta0, const OnsagerTable& iteration, const OnsagerTable& nonlinear,
                        const LossModel& loss, double gamma, double lambda_ridge, int m);

inline AmpRun run_spectral_amp(const ModelInstance& inst, const LinkFunction& link, const PreProcess& pre,
                               double lambda_star, const VectorXd& theta0, const OnsagerTable& table,
                               const LossModel& loss, double gamma, double lambda_ridge, int m) {
  return run_spectral_amp(inst, link, pre, lambda_star, theta0, table, table, loss, gamma, lambda_ridge, m);
}

struct EquivalenceError {
  double theta = 0.0;
  double eta = 0.0;
  double max() const { return std::max(theta, eta); }
};

/// max_t ||theta^t_amp - theta^t_gd|| / ||theta^t_gd|| and the same for X theta^t.
EquivalenceError verify_equivalence(const AmpRun& amp, const Trajectory& gd);

struct SeEntry {
  std::string name;
  double amp = 0.0;
  double dmft = 0.0;
  double diff() const { return std::abs(amp - dmft); }
};

struct SeReport {
  std::vector<SeEntry> entries;
  double max_diff = 0.0;
};

/// Means, squares and pairwise products of (theta^0..theta^m, theta*, delta a^1_1..delta a^m_1)
/// against (theta^0..theta^m, theta*, u^0..u^{m-1}) from the DMFT pools.
SeReport se_check(const AmpRun& amp, const DmftState& dmft);

}  // namespace dmftsim
