#pragma once

#include "dmftsim/common.hpp"

#include <utility>

namespace dmftsim {

/// Leading eigenpairs of a symmetric matrix, values in descending order.
struct EigenPairs {
  VectorXd values;
  MatrixXd vectors;  // columns
};

/// Top-k eigenpairs. Dense LAPACK (dsyevr) up to dense_limit, otherwise
/// shifted power iteration with deflation.
EigenPairs top_eigenpairs(const MatrixXd& sym, int k, int dense_limit = 4096);

/// Power iteration with deflation; exposed for testing against the dense path.
EigenPairs top_eigenpairs_power(const MatrixXd& sym, int k, int max_iter = 20000, double tol = 1e-13);

/// (smallest, largest) eigenvalue of a symmetric matrix.
std::pair<double, double> extreme_eigenvalues(const MatrixXd& sym);

/// A = X^T diag(w) X for nonnegative weights (BLAS syrk on sqrt(w) X).
MatrixXd weighted_gram(const MatrixXd& X, const VectorXd& w);

/// A = X^T diag(w) X for arbitrary weights (BLAS gemm).
MatrixXd weighted_gram_signed(const MatrixXd& X, const VectorXd& w);

/// Lower-triangular factor grown one row at a time. Rows already produced
/// never change, so Gaussian paths built from stored innovations are stable
/// when the horizon is extended.
class IncrementalCholesky {
 public:
  explicit IncrementalCholesky(double jitter = 1e-10) : jitter_(jitter) {}

  /// Appends the row for a new variable given its covariance with every
  /// previous variable (cov.size() == size()) and its own variance.
  /// Returns the diagonal jitter that had to be added (0 if none).
  double append(const std::vector<double>& cov, double var, const std::string& label);

  int size() const { return static_cast<int>(rows_.size()); }
  const std::vector<double>& row(int k) const { return rows_[k]; }
  double max_jitter() const { return max_jitter_; }

 private:
  double jitter_;
  double max_jitter_ = 0.0;
  std::vector<std::vector<double>> rows_;
  std::vector<double> vars_;
};

/// Smallest eigenvalue of a small symmetric matrix (diagnostics).
double min_eigenvalue(const MatrixXd& sym);

}  // namespace dmftsim
