#include "dmftsim/linalg.hpp"

#include <cblas.h>
#include <lapacke.h>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace dmftsim {

EigenPairs top_eigenpairs(const MatrixXd& sym, int k, int dense_limit) {
  const int d = static_cast<int>(sym.rows());
  if (sym.cols() != d) throw InvalidArgument("top_eigenpairs: matrix not square");
  if (k < 1 || k > d) throw InvalidArgument("top_eigenpairs: k out of range");
  if (d > dense_limit) return top_eigenpairs_power(sym, k);

  MatrixXd work = sym;  // dsyevr destroys its input
  VectorXd w(d);
  MatrixXd z(d, k);
  std::vector<lapack_int> isuppz(2 * static_cast<size_t>(k));
  lapack_int found = 0;
  const lapack_int info = LAPACKE_dsyevr(LAPACK_COL_MAJOR, 'V', 'I', 'L', d, work.data(), d, 0.0, 0.0, d - k + 1, d,
                                         0.0, &found, w.data(), z.data(), d, isuppz.data());
  if (info != 0 || found != k) throw NumericalError("dsyevr failed with info=" + std::to_string(info));
  // LAPACK returns ascending order
  EigenPairs out;
  out.values.resize(k);
  out.vectors.resize(d, k);
  for (int i = 0; i < k; ++i) {
    out.values[i] = w[k - 1 - i];
    out.vectors.col(i) = z.col(k - 1 - i);
  }
  return out;
}

EigenPairs top_eigenpairs_power(const MatrixXd& sym, int k, int max_iter, double tol) {
  const auto d = sym.rows();
  EigenPairs out;
  out.values.resize(k);
  out.vectors.resize(d, k);
  // Shift by a Gershgorin bound so the top of the spectrum is also the
  // largest in magnitude.
  double shift = 0.0;
  for (Eigen::Index i = 0; i < d; ++i) shift = std::max(shift, sym.row(i).cwiseAbs().sum());
  Rng rng(12345);
  std::normal_distribution<double> normal;
  for (int j = 0; j < k; ++j) {
    VectorXd v(d);
    for (Eigen::Index i = 0; i < d; ++i) v[i] = normal(rng);
    double lam = 0.0;
    for (int it = 0; it < max_iter; ++it) {
      for (int p = 0; p < j; ++p) v -= out.vectors.col(p).dot(v) * out.vectors.col(p);
      v.normalize();
      VectorXd Av = sym * v + shift * v;
      for (int p = 0; p < j; ++p) Av -= out.vectors.col(p).dot(Av) * out.vectors.col(p);
      const double next = v.dot(Av);
      const double change = std::abs(next - lam);
      lam = next;
      v = Av;
      if (change <= tol * std::abs(lam) && it > 10) break;
    }
    v.normalize();
    out.vectors.col(j) = v;
    out.values[j] = v.dot(sym * v);
  }
  return out;
}

std::pair<double, double> extreme_eigenvalues(const MatrixXd& sym) {
  const int d = static_cast<int>(sym.rows());
  MatrixXd work = sym;
  VectorXd w(d);
  const lapack_int info = LAPACKE_dsyevd(LAPACK_COL_MAJOR, 'N', 'L', d, work.data(), d, w.data());
  if (info != 0) throw NumericalError("dsyevd failed with info=" + std::to_string(info));
  return {w[0], w[d - 1]};
}

MatrixXd weighted_gram(const MatrixXd& X, const VectorXd& w) {
  const int n = static_cast<int>(X.rows());
  const int d = static_cast<int>(X.cols());
  MatrixXd S(n, d);
  for (int j = 0; j < d; ++j)
    for (int i = 0; i < n; ++i) {
      if (w[i] < 0.0) throw InvalidArgument("weighted_gram: negative weight");
      S(i, j) = std::sqrt(w[i]) * X(i, j);
    }
  MatrixXd G = MatrixXd::Zero(d, d);
  cblas_dsyrk(CblasColMajor, CblasLower, CblasTrans, d, n, 1.0, S.data(), n, 0.0, G.data(), d);
  G.triangularView<Eigen::StrictlyUpper>() = G.transpose();
  return G;
}

MatrixXd weighted_gram_signed(const MatrixXd& X, const VectorXd& w) {
  const int n = static_cast<int>(X.rows());
  const int d = static_cast<int>(X.cols());
  MatrixXd S = X.array().colwise() * w.array();
  MatrixXd G(d, d);
  cblas_dgemm(CblasColMajor, CblasTrans, CblasNoTrans, d, d, n, 1.0, X.data(), n, S.data(), n, 0.0, G.data(), d);
  // symmetrize against rounding in the two triangles
  G = 0.5 * (G + G.transpose()).eval();
  return G;
}

double IncrementalCholesky::append(const std::vector<double>& cov, double var, const std::string& label) {
  const int k = size();
  if (static_cast<int>(cov.size()) != k) throw InvalidArgument("IncrementalCholesky: covariance length mismatch");
  std::vector<double> row(k + 1, 0.0);
  double sumsq = 0.0;
  for (int j = 0; j < k; ++j) {
    const auto& rj = rows_[j];
    double s = cov[j];
    for (int i = 0; i < j; ++i) s -= row[i] * rj[i];
    // a pivot that is tiny relative to the variable's own scale means
    // variable j is a combination of the earlier ones; dividing by it would
    // only amplify rounding
    row[j] = rj[j] > 1e-5 * std::sqrt(vars_[j]) + 1e-150 ? s / rj[j] : 0.0;
    sumsq += row[j] * row[j];
  }
  double resid = var - sumsq;
  const double scale = std::max(1.0, std::abs(var));
  double added = 0.0;
  if (resid < -1e-14 * scale) {
    const double levels[] = {jitter_, 1e-8, 1e-6};
    bool ok = false;
    for (double level : levels) {
      if (resid + level * scale >= 0.0) {
        added = level * scale;
        ok = true;
        break;
      }
    }
    if (!ok) {
      std::ostringstream msg;
      msg << "covariance block '" << label << "' not positive semidefinite at row " << k << ": residual variance "
          << resid << " (var=" << var << ")";
      throw NumericalError(msg.str());
    }
    if (added > jitter_ * scale) {
      std::ostringstream msg;
      msg << "jitter " << added << " needed for covariance block '" << label << "' at row " << k;
      log_warn(msg.str());
    }
  }
  row[k] = std::sqrt(std::max(resid + added, 0.0));
  max_jitter_ = std::max(max_jitter_, added);
  rows_.push_back(std::move(row));
  vars_.push_back(std::max(var, 0.0));
  return added;
}

double min_eigenvalue(const MatrixXd& sym) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(sym, Eigen::EigenvaluesOnly);
  return es.eigenvalues()[0];
}

}  // namespace dmftsim
