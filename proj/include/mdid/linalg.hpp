#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "mdid/error.hpp"

namespace mdid {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Condition-number thresholds applied before any symmetric solve.
struct ConditionGuard {
  double warn_above = 1e10;
  double error_above = 1e14;
};

using Warnings = std::vector<std::string>;

namespace linalg {

/// Ratio of extreme eigenvalues of a symmetric matrix; +inf when the smallest
/// eigenvalue is not positive. A 0x0 matrix has condition number 1.
inline double condition_number_symmetric(const Matrix& a) {
  if (a.size() == 0) return 1.0;
  Eigen::SelfAdjointEigenSolver<Matrix> es(a, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().maxCoeff();
  if (!(lo > 0.0)) return std::numeric_limits<double>::infinity();
  return hi / lo;
}

/// Cholesky-style PSD test: an LDLT factorization with a relative tolerance
/// on the pivots.
inline bool is_psd(const Matrix& a, double rel_tol = 1e-12) {
  if (a.size() == 0) return true;
  const double scale = std::max(1.0, a.diagonal().cwiseAbs().maxCoeff());
  if ((a - a.transpose()).cwiseAbs().maxCoeff() > rel_tol * scale) return false;
  Eigen::LDLT<Matrix> ldlt(a);
  if (ldlt.info() != Eigen::Success) return false;
  return ldlt.vectorD().minCoeff() >= -rel_tol * scale;
}

inline bool is_pd(const Matrix& a) {
  if (a.size() == 0) return true;
  Eigen::LLT<Matrix> llt(a);
  return llt.info() == Eigen::Success;
}

/// Returns L with L L^T = a for a symmetric PSD matrix. Uses Cholesky when
/// possible and falls back to an eigen-decomposition with clipped spectrum for
/// semidefinite input.
inline Matrix psd_factor(const Matrix& a) {
  if (a.size() == 0) return Matrix(a.rows(), a.cols());
  Eigen::LLT<Matrix> llt(a);
  if (llt.info() == Eigen::Success) return llt.matrixL();
  Eigen::SelfAdjointEigenSolver<Matrix> es(a);
  const Vector d = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * d.asDiagonal();
}

inline double spectral_norm(const Matrix& a) {
  if (a.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(a);
  return svd.singularValues()(0);
}

/// Factorization of a symmetric positive-definite matrix behind a
/// condition-number guard. Errors carry the name of the matrix and its
/// condition number.
class SpdSolver {
 public:
  SpdSolver(const Matrix& a, std::string_view what, const ConditionGuard& guard = {},
            Warnings* warnings = nullptr)
      : llt_(a) {
    cond_ = condition_number_symmetric(a);
    if (!(cond_ <= guard.error_above) || llt_.info() != Eigen::Success) {
      std::ostringstream os;
      os << "singular or ill-conditioned " << what << " (condition number " << cond_ << ")";
      throw NumericalError(os.str());
    }
    if (cond_ > guard.warn_above && warnings != nullptr) {
      std::ostringstream os;
      os << "ill-conditioned " << what << " (condition number " << cond_ << ")";
      warnings->push_back(os.str());
    }
  }

  [[nodiscard]] Matrix solve(const Matrix& b) const { return llt_.solve(b); }
  [[nodiscard]] Vector solve(const Vector& b) const { return llt_.solve(b); }
  [[nodiscard]] double condition_number() const noexcept { return cond_; }

 private:
  Eigen::LLT<Matrix> llt_;
  double cond_ = 1.0;
};

}  // namespace linalg
}  // namespace mdid
