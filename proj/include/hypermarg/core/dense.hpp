#pragma once

#include <cmath>
#include <sstream>
#include <string>

#include "hypermarg/core/errors.hpp"
#include "hypermarg/core/types.hpp"

namespace hypermarg {

namespace detail {

inline void check_dense_square(const Mat& a, const char* who) {
  if (a.rows() != a.cols()) throw InvalidArgument(std::string(who) + ": matrix must be square");
  if (a.rows() > kDenseLimit) {
    throw InvalidArgument(std::string(who) + ": dimension " + std::to_string(a.rows()) + " exceeds dense limit");
  }
}

// Returns the 0-based index of the first nonpositive pivot, or -1.
inline Index first_bad_pivot(const Mat& a) {
  const Index m = a.rows();
  Mat l = Mat::Zero(m, m);
  for (Index j = 0; j < m; ++j) {
    double d = a(j, j) - l.row(j).head(j).squaredNorm();
    if (!(d > 0.0)) return j;
    l(j, j) = std::sqrt(d);
    for (Index i = j + 1; i < m; ++i) l(i, j) = (a(i, j) - l.row(i).head(j).dot(l.row(j).head(j))) / l(j, j);
  }
  return -1;
}

[[noreturn]] inline void throw_not_pd(const Mat& a, const char* who) {
  const Index pivot = first_bad_pivot(a);
  std::ostringstream msg;
  msg << who << ": matrix not positive definite";
  if (pivot >= 0) msg << " (Cholesky pivot " << pivot << " nonpositive)";
  throw NumericalFailure(msg.str());
}

}  // namespace detail

/// log det of a dense SPD matrix from its Cholesky factor.
inline double dense_logdet(const Mat& a) {
  detail::check_dense_square(a, "dense_logdet");
  if (a.rows() == 0) return 0.0;
  Eigen::LLT<Mat> llt(a);
  if (llt.info() != Eigen::Success) detail::throw_not_pd(a, "dense_logdet");
  const auto diag = llt.matrixLLT().diagonal();
  if (!(diag.array() > 0.0).all() || !diag.allFinite()) detail::throw_not_pd(a, "dense_logdet");
  return 2.0 * diag.array().log().sum();
}

/// Solves a x = rhs for dense SPD a.
inline Mat dense_spd_solve(const Mat& a, const Mat& rhs) {
  detail::check_dense_square(a, "dense_spd_solve");
  Eigen::LLT<Mat> llt(a);
  if (llt.info() != Eigen::Success) detail::throw_not_pd(a, "dense_spd_solve");
  return llt.solve(rhs);
}

inline Mat dense_spd_inverse(const Mat& a) { return dense_spd_solve(a, Mat::Identity(a.rows(), a.cols())); }

/// f(A) = V f(Lambda) V^T for symmetric A.
template <typename Fn>
Mat dense_sym_function(const Mat& a, Fn&& f) {
  detail::check_dense_square(a, "dense_sym_function");
  Eigen::SelfAdjointEigenSolver<Mat> eig(a);
  if (eig.info() != Eigen::Success) throw NumericalFailure("dense_sym_function: eigensolve failed");
  Vec fv = eig.eigenvalues().unaryExpr([&](double x) { return f(x); });
  return eig.eigenvectors() * fv.asDiagonal() * eig.eigenvectors().transpose();
}

inline Mat dense_logm(const Mat& a) {
  return dense_sym_function(a, [](double x) {
    if (!(x > 0.0)) throw NumericalFailure("dense_logm: nonpositive eigenvalue");
    return std::log(x);
  });
}

inline Vec dense_eigenvalues(const Mat& a) {
  detail::check_dense_square(a, "dense_eigenvalues");
  Eigen::SelfAdjointEigenSolver<Mat> eig(a, Eigen::EigenvaluesOnly);
  if (eig.info() != Eigen::Success) throw NumericalFailure("dense_eigenvalues: eigensolve failed");
  return eig.eigenvalues();
}

}  // namespace hypermarg
