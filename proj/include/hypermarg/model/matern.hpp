#pragma once

#include <cmath>

#include "hypermarg/core/errors.hpp"
#include "hypermarg/core/sym_op.hpp"
#include "hypermarg/core/types.hpp"

namespace hypermarg {

/// Half-integer Matern smoothness values with closed forms.
enum class MaternNu { half, three_halves, five_halves };

inline double matern_nu_value(MaternNu nu) {
  switch (nu) {
    case MaternNu::half:
      return 0.5;
    case MaternNu::three_halves:
      return 1.5;
    case MaternNu::five_halves:
      return 2.5;
  }
  return 0.5;
}

inline MaternNu matern_nu_from(double nu) {
  if (nu == 0.5) return MaternNu::half;
  if (nu == 1.5) return MaternNu::three_halves;
  if (nu == 2.5) return MaternNu::five_halves;
  throw InvalidArgument("matern: nu must be 0.5, 1.5 or 2.5");
}

namespace detail {

// Unit-variance correlation and its derivative in the length scale.
struct MaternValue {
  double k;
  double dk_dlength;
};

inline MaternValue matern_unit(double dist, double length, MaternNu nu) {
  switch (nu) {
    case MaternNu::half: {
      const double s = dist / length;
      const double e = std::exp(-s);
      return {e, s * e / length};
    }
    case MaternNu::three_halves: {
      const double s = std::sqrt(3.0) * dist / length;
      const double e = std::exp(-s);
      return {(1.0 + s) * e, s * s * e / length};
    }
    case MaternNu::five_halves: {
      const double s = std::sqrt(5.0) * dist / length;
      const double e = std::exp(-s);
      return {(1.0 + s + s * s / 3.0) * e, s * s * (1.0 + s) * e / (3.0 * length)};
    }
  }
  return {0.0, 0.0};
}

inline void check_matern_args(double sigma, double length) {
  if (!(sigma > 0.0)) throw InvalidArgument("matern: standard deviation must be positive");
  if (!(length > 0.0)) throw InvalidArgument("matern: length scale must be positive");
}

}  // namespace detail

/// Dense Matern covariance sigma^2 k(|r - r'| / length) over the rows of `points`.
inline Mat matern_dense(const Mat& points, double sigma, double length, MaternNu nu) {
  detail::check_matern_args(sigma, length);
  const Index n = points.rows();
  Mat k(n, n);
  const double s2 = sigma * sigma;
  for (Index i = 0; i < n; ++i) {
    k(i, i) = s2;
    for (Index j = 0; j < i; ++j) {
      const double d = (points.row(i) - points.row(j)).norm();
      k(i, j) = k(j, i) = s2 * detail::matern_unit(d, length, nu).k;
    }
  }
  return k;
}

/// d/d sigma of matern_dense.
inline Mat matern_dense_dsigma(const Mat& points, double sigma, double length, MaternNu nu) {
  return (2.0 / sigma) * matern_dense(points, sigma, length, nu);
}

/// d/d length of matern_dense.
inline Mat matern_dense_dlength(const Mat& points, double sigma, double length, MaternNu nu) {
  detail::check_matern_args(sigma, length);
  const Index n = points.rows();
  Mat k = Mat::Zero(n, n);
  const double s2 = sigma * sigma;
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < i; ++j) {
      const double d = (points.row(i) - points.row(j)).norm();
      k(i, j) = k(j, i) = s2 * detail::matern_unit(d, length, nu).dk_dlength;
    }
  }
  return k;
}

inline SymOp matern_cov(const Mat& points, double sigma, double length, MaternNu nu,
                        std::shared_ptr<Counter> counter = nullptr) {
  return SymOp::from_dense(matern_dense(points, sigma, length, nu), std::move(counter));
}

}  // namespace hypermarg
