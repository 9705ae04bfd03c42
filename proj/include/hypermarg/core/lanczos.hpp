#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>
#include <string>

#include "hypermarg/core/errors.hpp"
#include "hypermarg/core/sym_op.hpp"
#include "hypermarg/core/types.hpp"

namespace hypermarg {

/// K-step Lanczos decomposition M V = V T + beta_K v_{K+1} e_K^T.
struct LanczosDecomp {
  Mat basis;  // m x K, orthonormal columns
  Vec alpha;  // diagonal of T
  Vec beta;   // off-diagonal of T, length K-1
  // 1-based step at which the next off-diagonal vanished; the decomposition
  // is truncated there.
  std::optional<Index> breakdown_step;
  double norm_estimate = 0.0;

  Index steps() const { return alpha.size(); }

  Mat tridiagonal() const {
    const Index k = steps();
    Mat t = Mat::Zero(k, k);
    for (Index i = 0; i < k; ++i) t(i, i) = alpha[i];
    for (Index i = 0; i + 1 < k; ++i) t(i, i + 1) = t(i + 1, i) = beta[i];
    return t;
  }
};

// Relative threshold on beta_j against the running norm estimate.
inline constexpr double kLanczosBreakdownTol = 1e-12;

inline LanczosDecomp lanczos_decompose(const SymOp& op, const Vec& start, Index steps, bool reorthogonalize = true) {
  const Index m = op.dim();
  if (start.size() != m) throw InvalidArgument("lanczos_decompose: start vector has wrong length");
  if (steps < 1 || steps > m) {
    throw InvalidArgument("lanczos_decompose: need 1 <= K <= m (K=" + std::to_string(steps) +
                          ", m=" + std::to_string(m) + ")");
  }
  const double start_norm = start.norm();
  if (!(start_norm > 0.0)) throw InvalidArgument("lanczos_decompose: zero start vector");

  Mat v(m, steps);
  Vec alpha(steps);
  Vec beta(std::max<Index>(steps - 1, 0));
  v.col(0) = start / start_norm;

  LanczosDecomp out;
  double norm_est = 0.0;
  Index done = 0;
  for (Index j = 0; j < steps; ++j) {
    Vec w;
    if (j == 0) {
      // Rayleigh quotient of the raw start vector keeps alpha_1 exact for scalar operators.
      const Vec ms = op.matvec(start);
      alpha[0] = start.dot(ms) / start.squaredNorm();
      w = ms / start_norm;
    } else {
      w = op.matvec(v.col(j));
      alpha[j] = v.col(j).dot(w);
    }
    if (!w.allFinite()) throw NumericalFailure("lanczos_decompose: non-finite matvec at step " + std::to_string(j + 1));
    w -= alpha[j] * v.col(j);
    if (j > 0) w -= beta[j - 1] * v.col(j - 1);
    if (reorthogonalize) {
      // two passes of classical Gram-Schmidt
      for (int pass = 0; pass < 2; ++pass) {
        const Vec coeffs = v.leftCols(j + 1).transpose() * w;
        w -= v.leftCols(j + 1) * coeffs;
      }
    }
    const double b = w.norm();
    norm_est = std::max(norm_est, std::abs(alpha[j]) + b + (j > 0 ? beta[j - 1] : 0.0));
    done = j + 1;
    if (j + 1 == steps) break;
    if (b <= kLanczosBreakdownTol * norm_est) {
      out.breakdown_step = j + 1;
      break;
    }
    beta[j] = b;
    v.col(j + 1) = w / b;
  }

  out.basis = v.leftCols(done);
  out.alpha = alpha.head(done);
  out.beta = beta.head(std::max<Index>(done - 1, 0));
  out.norm_estimate = norm_est;
  return out;
}

namespace detail {

struct RitzPairs {
  Vec values;
  Mat vectors;
};

inline RitzPairs ritz_pairs(const LanczosDecomp& d) {
  Eigen::SelfAdjointEigenSolver<Mat> eig;
  eig.computeFromTridiagonal(d.alpha, d.beta, Eigen::ComputeEigenvectors);
  if (eig.info() != Eigen::Success) throw NumericalFailure("lanczos: tridiagonal eigensolve failed");
  return {eig.eigenvalues(), eig.eigenvectors()};
}

inline void require_positive_ritz(const Vec& values, const char* who) {
  for (Index i = 0; i < values.size(); ++i) {
    if (!(values[i] > 0.0)) {
      std::ostringstream msg;
      msg.precision(10);
      msg << who << ": tridiagonal matrix not positive definite, Ritz value " << values[i];
      throw NumericalFailure(msg.str());
    }
  }
}

}  // namespace detail

/// Gauss quadrature estimate of w^T f(M) w from K Lanczos steps:
/// ||w||^2 e1^T f(T_K) e1.
template <typename Fn>
double lanczos_quadform(const SymOp& op, const Vec& w, Index steps, Fn&& f, bool reorthogonalize = true) {
  const double w2 = w.squaredNorm();
  if (w2 == 0.0) return 0.0;
  const auto decomp = lanczos_decompose(op, w, std::min(steps, op.dim()), reorthogonalize);
  const auto ritz = detail::ritz_pairs(decomp);
  double acc = 0.0;
  for (Index k = 0; k < ritz.values.size(); ++k) {
    const double tau = ritz.vectors(0, k);
    acc += tau * tau * f(ritz.values[k]);
  }
  return w2 * acc;
}

/// SLQ quadratic form ||w||^2 e1^T log(T_K) e1 for SPD op.
inline double lanczos_quadform_log(const SymOp& op, const Vec& w, Index steps, bool reorthogonalize = true) {
  const double w2 = w.squaredNorm();
  if (w2 == 0.0) return 0.0;
  const auto decomp = lanczos_decompose(op, w, std::min(steps, op.dim()), reorthogonalize);
  const auto ritz = detail::ritz_pairs(decomp);
  detail::require_positive_ritz(ritz.values, "lanczos_quadform_log");
  double acc = 0.0;
  for (Index k = 0; k < ritz.values.size(); ++k) {
    const double tau = ritz.vectors(0, k);
    acc += tau * tau * std::log(ritz.values[k]);
  }
  return w2 * acc;
}

/// op^{-1/2} w approximated by ||w|| V_K T_K^{-1/2} e1.
inline Vec lanczos_inv_sqrt_apply(const SymOp& op, const Vec& w, Index steps, bool reorthogonalize = true) {
  const double wn = w.norm();
  if (wn == 0.0) return Vec::Zero(w.size());
  const auto decomp = lanczos_decompose(op, w, std::min(steps, op.dim()), reorthogonalize);
  const auto ritz = detail::ritz_pairs(decomp);
  detail::require_positive_ritz(ritz.values, "lanczos_inv_sqrt_apply");
  const Vec first = ritz.vectors.row(0).transpose();
  const Vec coeff = ritz.vectors * first.cwiseProduct(ritz.values.cwiseSqrt().cwiseInverse());
  return wn * (decomp.basis * coeff);
}

}  // namespace hypermarg
