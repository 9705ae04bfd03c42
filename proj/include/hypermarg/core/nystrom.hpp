#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>

#include "hypermarg/core/errors.hpp"
#include "hypermarg/core/probes.hpp"
#include "hypermarg/core/sym_op.hpp"
#include "hypermarg/core/types.hpp"

namespace hypermarg {

/// Low-rank-plus-shift approximation of an SPD operator
///
///     P = D^{1/2} (U diag(lambda) U^T + mu I) D^{1/2}
///
/// with U orthonormal (m x k, k <= sketch rank) and D an optional positive
/// whitening diagonal (identity when absent).
///
/// apply_inverse applies P^{-1}. apply_inverse_sqrt applies a factor G with
/// G^T G = P^{-1}; G = S D^{-1/2} where S is the symmetric inverse square
/// root of the bracket, so G is symmetric only when D is absent.
class Preconditioner {
 public:
  Preconditioner(Mat basis, Vec eigenvalues, double shift, Index sketch_rank, std::optional<Vec> whitening = {})
      : basis_(std::move(basis)),
        eigenvalues_(std::move(eigenvalues)),
        shift_(shift),
        sketch_rank_(sketch_rank),
        whitening_(std::move(whitening)) {
    if (!(shift_ > 0.0)) throw InvalidArgument("Preconditioner: shift must be positive");
    if (basis_.cols() != eigenvalues_.size()) throw InvalidArgument("Preconditioner: basis/eigenvalue mismatch");
    if (whitening_) {
      if (whitening_->size() != basis_.rows()) throw InvalidArgument("Preconditioner: whitening length mismatch");
      if (!(whitening_->array() > 0.0).all()) throw InvalidArgument("Preconditioner: whitening must be positive");
      inv_sqrt_whitening_ = whitening_->cwiseSqrt().cwiseInverse();
    }
  }

  Index dim() const { return basis_.rows(); }
  Index rank() const { return basis_.cols(); }
  Index sketch_rank() const { return sketch_rank_; }
  double shift() const { return shift_; }
  const Mat& basis() const { return basis_; }
  const Vec& eigenvalues() const { return eigenvalues_; }
  const std::optional<Vec>& whitening() const { return whitening_; }

  Vec apply_inverse(const Vec& v) const {
    check(v);
    return unwhiten(bracket_power(unwhiten(v), -1.0));
  }

  /// G v.
  Vec apply_inverse_sqrt(const Vec& v) const {
    check(v);
    return bracket_power(unwhiten(v), -0.5);
  }

  /// G^T v.
  Vec apply_inverse_sqrt_transpose(const Vec& v) const {
    check(v);
    return unwhiten(bracket_power(v, -0.5));
  }

  /// log det P.
  double logdet_of_approximation() const {
    double out = static_cast<double>(dim() - rank()) * std::log(shift_);
    for (Index i = 0; i < rank(); ++i) out += std::log(eigenvalues_[i] + shift_);
    if (whitening_) out += whitening_->array().log().sum();
    return out;
  }

  /// P as a dense matrix (tests only).
  Mat to_dense() const {
    Mat core = basis_ * eigenvalues_.asDiagonal() * basis_.transpose();
    core.diagonal().array() += shift_;
    if (!whitening_) return core;
    const Vec s = whitening_->cwiseSqrt();
    return s.asDiagonal() * core * s.asDiagonal();
  }

 private:
  void check(const Vec& v) const {
    if (v.size() != dim()) throw InvalidArgument("Preconditioner: vector length mismatch");
  }

  Vec unwhiten(const Vec& v) const { return whitening_ ? Vec(inv_sqrt_whitening_.cwiseProduct(v)) : v; }

  // (U diag(lambda) U^T + mu I)^power v
  Vec bracket_power(const Vec& v, double power) const {
    const double mu_pow = std::pow(shift_, power);
    if (rank() == 0) return mu_pow * v;
    const Vec coeffs = basis_.transpose() * v;
    Vec scaled(coeffs.size());
    for (Index i = 0; i < coeffs.size(); ++i) scaled[i] = (std::pow(eigenvalues_[i] + shift_, power) - mu_pow) * coeffs[i];
    return mu_pow * v + basis_ * scaled;
  }

  Mat basis_;
  Vec eigenvalues_;
  double shift_;
  Index sketch_rank_;
  std::optional<Vec> whitening_;
  Vec inv_sqrt_whitening_;
};

/// Randomized Nystrom approximation of (D^{-1/2} op D^{-1/2} - mu I) from an
/// orthonormalized Gaussian sketch of width `sketch_rank`. Costs
/// `sketch_rank` matvecs with op.
inline Preconditioner nystrom_preconditioner(const SymOp& op, double shift, Index sketch_rank, std::uint64_t seed,
                                             std::optional<Vec> whitening = {}) {
  const Index m = op.dim();
  if (!(shift > 0.0)) throw InvalidArgument("nystrom_preconditioner: shift must be positive");
  if (sketch_rank < 1 || sketch_rank >= m) {
    throw InvalidArgument("nystrom_preconditioner: need 1 <= sketch rank < m (got " + std::to_string(sketch_rank) + ")");
  }
  if (whitening && (whitening->size() != m || !(whitening->array() > 0.0).all())) {
    throw InvalidArgument("nystrom_preconditioner: whitening diagonal must be positive with length m");
  }
  const Vec inv_sqrt_d = whitening ? Vec(whitening->cwiseSqrt().cwiseInverse()) : Vec::Ones(m);

  Mat omega = Eigen::HouseholderQR<Mat>(gaussian_matrix(m, sketch_rank, seed)).householderQ() *
              Mat::Identity(m, sketch_rank);
  Mat y(m, sketch_rank);
  for (Index j = 0; j < sketch_rank; ++j) {
    y.col(j) = inv_sqrt_d.cwiseProduct(op.matvec(inv_sqrt_d.cwiseProduct(omega.col(j)))) - shift * omega.col(j);
  }
  if (!y.allFinite()) throw NumericalFailure("nystrom_preconditioner: non-finite sketch");

  // Y (Omega^T Y)^+ Y^T = B B^T
  Mat core = omega.transpose() * y;
  core = 0.5 * (core + core.transpose());
  Eigen::SelfAdjointEigenSolver<Mat> eig(core);
  const Vec& c = eig.eigenvalues();
  const double cmax = c.cwiseAbs().maxCoeff();
  Index keep = 0;
  for (Index i = 0; i < c.size(); ++i)
    if (c[i] > 1e-12 * cmax && cmax > 0.0) ++keep;
  if (keep == 0) return Preconditioner(Mat(m, 0), Vec(0), shift, sketch_rank, std::move(whitening));

  Mat b(m, keep);
  Index col = 0;
  for (Index i = 0; i < c.size(); ++i) {
    if (c[i] > 1e-12 * cmax && cmax > 0.0) b.col(col++) = y * eig.eigenvectors().col(i) / std::sqrt(c[i]);
  }
  Eigen::JacobiSVD<Mat> svd(b, Eigen::ComputeThinU);
  Vec lambda = svd.singularValues().array().square();
  return Preconditioner(svd.matrixU(), lambda, shift, sketch_rank, std::move(whitening));
}

}  // namespace hypermarg
