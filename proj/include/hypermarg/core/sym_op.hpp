#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <utility>

#include "hypermarg/core/errors.hpp"
#include "hypermarg/core/types.hpp"

namespace hypermarg {

using Counter = std::atomic<std::int64_t>;

inline std::shared_ptr<Counter> make_counter() { return std::make_shared<Counter>(0); }

/// Matrix-free symmetric operator of dimension m.
///
/// Copies share the apply function and the counter. The counter may be shared
/// with other operators (e.g. a problem-wide ledger); every matvec() adds
/// exactly one to it. apply functions must be safe to call concurrently.
class SymOp {
 public:
  using Apply = std::function<Vec(const Vec&)>;

  SymOp() = default;

  SymOp(Index dim, Apply apply, std::shared_ptr<Counter> counter = nullptr)
      : dim_(dim), apply_(std::move(apply)), counter_(counter ? std::move(counter) : make_counter()) {
    if (dim_ <= 0) throw InvalidArgument("SymOp: dimension must be positive");
  }

  Index dim() const { return dim_; }

  Vec matvec(const Vec& v) const {
    if (v.size() != dim_) {
      throw InvalidArgument("SymOp::matvec: expected length " + std::to_string(dim_) + ", got " +
                            std::to_string(v.size()));
    }
    counter_->fetch_add(1, std::memory_order_relaxed);
    return apply_(v);
  }

  std::int64_t matvec_count() const { return counter_->load(std::memory_order_relaxed); }
  const std::shared_ptr<Counter>& counter() const { return counter_; }

  /// Dense materialization by m matvecs against unit vectors.
  Mat to_dense(Index dense_limit = kDenseLimit) const {
    if (dim_ > dense_limit) {
      throw InvalidArgument("SymOp::to_dense: dimension " + std::to_string(dim_) + " exceeds dense limit " +
                            std::to_string(dense_limit));
    }
    Mat out(dim_, dim_);
    Vec e = Vec::Zero(dim_);
    for (Index j = 0; j < dim_; ++j) {
      e[j] = 1.0;
      out.col(j) = matvec(e);
      e[j] = 0.0;
    }
    return out;
  }

  static SymOp from_dense(Mat matrix, std::shared_ptr<Counter> counter = nullptr) {
    if (matrix.rows() != matrix.cols()) throw InvalidArgument("SymOp::from_dense: matrix must be square");
    auto shared = std::make_shared<const Mat>(std::move(matrix));
    const Index m = shared->rows();
    return SymOp(m, [shared](const Vec& v) -> Vec { return (*shared) * v; }, std::move(counter));
  }

  static SymOp diagonal(Vec diag, std::shared_ptr<Counter> counter = nullptr) {
    auto shared = std::make_shared<const Vec>(std::move(diag));
    const Index m = shared->size();
    return SymOp(m, [shared](const Vec& v) -> Vec { return shared->cwiseProduct(v); }, std::move(counter));
  }

  static SymOp scaled_identity(Index dim, double scale, std::shared_ptr<Counter> counter = nullptr) {
    return SymOp(dim, [scale](const Vec& v) -> Vec { return scale * v; }, std::move(counter));
  }

  static SymOp identity(Index dim, std::shared_ptr<Counter> counter = nullptr) {
    return scaled_identity(dim, 1.0, std::move(counter));
  }

 private:
  Index dim_ = 0;
  Apply apply_;
  std::shared_ptr<Counter> counter_;
};

/// Matrix-free rectangular operator rows x cols with a transpose action.
/// Forward and transpose applications both add one to the counter.
class LinearMap {
 public:
  using Apply = std::function<Vec(const Vec&)>;

  LinearMap() = default;

  LinearMap(Index rows, Index cols, Apply forward, Apply transpose, std::shared_ptr<Counter> counter = nullptr)
      : rows_(rows),
        cols_(cols),
        forward_(std::move(forward)),
        transpose_(std::move(transpose)),
        counter_(counter ? std::move(counter) : make_counter()) {}

  Index rows() const { return rows_; }
  Index cols() const { return cols_; }

  Vec apply(const Vec& x) const {
    if (x.size() != cols_) throw InvalidArgument("LinearMap::apply: dimension mismatch");
    counter_->fetch_add(1, std::memory_order_relaxed);
    return forward_(x);
  }

  Vec apply_transpose(const Vec& y) const {
    if (y.size() != rows_) throw InvalidArgument("LinearMap::apply_transpose: dimension mismatch");
    counter_->fetch_add(1, std::memory_order_relaxed);
    return transpose_(y);
  }

  std::int64_t matvec_count() const { return counter_->load(std::memory_order_relaxed); }
  const std::shared_ptr<Counter>& counter() const { return counter_; }

  Mat to_dense() const {
    Mat out(rows_, cols_);
    Vec e = Vec::Zero(cols_);
    for (Index j = 0; j < cols_; ++j) {
      e[j] = 1.0;
      out.col(j) = apply(e);
      e[j] = 0.0;
    }
    return out;
  }

  static LinearMap from_sparse(std::shared_ptr<const SparseRM> matrix, std::shared_ptr<Counter> counter = nullptr) {
    auto transposed = std::make_shared<const SparseRM>(matrix->transpose());
    return LinearMap(
        matrix->rows(), matrix->cols(), [matrix](const Vec& x) -> Vec { return (*matrix) * x; },
        [transposed](const Vec& y) -> Vec { return (*transposed) * y; }, std::move(counter));
  }

  static LinearMap from_dense(Mat matrix, std::shared_ptr<Counter> counter = nullptr) {
    auto shared = std::make_shared<const Mat>(std::move(matrix));
    return LinearMap(
        shared->rows(), shared->cols(), [shared](const Vec& x) -> Vec { return (*shared) * x; },
        [shared](const Vec& y) -> Vec { return shared->transpose() * y; }, std::move(counter));
  }

 private:
  Index rows_ = 0;
  Index cols_ = 0;
  Apply forward_;
  Apply transpose_;
  std::shared_ptr<Counter> counter_;
};

}  // namespace hypermarg
