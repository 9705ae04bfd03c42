#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hypermarg/core/errors.hpp"
#include "hypermarg/core/nystrom.hpp"
#include "hypermarg/core/pcg.hpp"
#include "hypermarg/core/sym_op.hpp"
#include "hypermarg/core/types.hpp"
#include "hypermarg/model/box.hpp"
#include "hypermarg/model/hyperprior.hpp"

namespace hypermarg {

/// Problem-wide operation counters. Copies share the same counters.
struct Ledger {
  std::shared_ptr<Counter> a = make_counter();    // forward and transpose applications of A(y), dA
  std::shared_ptr<Counter> q = make_counter();    // prior covariance applications, dQ
  std::shared_ptr<Counter> psi = make_counter();  // Psi(theta) matvecs
  std::shared_ptr<Counter> pcg = make_counter();  // PCG iterations

  struct Snapshot {
    std::int64_t a = 0, q = 0, psi = 0, pcg = 0;
    Snapshot operator-(const Snapshot& o) const { return {a - o.a, q - o.q, psi - o.psi, pcg - o.pcg}; }
  };

  Snapshot snapshot() const { return {a->load(), q->load(), psi->load(), pcg->load()}; }
  void add_pcg(Index iterations) const { pcg->fetch_add(iterations, std::memory_order_relaxed); }
};

/// Analytic pieces of dPsi/dtheta_j = dA Q A^T + A Q dA^T + A dQ A^T + diag(dR).
/// Absent pieces are zero.
struct PsiDerivativeParts {
  std::optional<LinearMap> forward;
  std::optional<SymOp> prior_cov;
  std::optional<Vec> noise_diag;
};

/// Hierarchical linear inverse problem b = A(y) x + e with x ~ N(mu, Q(psi)),
/// e ~ N(0, R(psi)), R diagonal, theta = [psi; y] ~ hyperprior on a box.
struct ProblemSpec {
  std::string name;
  Index n = 0;      // unknowns
  Index m = 0;      // data
  Index n_psi = 0;  // distribution hyperparameters
  Index n_y = 0;    // model hyperparameters

  std::function<LinearMap(const Vec&)> forward_builder;
  std::function<SymOp(const Vec&)> prior_cov_builder;
  std::function<Vec(const Vec&)> noise_builder;  // diagonal of R
  // nullopt (or an empty function) means no analytic derivative for component j.
  std::function<std::optional<PsiDerivativeParts>(const Vec&, Index)> derivative_builder;

  Vec prior_mean;
  Vec data;
  HyperPrior hyperprior;
  Box box;
  std::optional<Vec> x_true;
  std::optional<Vec> theta_true;
  Ledger ledger;

  Index p() const { return n_psi + n_y; }

  void check_theta(const Vec& theta) const {
    if (theta.size() != p()) {
      throw InvalidArgument(name + ": expected " + std::to_string(p()) + " hyperparameters, got " +
                            std::to_string(theta.size()));
    }
  }

  /// A(y), counted on the ledger.
  LinearMap forward(const Vec& theta) const {
    check_theta(theta);
    LinearMap raw = forward_builder(theta);
    if (raw.rows() != m || raw.cols() != n) throw InvalidArgument(name + ": forward operator must map n -> m");
    return LinearMap(
        m, n, [raw](const Vec& x) { return raw.apply(x); }, [raw](const Vec& y) { return raw.apply_transpose(y); },
        ledger.a);
  }

  /// Q(psi), counted on the ledger.
  SymOp prior_cov(const Vec& theta) const {
    check_theta(theta);
    SymOp raw = prior_cov_builder(theta);
    if (raw.dim() != n) throw InvalidArgument(name + ": prior covariance must be n x n");
    return SymOp(n, [raw](const Vec& v) { return raw.matvec(v); }, ledger.q);
  }

  Vec noise_diag(const Vec& theta) const {
    check_theta(theta);
    Vec r = noise_builder(theta);
    if (r.size() != m) throw InvalidArgument(name + ": noise covariance must be m x m");
    if (!(r.array() > 0.0).all()) throw NumericalFailure(name + ": noise covariance not positive definite");
    return r;
  }

  std::optional<PsiDerivativeParts> derivative(const Vec& theta, Index j) const {
    check_theta(theta);
    if (j < 0 || j >= p()) throw InvalidArgument(name + ": derivative index out of range");
    if (!derivative_builder) return std::nullopt;
    auto parts = derivative_builder(theta, j);
    if (!parts) return std::nullopt;
    PsiDerivativeParts out;
    if (parts->forward) {
      LinearMap raw = *parts->forward;
      out.forward = LinearMap(
          m, n, [raw](const Vec& x) { return raw.apply(x); }, [raw](const Vec& y) { return raw.apply_transpose(y); },
          ledger.a);
    }
    if (parts->prior_cov) {
      SymOp raw = *parts->prior_cov;
      out.prior_cov = SymOp(n, [raw](const Vec& v) { return raw.matvec(v); }, ledger.q);
    }
    out.noise_diag = parts->noise_diag;
    return out;
  }

  /// A(y) mu - b.
  Vec residual_at_prior_mean(const LinearMap& a) const { return a.apply(prior_mean) - data; }
};

/// Psi(theta) = A Q A^T + R as a matrix-free operator. One matvec costs two
/// A applications and one Q application.
struct PsiOperator {
  Vec theta;
  LinearMap forward;
  SymOp prior_cov;
  Vec noise;
  SymOp op;

  Index dim() const { return op.dim(); }

  /// A Q A^T + R assembled from dense factors (symmetrized).
  Mat dense() const {
    if (forward.rows() > kDenseLimit || forward.cols() > kDenseLimit) {
      throw InvalidArgument("PsiOperator::dense: problem exceeds dense limit");
    }
    const Mat a = forward.to_dense();
    const Mat q = prior_cov.to_dense();
    Mat out = a * (q * a.transpose());
    out = 0.5 * (out + out.transpose());
    out.diagonal() += noise;
    return out;
  }
};

inline PsiOperator build_psi(const ProblemSpec& problem, const Vec& theta) {
  PsiOperator out;
  out.theta = theta;
  out.forward = problem.forward(theta);
  out.prior_cov = problem.prior_cov(theta);
  out.noise = problem.noise_diag(theta);
  if (out.forward.rows() != out.noise.size() || out.forward.cols() != out.prior_cov.dim()) {
    throw InvalidArgument("build_psi: dimension mismatch");
  }
  const LinearMap a = out.forward;
  const SymOp q = out.prior_cov;
  const auto r = std::make_shared<const Vec>(out.noise);
  out.op = SymOp(
      problem.m, [a, q, r](const Vec& v) -> Vec { return a.apply(q.matvec(a.apply_transpose(v))) + r->cwiseProduct(v); },
      problem.ledger.psi);
  return out;
}

inline Mat psi_dense(const ProblemSpec& problem, const Vec& theta) { return build_psi(problem, theta).dense(); }

/// Actions of dPsi/dtheta_j and dA/dtheta_j at a fixed theta, analytic where
/// the problem supplies derivative parts, forward differences otherwise.
class PsiJacobian {
 public:
  enum class Mode { automatic, analytic, finite_difference };

  PsiJacobian(const ProblemSpec& problem, const Vec& theta, Mode mode = Mode::automatic, double fd_rel = 1e-6)
      : problem_(&problem), base_(build_psi(problem, theta)) {
    const Index p = problem.p();
    parts_.resize(static_cast<std::size_t>(p));
    shifted_.resize(static_cast<std::size_t>(p));
    steps_.assign(static_cast<std::size_t>(p), 0.0);
    for (Index j = 0; j < p; ++j) {
      const auto js = static_cast<std::size_t>(j);
      if (mode != Mode::finite_difference) parts_[js] = problem.derivative(theta, j);
      if (!parts_[js]) {
        if (mode == Mode::analytic) {
          throw InvalidArgument(problem.name + ": no derivative builder for hyperparameter component " + std::to_string(j));
        }
        steps_[js] = one_sided_step(problem.box, theta, j, fd_rel);
        Vec shifted = theta;
        shifted[j] += steps_[js];
        shifted_[js] = build_psi(problem, shifted);
      }
    }
  }

  Index dim() const { return static_cast<Index>(parts_.size()); }
  const PsiOperator& psi() const { return base_; }
  bool is_analytic(Index j) const { return parts_[static_cast<std::size_t>(j)].has_value(); }

  /// dPsi/dtheta_j v
  Vec apply(Index j, const Vec& v) const {
    const auto js = static_cast<std::size_t>(j);
    if (!parts_[js]) return (shifted_[js]->op.matvec(v) - base_.op.matvec(v)) / steps_[js];
    const auto& d = *parts_[js];
    Vec out = Vec::Zero(v.size());
    if (d.forward || d.prior_cov) {
      const Vec atv = base_.forward.apply_transpose(v);
      if (d.forward) {
        out += d.forward->apply(base_.prior_cov.matvec(atv));
        out += base_.forward.apply(base_.prior_cov.matvec(d.forward->apply_transpose(v)));
      }
      if (d.prior_cov) out += base_.forward.apply(d.prior_cov->matvec(atv));
    }
    if (d.noise_diag) out += d.noise_diag->cwiseProduct(v);
    return out;
  }

  /// dA/dtheta_j x
  Vec forward_apply(Index j, const Vec& x) const {
    const auto js = static_cast<std::size_t>(j);
    if (!parts_[js]) return (shifted_[js]->forward.apply(x) - base_.forward.apply(x)) / steps_[js];
    const auto& d = *parts_[js];
    if (!d.forward) return Vec::Zero(base_.forward.rows());
    return d.forward->apply(x);
  }

  /// Dense dPsi/dtheta_j for every j.
  std::vector<Mat> dense_all() const {
    const Mat a = base_.forward.to_dense();
    const Mat q = base_.prior_cov.to_dense();
    const Mat base_dense = needs_fd() ? base_.dense() : Mat();
    std::vector<Mat> out;
    for (Index j = 0; j < dim(); ++j) {
      const auto js = static_cast<std::size_t>(j);
      if (!parts_[js]) {
        out.push_back((shifted_[js]->dense() - base_dense) / steps_[js]);
        continue;
      }
      const auto& d = *parts_[js];
      Mat dj = Mat::Zero(a.rows(), a.rows());
      if (d.forward) {
        const Mat da = d.forward->to_dense();
        const Mat half = da * (q * a.transpose());
        dj += half + half.transpose();
      }
      if (d.prior_cov) dj += a * (d.prior_cov->to_dense() * a.transpose());
      dj = 0.5 * (dj + dj.transpose());
      if (d.noise_diag) dj.diagonal() += *d.noise_diag;
      out.push_back(std::move(dj));
    }
    return out;
  }

 private:
  bool needs_fd() const {
    for (const auto& p : parts_)
      if (!p) return true;
    return false;
  }

  const ProblemSpec* problem_;
  PsiOperator base_;
  std::vector<std::optional<PsiDerivativeParts>> parts_;
  std::vector<std::optional<PsiOperator>> shifted_;
  std::vector<double> steps_;
};

/// Nystrom preconditioner for Psi: shift = R when R is a multiple of the
/// identity, otherwise whitening by R and unit shift.
inline Preconditioner psi_preconditioner(const PsiOperator& psi, Index sketch_rank, std::uint64_t seed) {
  const double r0 = psi.noise[0];
  const bool scalar = (psi.noise.array() == r0).all();
  const Index rank = std::min<Index>(sketch_rank, psi.dim() - 1);
  if (rank < 1) return Preconditioner(Mat(psi.dim(), 0), Vec(0), scalar ? r0 : 1.0, 0, scalar ? std::nullopt : std::optional<Vec>(psi.noise));
  if (scalar) return nystrom_preconditioner(psi.op, r0, rank, seed);
  return nystrom_preconditioner(psi.op, 1.0, rank, seed, psi.noise);
}

struct Reconstruction {
  Vec x;
  PcgResult solve;
};

/// Posterior mean mu + Q A^T Psi^{-1} (b - A mu).
inline Reconstruction posterior_mean(const ProblemSpec& problem, const Vec& theta, const Preconditioner* pre = nullptr,
                                     const PcgOptions& opts = {}) {
  const PsiOperator psi = build_psi(problem, theta);
  const Vec rhs = problem.data - psi.forward.apply(problem.prior_mean);
  Reconstruction out;
  out.solve = pcg_solve(psi.op, rhs, pre, opts);
  problem.ledger.add_pcg(out.solve.iterations);
  if (!out.solve.converged) throw NumericalFailure(problem.name + ": reconstruction solve did not converge");
  out.x = problem.prior_mean + psi.prior_cov.matvec(psi.forward.apply_transpose(out.solve.x));
  return out;
}

inline double relative_error(const Vec& estimate, const Vec& truth) {
  const double tn = truth.norm();
  return tn > 0.0 ? (estimate - truth).norm() / tn : (estimate - truth).norm();
}

}  // namespace hypermarg
