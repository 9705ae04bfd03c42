#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hypermarg/core/dense.hpp"
#include "hypermarg/core/parallel.hpp"
#include "hypermarg/core/pcg.hpp"
#include "hypermarg/core/probes.hpp"
#include "hypermarg/model/problem.hpp"
#include "hypermarg/objective/objective.hpp"

namespace hypermarg {

/// Anchor theta_t with probes W and solves Z = Psi_t^{-1} W.
struct MMState {
  Vec anchor;
  ProbeSet probes;
  Mat solves;
  Index outer_iter = 0;
  std::shared_ptr<const Preconditioner> pre;
  Index pcg_iterations = 0;

  Index n_probes() const { return probes.count(); }
};

/// Solves Psi(anchor) z_i = w_i for every probe column. Any non-converged
/// solve is an error.
inline MMState precompute_solves(const ProblemSpec& problem, const Vec& anchor, ProbeSet probes,
                                 std::shared_ptr<const Preconditioner> pre = nullptr, const PcgOptions& opts = detail::objective_pcg()) {
  if (probes.dim() != problem.m) throw InvalidArgument("precompute_solves: probe dimension mismatch");
  const PsiOperator psi = build_psi(problem, anchor);
  MMState state;
  state.anchor = anchor;
  state.pre = std::move(pre);
  state.solves.resize(problem.m, probes.count());
  std::vector<Index> iters(static_cast<std::size_t>(probes.count()));
  parallel_for(iters.size(), [&](std::size_t i) {
    const PcgResult s = pcg_solve(psi.op, probes.column(static_cast<Index>(i)), state.pre.get(), opts);
    if (!s.converged) {
      throw NumericalFailure("precompute_solves: probe " + std::to_string(i) + " solve did not converge (residual " +
                             std::to_string(s.relative_residual) + ")");
    }
    state.solves.col(static_cast<Index>(i)) = s.x;
    iters[i] = s.iterations;
  });
  for (Index it : iters) state.pcg_iterations += it;
  problem.ledger.add_pcg(state.pcg_iterations);
  state.probes = std::move(probes);
  return state;
}

struct SurrogateEval {
  double value = 0.0;
  double prior_part = 0.0;
  double trace_part = 0.0;  // (1/N) sum_i z_i^T Psi(theta) w_i
  double misfit = 0.0;
  Vec r;
  Index pcg_iterations = 0;
  bool pcg_converged = true;
};

/// prior + (1/2N) sum_i z_i^T Psi(theta) w_i + misfit / 2.
inline SurrogateEval eval_surrogate_mc(const MMState& state, const ProblemSpec& problem, const Vec& theta) {
  const PsiOperator psi = build_psi(problem, theta);
  SurrogateEval e;
  e.prior_part = problem.hyperprior.neglog(theta);
  const Index n = state.n_probes();
  std::vector<double> terms(static_cast<std::size_t>(n));
  parallel_for(terms.size(), [&](std::size_t i) {
    const Index c = static_cast<Index>(i);
    terms[i] = state.solves.col(c).dot(psi.op.matvec(state.probes.column(c)));
  });
  e.trace_part = pairwise_sum(terms) / static_cast<double>(n);
  const Vec d = problem.residual_at_prior_mean(psi.forward);
  const PcgResult s = pcg_solve(psi.op, d, state.pre.get(), detail::objective_pcg());
  problem.ledger.add_pcg(s.iterations);
  e.r = s.x;
  e.pcg_iterations = s.iterations;
  e.pcg_converged = s.converged;
  e.misfit = d.dot(e.r);
  e.value = e.prior_part + 0.5 * e.trace_part + 0.5 * e.misfit;
  return e;
}

/// prior + (1/2N) sum_i z_i^T dPsi_j w_i - r^T (dPsi_j r - 2 dA_j mu) / 2.
inline Vec grad_surrogate_mc(const MMState& state, const ProblemSpec& problem, const Vec& theta,
                             const std::optional<Vec>& r = std::nullopt,
                             PsiJacobian::Mode mode = PsiJacobian::Mode::automatic) {
  const PsiJacobian jac(problem, theta, mode);
  const Index n = state.n_probes();
  const Index p = jac.dim();
  Mat terms(p, n);
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t i) {
    const Index c = static_cast<Index>(i);
    const Vec w = state.probes.column(c);
    for (Index j = 0; j < p; ++j) terms(j, c) = state.solves.col(c).dot(jac.apply(j, w));
  });
  Vec rr;
  if (r) {
    rr = *r;
  } else {
    const Vec d = problem.residual_at_prior_mean(jac.psi().forward);
    const PcgResult s = pcg_solve(jac.psi().op, d, state.pre.get(), detail::objective_pcg());
    problem.ledger.add_pcg(s.iterations);
    if (!s.converged) throw NumericalFailure("grad_surrogate_mc: misfit solve did not converge");
    rr = s.x;
  }
  Vec g = problem.hyperprior.grad_neglog(theta);
  const Vec rho = misfit_derivative_terms(jac, rr, problem.prior_mean);
  std::vector<double> row(static_cast<std::size_t>(n));
  for (Index j = 0; j < p; ++j) {
    for (Index i = 0; i < n; ++i) row[static_cast<std::size_t>(i)] = terms(j, i);
    g[j] += 0.5 * pairwise_sum(row) / static_cast<double>(n) - 0.5 * rho[j];
  }
  return g;
}

/// Dense majorant G(theta | anchor) = prior + [logdet Psi_t + tr(Psi_t^{-1}(Psi - Psi_t))] / 2 + misfit / 2.
class ExactSurrogate {
 public:
  ExactSurrogate(const ProblemSpec& problem, const Vec& anchor)
      : problem_(&problem), anchor_(anchor), anchor_psi_(psi_dense(problem, anchor)) {
    anchor_logdet_ = dense_logdet(anchor_psi_);
    anchor_inv_ = dense_spd_inverse(anchor_psi_);
  }

  const Vec& anchor() const { return anchor_; }
  double anchor_logdet() const { return anchor_logdet_; }

  /// logdet Psi_t + tr(Psi_t^{-1}(Psi(theta) - Psi_t)).
  double logdet_majorant(const Vec& theta) const {
    const Mat delta = psi_dense(*problem_, theta) - anchor_psi_;
    return anchor_logdet_ + anchor_inv_.cwiseProduct(delta).sum();
  }

  double value(const Vec& theta) const {
    const PsiOperator psi = build_psi(*problem_, theta);
    const Mat dense = psi.dense();
    const Vec d = problem_->residual_at_prior_mean(psi.forward);
    const double misfit = d.dot(Vec(dense_spd_solve(dense, d)));
    const double logdet_part = anchor_logdet_ + anchor_inv_.cwiseProduct(dense - anchor_psi_).sum();
    return problem_->hyperprior.neglog(theta) + 0.5 * logdet_part + 0.5 * misfit;
  }

  Vec gradient(const Vec& theta) const {
    const PsiJacobian jac(*problem_, theta, PsiJacobian::Mode::automatic);
    const Mat dense = jac.psi().dense();
    const Vec d = problem_->residual_at_prior_mean(jac.psi().forward);
    const Vec r = dense_spd_solve(dense, d);
    const std::vector<Mat> dpsi = jac.dense_all();
    Vec g = problem_->hyperprior.grad_neglog(theta);
    const Vec rho = misfit_derivative_terms(jac, r, problem_->prior_mean);
    for (Index j = 0; j < jac.dim(); ++j) {
      g[j] += 0.5 * anchor_inv_.cwiseProduct(dpsi[static_cast<std::size_t>(j)]).sum() - 0.5 * rho[j];
    }
    return g;
  }

  /// Constant separating the expected Monte-Carlo surrogate from value():
  /// E[eval_surrogate_mc] = value - (logdet Psi_t - m) / 2.
  double dropped_constant() const { return 0.5 * (anchor_logdet_ - static_cast<double>(anchor_psi_.rows())); }

 private:
  const ProblemSpec* problem_;
  Vec anchor_;
  Mat anchor_psi_;
  Mat anchor_inv_;
  double anchor_logdet_ = 0.0;
};

inline double exact_surrogate(const ProblemSpec& problem, const Vec& theta, const Vec& anchor) {
  return ExactSurrogate(problem, anchor).value(theta);
}

}  // namespace hypermarg
