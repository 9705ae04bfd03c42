#pragma once

#include <functional>
#include <string>
#include <vector>

#include "hypermarg/core/dense.hpp"
#include "hypermarg/core/lanczos.hpp"
#include "hypermarg/core/nystrom.hpp"
#include "hypermarg/core/parallel.hpp"
#include "hypermarg/core/pcg.hpp"
#include "hypermarg/core/probes.hpp"
#include "hypermarg/core/trace.hpp"
#include "hypermarg/model/problem.hpp"

namespace hypermarg {

/// F(theta) = prior_part + logdet_part / 2 + misfit / 2 with
/// misfit = d^T Psi^{-1} d, d = A mu - b and r = Psi^{-1} d.
struct ObjectiveEval {
  double value = 0.0;
  double prior_part = 0.0;
  double logdet_part = 0.0;
  double misfit = 0.0;
  Vec r;
  Index pcg_iterations = 0;
  bool pcg_converged = true;
};

// PCG tolerance used inside objective and gradient evaluations.
inline constexpr double kObjectivePcgTol = 1e-10;

namespace detail {

inline PcgOptions objective_pcg() {
  PcgOptions o;
  o.tol = kObjectivePcgTol;
  o.maxit = 5000;
  return o;
}

inline void finish(ObjectiveEval& e) { e.value = e.prior_part + 0.5 * e.logdet_part + 0.5 * e.misfit; }

/// Psi(theta) as an operator on the preconditioned space: v -> G Psi G^T v.
inline SymOp preconditioned_psi(const SymOp& psi, const Preconditioner& pre) {
  return SymOp(psi.dim(), [psi, &pre](const Vec& v) -> Vec {
    return pre.apply_inverse_sqrt(psi.matvec(pre.apply_inverse_sqrt_transpose(v)));
  });
}

}  // namespace detail

/// Exact F from a dense Psi (oracle).
inline ObjectiveEval eval_F_exact(const ProblemSpec& problem, const Vec& theta) {
  const PsiOperator psi = build_psi(problem, theta);
  const Mat dense = psi.dense();
  ObjectiveEval e;
  const Vec d = problem.residual_at_prior_mean(psi.forward);
  e.prior_part = problem.hyperprior.neglog(theta);
  e.logdet_part = dense_logdet(dense);
  e.r = dense_spd_solve(dense, d);
  e.misfit = d.dot(e.r);
  detail::finish(e);
  return e;
}

/// F with an SLQ log-determinant over fixed probes and a PCG misfit solve.
/// With a preconditioner P = (G^T G)^{-1}: logdet Psi = SLQ(G Psi G^T) + logdet P.
inline ObjectiveEval eval_F_slq(const ProblemSpec& problem, const Vec& theta, const ProbeSet& probes, Index steps,
                                const Preconditioner* pre = nullptr) {
  if (steps < 1) throw InvalidArgument("eval_F_slq: K must be at least 1");
  const PsiOperator psi = build_psi(problem, theta);
  ObjectiveEval e;
  e.prior_part = problem.hyperprior.neglog(theta);
  if (pre) {
    const SymOp op = detail::preconditioned_psi(psi.op, *pre);
    e.logdet_part = slq_logdet(op, probes, steps).mean + pre->logdet_of_approximation();
  } else {
    e.logdet_part = slq_logdet(psi.op, probes, steps).mean;
  }
  const Vec d = problem.residual_at_prior_mean(psi.forward);
  const PcgResult solve = pcg_solve(psi.op, d, pre, detail::objective_pcg());
  problem.ledger.add_pcg(solve.iterations);
  e.r = solve.x;
  e.pcg_iterations = solve.iterations;
  e.pcg_converged = solve.converged;
  e.misfit = d.dot(e.r);
  detail::finish(e);
  return e;
}

/// rho_j = r^T (dPsi_j r - 2 dA_j mu) for every j.
inline Vec misfit_derivative_terms(const PsiJacobian& jac, const Vec& r, const Vec& prior_mean) {
  Vec out(jac.dim());
  const bool mean_is_zero = prior_mean.isZero(0.0);
  for (Index j = 0; j < jac.dim(); ++j) {
    Vec v = jac.apply(j, r);
    if (!mean_is_zero) v -= 2.0 * jac.forward_apply(j, prior_mean);
    out[j] = r.dot(v);
  }
  return out;
}

/// Exact gradient with dense traces tr(Psi^{-1} dPsi_j). Requires analytic
/// derivative builders for every component.
inline Vec grad_F_exact(const ProblemSpec& problem, const Vec& theta) {
  const PsiJacobian jac(problem, theta, PsiJacobian::Mode::analytic);
  const Mat dense = jac.psi().dense();
  const Mat inv = dense_spd_inverse(dense);
  const Vec d = problem.residual_at_prior_mean(jac.psi().forward);
  const Vec r = inv * d;
  const std::vector<Mat> dpsi = jac.dense_all();
  Vec g = problem.hyperprior.grad_neglog(theta);
  const Vec rho = misfit_derivative_terms(jac, r, problem.prior_mean);
  for (Index j = 0; j < jac.dim(); ++j) {
    const double tr = inv.cwiseProduct(dpsi[static_cast<std::size_t>(j)]).sum();
    g[j] += 0.5 * tr - 0.5 * rho[j];
  }
  return g;
}

struct McGradientOptions {
  bool symmetrized = false;  // zeta_i^T dPsi_j zeta_i with zeta_i = G^T (G Psi G^T)^{-1/2} w_i
  std::optional<Vec> r;      // reuse a known Psi^{-1} d
  PsiJacobian::Mode derivative_mode = PsiJacobian::Mode::automatic;
};

/// Monte-Carlo gradient: prior + (1/2N) sum_i u_i^T dPsi_j v_i - rho_j / 2 with
/// (u_i, v_i) = (Psi^{-1} w_i, w_i) or (zeta_i, zeta_i).
inline Vec grad_F_mc(const ProblemSpec& problem, const Vec& theta, const ProbeSet& probes, Index steps,
                     const Preconditioner* pre = nullptr, const McGradientOptions& opts = {}) {
  const PsiJacobian jac(problem, theta, opts.derivative_mode);
  const SymOp& psi = jac.psi().op;
  const Index n_probes = probes.count();
  const Index p = jac.dim();
  Mat terms(p, n_probes);
  std::optional<SymOp> pre_op;
  if (opts.symmetrized && pre) pre_op = detail::preconditioned_psi(psi, *pre);
  parallel_for(static_cast<std::size_t>(n_probes), [&](std::size_t ii) {
    const Index i = static_cast<Index>(ii);
    const Vec w = probes.column(i);
    Vec u, v;
    if (opts.symmetrized) {
      if (pre) {
        u = pre->apply_inverse_sqrt_transpose(lanczos_inv_sqrt_apply(*pre_op, w, std::min(steps, psi.dim())));
      } else {
        u = lanczos_inv_sqrt_apply(psi, w, std::min(steps, psi.dim()));
      }
      v = u;
    } else {
      const PcgResult s = pcg_solve(psi, w, pre, detail::objective_pcg());
      problem.ledger.add_pcg(s.iterations);
      if (!s.converged) throw NumericalFailure("grad_F_mc: probe solve " + std::to_string(i) + " did not converge");
      u = s.x;
      v = w;
    }
    for (Index j = 0; j < p; ++j) {
      try {
        terms(j, i) = u.dot(jac.apply(j, v));
      } catch (const NumericalFailure& e) {
        throw NumericalFailure("grad_F_mc: component " + std::to_string(j) + ": " + e.what());
      }
    }
  });

  Vec r;
  if (opts.r) {
    r = *opts.r;
  } else {
    const Vec d = problem.residual_at_prior_mean(jac.psi().forward);
    const PcgResult s = pcg_solve(psi, d, pre, detail::objective_pcg());
    problem.ledger.add_pcg(s.iterations);
    if (!s.converged) throw NumericalFailure("grad_F_mc: misfit solve did not converge");
    r = s.x;
  }
  Vec g = problem.hyperprior.grad_neglog(theta);
  const Vec rho = misfit_derivative_terms(jac, r, problem.prior_mean);
  for (Index j = 0; j < p; ++j) {
    std::vector<double> row(static_cast<std::size_t>(n_probes));
    for (Index i = 0; i < n_probes; ++i) row[static_cast<std::size_t>(i)] = terms(j, i);
    g[j] += 0.5 * pairwise_sum(row) / static_cast<double>(n_probes) - 0.5 * rho[j];
  }
  return g;
}

struct FdGradient {
  Vec grad;
  double value = 0.0;  // f(theta)
  Index evaluations = 0;
};

/// Forward differences with h_j = rel * max(1, |theta_j|), stepping away from
/// the nearer bound. Uses p + 1 evaluations of f.
inline FdGradient grad_fd(const std::function<double(const Vec&)>& f, const Vec& theta, const Box& box, double rel = 1e-6) {
  if (theta.size() != box.dim()) throw InvalidArgument("grad_fd: dimension mismatch");
  FdGradient out;
  out.grad.resize(theta.size());
  std::vector<double> steps(static_cast<std::size_t>(theta.size()));
  for (Index j = 0; j < theta.size(); ++j) steps[static_cast<std::size_t>(j)] = one_sided_step(box, theta, j, rel);
  out.value = f(theta);
  for (Index j = 0; j < theta.size(); ++j) {
    Vec t = theta;
    const double h = steps[static_cast<std::size_t>(j)];
    t[j] += h;
    out.grad[j] = (f(t) - out.value) / h;
  }
  out.evaluations = theta.size() + 1;
  return out;
}

}  // namespace hypermarg
