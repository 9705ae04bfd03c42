#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>

#include "hypermarg/core/probes.hpp"
#include "hypermarg/core/rng.hpp"
#include "hypermarg/mm/inner.hpp"
#include "hypermarg/mm/m3c.hpp"
#include "hypermarg/mm/metrics.hpp"
#include "hypermarg/objective/objective.hpp"

namespace hypermarg {

struct SaaConfig {
  Index n_probes = 24;
  Index lanczos_steps = 20;
  GradientOption gradient = GradientOption::analytic;
  bool symmetrized = true;  // option (a): zeta_i^T dPsi zeta_i instead of (Psi^{-1} w_i)^T dPsi w_i
  double fd_rel = 1e-6;
  Index max_iter = 200;
  double step_tol = 1e-4;
  InnerScaling inner_scaling = InnerScaling::relative;
  Index precond_rank = 0;
  double precond_rebuild = 0.1;  // relative move from the preconditioner anchor
  std::uint64_t seed = 0;
};

/// Fixed-sample minimization of the SLQ objective.
inline OptimizeResult saa_optimize(const ProblemSpec& problem, const Vec& theta0, const SaaConfig& cfg) {
  problem.box.require_contains(theta0, "saa_optimize");
  if (cfg.n_probes < 1 || cfg.lanczos_steps < 1) throw InvalidArgument("saa_optimize: need N >= 1 and K >= 1");
  const Index steps = std::min(cfg.lanczos_steps, problem.m);
  OptimizeResult out;
  out.metrics.method = "saa";
  RowClock clock(problem.ledger);

  const ProbeSet probes = rademacher_probes(problem.m, cfg.n_probes, cfg.seed);

  std::shared_ptr<const Preconditioner> pre;
  Vec pre_anchor;
  Index rebuilds = 0;
  auto refresh_pre = [&](const Vec& theta) {
    if (cfg.precond_rank <= 0) return;
    if (pre) {
      const double scale = pre_anchor.norm();
      const double moved = (theta - pre_anchor).norm() / (scale > 0.0 ? scale : 1.0);
      if (moved <= cfg.precond_rebuild) return;
    }
    pre = std::make_shared<const Preconditioner>(psi_preconditioner(
        build_psi(problem, theta), cfg.precond_rank, CounterRng(cfg.seed, 0x707265ULL).bits(static_cast<std::uint64_t>(rebuilds++))));
    pre_anchor = theta;
  };
  refresh_pre(theta0);

  Index fn_evals = 0, grad_evals = 0;
  std::optional<Vec> cached_theta, cached_r;
  auto f = [&](const Vec& x) {
    ++fn_evals;
    ObjectiveEval e = eval_F_slq(problem, x, probes, steps, pre.get());
    if (!e.pcg_converged) return std::numeric_limits<double>::infinity();
    cached_theta = x;
    cached_r = std::move(e.r);
    return e.value;
  };
  std::function<Vec(const Vec&)> grad;
  if (cfg.gradient == GradientOption::analytic) {
    grad = [&](const Vec& x) {
      ++grad_evals;
      McGradientOptions o;
      o.symmetrized = cfg.symmetrized;
      if (cached_theta && *cached_theta == x) o.r = cached_r;
      return grad_F_mc(problem, x, probes, steps, pre.get(), o);
    };
  } else {
    grad = [&](const Vec& x) {
      ++grad_evals;
      return grad_fd(f, x, problem.box, cfg.fd_rel).grad;
    };
  }

  Index last_fn = 0, last_grad = 0;
  const double f0 = f(theta0);
  out.objective_trace.push_back(f0);
  auto emit = [&](Index iter, const Vec& theta, double value) {
    MetricsRow row;
    row.outer_iter = iter;
    row.inner_iters = iter > 0 ? 1 : 0;
    row.fn_evals = fn_evals - last_fn;
    row.grad_evals = grad_evals - last_grad;
    row.n_probes = cfg.n_probes;
    row.F_audit = value;
    row.theta = theta;
    last_fn = fn_evals;
    last_grad = grad_evals;
    clock.fill(row);
    out.metrics.rows.push_back(std::move(row));
  };

  InnerOptions opts;
  opts.max_iter = cfg.max_iter;
  opts.step_tol = cfg.step_tol;
  opts.scaling = cfg.inner_scaling;
  opts.on_iterate = [&](Index iter, const Vec& theta, double value) {
    emit(iter, theta, value);
    out.objective_trace.push_back(value);
    refresh_pre(theta);
  };
  // f0 is already known; avoid re-evaluating it inside the solver
  bool first = true;
  auto f_inner = [&](const Vec& x) {
    if (first) {
      first = false;
      if (x == theta0) return f0;
    }
    return f(x);
  };
  const InnerResult inner = projected_gradient_min(f_inner, grad, problem.box, theta0, opts);

  // fold trailing work (final gradient, rejected trials) into the last row
  if (out.metrics.rows.empty()) {
    emit(0, inner.theta, inner.value);
  } else {
    MetricsRow tail;
    clock.fill(tail);
    MetricsRow& last = out.metrics.rows.back();
    last.fn_evals += fn_evals - last_fn;
    last.grad_evals += grad_evals - last_grad;
    last.matvecs_A += tail.matvecs_A;
    last.matvecs_Q += tail.matvecs_Q;
    last.matvecs_psi += tail.matvecs_psi;
    last.pcg_iters += tail.pcg_iters;
    last.wall_time_s += tail.wall_time_s;
    last.theta = inner.theta;
    last.F_audit = inner.value;
  }
  out.theta_hat = inner.theta;
  out.metrics.summary.stop_reason = inner.converged ? "step_tol" : "max_iter";
  out.metrics.ledger_delta = clock.total();
  out.metrics.finalize(inner.theta);
  return out;
}

}  // namespace hypermarg
