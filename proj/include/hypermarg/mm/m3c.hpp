#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hypermarg/core/probes.hpp"
#include "hypermarg/core/rng.hpp"
#include "hypermarg/mm/inner.hpp"
#include "hypermarg/mm/metrics.hpp"
#include "hypermarg/mm/surrogate.hpp"
#include "hypermarg/objective/objective.hpp"

namespace hypermarg {

enum class GradientOption { analytic, finite_difference };  // options (a) and (b)

/// Objective audit used to accept or reject outer steps.
///   automatic: dense F when m <= dense_limit, SLQ with fixed probes otherwise
enum class AuditMode { automatic, exact, slq, off };

struct AuditConfig {
  AuditMode mode = AuditMode::automatic;
  double slack = 1e-6;  // relative to max(1, |F|)
  Index probes = 64;
  Index lanczos_steps = 30;
  Index dense_limit = 1024;
};

/// Evaluates the audited objective at a point, counted on the problem ledger.
class Auditor {
 public:
  Auditor(const ProblemSpec& problem, const AuditConfig& cfg, std::uint64_t seed) : problem_(&problem), cfg_(cfg) {
    mode_ = cfg.mode;
    if (mode_ == AuditMode::automatic) mode_ = problem.m <= cfg.dense_limit ? AuditMode::exact : AuditMode::slq;
    if (mode_ == AuditMode::slq) probes_ = rademacher_probes(problem.m, cfg.probes, CounterRng(seed, 0x61756469ULL).bits(0));
  }

  bool enabled() const { return mode_ != AuditMode::off; }
  AuditMode mode() const { return mode_; }

  double operator()(const Vec& theta) const {
    switch (mode_) {
      case AuditMode::exact:
        return eval_F_exact(*problem_, theta).value;
      case AuditMode::slq:
        return eval_F_slq(*problem_, theta, probes_, std::min(cfg_.lanczos_steps, problem_->m)).value;
      default:
        return std::numeric_limits<double>::quiet_NaN();
    }
  }

  bool accepts(double f_old, double f_new) const {
    if (!enabled()) return true;
    return f_new <= f_old + cfg_.slack * std::max(1.0, std::abs(f_old));
  }

 private:
  const ProblemSpec* problem_;
  AuditConfig cfg_;
  AuditMode mode_;
  ProbeSet probes_;
};

struct M3cConfig {
  enum class Surrogate { monte_carlo, exact };
  enum class ProbePolicy { fresh, reuse };
  enum class Schedule { constant, geometric };

  Surrogate surrogate = Surrogate::monte_carlo;
  Index n_probes = 24;
  Schedule schedule = Schedule::constant;
  double schedule_rho = 0.8;  // geometric: N_t = ceil(N_0 rho^{-t})
  Index max_probes = 4096;
  ProbePolicy probe_policy = ProbePolicy::fresh;
  GradientOption gradient = GradientOption::analytic;
  double fd_rel = 1e-6;

  Index max_outer = 200;
  Index max_inner = 2;
  double inner_step_tol = 1e-4;
  double outer_rel_tol = 1e-4;
  InnerScaling inner_scaling = InnerScaling::relative;

  Index precond_rank = 0;  // 0 disables the Nystrom preconditioner
  AuditConfig audit;
  Index max_rejections = 6;  // consecutive
  std::uint64_t seed = 0;
};

struct OptimizeResult {
  Vec theta_hat;
  RunMetrics metrics;
  std::vector<double> objective_trace;  // audited F at theta_0 and every accepted iterate
};

namespace detail {

inline Index scheduled_probes(const M3cConfig& cfg, Index t, Index boost) {
  double n = static_cast<double>(cfg.n_probes);
  if (cfg.schedule == M3cConfig::Schedule::geometric) n = std::ceil(n * std::pow(cfg.schedule_rho, -static_cast<double>(t)));
  n *= std::pow(2.0, static_cast<double>(boost));
  return static_cast<Index>(std::min(n, static_cast<double>(cfg.max_probes)));
}

inline std::uint64_t outer_probe_seed(const M3cConfig& cfg, Index t) {
  if (cfg.probe_policy == M3cConfig::ProbePolicy::reuse) return cfg.seed;
  return CounterRng(cfg.seed, 0x6F75746572ULL).bits(static_cast<std::uint64_t>(t));
}

}  // namespace detail

/// Majorization-minimization with Monte-Carlo (or exact dense) surrogates.
inline OptimizeResult m3c_optimize(const ProblemSpec& problem, const Vec& theta0, const M3cConfig& cfg) {
  problem.box.require_contains(theta0, "m3c_optimize");
  if (cfg.n_probes < 1 || cfg.max_outer < 1) throw InvalidArgument("m3c_optimize: need N >= 1 and max_outer >= 1");
  if (cfg.schedule == M3cConfig::Schedule::geometric && !(cfg.schedule_rho > 0.0 && cfg.schedule_rho < 1.0)) {
    throw InvalidArgument("m3c_optimize: geometric schedule needs rho in (0, 1)");
  }
  OptimizeResult out;
  out.metrics.method = "m3c";
  RowClock clock(problem.ledger);
  const Auditor audit(problem, cfg.audit, cfg.seed);

  Vec theta = theta0;
  double f_cur = audit(theta);
  out.objective_trace.push_back(f_cur);
  Index boost = 0, rejections = 0;
  std::string stop = "max_outer";

  InnerOptions inner_opts;
  inner_opts.max_iter = cfg.max_inner;
  inner_opts.step_tol = cfg.inner_step_tol;
  inner_opts.scaling = cfg.inner_scaling;

  for (Index t = 0; t < cfg.max_outer; ++t) {
    MetricsRow row;
    row.outer_iter = t + 1;
    Index fn_evals = 0;
    InnerResult inner;

    if (cfg.surrogate == M3cConfig::Surrogate::exact) {
      const ExactSurrogate sur(problem, theta);
      auto f = [&](const Vec& x) {
        ++fn_evals;
        return sur.value(x);
      };
      std::function<Vec(const Vec&)> grad;
      if (cfg.gradient == GradientOption::analytic) {
        grad = [&](const Vec& x) { return sur.gradient(x); };
      } else {
        grad = [&](const Vec& x) { return grad_fd(f, x, problem.box, cfg.fd_rel).grad; };
      }
      inner = projected_gradient_min(f, grad, problem.box, theta, inner_opts);
    } else {
      const Index n_t = detail::scheduled_probes(cfg, t, boost);
      row.n_probes = n_t;
      std::shared_ptr<const Preconditioner> pre;
      if (cfg.precond_rank > 0) {
        pre = std::make_shared<const Preconditioner>(
            psi_preconditioner(build_psi(problem, theta), cfg.precond_rank, CounterRng(cfg.seed, 0x707265ULL).bits(t)));
      }
      const MMState state = precompute_solves(problem, theta, rademacher_probes(problem.m, n_t, detail::outer_probe_seed(cfg, t)), pre);
      std::optional<Vec> cached_theta, cached_r;
      auto f = [&](const Vec& x) {
        ++fn_evals;
        SurrogateEval e = eval_surrogate_mc(state, problem, x);
        if (!e.pcg_converged) return std::numeric_limits<double>::infinity();
        cached_theta = x;
        cached_r = std::move(e.r);
        return e.value;
      };
      std::function<Vec(const Vec&)> grad;
      if (cfg.gradient == GradientOption::analytic) {
        grad = [&](const Vec& x) {
          const bool hit = cached_theta && *cached_theta == x;
          return grad_surrogate_mc(state, problem, x, hit ? cached_r : std::nullopt);
        };
      } else {
        grad = [&](const Vec& x) { return grad_fd(f, x, problem.box, cfg.fd_rel).grad; };
      }
      inner = projected_gradient_min(f, grad, problem.box, theta, inner_opts);
    }

    const Vec candidate = inner.theta;
    const double f_new = audit(candidate);
    const bool accept = audit.accepts(f_cur, f_new);
    double rel_change = std::numeric_limits<double>::infinity();
    if (accept) {
      const double denom = candidate.norm();
      rel_change = denom > 0.0 ? (candidate - theta).norm() / denom : (candidate - theta).norm();
      theta = candidate;
      f_cur = f_new;
      rejections = 0;
      out.objective_trace.push_back(f_cur);
    } else {
      ++boost;
      ++rejections;
    }

    row.inner_iters = inner.iterations;
    row.fn_evals = fn_evals;
    row.grad_evals = inner.grad_evals;
    row.accepted = accept;
    row.F_audit = f_cur;
    row.theta = theta;
    clock.fill(row);
    out.metrics.rows.push_back(std::move(row));

    if (accept && rel_change < cfg.outer_rel_tol) {
      stop = "outer_rel_tol";
      break;
    }
    if (!accept && (rejections > cfg.max_rejections ||
                    (cfg.surrogate == M3cConfig::Surrogate::exact) ||
                    detail::scheduled_probes(cfg, t + 1, boost) == detail::scheduled_probes(cfg, t + 1, boost - 1))) {
      stop = "audit_rejected";
      break;
    }
  }
  out.theta_hat = theta;
  out.metrics.summary.stop_reason = stop;
  out.metrics.ledger_delta = clock.total();
  out.metrics.finalize(theta);
  return out;
}

}  // namespace hypermarg
