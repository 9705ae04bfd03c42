#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hypermarg/core/types.hpp"
#include "hypermarg/model/problem.hpp"

namespace hypermarg {

/// One row per outer iteration (M3C) or per accepted inner step (SAA).
/// Counter columns are ledger deltas, so rows partition the run exactly.
struct MetricsRow {
  Index outer_iter = 0;
  Index inner_iters = 0;
  Index fn_evals = 0;
  Index grad_evals = 0;
  std::int64_t matvecs_A = 0;
  std::int64_t matvecs_Q = 0;
  std::int64_t matvecs_psi = 0;
  std::int64_t pcg_iters = 0;
  double wall_time_s = 0.0;
  double F_audit = 0.0;
  Index n_probes = 0;
  bool accepted = true;
  Vec theta;
};

struct RunSummary {
  Index total_iter = 0;
  Index total_fn_evals = 0;
  std::int64_t total_matvecs_A = 0;
  std::int64_t total_matvecs_Q = 0;
  std::int64_t total_pcg_iters = 0;
  double runtime_s = 0.0;
  std::optional<double> rel_error;
  std::optional<double> rel_error_initial;
  Vec theta_hat;
  Index outer_iterations = 0;
  std::string stop_reason;
};

struct RunMetrics {
  std::string method;
  std::vector<MetricsRow> rows;
  RunSummary summary;
  Ledger::Snapshot ledger_delta;  // counters over the whole run

  /// Totals as sums of rows.
  void finalize(const Vec& theta_hat) {
    summary = RunSummary{.total_iter = 0,
                         .total_fn_evals = 0,
                         .total_matvecs_A = 0,
                         .total_matvecs_Q = 0,
                         .total_pcg_iters = 0,
                         .runtime_s = 0.0,
                         .rel_error = summary.rel_error,
                         .rel_error_initial = summary.rel_error_initial,
                         .theta_hat = theta_hat,
                         .outer_iterations = static_cast<Index>(rows.size()),
                         .stop_reason = summary.stop_reason};
    for (const auto& r : rows) {
      summary.total_iter += r.inner_iters;
      summary.total_fn_evals += r.fn_evals;
      summary.total_matvecs_A += r.matvecs_A;
      summary.total_matvecs_Q += r.matvecs_Q;
      summary.total_pcg_iters += r.pcg_iters;
      summary.runtime_s += r.wall_time_s;
    }
  }
};

/// Tracks ledger and clock deltas between successive rows.
class RowClock {
 public:
  explicit RowClock(const Ledger& ledger) : ledger_(ledger), last_(ledger.snapshot()), start_(last_), t_(now()) {}

  void fill(MetricsRow& row) {
    const auto snap = ledger_.snapshot();
    const auto d = snap - last_;
    row.matvecs_A = d.a;
    row.matvecs_Q = d.q;
    row.matvecs_psi = d.psi;
    row.pcg_iters = d.pcg;
    const double t = now();
    row.wall_time_s = t - t_;
    t_ = t;
    last_ = snap;
  }

  Ledger::Snapshot total() const { return ledger_.snapshot() - start_; }

 private:
  static double now() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
  }

  Ledger ledger_;
  Ledger::Snapshot last_;
  Ledger::Snapshot start_;
  double t_;
};

}  // namespace hypermarg
