#pragma once

#include <vector>

#include "hypermarg/core/lanczos.hpp"
#include "hypermarg/core/parallel.hpp"
#include "hypermarg/core/probes.hpp"
#include "hypermarg/core/sym_op.hpp"

namespace hypermarg {

/// Per-probe samples and their mean.
struct TraceEstimate {
  std::vector<double> samples;
  double mean = 0.0;
};

namespace detail {
inline TraceEstimate finish_estimate(std::vector<double> samples) {
  TraceEstimate out;
  out.mean = pairwise_sum(samples) / static_cast<double>(samples.size());
  out.samples = std::move(samples);
  return out;
}
}  // namespace detail

/// Hutchinson estimate (1/N) sum_i w_i^T B w_i.
inline TraceEstimate hutchinson_trace(const SymOp& op, const ProbeSet& probes) {
  if (probes.dim() != op.dim()) throw InvalidArgument("hutchinson_trace: probe dimension mismatch");
  std::vector<double> samples(static_cast<std::size_t>(probes.count()));
  parallel_for(samples.size(), [&](std::size_t i) {
    const Vec w = probes.column(static_cast<Index>(i));
    samples[i] = w.dot(op.matvec(w));
  });
  return detail::finish_estimate(std::move(samples));
}

/// SLQ estimate (1/N) sum_i ||w_i||^2 e1^T log(T_K^{(i)}) e1 of log det op.
inline TraceEstimate slq_logdet(const SymOp& op, const ProbeSet& probes, Index steps, bool reorthogonalize = true) {
  if (probes.dim() != op.dim()) throw InvalidArgument("slq_logdet: probe dimension mismatch");
  if (steps < 1) throw InvalidArgument("slq_logdet: K must be at least 1");
  std::vector<double> samples(static_cast<std::size_t>(probes.count()));
  parallel_for(samples.size(), [&](std::size_t i) {
    samples[i] = lanczos_quadform_log(op, probes.column(static_cast<Index>(i)), steps, reorthogonalize);
  });
  return detail::finish_estimate(std::move(samples));
}

}  // namespace hypermarg
