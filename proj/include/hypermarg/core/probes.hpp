#pragma once

#include <cstdint>
#include <string>

#include "hypermarg/core/errors.hpp"
#include "hypermarg/core/rng.hpp"
#include "hypermarg/core/types.hpp"

namespace hypermarg {

/// N probe vectors of length m stored column-wise.
///
/// Rademacher column j is drawn from stream j of the seed, so the first k
/// columns of a set with N > k probes equal the k-probe set exactly.
struct ProbeSet {
  Mat W;
  std::uint64_t seed = 0;

  Index dim() const { return W.rows(); }
  Index count() const { return W.cols(); }
  auto column(Index i) const { return W.col(i); }

  /// Wraps arbitrary probe columns (e.g. canonical basis vectors for exhaustive checks).
  static ProbeSet from_matrix(Mat columns) { return ProbeSet{std::move(columns), 0}; }
};

inline ProbeSet rademacher_probes(Index m, Index n_probes, std::uint64_t seed) {
  if (m < 1 || n_probes < 1) {
    throw InvalidArgument("rademacher_probes: need m >= 1 and N >= 1 (got m=" + std::to_string(m) +
                          ", N=" + std::to_string(n_probes) + ")");
  }
  ProbeSet probes{Mat(m, n_probes), seed};
  for (Index j = 0; j < n_probes; ++j) {
    const CounterRng rng(seed, static_cast<std::uint64_t>(j));
    for (Index i = 0; i < m; ++i) probes.W(i, j) = rng.rademacher(static_cast<std::uint64_t>(i));
  }
  return probes;
}

/// Standard normal m x k matrix; column j uses stream j.
inline Mat gaussian_matrix(Index m, Index k, std::uint64_t seed) {
  Mat out(m, k);
  for (Index j = 0; j < k; ++j) {
    const CounterRng rng(seed, static_cast<std::uint64_t>(j));
    for (Index i = 0; i < m; ++i) out(i, j) = rng.normal(static_cast<std::uint64_t>(i));
  }
  return out;
}

}  // namespace hypermarg
