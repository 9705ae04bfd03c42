#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "hypermarg/core/dense.hpp"
#include "hypermarg/core/errors.hpp"
#include "hypermarg/core/lanczos.hpp"
#include "hypermarg/core/rng.hpp"
#include "hypermarg/model/problem.hpp"
#include "hypermarg/mm/surrogate.hpp"
#include "hypermarg/objective/objective.hpp"

namespace hypermarg {

/// Uniform spectral constants of theta -> Psi(theta) over the box.
struct SpectralConstants {
  double alpha = 1.0;       // lower spectral bound
  double beta = 1.0;        // upper spectral bound
  double lipschitz = 0.0;   // L_Psi in the spectral norm
  double varsigma_F = 1.0;  // max ||Psi||_F / alpha
  double varsigma_2 = 1.0;  // max ||Psi||_2 / alpha
  double radius = 1.0;      // enclosing-ball radius of the box
  Index p = 1;
  Index m = 1;
  // Maxima of ||offdiag(log Psi)|| when a dense audit supplied them.
  std::optional<double> offdiag_log_fro;
  std::optional<double> offdiag_log_two;
  std::string provenance = "user supplied";

  double kappa() const { return beta / alpha; }

  void validate() const {
    if (!(alpha > 0.0) || !(beta >= alpha) || !std::isfinite(beta)) throw InvalidArgument("SpectralConstants: need 0 < alpha <= beta");
    if (!(lipschitz >= 0.0) || !std::isfinite(lipschitz)) throw InvalidArgument("SpectralConstants: L_Psi must be finite and nonnegative");
    if (!(varsigma_F > 0.0) || !(varsigma_2 > 0.0)) throw InvalidArgument("SpectralConstants: varsigma constants must be positive");
    if (!(radius > 0.0) || p < 1 || m < 1) throw InvalidArgument("SpectralConstants: need r > 0, p >= 1, m >= 1");
    if (offdiag_log_fro && !(*offdiag_log_fro >= 0.0)) throw InvalidArgument("SpectralConstants: negative off-diagonal norm");
    if (offdiag_log_two && !(*offdiag_log_two >= 0.0)) throw InvalidArgument("SpectralConstants: negative off-diagonal norm");
  }
};

namespace detail {

inline void require_positive(double v, const char* name, const char* who) {
  if (!(v > 0.0) || !std::isfinite(v)) throw InvalidArgument(std::string(who) + ": " + name + " must be positive and finite");
}

inline void require_probability(double v, const char* name, const char* who) {
  if (!(v > 0.0 && v < 1.0)) throw InvalidArgument(std::string(who) + ": " + name + " must lie in (0, 1)");
}

inline Index ceil_count(double x) {
  if (!std::isfinite(x) || x >= static_cast<double>(std::numeric_limits<Index>::max())) {
    throw InvalidArgument("bound exceeds the representable range");
  }
  return std::max<Index>(1, static_cast<Index>(std::ceil(x)));
}

// log max{(c / eta)^p, 1}
inline double log_cover(double c, double eta, Index p) {
  if (std::isinf(eta)) return 0.0;
  return std::max(0.0, static_cast<double>(p) * std::log(c / eta));
}

}  // namespace detail

/// Count of eta-balls covering a p-ball of radius r: ceil((3r/eta)^p), or 1 when eta > r.
/// Saturates at the largest uint64.
inline std::uint64_t covering_number_bound(double r, double eta, Index p) {
  detail::require_positive(r, "r", "covering_number_bound");
  detail::require_positive(eta, "eta", "covering_number_bound");
  if (p < 1) throw InvalidArgument("covering_number_bound: p must be at least 1");
  if (eta > r) return 1;
  const double v = std::pow(3.0 * r / eta, static_cast<double>(p));
  if (!(v < 1.8e19)) return std::numeric_limits<std::uint64_t>::max();
  return static_cast<std::uint64_t>(std::ceil(v));
}

/// Smallest K with K >= sqrt(kappa+1)/4 * log(4 m (sqrt(kappa+1)+1) log(2 kappa) / eps), at least 1.
inline Index lanczos_steps_bound(double kappa, Index m, double eps) {
  if (!(kappa >= 1.0) || !std::isfinite(kappa)) throw InvalidArgument("lanczos_steps_bound: kappa must be >= 1");
  if (m < 1) throw InvalidArgument("lanczos_steps_bound: m must be at least 1");
  detail::require_positive(eps, "eps", "lanczos_steps_bound");
  const double s = std::sqrt(kappa + 1.0);
  const double arg = 4.0 * m * (s + 1.0) * std::log(2.0 * kappa) / eps;
  return detail::ceil_count(s / 4.0 * std::log(arg));
}

/// Lanczos steps for the uniform statement (accuracy eps split as 2 eps / 5).
inline Index lanczos_steps_bound_uniform(double kappa, Index m, double eps) {
  detail::require_positive(eps, "eps", "lanczos_steps_bound_uniform");
  return lanczos_steps_bound(kappa, m, 0.4 * eps);
}

struct SlqSampleBound {
  Index samples = 0;
  Index lanczos_steps = 0;
  double eta = 0.0;        // net resolution alpha eps / (5 m L_Psi); +inf when L_Psi = 0
  double gamma = 1.0;      // max{(3r/eta)^p, 1}
  double log_gamma = 0.0;  // ln gamma (finite even when gamma overflows)
  double offdiag_fro = 0.0;
  double offdiag_two = 0.0;
  bool audited_norms = false;  // false: alpha * varsigma surrogates
};

/// Uniform SLQ sample and step counts:
///   N = 32 (25/4 eps^-2 S_F^2 + 5/2 eps^-1 S_2) ln(2 gamma / delta)
/// with S = ||offdiag(log Psi)|| maxima, or alpha * varsigma when not audited.
inline SlqSampleBound slq_samples_detail(double eps, double delta, const SpectralConstants& c) {
  detail::require_positive(eps, "eps", "slq_samples_bound");
  detail::require_probability(delta, "delta", "slq_samples_bound");
  c.validate();
  SlqSampleBound out;
  out.audited_norms = c.offdiag_log_fro.has_value() && c.offdiag_log_two.has_value();
  out.offdiag_fro = out.audited_norms ? *c.offdiag_log_fro : c.alpha * c.varsigma_F;
  out.offdiag_two = out.audited_norms ? *c.offdiag_log_two : c.alpha * c.varsigma_2;
  out.eta = c.lipschitz > 0.0 ? c.alpha * eps / (5.0 * static_cast<double>(c.m) * c.lipschitz)
                              : std::numeric_limits<double>::infinity();
  out.log_gamma = detail::log_cover(3.0 * c.radius, out.eta, c.p);
  out.gamma = std::exp(out.log_gamma);
  const double lead = 6.25 / (eps * eps) * out.offdiag_fro * out.offdiag_fro + 2.5 / eps * out.offdiag_two;
  out.samples = detail::ceil_count(32.0 * lead * (std::log(2.0 / delta) + out.log_gamma));
  out.lanczos_steps = lanczos_steps_bound_uniform(c.kappa(), c.m, eps);
  return out;
}

inline Index slq_samples_bound(double eps, double delta, const SpectralConstants& c) {
  return slq_samples_detail(eps, delta, c).samples;
}

struct ScheduleBound {
  Index samples = 0;
  double eps_t = 0.0;
  double delta_t = 0.0;
  double gamma_t = 1.0;
  double log_gamma_t = 0.0;
};

/// N_t >= 16 (2 varsigma_F^2 + eps_t varsigma_2) / eps_t^2 ln(2 gamma_t / delta_t),
/// gamma_t = max{(12 r m L_Psi / (eps_t alpha))^p, 1}, eps_t = eps0 rho^t, delta_t = delta0 rho^t.
inline ScheduleBound m3c_sample_detail(double eps0, double rho, double delta0, const SpectralConstants& c, Index t) {
  detail::require_positive(eps0, "eps0", "m3c_sample_schedule");
  detail::require_probability(rho, "rho", "m3c_sample_schedule");
  detail::require_probability(delta0, "delta0", "m3c_sample_schedule");
  if (t < 0) throw InvalidArgument("m3c_sample_schedule: t must be nonnegative");
  c.validate();
  ScheduleBound out;
  const double decay = std::pow(rho, static_cast<double>(t));
  out.eps_t = eps0 * decay;
  out.delta_t = delta0 * decay;
  if (!(out.eps_t > 0.0) || !(out.delta_t > 0.0)) throw InvalidArgument("m3c_sample_schedule: eps_t underflows at this t");
  const double eta = c.lipschitz > 0.0 ? out.eps_t * c.alpha / (static_cast<double>(c.m) * c.lipschitz)
                                       : std::numeric_limits<double>::infinity();
  out.log_gamma_t = detail::log_cover(12.0 * c.radius, eta, c.p);
  out.gamma_t = std::exp(out.log_gamma_t);
  const double lead = 16.0 * (2.0 * c.varsigma_F * c.varsigma_F + out.eps_t * c.varsigma_2) / (out.eps_t * out.eps_t);
  out.samples = detail::ceil_count(lead * (std::log(2.0 / out.delta_t) + out.log_gamma_t));
  return out;
}

inline Index m3c_sample_schedule(double eps0, double rho, double delta0, const SpectralConstants& c, Index t) {
  return m3c_sample_detail(eps0, rho, delta0, c, t).samples;
}

struct SpectralEstimateOptions {
  Index samples = 16;
  std::uint64_t seed = 0;
  // dense eigensolves when m <= dense_limit, Lanczos extremal Ritz values otherwise
  Index dense_limit = 1024;
  Index lanczos_steps = 40;
  bool audit_log_norms = false;  // dense only: record max ||offdiag(log Psi)||
};

namespace detail {

inline Vec sample_in_box(const Box& box, const CounterRng& rng, std::uint64_t base) {
  Vec t(box.dim());
  for (Index j = 0; j < box.dim(); ++j) {
    t[j] = box.lower()[j] + rng.uniform(base + static_cast<std::uint64_t>(j)) * (box.upper()[j] - box.lower()[j]);
  }
  return t;
}

inline double offdiag_two_norm(const Mat& a) {
  Mat off = a;
  off.diagonal().setZero();
  return dense_eigenvalues(off).cwiseAbs().maxCoeff();
}

inline Vec ritz_extremes(const SymOp& op, Index steps, std::uint64_t seed) {
  const Index m = op.dim();
  Vec start(m);
  const CounterRng rng(seed, 0);
  for (Index i = 0; i < m; ++i) start[i] = rng.normal(static_cast<std::uint64_t>(i));
  const LanczosDecomp d = lanczos_decompose(op, start, std::min(steps, m));
  const Vec ritz = dense_eigenvalues(d.tridiagonal());
  return Vec{{ritz.minCoeff(), ritz.maxCoeff()}};
}

}  // namespace detail

/// Sampled spectral constants. alpha, beta and the varsigma maxima are
/// empirical (interior) values over the samples; L_Psi is an empirical lower
/// bound from sampled pairs.
inline SpectralConstants estimate_spectral_constants(const ProblemSpec& problem, const SpectralEstimateOptions& opts = {}) {
  if (opts.samples < 2) throw InvalidArgument("estimate_spectral_constants: need at least 2 samples");
  const bool dense = problem.m <= opts.dense_limit;
  if (opts.audit_log_norms && !dense) throw InvalidArgument("estimate_spectral_constants: log-norm audit needs dense scale");
  const CounterRng rng(opts.seed, 0x73706563ULL);
  const Index p = problem.p();

  std::vector<Vec> thetas;
  thetas.push_back(problem.box.lower());
  thetas.push_back(problem.box.upper());
  for (Index s = 0; s < opts.samples; ++s) thetas.push_back(detail::sample_in_box(problem.box, rng, static_cast<std::uint64_t>(s * (p + 1))));

  double lo = std::numeric_limits<double>::infinity(), hi = 0.0, fro = 0.0, lip = 0.0, log_fro = 0.0, log_two = 0.0;
  std::optional<Mat> prev;
  std::optional<SymOp> prev_op;
  for (std::size_t s = 0; s < thetas.size(); ++s) {
    const Vec& th = thetas[s];
    if (dense) {
      const Mat psi = psi_dense(problem, th);
      const Vec ev = dense_eigenvalues(psi);
      lo = std::min(lo, ev.minCoeff());
      hi = std::max(hi, ev.maxCoeff());
      fro = std::max(fro, psi.norm());
      if (opts.audit_log_norms) {
        Mat lg = dense_logm(psi);
        log_two = std::max(log_two, detail::offdiag_two_norm(lg));
        lg.diagonal().setZero();
        log_fro = std::max(log_fro, lg.norm());
      }
      if (prev) {
        const double dist = (th - thetas[s - 1]).norm();
        if (dist > 0.0) lip = std::max(lip, dense_eigenvalues(psi - *prev).cwiseAbs().maxCoeff() / dist);
      }
      prev = psi;
    } else {
      const PsiOperator psi = build_psi(problem, th);
      const Vec ext = detail::ritz_extremes(psi.op, opts.lanczos_steps, opts.seed + s);
      lo = std::min(lo, ext[0]);
      hi = std::max(hi, ext[1]);
      // ||Psi||_F^2 = tr(Psi^2) via a Hutchinson estimate
      const ProbeSet w = rademacher_probes(problem.m, 8, opts.seed + s);
      double tr2 = 0.0;
      for (Index i = 0; i < w.count(); ++i) tr2 += psi.op.matvec(w.column(i)).squaredNorm();
      fro = std::max(fro, std::sqrt(tr2 / static_cast<double>(w.count())));
      if (prev_op) {
        const double dist = (th - thetas[s - 1]).norm();
        if (dist > 0.0) {
          const SymOp a = psi.op, b = *prev_op;
          const SymOp diff(problem.m, [a, b](const Vec& v) -> Vec { return a.matvec(v) - b.matvec(v); });
          const Vec e = detail::ritz_extremes(diff, opts.lanczos_steps, opts.seed + 7 * s + 1);
          lip = std::max(lip, std::max(std::abs(e[0]), std::abs(e[1])) / dist);
        }
      }
      prev_op = psi.op;
    }
  }
  if (!(lo > 0.0)) throw NumericalFailure("estimate_spectral_constants: sampled Psi is not positive definite");
  SpectralConstants c;
  c.alpha = lo;
  c.beta = hi;
  c.lipschitz = lip;
  c.varsigma_F = std::max(fro, hi) / lo;
  c.varsigma_2 = hi / lo;
  c.radius = problem.box.radius();
  c.p = p;
  c.m = problem.m;
  if (opts.audit_log_norms) {
    c.offdiag_log_fro = log_fro;
    c.offdiag_log_two = log_two;
  }
  c.provenance = dense ? "empirical bound (dense eigensolves; L_Psi is a sampled lower bound)"
                       : "empirical bound (Lanczos Ritz values; L_Psi is a sampled lower bound)";
  return c;
}

/// Sampled Lipschitz constant of grad F in a neighbourhood of theta (relative
/// radius `spread` of the box width). Diagnostic only.
inline double estimate_gradient_lipschitz(const ProblemSpec& problem, const Vec& theta, Index samples, std::uint64_t seed,
                                          double spread = 0.05) {
  problem.box.require_contains(theta, "estimate_gradient_lipschitz");
  const CounterRng rng(seed, 0x6c697073ULL);
  const Vec g0 = grad_F_exact(problem, theta);
  double best = 0.0;
  const Vec w = problem.box.width();
  for (Index s = 0; s < samples; ++s) {
    Vec t = theta;
    for (Index j = 0; j < t.size(); ++j) {
      const double u = 2.0 * rng.uniform(static_cast<std::uint64_t>(s * t.size() + j)) - 1.0;
      const double scale = problem.box.lower()[j] > 0.0 ? std::abs(theta[j]) : w[j];
      t[j] += spread * scale * u;
    }
    t = problem.box.project(t);
    const double dist = (t - theta).norm();
    if (dist == 0.0) continue;
    best = std::max(best, (grad_F_exact(problem, t) - g0).norm() / dist);
  }
  return best;
}

/// Sampled Lipschitz ratio of the log-determinant majorant theta -> Q(theta | anchor)
/// against the theoretical m L_Psi / alpha.
struct SurrogateLipschitzCheck {
  double sampled = 0.0;
  double theoretical = 0.0;
};

inline SurrogateLipschitzCheck surrogate_lipschitz_check(const ProblemSpec& problem, const Vec& anchor,
                                                         const SpectralConstants& c, Index samples, std::uint64_t seed) {
  const ExactSurrogate sur(problem, anchor);
  const CounterRng rng(seed, 0x7375726cULL);
  SurrogateLipschitzCheck out;
  out.theoretical = static_cast<double>(c.m) * c.lipschitz / c.alpha;
  const Index p = problem.p();
  for (Index s = 0; s < samples; ++s) {
    const Vec a = detail::sample_in_box(problem.box, rng, static_cast<std::uint64_t>(2 * s * p));
    const Vec b = detail::sample_in_box(problem.box, rng, static_cast<std::uint64_t>((2 * s + 1) * p));
    const double dist = (a - b).norm();
    if (dist == 0.0) continue;
    out.sampled = std::max(out.sampled, std::abs(sur.logdet_majorant(a) - sur.logdet_majorant(b)) / dist);
  }
  return out;
}

}  // namespace hypermarg
