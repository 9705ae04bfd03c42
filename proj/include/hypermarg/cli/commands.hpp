#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "hypermarg/bounds/bounds.hpp"
#include "hypermarg/cli/config.hpp"
#include "hypermarg/core/dense.hpp"
#include "hypermarg/core/probes.hpp"
#include "hypermarg/core/trace.hpp"
#include "hypermarg/mm/m3c.hpp"
#include "hypermarg/mm/surrogate.hpp"
#include "hypermarg/model/test_problems.hpp"
#include "hypermarg/objective/objective.hpp"
#include "hypermarg/saa/saa.hpp"

namespace hypermarg::cli {

/// Shortest round-trip decimal, independent of the locale.
inline std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline Json json_number(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

inline Json json_vec(const Vec& v) {
  Json a = Json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(json_number(v[i]));
  return a;
}

namespace detail {

inline std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError(path.string() + ": cannot write");
  return out;
}

inline void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ConfigError(dir.string() + ": " + ec.message());
}

inline Vec default_theta0(const ProblemSpec& problem, const ExperimentConfig& cfg) {
  if (!cfg.theta0) return problem.box.center();
  if (cfg.theta0->size() != problem.p()) {
    throw ConfigError("method.theta0: expected " + std::to_string(problem.p()) + " entries");
  }
  if (!problem.box.contains(*cfg.theta0)) throw ConfigError("method.theta0: outside the box");
  return *cfg.theta0;
}

inline PcgOptions reconstruction_pcg() {
  PcgOptions o;
  o.tol = 1e-8;
  o.maxit = 5000;
  return o;
}

}  // namespace detail

struct RunOutcome {
  ProblemSpec problem;
  Vec theta0;
  OptimizeResult result;
  std::optional<Vec> x_hat;
};

inline void write_metrics_csv(const std::filesystem::path& path, const RunMetrics& metrics, Index p) {
  std::ofstream out = detail::open_out(path);
  out << "outer_iter,inner_iters,fn_evals,grad_evals,matvecs_A,matvecs_Q,matvecs_psi,pcg_iters,n_probes,accepted,F_audit";
  for (Index j = 0; j < p; ++j) out << ",theta_" << (j + 1);
  out << ",wall_time_s\n";
  for (const MetricsRow& r : metrics.rows) {
    out << r.outer_iter << ',' << r.inner_iters << ',' << r.fn_evals << ',' << r.grad_evals << ',' << r.matvecs_A << ','
        << r.matvecs_Q << ',' << r.matvecs_psi << ',' << r.pcg_iters << ',' << r.n_probes << ',' << (r.accepted ? 1 : 0)
        << ',' << fmt(r.F_audit);
    for (Index j = 0; j < p; ++j) out << ',' << fmt(r.theta[j]);
    out << ',' << fmt(r.wall_time_s) << '\n';
  }
}

inline void write_theta_trace(const std::filesystem::path& path, const OptimizeResult& res, const Vec& theta0) {
  std::ofstream out = detail::open_out(path);
  const Index p = theta0.size();
  out << "step,F";
  for (Index j = 0; j < p; ++j) out << ",theta_" << (j + 1);
  out << '\n';
  auto line = [&](Index step, double f, const Vec& t) {
    out << step << ',' << fmt(f);
    for (Index j = 0; j < p; ++j) out << ',' << fmt(t[j]);
    out << '\n';
  };
  line(0, res.objective_trace.empty() ? std::numeric_limits<double>::quiet_NaN() : res.objective_trace.front(), theta0);
  for (const MetricsRow& r : res.metrics.rows) {
    if (r.accepted && r.outer_iter > 0) line(r.outer_iter, r.F_audit, r.theta);
  }
}

inline Json summary_json(const RunOutcome& o, const ExperimentConfig& cfg) {
  const RunSummary& s = o.result.metrics.summary;
  const Ledger::Snapshot& d = o.result.metrics.ledger_delta;
  Json j;
  j["method"] = o.result.metrics.method;
  j["problem"] = o.problem.name;
  j["seed"] = cfg.method == "m3c" ? cfg.m3c.seed : cfg.saa.seed;
  j["m"] = o.problem.m;
  j["n"] = o.problem.n;
  j["total_iter"] = s.total_iter;
  j["total_fn_evals"] = s.total_fn_evals;
  j["total_matvecs_A"] = s.total_matvecs_A;
  j["total_matvecs_Q"] = s.total_matvecs_Q;
  j["total_pcg_iters"] = s.total_pcg_iters;
  j["outer_iterations"] = s.outer_iterations;
  j["ledger"] = {{"matvecs_A", d.a}, {"matvecs_Q", d.q}, {"matvecs_psi", d.psi}, {"pcg_iters", d.pcg}};
  j["runtime_s"] = s.runtime_s;
  j["rel_error"] = s.rel_error ? json_number(*s.rel_error) : Json(nullptr);
  j["rel_error_initial"] = s.rel_error_initial ? json_number(*s.rel_error_initial) : Json(nullptr);
  j["theta0"] = json_vec(o.theta0);
  j["theta_hat"] = json_vec(s.theta_hat);
  j["F_final"] = o.result.objective_trace.empty() ? Json(nullptr) : json_number(o.result.objective_trace.back());
  j["stop_reason"] = s.stop_reason;
  return j;
}

/// Runs the configured optimizer and writes metrics.csv, summary.json,
/// theta_trace.csv and xhat.bin into the output directory.
inline RunOutcome run_experiment(const ExperimentConfig& cfg) {
  RunOutcome o;
  o.problem = make_test_problem(cfg.problem);
  o.theta0 = detail::default_theta0(o.problem, cfg);
  o.result = cfg.method == "m3c" ? m3c_optimize(o.problem, o.theta0, cfg.m3c) : saa_optimize(o.problem, o.theta0, cfg.saa);

  // reconstructions happen after the run totals were taken
  const Reconstruction rec = posterior_mean(o.problem, o.result.theta_hat, nullptr, detail::reconstruction_pcg());
  o.x_hat = rec.x;
  if (o.problem.x_true) {
    RunSummary& s = o.result.metrics.summary;
    s.rel_error = relative_error(rec.x, *o.problem.x_true);
    s.rel_error_initial = relative_error(posterior_mean(o.problem, o.theta0, nullptr, detail::reconstruction_pcg()).x, *o.problem.x_true);
  }

  detail::ensure_dir(cfg.output_dir);
  write_metrics_csv(cfg.output_dir / "metrics.csv", o.result.metrics, o.problem.p());
  write_theta_trace(cfg.output_dir / "theta_trace.csv", o.result, o.theta0);
  {
    std::ofstream out = detail::open_out(cfg.output_dir / "summary.json");
    out << summary_json(o, cfg).dump(2) << '\n';
  }
  {
    std::ofstream out = detail::open_out(cfg.output_dir / "xhat.bin");
    out.write(reinterpret_cast<const char*>(o.x_hat->data()), static_cast<std::streamsize>(o.x_hat->size() * sizeof(double)));
  }
  return o;
}

struct SliceRow {
  double coord = 0.0;
  double F = 0.0;
  double G = 0.0;
};

inline std::vector<double> slice_grid(const SliceConfig& s) {
  std::vector<double> g;
  for (Index i = 0; i < s.points; ++i) {
    const double u = static_cast<double>(i) / static_cast<double>(s.points - 1);
    g.push_back(s.log_spacing ? std::exp(std::log(s.lower) + u * (std::log(s.upper) - std::log(s.lower)))
                              : s.lower + u * (s.upper - s.lower));
  }
  g.front() = s.lower;
  g.back() = s.upper;
  g.push_back(s.anchor[s.axis]);
  std::sort(g.begin(), g.end());
  g.erase(std::unique(g.begin(), g.end()), g.end());
  return g;
}

/// Dense F and exact majorant G along one coordinate through the anchor.
inline std::vector<SliceRow> majorant_slice(const ExperimentConfig& cfg) {
  if (!cfg.slice) throw ConfigError("majorant-slice: the config needs a slice block");
  const SliceConfig& s = *cfg.slice;
  const ProblemSpec problem = make_test_problem(cfg.problem);
  if (problem.m > 4096) throw InvalidArgument("majorant_slice: problem too large for dense audits");
  if (s.anchor.size() != problem.p()) throw ConfigError("slice.anchor: expected " + std::to_string(problem.p()) + " entries");
  if (s.axis < 0 || s.axis >= problem.p()) throw ConfigError("slice.axis: out of range");
  problem.box.require_contains(s.anchor, "majorant_slice");
  if (s.lower < problem.box.lower()[s.axis] || s.upper > problem.box.upper()[s.axis]) {
    throw ConfigError("slice: grid leaves the box along the chosen axis");
  }
  const ExactSurrogate sur(problem, s.anchor);
  std::vector<SliceRow> rows;
  for (double v : slice_grid(s)) {
    Vec t = s.anchor;
    t[s.axis] = v;
    rows.push_back({v, eval_F_exact(problem, t).value, sur.value(t)});
  }
  detail::ensure_dir(cfg.output_dir);
  std::ofstream out = detail::open_out(cfg.output_dir / "slice.csv");
  out << "theta_" << (s.axis + 1) << ",F,G\n";
  for (const SliceRow& r : rows) out << fmt(r.coord) << ',' << fmt(r.F) << ',' << fmt(r.G) << '\n';
  return rows;
}

/// Dense SPD benchmark matrix with known log-determinant.
struct BenchMatrix {
  Mat M;
  double logdet = 0.0;
  double alpha = 0.0, beta = 0.0;
  double offdiag_log_fro = 0.0, offdiag_log_two = 0.0;
};

inline BenchMatrix make_bench_matrix(const BenchConfig& b, Index m, std::uint64_t seed) {
  BenchMatrix out;
  const CounterRng rng(seed, 0x6D6174ULL);
  Mat lg;
  if (b.matrix == "identity") {
    lg = Mat::Zero(m, m);
  } else if (b.matrix == "spd") {
    // eigenvalues log-spaced on [1, kappa] under a random rotation
    const Eigen::HouseholderQR<Mat> qr(gaussian_matrix(m, m, rng.bits(0)));
    const Mat q = qr.householderQ();
    Vec ev(m);
    for (Index i = 0; i < m; ++i) ev[i] = std::log(b.kappa) * static_cast<double>(i) / static_cast<double>(m - 1);
    lg = q * ev.asDiagonal() * q.transpose();
  } else {
    // log M = diag(d) + S with ||S||_F fixed
    Mat sym = gaussian_matrix(m, m, rng.bits(1));
    sym = 0.5 * (sym + sym.transpose()).eval();
    sym.diagonal().setZero();
    const double nrm = sym.norm();
    if (nrm > 0.0) sym *= b.offdiag / nrm;
    const double span = std::max(0.0, std::log(b.kappa) - 2.0 * b.offdiag);
    lg = sym;
    for (Index i = 0; i < m; ++i) lg(i, i) = span * rng.uniform(static_cast<std::uint64_t>(i) + 17);
  }
  lg = 0.5 * (lg + lg.transpose()).eval();
  out.M = dense_sym_function(lg, [](double x) { return std::exp(x); });
  out.M = 0.5 * (out.M + out.M.transpose()).eval();
  const Vec ev = dense_eigenvalues(out.M);
  out.alpha = ev.minCoeff();
  out.beta = ev.maxCoeff();
  out.logdet = ev.array().log().sum();
  Mat off = dense_logm(out.M);
  out.offdiag_log_two = hypermarg::detail::offdiag_two_norm(off);
  off.diagonal().setZero();
  out.offdiag_log_fro = off.norm();
  return out;
}

/// Constants of a single fixed matrix: L = 0, audited off-diagonal log norms.
inline SpectralConstants bench_constants(const BenchMatrix& bm, Index m) {
  SpectralConstants c;
  c.alpha = bm.alpha;
  c.beta = bm.beta;
  c.lipschitz = 0.0;
  c.varsigma_F = bm.M.norm() / bm.alpha;
  c.varsigma_2 = bm.beta / bm.alpha;
  c.radius = 1.0;
  c.p = 1;
  c.m = m;
  c.offdiag_log_fro = bm.offdiag_log_fro;
  c.offdiag_log_two = bm.offdiag_log_two;
  c.provenance = "dense eigensolve of a fixed matrix";
  return c;
}

struct BenchRow {
  Index m = 0, N = 0, K = 0;
  std::uint64_t seed = 0;
  double exact_logdet = 0.0, hutchinson_slq = 0.0, abs_err = 0.0, bound_eps = 0.0;
};

/// SLQ log-determinant benchmark over sizes, matrices, probe counts and trials.
inline std::vector<BenchRow> trace_bench(const ExperimentConfig& cfg, bool write = true) {
  if (!cfg.bench) throw ConfigError("trace-bench: the config needs a bench block");
  const BenchConfig& b = *cfg.bench;
  std::vector<BenchRow> rows;
  for (Index m : b.sizes) {
    for (Index mat = 0; mat < b.matrices; ++mat) {
      const std::uint64_t mseed = CounterRng(b.seed, static_cast<std::uint64_t>(m)).bits(static_cast<std::uint64_t>(mat));
      const BenchMatrix bm = make_bench_matrix(b, m, mseed);
      const SpectralConstants c = bench_constants(bm, m);
      const Index k = std::min(b.steps ? *b.steps : lanczos_steps_bound(c.kappa(), m, b.eps), m);
      const std::vector<Index> counts = b.probes.empty() ? std::vector<Index>{slq_samples_bound(b.eps, b.delta, c)} : b.probes;
      const SymOp op = SymOp::from_dense(bm.M);
      for (Index n : counts) {
        for (Index trial = 0; trial < b.trials; ++trial) {
          const std::uint64_t pseed = CounterRng(mseed, static_cast<std::uint64_t>(n)).bits(static_cast<std::uint64_t>(trial));
          const double est = slq_logdet(op, rademacher_probes(m, n, pseed), k).mean;
          rows.push_back({m, n, k, pseed, bm.logdet, est, std::abs(est - bm.logdet), b.eps});
        }
      }
    }
  }
  if (write) {
    detail::ensure_dir(cfg.output_dir);
    std::ofstream out = detail::open_out(cfg.output_dir / "bench.csv");
    out << "m,N,K,seed,exact_logdet,hutchinson_slq,abs_err,bound_eps\n";
    for (const BenchRow& r : rows) {
      out << r.m << ',' << r.N << ',' << r.K << ',' << r.seed << ',' << fmt(r.exact_logdet) << ',' << fmt(r.hutchinson_slq) << ','
          << fmt(r.abs_err) << ',' << fmt(r.bound_eps) << '\n';
    }
  }
  return rows;
}

struct SampleSizeInputs {
  double eps = 0.5;
  double delta = 0.1;
  double rho = 0.8;
  Index t = 0;
  double eps0 = 1.0;
  double delta0 = 0.1;
};

/// Bound evaluation with all inputs echoed.
inline Json sample_size(const SampleSizeInputs& in, const SpectralConstants& c) {
  const SlqSampleBound slq = slq_samples_detail(in.eps, in.delta, c);
  const ScheduleBound sched = m3c_sample_detail(in.eps0, in.rho, in.delta0, c, in.t);
  Json constants = {{"alpha", c.alpha},
                    {"beta", c.beta},
                    {"kappa", c.kappa()},
                    {"lipschitz", c.lipschitz},
                    {"varsigma_F", c.varsigma_F},
                    {"varsigma_2", c.varsigma_2},
                    {"radius", c.radius},
                    {"p", c.p},
                    {"m", c.m},
                    {"offdiag_log_fro", c.offdiag_log_fro ? Json(*c.offdiag_log_fro) : Json(nullptr)},
                    {"offdiag_log_two", c.offdiag_log_two ? Json(*c.offdiag_log_two) : Json(nullptr)},
                    {"provenance", c.provenance}};
  Json j;
  j["inputs"] = {{"eps", in.eps}, {"delta", in.delta}, {"rho", in.rho}, {"t", in.t}, {"eps0", in.eps0}, {"delta0", in.delta0}};
  j["constants"] = constants;
  j["outputs"] = {{"K", slq.lanczos_steps},
                  {"N", slq.samples},
                  {"N_t", sched.samples},
                  {"gamma", json_number(slq.gamma)},
                  {"log_gamma", slq.log_gamma},
                  {"gamma_t", json_number(sched.gamma_t)},
                  {"log_gamma_t", sched.log_gamma_t},
                  {"eta", json_number(slq.eta)},
                  {"eps_t", sched.eps_t},
                  {"delta_t", sched.delta_t},
                  {"offdiag_norms", slq.audited_norms ? "audited" : "alpha*varsigma"}};
  return j;
}

}  // namespace hypermarg::cli
