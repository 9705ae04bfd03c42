#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "hypermarg/core/types.hpp"
#include "hypermarg/mm/m3c.hpp"
#include "hypermarg/model/test_problems.hpp"
#include "hypermarg/saa/saa.hpp"
#include "json.hpp"

namespace hypermarg::cli {

using Json = nlohmann::json;

/// Schema violation in an experiment configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SliceConfig {
  Vec anchor;
  Index axis = 0;  // 0-based component
  double lower = 0.0, upper = 0.0;
  Index points = 41;
  bool log_spacing = false;
};

struct BenchConfig {
  std::string matrix = "spd";  // spd | near_diagonal | identity
  std::vector<Index> sizes{20};
  double kappa = 50.0;
  double offdiag = 0.3;  // near_diagonal: Frobenius norm of the off-diagonal log part
  std::vector<Index> probes;  // empty: from the sample bound
  std::optional<Index> steps;  // empty: from the Lanczos step bound
  double eps = 0.5;
  double delta = 0.1;
  Index matrices = 1;  // per size
  Index trials = 10;   // probe draws per matrix and N
  std::uint64_t seed = 0;
};

struct ExperimentConfig {
  TestProblemOptions problem;
  std::string method = "m3c";
  std::optional<Vec> theta0;
  M3cConfig m3c;
  SaaConfig saa;
  std::filesystem::path output_dir = "out";
  std::optional<SliceConfig> slice;
  std::optional<BenchConfig> bench;
};

namespace detail {

/// Object reader that rejects keys it was not asked about.
class Section {
 public:
  Section(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  ~Section() = default;

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  const Json& raw(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    if (!has(key)) return;
    out = read<T>(j_.at(key), path_ + "." + key);
  }

  template <typename T>
  void get(const std::string& key, std::optional<T>& out) {
    if (!has(key)) return;
    out = read<T>(j_.at(key), path_ + "." + key);
  }

  std::string path(const std::string& key) const { return path_ + "." + key; }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError(path_ + ": unknown key '" + it.key() + "'");
    }
  }

  template <typename T>
  static T read(const Json& v, const std::string& where) {
    try {
      if constexpr (std::is_same_v<T, Vec>) {
        if (!v.is_array()) throw ConfigError(where + ": expected an array of numbers");
        Vec out(static_cast<Index>(v.size()));
        for (std::size_t i = 0; i < v.size(); ++i) {
          if (!v[i].is_number()) throw ConfigError(where + ": expected an array of numbers");
          out[static_cast<Index>(i)] = v[i].get<double>();
        }
        return out;
      } else if constexpr (std::is_same_v<T, std::vector<Index>>) {
        if (!v.is_array()) throw ConfigError(where + ": expected an array of integers");
        std::vector<Index> out;
        for (const auto& e : v) out.push_back(read<Index>(e, where));
        return out;
      } else if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw ConfigError(where + ": expected a boolean");
        return v.get<bool>();
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw ConfigError(where + ": expected a string");
        return v.get<std::string>();
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) throw ConfigError(where + ": expected an integer");
        if constexpr (std::is_unsigned_v<T>) {
          if (v.is_number_unsigned()) return v.get<T>();
          if (v.get<std::int64_t>() < 0) throw ConfigError(where + ": expected a nonnegative integer");
        }
        return v.get<T>();
      } else {
        if (!v.is_number()) throw ConfigError(where + ": expected a number");
        return v.get<T>();
      }
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(where + ": " + e.what());
    }
  }

 private:
  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename E>
E choose(const std::string& value, const std::vector<std::pair<std::string, E>>& options, const std::string& where) {
  std::string names;
  for (const auto& [name, e] : options) {
    if (name == value) return e;
    names += (names.empty() ? "" : ", ") + name;
  }
  throw ConfigError(where + ": '" + value + "' is not one of " + names);
}

inline void parse_problem(const Json& j, TestProblemOptions& p) {
  Section s(j, "problem");
  s.get("kind", p.kind);
  if (p.kind != "tomo" && p.kind != "deblur" && p.kind != "superres" && p.kind != "identity") {
    throw ConfigError("problem.kind: '" + p.kind + "' is not one of tomo, deblur, superres, identity");
  }
  s.get("size", p.size);
  s.get("noise_level", p.noise_level);
  s.get("seed", p.seed);
  s.get("theta_true", p.theta_true);
  s.get("x_true_source", p.x_true_source);
  s.get("sources", p.sources);
  s.get("receivers", p.receivers);
  if (s.has("nu")) {
    const double nu = Section::read<double>(s.raw("nu"), s.path("nu"));
    try {
      p.nu = matern_nu_from(nu);
    } catch (const InvalidArgument& e) {
      throw ConfigError(std::string("problem.nu: ") + e.what());
    }
  }
  s.get("psf_radius", p.psf_radius);
  s.get("frames", p.frames);
  s.get("decimation", p.decimation);
  s.get("shift_scale", p.shift_scale);
  s.get("affine", p.affine);
  s.get("prior_std", p.prior_std);
  s.get("forward_scale", p.forward_scale);
  s.get("prior_scale", p.prior_scale);
  if (s.has("box")) {
    Section b(s.raw("box"), "problem.box");
    Vec lo, hi;
    b.get("lower", lo);
    b.get("upper", hi);
    b.finish();
    try {
      p.box = Box(lo, hi);
    } catch (const InvalidArgument& e) {
      throw ConfigError(std::string("problem.box: ") + e.what());
    }
  }
  s.finish();
}

inline InnerScaling parse_scaling(const std::string& v, const std::string& where) {
  return choose<InnerScaling>(v, {{"relative", InnerScaling::relative}, {"none", InnerScaling::none}}, where);
}

inline GradientOption parse_gradient(const std::string& v, const std::string& where) {
  return choose<GradientOption>(v, {{"a", GradientOption::analytic}, {"b", GradientOption::finite_difference}}, where);
}

inline void parse_method(const Json& j, ExperimentConfig& c) {
  Section s(j, "method");
  s.get("name", c.method);
  if (c.method != "m3c" && c.method != "saa") throw ConfigError("method.name: '" + c.method + "' is not one of m3c, saa");
  s.get("theta0", c.theta0);
  if (c.method == "m3c") {
    M3cConfig& m = c.m3c;
    if (s.has("surrogate")) {
      m.surrogate = choose<M3cConfig::Surrogate>(Section::read<std::string>(s.raw("surrogate"), s.path("surrogate")),
                                                 {{"monte_carlo", M3cConfig::Surrogate::monte_carlo}, {"exact", M3cConfig::Surrogate::exact}},
                                                 s.path("surrogate"));
    }
    s.get("n_probes", m.n_probes);
    if (s.has("schedule")) {
      m.schedule = choose<M3cConfig::Schedule>(Section::read<std::string>(s.raw("schedule"), s.path("schedule")),
                                               {{"constant", M3cConfig::Schedule::constant}, {"geometric", M3cConfig::Schedule::geometric}},
                                               s.path("schedule"));
    }
    s.get("rho", m.schedule_rho);
    s.get("max_probes", m.max_probes);
    if (s.has("probe_policy")) {
      m.probe_policy = choose<M3cConfig::ProbePolicy>(Section::read<std::string>(s.raw("probe_policy"), s.path("probe_policy")),
                                                      {{"fresh", M3cConfig::ProbePolicy::fresh}, {"reuse", M3cConfig::ProbePolicy::reuse}},
                                                      s.path("probe_policy"));
    }
    if (s.has("gradient")) m.gradient = parse_gradient(Section::read<std::string>(s.raw("gradient"), s.path("gradient")), s.path("gradient"));
    s.get("fd_rel", m.fd_rel);
    s.get("max_outer", m.max_outer);
    s.get("max_inner", m.max_inner);
    s.get("inner_step_tol", m.inner_step_tol);
    s.get("outer_rel_tol", m.outer_rel_tol);
    if (s.has("inner_scaling")) {
      m.inner_scaling = parse_scaling(Section::read<std::string>(s.raw("inner_scaling"), s.path("inner_scaling")), s.path("inner_scaling"));
    }
    s.get("precond_rank", m.precond_rank);
    s.get("max_rejections", m.max_rejections);
    s.get("seed", m.seed);
    if (s.has("audit")) {
      Section a(s.raw("audit"), "method.audit");
      if (a.has("mode")) {
        m.audit.mode = choose<AuditMode>(Section::read<std::string>(a.raw("mode"), a.path("mode")),
                                         {{"auto", AuditMode::automatic}, {"exact", AuditMode::exact}, {"slq", AuditMode::slq}, {"off", AuditMode::off}},
                                         a.path("mode"));
      }
      a.get("slack", m.audit.slack);
      a.get("probes", m.audit.probes);
      a.get("lanczos_steps", m.audit.lanczos_steps);
      a.get("dense_limit", m.audit.dense_limit);
      a.finish();
    }
    if (m.n_probes < 1 || m.max_outer < 1 || m.max_inner < 1) throw ConfigError("method: n_probes, max_outer and max_inner must be >= 1");
    if (m.precond_rank < 0) throw ConfigError("method.precond_rank: must be >= 0");
    if (!(m.schedule_rho > 0.0 && m.schedule_rho < 1.0)) throw ConfigError("method.rho: must lie in (0, 1)");
  } else {
    SaaConfig& a = c.saa;
    s.get("n_probes", a.n_probes);
    s.get("lanczos_steps", a.lanczos_steps);
    if (s.has("gradient")) a.gradient = parse_gradient(Section::read<std::string>(s.raw("gradient"), s.path("gradient")), s.path("gradient"));
    s.get("symmetrized", a.symmetrized);
    s.get("fd_rel", a.fd_rel);
    s.get("max_iter", a.max_iter);
    s.get("step_tol", a.step_tol);
    if (s.has("inner_scaling")) {
      a.inner_scaling = parse_scaling(Section::read<std::string>(s.raw("inner_scaling"), s.path("inner_scaling")), s.path("inner_scaling"));
    }
    s.get("precond_rank", a.precond_rank);
    s.get("precond_rebuild", a.precond_rebuild);
    s.get("seed", a.seed);
    if (a.n_probes < 1 || a.lanczos_steps < 1 || a.max_iter < 1) throw ConfigError("method: n_probes, lanczos_steps and max_iter must be >= 1");
    if (a.precond_rank < 0) throw ConfigError("method.precond_rank: must be >= 0");
  }
  s.finish();
}

inline void parse_slice(const Json& j, ExperimentConfig& c) {
  Section s(j, "slice");
  SliceConfig sl;
  if (!s.has("anchor")) throw ConfigError("slice.anchor: required");
  s.get("anchor", sl.anchor);
  s.get("axis", sl.axis);
  if (!s.has("lower") || !s.has("upper")) throw ConfigError("slice: lower and upper are required");
  s.get("lower", sl.lower);
  s.get("upper", sl.upper);
  s.get("points", sl.points);
  if (s.has("spacing")) {
    sl.log_spacing = choose<bool>(Section::read<std::string>(s.raw("spacing"), s.path("spacing")), {{"linear", false}, {"log", true}}, s.path("spacing"));
  }
  s.finish();
  if (sl.points < 2) throw ConfigError("slice.points: must be >= 2");
  if (!(sl.lower < sl.upper)) throw ConfigError("slice: lower must be below upper");
  if (sl.log_spacing && !(sl.lower > 0.0)) throw ConfigError("slice: log spacing needs a positive lower end");
  c.slice = sl;
}

inline void parse_bench(const Json& j, ExperimentConfig& c) {
  Section s(j, "bench");
  BenchConfig b;
  s.get("matrix", b.matrix);
  if (b.matrix != "spd" && b.matrix != "near_diagonal" && b.matrix != "identity") {
    throw ConfigError("bench.matrix: '" + b.matrix + "' is not one of spd, near_diagonal, identity");
  }
  s.get("sizes", b.sizes);
  s.get("kappa", b.kappa);
  s.get("offdiag", b.offdiag);
  s.get("probes", b.probes);
  s.get("steps", b.steps);
  s.get("eps", b.eps);
  s.get("delta", b.delta);
  s.get("matrices", b.matrices);
  s.get("trials", b.trials);
  s.get("seed", b.seed);
  s.finish();
  if (b.sizes.empty()) throw ConfigError("bench.sizes: must not be empty");
  for (Index m : b.sizes)
    if (m < 2) throw ConfigError("bench.sizes: every size must be >= 2");
  for (Index n : b.probes)
    if (n < 1) throw ConfigError("bench.probes: every entry must be >= 1");
  if (b.steps && *b.steps < 1) throw ConfigError("bench.steps: must be >= 1");
  if (!(b.kappa >= 1.0)) throw ConfigError("bench.kappa: must be >= 1");
  if (!(b.eps > 0.0)) throw ConfigError("bench.eps: must be positive");
  if (!(b.delta > 0.0 && b.delta < 1.0)) throw ConfigError("bench.delta: must lie in (0, 1)");
  if (b.trials < 1 || b.matrices < 1) throw ConfigError("bench: trials and matrices must be >= 1");
  if (!(b.offdiag >= 0.0)) throw ConfigError("bench.offdiag: must be nonnegative");
  c.bench = b;
}

}  // namespace detail

inline ExperimentConfig parse_config(const Json& j) {
  ExperimentConfig c;
  detail::Section top(j, "config");
  if (top.has("problem")) detail::parse_problem(top.raw("problem"), c.problem);
  if (top.has("method")) detail::parse_method(top.raw("method"), c);
  if (top.has("output")) {
    detail::Section o(top.raw("output"), "output");
    std::string dir = c.output_dir.string();
    o.get("directory", dir);
    c.output_dir = dir;
    o.finish();
  }
  if (top.has("slice")) detail::parse_slice(top.raw("slice"), c);
  if (top.has("bench")) detail::parse_bench(top.raw("bench"), c);
  top.finish();
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string() + ": cannot open");
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  ExperimentConfig c = parse_config(j);
  // relative output directories resolve against the config file location
  if (c.output_dir.is_relative()) c.output_dir = path.parent_path() / c.output_dir;
  return c;
}

}  // namespace hypermarg::cli
