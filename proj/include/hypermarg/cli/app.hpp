#pragma once

#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "hypermarg/cli/commands.hpp"

namespace hypermarg::cli {

enum ExitCode : int { kOk = 0, kConfigError = 2, kNumericalFailure = 3 };

/// Command-line entry point; returns the process exit code.
inline int cli_main(int argc, char** argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Hyperparameter estimation for hierarchical linear inverse problems"};
  app.require_subcommand(1);

  std::string run_path, slice_path, bench_path;
  auto* run = app.add_subcommand("run", "Run an optimizer on a built-in problem");
  run->add_option("config", run_path, "JSON config")->required();
  auto* slice = app.add_subcommand("majorant-slice", "Export F and its majorant along one coordinate");
  slice->add_option("config", slice_path, "JSON config")->required();
  auto* bench = app.add_subcommand("trace-bench", "SLQ log-determinant benchmark");
  bench->add_option("config", bench_path, "JSON config")->required();

  auto* ss = app.add_subcommand("sample-size", "Evaluate the SLQ and schedule sample bounds");
  SampleSizeInputs in;
  SpectralConstants c;
  std::string ss_config;
  Index est_samples = 16;
  bool audit_norms = false;
  double off_fro = -1.0, off_two = -1.0;
  ss->add_option("--eps", in.eps, "accuracy")->capture_default_str();
  ss->add_option("--delta", in.delta, "failure probability")->capture_default_str();
  ss->add_option("--rho", in.rho, "schedule decay")->capture_default_str();
  ss->add_option("--t", in.t, "outer iteration")->capture_default_str();
  ss->add_option("--eps0", in.eps0, "initial schedule accuracy")->capture_default_str();
  ss->add_option("--delta0", in.delta0, "initial schedule failure probability")->capture_default_str();
  auto* o_alpha = ss->add_option("--alpha", c.alpha, "lower spectral bound");
  auto* o_beta = ss->add_option("--beta", c.beta, "upper spectral bound");
  auto* o_lip = ss->add_option("--lipschitz", c.lipschitz, "Lipschitz constant of Psi");
  auto* o_sf = ss->add_option("--varsigma-F", c.varsigma_F, "max Frobenius norm over alpha");
  auto* o_s2 = ss->add_option("--varsigma-2", c.varsigma_2, "max spectral norm over alpha");
  auto* o_r = ss->add_option("--radius", c.radius, "box radius");
  auto* o_p = ss->add_option("--p", c.p, "number of hyperparameters");
  auto* o_m = ss->add_option("--m", c.m, "data dimension");
  ss->add_option("--offdiag-log-fro", off_fro, "max ||offdiag(log Psi)||_F");
  ss->add_option("--offdiag-log-two", off_two, "max ||offdiag(log Psi)||_2");
  auto* o_cfg = ss->add_option("--config", ss_config, "estimate constants from this experiment config");
  ss->add_option("--samples", est_samples, "sample points for the estimate")->capture_default_str();
  ss->add_flag("--audit-log-norms", audit_norms, "dense audit of the off-diagonal log norms");
  for (auto* o : {o_alpha, o_beta, o_lip, o_sf, o_s2, o_r, o_p, o_m}) o->excludes(o_cfg);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*run) {
      const ExperimentConfig cfg = load_config(run_path);
      const RunOutcome o = run_experiment(cfg);
      out << summary_json(o, cfg).dump(2) << '\n';
    } else if (*slice) {
      const ExperimentConfig cfg = load_config(slice_path);
      const auto rows = majorant_slice(cfg);
      out << "wrote " << rows.size() << " rows to " << (cfg.output_dir / "slice.csv").string() << '\n';
    } else if (*bench) {
      const ExperimentConfig cfg = load_config(bench_path);
      const auto rows = trace_bench(cfg);
      out << "wrote " << rows.size() << " rows to " << (cfg.output_dir / "bench.csv").string() << '\n';
    } else if (*ss) {
      if (!ss_config.empty()) {
        const ExperimentConfig cfg = load_config(ss_config);
        const ProblemSpec problem = make_test_problem(cfg.problem);
        SpectralEstimateOptions eo;
        eo.samples = est_samples;
        eo.audit_log_norms = audit_norms;
        c = estimate_spectral_constants(problem, eo);
      } else {
        for (auto* o : {o_alpha, o_beta, o_sf, o_s2, o_r, o_p, o_m}) {
          if (o->count() == 0) throw ConfigError("sample-size: " + o->get_name() + " is required without --config");
        }
        if (o_lip->count() == 0) throw ConfigError("sample-size: --lipschitz is required without --config");
      }
      if ((off_fro >= 0.0) != (off_two >= 0.0)) throw ConfigError("sample-size: give both off-diagonal log norms or neither");
      if (off_fro >= 0.0) {
        c.offdiag_log_fro = off_fro;
        c.offdiag_log_two = off_two;
      }
      out << sample_size(in, c).dump(2) << '\n';
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const InvalidArgument& e) {
    err << "invalid argument: " << e.what() << '\n';
    return kConfigError;
  } catch (const NumericalFailure& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kNumericalFailure;
  }
  return kOk;
}

}  // namespace hypermarg::cli
