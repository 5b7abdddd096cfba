// Command line driver: cell corrector builds, single microscale solves,
// epsilon sweeps with order fitting, and self-verification checks.
//
// Exit codes: 0 ok, 2 bad config, 3 contraction violated, 4 incompatible
// load, 5 solver stagnation, 6 measured order below the gate.

#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "homlab/config.hpp"
#include "homlab/errors.hpp"
#include "homlab/pipeline.hpp"

namespace {

int run(int argc, char** argv) {
  CLI::App app{"homlab: corrector hierarchies for perforated-domain diffusion"};
  app.require_subcommand(1);

  std::string config_path;
  std::string output_override;
  std::string run_name_override;
  bool force = false;
  int jobs = 1;
  int micro_k = 0;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "experiment config (json)")
        ->required();
    sub->add_option("--output", output_override, "override output directory");
    sub->add_option("--run-name", run_name_override, "override run name");
    sub->add_flag("--force", force, "overwrite an existing run directory");
  };

  CLI::App* cell = app.add_subcommand("cell", "build the corrector hierarchy");
  add_common(cell);

  CLI::App* micro = app.add_subcommand("micro", "solve one microscale problem");
  add_common(micro);
  micro->add_option("--eps", micro_k, "tiling count K, eps = 1/K")
      ->required()
      ->check(CLI::PositiveNumber);

  CLI::App* sweep = app.add_subcommand("sweep", "epsilon sweep with order fit");
  add_common(sweep);
  sweep->add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);

  CLI::App* verify = app.add_subcommand("verify", "run built-in checks");
  add_common(verify);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  homlab::ExperimentConfig cfg = homlab::ExperimentConfig::load(config_path);
  if (!output_override.empty()) cfg.output_dir = output_override;
  if (!run_name_override.empty()) cfg.run_name = run_name_override;

  const std::string run_name = cfg.run_name.value_or("");

  if (cell->parsed()) {
    const homlab::CellRunResult res = homlab::run_cell(cfg);
    const std::string dir =
        homlab::prepare_run_dir(cfg.output_dir, run_name, force);
    homlab::write_cell_archive(dir, cfg, res);
    std::printf("cell: kappa_p=%.6g c_p=%.6g -> %s\n", res.hierarchy.kappa_p,
                res.hierarchy.c_p, dir.c_str());
    return 0;
  }

  if (micro->parsed()) {
    const homlab::MicroRunResult res = homlab::run_micro(cfg, micro_k);
    const std::string dir =
        homlab::prepare_run_dir(cfg.output_dir, run_name, force);
    homlab::write_micro_outputs(dir, cfg, res);
    std::printf("micro: eps=%.6g iterations=%zu -> %s\n", res.eps,
                res.micro.trace.increments.size(), dir.c_str());
    return 0;
  }

  if (sweep->parsed()) {
    const homlab::SweepResult res = homlab::run_sweep(cfg, jobs);
    const std::string dir =
        homlab::prepare_run_dir(cfg.output_dir, run_name, force);
    homlab::write_sweep_outputs(dir, cfg, res);
    std::printf("sweep: slope=%.6g theory=%.6g r2=%.6g -> %s\n",
                res.report.slope, res.report.theory_order, res.report.r2,
                dir.c_str());
    if (res.gated && !res.report.order_gate) {
      std::fprintf(stderr, "ORDER: slope %.6g below gate %.6g\n",
                   res.report.slope, res.report.theory_order - 0.1);
      return 6;
    }
    return 0;
  }

  // verify
  bool all_pass = true;
  for (const auto& c : homlab::run_verify(cfg)) {
    std::printf("%s %s (%s)\n", c.pass ? "PASS" : "FAIL", c.name.c_str(),
                c.detail.c_str());
    all_pass = all_pass && c.pass;
  }
  return all_pass ? 0 : 6;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const homlab::ConfigError& e) {
    std::fprintf(stderr, "CONFIG: %s\n", e.what());
    return 2;
  } catch (const homlab::KappaError& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return 3;
  } catch (const homlab::CompatError& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return 4;
  } catch (const homlab::NoConvError& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return 5;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
