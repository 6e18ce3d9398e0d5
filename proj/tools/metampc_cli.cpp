#include <cstdint>
#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "metampc/config.hpp"
#include "metampc/errors.hpp"
#include "metampc/experiments.hpp"

int main(int argc, char** argv) {
  CLI::App app{"meta-learned residual dynamics MPC toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  std::string dir;
  bool paper_scale = false;
  int trials_override = 0;
  std::uint64_t seed_override = 0;

  auto* train = app.add_subcommand("meta-train", "train the meta initialization and save a checkpoint");
  train->add_option("--config", config_path, "experiment config JSON")->required();

  auto* run = app.add_subcommand("run", "run an experiment end to end: trials, aggregate, plots");
  run->add_option("--config", config_path, "experiment config JSON")->required();
  run->add_flag("--paper-scale", paper_scale, "use the full-scale trial and epoch counts");
  auto* trials_opt = run->add_option("--trials", trials_override, "override the trial count");
  auto* seed_opt = run->add_option("--seed", seed_override, "override the base seed");

  auto* agg = app.add_subcommand("aggregate", "recompute summary.json from per-trial CSVs");
  agg->add_option("--dir", dir, "experiment output directory")->required();

  auto* plot = app.add_subcommand("plot", "render SVG charts from an experiment directory");
  plot->add_option("--dir", dir, "experiment output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (train->parsed()) {
      metampc::ExperimentConfig cfg = metampc::load_config(config_path);
      const std::string checkpoint = metampc::run_meta_train(cfg);
      std::printf("checkpoint written to %s\n", checkpoint.c_str());
    } else if (run->parsed()) {
      metampc::ExperimentConfig cfg = metampc::load_config(config_path);
      if (paper_scale) metampc::apply_paper_scale(cfg);
      if (trials_opt->count() > 0) {
        if (trials_override < 1) throw metampc::ConfigError("--trials must be >= 1");
        cfg.trials = trials_override;
      }
      if (seed_opt->count() > 0) cfg.seed = seed_override;
      metampc::run_experiment(cfg);
      std::printf("outputs written to %s\n", cfg.output_dir.c_str());
    } else if (agg->parsed()) {
      metampc::aggregate_dir(dir);
      std::printf("summary written to %s/summary.json\n", dir.c_str());
    } else if (plot->parsed()) {
      metampc::plot_dir(dir);
      std::printf("charts written to %s\n", dir.c_str());
    }
  } catch (const metampc::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const metampc::ShapeError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const metampc::NumericError& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return 3;
  } catch (const metampc::SolverError& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
