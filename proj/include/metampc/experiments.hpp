#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include <json.hpp>

#include "metampc/config.hpp"

namespace metampc {

double mean_of(const std::vector<double>& v);
// Sample standard deviation; 0 for fewer than two values.
double std_of(const std::vector<double>& v);
// Linear-interpolation percentile, p in [0, 100].
double percentile_of(std::vector<double> v, double p);

struct SettleScan {
  bool success = false;
  double settle_time_s = 0.0;
};

// Earliest t* such that |err[k](i)| <= band(i) for every component of every
// row at or after t*. success is false when even the last row violates the
// band.
SettleScan settle_scan(const std::vector<double>& t, const std::vector<Eigen::VectorXd>& err,
                       const Eigen::VectorXd& band);

// Median/p95 solver and fine-tune timings plus the control frequency the
// median solve time would sustain. Empty fine-tune set yields nulls.
nlohmann::json throughput_block(const std::vector<double>& solve_ms,
                                const std::vector<double>& ft_ms);

// Loop and prediction rates reported by the reference implementation on its
// original hardware, carried as metadata only.
nlohmann::json reference_timings_metadata();

// Trains the meta-initialization over the configured task family and writes
// the checkpoint plus a training-log CSV next to it. Returns the checkpoint
// path.
std::string run_meta_train(const ExperimentConfig& cfg);

// Runs all trials of the configured experiment, writes per-trial CSVs and
// manifest.json into cfg.output_dir, then aggregates and plots.
void run_experiment(const ExperimentConfig& cfg);

// Recomputes summary.json from manifest.json plus the per-trial CSVs in dir.
nlohmann::json aggregate_dir(const std::string& dir);

// Renders the experiment's SVG charts from the files in dir.
void plot_dir(const std::string& dir);

}  // namespace metampc
