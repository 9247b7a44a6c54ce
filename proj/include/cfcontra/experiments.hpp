#pragma once

#include <string>
#include <utility>
#include <vector>

#include "cfcontra/train.hpp"

namespace cfcontra {

struct RunSummary {
  std::string label;
  RunConfig config;
  EvalResult eval;
  double final_ce = 0.0;       // tail mean over the last 10% of iterations
  double final_entropy = 0.0;  // tail mean; 0 when entropy is off
  double final_pseudo_acc = 0.0;
  double final_labeled_frac = 0.0;
  std::vector<MetricsRecord> metrics;
};

/// Trains `config` on `data` and scores the target eval split.
RunSummary run_once(const std::string& label, const RunConfig& config, const Dataset& data);

/// Runs `configs` on up to `threads` worker threads (0: hardware concurrency).
/// Output order follows input order; runs share no mutable state.
std::vector<RunSummary> run_all(const std::vector<std::pair<std::string, RunConfig>>& configs, const Dataset& data,
                                unsigned threads = 0);

/// The four toggle patterns of the ablation, entropy always on:
/// ent, ent+st, ent+contra, ent+st+contra.
std::vector<std::pair<std::string, RunConfig>> ablation_configs(const RunConfig& base);
std::vector<RunSummary> run_ablation(const RunConfig& base, const Dataset& data, unsigned threads = 0);

/// One parameter and the values to try for it.
struct SweepAxis {
  std::string parameter;  // tau | alpha | threshold | lambda_contra | lambda_ent | learning_rate
  std::vector<double> values;
};

/// One-at-a-time sweep: every value of every axis is applied to `base`
/// alone. Throws ConfigError for unknown parameters or invalid values.
std::vector<std::pair<std::string, RunConfig>> sensitivity_configs(const RunConfig& base,
                                                                   const std::vector<SweepAxis>& grid);
std::vector<RunSummary> run_sensitivity(const RunConfig& base, const std::vector<SweepAxis>& grid,
                                        const Dataset& data, unsigned threads = 0);

/// Parses "name=v1,v2,..." into an axis.
SweepAxis parse_sweep_axis(const std::string& text);

/// CSV with label, toggles, swept values, miou, final losses and pseudo_acc.
std::string summary_table_csv(const std::vector<RunSummary>& runs);

}  // namespace cfcontra
