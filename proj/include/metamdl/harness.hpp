#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "metamdl/synth.hpp"
#include "metamdl/trainer.hpp"

namespace metamdl {

/// One experiment arm.  Canonical names: "F50-T50" (fixed 0.5/0.5),
/// "F10-T90", "F90-T10" (generally "F<p>-T<q>" with p + q = 100),
/// "Simple-G", "Simple-C", and "Ours-{G,C}-{window}" for the MAP rules.
struct SetupDef {
  std::string name;
  UpdateRule rule = UpdateRule::fixed;
  double fixed_lambda = 0.5;
  int window = 25;
};

SetupDef parse_setup(const std::string& name);  // throws ConfigError

/// Everything a full experiment needs.  Loaded from JSON; every field has a
/// desk-scale default so an empty object {} is a valid config.
struct ExperimentConfig {
  ModelSpec model;          // default: linear grid^2 -> grid^2, sigmoid
  bool model_spec_given = false;

  int grid = 16;
  int train_samples = 64;
  int eval_samples = 64;
  double contrast_a = 1.8;
  double noise_a = 0.4;
  double contrast_b = 0.5;
  double noise_b = 0.8;
  double downsample_a = 1.0;  // fraction of domain-A training data kept

  LossFn loss_a = LossFn::bce_plus_dice;
  LossFn loss_b = LossFn::bce_plus_dice;
  // Desk-scale default: the linear probe model needs a larger rate than the
  // full-scale reference setting (0.01) to converge within ~1e3 steps.
  double eta = 0.3;
  double inner_eta = -1.0;
  double split_ratio = 0.5;
  int batch_size = 8;
  int steps = 1200;
  double prior_alpha = 5.0;
  double prior_beta = 5.0;
  double simple_init = 0.5;

  std::vector<SetupDef> setups;  // default: the full 9-arm matrix
  int repeats = 5;
  std::uint64_t seed_base = 1000;

  ModelSpec effective_model() const;
  void validate() const;  // throws ConfigError
};

ExperimentConfig default_config();
ExperimentConfig load_config(const std::string& path);   // throws ConfigError/IoError
ExperimentConfig parse_config(const std::string& json);  // throws ConfigError
std::string config_to_json(const ExperimentConfig& cfg);

/// One (setup, repeat) training run with its held-out evaluation.
struct RunRecord {
  std::string setup;
  std::uint64_t seed = 0;
  std::vector<double> dsc;  // per domain, pooled hard-Dice at threshold 0.5
  std::vector<double> auc;  // per domain, pooled AUC (nan if undefined)
  int steps_completed = 0;
  bool diverged = false;
  double wall_seconds = 0.0;
  TrainLog log;
};

RunRecord run_single(const ExperimentConfig& cfg, const SetupDef& setup,
                     std::uint64_t seed);

/// Aggregated per-setup results.
struct ResultRow {
  std::string setup;
  int n_runs = 0;      // non-diverged runs included in the aggregates
  int n_diverged = 0;
  std::vector<double> dsc_mean, dsc_sd;  // per domain
  std::vector<double> auc_mean, auc_sd;
  double gain_mu = 0.0;     // nan when no baseline row is available
  double gain_sigma = 0.0;
};

struct ResultTable {
  std::vector<ResultRow> rows;  // in setup order
  int num_domains = 2;
};

/// GAIN against the equal-weights baseline: gain_mu sums the per-domain
/// mean-metric improvements, gain_sigma the per-domain reductions in
/// standard deviation (positive = tighter).  Throws ConfigError if the rows
/// disagree on the domain count.
void compute_gain(ResultRow& row, const ResultRow& baseline);

struct MatrixResult {
  ResultTable table;
  std::vector<RunRecord> records;  // setup-major, repeat-minor order
};

/// Run every setup x repeat cell with paired seeds (repeat i uses
/// seed_base + i across all setups) and aggregate.
MatrixResult run_matrix(const ExperimentConfig& cfg);

/// Write results.csv, runs.csv, per-run lambda trajectory CSVs and
/// manifest.json into out_dir (created if missing).  Identical inputs
/// produce byte-identical files.
void emit_results(const MatrixResult& result, const ExperimentConfig& cfg,
                  const std::string& out_dir);

/// Render the aggregate table as aligned text for the console.
std::string format_table(const ResultTable& table);

}  // namespace metamdl
