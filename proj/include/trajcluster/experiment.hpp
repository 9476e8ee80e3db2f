#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "trajcluster/losses.hpp"
#include "trajcluster/network.hpp"
#include "trajcluster/synthetic.hpp"
#include "trajcluster/trainer.hpp"

namespace trajcluster::exp {

enum class Scenario { recon_only, outcome_only, combined, custom };

Scenario scenario_from_string(const std::string& s);
std::string scenario_to_string(Scenario s);

/// Loss-weight presets: recon_only (w_r=0.5, w_y=0), outcome_only
/// (w_r=0, w_y=1), combined (w_r=0.05, w_y=1); w_c=0.25 and w_kl=1e-5
/// throughout.
loss::LossWeights scenario_weights(Scenario s, const loss::LossWeights* custom = nullptr);

/// One manifest drives a run end to end.
struct ExperimentManifest {
  std::string dataset_dir;  // gen-data output: features.csv + labels.csv
  std::string out_dir;
  std::string scenario = "combined";
  int k = 6;
  std::uint64_t seed = 0;
  bool skip_pretrain = false;

  // model
  std::string encoder_kind = "feedforward";
  int n_windows = 1;
  int embed_width = 64;
  int latent_width = 16;
  int n_gru_layers = 2;
  double dropout_p = 0.1;

  // optimization
  int pretrain_epochs = 40;
  int pretrain_batch_size = 256;
  double pretrain_learning_rate = 2e-3;
  int warmup_epochs = 50;  // scenario objective without the cluster loss
  int finetune_epochs = 75;
  // Benchmark schedules per scenario: the autoencoder-only variant converges
  // on the dominant structure quickly and overfits the fine structure if
  // trained much longer, while the joint objective needs the longer budget.
  int recon_warmup_epochs = 15;
  int recon_finetune_epochs = 25;
  int outcome_warmup_epochs = 25;
  int outcome_finetune_epochs = 50;
  int finetune_batch_size = 256;
  double finetune_learning_rate = 1e-3;
  double weight_decay = 1e-6;
  // Model-input scaling: "per_feature" (min-max per column), "global"
  // (one min-max map for the whole matrix), or "none".
  std::string normalize_features = "per_feature";
  loss::LossWeights custom_weights;  // used when scenario == custom

  void validate() const;
  static ExperimentManifest from_json_file(const std::string& path);
  std::string to_json() const;
};

synth::SyntheticDataset read_dataset_csv(const std::string& dir);

struct RunResult {
  std::vector<int> labels;
  train::FinetuneResult finetune;
  std::map<std::string, double> metrics;
};

/// gen-data: write the dataset plus a manifest copy into out_dir.
void cmd_gen_data(const synth::SyntheticConfig& config, const std::string& out_dir);

/// run: pretrain (optional), init centroids, finetune, evaluate; writes
/// loss curves, assignments, metrics JSON, KM curves and a checkpoint.
RunResult run_experiment(const ExperimentManifest& manifest);

// ---------------------------------------------------------------------------
// Table-2 style benchmark matrix

struct Table2Result {
  std::vector<std::string> methods;  // row order
  std::vector<std::string> columns;  // k3/k6 x unsupervised/outcome/combined
  std::vector<std::array<double, 6>> mean;
  std::vector<std::array<double, 6>> stddev;
  std::string note;

  double at(const std::string& method, const std::string& column) const;
};

/// Shared state for the benchmark drivers: the dataset plus the cohort view
/// the model consumes (rank-normalized features when the manifest says so).
struct BenchmarkContext {
  synth::SyntheticDataset dataset;
  Cohort cohort;
  ExperimentManifest manifest;
  std::uint64_t seed = 0;
};

BenchmarkContext make_benchmark_context(const synth::SyntheticConfig& config,
                                        const ExperimentManifest& manifest);

/// The cohort view the model consumes: features scaled per the manifest's
/// normalize_features convention, one window per n_windows split.
Cohort benchmark_cohort(const synth::SyntheticDataset& dataset,
                        const ExperimentManifest& manifest);

/// All methods x {k=3, k=6} x n_repeats splits; ARI against the three truth
/// label sets. Writes table2_ari.csv / table2_ari_std.csv / table2_notes.txt
/// when out_dir is nonempty.
Table2Result reproduce_table2(BenchmarkContext& ctx, const std::string& out_dir, int n_repeats);

/// Mean multivariate log-rank statistic of the discovered clusters per
/// scenario for each requested k (n_repeats splits each).
std::map<int, std::map<std::string, train::MetricStats>> logrank_by_k(
    BenchmarkContext& ctx, const std::vector<int>& ks, int n_repeats);

/// Train one scenario on the full benchmark cohort (warmup + self-training,
/// per-scenario epoch budgets from the manifest).
train::FinetuneResult run_scenario_training(const BenchmarkContext& ctx, Scenario scenario,
                                            int k, std::uint64_t seed);

}  // namespace trajcluster::exp
