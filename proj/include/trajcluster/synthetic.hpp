#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "trajcluster/data.hpp"
#include "trajcluster/rng.hpp"
#include "trajcluster/tensor.hpp"

namespace trajcluster::synth {

/// Benchmark generator configuration. Defaults reproduce the full-size
/// benchmark: a 3-cluster noise block and a 6-cluster outcome block of 200
/// features each, with exponential time-to-event outcomes per outcome group.
struct SyntheticConfig {
  int n_patients = 60000;
  int k_noise = 3;
  int n_noise_features = 200;
  double noise_std = 0.8;
  double noise_center_min = -10.0;
  double noise_center_max = 10.0;
  int k_outcome = 3;
  double tte_min = 10.0;
  double tte_max = 10000.0;
  double censor_prob = 0.5;
  double tte_cap = 2000.0;
  int k_combined = 6;  // must equal 2 * k_outcome
  int n_outcome_features = 200;
  // Tighter than the noise block: supervised methods should be able to
  // recover the outcome structure while unsupervised ones prefer the noise.
  double combined_std = 0.5;
  double combined_center_min = -5.0;
  double combined_center_max = 5.0;
  std::uint64_t seed = 0;

  void validate() const;
  /// Scale the patient count by f in (0, 1]; everything else unchanged.
  SyntheticConfig scaled(double f) const;
};

/// Feature matrix with three ground-truth label sets and outcomes.
struct SyntheticDataset {
  Tensor features;  // n_patients x (n_noise_features + n_outcome_features)
  std::vector<int> noise_labels;
  std::vector<int> outcome_labels;
  std::vector<int> combined_labels;
  std::vector<SurvivalOutcome> outcomes;
  int n_noise_features = 0;

  std::size_t size() const { return noise_labels.size(); }
};

/// Rows sampled from isotropic Gaussians around centroids drawn uniformly
/// inside the per-feature bounding box; labels multinomial with equal
/// class probabilities.
std::pair<Tensor, std::vector<int>> generate_isotropic_clusters(int k, int n_features,
                                                                double stddev, double center_min,
                                                                double center_max, int n, Rng& rng);

/// Same sampling with caller-provided labels (centroids still drawn here).
Tensor isotropic_features_for_labels(const std::vector<int>& labels, int k, int n_features,
                                     double stddev, double center_min, double center_max,
                                     Rng& rng);

/// Base-10 geometric interpolation from tte_min to tte_max, inclusive.
std::vector<double> log_spaced_scales(int k, double tte_min, double tte_max);

/// Exponential time per patient keyed to its label's scale; censoring is a
/// fair-ish coin with probability censor_prob, and any time above tte_cap is
/// truncated to the cap and censored.
std::vector<SurvivalOutcome> generate_outcome_times(const std::vector<int>& labels, int k,
                                                    double tte_min, double tte_max,
                                                    double censor_prob, double tte_cap, Rng& rng);

/// Randomly halve each outcome cluster: combined label c satisfies
/// floor(c / 2) == outcome label. Odd clusters put the extra member in the
/// even half.
std::vector<int> split_combined_clusters(const std::vector<int>& outcome_labels, Rng& rng);

/// Per-column min-max scaling to [0, 1] followed by rounding, half up.
Tensor binarize_features(const Tensor& features);

SyntheticDataset generate_dataset(const SyntheticConfig& config);

/// Partition each feature row contiguously into n_windows equal-width
/// windows (all entries continuous and present).
Cohort to_sequences(const SyntheticDataset& dataset, int n_windows);

/// features.csv (header f0..fD-1) + labels.csv
/// (patient_id,noise_label,outcome_label,combined_label,time,event).
void write_dataset_csv(const SyntheticDataset& dataset, const std::string& out_dir);

SyntheticConfig config_from_json_file(const std::string& path);
std::string config_to_json(const SyntheticConfig& config);

}  // namespace trajcluster::synth
