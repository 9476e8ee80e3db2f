#pragma once

#include <stdexcept>
#include <vector>

namespace trajcluster {

/// Follow-up time plus event indicator (1 = event observed, 0 = censored).
struct SurvivalOutcome {
  double time = 0.0;
  int event = 0;
};

/// Per-window feature layout: the binary (multi-hot) block comes first,
/// followed by the continuous block.
struct FeatureLayout {
  int n_binary = 0;
  int n_continuous = 0;
  int width() const { return n_binary + n_continuous; }
};

constexpr double kMissingContinuous = -0.1;

/// One patient's sequence of fixed-width window vectors plus presence masks.
/// Empty windows hold the canonical empty vector: binary zeros and -0.1 for
/// every continuous entry.
struct TrajectoryTensor {
  std::vector<std::vector<double>> windows;        // T x width
  std::vector<char> mask;                          // per-window: any data present
  std::vector<std::vector<char>> continuous_mask;  // T x n_continuous: entry present
  int index_window = -1;                           // alignment anchor; -1 = none

  std::size_t n_windows() const { return windows.size(); }
  int width() const { return windows.empty() ? 0 : static_cast<int>(windows[0].size()); }
};

std::vector<double> canonical_empty_window(const FeatureLayout& layout);

/// A set of trajectories sharing one layout, with optional aligned outcomes.
struct Cohort {
  FeatureLayout layout;
  std::vector<TrajectoryTensor> trajectories;
  std::vector<SurvivalOutcome> outcomes;  // empty or one per trajectory

  std::size_t size() const { return trajectories.size(); }
  void validate() const;
};

}  // namespace trajcluster
