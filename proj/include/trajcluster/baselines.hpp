#pragma once

#include <vector>

#include "trajcluster/rng.hpp"
#include "trajcluster/tensor.hpp"

namespace trajcluster::baseline {

struct PcaResult {
  Tensor components;                       // n_components x D, orthonormal rows
  Tensor projected;                        // N x n_components
  std::vector<double> explained_variance;  // non-increasing
  Tensor mean;                             // 1 x D
};

/// Mean-centered PCA via cyclic Jacobi eigendecomposition of the covariance.
PcaResult pca(const Tensor& data, int n_components);

/// Symmetric eigendecomposition helper (descending eigenvalues).
void symmetric_eigen(const Tensor& symmetric, std::vector<double>& eigenvalues,
                     Tensor& eigenvectors_rows);

struct KMeansResult {
  std::vector<int> labels;
  Tensor centroids;  // k x D
  double inertia = 0.0;
};

/// k-means++ seeding, Lloyd iterations to assignment fixpoint; best of
/// `restarts` by inertia.
KMeansResult kmeans(const Tensor& data, int k, Rng& rng, int restarts = 10, int max_iters = 300);

/// Nelson-Aalen cumulative hazard at the last observed time
/// (0 when nothing is an event).
double nelson_aalen_cumulative_hazard(const std::vector<double>& times,
                                      const std::vector<int>& events);

/// Greedy binary survival tree; splits maximize the two-sample log-rank
/// statistic between children. Leaf risk is the Nelson-Aalen cumulative
/// hazard at the leaf's last observed time.
class SurvivalTree {
 public:
  struct Node {
    int feature = -1;  // -1 for leaves
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double risk = 0.0;
    bool is_leaf() const { return feature < 0; }
  };

  static SurvivalTree fit(const Tensor& features, const std::vector<double>& times,
                          const std::vector<int>& events, int max_depth = 4,
                          int max_thresholds = 32,
                          const std::vector<int>* feature_subset = nullptr);

  double predict_risk(const Tensor& features, int row) const;
  const std::vector<Node>& nodes() const { return nodes_; }
  int depth() const { return depth_; }

 private:
  std::vector<Node> nodes_;
  int depth_ = 0;
};

/// Ten depth-4 trees on fresh 75% feature subsets; each patient gets a
/// 10-dimensional risk vector which is then k-means clustered.
std::vector<int> rsf_cluster(const Tensor& features, const std::vector<double>& times,
                             const std::vector<int>& events, int k, Rng& rng, int n_trees = 10,
                             double feature_fraction = 0.75, int max_depth = 4);

}  // namespace trajcluster::baseline
