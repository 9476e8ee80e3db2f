#pragma once

#include <string>
#include <vector>

#include "trajcluster/autodiff.hpp"
#include "trajcluster/data.hpp"
#include "trajcluster/rng.hpp"
#include "trajcluster/tensor.hpp"

namespace trajcluster::net {

enum class EncoderKind { feedforward, recurrent };

struct ModelConfig {
  int input_width = 0;  // per-window feature width
  int n_windows = 1;
  int embed_width = 256;
  int latent_width = 256;
  int n_gru_layers = 2;
  double dropout_p = 0.1;
  int n_clusters = 3;
  EncoderKind encoder_kind = EncoderKind::recurrent;
  FeatureLayout layout;  // per-window binary/continuous split

  void validate() const;
};

/// Training view of a subset of a cohort: per-window matrices plus the
/// flattened targets and validity masks the reconstruction loss consumes.
struct Batch {
  std::vector<Tensor> windows;  // n_windows tensors, each N x width
  Tensor flat_x;                // N x (n_windows * width)
  Tensor valid_cont;            // same shape: continuous entry present
  Tensor valid_bin;             // same shape: binary entry in a present window
  std::vector<double> times;
  std::vector<int> events;
  int size() const { return flat_x.rows(); }
};

Batch make_batch(const Cohort& cohort, const std::vector<int>& indices);

struct EncodeVars {
  ad::Var mu;
  ad::Var logvar;
  ad::Var z;
};

/// Variational sequence autoencoder with a linear risk head and a Student-t
/// cluster assignment layer over one shared latent space.
///
/// The recurrent encoder embeds each window with a shared two-layer ReLU
/// feature embedding, runs a stacked bidirectional GRU, aggregates the final
/// hidden states with one ReLU layer and produces mu/logvar heads. The
/// decoder emits the sequence in reverse order under teacher forcing: it
/// consumes [start, x_T, ..., x_2] through the same feature embedding and
/// reconstructs [x_T, ..., x_1], seeding its GRU hidden state with z. The
/// learned start vector stands in for the one missing teacher window.
class Network {
 public:
  Network() = default;
  static Network init(const ModelConfig& config, Rng& rng);

  const ModelConfig& config() const { return config_; }
  ad::ParamSet& params() { return params_; }
  const ad::ParamSet& params() const { return params_; }

  bool has_centroids() const { return params_.has("centroids"); }
  /// Change the cluster count; only valid before centroids are added.
  void set_n_clusters(int k);
  void set_centroids(const Tensor& centroids);
  const Tensor& centroids() const { return params_.at("centroids"); }

  EncodeVars encode(ad::Graph& g, ad::Binding& bind, const Batch& batch, bool training,
                    Rng* rng) const;
  ad::Var decode(ad::Graph& g, ad::Binding& bind, ad::Var z, const Batch& batch, bool training,
                 Rng* rng) const;
  ad::Var predict_risk(ad::Graph& g, ad::Binding& bind, ad::Var z) const;
  ad::Var soft_assign(ad::Graph& g, ad::Binding& bind, ad::Var z) const;

  /// Evaluation-mode latent means for a whole cohort, batched.
  Tensor encode_mu(const Cohort& cohort, int batch_size = 1024) const;
  /// Evaluation-mode soft assignments for given latent points.
  Tensor soft_assign_values(const Tensor& z) const;

  /// Checkpoint: params container + config manifest in one directory.
  void save(const std::string& dir) const;
  static Network load(const std::string& dir);

 private:
  ModelConfig config_;
  ad::ParamSet params_;
};

/// q_nk = (1 + ||z_n - centroid_k||^2)^(-1/2), row-normalized.
Tensor student_t_soft_assign(const Tensor& z, const Tensor& centroids);

/// p_nk proportional to q_nk^2 / f_k with f_k the soft cluster frequency;
/// rows renormalized. Throws a degenerate-cluster error when f_k == 0.
Tensor target_distribution(const Tensor& q);

std::vector<int> hard_labels(const Tensor& q);

/// k-means (k-means++ seeding, Lloyd to convergence or 100 iterations) on
/// evaluation-mode embeddings; resulting rows are pairwise distinct.
Tensor init_centroids(const Tensor& embeddings, int k, Rng& rng);

}  // namespace trajcluster::net
