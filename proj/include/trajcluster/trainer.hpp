#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "trajcluster/data.hpp"
#include "trajcluster/losses.hpp"
#include "trajcluster/network.hpp"

namespace trajcluster::train {

struct TrainConfig {
  int epochs = 25;
  int batch_size = 256;
  double learning_rate = 1e-3;
  double weight_decay = 1e-6;
  std::uint64_t seed = 0;
  loss::LossWeights weights;
  double split_fraction = 0.8;
  int n_repeats = 5;
  // When checkpoint_dir is nonempty, parameters are saved there every
  // checkpoint_every epochs (params_epoch<N>.bin).
  std::string checkpoint_dir;
  int checkpoint_every = 0;

  void validate() const;
};

/// Adam with decoupled weight decay. Decay touches only tensors flagged
/// weight_decay in the ParamSet (weight matrices; never biases, the decoder
/// start vector, or centroids).
class AdamW {
 public:
  AdamW(double learning_rate, double weight_decay, double beta1 = 0.9, double beta2 = 0.999,
        double epsilon = 1e-8);
  void step(ad::ParamSet& params, const std::map<std::string, Tensor>& grads);
  int steps_taken() const { return t_; }

 private:
  double lr_, wd_, beta1_, beta2_, eps_;
  int t_ = 0;
  std::map<std::string, std::pair<Tensor, Tensor>> moments_;
};

/// Per-epoch averages of the unweighted loss components.
struct EpochLoss {
  double recon = 0.0;
  double kl = 0.0;
  double outcome = 0.0;
  double cluster = 0.0;
  double total = 0.0;
};

std::string loss_curve_csv(const std::vector<EpochLoss>& curve);

struct PretrainResult {
  std::vector<EpochLoss> curve;
};

/// Unsupervised pre-training: minimizes w_r*L_r + w_kl*L_KL with AdamW.
/// Aborts (naming the epoch) if the loss goes non-finite.
PretrainResult pretrain(net::Network& model, const Cohort& cohort, const TrainConfig& config);

struct FinetuneResult {
  std::vector<EpochLoss> curve;
  std::vector<int> labels;  // argmax of the final evaluation-mode Q
  Tensor q;                 // final evaluation-mode soft assignments
  /// sharp_fraction[e] = fraction of patients with max q > 0.7 measured on
  /// the full cohort after epoch e (index 0 = before training).
  std::vector<double> sharp_fraction;
};

/// Joint self-training: the target distribution P is recomputed once per
/// epoch from the full-cohort evaluation-mode Q; minibatches then optimize
/// the combined objective against those fixed targets. Initializes
/// centroids from the pretrained embeddings when absent. With w_c == 0 the
/// clustering machinery is skipped entirely (plain warmup of the other
/// objectives) and labels/q stay empty.
FinetuneResult finetune_cluster(net::Network& model, const Cohort& cohort,
                                const TrainConfig& config);

struct MetricStats {
  double mean = 0.0;
  double stddev = 0.0;  // population standard deviation (0 for one repeat)
};

using RunFn = std::function<std::map<std::string, double>(const std::vector<int>& split_indices,
                                                          std::uint64_t repeat_seed)>;

/// Each repeat draws a fresh seeded split of split_fraction * N patients,
/// hands it to the callback, and the per-metric mean and standard deviation
/// are reported.
std::map<std::string, MetricStats> repeated_runs(const Cohort& cohort, const TrainConfig& config,
                                                 const RunFn& run);

}  // namespace trajcluster::train
