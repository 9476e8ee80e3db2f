#include "trajcluster/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "trajcluster/io.hpp"

namespace trajcluster::train {

void TrainConfig::validate() const {
  if (epochs < 0) throw std::invalid_argument("TrainConfig: epochs must be >= 0");
  if (batch_size <= 0) throw std::invalid_argument("TrainConfig: batch_size must be > 0");
  if (!(learning_rate >= 0.0)) throw std::invalid_argument("TrainConfig: learning_rate must be >= 0");
  if (weight_decay < 0.0) throw std::invalid_argument("TrainConfig: weight_decay must be >= 0");
  if (!(split_fraction > 0.0) || split_fraction > 1.0)
    throw std::invalid_argument("TrainConfig: split_fraction must lie in (0, 1]");
  if (n_repeats < 1) throw std::invalid_argument("TrainConfig: n_repeats must be >= 1");
  weights.validate();
}

AdamW::AdamW(double learning_rate, double weight_decay, double beta1, double beta2,
             double epsilon)
    : lr_(learning_rate), wd_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(epsilon) {}

void AdamW::step(ad::ParamSet& params, const std::map<std::string, Tensor>& grads) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, t_);
  const double bc2 = 1.0 - std::pow(beta2_, t_);
  for (const auto& [name, grad] : grads) {
    if (grad.empty()) continue;
    ad::ParamSet::Entry& entry = params.entry(name);
    if (!entry.trainable) continue;
    Tensor& value = entry.value;
    if (!value.same_shape(grad))
      throw std::invalid_argument("AdamW: gradient shape mismatch for " + name);
    auto it = moments_.find(name);
    if (it == moments_.end())
      it = moments_
               .emplace(name, std::make_pair(Tensor(value.rows(), value.cols()),
                                             Tensor(value.rows(), value.cols())))
               .first;
    Tensor& m = it->second.first;
    Tensor& v = it->second.second;
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double gi = grad[i];
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * gi;
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * gi * gi;
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      value[i] -= lr_ * m_hat / (std::sqrt(v_hat) + eps_);
      if (entry.weight_decay && wd_ > 0.0) value[i] -= lr_ * wd_ * value[i];
    }
  }
}

std::string loss_curve_csv(const std::vector<EpochLoss>& curve) {
  std::ostringstream out;
  out << "epoch,L_r,L_KL,L_y,L_c,total\n";
  for (std::size_t e = 0; e < curve.size(); ++e) {
    out << (e + 1) << ',' << io::format_double(curve[e].recon) << ','
        << io::format_double(curve[e].kl) << ',' << io::format_double(curve[e].outcome) << ','
        << io::format_double(curve[e].cluster) << ',' << io::format_double(curve[e].total)
        << '\n';
  }
  return out.str();
}

namespace {

std::map<std::string, Tensor> collect_grads(const ad::Binding& bind) {
  std::map<std::string, Tensor> grads;
  for (const auto& [name, var] : bind.leaves()) grads[name] = var.grad();
  return grads;
}

void maybe_checkpoint(const net::Network& model, const TrainConfig& config, int epoch) {
  if (config.checkpoint_dir.empty() || config.checkpoint_every <= 0) return;
  if ((epoch + 1) % config.checkpoint_every != 0) return;
  io::ensure_dir(config.checkpoint_dir);
  model.params().save(config.checkpoint_dir + "/params_epoch" + std::to_string(epoch + 1) +
                      ".bin");
}

std::vector<std::vector<int>> make_batches(const std::vector<std::size_t>& order,
                                           int batch_size) {
  std::vector<std::vector<int>> batches;
  for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(batch_size));
    std::vector<int> idx;
    idx.reserve(end - start);
    for (std::size_t i = start; i < end; ++i) idx.push_back(static_cast<int>(order[i]));
    batches.push_back(std::move(idx));
  }
  return batches;
}

double sharp_fraction_of(const Tensor& q, double threshold = 0.7) {
  if (q.rows() == 0) return 0.0;
  int count = 0;
  for (int i = 0; i < q.rows(); ++i) {
    double best = 0.0;
    for (int j = 0; j < q.cols(); ++j) best = std::max(best, q(i, j));
    if (best > threshold) ++count;
  }
  return static_cast<double>(count) / q.rows();
}

}  // namespace

PretrainResult pretrain(net::Network& model, const Cohort& cohort, const TrainConfig& config) {
  config.validate();
  cohort.validate();
  if (cohort.size() == 0) throw std::invalid_argument("pretrain: empty cohort");

  Rng rng(config.seed);
  AdamW optimizer(config.learning_rate, config.weight_decay);
  loss::LossWeights weights = config.weights;
  weights.w_y = 0.0;
  weights.w_c = 0.0;

  PretrainResult result;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::vector<std::size_t> order = rng.permutation(cohort.size());
    EpochLoss avg;
    double seen = 0.0;
    for (const auto& idx : make_batches(order, config.batch_size)) {
      net::Batch batch = net::make_batch(cohort, idx);
      ad::Graph g;
      ad::Binding bind(g, model.params());
      net::EncodeVars enc = model.encode(g, bind, batch, true, &rng);
      ad::Var x_hat = model.decode(g, bind, enc.z, batch, true, &rng);

      loss::LossComponents parts;
      ad::Var total;
      try {
        parts.recon =
            loss::recon_loss(x_hat, batch.flat_x, batch.valid_cont, batch.valid_bin, weights.w_b);
        parts.kl = loss::kl_loss(enc.mu, enc.logvar);
        total = loss::total_loss(g, parts, weights);
      } catch (const std::domain_error& e) {
        throw std::runtime_error("pretraining diverged at epoch " + std::to_string(epoch + 1) +
                                 ": " + e.what());
      }
      const double tv = total.value()(0, 0);
      if (!std::isfinite(tv))
        throw std::runtime_error("pretraining diverged at epoch " + std::to_string(epoch + 1));

      g.backward(total);
      optimizer.step(model.params(), collect_grads(bind));

      const double w = static_cast<double>(idx.size());
      avg.recon += parts.recon.value()(0, 0) * w;
      avg.kl += parts.kl.value()(0, 0) * w;
      avg.total += tv * w;
      seen += w;
    }
    avg.recon /= seen;
    avg.kl /= seen;
    avg.total /= seen;
    result.curve.push_back(avg);
    maybe_checkpoint(model, config, epoch);
  }
  return result;
}

FinetuneResult finetune_cluster(net::Network& model, const Cohort& cohort,
                                const TrainConfig& config) {
  config.validate();
  cohort.validate();
  if (cohort.size() == 0) throw std::invalid_argument("finetune_cluster: empty cohort");
  if (config.weights.w_y > 0.0 && cohort.outcomes.empty())
    throw std::invalid_argument("finetune_cluster: outcome loss requested but cohort has no outcomes");

  Rng rng(config.seed);
  const bool clustering = config.weights.w_c > 0.0;
  if (clustering && !model.has_centroids()) {
    Tensor embeddings = model.encode_mu(cohort);
    model.set_centroids(net::init_centroids(embeddings, model.config().n_clusters, rng));
  }

  AdamW optimizer(config.learning_rate, config.weight_decay);
  const loss::LossWeights& weights = config.weights;

  FinetuneResult result;
  Tensor q_full;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    Tensor p_full;
    if (clustering) {
      q_full = model.soft_assign_values(model.encode_mu(cohort));
      result.sharp_fraction.push_back(sharp_fraction_of(q_full));
      p_full = net::target_distribution(q_full);
    }

    std::vector<std::size_t> order = rng.permutation(cohort.size());
    EpochLoss avg;
    double seen = 0.0;
    for (const auto& idx : make_batches(order, config.batch_size)) {
      net::Batch batch = net::make_batch(cohort, idx);
      ad::Graph g;
      ad::Binding bind(g, model.params());
      net::EncodeVars enc = model.encode(g, bind, batch, true, &rng);

      loss::LossComponents parts;
      ad::Var total;
      try {
        if (weights.w_r > 0.0) {
          ad::Var x_hat = model.decode(g, bind, enc.z, batch, true, &rng);
          parts.recon = loss::recon_loss(x_hat, batch.flat_x, batch.valid_cont, batch.valid_bin,
                                         weights.w_b);
        }
        if (weights.w_kl > 0.0) parts.kl = loss::kl_loss(enc.mu, enc.logvar);
        if (weights.w_y > 0.0) {
          ad::Var risk = model.predict_risk(g, bind, enc.z);
          parts.outcome = loss::cox_loss(risk, batch.times, batch.events);
        }
        if (weights.w_c > 0.0) {
          ad::Var q = model.soft_assign(g, bind, enc.z);
          Tensor p_batch(static_cast<int>(idx.size()), p_full.cols());
          for (std::size_t r = 0; r < idx.size(); ++r)
            for (int c = 0; c < p_full.cols(); ++c)
              p_batch(static_cast<int>(r), c) = p_full(idx[r], c);
          parts.cluster = loss::cluster_loss(p_batch, q);
        }
        total = loss::total_loss(g, parts, weights);
      } catch (const std::domain_error& e) {
        throw std::runtime_error("fine-tuning diverged at epoch " + std::to_string(epoch + 1) +
                                 ": " + e.what());
      }
      const double tv = total.value()(0, 0);
      if (!std::isfinite(tv))
        throw std::runtime_error("fine-tuning diverged at epoch " + std::to_string(epoch + 1));

      g.backward(total);
      optimizer.step(model.params(), collect_grads(bind));

      const double w = static_cast<double>(idx.size());
      if (parts.recon.valid()) avg.recon += parts.recon.value()(0, 0) * w;
      if (parts.kl.valid()) avg.kl += parts.kl.value()(0, 0) * w;
      if (parts.outcome.valid()) avg.outcome += parts.outcome.value()(0, 0) * w;
      if (parts.cluster.valid()) avg.cluster += parts.cluster.value()(0, 0) * w;
      avg.total += tv * w;
      seen += w;
    }
    avg.recon /= seen;
    avg.kl /= seen;
    avg.outcome /= seen;
    avg.cluster /= seen;
    avg.total /= seen;
    result.curve.push_back(avg);
    maybe_checkpoint(model, config, epoch);
  }

  if (clustering) {
    result.q = model.soft_assign_values(model.encode_mu(cohort));
    result.sharp_fraction.push_back(sharp_fraction_of(result.q));
    result.labels = net::hard_labels(result.q);
  }
  return result;
}

std::map<std::string, MetricStats> repeated_runs(const Cohort& cohort, const TrainConfig& config,
                                                 const RunFn& run) {
  config.validate();
  const std::size_t n = cohort.size();
  const std::size_t split_n =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(config.split_fraction *
                                                                   static_cast<double>(n))));
  std::map<std::string, std::vector<double>> samples;
  for (int r = 0; r < config.n_repeats; ++r) {
    Rng split_rng = Rng::derive(config.seed, static_cast<std::uint64_t>(r));
    std::vector<std::size_t> perm = split_rng.permutation(n);
    std::vector<int> indices(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(split_n));
    std::sort(indices.begin(), indices.end());
    const std::uint64_t repeat_seed =
        Rng::derive(config.seed, 1000 + static_cast<std::uint64_t>(r)).next_u64();
    for (const auto& [name, value] : run(indices, repeat_seed)) samples[name].push_back(value);
  }

  std::map<std::string, MetricStats> stats;
  for (const auto& [name, values] : samples) {
    MetricStats s;
    for (double v : values) s.mean += v;
    s.mean /= static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) var += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(var / static_cast<double>(values.size()));
    stats[name] = s;
  }
  return stats;
}

}  // namespace trajcluster::train
