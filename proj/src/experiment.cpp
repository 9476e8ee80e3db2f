#include "trajcluster/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "trajcluster/baselines.hpp"
#include "trajcluster/ehr.hpp"
#include "trajcluster/io.hpp"
#include "trajcluster/metrics.hpp"

namespace trajcluster::exp {

Scenario scenario_from_string(const std::string& s) {
  if (s == "recon_only") return Scenario::recon_only;
  if (s == "outcome_only") return Scenario::outcome_only;
  if (s == "combined") return Scenario::combined;
  if (s == "custom") return Scenario::custom;
  throw std::invalid_argument("unknown scenario: " + s +
                              " (expected recon_only|outcome_only|combined|custom)");
}

std::string scenario_to_string(Scenario s) {
  switch (s) {
    case Scenario::recon_only: return "recon_only";
    case Scenario::outcome_only: return "outcome_only";
    case Scenario::combined: return "combined";
    case Scenario::custom: return "custom";
  }
  throw std::logic_error("unknown scenario enum");
}

loss::LossWeights scenario_weights(Scenario s, const loss::LossWeights* custom) {
  loss::LossWeights w;
  w.w_c = 0.25;
  w.w_kl = 1e-5;
  w.w_b = 1.0;
  switch (s) {
    case Scenario::recon_only:
      w.w_r = 0.5;
      w.w_y = 0.0;
      break;
    case Scenario::outcome_only:
      w.w_r = 0.0;
      w.w_y = 1.0;
      break;
    case Scenario::combined:
      w.w_r = 0.05;
      w.w_y = 1.0;
      break;
    case Scenario::custom:
      if (!custom) throw std::invalid_argument("custom scenario needs explicit weights");
      w = *custom;
      break;
  }
  return w;
}

void ExperimentManifest::validate() const {
  if (dataset_dir.empty()) throw std::invalid_argument("manifest: dataset_dir is required");
  if (out_dir.empty()) throw std::invalid_argument("manifest: out_dir is required");
  scenario_from_string(scenario);
  if (k < 2) throw std::invalid_argument("manifest: k must be >= 2");
  if (n_windows < 1) throw std::invalid_argument("manifest: n_windows must be >= 1");
  if (encoder_kind != "feedforward" && encoder_kind != "recurrent")
    throw std::invalid_argument("manifest: encoder_kind must be feedforward|recurrent");
}

ExperimentManifest ExperimentManifest::from_json_file(const std::string& path) {
  nlohmann::json j = nlohmann::json::parse(io::read_file(path));
  ExperimentManifest m;
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("dataset_dir", m.dataset_dir);
  get("out_dir", m.out_dir);
  get("scenario", m.scenario);
  get("k", m.k);
  get("seed", m.seed);
  get("skip_pretrain", m.skip_pretrain);
  get("encoder_kind", m.encoder_kind);
  get("n_windows", m.n_windows);
  get("embed_width", m.embed_width);
  get("latent_width", m.latent_width);
  get("n_gru_layers", m.n_gru_layers);
  get("dropout_p", m.dropout_p);
  get("pretrain_epochs", m.pretrain_epochs);
  get("pretrain_batch_size", m.pretrain_batch_size);
  get("pretrain_learning_rate", m.pretrain_learning_rate);
  get("warmup_epochs", m.warmup_epochs);
  get("finetune_epochs", m.finetune_epochs);
  get("recon_warmup_epochs", m.recon_warmup_epochs);
  get("recon_finetune_epochs", m.recon_finetune_epochs);
  get("outcome_warmup_epochs", m.outcome_warmup_epochs);
  get("outcome_finetune_epochs", m.outcome_finetune_epochs);
  get("finetune_batch_size", m.finetune_batch_size);
  get("finetune_learning_rate", m.finetune_learning_rate);
  get("weight_decay", m.weight_decay);
  get("normalize_features", m.normalize_features);
  if (j.contains("custom_weights")) {
    const auto& w = j.at("custom_weights");
    auto getw = [&](const char* key, double& field) {
      if (w.contains(key)) field = w.at(key).get<double>();
    };
    getw("w_r", m.custom_weights.w_r);
    getw("w_y", m.custom_weights.w_y);
    getw("w_c", m.custom_weights.w_c);
    getw("w_kl", m.custom_weights.w_kl);
    getw("w_b", m.custom_weights.w_b);
  }
  return m;
}

std::string ExperimentManifest::to_json() const {
  nlohmann::json j;
  j["dataset_dir"] = dataset_dir;
  j["out_dir"] = out_dir;
  j["scenario"] = scenario;
  j["k"] = k;
  j["seed"] = seed;
  j["skip_pretrain"] = skip_pretrain;
  j["encoder_kind"] = encoder_kind;
  j["n_windows"] = n_windows;
  j["embed_width"] = embed_width;
  j["latent_width"] = latent_width;
  j["n_gru_layers"] = n_gru_layers;
  j["dropout_p"] = dropout_p;
  j["pretrain_epochs"] = pretrain_epochs;
  j["pretrain_batch_size"] = pretrain_batch_size;
  j["pretrain_learning_rate"] = pretrain_learning_rate;
  j["warmup_epochs"] = warmup_epochs;
  j["finetune_epochs"] = finetune_epochs;
  j["recon_warmup_epochs"] = recon_warmup_epochs;
  j["recon_finetune_epochs"] = recon_finetune_epochs;
  j["outcome_warmup_epochs"] = outcome_warmup_epochs;
  j["outcome_finetune_epochs"] = outcome_finetune_epochs;
  j["finetune_batch_size"] = finetune_batch_size;
  j["finetune_learning_rate"] = finetune_learning_rate;
  j["weight_decay"] = weight_decay;
  j["normalize_features"] = normalize_features;
  j["custom_weights"] = {{"w_r", custom_weights.w_r},
                         {"w_y", custom_weights.w_y},
                         {"w_c", custom_weights.w_c},
                         {"w_kl", custom_weights.w_kl},
                         {"w_b", custom_weights.w_b}};
  return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Dataset files

synth::SyntheticDataset read_dataset_csv(const std::string& dir) {
  const auto feat_rows = io::read_csv(dir + "/features.csv");
  if (feat_rows.size() < 2) throw std::invalid_argument("features.csv has no data rows");
  const int d = static_cast<int>(feat_rows[0].size());
  const int n = static_cast<int>(feat_rows.size()) - 1;

  synth::SyntheticDataset ds;
  ds.features = Tensor(n, d);
  for (int i = 0; i < n; ++i) {
    const auto& row = feat_rows[static_cast<std::size_t>(i + 1)];
    if (static_cast<int>(row.size()) != d)
      throw std::invalid_argument("features.csv row " + std::to_string(i + 2) + " has " +
                                  std::to_string(row.size()) + " fields, expected " +
                                  std::to_string(d));
    for (int j = 0; j < d; ++j) ds.features(i, j) = std::stod(row[static_cast<std::size_t>(j)]);
  }

  const auto label_rows = io::read_csv(dir + "/labels.csv");
  if (static_cast<int>(label_rows.size()) != n + 1)
    throw std::invalid_argument("labels.csv row count does not match features.csv");
  ds.noise_labels.resize(static_cast<std::size_t>(n));
  ds.outcome_labels.resize(static_cast<std::size_t>(n));
  ds.combined_labels.resize(static_cast<std::size_t>(n));
  ds.outcomes.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const auto& row = label_rows[static_cast<std::size_t>(i + 1)];
    if (row.size() != 6)
      throw std::invalid_argument("labels.csv row " + std::to_string(i + 2) +
                                  ": expected 6 fields");
    ds.noise_labels[static_cast<std::size_t>(i)] = std::stoi(row[1]);
    ds.outcome_labels[static_cast<std::size_t>(i)] = std::stoi(row[2]);
    ds.combined_labels[static_cast<std::size_t>(i)] = std::stoi(row[3]);
    ds.outcomes[static_cast<std::size_t>(i)] = {std::stod(row[4]), std::stoi(row[5])};
  }
  return ds;
}

void cmd_gen_data(const synth::SyntheticConfig& config, const std::string& out_dir) {
  synth::SyntheticDataset ds = synth::generate_dataset(config);
  synth::write_dataset_csv(ds, out_dir);
  io::write_file(out_dir + "/config.json", synth::config_to_json(config));
}

// ---------------------------------------------------------------------------
// Shared helpers

namespace {

Cohort subset_cohort(const Cohort& cohort, const std::vector<int>& indices) {
  Cohort sub;
  sub.layout = cohort.layout;
  sub.trajectories.reserve(indices.size());
  for (int i : indices) sub.trajectories.push_back(cohort.trajectories[static_cast<std::size_t>(i)]);
  if (!cohort.outcomes.empty()) {
    sub.outcomes.reserve(indices.size());
    for (int i : indices) sub.outcomes.push_back(cohort.outcomes[static_cast<std::size_t>(i)]);
  }
  return sub;
}

std::vector<int> subset_labels(const std::vector<int>& labels, const std::vector<int>& indices) {
  std::vector<int> out;
  out.reserve(indices.size());
  for (int i : indices) out.push_back(labels[static_cast<std::size_t>(i)]);
  return out;
}

Tensor subset_rows(const Tensor& m, const std::vector<int>& indices) {
  Tensor out(static_cast<int>(indices.size()), m.cols());
  for (std::size_t r = 0; r < indices.size(); ++r)
    for (int j = 0; j < m.cols(); ++j) out(static_cast<int>(r), j) = m(indices[r], j);
  return out;
}

net::ModelConfig model_config_from_manifest(const ExperimentManifest& m, int total_width) {
  if (total_width % m.n_windows != 0)
    throw std::invalid_argument("manifest: feature count " + std::to_string(total_width) +
                                " not divisible by n_windows " + std::to_string(m.n_windows));
  net::ModelConfig cfg;
  cfg.input_width = total_width / m.n_windows;
  cfg.n_windows = m.n_windows;
  cfg.embed_width = m.embed_width;
  cfg.latent_width = m.latent_width;
  cfg.n_gru_layers = m.n_gru_layers;
  cfg.dropout_p = m.dropout_p;
  cfg.n_clusters = m.k;
  cfg.encoder_kind = m.encoder_kind == "recurrent" ? net::EncoderKind::recurrent
                                                   : net::EncoderKind::feedforward;
  cfg.layout = FeatureLayout{0, cfg.input_width};
  return cfg;
}

train::TrainConfig pretrain_config(const ExperimentManifest& m, std::uint64_t seed) {
  train::TrainConfig cfg;
  cfg.epochs = m.pretrain_epochs;
  cfg.batch_size = m.pretrain_batch_size;
  cfg.learning_rate = m.pretrain_learning_rate;
  cfg.weight_decay = m.weight_decay;
  cfg.seed = seed;
  cfg.weights = loss::LossWeights{1.0, 0.0, 0.0, 1e-5, 1.0};
  return cfg;
}

train::TrainConfig finetune_config(const ExperimentManifest& m, const loss::LossWeights& weights,
                                   std::uint64_t seed) {
  train::TrainConfig cfg;
  cfg.epochs = m.finetune_epochs;
  cfg.batch_size = m.finetune_batch_size;
  cfg.learning_rate = m.finetune_learning_rate;
  cfg.weight_decay = m.weight_decay;
  cfg.seed = seed;
  cfg.weights = weights;
  return cfg;
}

/// Train one scenario from scratch on a subcohort: a warmup phase on the
/// scenario objective without the cluster loss (so the centroids are seeded
/// on meaningful embeddings), then the full self-training objective. Each
/// scenario gets its own epoch budget from the manifest.
train::FinetuneResult train_scenario(const net::ModelConfig& base_cfg, const Cohort& sub,
                                     Scenario scenario, int k, std::uint64_t seed,
                                     const ExperimentManifest& manifest) {
  net::ModelConfig cfg = base_cfg;
  cfg.n_clusters = k;
  Rng init_rng = Rng::derive(seed, 101);
  net::Network model = net::Network::init(cfg, init_rng);

  int warmup_epochs = manifest.warmup_epochs;
  int main_epochs = manifest.finetune_epochs;
  if (scenario == Scenario::recon_only) {
    warmup_epochs = manifest.recon_warmup_epochs;
    main_epochs = manifest.recon_finetune_epochs;
  } else if (scenario == Scenario::outcome_only) {
    warmup_epochs = manifest.outcome_warmup_epochs;
    main_epochs = manifest.outcome_finetune_epochs;
  }

  loss::LossWeights weights = scenario_weights(scenario);
  if (warmup_epochs > 0) {
    loss::LossWeights warm = weights;
    warm.w_c = 0.0;
    train::TrainConfig warm_cfg =
        finetune_config(manifest, warm, Rng::derive(seed, 102).next_u64());
    warm_cfg.epochs = warmup_epochs;
    train::finetune_cluster(model, sub, warm_cfg);
  }
  train::TrainConfig main_cfg =
      finetune_config(manifest, weights, Rng::derive(seed, 103).next_u64());
  main_cfg.epochs = main_epochs;
  return train::finetune_cluster(model, sub, main_cfg);
}

std::string assignments_csv(const Tensor& q, const std::vector<int>& labels) {
  std::ostringstream out;
  out << "patient_id,hard_label";
  for (int c = 0; c < q.cols(); ++c) out << ",q_" << (c + 1);
  out << '\n';
  for (int i = 0; i < q.rows(); ++i) {
    out << i << ',' << labels[static_cast<std::size_t>(i)];
    for (int c = 0; c < q.cols(); ++c) out << ',' << io::format_double(q(i, c));
    out << '\n';
  }
  return out.str();
}

/// Global min-max scaling to [0, 1]: one affine map for the whole matrix,
/// so the relative geometry between feature blocks is preserved while the
/// values land on the scale the loss weights and the Student-t cluster
/// kernel are calibrated for.
Tensor global_min_max_scale(const Tensor& m) {
  double lo = m[0], hi = m[0];
  for (std::size_t i = 0; i < m.size(); ++i) {
    lo = std::min(lo, m[i]);
    hi = std::max(hi, m[i]);
  }
  Tensor out = m;
  if (hi > lo)
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = (out[i] - lo) / (hi - lo);
  return out;
}

Tensor per_feature_min_max_scale(const Tensor& m) {
  Tensor out = m;
  for (int j = 0; j < m.cols(); ++j) {
    double lo = m(0, j), hi = m(0, j);
    for (int i = 1; i < m.rows(); ++i) {
      lo = std::min(lo, m(i, j));
      hi = std::max(hi, m(i, j));
    }
    if (hi > lo)
      for (int i = 0; i < m.rows(); ++i) out(i, j) = (m(i, j) - lo) / (hi - lo);
  }
  return out;
}

Cohort model_cohort(const synth::SyntheticDataset& ds, const ExperimentManifest& manifest) {
  if (manifest.normalize_features == "none") return synth::to_sequences(ds, manifest.n_windows);
  synth::SyntheticDataset normalized = ds;
  if (manifest.normalize_features == "per_feature") {
    normalized.features = per_feature_min_max_scale(ds.features);
  } else if (manifest.normalize_features == "global") {
    normalized.features = global_min_max_scale(ds.features);
  } else {
    throw std::invalid_argument("manifest: normalize_features must be global|per_feature|none");
  }
  return synth::to_sequences(normalized, manifest.n_windows);
}

std::string km_curves_csv(const std::vector<int>& labels,
                          const std::vector<SurvivalOutcome>& outcomes) {
  int k = 0;
  for (int l : labels) k = std::max(k, l + 1);
  std::ostringstream out;
  out << "cluster_id,time,survival,at_risk,events\n";
  for (int c = 0; c < k; ++c) {
    std::vector<double> times;
    std::vector<int> events;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] != c) continue;
      times.push_back(outcomes[i].time);
      events.push_back(outcomes[i].event);
    }
    if (times.empty()) continue;
    const metrics::StepCurve curve = metrics::kaplan_meier(times, events);
    for (std::size_t s = 0; s < curve.times.size(); ++s) {
      out << c << ',' << io::format_double(curve.times[s]) << ','
          << io::format_double(curve.survival[s]) << ',' << curve.at_risk[s] << ','
          << curve.events[s] << '\n';
    }
  }
  return out.str();
}

}  // namespace

RunResult run_experiment(const ExperimentManifest& manifest) {
  manifest.validate();
  io::ensure_dir(manifest.out_dir);

  const synth::SyntheticDataset ds = read_dataset_csv(manifest.dataset_dir);
  const Cohort cohort = model_cohort(ds, manifest);
  const Scenario scenario = scenario_from_string(manifest.scenario);
  const loss::LossWeights weights =
      scenario_weights(scenario, manifest.scenario == "custom" ? &manifest.custom_weights : nullptr);

  Rng init_rng = Rng::derive(manifest.seed, 0);
  net::ModelConfig model_cfg = model_config_from_manifest(manifest, ds.features.cols());
  net::Network model = net::Network::init(model_cfg, init_rng);

  if (!manifest.skip_pretrain) {
    const train::TrainConfig pre_cfg =
        pretrain_config(manifest, Rng::derive(manifest.seed, 1).next_u64());
    const train::PretrainResult pre = train::pretrain(model, cohort, pre_cfg);
    io::write_file(manifest.out_dir + "/pretrain_loss.csv", train::loss_curve_csv(pre.curve));
  }

  Rng centroid_rng = Rng::derive(manifest.seed, 2);
  model.set_centroids(
      net::init_centroids(model.encode_mu(cohort), model.config().n_clusters, centroid_rng));

  const train::TrainConfig fine_cfg =
      finetune_config(manifest, weights, Rng::derive(manifest.seed, 3).next_u64());
  RunResult result;
  result.finetune = train::finetune_cluster(model, cohort, fine_cfg);
  result.labels = result.finetune.labels;

  io::write_file(manifest.out_dir + "/finetune_loss.csv",
                 train::loss_curve_csv(result.finetune.curve));
  io::write_file(manifest.out_dir + "/assignments.csv",
                 assignments_csv(result.finetune.q, result.labels));
  io::write_file(manifest.out_dir + "/km.csv", km_curves_csv(result.labels, ds.outcomes));
  model.save(manifest.out_dir + "/checkpoint");
  io::write_file(manifest.out_dir + "/manifest.json", manifest.to_json());

  nlohmann::json mj;
  mj["ari"] = {{"unsupervised", metrics::adjusted_rand_index(result.labels, ds.noise_labels)},
               {"outcome", metrics::adjusted_rand_index(result.labels, ds.outcome_labels)},
               {"combined", metrics::adjusted_rand_index(result.labels, ds.combined_labels)}};
  mj["nmi"] = {
      {"unsupervised", metrics::normalized_mutual_information(result.labels, ds.noise_labels)},
      {"outcome", metrics::normalized_mutual_information(result.labels, ds.outcome_labels)},
      {"combined", metrics::normalized_mutual_information(result.labels, ds.combined_labels)}};
  std::vector<double> times;
  std::vector<int> events;
  for (const auto& o : ds.outcomes) {
    times.push_back(o.time);
    events.push_back(o.event);
  }
  try {
    const metrics::LogrankResult lr = metrics::logrank_test(times, events, result.labels);
    mj["logrank"] = {{"statistic", lr.statistic}, {"df", lr.df}, {"p_value", lr.p_value}};
    result.metrics["logrank_statistic"] = lr.statistic;
  } catch (const std::invalid_argument& e) {
    mj["logrank"] = {{"undefined", e.what()}};
  }
  io::write_file(manifest.out_dir + "/metrics.json", mj.dump(2) + "\n");

  for (const auto& [name, value] : mj["ari"].items())
    result.metrics["ari_" + name] = value.get<double>();
  return result;
}

// ---------------------------------------------------------------------------
// Benchmark drivers

double Table2Result::at(const std::string& method, const std::string& column) const {
  for (std::size_t r = 0; r < methods.size(); ++r) {
    if (methods[r] != method) continue;
    for (std::size_t c = 0; c < columns.size(); ++c)
      if (columns[c] == column) return mean[r][c];
  }
  throw std::out_of_range("Table2Result: no cell (" + method + ", " + column + ")");
}

BenchmarkContext make_benchmark_context(const synth::SyntheticConfig& config,
                                        const ExperimentManifest& manifest) {
  BenchmarkContext ctx;
  ctx.manifest = manifest;
  ctx.seed = manifest.seed;
  ctx.dataset = synth::generate_dataset(config);
  ctx.cohort = model_cohort(ctx.dataset, manifest);
  return ctx;
}

Cohort benchmark_cohort(const synth::SyntheticDataset& dataset,
                        const ExperimentManifest& manifest) {
  return model_cohort(dataset, manifest);
}

Table2Result reproduce_table2(BenchmarkContext& ctx, const std::string& out_dir, int n_repeats) {
  Table2Result table;
  table.methods = {"pca_kmeans", "rsf", "lpsco_recon", "lpsco_outcome", "lpsco_combined"};
  table.columns = {"k3_unsupervised", "k3_outcome", "k3_combined",
                   "k6_unsupervised", "k6_outcome", "k6_combined"};
  table.note = "ac_tpc row omitted: external comparison method, out of scope";
  table.mean.assign(table.methods.size(), {});
  table.stddev.assign(table.methods.size(), {});

  train::TrainConfig repeat_cfg;
  repeat_cfg.seed = ctx.seed;
  repeat_cfg.n_repeats = n_repeats;
  repeat_cfg.split_fraction = 0.8;
  repeat_cfg.weights = loss::LossWeights{1.0, 0.0, 0.25, 1e-5, 1.0};

  const std::vector<int> ks = {3, 6};
  for (std::size_t ki = 0; ki < ks.size(); ++ki) {
    const int k = ks[ki];
    auto run_fn = [&](const std::vector<int>& indices,
                      std::uint64_t repeat_seed) -> std::map<std::string, double> {
      const Cohort sub = subset_cohort(ctx.cohort, indices);
      const Tensor features = subset_rows(ctx.dataset.features, indices);
      const std::vector<int> truth_noise = subset_labels(ctx.dataset.noise_labels, indices);
      const std::vector<int> truth_outcome = subset_labels(ctx.dataset.outcome_labels, indices);
      const std::vector<int> truth_combined = subset_labels(ctx.dataset.combined_labels, indices);
      std::vector<double> times;
      std::vector<int> events;
      for (const auto& o : sub.outcomes) {
        times.push_back(o.time);
        events.push_back(o.event);
      }

      std::map<std::string, double> m;
      auto record = [&](const std::string& method, const std::vector<int>& labels) {
        m[method + "/unsupervised"] = metrics::adjusted_rand_index(labels, truth_noise);
        m[method + "/outcome"] = metrics::adjusted_rand_index(labels, truth_outcome);
        m[method + "/combined"] = metrics::adjusted_rand_index(labels, truth_combined);
      };

      {
        Rng rng = Rng::derive(repeat_seed, 11);
        const baseline::PcaResult p = baseline::pca(features, 5);
        record("pca_kmeans", baseline::kmeans(p.projected, k, rng).labels);
      }
      {
        Rng rng = Rng::derive(repeat_seed, 12);
        record("rsf", baseline::rsf_cluster(features, times, events, k, rng));
      }
      const net::ModelConfig base_cfg =
          model_config_from_manifest(ctx.manifest, ctx.dataset.features.cols());
      record("lpsco_recon",
             train_scenario(base_cfg, sub, Scenario::recon_only, k,
                            Rng::derive(repeat_seed, 13).next_u64(), ctx.manifest)
                 .labels);
      record("lpsco_outcome",
             train_scenario(base_cfg, sub, Scenario::outcome_only, k,
                            Rng::derive(repeat_seed, 14).next_u64(), ctx.manifest)
                 .labels);
      record("lpsco_combined",
             train_scenario(base_cfg, sub, Scenario::combined, k,
                            Rng::derive(repeat_seed, 15).next_u64(), ctx.manifest)
                 .labels);
      return m;
    };

    const auto stats = train::repeated_runs(ctx.cohort, repeat_cfg, run_fn);
    for (std::size_t r = 0; r < table.methods.size(); ++r) {
      for (const auto& [suffix, col0] :
           std::vector<std::pair<std::string, std::size_t>>{{"/unsupervised", 0},
                                                            {"/outcome", 1},
                                                            {"/combined", 2}}) {
        const auto& s = stats.at(table.methods[r] + suffix);
        table.mean[r][3 * ki + col0] = s.mean;
        table.stddev[r][3 * ki + col0] = s.stddev;
      }
    }
  }

  if (!out_dir.empty()) {
    io::ensure_dir(out_dir);
    auto write_matrix = [&](const std::string& path,
                            const std::vector<std::array<double, 6>>& values) {
      std::ostringstream out;
      out << "method";
      for (const auto& c : table.columns) out << ',' << c;
      out << '\n';
      for (std::size_t r = 0; r < table.methods.size(); ++r) {
        out << table.methods[r];
        for (std::size_t c = 0; c < table.columns.size(); ++c)
          out << ',' << io::format_double(values[r][c]);
        out << '\n';
      }
      io::write_file(path, out.str());
    };
    write_matrix(out_dir + "/table2_ari.csv", table.mean);
    write_matrix(out_dir + "/table2_ari_std.csv", table.stddev);
    io::write_file(out_dir + "/table2_notes.txt", table.note + "\n");
  }
  return table;
}

train::FinetuneResult run_scenario_training(const BenchmarkContext& ctx, Scenario scenario,
                                            int k, std::uint64_t seed) {
  const net::ModelConfig base_cfg =
      model_config_from_manifest(ctx.manifest, ctx.dataset.features.cols());
  return train_scenario(base_cfg, ctx.cohort, scenario, k, seed, ctx.manifest);
}

std::map<int, std::map<std::string, train::MetricStats>> logrank_by_k(
    BenchmarkContext& ctx, const std::vector<int>& ks, int n_repeats) {
  std::map<int, std::map<std::string, train::MetricStats>> result;

  train::TrainConfig repeat_cfg;
  repeat_cfg.seed = ctx.seed + 77;
  repeat_cfg.n_repeats = n_repeats;
  repeat_cfg.split_fraction = 0.8;
  repeat_cfg.weights = loss::LossWeights{1.0, 0.0, 0.25, 1e-5, 1.0};

  for (int k : ks) {
    auto run_fn = [&](const std::vector<int>& indices,
                      std::uint64_t repeat_seed) -> std::map<std::string, double> {
      const Cohort sub = subset_cohort(ctx.cohort, indices);
      std::vector<double> times;
      std::vector<int> events;
      for (const auto& o : sub.outcomes) {
        times.push_back(o.time);
        events.push_back(o.event);
      }
      std::map<std::string, double> m;
      const net::ModelConfig base_cfg =
          model_config_from_manifest(ctx.manifest, ctx.dataset.features.cols());
      const std::vector<std::pair<std::string, Scenario>> scenarios = {
          {"recon_only", Scenario::recon_only},
          {"outcome_only", Scenario::outcome_only},
          {"combined", Scenario::combined}};
      int variant = 0;
      for (const auto& [name, scenario] : scenarios) {
        const auto fr = train_scenario(base_cfg, sub, scenario, k,
                                       Rng::derive(repeat_seed, 20 + variant++).next_u64(),
                                       ctx.manifest);
        m[name] = metrics::logrank_test(times, events, fr.labels).statistic;
      }
      return m;
    };
    result[k] = train::repeated_runs(ctx.cohort, repeat_cfg, run_fn);
  }
  return result;
}

}  // namespace trajcluster::exp
