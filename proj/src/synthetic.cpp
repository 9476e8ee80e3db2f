#include "trajcluster/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <sstream>

#include "trajcluster/io.hpp"

namespace trajcluster::synth {

void SyntheticConfig::validate() const {
  auto positive = [](long long v, const char* name) {
    if (v <= 0) throw std::invalid_argument(std::string("SyntheticConfig: ") + name + " must be > 0");
  };
  positive(n_patients, "n_patients");
  positive(k_noise, "k_noise");
  positive(n_noise_features, "n_noise_features");
  positive(k_outcome, "k_outcome");
  positive(k_combined, "k_combined");
  positive(n_outcome_features, "n_outcome_features");
  if (k_combined != 2 * k_outcome)
    throw std::invalid_argument("SyntheticConfig: k_combined must equal 2 * k_outcome");
  if (censor_prob < 0.0 || censor_prob > 1.0)
    throw std::invalid_argument("SyntheticConfig: censor_prob must lie in [0, 1]");
  if (!(tte_min > 0.0)) throw std::invalid_argument("SyntheticConfig: tte_min must be > 0");
  if (!(tte_max > 0.0)) throw std::invalid_argument("SyntheticConfig: tte_max must be > 0");
  if (!(tte_cap > 0.0)) throw std::invalid_argument("SyntheticConfig: tte_cap must be > 0");
  if (noise_center_min > noise_center_max)
    throw std::invalid_argument("SyntheticConfig: noise center interval is inverted");
  if (combined_center_min > combined_center_max)
    throw std::invalid_argument("SyntheticConfig: combined center interval is inverted");
  if (noise_std < 0.0 || combined_std < 0.0)
    throw std::invalid_argument("SyntheticConfig: standard deviations must be >= 0");
}

SyntheticConfig SyntheticConfig::scaled(double f) const {
  if (!(f > 0.0) || f > 1.0) throw std::invalid_argument("scale factor must lie in (0, 1]");
  SyntheticConfig c = *this;
  c.n_patients = std::max(1, static_cast<int>(std::llround(n_patients * f)));
  return c;
}

Tensor isotropic_features_for_labels(const std::vector<int>& labels, int k, int n_features,
                                     double stddev, double center_min, double center_max,
                                     Rng& rng) {
  if (n_features <= 0) throw std::invalid_argument("isotropic clusters: zero features");
  if (labels.empty()) throw std::invalid_argument("isotropic clusters: zero samples");
  if (k < 1) throw std::invalid_argument("isotropic clusters: k must be >= 1");
  for (int l : labels)
    if (l < 0 || l >= k) throw std::invalid_argument("isotropic clusters: label out of range");

  Tensor centroids(k, n_features);
  for (int c = 0; c < k; ++c)
    for (int j = 0; j < n_features; ++j) centroids(c, j) = rng.uniform(center_min, center_max);

  Tensor out(static_cast<int>(labels.size()), n_features);
  for (std::size_t i = 0; i < labels.size(); ++i)
    for (int j = 0; j < n_features; ++j)
      out(static_cast<int>(i), j) = centroids(labels[i], j) + stddev * rng.normal();
  return out;
}

std::pair<Tensor, std::vector<int>> generate_isotropic_clusters(int k, int n_features,
                                                                double stddev, double center_min,
                                                                double center_max, int n,
                                                                Rng& rng) {
  if (n_features <= 0) throw std::invalid_argument("isotropic clusters: zero features");
  if (n <= 0) throw std::invalid_argument("isotropic clusters: zero samples");
  if (k < 1 || n < k) throw std::invalid_argument("isotropic clusters: need n >= k >= 1");
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (auto& l : labels) l = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(k)));
  Tensor features =
      isotropic_features_for_labels(labels, k, n_features, stddev, center_min, center_max, rng);
  return {std::move(features), std::move(labels)};
}

std::vector<double> log_spaced_scales(int k, double tte_min, double tte_max) {
  if (k < 1) throw std::invalid_argument("log_spaced_scales: k must be >= 1");
  if (!(tte_min > 0.0)) throw std::invalid_argument("log_spaced_scales: tte_min must be > 0");
  std::vector<double> scales(static_cast<std::size_t>(k));
  if (k == 1) {
    scales[0] = tte_min;
    return scales;
  }
  const double lo = std::log10(tte_min);
  const double hi = std::log10(tte_max);
  for (int i = 0; i < k; ++i)
    scales[static_cast<std::size_t>(i)] = std::pow(10.0, lo + (hi - lo) * i / (k - 1));
  return scales;
}

std::vector<SurvivalOutcome> generate_outcome_times(const std::vector<int>& labels, int k,
                                                    double tte_min, double tte_max,
                                                    double censor_prob, double tte_cap,
                                                    Rng& rng) {
  if (!(tte_min > 0.0)) throw std::invalid_argument("generate_outcome_times: tte_min must be > 0");
  const std::vector<double> scales = log_spaced_scales(k, tte_min, tte_max);
  std::vector<SurvivalOutcome> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int l = labels[i];
    if (l < 0 || l >= k) throw std::invalid_argument("generate_outcome_times: label out of range");
    double t;
    do {
      t = rng.exponential(scales[static_cast<std::size_t>(l)]);
    } while (!(t > 0.0));
    int event = rng.uniform() < censor_prob ? 0 : 1;
    if (t > tte_cap) {
      t = tte_cap;
      event = 0;
    }
    out[i] = {t, event};
  }
  return out;
}

std::vector<int> split_combined_clusters(const std::vector<int>& outcome_labels, Rng& rng) {
  int k = 0;
  for (int l : outcome_labels) k = std::max(k, l + 1);
  std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < outcome_labels.size(); ++i)
    members[static_cast<std::size_t>(outcome_labels[i])].push_back(i);

  std::vector<int> combined(outcome_labels.size(), -1);
  for (int g = 0; g < k; ++g) {
    auto& idx = members[static_cast<std::size_t>(g)];
    if (idx.size() < 2)
      throw std::invalid_argument("split_combined_clusters: outcome cluster " + std::to_string(g) +
                                  " has fewer than 2 members");
    rng.shuffle(idx);
    const std::size_t first_half = (idx.size() + 1) / 2;
    for (std::size_t j = 0; j < idx.size(); ++j)
      combined[idx[j]] = 2 * g + (j < first_half ? 0 : 1);
  }
  return combined;
}

Tensor binarize_features(const Tensor& features) {
  Tensor out = features;
  for (int j = 0; j < features.cols(); ++j) {
    double lo = features(0, j), hi = features(0, j);
    for (int i = 1; i < features.rows(); ++i) {
      lo = std::min(lo, features(i, j));
      hi = std::max(hi, features(i, j));
    }
    if (lo == hi)
      throw std::invalid_argument("binarize_features: column " + std::to_string(j) +
                                  " is constant");
    for (int i = 0; i < features.rows(); ++i) {
      const double scaled = (features(i, j) - lo) / (hi - lo);
      out(i, j) = scaled >= 0.5 ? 1.0 : 0.0;  // round half up
    }
  }
  return out;
}

SyntheticDataset generate_dataset(const SyntheticConfig& config) {
  config.validate();
  Rng rng(config.seed);

  SyntheticDataset ds;
  ds.n_noise_features = config.n_noise_features;

  auto [noise_features, noise_labels] = generate_isotropic_clusters(
      config.k_noise, config.n_noise_features, config.noise_std, config.noise_center_min,
      config.noise_center_max, config.n_patients, rng);
  ds.noise_labels = std::move(noise_labels);

  ds.outcome_labels.resize(static_cast<std::size_t>(config.n_patients));
  for (auto& l : ds.outcome_labels)
    l = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(config.k_outcome)));

  ds.outcomes = generate_outcome_times(ds.outcome_labels, config.k_outcome, config.tte_min,
                                       config.tte_max, config.censor_prob, config.tte_cap, rng);

  ds.combined_labels = split_combined_clusters(ds.outcome_labels, rng);

  Tensor combined_features = isotropic_features_for_labels(
      ds.combined_labels, config.k_combined, config.n_outcome_features, config.combined_std,
      config.combined_center_min, config.combined_center_max, rng);

  ds.features = Tensor(config.n_patients, config.n_noise_features + config.n_outcome_features);
  for (int i = 0; i < config.n_patients; ++i) {
    for (int j = 0; j < config.n_noise_features; ++j) ds.features(i, j) = noise_features(i, j);
    for (int j = 0; j < config.n_outcome_features; ++j)
      ds.features(i, config.n_noise_features + j) = combined_features(i, j);
  }
  return ds;
}

Cohort to_sequences(const SyntheticDataset& dataset, int n_windows) {
  if (n_windows <= 0) throw std::invalid_argument("to_sequences: n_windows must be > 0");
  const int total = dataset.features.cols();
  if (total % n_windows != 0)
    throw std::invalid_argument("to_sequences: " + std::to_string(total) +
                                " features not divisible into " + std::to_string(n_windows) +
                                " windows");
  const int width = total / n_windows;

  Cohort cohort;
  cohort.layout = FeatureLayout{0, width};
  cohort.outcomes = dataset.outcomes;
  cohort.trajectories.resize(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    TrajectoryTensor& t = cohort.trajectories[i];
    t.windows.resize(static_cast<std::size_t>(n_windows));
    t.mask.assign(static_cast<std::size_t>(n_windows), 1);
    t.continuous_mask.assign(static_cast<std::size_t>(n_windows),
                             std::vector<char>(static_cast<std::size_t>(width), 1));
    for (int w = 0; w < n_windows; ++w) {
      auto& win = t.windows[static_cast<std::size_t>(w)];
      win.resize(static_cast<std::size_t>(width));
      for (int j = 0; j < width; ++j)
        win[static_cast<std::size_t>(j)] = dataset.features(static_cast<int>(i), w * width + j);
    }
  }
  return cohort;
}

void write_dataset_csv(const SyntheticDataset& dataset, const std::string& out_dir) {
  io::ensure_dir(out_dir);
  std::ostringstream feat;
  for (int j = 0; j < dataset.features.cols(); ++j) {
    if (j) feat << ',';
    feat << 'f' << j;
  }
  feat << '\n';
  for (int i = 0; i < dataset.features.rows(); ++i) {
    for (int j = 0; j < dataset.features.cols(); ++j) {
      if (j) feat << ',';
      feat << io::format_double(dataset.features(i, j));
    }
    feat << '\n';
  }
  io::write_file(out_dir + "/features.csv", feat.str());

  std::ostringstream lab;
  lab << "patient_id,noise_label,outcome_label,combined_label,time,event\n";
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    lab << i << ',' << dataset.noise_labels[i] << ',' << dataset.outcome_labels[i] << ','
        << dataset.combined_labels[i] << ',' << io::format_double(dataset.outcomes[i].time) << ','
        << dataset.outcomes[i].event << '\n';
  }
  io::write_file(out_dir + "/labels.csv", lab.str());
}

SyntheticConfig config_from_json_file(const std::string& path) {
  nlohmann::json j = nlohmann::json::parse(io::read_file(path));
  SyntheticConfig c;
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("n_patients", c.n_patients);
  get("k_noise", c.k_noise);
  get("n_noise_features", c.n_noise_features);
  get("noise_std", c.noise_std);
  get("noise_center_min", c.noise_center_min);
  get("noise_center_max", c.noise_center_max);
  get("k_outcome", c.k_outcome);
  get("tte_min", c.tte_min);
  get("tte_max", c.tte_max);
  get("censor_prob", c.censor_prob);
  get("tte_cap", c.tte_cap);
  get("k_combined", c.k_combined);
  get("n_outcome_features", c.n_outcome_features);
  get("combined_std", c.combined_std);
  get("combined_center_min", c.combined_center_min);
  get("combined_center_max", c.combined_center_max);
  get("seed", c.seed);
  return c;
}

std::string config_to_json(const SyntheticConfig& c) {
  nlohmann::json j;
  j["n_patients"] = c.n_patients;
  j["k_noise"] = c.k_noise;
  j["n_noise_features"] = c.n_noise_features;
  j["noise_std"] = c.noise_std;
  j["noise_center_min"] = c.noise_center_min;
  j["noise_center_max"] = c.noise_center_max;
  j["k_outcome"] = c.k_outcome;
  j["tte_min"] = c.tte_min;
  j["tte_max"] = c.tte_max;
  j["censor_prob"] = c.censor_prob;
  j["tte_cap"] = c.tte_cap;
  j["k_combined"] = c.k_combined;
  j["n_outcome_features"] = c.n_outcome_features;
  j["combined_std"] = c.combined_std;
  j["combined_center_min"] = c.combined_center_min;
  j["combined_center_max"] = c.combined_center_max;
  j["seed"] = c.seed;
  return j.dump(2) + "\n";
}

}  // namespace trajcluster::synth
