#include "trajcluster/network.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "trajcluster/baselines.hpp"
#include "trajcluster/io.hpp"

namespace trajcluster::net {

void ModelConfig::validate() const {
  if (input_width <= 0) throw std::invalid_argument("ModelConfig: input_width must be > 0");
  if (n_windows <= 0) throw std::invalid_argument("ModelConfig: n_windows must be > 0");
  if (embed_width <= 0 || latent_width <= 0)
    throw std::invalid_argument("ModelConfig: widths must be > 0");
  if (latent_width >= input_width * n_windows)
    throw std::invalid_argument("ModelConfig: latent_width must compress the input (latent " +
                                std::to_string(latent_width) + " >= total input " +
                                std::to_string(input_width * n_windows) + ")");
  if (n_clusters < 2) throw std::invalid_argument("ModelConfig: n_clusters must be >= 2");
  if (n_gru_layers < 1) throw std::invalid_argument("ModelConfig: n_gru_layers must be >= 1");
  if (dropout_p < 0.0 || dropout_p >= 1.0)
    throw std::invalid_argument("ModelConfig: dropout_p must lie in [0, 1)");
  if (layout.width() != input_width)
    throw std::invalid_argument("ModelConfig: layout width != input_width");
}

Batch make_batch(const Cohort& cohort, const std::vector<int>& indices) {
  if (cohort.trajectories.empty()) throw std::invalid_argument("make_batch: empty cohort");
  const int width = cohort.layout.width();
  const int n_bin = cohort.layout.n_binary;
  const int n_windows = static_cast<int>(cohort.trajectories[0].n_windows());
  const int n = static_cast<int>(indices.size());

  Batch batch;
  batch.windows.assign(static_cast<std::size_t>(n_windows), Tensor(n, width));
  batch.flat_x = Tensor(n, n_windows * width);
  batch.valid_cont = Tensor(n, n_windows * width, 0.0);
  batch.valid_bin = Tensor(n, n_windows * width, 0.0);

  for (int row = 0; row < n; ++row) {
    const int idx = indices[static_cast<std::size_t>(row)];
    const TrajectoryTensor& traj = cohort.trajectories[static_cast<std::size_t>(idx)];
    if (static_cast<int>(traj.n_windows()) != n_windows)
      throw std::invalid_argument("make_batch: trajectory " + std::to_string(idx) +
                                  " has inconsistent window count");
    for (int w = 0; w < n_windows; ++w) {
      const auto& win = traj.windows[static_cast<std::size_t>(w)];
      const bool present = traj.mask[static_cast<std::size_t>(w)] != 0;
      for (int j = 0; j < width; ++j) {
        const double v = win[static_cast<std::size_t>(j)];
        batch.windows[static_cast<std::size_t>(w)](row, j) = v;
        batch.flat_x(row, w * width + j) = v;
        if (j < n_bin) {
          if (present) batch.valid_bin(row, w * width + j) = 1.0;
        } else if (present) {
          const bool entry_present =
              traj.continuous_mask.empty()
                  ? v != kMissingContinuous
                  : traj.continuous_mask[static_cast<std::size_t>(w)]
                                        [static_cast<std::size_t>(j - n_bin)] != 0;
          if (entry_present) batch.valid_cont(row, w * width + j) = 1.0;
        }
      }
    }
    if (!cohort.outcomes.empty()) {
      batch.times.push_back(cohort.outcomes[static_cast<std::size_t>(idx)].time);
      batch.events.push_back(cohort.outcomes[static_cast<std::size_t>(idx)].event);
    }
  }
  return batch;
}

// ---------------------------------------------------------------------------
// Initialization

namespace {

Tensor normal_init(int rows, int cols, double stddev, Rng& rng) {
  Tensor t(rows, cols);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = stddev * rng.normal();
  return t;
}

void add_dense(ad::ParamSet& ps, const std::string& prefix, int in, int out, double stddev,
               Rng& rng) {
  ps.add(prefix + ".w", normal_init(in, out, stddev, rng), true, true);
  ps.add(prefix + ".b", Tensor(1, out), true, false);
}

void add_gru(ad::ParamSet& ps, const std::string& prefix, int in, int hidden, Rng& rng) {
  for (const auto& [name, shape] : ad::gru_param_shapes(prefix, in, hidden)) {
    const bool is_bias = shape.first == 1;
    if (is_bias) {
      ps.add(name, Tensor(1, shape.second), true, false);
    } else {
      ps.add(name, normal_init(shape.first, shape.second,
                               std::sqrt(1.0 / shape.first), rng),
             true, true);
    }
  }
}

Tensor flat_binary_mask(const ModelConfig& config, int n) {
  Tensor mask(n, config.n_windows * config.input_width, 0.0);
  if (config.layout.n_binary == 0) return mask;
  for (int i = 0; i < n; ++i)
    for (int w = 0; w < config.n_windows; ++w)
      for (int j = 0; j < config.layout.n_binary; ++j)
        mask(i, w * config.input_width + j) = 1.0;
  return mask;
}

}  // namespace

Network Network::init(const ModelConfig& config, Rng& rng) {
  config.validate();
  Network net;
  net.config_ = config;
  ad::ParamSet& ps = net.params_;

  const int width = config.input_width;
  const int embed = config.embed_width;
  const int latent = config.latent_width;
  const double he_w = std::sqrt(2.0 / width);
  const double he_e = std::sqrt(2.0 / embed);

  // The mu/logvar and risk heads start near zero so the posterior opens at
  // roughly N(0, 1) and risks at ~0 regardless of the input feature scale.
  const double head_scale = 0.01;

  if (config.encoder_kind == EncoderKind::recurrent) {
    add_dense(ps, "femb.1", width, embed, he_w, rng);
    add_dense(ps, "femb.2", embed, embed, he_e, rng);
    for (int l = 0; l < config.n_gru_layers; ++l) {
      const int in = l == 0 ? embed : 2 * embed;
      add_gru(ps, "enc.gru" + std::to_string(l) + ".f", in, embed, rng);
      add_gru(ps, "enc.gru" + std::to_string(l) + ".b", in, embed, rng);
    }
    const int agg_in = 2 * config.n_gru_layers * embed;
    add_dense(ps, "enc.agg", agg_in, embed, std::sqrt(2.0 / agg_in), rng);
    add_dense(ps, "enc.mu", embed, latent, head_scale * std::sqrt(1.0 / embed), rng);
    add_dense(ps, "enc.lv", embed, latent, head_scale * std::sqrt(1.0 / embed), rng);

    ps.add("dec.start", Tensor(1, width), true, false);
    add_gru(ps, "dec.gru", embed, latent, rng);
    add_dense(ps, "dec.out1", latent, embed, std::sqrt(2.0 / latent), rng);
    add_dense(ps, "dec.out2", embed, width, std::sqrt(1.0 / embed), rng);
  } else {
    const int total = width * config.n_windows;
    add_dense(ps, "enc.ff1", total, embed, std::sqrt(2.0 / total), rng);
    add_dense(ps, "enc.ff2", embed, embed, he_e, rng);
    add_dense(ps, "enc.mu", embed, latent, head_scale * std::sqrt(1.0 / embed), rng);
    add_dense(ps, "enc.lv", embed, latent, head_scale * std::sqrt(1.0 / embed), rng);

    add_dense(ps, "dec.ff1", latent, embed, std::sqrt(2.0 / latent), rng);
    add_dense(ps, "dec.ff2", embed, embed, he_e, rng);
    add_dense(ps, "dec.out", embed, total, std::sqrt(1.0 / embed), rng);
  }

  add_dense(ps, "risk", latent, 1, head_scale * std::sqrt(1.0 / latent), rng);
  return net;
}

void Network::set_n_clusters(int k) {
  if (has_centroids())
    throw std::logic_error("set_n_clusters: centroids already initialized");
  if (k < 2) throw std::invalid_argument("set_n_clusters: need K >= 2");
  config_.n_clusters = k;
}

void Network::set_centroids(const Tensor& centroids) {
  if (centroids.rows() != config_.n_clusters || centroids.cols() != config_.latent_width)
    throw std::invalid_argument("set_centroids: expected " +
                                std::to_string(config_.n_clusters) + "x" +
                                std::to_string(config_.latent_width) + ", got " +
                                centroids.shape_str());
  if (params_.has("centroids")) {
    params_.at("centroids") = centroids;
  } else {
    params_.add("centroids", centroids, true, false);
  }
}

// ---------------------------------------------------------------------------
// Graph builders

namespace {

ad::Var feature_embedding(ad::Binding& bind, ad::Var x) {
  ad::Var h = ad::dense(x, bind["femb.1.w"], bind["femb.1.b"], ad::Activation::relu);
  return ad::dense(h, bind["femb.2.w"], bind["femb.2.b"], ad::Activation::relu);
}

}  // namespace

EncodeVars Network::encode(ad::Graph& g, ad::Binding& bind, const Batch& batch, bool training,
                           Rng* rng) const {
  if (batch.flat_x.cols() != config_.n_windows * config_.input_width)
    throw std::invalid_argument("encode: batch width " + std::to_string(batch.flat_x.cols()) +
                                " != expected " +
                                std::to_string(config_.n_windows * config_.input_width));
  ad::Var agg;
  if (config_.encoder_kind == EncoderKind::recurrent) {
    std::vector<ad::Var> embedded;
    embedded.reserve(batch.windows.size());
    for (const Tensor& w : batch.windows)
      embedded.push_back(feature_embedding(bind, g.constant(w)));

    std::vector<ad::GruParams> fwd, bwd;
    for (int l = 0; l < config_.n_gru_layers; ++l) {
      fwd.push_back(ad::bind_gru(bind, "enc.gru" + std::to_string(l) + ".f"));
      bwd.push_back(ad::bind_gru(bind, "enc.gru" + std::to_string(l) + ".b"));
    }
    ad::BiGruOut gru =
        ad::bidirectional_gru(embedded, fwd, bwd, config_.dropout_p, training, rng);
    agg = ad::dense(ad::concat_cols(gru.final_states), bind["enc.agg.w"], bind["enc.agg.b"],
                    ad::Activation::relu);
  } else {
    ad::Var h = ad::dense(g.constant(batch.flat_x), bind["enc.ff1.w"], bind["enc.ff1.b"],
                          ad::Activation::relu);
    agg = ad::dense(h, bind["enc.ff2.w"], bind["enc.ff2.b"], ad::Activation::relu);
  }

  EncodeVars out;
  out.mu = ad::dense(agg, bind["enc.mu.w"], bind["enc.mu.b"], ad::Activation::identity);
  out.logvar = ad::dense(agg, bind["enc.lv.w"], bind["enc.lv.b"], ad::Activation::identity);
  if (training) {
    if (!rng) throw std::invalid_argument("encode: training mode needs an Rng");
    Tensor noise(out.mu.rows(), out.mu.cols());
    for (std::size_t i = 0; i < noise.size(); ++i) noise[i] = rng->normal();
    out.z = ad::reparameterize(out.mu, out.logvar, noise);
  } else {
    out.z = out.mu;
  }
  return out;
}

ad::Var Network::decode(ad::Graph& g, ad::Binding& bind, ad::Var z, const Batch& batch,
                        bool training, Rng* rng) const {
  (void)training;
  (void)rng;
  if (z.cols() != config_.latent_width)
    throw std::invalid_argument("decode: z width " + std::to_string(z.cols()) + " != latent " +
                                std::to_string(config_.latent_width));
  const int n = z.rows();
  ad::Var flat;
  if (config_.encoder_kind == EncoderKind::recurrent) {
    const int t_len = static_cast<int>(batch.windows.size());
    if (t_len != config_.n_windows)
      throw std::invalid_argument("decode: teacher sequence length " + std::to_string(t_len) +
                                  " != configured windows " + std::to_string(config_.n_windows));
    ad::GruParams dec_gru = ad::bind_gru(bind, "dec.gru");

    std::vector<ad::Var> outputs(static_cast<std::size_t>(t_len));
    ad::Var h = z;
    // Reverse emission: teacher [start, x_T, ..., x_2] -> outputs [x'_T, ..., x'_1].
    for (int step = 0; step < t_len; ++step) {
      ad::Var teacher;
      if (step == 0) {
        teacher = ad::repeat_rows(feature_embedding(bind, bind["dec.start"]), n);
      } else {
        teacher = feature_embedding(
            bind, g.constant(batch.windows[static_cast<std::size_t>(t_len - step)]));
      }
      h = ad::gru_cell(teacher, h, dec_gru);
      ad::Var o = ad::dense(h, bind["dec.out1.w"], bind["dec.out1.b"], ad::Activation::relu);
      o = ad::dense(o, bind["dec.out2.w"], bind["dec.out2.b"], ad::Activation::identity);
      outputs[static_cast<std::size_t>(t_len - 1 - step)] = o;
    }
    flat = ad::concat_cols(outputs);
  } else {
    ad::Var h = ad::dense(z, bind["dec.ff1.w"], bind["dec.ff1.b"], ad::Activation::relu);
    h = ad::dense(h, bind["dec.ff2.w"], bind["dec.ff2.b"], ad::Activation::relu);
    flat = ad::dense(h, bind["dec.out.w"], bind["dec.out.b"], ad::Activation::identity);
  }
  if (config_.layout.n_binary > 0) flat = ad::sigmoid_masked(flat, flat_binary_mask(config_, n));
  return flat;
}

ad::Var Network::predict_risk(ad::Graph& g, ad::Binding& bind, ad::Var z) const {
  (void)g;
  return ad::dense(z, bind["risk.w"], bind["risk.b"], ad::Activation::identity);
}

ad::Var Network::soft_assign(ad::Graph& g, ad::Binding& bind, ad::Var z) const {
  if (!has_centroids()) throw std::logic_error("soft_assign: centroids not initialized");
  if (config_.n_clusters < 2) throw std::invalid_argument("soft_assign: need K >= 2");
  (void)g;
  ad::Var lambda = bind["centroids"];
  ad::Var zz = ad::row_sum(ad::mul(z, z));                       // N x 1
  ad::Var ll = ad::transpose_var(ad::row_sum(ad::mul(lambda, lambda)));  // 1 x K
  ad::Var cross = ad::matmul(z, ad::transpose_var(lambda));      // N x K
  ad::Var d2 = ad::add_colvec(ad::add_rowvec(ad::scale(cross, -2.0), ll), zz);
  ad::Var u = ad::pow_scalar(ad::add_scalar(d2, 1.0), -0.5);
  return ad::div_colvec(u, ad::row_sum(u));
}

// ---------------------------------------------------------------------------
// Evaluation-mode helpers

Tensor Network::encode_mu(const Cohort& cohort, int batch_size) const {
  const int n = static_cast<int>(cohort.size());
  Tensor out(n, config_.latent_width);
  for (int start = 0; start < n; start += batch_size) {
    const int end = std::min(n, start + batch_size);
    std::vector<int> idx(static_cast<std::size_t>(end - start));
    std::iota(idx.begin(), idx.end(), start);
    Batch batch = make_batch(cohort, idx);
    ad::Graph g;
    ad::Binding bind(g, params_);
    EncodeVars enc = encode(g, bind, batch, false, nullptr);
    const Tensor& mu = enc.mu.value();
    for (int i = 0; i < mu.rows(); ++i)
      for (int j = 0; j < mu.cols(); ++j) out(start + i, j) = mu(i, j);
  }
  return out;
}

Tensor Network::soft_assign_values(const Tensor& z) const {
  if (!has_centroids()) throw std::logic_error("soft_assign_values: centroids not initialized");
  return student_t_soft_assign(z, centroids());
}

void Network::save(const std::string& dir) const {
  io::ensure_dir(dir);
  params_.save(dir + "/params.bin");
  nlohmann::json j;
  j["input_width"] = config_.input_width;
  j["n_windows"] = config_.n_windows;
  j["embed_width"] = config_.embed_width;
  j["latent_width"] = config_.latent_width;
  j["n_gru_layers"] = config_.n_gru_layers;
  j["dropout_p"] = config_.dropout_p;
  j["n_clusters"] = config_.n_clusters;
  j["encoder_kind"] =
      config_.encoder_kind == EncoderKind::recurrent ? "recurrent" : "feedforward";
  j["n_binary"] = config_.layout.n_binary;
  j["n_continuous"] = config_.layout.n_continuous;
  io::write_file(dir + "/model.json", j.dump(2) + "\n");
}

Network Network::load(const std::string& dir) {
  nlohmann::json j = nlohmann::json::parse(io::read_file(dir + "/model.json"));
  Network net;
  net.config_.input_width = j.at("input_width").get<int>();
  net.config_.n_windows = j.at("n_windows").get<int>();
  net.config_.embed_width = j.at("embed_width").get<int>();
  net.config_.latent_width = j.at("latent_width").get<int>();
  net.config_.n_gru_layers = j.at("n_gru_layers").get<int>();
  net.config_.dropout_p = j.at("dropout_p").get<double>();
  net.config_.n_clusters = j.at("n_clusters").get<int>();
  net.config_.encoder_kind = j.at("encoder_kind").get<std::string>() == "recurrent"
                                 ? EncoderKind::recurrent
                                 : EncoderKind::feedforward;
  net.config_.layout.n_binary = j.at("n_binary").get<int>();
  net.config_.layout.n_continuous = j.at("n_continuous").get<int>();
  net.params_ = ad::ParamSet::load(dir + "/params.bin");
  return net;
}

// ---------------------------------------------------------------------------
// Assignment math on plain tensors

Tensor student_t_soft_assign(const Tensor& z, const Tensor& centroids) {
  const int n = z.rows(), k = centroids.rows(), d = z.cols();
  if (centroids.cols() != d)
    throw std::invalid_argument("student_t_soft_assign: dimension mismatch");
  if (k < 2) throw std::invalid_argument("student_t_soft_assign: need K >= 2");
  Tensor q(n, k);
  for (int i = 0; i < n; ++i) {
    double norm = 0.0;
    for (int c = 0; c < k; ++c) {
      double d2 = 0.0;
      for (int j = 0; j < d; ++j) {
        const double diff = z(i, j) - centroids(c, j);
        d2 += diff * diff;
      }
      const double u = 1.0 / std::sqrt(1.0 + d2);
      q(i, c) = u;
      norm += u;
    }
    for (int c = 0; c < k; ++c) q(i, c) /= norm;
  }
  return q;
}

Tensor target_distribution(const Tensor& q) {
  const int n = q.rows(), k = q.cols();
  std::vector<double> freq(static_cast<std::size_t>(k), 0.0);
  for (int i = 0; i < n; ++i) {
    double row = 0.0;
    for (int c = 0; c < k; ++c) {
      if (q(i, c) < 0.0) throw std::domain_error("target_distribution: negative probability");
      row += q(i, c);
      freq[static_cast<std::size_t>(c)] += q(i, c);
    }
    if (std::abs(row - 1.0) > 1e-6)
      throw std::invalid_argument("target_distribution: row " + std::to_string(i) +
                                  " is not a probability vector (sum " + std::to_string(row) +
                                  ")");
  }
  for (int c = 0; c < k; ++c)
    if (freq[static_cast<std::size_t>(c)] == 0.0)
      throw std::domain_error("target_distribution: degenerate cluster " + std::to_string(c) +
                              " has zero soft mass");
  Tensor p(n, k);
  for (int i = 0; i < n; ++i) {
    double norm = 0.0;
    for (int c = 0; c < k; ++c) {
      const double v = q(i, c) * q(i, c) / freq[static_cast<std::size_t>(c)];
      p(i, c) = v;
      norm += v;
    }
    for (int c = 0; c < k; ++c) p(i, c) /= norm;
  }
  return p;
}

std::vector<int> hard_labels(const Tensor& q) {
  std::vector<int> labels(static_cast<std::size_t>(q.rows()));
  for (int i = 0; i < q.rows(); ++i) {
    int best = 0;
    for (int c = 1; c < q.cols(); ++c)
      if (q(i, c) > q(i, best)) best = c;
    labels[static_cast<std::size_t>(i)] = best;
  }
  return labels;
}

Tensor init_centroids(const Tensor& embeddings, int k, Rng& rng) {
  if (embeddings.rows() < k)
    throw std::invalid_argument("init_centroids: need at least K=" + std::to_string(k) +
                                " embeddings, got " + std::to_string(embeddings.rows()));
  baseline::KMeansResult km = baseline::kmeans(embeddings, k, rng, /*restarts=*/10,
                                               /*max_iters=*/100);
  Tensor& c = km.centroids;

  // Rows must be pairwise distinct; replace any duplicate with the data
  // point farthest from all current centroids (deterministic).
  auto rows_equal = [&](int a, int b) {
    for (int j = 0; j < c.cols(); ++j)
      if (c(a, j) != c(b, j)) return false;
    return true;
  };
  for (int a = 0; a < k; ++a) {
    for (int b = a + 1; b < k; ++b) {
      if (!rows_equal(a, b)) continue;
      int far_i = -1;
      double far_d = -1.0;
      for (int i = 0; i < embeddings.rows(); ++i) {
        double min_d = std::numeric_limits<double>::infinity();
        for (int cc = 0; cc < k; ++cc) {
          double d2 = 0.0;
          for (int j = 0; j < c.cols(); ++j) {
            const double diff = embeddings(i, j) - c(cc, j);
            d2 += diff * diff;
          }
          min_d = std::min(min_d, d2);
        }
        if (min_d > far_d) {
          far_d = min_d;
          far_i = i;
        }
      }
      if (far_i < 0 || far_d <= 0.0)
        throw std::runtime_error("init_centroids: fewer than K distinct embeddings");
      for (int j = 0; j < c.cols(); ++j) c(b, j) = embeddings(far_i, j);
    }
  }
  return c;
}

}  // namespace trajcluster::net
