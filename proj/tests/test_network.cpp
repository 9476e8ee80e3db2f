#include <doctest.h>

#include <cmath>

#include "trajcluster/losses.hpp"
#include "trajcluster/metrics.hpp"
#include "trajcluster/network.hpp"
#include "trajcluster/trainer.hpp"

using namespace trajcluster;

namespace {

Cohort tiny_cohort(int n, int width, int n_windows, std::uint64_t seed) {
  Rng rng(seed);
  Cohort cohort;
  cohort.layout = FeatureLayout{0, width};
  cohort.trajectories.resize(static_cast<std::size_t>(n));
  for (auto& traj : cohort.trajectories) {
    traj.windows.assign(static_cast<std::size_t>(n_windows),
                        std::vector<double>(static_cast<std::size_t>(width)));
    traj.mask.assign(static_cast<std::size_t>(n_windows), 1);
    traj.continuous_mask.assign(static_cast<std::size_t>(n_windows),
                                std::vector<char>(static_cast<std::size_t>(width), 1));
    for (auto& w : traj.windows)
      for (auto& v : w) v = rng.uniform();
  }
  return cohort;
}

net::ModelConfig tiny_config(int width, int n_windows, net::EncoderKind kind) {
  net::ModelConfig cfg;
  cfg.input_width = width;
  cfg.n_windows = n_windows;
  cfg.embed_width = 8;
  cfg.latent_width = 3;
  cfg.n_gru_layers = 2;
  cfg.dropout_p = 0.1;
  cfg.n_clusters = 2;
  cfg.encoder_kind = kind;
  cfg.layout = FeatureLayout{0, width};
  return cfg;
}

}  // namespace

TEST_SUITE("network") {
  TEST_CASE("soft assignment: equidistant point gets the uniform row") {
    Tensor z(1, 2);  // origin
    Tensor centroids(3, 2);
    centroids(0, 0) = 1.0;
    centroids(1, 0) = -0.5;
    centroids(1, 1) = std::sqrt(3.0) / 2.0;
    centroids(2, 0) = -0.5;
    centroids(2, 1) = -std::sqrt(3.0) / 2.0;
    const Tensor q = net::student_t_soft_assign(z, centroids);
    for (int c = 0; c < 3; ++c) CHECK(q(0, c) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  }

  TEST_CASE("soft assignment: sitting on a centroid wins") {
    Tensor z(1, 2);
    z(0, 0) = 5.0;
    Tensor centroids(3, 2);
    centroids(0, 0) = 5.0;
    centroids(1, 0) = -20.0;
    centroids(2, 1) = 40.0;
    const Tensor q = net::student_t_soft_assign(z, centroids);
    CHECK(q(0, 0) > q(0, 1));
    CHECK(q(0, 0) > q(0, 2));
  }

  TEST_CASE("soft assignment: K=2 hand case gives (2/3, 1/3)") {
    Tensor z(1, 1);
    Tensor centroids(2, 1);
    centroids(0, 0) = 0.0;             // squared distance 0 -> u = 1
    centroids(1, 0) = std::sqrt(3.0);  // squared distance 3 -> u = 1/2
    const Tensor q = net::student_t_soft_assign(z, centroids);
    CHECK(q(0, 0) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(q(0, 1) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  }

  TEST_CASE("soft assignment rows are strictly positive and sum to 1 within 1e-12") {
    Rng rng(3);
    Tensor z(50, 4), centroids(5, 4);
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = 3.0 * rng.normal();
    for (std::size_t i = 0; i < centroids.size(); ++i) centroids[i] = 3.0 * rng.normal();
    const Tensor q = net::student_t_soft_assign(z, centroids);
    for (int i = 0; i < q.rows(); ++i) {
      double s = 0.0;
      for (int c = 0; c < q.cols(); ++c) {
        CHECK(q(i, c) > 0.0);
        s += q(i, c);
      }
      CHECK(std::abs(s - 1.0) < 1e-12);
    }
  }

  TEST_CASE("hard assignment is invariant under uniform scaling of the geometry") {
    Rng rng(5);
    Tensor z(40, 3), centroids(4, 3);
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = rng.normal();
    for (std::size_t i = 0; i < centroids.size(); ++i) centroids[i] = rng.normal();
    const auto base = net::hard_labels(net::student_t_soft_assign(z, centroids));
    Tensor z2 = z, c2 = centroids;
    for (std::size_t i = 0; i < z2.size(); ++i) z2[i] *= 2.5;
    for (std::size_t i = 0; i < c2.size(); ++i) c2[i] *= 2.5;
    const auto scaled = net::hard_labels(net::student_t_soft_assign(z2, c2));
    CHECK(base == scaled);
  }

  TEST_CASE("target distribution: uniform rows are a fixed point") {
    Tensor q(4, 3, 1.0 / 3.0);
    const Tensor p = net::target_distribution(q);
    for (std::size_t i = 0; i < p.size(); ++i) CHECK(p[i] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  }

  TEST_CASE("target distribution: single row is unchanged") {
    Tensor q(1, 2);
    q(0, 0) = 0.8;
    q(0, 1) = 0.2;
    const Tensor p = net::target_distribution(q);
    CHECK(p(0, 0) == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(p(0, 1) == doctest::Approx(0.2).epsilon(1e-12));
  }

  TEST_CASE("target distribution sharpens confident rows") {
    Tensor q(2, 2);
    q(0, 0) = 0.6;
    q(0, 1) = 0.4;
    q(1, 0) = 0.6;
    q(1, 1) = 0.4;
    const Tensor p = net::target_distribution(q);
    CHECK(p(0, 0) >= q(0, 0));
    for (int i = 0; i < 2; ++i)
      CHECK(p(i, 0) + p(i, 1) == doctest::Approx(1.0).epsilon(1e-12));
  }

  TEST_CASE("target distribution: degenerate cluster raises a named error") {
    Tensor q(2, 2);
    q(0, 0) = 1.0;
    q(1, 0) = 1.0;
    CHECK_THROWS_WITH_AS(net::target_distribution(q), doctest::Contains("cluster 1"),
                         std::domain_error);
  }

  TEST_CASE("init_centroids: K = N picks the embeddings themselves") {
    Tensor emb(3, 2);
    emb(0, 0) = 0.0;
    emb(1, 0) = 10.0;
    emb(2, 1) = -7.0;
    Rng rng(7);
    const Tensor c = net::init_centroids(emb, 3, rng);
    // Every embedding appears exactly once among the centroids.
    for (int i = 0; i < 3; ++i) {
      bool found = false;
      for (int k = 0; k < 3; ++k)
        found = found || (c(k, 0) == emb(i, 0) && c(k, 1) == emb(i, 1));
      CHECK(found);
    }
  }

  TEST_CASE("init_centroids is deterministic and recovers separated blobs") {
    Rng data_rng(9);
    Tensor emb(300, 2);
    std::vector<int> truth(300);
    for (int i = 0; i < 300; ++i) {
      const int g = i % 3;
      truth[static_cast<std::size_t>(i)] = g;
      emb(i, 0) = 10.0 * g + 0.1 * data_rng.normal();
      emb(i, 1) = -5.0 * g + 0.1 * data_rng.normal();
    }
    Rng rng_a(11), rng_b(11);
    const Tensor ca = net::init_centroids(emb, 3, rng_a);
    const Tensor cb = net::init_centroids(emb, 3, rng_b);
    for (std::size_t i = 0; i < ca.size(); ++i) CHECK(ca[i] == cb[i]);

    const auto labels = net::hard_labels(net::student_t_soft_assign(emb, ca));
    CHECK(metrics::adjusted_rand_index(labels, truth) > 0.99);

    CHECK_THROWS(net::init_centroids(emb, 301, rng_a));
  }

  TEST_CASE("encode is deterministic in evaluation mode and distinguishes patients") {
    const Cohort cohort = tiny_cohort(4, 6, 3, 13);
    Rng rng(15);
    net::Network model = net::Network::init(tiny_config(6, 3, net::EncoderKind::recurrent), rng);
    const Tensor mu1 = model.encode_mu(cohort);
    const Tensor mu2 = model.encode_mu(cohort);
    for (std::size_t i = 0; i < mu1.size(); ++i) CHECK(mu1[i] == mu2[i]);

    bool distinct = false;
    for (int j = 0; j < mu1.cols(); ++j) distinct = distinct || mu1(0, j) != mu1(1, j);
    CHECK(distinct);
  }

  TEST_CASE("all-empty trajectory encodes to a finite embedding") {
    Cohort cohort;
    cohort.layout = FeatureLayout{2, 4};
    TrajectoryTensor traj;
    traj.windows.assign(3, canonical_empty_window(cohort.layout));
    traj.mask.assign(3, 0);
    traj.continuous_mask.assign(3, std::vector<char>(4, 0));
    cohort.trajectories.push_back(traj);
    Rng rng(17);
    auto cfg = tiny_config(6, 3, net::EncoderKind::recurrent);
    cfg.layout = cohort.layout;
    net::Network model = net::Network::init(cfg, rng);
    const Tensor mu = model.encode_mu(cohort);
    for (std::size_t i = 0; i < mu.size(); ++i) CHECK(std::isfinite(mu[i]));
  }

  TEST_CASE("decode: binary block lands in (0,1); length-1 runs from the start token") {
    Rng rng(19);
    auto cfg = tiny_config(5, 1, net::EncoderKind::recurrent);
    cfg.layout = FeatureLayout{3, 2};
    net::Network model = net::Network::init(cfg, rng);

    Cohort cohort;
    cohort.layout = cfg.layout;
    TrajectoryTensor traj;
    traj.windows.assign(1, std::vector<double>{1.0, 0.0, 1.0, 0.4, 0.9});
    traj.mask.assign(1, 1);
    traj.continuous_mask.assign(1, std::vector<char>{1, 1});
    cohort.trajectories.push_back(traj);

    net::Batch batch = net::make_batch(cohort, {0});
    ad::Graph g;
    ad::Binding bind(g, model.params());
    const auto enc = model.encode(g, bind, batch, false, nullptr);
    const ad::Var x_hat = model.decode(g, bind, enc.z, batch, false, nullptr);
    REQUIRE(x_hat.value().cols() == 5);
    for (int j = 0; j < 3; ++j) {
      CHECK(x_hat.value()(0, j) > 0.0);
      CHECK(x_hat.value()(0, j) < 1.0);
    }
  }

  TEST_CASE("decode rejects a teacher sequence of the wrong length") {
    Rng rng(21);
    auto cfg = tiny_config(4, 2, net::EncoderKind::recurrent);
    net::Network model = net::Network::init(cfg, rng);
    const Cohort two = tiny_cohort(2, 4, 2, 23);
    const Cohort three = tiny_cohort(2, 4, 3, 23);
    net::Batch good = net::make_batch(two, {0, 1});
    net::Batch bad = net::make_batch(three, {0, 1});
    ad::Graph g;
    ad::Binding bind(g, model.params());
    const auto enc = model.encode(g, bind, good, false, nullptr);
    CHECK_THROWS(model.decode(g, bind, enc.z, bad, false, nullptr));
  }

  TEST_CASE("predict_risk: zero weights return the bias; linear in z") {
    Rng rng(25);
    auto cfg = tiny_config(4, 1, net::EncoderKind::feedforward);
    net::Network model = net::Network::init(cfg, rng);
    model.params().at("risk.w").fill(0.0);
    model.params().at("risk.b")(0, 0) = 0.37;

    ad::Graph g;
    ad::Binding bind(g, model.params());
    Tensor z(2, 3);
    z(0, 0) = 1.0;
    z(1, 1) = -2.0;
    ad::Var r0 = model.predict_risk(g, bind, g.constant(z));
    CHECK(r0.value()(0, 0) == doctest::Approx(0.37));
    CHECK(r0.value()(1, 0) == doctest::Approx(0.37));

    Rng rng2(26);
    net::Network lin = net::Network::init(cfg, rng2);
    ad::Graph g2;
    ad::Binding bind2(g2, lin.params());
    const double bias = lin.params().at("risk.b")(0, 0);
    Tensor z2 = z;
    for (std::size_t i = 0; i < z2.size(); ++i) z2[i] *= 2.0;
    ad::Var r1 = lin.predict_risk(g2, bind2, g2.constant(z));
    ad::Var r2 = lin.predict_risk(g2, bind2, g2.constant(z2));
    CHECK(r2.value()(0, 0) - bias ==
          doctest::Approx(2.0 * (r1.value()(0, 0) - bias)).epsilon(1e-12));
  }

  TEST_CASE("overfitting one patient collapses the masked reconstruction loss") {
    const Cohort cohort = tiny_cohort(1, 4, 2, 27);
    Rng rng(29);
    auto cfg = tiny_config(4, 2, net::EncoderKind::recurrent);
    cfg.embed_width = 16;
    net::Network model = net::Network::init(cfg, rng);

    train::AdamW opt(1e-2, 0.0);
    Rng noise_rng(31);
    double initial = -1.0;
    double final_loss = 0.0;
    for (int step = 0; step < 500; ++step) {
      net::Batch batch = net::make_batch(cohort, {0});
      ad::Graph g;
      ad::Binding bind(g, model.params());
      const auto enc = model.encode(g, bind, batch, true, &noise_rng);
      const ad::Var x_hat = model.decode(g, bind, enc.z, batch, true, &noise_rng);
      const ad::Var l = loss::recon_loss(x_hat, batch.flat_x, batch.valid_cont, batch.valid_bin, 1.0);
      if (step == 0) initial = l.value()(0, 0);
      final_loss = l.value()(0, 0);
      g.backward(l);
      std::map<std::string, Tensor> grads;
      for (const auto& [name, var] : bind.leaves()) grads[name] = var.grad();
      opt.step(model.params(), grads);
    }
    CHECK(final_loss < 0.01 * initial);
  }

  TEST_CASE("evaluation pipeline is a pure function of params and input") {
    const Cohort cohort = tiny_cohort(5, 4, 1, 33);
    Rng rng(35);
    auto cfg = tiny_config(4, 1, net::EncoderKind::feedforward);
    net::Network model = net::Network::init(cfg, rng);
    Rng crng(37);
    model.set_centroids(net::init_centroids(model.encode_mu(cohort), 2, crng));
    const Tensor q1 = model.soft_assign_values(model.encode_mu(cohort));
    const Tensor q2 = model.soft_assign_values(model.encode_mu(cohort));
    for (std::size_t i = 0; i < q1.size(); ++i) CHECK(q1[i] == q2[i]);
  }

  TEST_CASE("checkpoint save/load round trips the model") {
    Rng rng(39);
    auto cfg = tiny_config(4, 2, net::EncoderKind::recurrent);
    net::Network model = net::Network::init(cfg, rng);
    model.save("/tmp/trajcluster_test_model");
    const net::Network loaded = net::Network::load("/tmp/trajcluster_test_model");
    CHECK(loaded.config().input_width == cfg.input_width);
    CHECK(loaded.config().encoder_kind == cfg.encoder_kind);
    REQUIRE(loaded.params().names() == model.params().names());
    for (const auto& name : model.params().names()) {
      const Tensor& a = model.params().at(name);
      const Tensor& b = loaded.params().at(name);
      for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
    }
  }

  TEST_CASE("model config validation") {
    auto cfg = tiny_config(4, 1, net::EncoderKind::feedforward);
    cfg.latent_width = 4;  // no compression
    CHECK_THROWS(cfg.validate());
    cfg = tiny_config(4, 1, net::EncoderKind::feedforward);
    cfg.n_clusters = 1;
    CHECK_THROWS(cfg.validate());
  }
}
