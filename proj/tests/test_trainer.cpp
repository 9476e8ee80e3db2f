#include <doctest.h>

#include <cmath>

#include "trajcluster/synthetic.hpp"
#include "trajcluster/trainer.hpp"

using namespace trajcluster;

namespace {

Cohort desk_cohort(int n, std::uint64_t seed) {
  synth::SyntheticConfig config;
  config.n_patients = n;
  config.n_noise_features = 12;
  config.n_outcome_features = 12;
  config.seed = seed;
  return synth::to_sequences(synth::generate_dataset(config), 1);
}

net::ModelConfig desk_model(int total_width) {
  net::ModelConfig cfg;
  cfg.input_width = total_width;
  cfg.n_windows = 1;
  cfg.embed_width = 16;
  cfg.latent_width = 6;
  cfg.n_clusters = 3;
  cfg.encoder_kind = net::EncoderKind::feedforward;
  cfg.layout = FeatureLayout{0, total_width};
  return cfg;
}

}  // namespace

TEST_SUITE("trainer") {
  TEST_CASE("AdamW: zero gradient and zero decay leaves parameters unchanged") {
    ad::ParamSet params;
    params.add("w", Tensor(2, 2, 1.5), true, true);
    const Tensor before = params.at("w");
    train::AdamW opt(1e-2, 0.0);
    std::map<std::string, Tensor> grads;
    grads["w"] = Tensor(2, 2, 0.0);
    opt.step(params, grads);
    for (std::size_t i = 0; i < before.size(); ++i) CHECK(params.at("w")[i] == before[i]);
  }

  TEST_CASE("weight decay touches decayed weights only") {
    ad::ParamSet params;
    params.add("w", Tensor(2, 2, 1.0), true, true);
    params.add("b", Tensor(1, 2, 1.0), true, false);
    params.add("centroids", Tensor(2, 2, 1.0), true, false);
    train::AdamW opt(1e-2, 0.1);
    std::map<std::string, Tensor> grads;
    grads["w"] = Tensor(2, 2, 0.0);
    grads["b"] = Tensor(1, 2, 0.0);
    grads["centroids"] = Tensor(2, 2, 0.0);
    opt.step(params, grads);
    CHECK(params.at("w")(0, 0) < 1.0);
    CHECK(params.at("b")(0, 0) == 1.0);
    CHECK(params.at("centroids")(0, 0) == 1.0);
  }

  TEST_CASE("learning rate zero leaves the checkpoint untouched") {
    const Cohort cohort = desk_cohort(40, 1);
    Rng rng(2);
    net::Network model = net::Network::init(desk_model(24), rng);
    const ad::ParamSet before = model.params();
    train::TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 16;
    cfg.learning_rate = 0.0;
    cfg.weight_decay = 0.0;
    cfg.seed = 3;
    cfg.weights = loss::LossWeights{1.0, 0.0, 0.0, 1e-5, 1.0};
    train::pretrain(model, cohort, cfg);
    for (const auto& name : before.names()) {
      const Tensor& a = before.at(name);
      const Tensor& b = model.params().at(name);
      for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
    }
  }

  TEST_CASE("pretraining halves the reconstruction loss at desk scale") {
    const Cohort cohort = desk_cohort(200, 5);
    Rng rng(6);
    net::Network model = net::Network::init(desk_model(24), rng);
    train::TrainConfig cfg;
    cfg.epochs = 30;
    cfg.batch_size = 32;
    cfg.learning_rate = 2e-3;
    cfg.weight_decay = 1e-6;
    cfg.seed = 7;
    cfg.weights = loss::LossWeights{1.0, 0.0, 0.0, 1e-5, 1.0};
    const auto result = train::pretrain(model, cohort, cfg);
    REQUIRE(result.curve.size() == 30);
    CHECK(result.curve.back().recon < 0.5 * result.curve.front().recon);

    // Trend contract: the 10-epoch moving average never rises by more than 5%.
    std::vector<double> ma;
    for (std::size_t e = 0; e + 10 <= result.curve.size(); ++e) {
      double s = 0.0;
      for (std::size_t j = e; j < e + 10; ++j) s += result.curve[j].total;
      ma.push_back(s / 10.0);
    }
    for (std::size_t i = 1; i < ma.size(); ++i) CHECK(ma[i] <= 1.05 * ma[i - 1]);
  }

  TEST_CASE("identical seeds give bit-identical checkpoints") {
    const Cohort cohort = desk_cohort(60, 8);
    auto run = [&]() {
      Rng rng(9);
      net::Network model = net::Network::init(desk_model(24), rng);
      train::TrainConfig cfg;
      cfg.epochs = 3;
      cfg.batch_size = 16;
      cfg.learning_rate = 1e-3;
      cfg.seed = 10;
      cfg.weights = loss::LossWeights{1.0, 0.0, 0.0, 1e-5, 1.0};
      train::pretrain(model, cohort, cfg);
      return model;
    };
    const net::Network a = run();
    const net::Network b = run();
    for (const auto& name : a.params().names()) {
      const Tensor& ta = a.params().at(name);
      const Tensor& tb = b.params().at(name);
      for (std::size_t i = 0; i < ta.size(); ++i) CHECK(ta[i] == tb[i]);
    }
  }

  TEST_CASE("divergence aborts with the epoch index") {
    const Cohort cohort = desk_cohort(40, 11);
    Rng rng(12);
    net::Network model = net::Network::init(desk_model(24), rng);
    train::TrainConfig cfg;
    cfg.epochs = 50;
    cfg.batch_size = 20;
    cfg.learning_rate = 1e200;  // one step overflows the next forward pass
    cfg.seed = 13;
    cfg.weights = loss::LossWeights{1.0, 0.0, 0.0, 1e-5, 1.0};
    CHECK_THROWS_WITH_AS(train::pretrain(model, cohort, cfg), doctest::Contains("epoch"),
                         std::runtime_error);
  }

  TEST_CASE("fine-tuning produces labels, sharpening stats, and loss curves") {
    const Cohort cohort = desk_cohort(120, 14);
    Rng rng(15);
    net::Network model = net::Network::init(desk_model(24), rng);
    train::TrainConfig pre;
    pre.epochs = 10;
    pre.batch_size = 32;
    pre.learning_rate = 2e-3;
    pre.seed = 16;
    pre.weights = loss::LossWeights{1.0, 0.0, 0.0, 1e-5, 1.0};
    train::pretrain(model, cohort, pre);

    train::TrainConfig fine;
    fine.epochs = 8;
    fine.batch_size = 32;
    fine.learning_rate = 1e-3;
    fine.seed = 17;
    fine.weights = loss::LossWeights{0.05, 1.0, 0.25, 1e-5, 1.0};
    const auto result = train::finetune_cluster(model, cohort, fine);
    CHECK(result.labels.size() == cohort.size());
    CHECK(result.q.rows() == static_cast<int>(cohort.size()));
    CHECK(result.curve.size() == 8);
    CHECK(result.sharp_fraction.size() == 9);  // before training + after each epoch
    for (double f : result.sharp_fraction) {
      CHECK(f >= 0.0);
      CHECK(f <= 1.0);
    }
    for (const auto& e : result.curve) CHECK(std::isfinite(e.total));
  }

  TEST_CASE("fine-tuning with outcome loss requires outcomes") {
    Cohort cohort = desk_cohort(40, 18);
    cohort.outcomes.clear();
    Rng rng(19);
    net::Network model = net::Network::init(desk_model(24), rng);
    train::TrainConfig fine;
    fine.weights = loss::LossWeights{0.0, 1.0, 0.25, 1e-5, 1.0};
    fine.seed = 20;
    CHECK_THROWS(train::finetune_cluster(model, cohort, fine));
  }

  TEST_CASE("repeated runs: single repeat and constant metrics have zero stddev") {
    const Cohort cohort = desk_cohort(50, 21);
    train::TrainConfig cfg;
    cfg.n_repeats = 1;
    cfg.seed = 22;
    const auto one = train::repeated_runs(cohort, cfg, [](const std::vector<int>& idx,
                                                          std::uint64_t) {
      return std::map<std::string, double>{{"n", static_cast<double>(idx.size())}};
    });
    CHECK(one.at("n").stddev == 0.0);
    CHECK(one.at("n").mean == doctest::Approx(40.0));

    train::TrainConfig five = cfg;
    five.n_repeats = 5;
    const auto constant = train::repeated_runs(cohort, five, [](const std::vector<int>&,
                                                                std::uint64_t) {
      return std::map<std::string, double>{{"c", 3.25}};
    });
    CHECK(constant.at("c").stddev == 0.0);
    CHECK(constant.at("c").mean == 3.25);

    // Fresh split per repeat: different repeats see different index sets.
    std::vector<std::vector<int>> seen;
    train::repeated_runs(cohort, five, [&](const std::vector<int>& idx, std::uint64_t) {
      seen.push_back(idx);
      return std::map<std::string, double>{};
    });
    CHECK(seen.size() == 5);
    bool any_diff = false;
    for (std::size_t r = 1; r < seen.size(); ++r) any_diff = any_diff || seen[r] != seen[0];
    CHECK(any_diff);
  }

  TEST_CASE("loss curve CSV has the documented header") {
    std::vector<train::EpochLoss> curve = {{0.5, 0.1, 0.2, 0.3, 1.1}};
    const std::string csv = train::loss_curve_csv(curve);
    CHECK(csv.rfind("epoch,L_r,L_KL,L_y,L_c,total\n", 0) == 0);
  }
}
