#include <doctest.h>

#include <cmath>

#include "trajcluster/baselines.hpp"
#include "trajcluster/metrics.hpp"
#include "trajcluster/synthetic.hpp"

using namespace trajcluster;

namespace {

synth::SyntheticConfig desk_config(int n = 600) {
  synth::SyntheticConfig c;
  c.n_patients = n;
  c.n_noise_features = 20;
  c.n_outcome_features = 20;
  c.seed = 123;
  return c;
}

}  // namespace

TEST_SUITE("synthetic") {
  TEST_CASE("log-spaced scales match the closed form 10^(1 + 1.5 i)") {
    const auto scales = synth::log_spaced_scales(3, 10.0, 10000.0);
    REQUIRE(scales.size() == 3);
    CHECK(scales[0] == doctest::Approx(10.0).epsilon(1e-12));
    CHECK(scales[1] == doctest::Approx(316.22776601683796).epsilon(1e-12));
    CHECK(scales[2] == doctest::Approx(10000.0).epsilon(1e-12));
  }

  TEST_CASE("isotropic clusters with std 0 collapse onto the centroid") {
    Rng rng(1);
    auto [features, labels] = synth::generate_isotropic_clusters(1, 5, 0.0, -2.0, 2.0, 10, rng);
    for (int i = 1; i < features.rows(); ++i)
      for (int j = 0; j < features.cols(); ++j) CHECK(features(i, j) == features(0, j));
    for (int l : labels) CHECK(l == 0);
  }

  TEST_CASE("tiny tight instance is exactly recoverable by k-means") {
    Rng rng(2);
    auto [features, labels] = synth::generate_isotropic_clusters(2, 6, 0.01, -10.0, 10.0, 200, rng);
    Rng km_rng(3);
    const auto km = baseline::kmeans(features, 2, km_rng);
    CHECK(metrics::adjusted_rand_index(km.labels, labels) == doctest::Approx(1.0));
  }

  TEST_CASE("zero features or zero samples is an invalid config") {
    Rng rng(4);
    CHECK_THROWS(synth::generate_isotropic_clusters(2, 0, 1.0, -1.0, 1.0, 10, rng));
    CHECK_THROWS(synth::generate_isotropic_clusters(2, 3, 1.0, -1.0, 1.0, 0, rng));
  }

  TEST_CASE("censor_prob 1 censors everything") {
    Rng rng(5);
    std::vector<int> labels(50, 0);
    const auto outcomes = synth::generate_outcome_times(labels, 1, 10.0, 10.0, 1.0, 1e18, rng);
    for (const auto& o : outcomes) {
      CHECK(o.event == 0);
      CHECK(o.time > 0.0);
    }
  }

  TEST_CASE("empirical mean time tracks the exponential scale before capping") {
    Rng rng(6);
    std::vector<int> labels(10000, 0);
    const auto outcomes = synth::generate_outcome_times(labels, 3, 10.0, 10000.0, 0.5, 1e18, rng);
    double mean = 0.0;
    for (const auto& o : outcomes) mean += o.time;
    mean /= static_cast<double>(outcomes.size());
    CHECK(mean == doctest::Approx(10.0).epsilon(0.05));
  }

  TEST_CASE("capped times are censored") {
    Rng rng(7);
    std::vector<int> labels(2000, 0);
    const auto outcomes = synth::generate_outcome_times(labels, 1, 1000.0, 1000.0, 0.0, 50.0, rng);
    bool any_capped = false;
    for (const auto& o : outcomes) {
      if (o.time == 50.0) {
        any_capped = true;
        CHECK(o.event == 0);
      }
      CHECK(o.time <= 50.0);
    }
    CHECK(any_capped);
  }

  TEST_CASE("tte_min <= 0 is an invalid config") {
    Rng rng(8);
    std::vector<int> labels(5, 0);
    CHECK_THROWS(synth::generate_outcome_times(labels, 1, 0.0, 10.0, 0.5, 100.0, rng));
  }

  TEST_CASE("split_combined_clusters halves every outcome cluster") {
    Rng rng(9);
    std::vector<int> outcome(18000);
    for (std::size_t i = 0; i < outcome.size(); ++i) outcome[i] = static_cast<int>(i % 3);
    const auto combined = synth::split_combined_clusters(outcome, rng);
    std::vector<int> counts(6, 0);
    for (std::size_t i = 0; i < combined.size(); ++i) {
      CHECK(combined[i] / 2 == outcome[i]);
      counts[static_cast<std::size_t>(combined[i])]++;
    }
    for (int c : counts) CHECK(c == 3000);
  }

  TEST_CASE("split of a size-2 cluster gives halves of 1 and 1") {
    Rng rng(10);
    std::vector<int> outcome = {0, 0, 1, 1};
    const auto combined = synth::split_combined_clusters(outcome, rng);
    CHECK(combined[0] != combined[1]);
    CHECK(combined[2] != combined[3]);
  }

  TEST_CASE("singleton outcome cluster is an invalid config") {
    Rng rng(11);
    std::vector<int> outcome = {0, 0, 1};
    CHECK_THROWS(synth::split_combined_clusters(outcome, rng));
  }

  TEST_CASE("binarize: hand column, idempotence, ties round up, constant error") {
    Tensor t(3, 1);
    t(0, 0) = -1.0;
    t(1, 0) = 0.0;
    t(2, 0) = 3.0;
    const Tensor b = synth::binarize_features(t);
    CHECK(b(0, 0) == 0.0);
    CHECK(b(1, 0) == 0.0);  // scaled 0.25
    CHECK(b(2, 0) == 1.0);

    const Tensor again = synth::binarize_features(b);
    for (std::size_t i = 0; i < b.size(); ++i) CHECK(again[i] == b[i]);

    Tensor mid(3, 1);
    mid(0, 0) = 0.0;
    mid(1, 0) = 1.0;
    mid(2, 0) = 2.0;  // middle scales to exactly 0.5
    CHECK(synth::binarize_features(mid)(1, 0) == 1.0);

    Tensor bad(3, 2);
    bad(0, 0) = 1.0;
    bad(1, 0) = 2.0;
    bad(2, 0) = 3.0;  // column 1 constant
    CHECK_THROWS_WITH_AS(synth::binarize_features(bad),
                         doctest::Contains("column 1"), std::invalid_argument);
  }

  TEST_CASE("generate_dataset: desk-scale invariants") {
    const auto config = desk_config();
    const auto ds = synth::generate_dataset(config);
    CHECK(ds.features.rows() == 600);
    CHECK(ds.features.cols() == 40);
    CHECK(ds.size() == 600);
    for (std::size_t i = 0; i < ds.size(); ++i) {
      CHECK(ds.combined_labels[i] / 2 == ds.outcome_labels[i]);
      CHECK(ds.noise_labels[i] >= 0);
      CHECK(ds.noise_labels[i] < 3);
      CHECK(ds.outcomes[i].time > 0.0);
      if (ds.outcomes[i].time == config.tte_cap) CHECK(ds.outcomes[i].event == 0);
    }
  }

  TEST_CASE("generate_dataset is deterministic per seed") {
    const auto a = synth::generate_dataset(desk_config());
    const auto b = synth::generate_dataset(desk_config());
    REQUIRE(a.features.size() == b.features.size());
    for (std::size_t i = 0; i < a.features.size(); ++i) CHECK(a.features[i] == b.features[i]);
    CHECK(a.noise_labels == b.noise_labels);
    CHECK(a.combined_labels == b.combined_labels);
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a.outcomes[i].time == b.outcomes[i].time);
      CHECK(a.outcomes[i].event == b.outcomes[i].event);
    }

    auto other_seed = desk_config();
    other_seed.seed = 777;
    const auto c = synth::generate_dataset(other_seed);
    bool any_diff = false;
    for (std::size_t i = 0; i < a.features.size(); ++i)
      any_diff = any_diff || a.features[i] != c.features[i];
    CHECK(any_diff);
  }

  TEST_CASE("full-size dataset has the advertised shape") {
    synth::SyntheticConfig config;  // full defaults
    config.seed = 1;
    const auto ds = synth::generate_dataset(config);
    CHECK(ds.features.rows() == 60000);
    CHECK(ds.features.cols() == 400);
    CHECK(ds.noise_labels.size() == 60000);
    CHECK(ds.outcome_labels.size() == 60000);
    CHECK(ds.combined_labels.size() == 60000);
  }

  TEST_CASE("to_sequences partitions contiguously and round-trips") {
    const auto ds = synth::generate_dataset(desk_config(50));
    const Cohort cohort = synth::to_sequences(ds, 4);
    CHECK(cohort.size() == 50);
    CHECK(cohort.layout.n_continuous == 10);
    for (std::size_t p = 0; p < cohort.size(); ++p) {
      const auto& traj = cohort.trajectories[p];
      REQUIRE(traj.n_windows() == 4);
      for (std::size_t w = 0; w < 4; ++w) {
        CHECK(traj.mask[w] == 1);
        for (int j = 0; j < 10; ++j)
          CHECK(traj.windows[w][static_cast<std::size_t>(j)] ==
                ds.features(static_cast<int>(p), static_cast<int>(w) * 10 + j));
      }
    }

    const Cohort single = synth::to_sequences(ds, 1);
    for (int j = 0; j < 40; ++j)
      CHECK(single.trajectories[0].windows[0][static_cast<std::size_t>(j)] == ds.features(0, j));

    CHECK_THROWS(synth::to_sequences(ds, 7));  // 40 % 7 != 0
  }

  TEST_CASE("survival coupling: outcome clusters order KM curves, noise clusters do not") {
    auto config = desk_config(3000);
    config.seed = 21;
    const auto ds = synth::generate_dataset(config);
    std::vector<double> times;
    std::vector<int> events;
    for (const auto& o : ds.outcomes) {
      times.push_back(o.time);
      events.push_back(o.event);
    }

    // Outcome groups: survival at a mid horizon ordered by scale.
    std::vector<metrics::StepCurve> curves;
    for (int g = 0; g < 3; ++g) {
      std::vector<double> t;
      std::vector<int> e;
      for (std::size_t i = 0; i < ds.size(); ++i)
        if (ds.outcome_labels[i] == g) {
          t.push_back(times[i]);
          e.push_back(events[i]);
        }
      curves.push_back(metrics::kaplan_meier(t, e));
    }
    CHECK(curves[0].at(100.0) < curves[1].at(100.0));
    CHECK(curves[1].at(100.0) < curves[2].at(100.0));

    // Noise groups: indistinguishable survival on repeated draws.
    const double chi2_2_q99 = 9.21034037197618;
    for (std::uint64_t seed : {21, 22, 23}) {
      auto cfg = desk_config(3000);
      cfg.seed = seed;
      const auto d = synth::generate_dataset(cfg);
      std::vector<double> t;
      std::vector<int> e;
      for (const auto& o : d.outcomes) {
        t.push_back(o.time);
        e.push_back(o.event);
      }
      const auto lr = metrics::logrank_test(t, e, d.noise_labels);
      CHECK(lr.statistic < chi2_2_q99);
    }
  }

  TEST_CASE("geometric separation: k-means recovers the noise block labels") {
    synth::SyntheticConfig config;  // paper geometry
    config.n_patients = 5000;
    config.seed = 31;
    const auto ds = synth::generate_dataset(config);
    Tensor noise_block(ds.features.rows(), config.n_noise_features);
    for (int i = 0; i < noise_block.rows(); ++i)
      for (int j = 0; j < noise_block.cols(); ++j) noise_block(i, j) = ds.features(i, j);
    Rng rng(32);
    const auto km = baseline::kmeans(noise_block, 3, rng, 3);
    CHECK(metrics::adjusted_rand_index(km.labels, ds.noise_labels) > 0.99);
  }

  TEST_CASE("config validation catches inconsistent cluster counts") {
    auto config = desk_config();
    config.k_combined = 5;
    CHECK_THROWS(synth::generate_dataset(config));
    config = desk_config();
    config.censor_prob = 1.5;
    CHECK_THROWS(synth::generate_dataset(config));
  }
}
