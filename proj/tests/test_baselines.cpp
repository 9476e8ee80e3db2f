#include <doctest.h>

#include <cmath>

#include "trajcluster/baselines.hpp"
#include "trajcluster/metrics.hpp"
#include "trajcluster/rng.hpp"

using namespace trajcluster;

namespace {

Tensor gaussian_blobs(int per_cluster, int k, int d, double spread, double noise, Rng& rng,
                      std::vector<int>* labels_out) {
  Tensor data(per_cluster * k, d);
  for (int c = 0; c < k; ++c) {
    std::vector<double> center(static_cast<std::size_t>(d));
    for (auto& v : center) v = spread * rng.normal();
    for (int i = 0; i < per_cluster; ++i) {
      const int row = c * per_cluster + i;
      for (int j = 0; j < d; ++j)
        data(row, j) = center[static_cast<std::size_t>(j)] + noise * rng.normal();
      if (labels_out) labels_out->push_back(c);
    }
  }
  return data;
}

}  // namespace

TEST_SUITE("baselines") {
  TEST_CASE("pca: rank-1 data puts everything on the first component") {
    Rng rng(1);
    Tensor data(100, 2);
    for (int i = 0; i < 100; ++i) {
      const double t = rng.normal();
      data(i, 0) = 3.0 * t;
      data(i, 1) = -4.0 * t;  // exactly on a line through the origin
    }
    const auto p = baseline::pca(data, 2);
    CHECK(p.explained_variance[0] > 0.0);
    CHECK(p.explained_variance[1] == doctest::Approx(0.0).epsilon(1e-9));
    // First component spans the line (3, -4)/5.
    const double dot = std::abs(p.components(0, 0) * 0.6 + p.components(0, 1) * -0.8);
    CHECK(dot == doctest::Approx(1.0).epsilon(1e-9));
  }

  TEST_CASE("pca components are orthonormal") {
    Rng rng(2);
    Tensor data(60, 5);
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = rng.normal();
    const auto p = baseline::pca(data, 4);
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b) {
        double dot = 0.0;
        for (int j = 0; j < 5; ++j) dot += p.components(a, j) * p.components(b, j);
        CHECK(dot == doctest::Approx(a == b ? 1.0 : 0.0).epsilon(1e-10));
      }
  }

  TEST_CASE("pca projection beats random rank-n projections on reconstruction error") {
    Rng rng(3);
    Tensor data(80, 6);
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = rng.normal() * (1.0 + (i % 6));
    const int n_comp = 2;
    const auto p = baseline::pca(data, n_comp);

    Tensor centered = data;
    for (int i = 0; i < data.rows(); ++i)
      for (int j = 0; j < data.cols(); ++j) centered(i, j) -= p.mean(0, j);

    auto recon_error = [&](const Tensor& basis_rows) {
      double err = 0.0;
      for (int i = 0; i < centered.rows(); ++i) {
        std::vector<double> coeff(static_cast<std::size_t>(basis_rows.rows()), 0.0);
        for (int b = 0; b < basis_rows.rows(); ++b)
          for (int j = 0; j < centered.cols(); ++j)
            coeff[static_cast<std::size_t>(b)] += centered(i, j) * basis_rows(b, j);
        for (int j = 0; j < centered.cols(); ++j) {
          double rec = 0.0;
          for (int b = 0; b < basis_rows.rows(); ++b)
            rec += coeff[static_cast<std::size_t>(b)] * basis_rows(b, j);
          const double diff = centered(i, j) - rec;
          err += diff * diff;
        }
      }
      return err;
    };

    const double pca_err = recon_error(p.components);
    for (int trial = 0; trial < 30; ++trial) {
      // Random orthonormal 2-frame via Gram-Schmidt.
      Tensor basis(n_comp, 6);
      for (std::size_t i = 0; i < basis.size(); ++i) basis[i] = rng.normal();
      for (int b = 0; b < n_comp; ++b) {
        for (int prev = 0; prev < b; ++prev) {
          double dot = 0.0;
          for (int j = 0; j < 6; ++j) dot += basis(b, j) * basis(prev, j);
          for (int j = 0; j < 6; ++j) basis(b, j) -= dot * basis(prev, j);
        }
        double norm = 0.0;
        for (int j = 0; j < 6; ++j) norm += basis(b, j) * basis(b, j);
        norm = std::sqrt(norm);
        for (int j = 0; j < 6; ++j) basis(b, j) /= norm;
      }
      CHECK(pca_err <= recon_error(basis) + 1e-9);
    }
  }

  TEST_CASE("pca preserves inner products within the component subspace") {
    Rng rng(4);
    Tensor data(40, 5);
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = rng.normal();
    const auto p = baseline::pca(data, 5);  // full rank: rotation only
    Tensor centered = data;
    for (int i = 0; i < data.rows(); ++i)
      for (int j = 0; j < data.cols(); ++j) centered(i, j) -= p.mean(0, j);
    for (int a = 0; a < 10; ++a) {
      double orig = 0.0, proj = 0.0;
      for (int j = 0; j < 5; ++j) orig += centered(a, j) * centered(a + 1, j);
      for (int j = 0; j < 5; ++j) proj += p.projected(a, j) * p.projected(a + 1, j);
      CHECK(orig == doctest::Approx(proj).epsilon(1e-10));
    }
  }

  TEST_CASE("pca rejects too many components") {
    Tensor data(3, 2);
    CHECK_THROWS(baseline::pca(data, 3));
  }

  TEST_CASE("kmeans: k=1 returns the mean") {
    Rng rng(5);
    Tensor data(50, 3);
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = rng.normal();
    const auto km = baseline::kmeans(data, 1, rng);
    for (int j = 0; j < 3; ++j) {
      double mean = 0.0;
      for (int i = 0; i < 50; ++i) mean += data(i, j);
      mean /= 50.0;
      CHECK(km.centroids(0, j) == doctest::Approx(mean).epsilon(1e-12));
    }
  }

  TEST_CASE("kmeans recovers well-separated blobs") {
    Rng rng(6);
    std::vector<int> truth;
    const Tensor data = gaussian_blobs(100, 3, 4, 20.0, 0.5, rng, &truth);
    const auto km = baseline::kmeans(data, 3, rng);
    CHECK(metrics::adjusted_rand_index(km.labels, truth) > 0.99);
  }

  TEST_CASE("kmeans labels are invariant to uniform input scaling") {
    Rng rng(7);
    std::vector<int> truth;
    const Tensor data = gaussian_blobs(50, 3, 3, 10.0, 1.0, rng, &truth);
    Tensor scaled = data;
    for (std::size_t i = 0; i < scaled.size(); ++i) scaled[i] *= 4.2;
    Rng rng_a(8), rng_b(8);
    const auto a = baseline::kmeans(data, 3, rng_a);
    const auto b = baseline::kmeans(scaled, 3, rng_b);
    CHECK(a.labels == b.labels);
  }

  TEST_CASE("kmeans requires at least k samples") {
    Tensor data(2, 2);
    Rng rng(9);
    CHECK_THROWS(baseline::kmeans(data, 3, rng));
  }

  TEST_CASE("nelson-aalen: all censored is zero hazard; hand value") {
    CHECK(baseline::nelson_aalen_cumulative_hazard({1, 2, 3}, {0, 0, 0}) == 0.0);
    // deaths at t=1 (3 at risk) and t=3 (1 at risk): H = 1/3 + 1/1.
    CHECK(baseline::nelson_aalen_cumulative_hazard({1, 2, 3}, {1, 0, 1}) ==
          doctest::Approx(1.0 / 3.0 + 1.0).epsilon(1e-12));
  }

  TEST_CASE("survival tree: a perfect binary feature is chosen at the root") {
    Rng rng(10);
    const int n = 200;
    Tensor features(n, 3);
    std::vector<double> times(static_cast<std::size_t>(n));
    std::vector<int> events(static_cast<std::size_t>(n), 1);
    for (int i = 0; i < n; ++i) {
      const int group = i % 2;
      features(i, 0) = group;           // the informative feature
      features(i, 1) = rng.normal();    // noise
      features(i, 2) = rng.uniform();   // noise
      times[static_cast<std::size_t>(i)] =
          rng.exponential(group == 0 ? 10.0 : 10000.0);
    }
    const auto tree = baseline::SurvivalTree::fit(features, times, events, 4);
    REQUIRE(!tree.nodes().empty());
    CHECK(tree.nodes()[0].feature == 0);
    CHECK(tree.nodes()[0].threshold == doctest::Approx(0.5));
  }

  TEST_CASE("survival tree: depth 0 gives a single leaf with the cohort hazard") {
    Tensor features(4, 1);
    std::vector<double> times = {1, 2, 3, 4};
    std::vector<int> events = {1, 1, 0, 1};
    const auto tree = baseline::SurvivalTree::fit(features, times, events, 0);
    REQUIRE(tree.nodes().size() == 1);
    CHECK(tree.nodes()[0].is_leaf());
    CHECK(tree.nodes()[0].risk ==
          doctest::Approx(baseline::nelson_aalen_cumulative_hazard(times, events)));
    CHECK(tree.predict_risk(features, 0) == tree.nodes()[0].risk);
  }

  TEST_CASE("survival tree routes every sample to exactly one finite leaf") {
    Rng rng(11);
    const int n = 300;
    Tensor features(n, 5);
    std::vector<double> times(static_cast<std::size_t>(n));
    std::vector<int> events(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < 5; ++j) features(i, j) = rng.normal();
      times[static_cast<std::size_t>(i)] = rng.exponential(10.0 + 50.0 * (features(i, 0) > 0));
      events[static_cast<std::size_t>(i)] = rng.uniform() < 0.3 ? 0 : 1;
    }
    const auto tree = baseline::SurvivalTree::fit(features, times, events, 4);
    CHECK(tree.depth() <= 4);
    int leaves = 0;
    for (const auto& node : tree.nodes()) leaves += node.is_leaf() ? 1 : 0;
    CHECK(leaves <= 16);
    for (int i = 0; i < n; ++i) {
      const double r = tree.predict_risk(features, i);
      CHECK(std::isfinite(r));
      CHECK(r >= 0.0);
    }
  }

  TEST_CASE("rsf_cluster: identical features collapse to a single cluster") {
    Tensor features(30, 4, 1.0);
    std::vector<double> times;
    std::vector<int> events;
    Rng rng(12);
    for (int i = 0; i < 30; ++i) {
      times.push_back(rng.exponential(10.0));
      events.push_back(1);
    }
    const auto labels = baseline::rsf_cluster(features, times, events, 3, rng);
    for (int l : labels) CHECK(l == labels[0]);
  }

  TEST_CASE("rsf_cluster is deterministic per seed") {
    Rng data_rng(13);
    const int n = 150;
    Tensor features(n, 6);
    std::vector<double> times;
    std::vector<int> events;
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < 6; ++j) features(i, j) = data_rng.normal();
      times.push_back(data_rng.exponential(10.0 + 100.0 * (features(i, 1) > 0)));
      events.push_back(data_rng.uniform() < 0.4 ? 0 : 1);
    }
    Rng a(14), b(14);
    CHECK(baseline::rsf_cluster(features, times, events, 3, a) ==
          baseline::rsf_cluster(features, times, events, 3, b));
  }
}
