#include "trajcluster/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace trajcluster::baseline {

// ---------------------------------------------------------------------------
// PCA

void symmetric_eigen(const Tensor& symmetric, std::vector<double>& eigenvalues,
                     Tensor& eigenvectors_rows) {
  const int n = symmetric.rows();
  if (symmetric.cols() != n) throw std::invalid_argument("symmetric_eigen: matrix not square");
  Tensor a = symmetric;
  Tensor v(n, n);
  for (int i = 0; i < n; ++i) v(i, i) = 1.0;

  double frob = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) frob += a[i] * a[i];
  const double tol = 1e-14 * std::sqrt(std::max(frob, 1e-300));

  // Cyclic Jacobi sweeps.
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (std::sqrt(2.0 * off) < tol) break;
    for (int p = 0; p < n; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (std::abs(apq) < 1e-300) continue;
        const double theta = 0.5 * (a(q, q) - a(p, p)) / apq;
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int i = 0; i < n; ++i) {
          const double aip = a(i, p), aiq = a(i, q);
          a(i, p) = c * aip - s * aiq;
          a(i, q) = s * aip + c * aiq;
        }
        for (int i = 0; i < n; ++i) {
          const double api = a(p, i), aqi = a(q, i);
          a(p, i) = c * api - s * aqi;
          a(q, i) = s * api + c * aqi;
        }
        for (int i = 0; i < n; ++i) {
          const double vip = v(i, p), viq = v(i, q);
          v(i, p) = c * vip - s * viq;
          v(i, q) = s * vip + c * viq;
        }
      }
    }
  }

  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int x, int y) { return a(x, x) > a(y, y); });

  eigenvalues.resize(static_cast<std::size_t>(n));
  eigenvectors_rows = Tensor(n, n);
  for (int r = 0; r < n; ++r) {
    eigenvalues[static_cast<std::size_t>(r)] = a(order[static_cast<std::size_t>(r)],
                                                 order[static_cast<std::size_t>(r)]);
    for (int i = 0; i < n; ++i)
      eigenvectors_rows(r, i) = v(i, order[static_cast<std::size_t>(r)]);
  }
}

PcaResult pca(const Tensor& data, int n_components) {
  const int n = data.rows(), d = data.cols();
  if (n_components <= 0 || n_components > std::min(n, d))
    throw std::invalid_argument("pca: n_components " + std::to_string(n_components) +
                                " out of range for " + data.shape_str());

  PcaResult result;
  result.mean = Tensor(1, d);
  for (int j = 0; j < d; ++j) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += data(i, j);
    result.mean(0, j) = s / n;
  }
  Tensor centered = data;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) centered(i, j) -= result.mean(0, j);

  Tensor cov;
  matmul_tn(cov, centered, centered, false);
  const double denom = n > 1 ? static_cast<double>(n - 1) : 1.0;
  for (std::size_t i = 0; i < cov.size(); ++i) cov[i] /= denom;

  std::vector<double> eigenvalues;
  Tensor vectors;
  symmetric_eigen(cov, eigenvalues, vectors);

  result.components = Tensor(n_components, d);
  result.explained_variance.resize(static_cast<std::size_t>(n_components));
  for (int r = 0; r < n_components; ++r) {
    result.explained_variance[static_cast<std::size_t>(r)] =
        eigenvalues[static_cast<std::size_t>(r)];
    for (int j = 0; j < d; ++j) result.components(r, j) = vectors(r, j);
  }
  matmul_nt(result.projected, centered, result.components, false);
  return result;
}

// ---------------------------------------------------------------------------
// k-means

namespace {

double sq_distance(const double* a, const double* b, int d) {
  double s = 0.0;
  for (int j = 0; j < d; ++j) {
    const double diff = a[j] - b[j];
    s += diff * diff;
  }
  return s;
}

KMeansResult kmeans_single(const Tensor& data, int k, Rng& rng, int max_iters) {
  const int n = data.rows(), d = data.cols();

  // k-means++ seeding.
  Tensor centroids(k, d);
  std::vector<double> dist2(static_cast<std::size_t>(n),
                            std::numeric_limits<double>::infinity());
  int first = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(n)));
  for (int j = 0; j < d; ++j) centroids(0, j) = data(first, j);
  for (int c = 1; c < k; ++c) {
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      const double d2 = sq_distance(data.data() + static_cast<std::size_t>(i) * d,
                                    centroids.data() + static_cast<std::size_t>(c - 1) * d, d);
      dist2[static_cast<std::size_t>(i)] = std::min(dist2[static_cast<std::size_t>(i)], d2);
      total += dist2[static_cast<std::size_t>(i)];
    }
    int pick;
    if (total > 0.0) {
      const double target = rng.uniform() * total;
      double acc = 0.0;
      pick = n - 1;
      for (int i = 0; i < n; ++i) {
        acc += dist2[static_cast<std::size_t>(i)];
        if (acc >= target) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(n)));
    }
    for (int j = 0; j < d; ++j) centroids(c, j) = data(pick, j);
  }

  std::vector<int> labels(static_cast<std::size_t>(n), -1);
  std::vector<int> counts(static_cast<std::size_t>(k), 0);
  for (int iter = 0; iter < max_iters; ++iter) {
    bool changed = false;
    for (int i = 0; i < n; ++i) {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        const double d2 = sq_distance(data.data() + static_cast<std::size_t>(i) * d,
                                      centroids.data() + static_cast<std::size_t>(c) * d, d);
        if (d2 < best_d) {
          best_d = d2;
          best = c;
        }
      }
      if (labels[static_cast<std::size_t>(i)] != best) {
        labels[static_cast<std::size_t>(i)] = best;
        changed = true;
      }
    }
    if (!changed && iter > 0) break;

    std::fill(counts.begin(), counts.end(), 0);
    centroids.fill(0.0);
    for (int i = 0; i < n; ++i) {
      const int c = labels[static_cast<std::size_t>(i)];
      ++counts[static_cast<std::size_t>(c)];
      for (int j = 0; j < d; ++j) centroids(c, j) += data(i, j);
    }
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] == 0) {
        // Re-seed an empty cluster at the point farthest from its centroid.
        int far_i = -1;
        double far_d = 0.0;
        for (int i = 0; i < n; ++i) {
          const int ci = labels[static_cast<std::size_t>(i)];
          const double d2 =
              sq_distance(data.data() + static_cast<std::size_t>(i) * d,
                          centroids.data() + static_cast<std::size_t>(ci) * d, d) /
              std::max(1, counts[static_cast<std::size_t>(ci)]);
          if (d2 > far_d) {
            far_d = d2;
            far_i = i;
          }
        }
        if (far_i >= 0 && far_d > 0.0) {
          for (int j = 0; j < d; ++j) centroids(c, j) = data(far_i, j);
          counts[static_cast<std::size_t>(c)] = 1;  // keep it from collapsing again this pass
        }
        continue;
      }
      for (int j = 0; j < d; ++j) centroids(c, j) /= counts[static_cast<std::size_t>(c)];
    }
  }

  double inertia = 0.0;
  for (int i = 0; i < n; ++i)
    inertia += sq_distance(data.data() + static_cast<std::size_t>(i) * d,
                           centroids.data() +
                               static_cast<std::size_t>(labels[static_cast<std::size_t>(i)]) * d,
                           d);
  return {std::move(labels), std::move(centroids), inertia};
}

}  // namespace

KMeansResult kmeans(const Tensor& data, int k, Rng& rng, int restarts, int max_iters) {
  if (k < 1) throw std::invalid_argument("kmeans: k must be >= 1");
  if (data.rows() < k)
    throw std::invalid_argument("kmeans: need at least k=" + std::to_string(k) + " samples, got " +
                                std::to_string(data.rows()));
  KMeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (int r = 0; r < std::max(1, restarts); ++r) {
    KMeansResult run = kmeans_single(data, k, rng, max_iters);
    if (run.inertia < best.inertia) best = std::move(run);
  }
  return best;
}

// ---------------------------------------------------------------------------
// Survival tree

namespace {

struct NodeData {
  std::vector<int> samples;  // indices sorted by ascending time
  int depth = 0;
  int node_index = 0;
};

/// Nelson-Aalen cumulative hazard at the node's last observed time.
double nelson_aalen_risk(const std::vector<int>& sorted_samples, const std::vector<double>& times,
                         const std::vector<int>& events) {
  double hazard = 0.0;
  const std::size_t m = sorted_samples.size();
  std::size_t pos = 0;
  std::size_t at_risk = m;
  while (pos < m) {
    const double t = times[static_cast<std::size_t>(sorted_samples[pos])];
    int deaths = 0;
    std::size_t removed = 0;
    while (pos < m && times[static_cast<std::size_t>(sorted_samples[pos])] == t) {
      deaths += events[static_cast<std::size_t>(sorted_samples[pos])] ? 1 : 0;
      ++removed;
      ++pos;
    }
    if (deaths > 0) hazard += static_cast<double>(deaths) / static_cast<double>(at_risk);
    at_risk -= removed;
  }
  return hazard;
}

struct SplitChoice {
  int feature = -1;
  double threshold = 0.0;
  double statistic = -1.0;
};

/// Evaluate all candidate thresholds of one feature in a single
/// time-ordered pass by bucketing samples into threshold bins.
void scan_feature(const Tensor& features, const std::vector<double>& times,
                  const std::vector<int>& events, const std::vector<int>& sorted_samples,
                  int feature, int max_thresholds, SplitChoice& best) {
  const std::size_t m = sorted_samples.size();
  std::vector<double> values(m);
  for (std::size_t i = 0; i < m; ++i) values[i] = features(sorted_samples[i], feature);

  std::vector<double> uniq = values;
  std::sort(uniq.begin(), uniq.end());
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
  if (uniq.size() < 2) return;

  std::vector<double> thresholds;
  thresholds.reserve(uniq.size() - 1);
  for (std::size_t i = 0; i + 1 < uniq.size(); ++i)
    thresholds.push_back(0.5 * (uniq[i] + uniq[i + 1]));
  if (static_cast<int>(thresholds.size()) > max_thresholds) {
    std::vector<double> picked;
    picked.reserve(static_cast<std::size_t>(max_thresholds));
    const std::size_t count = thresholds.size();
    for (int q = 0; q < max_thresholds; ++q) {
      std::size_t idx = static_cast<std::size_t>((static_cast<double>(q) + 1.0) /
                                                 (max_thresholds + 1.0) * count);
      idx = std::min(idx, count - 1);
      picked.push_back(thresholds[idx]);
    }
    picked.erase(std::unique(picked.begin(), picked.end()), picked.end());
    thresholds = std::move(picked);
  }
  const std::size_t n_thr = thresholds.size();
  const std::size_t n_bins = n_thr + 1;

  // bin b: samples with thresholds[b-1] < x <= thresholds[b]; left of
  // threshold q means bin <= q.
  std::vector<int> bins(m);
  for (std::size_t i = 0; i < m; ++i)
    bins[i] = static_cast<int>(
        std::lower_bound(thresholds.begin(), thresholds.end(), values[i]) - thresholds.begin());

  std::vector<double> at_risk_bin(n_bins, 0.0);
  for (std::size_t i = 0; i < m; ++i) at_risk_bin[static_cast<std::size_t>(bins[i])] += 1.0;

  std::vector<double> o_left(n_thr, 0.0), e_left(n_thr, 0.0), v_left(n_thr, 0.0);
  std::vector<double> deaths_bin(n_bins, 0.0), removed_bin(n_bins, 0.0);
  double total_events = 0.0;
  std::vector<double> events_left_total(n_thr, 0.0);

  std::size_t pos = 0;
  double n_at_risk = static_cast<double>(m);
  while (pos < m) {
    const double t = times[static_cast<std::size_t>(sorted_samples[pos])];
    std::fill(deaths_bin.begin(), deaths_bin.end(), 0.0);
    std::fill(removed_bin.begin(), removed_bin.end(), 0.0);
    double d_total = 0.0;
    while (pos < m && times[static_cast<std::size_t>(sorted_samples[pos])] == t) {
      const std::size_t b = static_cast<std::size_t>(bins[pos]);
      if (events[static_cast<std::size_t>(sorted_samples[pos])]) {
        deaths_bin[b] += 1.0;
        d_total += 1.0;
      }
      removed_bin[b] += 1.0;
      ++pos;
    }
    if (d_total > 0.0 && n_at_risk > 1.0) {
      total_events += d_total;
      const double hyper = d_total * (n_at_risk - d_total) / (n_at_risk - 1.0);
      double risk_prefix = 0.0, death_prefix = 0.0;
      for (std::size_t q = 0; q < n_thr; ++q) {
        risk_prefix += at_risk_bin[q];
        death_prefix += deaths_bin[q];
        const double p = risk_prefix / n_at_risk;
        o_left[q] += death_prefix;
        e_left[q] += d_total * p;
        v_left[q] += hyper * p * (1.0 - p);
        events_left_total[q] += death_prefix;
      }
    } else if (d_total > 0.0) {
      total_events += d_total;
    }
    double removed_total = 0.0;
    for (std::size_t b = 0; b < n_bins; ++b) {
      at_risk_bin[b] -= removed_bin[b];
      removed_total += removed_bin[b];
    }
    n_at_risk -= removed_total;
  }

  for (std::size_t q = 0; q < n_thr; ++q) {
    const double left_events = events_left_total[q];
    const double right_events = total_events - left_events;
    if (left_events < 1.0 || right_events < 1.0 || v_left[q] <= 0.0) continue;
    const double diff = o_left[q] - e_left[q];
    const double stat = diff * diff / v_left[q];
    if (stat > best.statistic) {
      best.statistic = stat;
      best.feature = feature;
      best.threshold = thresholds[q];
    }
  }
}

}  // namespace

double nelson_aalen_cumulative_hazard(const std::vector<double>& times,
                                      const std::vector<int>& events) {
  if (times.size() != events.size())
    throw std::invalid_argument("nelson_aalen: times/events length mismatch");
  std::vector<int> order(static_cast<int>(times.size()));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return times[static_cast<std::size_t>(a)] <
                                       times[static_cast<std::size_t>(b)]; });
  return nelson_aalen_risk(order, times, events);
}

SurvivalTree SurvivalTree::fit(const Tensor& features, const std::vector<double>& times,
                               const std::vector<int>& events, int max_depth, int max_thresholds,
                               const std::vector<int>* feature_subset) {
  const int n = features.rows();
  if (static_cast<std::size_t>(n) != times.size() || times.size() != events.size())
    throw std::invalid_argument("SurvivalTree::fit: row count mismatch");
  if (n < 2) throw std::invalid_argument("SurvivalTree::fit: need >= 2 samples");
  int total_events = 0;
  for (int e : events) total_events += e ? 1 : 0;
  if (total_events < 1) throw std::invalid_argument("SurvivalTree::fit: need >= 1 event");

  std::vector<int> all_features;
  if (!feature_subset) {
    all_features.resize(static_cast<std::size_t>(features.cols()));
    std::iota(all_features.begin(), all_features.end(), 0);
    feature_subset = &all_features;
  }

  SurvivalTree tree;
  std::vector<int> root_samples(static_cast<std::size_t>(n));
  std::iota(root_samples.begin(), root_samples.end(), 0);
  std::sort(root_samples.begin(), root_samples.end(),
            [&](int a, int b) { return times[static_cast<std::size_t>(a)] <
                                       times[static_cast<std::size_t>(b)]; });

  tree.nodes_.push_back(Node{});
  std::vector<NodeData> stack;
  stack.push_back({std::move(root_samples), 0, 0});

  bool root_split_failed = false;
  while (!stack.empty()) {
    NodeData nd = std::move(stack.back());
    stack.pop_back();
    tree.depth_ = std::max(tree.depth_, nd.depth);

    SplitChoice best;
    if (nd.depth < max_depth) {
      for (int f : *feature_subset)
        scan_feature(features, times, events, nd.samples, f, max_thresholds, best);
    }

    if (best.feature < 0) {
      tree.nodes_[static_cast<std::size_t>(nd.node_index)].risk =
          nelson_aalen_risk(nd.samples, times, events);
      if (nd.node_index == 0) root_split_failed = max_depth > 0;
      continue;
    }

    std::vector<int> left, right;
    for (int s : nd.samples) {
      if (features(s, best.feature) <= best.threshold) left.push_back(s);
      else right.push_back(s);
    }

    const int left_index = static_cast<int>(tree.nodes_.size());
    tree.nodes_.push_back(Node{});
    const int right_index = static_cast<int>(tree.nodes_.size());
    tree.nodes_.push_back(Node{});
    Node& node = tree.nodes_[static_cast<std::size_t>(nd.node_index)];
    node.feature = best.feature;
    node.threshold = best.threshold;
    node.left = left_index;
    node.right = right_index;
    stack.push_back({std::move(right), nd.depth + 1, right_index});
    stack.push_back({std::move(left), nd.depth + 1, left_index});
  }

  if (root_split_failed)
    std::cerr << "warning: survival tree found no valid root split; returning a single leaf\n";
  return tree;
}

double SurvivalTree::predict_risk(const Tensor& features, int row) const {
  int idx = 0;
  for (;;) {
    const Node& node = nodes_[static_cast<std::size_t>(idx)];
    if (node.is_leaf()) return node.risk;
    idx = features(row, node.feature) <= node.threshold ? node.left : node.right;
  }
}

std::vector<int> rsf_cluster(const Tensor& features, const std::vector<double>& times,
                             const std::vector<int>& events, int k, Rng& rng, int n_trees,
                             double feature_fraction, int max_depth) {
  const int n = features.rows();
  const int d = features.cols();
  const int subset_size = std::max(1, static_cast<int>(std::llround(feature_fraction * d)));

  Tensor risks(n, n_trees);
  for (int t = 0; t < n_trees; ++t) {
    std::vector<int> perm(static_cast<std::size_t>(d));
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    std::vector<int> subset(perm.begin(), perm.begin() + subset_size);
    std::sort(subset.begin(), subset.end());
    SurvivalTree tree = SurvivalTree::fit(features, times, events, max_depth, 32, &subset);
    for (int i = 0; i < n; ++i) risks(i, t) = tree.predict_risk(features, i);
  }
  return kmeans(risks, k, rng).labels;
}

}  // namespace trajcluster::baseline
