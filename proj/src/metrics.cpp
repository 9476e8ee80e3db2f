#include "trajcluster/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace trajcluster::metrics {

namespace {

int label_count(const std::vector<int>& labels) {
  int k = 0;
  for (int l : labels) {
    if (l < 0) throw std::invalid_argument("labels must be non-negative");
    k = std::max(k, l + 1);
  }
  return k;
}

double comb2(long long x) { return x < 2 ? 0.0 : 0.5 * static_cast<double>(x) * (x - 1); }

}  // namespace

double StepCurve::at(double t) const {
  double s = 1.0;
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (times[i] <= t) s = survival[i];
    else break;
  }
  return s;
}

ContingencyTable contingency_table(const std::vector<int>& labels_a,
                                   const std::vector<int>& labels_b) {
  if (labels_a.size() != labels_b.size())
    throw std::invalid_argument("contingency_table: length mismatch (" +
                                std::to_string(labels_a.size()) + " vs " +
                                std::to_string(labels_b.size()) + ")");
  ContingencyTable t;
  t.k_a = label_count(labels_a);
  t.k_b = label_count(labels_b);
  t.counts.assign(static_cast<std::size_t>(t.k_a) * t.k_b, 0);
  t.row_marginals.assign(t.k_a, 0);
  t.col_marginals.assign(t.k_b, 0);
  t.total = static_cast<long long>(labels_a.size());
  for (std::size_t i = 0; i < labels_a.size(); ++i) {
    t.counts[static_cast<std::size_t>(labels_a[i]) * t.k_b + labels_b[i]]++;
    t.row_marginals[labels_a[i]]++;
    t.col_marginals[labels_b[i]]++;
  }
  return t;
}

double adjusted_rand_index(const std::vector<int>& labels_a, const std::vector<int>& labels_b) {
  if (labels_a.size() < 2) throw std::invalid_argument("adjusted_rand_index: need >= 2 samples");
  const ContingencyTable t = contingency_table(labels_a, labels_b);

  double sum_cells = 0.0;
  for (long long c : t.counts) sum_cells += comb2(c);
  double sum_rows = 0.0;
  for (long long c : t.row_marginals) sum_rows += comb2(c);
  double sum_cols = 0.0;
  for (long long c : t.col_marginals) sum_cols += comb2(c);

  const double n2 = comb2(t.total);
  const double expected = sum_rows * sum_cols / n2;
  const double max_index = 0.5 * (sum_rows + sum_cols);
  const double denom = max_index - expected;
  // Both partitions trivial (all-one-cluster or all-singletons): agree => 1.
  if (denom == 0.0) return sum_cells == max_index ? 1.0 : 0.0;
  return (sum_cells - expected) / denom;
}

double normalized_mutual_information(const std::vector<int>& labels_a,
                                     const std::vector<int>& labels_b) {
  const ContingencyTable t = contingency_table(labels_a, labels_b);
  const double n = static_cast<double>(t.total);
  if (t.total == 0) throw std::invalid_argument("normalized_mutual_information: empty input");

  double h_a = 0.0;
  for (long long c : t.row_marginals)
    if (c > 0) h_a -= (c / n) * std::log(c / n);
  double h_b = 0.0;
  for (long long c : t.col_marginals)
    if (c > 0) h_b -= (c / n) * std::log(c / n);
  if (h_a == 0.0 || h_b == 0.0) {
    std::cerr << "warning: NMI of a single-cluster partition defined as 0\n";
    return 0.0;
  }

  double mi = 0.0;
  for (int i = 0; i < t.k_a; ++i)
    for (int j = 0; j < t.k_b; ++j) {
      const long long c = t.at(i, j);
      if (c == 0) continue;
      mi += (c / n) * std::log(c * n / (static_cast<double>(t.row_marginals[i]) *
                                        static_cast<double>(t.col_marginals[j])));
    }
  const double nmi = mi / std::sqrt(h_a * h_b);
  return std::min(1.0, std::max(0.0, nmi));
}

StepCurve kaplan_meier(const std::vector<double>& times, const std::vector<int>& events) {
  if (times.empty()) throw std::invalid_argument("kaplan_meier: empty input");
  if (times.size() != events.size())
    throw std::invalid_argument("kaplan_meier: times/events length mismatch");
  for (double t : times)
    if (!(t > 0.0)) throw std::invalid_argument("kaplan_meier: times must be positive");

  std::vector<std::size_t> order(times.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return times[a] < times[b]; });

  StepCurve curve;
  double survival = 1.0;
  int at_risk = static_cast<int>(times.size());
  std::size_t pos = 0;
  while (pos < order.size()) {
    const double t = times[order[pos]];
    int deaths = 0, removed = 0;
    while (pos < order.size() && times[order[pos]] == t) {
      deaths += events[order[pos]] ? 1 : 0;
      ++removed;
      ++pos;
    }
    if (deaths > 0) {
      survival *= 1.0 - static_cast<double>(deaths) / at_risk;
      curve.times.push_back(t);
      curve.survival.push_back(survival);
      curve.at_risk.push_back(at_risk);
      curve.events.push_back(deaths);
    }
    at_risk -= removed;
  }
  return curve;
}

std::vector<double> crude_incidence(const StepCurve& curve) {
  std::vector<double> out(curve.survival.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 - curve.survival[i];
  return out;
}

LogrankResult logrank_test(
    const std::vector<std::pair<std::vector<double>, std::vector<int>>>& groups) {
  const std::size_t k = groups.size();
  if (k < 2) throw std::invalid_argument("logrank_test: need >= 2 groups");
  for (std::size_t j = 0; j < k; ++j) {
    if (groups[j].first.empty())
      throw std::invalid_argument("logrank_test: group " + std::to_string(j) + " is empty");
    if (groups[j].first.size() != groups[j].second.size())
      throw std::invalid_argument("logrank_test: times/events mismatch in group " +
                                  std::to_string(j));
  }

  struct Obs {
    double time;
    int event;
    int group;
  };
  std::vector<Obs> obs;
  for (std::size_t j = 0; j < k; ++j)
    for (std::size_t i = 0; i < groups[j].first.size(); ++i)
      obs.push_back({groups[j].first[i], groups[j].second[i], static_cast<int>(j)});
  std::sort(obs.begin(), obs.end(), [](const Obs& a, const Obs& b) { return a.time < b.time; });

  bool any_event = false;
  for (const Obs& o : obs) any_event = any_event || (o.event != 0);
  if (!any_event) throw std::invalid_argument("logrank_test: no events in any group");

  std::vector<double> at_risk(k, 0.0);
  for (const Obs& o : obs) at_risk[static_cast<std::size_t>(o.group)] += 1.0;

  std::vector<double> observed(k, 0.0), expected(k, 0.0);
  std::vector<double> var(k * k, 0.0);  // k x k covariance of (O - E)

  std::size_t pos = 0;
  const std::size_t n_total = obs.size();
  while (pos < n_total) {
    const double t = obs[pos].time;
    std::vector<double> deaths(k, 0.0), removed(k, 0.0);
    double d_total = 0.0;
    while (pos < n_total && obs[pos].time == t) {
      const std::size_t grp = static_cast<std::size_t>(obs[pos].group);
      if (obs[pos].event) {
        deaths[grp] += 1.0;
        d_total += 1.0;
      }
      removed[grp] += 1.0;
      ++pos;
    }
    double n_at_risk = 0.0;
    for (double v : at_risk) n_at_risk += v;
    if (d_total > 0.0 && n_at_risk > 1.0) {
      const double hyper = d_total * (n_at_risk - d_total) / (n_at_risk - 1.0);
      for (std::size_t j = 0; j < k; ++j) {
        const double pj = at_risk[j] / n_at_risk;
        observed[j] += deaths[j];
        expected[j] += d_total * pj;
        for (std::size_t l = 0; l < k; ++l) {
          const double pl = at_risk[l] / n_at_risk;
          var[j * k + l] += hyper * ((j == l ? pj : 0.0) - pj * pl);
        }
      }
    }
    for (std::size_t j = 0; j < k; ++j) at_risk[j] -= removed[j];
  }

  // Solve V z = (O - E) on the first k-1 coordinates (the full matrix is
  // singular by construction); near-zero pivots are skipped.
  const std::size_t m = k - 1;
  std::vector<double> a(m * m), rhs(m), diff(m);
  for (std::size_t i = 0; i < m; ++i) {
    diff[i] = observed[i] - expected[i];
    rhs[i] = diff[i];
    for (std::size_t j = 0; j < m; ++j) a[i * m + j] = var[i * k + j];
  }
  std::vector<std::size_t> perm(m);
  std::iota(perm.begin(), perm.end(), 0);
  double max_diag = 0.0;
  for (std::size_t i = 0; i < m; ++i) max_diag = std::max(max_diag, std::abs(a[i * m + i]));
  const double pivot_tol = std::max(1e-12, 1e-12 * max_diag);
  for (std::size_t col = 0; col < m; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < m; ++r)
      if (std::abs(a[r * m + col]) > std::abs(a[piv * m + col])) piv = r;
    if (std::abs(a[piv * m + col]) < pivot_tol) {
      for (std::size_t r = col; r < m; ++r) a[r * m + col] = 0.0;
      rhs[col] = 0.0;  // degenerate dimension contributes nothing
      if (std::abs(a[col * m + col]) == 0.0) a[col * m + col] = 1.0;
      continue;
    }
    if (piv != col) {
      for (std::size_t j = 0; j < m; ++j) std::swap(a[col * m + j], a[piv * m + j]);
      std::swap(rhs[col], rhs[piv]);
      std::swap(diff[col], diff[piv]);
    }
    for (std::size_t r = col + 1; r < m; ++r) {
      const double f = a[r * m + col] / a[col * m + col];
      if (f == 0.0) continue;
      for (std::size_t j = col; j < m; ++j) a[r * m + j] -= f * a[col * m + j];
      rhs[r] -= f * rhs[col];
    }
  }
  std::vector<double> z(m, 0.0);
  for (std::size_t i = m; i > 0; --i) {
    const std::size_t r = i - 1;
    double s = rhs[r];
    for (std::size_t j = r + 1; j < m; ++j) s -= a[r * m + j] * z[j];
    z[r] = s / a[r * m + r];
  }

  LogrankResult result;
  for (std::size_t i = 0; i < m; ++i) result.statistic += diff[i] * z[i];
  result.statistic = std::max(0.0, result.statistic);
  result.df = static_cast<int>(m);
  result.p_value = chi_squared_sf(result.statistic, static_cast<double>(result.df));
  return result;
}

LogrankResult logrank_test(const std::vector<double>& times, const std::vector<int>& events,
                           const std::vector<int>& labels) {
  if (times.size() != labels.size() || times.size() != events.size())
    throw std::invalid_argument("logrank_test: length mismatch");
  const int k = label_count(labels);
  std::vector<std::pair<std::vector<double>, std::vector<int>>> groups(
      static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < times.size(); ++i) {
    groups[static_cast<std::size_t>(labels[i])].first.push_back(times[i]);
    groups[static_cast<std::size_t>(labels[i])].second.push_back(events[i]);
  }
  // Unused label values contribute no group.
  groups.erase(std::remove_if(groups.begin(), groups.end(),
                              [](const auto& g) { return g.first.empty(); }),
               groups.end());
  return logrank_test(groups);
}

std::vector<std::vector<double>> overlap_table(const std::vector<int>& labels_a,
                                               const std::vector<int>& labels_b) {
  const ContingencyTable t = contingency_table(labels_a, labels_b);
  std::vector<std::vector<double>> out(static_cast<std::size_t>(t.k_a),
                                       std::vector<double>(static_cast<std::size_t>(t.k_b), 0.0));
  for (int i = 0; i < t.k_a; ++i) {
    if (t.row_marginals[i] == 0) {
      std::cerr << "warning: overlap_table source cluster " << i << " is empty\n";
      continue;
    }
    for (int j = 0; j < t.k_b; ++j)
      out[i][j] = static_cast<double>(t.at(i, j)) / static_cast<double>(t.row_marginals[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Regularized incomplete gamma (series + continued fraction)

namespace {

double gamma_p_series(double a, double x) {
  double term = 1.0 / a;
  double sum = term;
  double ap = a;
  for (int i = 0; i < 1000; ++i) {
    ap += 1.0;
    term *= x / ap;
    sum += term;
    if (std::abs(term) < std::abs(sum) * 1e-16) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

double gamma_q_contfrac(double a, double x) {
  const double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= 1000; ++i) {
    const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < 1e-16) break;
  }
  return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

}  // namespace

double gamma_q(double a, double x) {
  if (a <= 0.0) throw std::invalid_argument("gamma_q: a must be positive");
  if (x < 0.0) throw std::invalid_argument("gamma_q: x must be non-negative");
  if (x == 0.0) return 1.0;
  if (x < a + 1.0) return 1.0 - gamma_p_series(a, x);
  return gamma_q_contfrac(a, x);
}

double chi_squared_sf(double x, double df) {
  if (df <= 0.0) throw std::invalid_argument("chi_squared_sf: df must be positive");
  if (x <= 0.0) return 1.0;
  return gamma_q(0.5 * df, 0.5 * x);
}

}  // namespace trajcluster::metrics
