#pragma once

#include <string>
#include <vector>

namespace trajcluster::metrics {

/// Kaplan-Meier product-limit curve. Steps occur at distinct event times
/// only; censored observations reduce the at-risk counts without a step.
struct StepCurve {
  std::vector<double> times;     // ascending distinct event times
  std::vector<double> survival;  // non-increasing, starts from the first event
  std::vector<int> at_risk;      // n_i at each event time
  std::vector<int> events;       // d_i at each event time

  /// Survival probability at time t (right-continuous step function).
  double at(double t) const;
};

/// Pair-count contingency table between two labelings.
struct ContingencyTable {
  int k_a = 0;
  int k_b = 0;
  std::vector<long long> counts;  // k_a x k_b, row-major
  std::vector<long long> row_marginals;
  std::vector<long long> col_marginals;
  long long total = 0;

  long long at(int i, int j) const { return counts[static_cast<std::size_t>(i) * k_b + j]; }
};

ContingencyTable contingency_table(const std::vector<int>& labels_a,
                                   const std::vector<int>& labels_b);

/// Chance-adjusted Rand index in [-1, 1]; 1 iff the partitions agree up to
/// relabeling. Requires length >= 2.
double adjusted_rand_index(const std::vector<int>& labels_a, const std::vector<int>& labels_b);

/// I(A;B) / sqrt(H(A) H(B)). A partition with zero entropy yields 0 (warned).
double normalized_mutual_information(const std::vector<int>& labels_a,
                                     const std::vector<int>& labels_b);

StepCurve kaplan_meier(const std::vector<double>& times, const std::vector<int>& events);

/// 1 - KM, pointwise on the curve's event times.
std::vector<double> crude_incidence(const StepCurve& curve);

struct LogrankResult {
  double statistic = 0.0;
  int df = 0;
  double p_value = 1.0;
};

/// k-sample log-rank test: observed minus expected event counts with
/// hypergeometric variance, summed over distinct event times. Ties follow
/// the deaths-before-censorings convention.
LogrankResult logrank_test(const std::vector<std::pair<std::vector<double>, std::vector<int>>>& groups);

/// Convenience overload: one cohort partitioned by labels.
LogrankResult logrank_test(const std::vector<double>& times, const std::vector<int>& events,
                           const std::vector<int>& labels);

/// Row-normalized overlap fractions: entry (i,j) = |a=i and b=j| / |a=i|.
std::vector<std::vector<double>> overlap_table(const std::vector<int>& labels_a,
                                               const std::vector<int>& labels_b);

/// Upper tail of the chi-squared distribution via the regularized
/// incomplete gamma function (implemented locally).
double chi_squared_sf(double x, double df);

/// Regularized upper incomplete gamma Q(a, x).
double gamma_q(double a, double x);

}  // namespace trajcluster::metrics
