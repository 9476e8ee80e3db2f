#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "trajcluster/data.hpp"

namespace trajcluster::ehr {

enum class Channel { primary_dx, secondary_dx, procedure, medication, lab };

Channel channel_from_string(const std::string& s);
std::string channel_to_string(Channel c);

/// One longitudinal record. Lab events carry a value; coded events do not.
struct RawEvent {
  std::string patient_id;
  int date = 0;  // days since 1970-01-01
  Channel channel = Channel::lab;
  std::string code;
  double value = 0.0;
  bool has_value = false;
};

/// Strict ISO-8601 calendar date ("YYYY-MM-DD") to days since 1970-01-01.
int parse_date_iso(const std::string& s);
std::string format_date_iso(int days);

/// Rank to [0, 1] with average-rank tie handling; order preserved.
/// A single-element list maps to 0.5.
std::vector<double> rank_normalize(const std::vector<double>& values);

/// Frozen cohort-level rank normalization map. Unseen values interpolate
/// linearly between neighbours and clamp to [0, 1].
struct RankMap {
  std::vector<double> values;  // sorted unique
  std::vector<double> ranks;   // matching normalized average ranks

  static RankMap fit(const std::vector<double>& values);
  double apply(double v) const;
};

struct DateSpan {
  int start = 0;  // inclusive
  int end = 0;    // inclusive
};

/// Frozen feature layout: per-channel vocabularies (lexicographic, filtered
/// by patient prevalence) and per-lab rank maps for values and per-window
/// occurrence counts. The binary block orders channels
/// [primary_dx, secondary_dx, procedure, medication]; the continuous block
/// is labs x (min, max, mean, mad, last, count).
struct FeatureSpec {
  int window_days = 90;
  double min_prevalence = 0.01;
  std::vector<std::string> vocab_primary_dx;
  std::vector<std::string> vocab_secondary_dx;
  std::vector<std::string> vocab_procedure;
  std::vector<std::string> vocab_medication;
  std::vector<std::string> vocab_lab;
  std::map<std::string, RankMap> lab_value_maps;
  std::map<std::string, RankMap> lab_count_maps;

  static const std::vector<std::string>& lab_statistics();  // min,max,mean,mad,last,count

  int n_binary() const;
  int n_continuous() const;
  FeatureLayout layout() const;
  const std::vector<std::string>& vocab(Channel c) const;

  /// JSON manifest mapping column index -> feature name.
  std::string layout_manifest_json() const;
};

FeatureSpec build_feature_spec(const std::vector<RawEvent>& events, double min_prevalence = 0.01,
                               int window_days = 90);

/// Encode one patient's events into fixed-width windows over `span`
/// (inclusive; windows of spec.window_days days). Coded channels are
/// multi-hot; each lab contributes its six statistics computed on
/// rank-normalized values. Events outside the span raise an error naming
/// the patient and timestamp.
TrajectoryTensor encode_windows(const std::vector<RawEvent>& patient_events,
                                const FeatureSpec& spec, DateSpan span);

/// Shift every trajectory so its index window lands at one shared position
/// (the maximum), padding with canonical empty windows on both sides until
/// all patients have the same window count.
std::vector<TrajectoryTensor> align_at_index(const std::vector<TrajectoryTensor>& trajectories,
                                             const std::vector<int>& index_windows,
                                             const FeatureLayout& layout);

/// Events CSV: header patient_id,date,channel,code,value.
std::vector<RawEvent> read_events_csv(const std::string& path);

struct EncodedCohort {
  Cohort cohort;
  std::vector<std::string> patient_ids;
  FeatureSpec spec;
};

/// Whole-cohort pipeline: build the spec, encode every patient over their
/// own event span, then either align at the first event matching
/// `index_code` (channel:code) or right-pad to a common length.
EncodedCohort encode_cohort(const std::vector<RawEvent>& events, double min_prevalence,
                            int window_days,
                            const std::optional<std::pair<Channel, std::string>>& index_code);

/// tensors.csv + masks.csv + layout.json in `out_dir`.
void write_encoded_cohort(const EncodedCohort& encoded, const std::string& out_dir);

}  // namespace trajcluster::ehr
