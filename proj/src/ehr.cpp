#include "trajcluster/ehr.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <json.hpp>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include "trajcluster/io.hpp"

namespace trajcluster::ehr {

Channel channel_from_string(const std::string& s) {
  if (s == "primary_dx") return Channel::primary_dx;
  if (s == "secondary_dx") return Channel::secondary_dx;
  if (s == "procedure") return Channel::procedure;
  if (s == "medication") return Channel::medication;
  if (s == "lab") return Channel::lab;
  throw std::invalid_argument("unknown channel: " + s);
}

std::string channel_to_string(Channel c) {
  switch (c) {
    case Channel::primary_dx: return "primary_dx";
    case Channel::secondary_dx: return "secondary_dx";
    case Channel::procedure: return "procedure";
    case Channel::medication: return "medication";
    case Channel::lab: return "lab";
  }
  throw std::logic_error("unknown channel enum");
}

// Days-from-civil (proleptic Gregorian), Hinnant's algorithm.
namespace {
long long days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  const long long era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153u * static_cast<unsigned>(m + (m > 2 ? -3 : 9)) + 2) / 5 +
                       static_cast<unsigned>(d) - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<long long>(doe) - 719468;
}

void civil_from_days(long long z, int& y, int& m, int& d) {
  z += 719468;
  const long long era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const long long yy = static_cast<long long>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
  m = static_cast<int>(mp + (mp < 10 ? 3 : -9));
  y = static_cast<int>(yy + (m <= 2));
}

constexpr int kDaysInMonth[12] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};

bool leap(int y) { return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0; }
}  // namespace

int parse_date_iso(const std::string& s) {
  int y = 0, m = 0, d = 0;
  char extra = 0;
  if (std::sscanf(s.c_str(), "%4d-%2d-%2d%c", &y, &m, &d, &extra) != 3 || s.size() != 10)
    throw std::invalid_argument("malformed ISO date: '" + s + "'");
  if (m < 1 || m > 12) throw std::invalid_argument("invalid month in date: '" + s + "'");
  const int dim = kDaysInMonth[m - 1] + (m == 2 && leap(y) ? 1 : 0);
  if (d < 1 || d > dim) throw std::invalid_argument("invalid day in date: '" + s + "'");
  return static_cast<int>(days_from_civil(y, m, d));
}

std::string format_date_iso(int days) {
  int y, m, d;
  civil_from_days(days, y, m, d);
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", y, m, d);
  return buf;
}

// ---------------------------------------------------------------------------
// Rank normalization

std::vector<double> rank_normalize(const std::vector<double>& values) {
  if (values.empty()) throw std::invalid_argument("rank_normalize: empty input");
  const std::size_t n = values.size();
  if (n == 1) return {0.5};
  for (double v : values)
    if (std::isnan(v)) throw std::invalid_argument("rank_normalize: NaN input");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });

  std::vector<double> out(n, 0.0);
  std::size_t pos = 0;
  while (pos < n) {
    std::size_t end = pos;
    while (end < n && values[order[end]] == values[order[pos]]) ++end;
    const double avg_rank = 0.5 * (static_cast<double>(pos) + static_cast<double>(end - 1));
    for (std::size_t i = pos; i < end; ++i)
      out[order[i]] = avg_rank / static_cast<double>(n - 1);
    pos = end;
  }
  return out;
}

RankMap RankMap::fit(const std::vector<double>& raw) {
  const std::vector<double> normalized = rank_normalize(raw);
  std::vector<std::pair<double, double>> pairs;
  pairs.reserve(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) pairs.push_back({raw[i], normalized[i]});
  std::sort(pairs.begin(), pairs.end());
  RankMap map;
  for (const auto& [v, r] : pairs) {
    if (!map.values.empty() && map.values.back() == v) continue;  // ties share one rank
    map.values.push_back(v);
    map.ranks.push_back(r);
  }
  return map;
}

double RankMap::apply(double v) const {
  if (values.empty()) throw std::logic_error("RankMap::apply on unfitted map");
  if (values.size() == 1) return 0.5;
  if (v <= values.front()) return v == values.front() ? ranks.front() : 0.0;
  if (v >= values.back()) return v == values.back() ? ranks.back() : 1.0;
  const auto it = std::lower_bound(values.begin(), values.end(), v);
  const std::size_t hi = static_cast<std::size_t>(it - values.begin());
  if (values[hi] == v) return ranks[hi];
  const std::size_t lo = hi - 1;
  const double t = (v - values[lo]) / (values[hi] - values[lo]);
  return ranks[lo] + t * (ranks[hi] - ranks[lo]);
}

// ---------------------------------------------------------------------------
// Feature spec

const std::vector<std::string>& FeatureSpec::lab_statistics() {
  static const std::vector<std::string> stats = {"min", "max", "mean", "mad", "last", "count"};
  return stats;
}

int FeatureSpec::n_binary() const {
  return static_cast<int>(vocab_primary_dx.size() + vocab_secondary_dx.size() +
                          vocab_procedure.size() + vocab_medication.size());
}

int FeatureSpec::n_continuous() const { return static_cast<int>(vocab_lab.size()) * 6; }

FeatureLayout FeatureSpec::layout() const { return FeatureLayout{n_binary(), n_continuous()}; }

const std::vector<std::string>& FeatureSpec::vocab(Channel c) const {
  switch (c) {
    case Channel::primary_dx: return vocab_primary_dx;
    case Channel::secondary_dx: return vocab_secondary_dx;
    case Channel::procedure: return vocab_procedure;
    case Channel::medication: return vocab_medication;
    case Channel::lab: return vocab_lab;
  }
  throw std::logic_error("unknown channel enum");
}

std::string FeatureSpec::layout_manifest_json() const {
  nlohmann::json cols = nlohmann::json::array();
  int idx = 0;
  for (Channel c : {Channel::primary_dx, Channel::secondary_dx, Channel::procedure,
                    Channel::medication}) {
    for (const auto& code : vocab(c)) {
      cols.push_back({{"index", idx++}, {"channel", channel_to_string(c)}, {"code", code}});
    }
  }
  for (const auto& code : vocab_lab)
    for (const auto& stat : lab_statistics())
      cols.push_back(
          {{"index", idx++}, {"channel", "lab"}, {"code", code}, {"statistic", stat}});
  nlohmann::json j;
  j["window_days"] = window_days;
  j["min_prevalence"] = min_prevalence;
  j["n_binary"] = n_binary();
  j["n_continuous"] = n_continuous();
  j["missing_continuous_value"] = kMissingContinuous;
  j["columns"] = cols;
  return j.dump(2) + "\n";
}

namespace {

int window_of(int date, int span_start, int window_days) {
  return (date - span_start) / window_days;
}

DateSpan patient_span(const std::vector<RawEvent>& events) {
  DateSpan span{events.front().date, events.front().date};
  for (const RawEvent& e : events) {
    span.start = std::min(span.start, e.date);
    span.end = std::max(span.end, e.date);
  }
  return span;
}

}  // namespace

FeatureSpec build_feature_spec(const std::vector<RawEvent>& events, double min_prevalence,
                               int window_days) {
  if (events.empty()) throw std::invalid_argument("build_feature_spec: empty event collection");
  if (window_days <= 0) throw std::invalid_argument("build_feature_spec: window_days must be > 0");
  if (min_prevalence < 0.0 || min_prevalence > 1.0)
    throw std::invalid_argument("build_feature_spec: min_prevalence must lie in [0, 1]");

  FeatureSpec spec;
  spec.window_days = window_days;
  spec.min_prevalence = min_prevalence;

  std::set<std::string> patients;
  for (const RawEvent& e : events) patients.insert(e.patient_id);
  const double n_patients = static_cast<double>(patients.size());

  // Patient prevalence per (channel, code).
  std::map<std::pair<Channel, std::string>, std::set<std::string>> token_patients;
  for (const RawEvent& e : events) token_patients[{e.channel, e.code}].insert(e.patient_id);

  auto fill_vocab = [&](Channel c, std::vector<std::string>& vocab) {
    for (const auto& [key, pats] : token_patients) {
      if (key.first != c) continue;
      if (static_cast<double>(pats.size()) >= min_prevalence * n_patients)
        vocab.push_back(key.second);
    }
    std::sort(vocab.begin(), vocab.end());
  };
  fill_vocab(Channel::primary_dx, spec.vocab_primary_dx);
  fill_vocab(Channel::secondary_dx, spec.vocab_secondary_dx);
  fill_vocab(Channel::procedure, spec.vocab_procedure);
  fill_vocab(Channel::medication, spec.vocab_medication);
  fill_vocab(Channel::lab, spec.vocab_lab);

  // Cohort-level frozen rank maps: raw values per lab, and per-(patient,
  // window) occurrence counts per lab (windows over each patient's own span).
  std::map<std::string, DateSpan> spans;
  {
    std::map<std::string, std::vector<RawEvent>> by_patient;
    for (const RawEvent& e : events) by_patient[e.patient_id].push_back(e);
    for (const auto& [pid, evs] : by_patient) spans[pid] = patient_span(evs);
  }
  std::map<std::string, std::vector<double>> lab_values;
  std::map<std::string, std::map<std::pair<std::string, int>, int>> lab_window_counts;
  for (const RawEvent& e : events) {
    if (e.channel != Channel::lab) continue;
    if (!e.has_value)
      throw std::invalid_argument("lab event without value: patient " + e.patient_id + " code " +
                                  e.code);
    if (!std::binary_search(spec.vocab_lab.begin(), spec.vocab_lab.end(), e.code)) continue;
    lab_values[e.code].push_back(e.value);
    const DateSpan& span = spans.at(e.patient_id);
    lab_window_counts[e.code][{e.patient_id, window_of(e.date, span.start, window_days)}]++;
  }
  for (const auto& code : spec.vocab_lab) {
    spec.lab_value_maps[code] = RankMap::fit(lab_values.at(code));
    std::vector<double> counts;
    for (const auto& [key, c] : lab_window_counts.at(code))
      counts.push_back(static_cast<double>(c));
    spec.lab_count_maps[code] = RankMap::fit(counts);
  }
  return spec;
}

// ---------------------------------------------------------------------------
// Window encoding

TrajectoryTensor encode_windows(const std::vector<RawEvent>& patient_events,
                                const FeatureSpec& spec, DateSpan span) {
  if (span.end < span.start) throw std::invalid_argument("encode_windows: inverted span");
  const FeatureLayout layout = spec.layout();
  const int n_windows = (span.end - span.start) / spec.window_days + 1;

  TrajectoryTensor traj;
  traj.windows.assign(static_cast<std::size_t>(n_windows), canonical_empty_window(layout));
  traj.mask.assign(static_cast<std::size_t>(n_windows), 0);
  traj.continuous_mask.assign(static_cast<std::size_t>(n_windows),
                              std::vector<char>(static_cast<std::size_t>(layout.n_continuous), 0));

  // Block offsets for the coded channels.
  std::map<Channel, int> offsets;
  int off = 0;
  for (Channel c : {Channel::primary_dx, Channel::secondary_dx, Channel::procedure,
                    Channel::medication}) {
    offsets[c] = off;
    off += static_cast<int>(spec.vocab(c).size());
  }

  struct LabObs {
    double value;
    int date;
    std::size_t order;
  };
  std::map<std::pair<int, std::string>, std::vector<LabObs>> lab_obs;  // (window, code)

  for (std::size_t i = 0; i < patient_events.size(); ++i) {
    const RawEvent& e = patient_events[i];
    if (e.date < span.start || e.date > span.end)
      throw std::invalid_argument("encode_windows: event outside span for patient " +
                                  e.patient_id + " at " + format_date_iso(e.date));
    const int w = window_of(e.date, span.start, spec.window_days);
    traj.mask[static_cast<std::size_t>(w)] = 1;

    if (e.channel == Channel::lab) {
      if (!e.has_value)
        throw std::invalid_argument("lab event without value: patient " + e.patient_id +
                                    " code " + e.code);
      const auto& vocab = spec.vocab_lab;
      if (!std::binary_search(vocab.begin(), vocab.end(), e.code)) continue;
      lab_obs[{w, e.code}].push_back({e.value, e.date, i});
    } else {
      if (e.has_value)
        throw std::invalid_argument("coded event with value: patient " + e.patient_id + " code " +
                                    e.code);
      const auto& vocab = spec.vocab(e.channel);
      const auto it = std::lower_bound(vocab.begin(), vocab.end(), e.code);
      if (it == vocab.end() || *it != e.code) continue;  // pruned by prevalence
      const int j = offsets[e.channel] + static_cast<int>(it - vocab.begin());
      traj.windows[static_cast<std::size_t>(w)][static_cast<std::size_t>(j)] = 1.0;  // multi-hot
    }
  }

  for (const auto& [key, obs] : lab_obs) {
    const auto& [w, code] = key;
    const auto lab_it = std::lower_bound(spec.vocab_lab.begin(), spec.vocab_lab.end(), code);
    const int lab_index = static_cast<int>(lab_it - spec.vocab_lab.begin());
    const RankMap& vmap = spec.lab_value_maps.at(code);

    std::vector<double> normalized;
    normalized.reserve(obs.size());
    for (const LabObs& o : obs) normalized.push_back(vmap.apply(o.value));

    double v_min = normalized[0], v_max = normalized[0], v_sum = 0.0;
    for (double v : normalized) {
      v_min = std::min(v_min, v);
      v_max = std::max(v_max, v);
      v_sum += v;
    }
    const double v_mean = v_sum / static_cast<double>(normalized.size());

    // MAD about the window median of normalized values; single value -> 0.
    std::vector<double> sorted = normalized;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t mid = sorted.size() / 2;
    const double median =
        sorted.size() % 2 ? sorted[mid] : 0.5 * (sorted[mid - 1] + sorted[mid]);
    std::vector<double> dev;
    dev.reserve(sorted.size());
    for (double v : normalized) dev.push_back(std::abs(v - median));
    std::sort(dev.begin(), dev.end());
    const double mad = dev.size() % 2 ? dev[dev.size() / 2]
                                      : 0.5 * (dev[dev.size() / 2 - 1] + dev[dev.size() / 2]);

    // Last = value with the latest timestamp; ties broken by input order.
    const LabObs* last = &obs[0];
    for (const LabObs& o : obs)
      if (o.date > last->date || (o.date == last->date && o.order >= last->order)) last = &o;
    const double v_last = vmap.apply(last->value);

    const double v_count =
        spec.lab_count_maps.at(code).apply(static_cast<double>(obs.size()));

    const double stats[6] = {v_min, v_max, v_mean, mad, v_last, v_count};
    auto& window = traj.windows[static_cast<std::size_t>(w)];
    auto& cmask = traj.continuous_mask[static_cast<std::size_t>(w)];
    for (int s = 0; s < 6; ++s) {
      const int cont_index = lab_index * 6 + s;
      window[static_cast<std::size_t>(spec.n_binary() + cont_index)] = stats[s];
      cmask[static_cast<std::size_t>(cont_index)] = 1;
    }
  }
  return traj;
}

std::vector<TrajectoryTensor> align_at_index(const std::vector<TrajectoryTensor>& trajectories,
                                             const std::vector<int>& index_windows,
                                             const FeatureLayout& layout) {
  if (trajectories.size() != index_windows.size())
    throw std::invalid_argument("align_at_index: index list length mismatch");
  int target = 0;
  int max_tail = 0;
  for (std::size_t p = 0; p < trajectories.size(); ++p) {
    const int t_len = static_cast<int>(trajectories[p].n_windows());
    const int idx = index_windows[p];
    if (idx < 0 || idx >= t_len)
      throw std::invalid_argument("align_at_index: patient " + std::to_string(p) +
                                  " has no index window inside its span");
    target = std::max(target, idx);
    max_tail = std::max(max_tail, t_len - idx);
  }
  const int total = target + max_tail;
  const std::vector<double> empty = canonical_empty_window(layout);

  std::vector<TrajectoryTensor> out(trajectories.size());
  for (std::size_t p = 0; p < trajectories.size(); ++p) {
    const TrajectoryTensor& src = trajectories[p];
    TrajectoryTensor& dst = out[p];
    const int lead = target - index_windows[p];
    dst.windows.assign(static_cast<std::size_t>(total), empty);
    dst.mask.assign(static_cast<std::size_t>(total), 0);
    dst.continuous_mask.assign(
        static_cast<std::size_t>(total),
        std::vector<char>(static_cast<std::size_t>(layout.n_continuous), 0));
    for (std::size_t w = 0; w < src.n_windows(); ++w) {
      const std::size_t at = static_cast<std::size_t>(lead) + w;
      dst.windows[at] = src.windows[w];
      dst.mask[at] = src.mask[w];
      if (!src.continuous_mask.empty()) dst.continuous_mask[at] = src.continuous_mask[w];
    }
    dst.index_window = target;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Cohort pipeline + files

std::vector<RawEvent> read_events_csv(const std::string& path) {
  const auto rows = io::read_csv(path);
  if (rows.empty()) throw std::invalid_argument("events file is empty: " + path);
  std::size_t start = 0;
  if (!rows[0].empty() && rows[0][0] == "patient_id") start = 1;
  std::vector<RawEvent> events;
  for (std::size_t i = start; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.size() < 4)
      throw std::invalid_argument("events row " + std::to_string(i + 1) + ": expected columns " +
                                  "patient_id,date,channel,code,value");
    RawEvent e;
    e.patient_id = r[0];
    e.date = parse_date_iso(r[1]);
    e.channel = channel_from_string(r[2]);
    e.code = r[3];
    if (r.size() > 4 && !r[4].empty()) {
      e.value = std::stod(r[4]);
      e.has_value = true;
    }
    if (e.channel == Channel::lab && !e.has_value)
      throw std::invalid_argument("events row " + std::to_string(i + 1) +
                                  ": lab event must carry a value");
    if (e.channel != Channel::lab && e.has_value)
      throw std::invalid_argument("events row " + std::to_string(i + 1) +
                                  ": coded event must not carry a value");
    events.push_back(std::move(e));
  }
  return events;
}

EncodedCohort encode_cohort(const std::vector<RawEvent>& events, double min_prevalence,
                            int window_days,
                            const std::optional<std::pair<Channel, std::string>>& index_code) {
  EncodedCohort out;
  out.spec = build_feature_spec(events, min_prevalence, window_days);
  const FeatureLayout layout = out.spec.layout();

  std::map<std::string, std::vector<RawEvent>> by_patient;
  for (const RawEvent& e : events) by_patient[e.patient_id].push_back(e);

  std::vector<TrajectoryTensor> trajectories;
  std::vector<int> index_windows;
  for (const auto& [pid, evs] : by_patient) {
    const DateSpan span = patient_span(evs);
    trajectories.push_back(encode_windows(evs, out.spec, span));
    out.patient_ids.push_back(pid);
    if (index_code) {
      int index_date = -1;
      for (const RawEvent& e : evs)
        if (e.channel == index_code->first && e.code == index_code->second)
          index_date = index_date < 0 ? e.date : std::min(index_date, e.date);
      if (index_date < 0)
        throw std::invalid_argument("patient " + pid + " has no index event " +
                                    channel_to_string(index_code->first) + ":" +
                                    index_code->second);
      index_windows.push_back((index_date - span.start) / window_days);
    }
  }

  if (index_code) {
    trajectories = align_at_index(trajectories, index_windows, layout);
  } else {
    // Right-pad to a common length so the cohort batches cleanly.
    std::size_t max_t = 0;
    for (const auto& t : trajectories) max_t = std::max(max_t, t.n_windows());
    const std::vector<double> empty = canonical_empty_window(layout);
    for (auto& t : trajectories) {
      while (t.n_windows() < max_t) {
        t.windows.push_back(empty);
        t.mask.push_back(0);
        t.continuous_mask.push_back(
            std::vector<char>(static_cast<std::size_t>(layout.n_continuous), 0));
      }
    }
  }

  out.cohort.layout = layout;
  out.cohort.trajectories = std::move(trajectories);
  out.cohort.validate();
  return out;
}

void write_encoded_cohort(const EncodedCohort& encoded, const std::string& out_dir) {
  io::ensure_dir(out_dir);
  const int width = encoded.cohort.layout.width();

  std::ostringstream tensors;
  tensors << "patient_id,window";
  for (int j = 0; j < width; ++j) tensors << ",f" << j;
  tensors << '\n';
  std::ostringstream masks;
  masks << "patient_id,window,present\n";

  for (std::size_t p = 0; p < encoded.cohort.size(); ++p) {
    const TrajectoryTensor& t = encoded.cohort.trajectories[p];
    for (std::size_t w = 0; w < t.n_windows(); ++w) {
      tensors << encoded.patient_ids[p] << ',' << w;
      for (int j = 0; j < width; ++j)
        tensors << ',' << io::format_double(t.windows[w][static_cast<std::size_t>(j)]);
      tensors << '\n';
      masks << encoded.patient_ids[p] << ',' << w << ',' << (t.mask[w] ? 1 : 0) << '\n';
    }
  }
  io::write_file(out_dir + "/tensors.csv", tensors.str());
  io::write_file(out_dir + "/masks.csv", masks.str());
  io::write_file(out_dir + "/layout.json", encoded.spec.layout_manifest_json());
}

}  // namespace trajcluster::ehr
