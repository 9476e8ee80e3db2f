#include <doctest.h>

#include <cmath>

#include "trajcluster/ehr.hpp"
#include "trajcluster/io.hpp"

using namespace trajcluster;

namespace {

ehr::RawEvent lab(const std::string& pid, const std::string& date, const std::string& code,
                  double value) {
  return {pid, ehr::parse_date_iso(date), ehr::Channel::lab, code, value, true};
}

ehr::RawEvent dx(const std::string& pid, const std::string& date, const std::string& code) {
  return {pid, ehr::parse_date_iso(date), ehr::Channel::primary_dx, code, 0.0, false};
}

}  // namespace

TEST_SUITE("ehr") {
  TEST_CASE("ISO date parsing round trips and rejects malformed input") {
    const int d = ehr::parse_date_iso("2015-03-17");
    CHECK(ehr::format_date_iso(d) == "2015-03-17");
    CHECK(ehr::parse_date_iso("1970-01-01") == 0);
    CHECK(ehr::parse_date_iso("1970-01-02") == 1);
    CHECK_THROWS(ehr::parse_date_iso("2015-13-01"));
    CHECK_THROWS(ehr::parse_date_iso("2015-02-30"));
    CHECK_THROWS(ehr::parse_date_iso("20150101"));
  }

  TEST_CASE("rank_normalize: hand cases") {
    const auto r = ehr::rank_normalize({5.0, 1.0, 9.0});
    CHECK(r[0] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(r[1] == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(r[2] == doctest::Approx(1.0).epsilon(1e-15));

    const auto ties = ehr::rank_normalize({2.0, 2.0});
    CHECK(ties[0] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(ties[1] == doctest::Approx(0.5).epsilon(1e-15));

    CHECK(ehr::rank_normalize({42.0})[0] == 0.5);
  }

  TEST_CASE("rank_normalize is invariant to monotone transforms") {
    const std::vector<double> base = {3.0, -1.0, 7.5, 0.0, 12.0, 7.4};
    std::vector<double> cubed;
    for (double v : base) cubed.push_back(v * v * v);  // strictly increasing
    const auto a = ehr::rank_normalize(base);
    const auto b = ehr::rank_normalize(cubed);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-15));
  }

  TEST_CASE("prevalence filtering keeps only common tokens") {
    std::vector<ehr::RawEvent> events;
    for (int p = 0; p < 200; ++p) {
      const std::string pid = "p" + std::to_string(p);
      events.push_back(dx(pid, "2020-01-05", "COMMON"));
      events.push_back(lab(pid, "2020-01-05", "hb", 10.0 + p));
    }
    events.push_back(dx("p0", "2020-01-06", "RARE"));  // 1/200 = 0.5% of patients

    const auto spec = ehr::build_feature_spec(events, 0.01, 90);
    CHECK(spec.vocab_primary_dx == std::vector<std::string>{"COMMON"});

    const auto all = ehr::build_feature_spec(events, 0.0, 90);
    CHECK(all.vocab_primary_dx == (std::vector<std::string>{"COMMON", "RARE"}));

    // Deterministic layout across rebuilds.
    const auto again = ehr::build_feature_spec(events, 0.01, 90);
    CHECK(spec.layout_manifest_json() == again.layout_manifest_json());
  }

  TEST_CASE("build_feature_spec rejects empty input") {
    CHECK_THROWS(ehr::build_feature_spec({}, 0.01, 90));
  }

  TEST_CASE("encode_windows: lab statistics on a two-value window") {
    // One patient, one lab, values 1 and 3 inside a single 90-day window.
    std::vector<ehr::RawEvent> events = {lab("p0", "2020-01-01", "hb", 1.0),
                                         lab("p0", "2020-01-10", "hb", 3.0)};
    const auto spec = ehr::build_feature_spec(events, 0.0, 90);
    const auto traj = ehr::encode_windows(events, spec,
                                          {ehr::parse_date_iso("2020-01-01"),
                                           ehr::parse_date_iso("2020-01-31")});
    REQUIRE(traj.n_windows() == 1);
    CHECK(traj.mask[0] == 1);
    // Cohort rank map over {1, 3}: normalized values {0, 1}.
    CHECK(traj.windows[0][0] == doctest::Approx(0.0));   // min
    CHECK(traj.windows[0][1] == doctest::Approx(1.0));   // max
    CHECK(traj.windows[0][2] == doctest::Approx(0.5));   // mean
    CHECK(traj.windows[0][3] == doctest::Approx(0.5));   // MAD about median 0.5
    CHECK(traj.windows[0][4] == doctest::Approx(1.0));   // last (value 3)
    CHECK(traj.windows[0][5] == doctest::Approx(0.5));   // count map has one entry
    for (int s = 0; s < 6; ++s) CHECK(traj.continuous_mask[0][static_cast<std::size_t>(s)] == 1);
  }

  TEST_CASE("encode_windows: empty window is the canonical empty vector with mask false") {
    std::vector<ehr::RawEvent> events = {dx("p0", "2020-01-01", "A"),
                                         dx("p0", "2020-07-01", "A")};
    const auto spec = ehr::build_feature_spec(events, 0.0, 90);
    const auto traj = ehr::encode_windows(events, spec,
                                          {ehr::parse_date_iso("2020-01-01"),
                                           ehr::parse_date_iso("2020-09-30")});
    // 273 inclusive days of span = four 90-day windows; 2020-07-01 is day 182.
    REQUIRE(traj.n_windows() == 4);
    CHECK(traj.mask[0] == 1);
    CHECK(traj.mask[1] == 0);
    CHECK(traj.mask[2] == 1);
    CHECK(traj.mask[3] == 0);
    const auto empty = canonical_empty_window(spec.layout());
    CHECK(traj.windows[1] == empty);
    CHECK(traj.windows[3] == empty);
  }

  TEST_CASE("encode_windows: repeated code in one window stays multi-hot 1") {
    std::vector<ehr::RawEvent> events = {dx("p0", "2020-01-01", "A"), dx("p0", "2020-01-02", "A")};
    const auto spec = ehr::build_feature_spec(events, 0.0, 90);
    const auto traj = ehr::encode_windows(events, spec,
                                          {ehr::parse_date_iso("2020-01-01"),
                                           ehr::parse_date_iso("2020-01-31")});
    CHECK(traj.windows[0][0] == 1.0);
  }

  TEST_CASE("encode_windows: event outside the span names patient and timestamp") {
    std::vector<ehr::RawEvent> events = {dx("p7", "2021-05-01", "A")};
    const auto spec = ehr::build_feature_spec(events, 0.0, 90);
    CHECK_THROWS_WITH_AS(
        ehr::encode_windows(events, spec,
                            {ehr::parse_date_iso("2020-01-01"), ehr::parse_date_iso("2020-02-01")}),
        doctest::Contains("p7"), std::invalid_argument);
  }

  TEST_CASE("encode determinism and bounds") {
    std::vector<ehr::RawEvent> events;
    for (int p = 0; p < 5; ++p) {
      const std::string pid = "p" + std::to_string(p);
      events.push_back(lab(pid, "2020-01-03", "na", 135.0 + p));
      events.push_back(lab(pid, "2020-04-03", "na", 140.0 - p));
      events.push_back(dx(pid, "2020-02-01", "E11"));
    }
    const auto spec = ehr::build_feature_spec(events, 0.0, 90);
    const ehr::DateSpan span = {ehr::parse_date_iso("2020-01-01"),
                                ehr::parse_date_iso("2020-06-30")};
    std::vector<ehr::RawEvent> p0_events;
    for (const auto& e : events)
      if (e.patient_id == "p0") p0_events.push_back(e);
    const auto a = ehr::encode_windows(p0_events, spec, span);
    const auto b = ehr::encode_windows(p0_events, spec, span);
    CHECK(a.windows == b.windows);
    CHECK(a.mask == b.mask);

    // Rank-normalization bounds: every continuous entry in [0,1] or exactly -0.1.
    for (const auto& w : a.windows)
      for (int j = spec.n_binary(); j < spec.layout().width(); ++j) {
        const double v = w[static_cast<std::size_t>(j)];
        const bool ok = (v >= 0.0 && v <= 1.0) || v == kMissingContinuous;
        CHECK(ok);
      }

    // Mask soundness: masked-off windows equal the canonical empty vector.
    const auto empty = canonical_empty_window(spec.layout());
    for (std::size_t w = 0; w < a.n_windows(); ++w)
      if (!a.mask[w]) CHECK(a.windows[w] == empty);
  }

  TEST_CASE("unseen lab values interpolate and clamp inside [0,1]") {
    std::vector<ehr::RawEvent> cohort_events = {lab("p0", "2020-01-01", "hb", 1.0),
                                                lab("p1", "2020-01-01", "hb", 2.0),
                                                lab("p2", "2020-01-01", "hb", 3.0)};
    const auto spec = ehr::build_feature_spec(cohort_events, 0.0, 90);
    const auto& map = spec.lab_value_maps.at("hb");
    CHECK(map.apply(1.5) == doctest::Approx(0.25));  // halfway between ranks 0 and 0.5
    CHECK(map.apply(-10.0) == 0.0);
    CHECK(map.apply(99.0) == 1.0);
  }

  TEST_CASE("align_at_index shifts both patients to the max index position") {
    const FeatureLayout layout{1, 0};
    auto make = [&](int t_len, int index_at) {
      TrajectoryTensor t;
      t.windows.assign(static_cast<std::size_t>(t_len), std::vector<double>{0.0});
      t.windows[static_cast<std::size_t>(index_at)][0] = 1.0;  // marker
      t.mask.assign(static_cast<std::size_t>(t_len), 1);
      t.continuous_mask.assign(static_cast<std::size_t>(t_len), std::vector<char>{});
      return t;
    };
    const auto aligned =
        ehr::align_at_index({make(6, 3), make(7, 5)}, {3, 5}, layout);
    REQUIRE(aligned.size() == 2);
    CHECK(aligned[0].index_window == 5);
    CHECK(aligned[1].index_window == 5);
    CHECK(aligned[0].n_windows() == aligned[1].n_windows());
    CHECK(aligned[0].windows[5][0] == 1.0);
    CHECK(aligned[1].windows[5][0] == 1.0);
    // Left padding of patient 0 is masked-off canonical empty.
    CHECK(aligned[0].mask[0] == 0);
    CHECK(aligned[0].mask[1] == 0);

    // Single patient: unchanged positions.
    const auto solo = ehr::align_at_index({make(4, 2)}, {2}, layout);
    CHECK(solo[0].n_windows() == 4);
    CHECK(solo[0].index_window == 2);

    // Already aligned: idempotent.
    const auto again = ehr::align_at_index(aligned, {5, 5}, layout);
    CHECK(again[0].windows == aligned[0].windows);
    CHECK(again[1].windows == aligned[1].windows);
  }

  TEST_CASE("align_at_index rejects a missing index window") {
    const FeatureLayout layout{1, 0};
    TrajectoryTensor t;
    t.windows.assign(3, std::vector<double>{0.0});
    t.mask.assign(3, 1);
    CHECK_THROWS(ehr::align_at_index({t}, {5}, layout));
  }

  TEST_CASE("whole pipeline: width stability and file outputs") {
    std::vector<ehr::RawEvent> events;
    for (int p = 0; p < 4; ++p) {
      const std::string pid = "p" + std::to_string(p);
      events.push_back(dx(pid, "2020-01-10", "E11"));
      events.push_back(lab(pid, "2020-02-10", "hb", 10.0 + p));
      if (p % 2 == 0) events.push_back(dx(pid, "2020-06-01", "I10"));
    }
    const auto encoded = ehr::encode_cohort(events, 0.0, 90,
                                            std::make_pair(ehr::Channel::primary_dx,
                                                           std::string("E11")));
    const int width = encoded.cohort.layout.width();
    for (const auto& traj : encoded.cohort.trajectories) {
      CHECK(traj.index_window >= 0);
      for (const auto& w : traj.windows) CHECK(static_cast<int>(w.size()) == width);
    }

    ehr::write_encoded_cohort(encoded, "/tmp/trajcluster_test_ehr");
    CHECK(io::file_exists("/tmp/trajcluster_test_ehr/tensors.csv"));
    CHECK(io::file_exists("/tmp/trajcluster_test_ehr/masks.csv"));
    CHECK(io::file_exists("/tmp/trajcluster_test_ehr/layout.json"));
  }

  TEST_CASE("events CSV validation") {
    io::write_file("/tmp/trajcluster_bad_events.csv",
                   "patient_id,date,channel,code,value\np0,2020-01-01,lab,hb,\n");
    CHECK_THROWS(ehr::read_events_csv("/tmp/trajcluster_bad_events.csv"));
    io::write_file("/tmp/trajcluster_good_events.csv",
                   "patient_id,date,channel,code,value\n"
                   "p0,2020-01-01,lab,hb,12.5\n"
                   "p0,2020-01-02,primary_dx,E11,\n");
    const auto events = ehr::read_events_csv("/tmp/trajcluster_good_events.csv");
    REQUIRE(events.size() == 2);
    CHECK(events[0].has_value);
    CHECK(!events[1].has_value);
  }
}
