#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "oracle.hpp"
#include "support.hpp"

using namespace stepwise;
using test_support::TempDir;
using test_support::write_file;

namespace {

cohort::ObservationEvent event_at(const std::string& id, std::chrono::sys_days day, int hour, int minute,
                                  std::int64_t steps) {
  return {id, {day, hour * 60 + minute}, steps};
}

const std::chrono::sys_days kStart = std::chrono::sys_days{std::chrono::year{2020} / 3 / 1};

struct CohortDir {
  TempDir dir;
  cohort::CohortFiles files = cohort::CohortFiles::in_directory(dir.path());

  void write(const std::string& events, const std::string& milestones, const std::string& demographics,
             const std::string& manifest) {
    write_file(files.events, "participant_id,timestamp,step_count\n" + events);
    write_file(files.milestones, "participant_id,milestone,bmi\n" + milestones);
    write_file(files.demographics, test_support::kDemographicsHeader + demographics);
    write_file(files.manifest, manifest);
  }
  cohort::LoadedCohort load() const { return cohort::load_cohort(files, cohort::load_manifest(files.manifest)); }
};

synth::SynthConfig small_config(std::uint64_t seed, int participants = 60) {
  synth::SynthConfig c;
  c.seed = seed;
  c.n_participants = participants;
  return c;
}

}  // namespace

// ------------------------------------------------------------------ cohort

TEST(SlotAggregate, MiddayEventLandsInFourthSlotOfSix) {
  const std::vector<cohort::ObservationEvent> ev{event_at("P1", kStart, 13, 30, 10)};
  const auto g = cohort::slot_aggregate(ev, 6, kStart, 1).grid;
  EXPECT_EQ(cohort::slot_of(13 * 60 + 30, 6), 3);
  EXPECT_EQ(g.at(0, 3), 10.0);
  EXPECT_EQ(g.recorded_cells(), 1u);
}

TEST(SlotAggregate, MidnightIsSlotZero) {
  EXPECT_EQ(cohort::slot_of(0, 12), 0);
  EXPECT_EQ(cohort::slot_of(1439, 12), 11);
  EXPECT_EQ(cohort::slot_of(2 * 60, 12), 1);
}

TEST(SlotAggregate, SameSlotEventsAdd) {
  const std::vector<cohort::ObservationEvent> ev{event_at("P1", kStart, 9, 0, 100), event_at("P1", kStart, 11, 59, 50)};
  const auto g = cohort::slot_aggregate(ev, 4, kStart, 1).grid;
  EXPECT_EQ(g.at(0, 1), 150.0);
}

TEST(SlotAggregate, OutOfRangeEventsSkippedAndCounted) {
  const std::vector<cohort::ObservationEvent> ev{event_at("P1", kStart - std::chrono::days{1}, 9, 0, 5),
                                                 event_at("P1", kStart + std::chrono::days{3}, 9, 0, 5),
                                                 event_at("P1", kStart + std::chrono::days{2}, 23, 59, 7)};
  const auto r = cohort::slot_aggregate(ev, 6, kStart, 3);
  EXPECT_EQ(r.skipped, 2u);
  EXPECT_EQ(r.grid.at(2, 5), 7.0);
}

TEST(SlotAggregate, ConservesSteps) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> day(-2, 12), minute(0, 1439), steps(0, 900);
  for (int m : {1, 2, 3, 4, 6, 8, 12, 24}) {
    std::vector<cohort::ObservationEvent> ev;
    double in_range = 0.0;
    for (int i = 0; i < 500; ++i) {
      const int d = day(rng);
      const int s = steps(rng);
      ev.push_back({"P", {kStart + std::chrono::days{d}, minute(rng)}, s});
      if (d >= 0 && d < 10) in_range += s;
    }
    const auto g = cohort::slot_aggregate(ev, m, kStart, 10).grid;
    double sum = 0.0;
    for (int d = 0; d < 10; ++d)
      for (int j = 0; j < m; ++j) sum += g.at(d, j).value_or(0.0);
    EXPECT_EQ(sum, in_range) << "m=" << m;
  }
}

TEST(SlotAggregate, RejectsSlotCountNotDividingDay) {
  EXPECT_THROW(cohort::slot_aggregate({}, 5, kStart, 3), InvalidArgument);
  EXPECT_THROW(cohort::slot_aggregate({}, 6, kStart, 0), InvalidArgument);
}

TEST(Impute, FillsColumnMean) {
  std::vector<cohort::SlotGrid> g(1, cohort::SlotGrid(3, 1));
  g[0].set(0, 0, 100);
  g[0].set(2, 0, 200);
  const auto r = cohort::impute(g);
  EXPECT_EQ(g[0].value(1, 0), 150.0);
  EXPECT_EQ(g[0].value(0, 0), 100.0);
  EXPECT_EQ(g[0].value(2, 0), 200.0);
  EXPECT_EQ(r.cells_filled, 1u);
}

TEST(Impute, SharedCohortMeanAcrossParticipants) {
  std::vector<cohort::SlotGrid> g(3, cohort::SlotGrid(2, 4));
  const double vals[3] = {10, 40, 70};
  for (int p = 0; p < 3; ++p)
    for (int d = 0; d < 2; ++d)
      for (int j = 0; j < 4; ++j) g[p].set(d, j, vals[p] + d + j);
  for (auto& x : g) x.clear(1, 2);
  // Remaining slot-2 cells are day 0: 12, 42, 72.
  cohort::impute(g);
  for (auto& x : g) EXPECT_DOUBLE_EQ(x.value(1, 2), 42.0);
}

TEST(Impute, CompleteGridUntouchedAndIdempotent) {
  auto cohort = synth::materialize(synth::generate_cohort(small_config(3, 30))).series;
  std::vector<cohort::SlotGrid> original;
  for (auto& s : cohort) original.push_back(s.grid);
  cohort::impute(cohort);
  for (std::size_t i = 0; i < cohort.size(); ++i)
    for (int d = 0; d < original[i].days(); ++d)
      for (int j = 0; j < original[i].slots(); ++j)
        if (auto v = original[i].at(d, j)) EXPECT_EQ(cohort[i].grid.value(d, j), *v);
  std::vector<cohort::SlotGrid> once;
  for (auto& s : cohort) once.push_back(s.grid);
  const auto again = cohort::impute(cohort);
  EXPECT_EQ(again.cells_filled, 0u);
  for (std::size_t i = 0; i < cohort.size(); ++i) EXPECT_TRUE(cohort[i].grid == once[i]);
}

TEST(Impute, DegenerateColumnBecomesZero) {
  std::vector<cohort::SlotGrid> g(2, cohort::SlotGrid(2, 2));
  g[0].set(0, 0, 5);
  const auto r = cohort::impute(g);
  ASSERT_EQ(r.degenerate_slots, std::vector<int>{1});
  EXPECT_EQ(g[1].value(1, 1), 0.0);
  EXPECT_EQ(g[1].value(1, 0), 5.0);
}

TEST(Label, CrtBoundaries) {
  EXPECT_TRUE(cohort::label(30.0, 28.4, 0.05));
  EXPECT_FALSE(cohort::label(30.0, 30.0, 0.05));
  EXPECT_TRUE(cohort::label(30.0, 28.5, 0.05));
  EXPECT_THROW(cohort::label(0.0, 28.0, 0.05), InvalidArgument);
  EXPECT_THROW(cohort::label(30.0, -1.0, 0.05), InvalidArgument);
}

TEST(Label, MonotoneInEndBmi) {
  for (double start : {18.0, 25.5, 30.0, 47.25}) {
    bool seen_true = false;
    for (double end = start * 1.1; end > start * 0.5; end -= 0.01) {
      const bool l = cohort::label(start, end, 0.05);
      EXPECT_FALSE(seen_true && !l) << start << " -> " << end;
      seen_true = seen_true || l;
    }
    EXPECT_TRUE(seen_true);
  }
}

TEST(LoadCohort, HandWrittenTwoPeriodCohort) {
  CohortDir c;
  c.write("P1,2020-03-01T13:30,100\nP1,2020-03-02T00:00,50\nP1,2020-03-03T08:00,70\nP2,2020-03-01T10:00,10\n",
          "P1,enrollment,30\nP1,midpoint,28.4\nP1,closeout,28.4\nP2,enrollment,25\nP2,midpoint,25\n",
          test_support::demographics_row("P1", 55) + test_support::demographics_row("P2", 30),
          test_support::manifest_ini(2, 6));
  const auto loaded = c.load();
  // P1 period 0 and 1 (both have an event), P2 has no closeout BMI.
  ASSERT_EQ(loaded.series.size(), 3u);
  EXPECT_EQ(loaded.series[0].participant_id, "P1");
  EXPECT_TRUE(loaded.series[0].improved);
  EXPECT_FALSE(loaded.series[1].improved);
  EXPECT_EQ(loaded.series[0].grid.at(0, 3), 100.0);
  EXPECT_EQ(loaded.series[0].grid.at(1, 0), 50.0);
  EXPECT_EQ(loaded.series[1].grid.at(0, 2), 70.0);
  EXPECT_EQ(loaded.series[2].participant_id, "P2");
  EXPECT_EQ(loaded.report.dropped_missing_bmi, 1u);
  EXPECT_EQ(loaded.series[0].demographics.age, 55);
  EXPECT_EQ(loaded.series[0].demographics.codes[1], 1);  // married
}

TEST(LoadCohort, DuplicateEventKeepsLargerCount) {
  CohortDir c;
  c.write("P1,2020-03-01T09:00,40\nP1,2020-03-01T09:00,90\nP1,2020-03-01T09:00,60\n",
          "P1,enrollment,30\nP1,closeout,29\n", test_support::demographics_row("P1"),
          test_support::manifest_ini(1, 6, 1));
  const auto loaded = c.load();
  ASSERT_EQ(loaded.series.size(), 1u);
  EXPECT_EQ(loaded.series[0].grid.at(0, 2), 90.0);
  EXPECT_EQ(loaded.report.duplicate_events, 2u);
  EXPECT_FALSE(loaded.report.warnings.empty());
}

TEST(LoadCohort, MalformedRowNamesFileAndLine) {
  CohortDir c;
  c.write("P1,2020-03-01T09:00,40\nP1,not-a-time,90\n", "P1,enrollment,30\n", test_support::demographics_row("P1"),
          test_support::manifest_ini(1, 6));
  try {
    c.load();
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
    EXPECT_NE(std::string(e.what()).find("events.csv:3"), std::string::npos) << e.what();
  }
}

TEST(LoadCohort, SchemaViolations) {
  {
    CohortDir c;
    c.write("", "P1,enrollment,-3\n", test_support::demographics_row("P1"), test_support::manifest_ini(1, 6));
    EXPECT_THROW(c.load(), ParseError);
  }
  {
    CohortDir c;
    c.write("", "P1,enrollment,30\nP1,enrollment,31\n", test_support::demographics_row("P1"),
            test_support::manifest_ini(1, 6));
    EXPECT_THROW(c.load(), ParseError);
  }
  {
    CohortDir c;
    c.write("", "", test_support::demographics_row("P1", 12), test_support::manifest_ini(1, 6));
    EXPECT_THROW(c.load(), ParseError);
  }
  {
    CohortDir c;
    c.write("", "", "P1,female,40,married,2,bachelor,no,martian,employed\n", test_support::manifest_ini(1, 6));
    EXPECT_THROW(c.load(), ParseError);
  }
  {
    CohortDir c;
    c.write("P1,2020-03-01T09:00,-4\n", "", test_support::demographics_row("P1"), test_support::manifest_ini(1, 6));
    EXPECT_THROW(c.load(), ParseError);
  }
  {
    CohortDir c;
    c.write("", "", test_support::demographics_row("P1"), test_support::manifest_ini(1, 5));
    EXPECT_THROW(c.load(), ParseError);
  }
}

TEST(LoadCohort, MissingFile) {
  CohortDir c;
  c.write("", "", "", test_support::manifest_ini(1, 6));
  std::filesystem::remove(c.files.events);
  EXPECT_THROW(c.load(), MissingFileError);
  EXPECT_THROW(cohort::load_manifest(c.dir / "nope.ini"), MissingFileError);
}

TEST(LoadCohort, EmptyEventsImputeFullyWhenNoMinimum) {
  CohortDir c;
  c.write("", "P1,enrollment,30\nP1,closeout,28\nP2,enrollment,30\nP2,closeout,29\n",
          test_support::demographics_row("P1") + test_support::demographics_row("P2"),
          test_support::manifest_ini(3, 4, 1, "min_events_per_period = 0\n"));
  auto loaded = c.load();
  ASSERT_EQ(loaded.series.size(), 2u);
  for (const auto& s : loaded.series) EXPECT_EQ(s.grid.recorded_cells(), 0u);
  const auto r = cohort::impute(loaded.series);
  EXPECT_EQ(r.degenerate_slots.size(), 4u);
  for (const auto& s : loaded.series) EXPECT_TRUE(s.grid.complete());

  // The default minimum of one event drops both instances instead.
  CohortDir strict;
  strict.write("", "P1,enrollment,30\nP1,closeout,28\n", test_support::demographics_row("P1"),
               test_support::manifest_ini(3, 4, 1));
  const auto dropped = strict.load();
  EXPECT_TRUE(dropped.series.empty());
  EXPECT_EQ(dropped.report.dropped_insufficient_events, 1u);
}

TEST(LoadCohort, MissingMidpointPolicy) {
  const std::string events = "P1,2020-03-01T09:00,40\nP1,2020-03-04T09:00,40\n";
  const std::string milestones = "P1,enrollment,30\nP1,closeout,27\n";
  {
    CohortDir c;
    c.write(events, milestones, test_support::demographics_row("P1"),
            test_support::manifest_ini(3, 6, 2, "period_policy = halves_or_full\n"));
    const auto loaded = c.load();
    ASSERT_EQ(loaded.series.size(), 1u);
    EXPECT_DOUBLE_EQ(loaded.series[0].bmi_start, 30.0);
    EXPECT_DOUBLE_EQ(loaded.series[0].bmi_end, 27.0);
    EXPECT_TRUE(loaded.series[0].improved);
  }
  {
    CohortDir c;
    c.write(events, milestones, test_support::demographics_row("P1"), test_support::manifest_ini(3, 6, 2));
    const auto loaded = c.load();
    EXPECT_TRUE(loaded.series.empty());
    EXPECT_EQ(loaded.report.dropped_missing_bmi, 2u);
  }
}

TEST(LoadCohort, SlotOverride) {
  CohortDir c;
  c.write("P1,2020-03-01T13:30,100\n", "P1,enrollment,30\nP1,closeout,28\n", test_support::demographics_row("P1"),
          test_support::manifest_ini(1, 6, 1));
  const auto loaded = cohort::load_cohort(c.files, cohort::load_manifest(c.files.manifest), 12);
  EXPECT_EQ(loaded.series.at(0).m_slots(), 12);
  EXPECT_EQ(loaded.series.at(0).grid.at(0, 6), 100.0);
}

// ------------------------------------------------------------------- synth

TEST(Synth, WrittenFilesRoundTripWithoutDrops) {
  auto config = small_config(5, 40);
  config.missing_rate = 0.0;
  const auto cohort = synth::generate_cohort(config);
  TempDir dir;
  synth::write_cohort(cohort, dir.path());
  const auto files = cohort::CohortFiles::in_directory(dir.path());
  const auto loaded = cohort::load_cohort(files, cohort::load_manifest(files.manifest));
  const auto direct = synth::materialize(cohort);
  EXPECT_EQ(loaded.report.dropped_insufficient_events, 0u);
  EXPECT_EQ(loaded.report.dropped_missing_demographics, 0u);
  EXPECT_EQ(loaded.report.duplicate_events, 0u);
  EXPECT_EQ(loaded.report.events_out_of_range, 0u);
  // Only the planned dropouts lose an instance.
  std::size_t dropouts = 0;
  for (const auto& p : cohort.participants) dropouts += p.dropout;
  EXPECT_EQ(loaded.report.dropped_missing_bmi, dropouts);
  ASSERT_EQ(loaded.series.size(), direct.series.size());
  for (std::size_t i = 0; i < loaded.series.size(); ++i) {
    EXPECT_EQ(loaded.series[i].participant_id, direct.series[i].participant_id);
    EXPECT_TRUE(loaded.series[i].grid == direct.series[i].grid);
    EXPECT_TRUE(loaded.series[i].grid.complete());
    EXPECT_EQ(loaded.series[i].improved, direct.series[i].improved);
  }
}

TEST(Synth, DeterministicFiles) {
  const auto config = small_config(17, 25);
  TempDir a, b;
  synth::write_cohort(synth::generate_cohort(config), a.path());
  synth::write_cohort(synth::generate_cohort(config), b.path());
  EXPECT_EQ(test_support::tree(a.path()), test_support::tree(b.path()));
}

TEST(Synth, AddingParticipantsKeepsExistingDemographics) {
  const auto small = synth::generate_cohort(small_config(9, 20));
  const auto large = synth::generate_cohort(small_config(9, 40));
  for (std::size_t i = 0; i < small.participants.size(); ++i) {
    EXPECT_EQ(small.participants[i].demographics.codes, large.participants[i].demographics.codes);
    EXPECT_EQ(small.participants[i].demographics.age, large.participants[i].demographics.age);
  }
}

TEST(Synth, RejectsInvalidConfig) {
  auto c = small_config(1);
  c.n_participants = 1;
  EXPECT_THROW(synth::generate_cohort(c), InvalidArgument);
  c = small_config(1);
  c.missing_rate = 1.5;
  EXPECT_THROW(synth::generate_cohort(c), InvalidArgument);
  c = small_config(1);
  c.diurnal_profile[0] += 0.01;
  EXPECT_THROW(synth::generate_cohort(c), InvalidArgument);
  c = small_config(1);
  c.m = 7;
  EXPECT_THROW(synth::generate_cohort(c), InvalidArgument);
}

TEST(Synth, DiurnalProfileRanksAfternoonSlotFirst) {
  // Hourly weights grouped into six 4-hour slots: 12:00-16:00 busiest,
  // 00:00-04:00 quietest.
  const auto w = synth::default_diurnal_profile();
  std::array<double, 6> slot{};
  for (int h = 0; h < 24; ++h) slot[h / 4] += w[h];
  const auto order = interpret::rank_steps(std::vector<double>(slot.begin(), slot.end()));
  EXPECT_EQ(order.front(), 3);
  EXPECT_EQ(order.back(), 0);
  EXPECT_NEAR(std::accumulate(w.begin(), w.end(), 0.0), 1.0, 1e-12);
}

TEST(Synth, PositiveRateNearBalanced) {
  // Pooled over several seeds to keep the estimate tight.
  std::size_t pos = 0, total = 0;
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    const auto series = synth::materialize(synth::generate_cohort(small_config(seed, 300))).series;
    for (const auto& s : series) pos += s.improved;
    total += series.size();
  }
  const double rate = static_cast<double>(pos) / static_cast<double>(total);
  EXPECT_NEAR(rate, 0.53, 0.05) << pos << "/" << total;
}

TEST(Synth, InstanceCountTracksDropout) {
  // 275 participants with the default dropout leave 323 usable instances.
  auto c = small_config(2, 275);
  const auto series = synth::materialize(synth::generate_cohort(c)).series;
  EXPECT_EQ(series.size(), 323u);
}

TEST(Synth, CalibrationAtTenThousand) {
  auto c = small_config(21, 10000);
  const auto series = test_support::imputed_series(synth::generate_cohort(c), 6);
  const auto stats = eval::association_stats(series);
  ASSERT_TRUE(stats.p_improved_given_above.has_value());
  EXPECT_NEAR(*stats.p_improved_given_above, 0.73, 0.02);
}

// ---------------------------------------------------------------- features

TEST(Features, PartitionWindows) {
  EXPECT_EQ(features::partition_windows(90, 7).window_count, 12);
  EXPECT_EQ(features::partition_windows(90, 3).window_count, 30);
  EXPECT_EQ(features::partition_windows(90, 30).window_count, 3);
  EXPECT_EQ(features::partition_windows(90, 90).window_count, 1);
  EXPECT_THROW(features::partition_windows(90, 91), InvalidArgument);
  EXPECT_THROW(features::partition_windows(90, 0), InvalidArgument);
  for (int n = 1; n <= 40; ++n)
    for (int k = 1; k <= n; ++k) {
      const auto s = features::partition_windows(n, k);
      ASSERT_GE(s.window_count, 1);
      EXPECT_LE(s.first_day(s.window_count - 1) + k, n);
      EXPECT_LT(n - (s.first_day(s.window_count - 1) + k), k);
    }
}

TEST(Features, SizesPerSlotCount) {
  using features::FeatureSet;
  EXPECT_EQ(features::feature_size(4, FeatureSet::all), 23);
  EXPECT_EQ(features::feature_size(6, FeatureSet::all), 25);
  EXPECT_EQ(features::feature_size(12, FeatureSet::all), 31);
  EXPECT_EQ(features::feature_size(6, FeatureSet::slots), 6);
  EXPECT_EQ(features::feature_size(6, FeatureSet::slots_demographics), 14);
  for (int m : {1, 2, 3, 4, 6, 8, 12, 24})
    EXPECT_EQ(features::feature_names(m, FeatureSet::all).size(), static_cast<std::size_t>(m + 19));
}

TEST(Features, ConstantGrid) {
  cohort::SlotGrid g(14, 6);
  for (int d = 0; d < 14; ++d)
    for (int j = 0; j < 6; ++j) g.set(d, j, 100.0);
  const auto own = features::participant_stats(g);
  EXPECT_DOUBLE_EQ(own.daily_mean, 600.0);
  EXPECT_DOUBLE_EQ(own.weekly_mean, 4200.0);
  features::CohortStats cs{500.0, 700.0, 250.0};
  cohort::DemographicProfile demo;
  demo.age = 44;
  demo.codes = {1, 2, 3, 0, 1, 2, 4};
  const auto f = features::extract_window_features(g, 7, 7, own, cs, demo);
  for (double v : f.slot_avgs) EXPECT_DOUBLE_EQ(v, 100.0);
  EXPECT_DOUBLE_EQ(f.extracted[0], 600.0);
  EXPECT_DOUBLE_EQ(f.extracted[1], 600.0);
  EXPECT_DOUBLE_EQ(f.extracted[2], 600.0);
  EXPECT_DOUBLE_EQ(f.extracted[3], 4200.0);
  EXPECT_DOUBLE_EQ(f.extracted[4], 4200.0);
  EXPECT_DOUBLE_EQ(f.extracted[5], 4200.0);
  EXPECT_EQ(f.extracted[6], 7.0);  // 600 > 2 * 250
  EXPECT_EQ(f.extracted[7], 0.0);  // 600 > 600 is false
  EXPECT_EQ(f.extracted[8], 0.0);
  EXPECT_EQ(f.extracted[9], 7.0);  // 600 > 500
  EXPECT_EQ(f.extracted[10], 0.0); // 600 > 700 is false
  const std::array<double, 8> expected_demo{1, 44, 2, 3, 0, 1, 2, 4};
  EXPECT_EQ(f.demographics, expected_demo);
}

TEST(Features, ShortWindowWeeklyIsWindowTotal) {
  cohort::SlotGrid g(9, 2);
  for (int d = 0; d < 9; ++d) {
    g.set(d, 0, d * 10.0);
    g.set(d, 1, 1.0);
  }
  const auto own = features::participant_stats(g);
  const auto f = features::extract_window_features(g, 3, 3, own, {}, {});
  EXPECT_DOUBLE_EQ(f.extracted[3], 30 + 40 + 50 + 3.0);
  EXPECT_DOUBLE_EQ(f.extracted[4], f.extracted[5]);
}

TEST(Features, RequiresImputedGrid) {
  cohort::SlotGrid g(7, 2);
  EXPECT_THROW(features::participant_stats(g), InvalidArgument);
}

TEST(Features, InvariantsOnSyntheticCohort) {
  const auto series = test_support::imputed_series(synth::generate_cohort(small_config(4, 40)), 6);
  const auto stats = features::compute_cohort_stats(series);
  for (int k : {3, 7, 30, 90}) {
    const auto data = features::build_sequences(series, k, features::FeatureSet::all, stats);
    ASSERT_EQ(data.size(), series.size());
    EXPECT_EQ(data.time_steps(), 90 / k);
    EXPECT_EQ(data.feature_dim(), 25);
    for (const auto& inst : data.instances)
      for (Eigen::Index t = 0; t < inst.steps.cols(); ++t) {
        const auto x = inst.steps.col(t);
        ASSERT_TRUE(x.allFinite());
        EXPECT_LE(x(8), x(6) + 1e-9);  // daily min <= daily avg <= daily max
        EXPECT_LE(x(6), x(7) + 1e-9);
        EXPECT_NEAR(x(11), k * x(6), 1e-9 * std::abs(x(11)));
        for (int c = 12; c <= 16; ++c) {
          EXPECT_GE(x(c), 0.0);
          EXPECT_LE(x(c), k);
          EXPECT_EQ(x(c), std::floor(x(c)));
        }
      }
  }
}

TEST(Features, ParticipantOrderDoesNotMatter) {
  auto series = test_support::imputed_series(synth::generate_cohort(small_config(6, 30)), 4);
  const auto stats = features::compute_cohort_stats(series);
  const auto before = features::build_sequences(series, 7, features::FeatureSet::all, stats);
  std::reverse(series.begin(), series.end());
  const auto rstats = features::compute_cohort_stats(series);
  EXPECT_NEAR(rstats.cohort_daily_mean, stats.cohort_daily_mean, 1e-9);
  const auto after = features::build_sequences(series, 7, features::FeatureSet::all, rstats);
  for (std::size_t i = 0; i < before.size(); ++i)
    EXPECT_LT((before.instances[i].steps - after.instances[before.size() - 1 - i].steps).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Features, SingleWindowMatchesFlatVector) {
  const auto series = test_support::imputed_series(synth::generate_cohort(small_config(8, 20)), 6);
  const auto stats = features::compute_cohort_stats(series);
  const auto data = features::build_sequences(series, 90, features::FeatureSet::all, stats);
  const auto flat = model::flatten(data);
  EXPECT_EQ(data.time_steps(), 1);
  EXPECT_EQ(flat.x.cols(), 25);
  for (std::size_t i = 0; i < data.size(); ++i)
    EXPECT_EQ((flat.x.row(static_cast<Eigen::Index>(i)).transpose() - data.instances[i].steps.col(0)).norm(), 0.0);
}

TEST(Features, MatchBruteForceOracle) {
  const auto cohort = synth::generate_cohort(small_config(12, 50));
  std::mt19937_64 rng(99);
  for (int m : {4, 6, 12}) {
    const auto series = test_support::imputed_series(cohort, m);
    const auto ref = oracle::build(cohort, m);
    ASSERT_EQ(ref.instances.size(), series.size());
    const auto stats = features::compute_cohort_stats(series);
    for (int k : {3, 7, 30}) {
      const auto data = features::build_sequences(series, k, features::FeatureSet::all, stats);
      for (int trial = 0; trial < 10; ++trial) {
        const auto i = std::uniform_int_distribution<std::size_t>(0, series.size() - 1)(rng);
        const int w = std::uniform_int_distribution<int>(0, 90 / k - 1)(rng);
        const auto expected = oracle::window(ref, i, w * k, k);
        const auto& got = data.instances[i].steps;
        ASSERT_EQ(static_cast<std::size_t>(got.rows()), expected.size());
        for (std::size_t f = 0; f < expected.size(); ++f)
          EXPECT_NEAR(got(static_cast<Eigen::Index>(f), w), expected[f], 1e-9 * std::max(1.0, std::abs(expected[f])))
              << "m=" << m << " k=" << k << " feature " << data.feature_names[f];
      }
    }
  }
}

TEST(Normalize, ZeroVarianceAndMeanColumns) {
  SequenceDataset d{{"a", "b"}, {}};
  for (int i = 0; i < 3; ++i) {
    Eigen::MatrixXd s(2, 2);
    s << 5, 5, i, -i;
    d.instances.push_back({"P", 0, s, false, 0});
  }
  const auto stats = fit_feature_stats(d);
  EXPECT_EQ(stats.stddev(0), 0.0);
  const auto n = normalize(d, stats);
  for (const auto& inst : n.instances) EXPECT_EQ(inst.steps.row(0).norm(), 0.0);
  Eigen::MatrixXd mean_col = Eigen::MatrixXd::Constant(2, 1, 0.0);
  mean_col(0, 0) = 5;
  EXPECT_EQ(standardize(mean_col, stats).norm(), 0.0);
  EXPECT_THROW(standardize(Eigen::MatrixXd::Zero(3, 1), stats), InvalidArgument);
}

TEST(FeatureDump, HeaderNamesExtractedFeatures) {
  const auto series = test_support::imputed_series(synth::generate_cohort(small_config(2, 10)), 6);
  const auto data = features::build_sequences(series, 30, features::FeatureSet::all,
                                              features::compute_cohort_stats(series));
  TempDir dir;
  features::write_feature_dump(data, dir / "f.csv");
  const auto text = test_support::read_file(dir / "f.csv");
  const auto header = text.substr(0, text.find('\n'));
  EXPECT_EQ(header.rfind("participant_id,period,label,window,slot_", 0), 0u) << header;
  for (auto n : features::kExtractedNames) EXPECT_NE(header.find(std::string(n)), std::string::npos);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), static_cast<long>(1 + 3 * data.size()));
}
