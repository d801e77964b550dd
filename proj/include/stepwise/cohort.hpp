#pragma once

// Study-file ingestion: raw step events and milestone BMIs become one
// day x slot grid per (participant, study period), with cohort-wide
// imputation of unrecorded cells and binary improvement labels.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/core.h>

#include "stepwise/error.hpp"
#include "stepwise/io.hpp"

namespace stepwise::cohort {

enum class Milestone { enrollment, midpoint, closeout };

inline std::string_view to_string(Milestone m) {
  switch (m) {
    case Milestone::enrollment: return "enrollment";
    case Milestone::midpoint: return "midpoint";
    case Milestone::closeout: return "closeout";
  }
  return "?";
}

inline std::optional<Milestone> parse_milestone(std::string_view s) {
  if (s == "enrollment") return Milestone::enrollment;
  if (s == "midpoint") return Milestone::midpoint;
  if (s == "closeout") return Milestone::closeout;
  return std::nullopt;
}

/// The eight demographic attributes in feature order. Index 1 (age) is
/// numeric; the others are categorical.
inline constexpr std::array<std::string_view, 8> kDemographicNames = {
    "gender", "age", "marital", "adults_in_household",
    "highest_degree", "hispanic_or_latino", "race", "occupation"};

inline constexpr std::array<std::string_view, 7> kCategoricalNames = {
    "gender", "marital", "adults_in_household", "highest_degree",
    "hispanic_or_latino", "race", "occupation"};

inline constexpr int kMinAge = 18;
inline constexpr int kMaxAge = 120;

/// Closed vocabularies for the categorical attributes, in kCategoricalNames
/// order. A value's ordinal code is its position in the list.
struct Vocabulary {
  std::array<std::vector<std::string>, 7> values;

  std::optional<int> code(std::size_t attribute, std::string_view value) const {
    const auto& v = values.at(attribute);
    const auto it = std::find(v.begin(), v.end(), value);
    if (it == v.end()) return std::nullopt;
    return static_cast<int>(it - v.begin());
  }

  static Vocabulary defaults() {
    Vocabulary v;
    v.values = {{{"female", "male"},
                 {"single", "married", "divorced", "widowed"},
                 {"1", "2", "3", "4+"},
                 {"high_school", "some_college", "bachelor", "graduate"},
                 {"no", "yes"},
                 {"white", "black", "asian", "other"},
                 {"employed", "self_employed", "unemployed", "retired", "student"}}};
    return v;
  }
};

/// How study periods map onto labeled instances.
enum class PeriodPolicy {
  halves,          // enrollment->midpoint over period 0, midpoint->closeout over period 1
  halves_or_full,  // as halves; a participant lacking midpoint contributes enrollment->closeout
};

struct Manifest {
  std::chrono::sys_days study_start{};
  int days = 90;      // n, days per period
  int slots = 6;      // m
  double crt = 0.05;  // relative BMI reduction that counts as improvement
  int periods = 2;    // 1: enrollment->closeout, 2: split at midpoint
  PeriodPolicy policy = PeriodPolicy::halves;
  int min_events_per_period = 1;
  Vocabulary vocabulary = Vocabulary::defaults();

  int horizon_days() const { return days * periods; }
};

inline void validate(const Manifest& m) {
  if (m.days < 1) throw InvalidArgument("manifest: days must be >= 1");
  if (m.slots < 1 || 24 % m.slots != 0)
    throw InvalidArgument(fmt::format("manifest: slots={} must divide 24", m.slots));
  if (!(m.crt > 0.0 && m.crt < 1.0)) throw InvalidArgument("manifest: crt must lie in (0,1)");
  if (m.periods != 1 && m.periods != 2) throw InvalidArgument("manifest: periods must be 1 or 2");
  if (m.min_events_per_period < 0) throw InvalidArgument("manifest: min_events_per_period < 0");
  for (std::size_t a = 0; a < m.vocabulary.values.size(); ++a)
    if (m.vocabulary.values[a].empty())
      throw InvalidArgument(fmt::format("manifest: empty vocabulary for {}", kCategoricalNames[a]));
}

inline Manifest load_manifest(const std::filesystem::path& path) {
  namespace pt = boost::property_tree;
  if (!std::filesystem::exists(path)) throw MissingFileError(path.string());
  pt::ptree tree;
  try {
    pt::read_ini(path.string(), tree);
  } catch (const pt::ini_parser_error& e) {
    throw ParseError(path.string(), e.line(), e.message());
  }
  Manifest m;
  const auto fail = [&](const std::string& what) -> ParseError {
    return ParseError(path.string(), 0, what);
  };
  try {
    const auto start = tree.get<std::string>("study.start");
    const auto day = io::parse_date(start);
    if (!day) throw fail(fmt::format("study.start '{}' is not YYYY-MM-DD", start));
    m.study_start = *day;
    m.days = tree.get<int>("study.days");
    m.slots = tree.get<int>("study.slots");
    m.crt = tree.get<double>("study.crt");
    m.periods = tree.get<int>("study.periods", 2);
    m.min_events_per_period = tree.get<int>("study.min_events_per_period", 1);
    const auto policy = tree.get<std::string>("study.period_policy", "halves");
    if (policy == "halves") m.policy = PeriodPolicy::halves;
    else if (policy == "halves_or_full") m.policy = PeriodPolicy::halves_or_full;
    else throw fail(fmt::format("unknown period_policy '{}'", policy));
    if (auto vocab = tree.get_child_optional("vocabulary")) {
      for (std::size_t a = 0; a < kCategoricalNames.size(); ++a) {
        const auto key = std::string(kCategoricalNames[a]);
        if (auto text = vocab->get_optional<std::string>(key)) {
          std::vector<std::string> values;
          for (auto f : io::split_fields(*text))
            if (!f.empty()) values.emplace_back(f);
          m.vocabulary.values[a] = std::move(values);
        }
      }
    }
  } catch (const pt::ptree_error& e) {
    throw fail(e.what());
  }
  try {
    validate(m);
  } catch (const InvalidArgument& e) {
    throw fail(e.what());
  }
  return m;
}

inline std::string to_ini(const Manifest& m) {
  std::string out = "[study]\n";
  out += fmt::format("start = {}\n", io::format_date(m.study_start));
  out += fmt::format("days = {}\n", m.days);
  out += fmt::format("slots = {}\n", m.slots);
  out += fmt::format("crt = {}\n", io::format_double(m.crt));
  out += fmt::format("periods = {}\n", m.periods);
  out += fmt::format("period_policy = {}\n",
                     m.policy == PeriodPolicy::halves ? "halves" : "halves_or_full");
  out += fmt::format("min_events_per_period = {}\n", m.min_events_per_period);
  out += "\n[vocabulary]\n";
  for (std::size_t a = 0; a < kCategoricalNames.size(); ++a) {
    std::string joined;
    for (const auto& v : m.vocabulary.values[a]) joined += (joined.empty() ? "" : ",") + v;
    out += fmt::format("{} = {}\n", kCategoricalNames[a], joined);
  }
  return out;
}

struct DemographicProfile {
  int age = 0;
  std::array<int, 7> codes{};  // ordinal codes, kCategoricalNames order

  /// Encoded in kDemographicNames order: gender, age, then the rest.
  std::array<double, 8> encoded() const {
    return {double(codes[0]), double(age),      double(codes[1]), double(codes[2]),
            double(codes[3]), double(codes[4]), double(codes[5]), double(codes[6])};
  }
};

struct ObservationEvent {
  std::string participant_id;
  io::Timestamp timestamp;
  std::int64_t step_count = 0;
};

/// n_days x m_slots grid of step counts; NaN marks an unrecorded cell.
class SlotGrid {
 public:
  SlotGrid() = default;
  SlotGrid(int days, int slots)
      : days_(days), slots_(slots),
        cells_(static_cast<std::size_t>(days) * slots, std::numeric_limits<double>::quiet_NaN()) {}

  int days() const noexcept { return days_; }
  int slots() const noexcept { return slots_; }

  std::optional<double> at(int day, int slot) const {
    const double v = cells_[index(day, slot)];
    if (std::isnan(v)) return std::nullopt;
    return v;
  }
  bool present(int day, int slot) const { return !std::isnan(cells_[index(day, slot)]); }
  /// Value of a cell known to be present (imputed grids).
  double value(int day, int slot) const { return cells_[index(day, slot)]; }
  void set(int day, int slot, double v) { cells_[index(day, slot)] = v; }
  void clear(int day, int slot) { cells_[index(day, slot)] = std::numeric_limits<double>::quiet_NaN(); }
  void add(int day, int slot, double v) {
    double& c = cells_[index(day, slot)];
    c = std::isnan(c) ? v : c + v;
  }

  double day_total(int day) const {
    double s = 0.0;
    for (int j = 0; j < slots_; ++j) s += cells_[index(day, j)];
    return s;
  }

  std::size_t recorded_cells() const {
    return static_cast<std::size_t>(
        std::count_if(cells_.begin(), cells_.end(), [](double v) { return !std::isnan(v); }));
  }
  bool complete() const { return recorded_cells() == cells_.size(); }

  bool operator==(const SlotGrid& o) const {
    if (days_ != o.days_ || slots_ != o.slots_) return false;
    for (std::size_t i = 0; i < cells_.size(); ++i) {
      const bool a = std::isnan(cells_[i]), b = std::isnan(o.cells_[i]);
      if (a != b || (!a && cells_[i] != o.cells_[i])) return false;
    }
    return true;
  }

 private:
  std::size_t index(int day, int slot) const {
    return static_cast<std::size_t>(day) * slots_ + slot;
  }
  int days_ = 0;
  int slots_ = 0;
  std::vector<double> cells_;
};

/// One labeled instance: a participant's grid over one study period.
struct ParticipantSeries {
  std::string participant_id;
  int period = 0;  // index of the n-day period the grid covers
  SlotGrid grid;
  DemographicProfile demographics;
  double bmi_start = 0.0;
  double bmi_end = 0.0;
  bool improved = false;  // label at the manifest CRT

  int n_days() const { return grid.days(); }
  int m_slots() const { return grid.slots(); }
};

/// Slot index of a minute of the day for m equal, midnight-anchored,
/// left-closed slots.
inline int slot_of(int minute_of_day, int m) { return minute_of_day * m / 1440; }

struct AggregateResult {
  SlotGrid grid;
  std::size_t skipped = 0;  // events outside [study_start, study_start + n)
};

/// Sums events into an n x m grid anchored at `study_start`. Cells without
/// any event stay absent.
inline AggregateResult slot_aggregate(std::span<const ObservationEvent> events, int m,
                                      std::chrono::sys_days study_start, int n) {
  if (m < 1 || 24 % m != 0) throw InvalidArgument(fmt::format("slot count {} must divide 24", m));
  if (n < 1) throw InvalidArgument("study length must be >= 1 day");
  AggregateResult out{SlotGrid(n, m), 0};
  for (const auto& e : events) {
    const auto day = (e.timestamp.day - study_start).count();
    if (day < 0 || day >= n) {
      ++out.skipped;
      continue;
    }
    out.grid.add(static_cast<int>(day), slot_of(e.timestamp.minute_of_day, m),
                 static_cast<double>(e.step_count));
  }
  return out;
}

struct ImputeReport {
  std::size_t cells_filled = 0;
  std::vector<int> degenerate_slots;  // columns with no observation anywhere (filled with 0)
};

/// Replaces each absent cell with the mean of all recorded values in the same
/// slot column across every grid. Recorded cells are untouched.
inline ImputeReport impute(std::span<SlotGrid* const> grids) {
  ImputeReport report;
  if (grids.empty()) return report;
  const int m = grids.front()->slots();
  std::vector<double> sum(m, 0.0);
  std::vector<std::size_t> count(m, 0);
  for (const SlotGrid* g : grids) {
    if (g->slots() != m) throw InvalidArgument("impute: grids disagree on slot count");
    for (int d = 0; d < g->days(); ++d)
      for (int j = 0; j < m; ++j)
        if (auto v = g->at(d, j)) {
          sum[j] += *v;
          ++count[j];
        }
  }
  std::vector<double> mean(m, 0.0);
  for (int j = 0; j < m; ++j) {
    if (count[j] == 0) report.degenerate_slots.push_back(j);
    else mean[j] = sum[j] / static_cast<double>(count[j]);
  }
  for (SlotGrid* g : grids)
    for (int d = 0; d < g->days(); ++d)
      for (int j = 0; j < m; ++j)
        if (!g->present(d, j)) {
          g->set(d, j, mean[j]);
          ++report.cells_filled;
        }
  return report;
}

inline ImputeReport impute(std::vector<SlotGrid>& grids) {
  std::vector<SlotGrid*> ptrs;
  for (auto& g : grids) ptrs.push_back(&g);
  return impute(std::span<SlotGrid* const>(ptrs));
}

inline ImputeReport impute(std::vector<ParticipantSeries>& cohort) {
  std::vector<SlotGrid*> ptrs;
  for (auto& s : cohort) ptrs.push_back(&s.grid);
  return impute(std::span<SlotGrid* const>(ptrs));
}

/// True iff the relative BMI reduction reaches `crt` (inclusive).
inline bool label(double bmi_start, double bmi_end, double crt) {
  if (!(bmi_start > 0.0) || !(bmi_end > 0.0))
    throw InvalidArgument(fmt::format("BMI must be positive (got {}, {})", bmi_start, bmi_end));
  if (!(crt > 0.0 && crt < 1.0)) throw InvalidArgument("crt must lie in (0,1)");
  return (bmi_start - bmi_end) / bmi_start >= crt;
}

/// Everything known about one participant before assembly into instances.
struct RawParticipant {
  std::string id;
  std::vector<ObservationEvent> events;
  std::map<Milestone, double> bmi;
  std::optional<DemographicProfile> demographics;
};

struct LoadReport {
  std::size_t participants = 0;
  std::size_t instances = 0;
  std::size_t events_read = 0;
  std::size_t events_out_of_range = 0;
  std::size_t duplicate_events = 0;
  std::size_t dropped_missing_bmi = 0;          // candidate instances
  std::size_t dropped_insufficient_events = 0;  // candidate instances
  std::size_t dropped_missing_demographics = 0; // participants
  std::vector<std::string> warnings;

  void merge(const LoadReport& o) {
    participants += o.participants;
    instances += o.instances;
    events_read += o.events_read;
    events_out_of_range += o.events_out_of_range;
    duplicate_events += o.duplicate_events;
    dropped_missing_bmi += o.dropped_missing_bmi;
    dropped_insufficient_events += o.dropped_insufficient_events;
    dropped_missing_demographics += o.dropped_missing_demographics;
    warnings.insert(warnings.end(), o.warnings.begin(), o.warnings.end());
  }
};

struct LoadedCohort {
  std::vector<ParticipantSeries> series;
  LoadReport report;
};

/// Turns one participant's raw records into zero, one or two labeled
/// instances according to the manifest's period layout. Grids are not
/// imputed here.
inline std::vector<ParticipantSeries> assemble_participant(RawParticipant raw, const Manifest& manifest,
                                                           int m, LoadReport& report) {
  ++report.participants;
  report.events_read += raw.events.size();

  // Duplicate (participant, timestamp): keep the larger count.
  std::stable_sort(raw.events.begin(), raw.events.end(),
                   [](const auto& a, const auto& b) { return a.timestamp < b.timestamp; });
  std::vector<ObservationEvent> events;
  events.reserve(raw.events.size());
  for (auto& e : raw.events) {
    if (!events.empty() && events.back().timestamp == e.timestamp) {
      ++report.duplicate_events;
      report.warnings.push_back(fmt::format("duplicate event {} @ {}: kept max({}, {})", raw.id,
                                            io::format_timestamp(e.timestamp),
                                            events.back().step_count, e.step_count));
      events.back().step_count = std::max(events.back().step_count, e.step_count);
      continue;
    }
    events.push_back(std::move(e));
  }
  for (const auto& e : events) {
    const auto day = (e.timestamp.day - manifest.study_start).count();
    if (day < 0 || day >= manifest.horizon_days()) ++report.events_out_of_range;
  }

  if (!raw.demographics) {
    ++report.dropped_missing_demographics;
    report.warnings.push_back(fmt::format("participant {} has no demographics row; dropped", raw.id));
    return {};
  }

  struct Candidate {
    int period;
    Milestone from, to;
  };
  std::vector<Candidate> candidates;
  const auto has = [&](Milestone ms) { return raw.bmi.count(ms) > 0; };
  if (manifest.periods == 1) {
    candidates.push_back({0, Milestone::enrollment, Milestone::closeout});
  } else if (manifest.policy == PeriodPolicy::halves_or_full && !has(Milestone::midpoint) &&
             has(Milestone::enrollment) && has(Milestone::closeout)) {
    candidates.push_back({1, Milestone::enrollment, Milestone::closeout});
  } else {
    candidates.push_back({0, Milestone::enrollment, Milestone::midpoint});
    candidates.push_back({1, Milestone::midpoint, Milestone::closeout});
  }

  std::vector<ParticipantSeries> out;
  for (const auto& c : candidates) {
    if (!has(c.from) || !has(c.to)) {
      ++report.dropped_missing_bmi;
      report.warnings.push_back(fmt::format("participant {} period {}: missing {} BMI; dropped", raw.id,
                                            c.period, has(c.from) ? to_string(c.to) : to_string(c.from)));
      continue;
    }
    const auto start = manifest.study_start + std::chrono::days{c.period * manifest.days};
    std::size_t in_period = 0;
    for (const auto& e : events) {
      const auto d = (e.timestamp.day - start).count();
      if (d >= 0 && d < manifest.days) ++in_period;
    }
    if (in_period < static_cast<std::size_t>(manifest.min_events_per_period)) {
      ++report.dropped_insufficient_events;
      report.warnings.push_back(fmt::format("participant {} period {}: {} events < {}; dropped", raw.id,
                                            c.period, in_period, manifest.min_events_per_period));
      continue;
    }
    ParticipantSeries s;
    s.participant_id = raw.id;
    s.period = c.period;
    s.grid = slot_aggregate(events, m, start, manifest.days).grid;
    s.demographics = *raw.demographics;
    s.bmi_start = raw.bmi.at(c.from);
    s.bmi_end = raw.bmi.at(c.to);
    s.improved = label(s.bmi_start, s.bmi_end, manifest.crt);
    out.push_back(std::move(s));
    ++report.instances;
  }
  return out;
}

struct CohortFiles {
  std::filesystem::path events, milestones, demographics, manifest;

  static CohortFiles in_directory(const std::filesystem::path& dir) {
    return {dir / "events.csv", dir / "milestones.csv", dir / "demographics.csv", dir / "manifest.ini"};
  }
};

inline const std::vector<std::string>& events_header() {
  static const std::vector<std::string> h{"participant_id", "timestamp", "step_count"};
  return h;
}
inline const std::vector<std::string>& milestones_header() {
  static const std::vector<std::string> h{"participant_id", "milestone", "bmi"};
  return h;
}
inline const std::vector<std::string>& demographics_header() {
  static const std::vector<std::string> h{"participant_id", "gender", "age", "marital",
                                          "adults_in_household", "highest_degree",
                                          "hispanic_or_latino", "race", "occupation"};
  return h;
}

/// Reads the three study CSVs and builds unimputed instances, one per
/// (participant, period) with both boundary BMIs. `m` overrides the
/// manifest's slot count when given.
inline LoadedCohort load_cohort(const CohortFiles& files, const Manifest& manifest,
                                std::optional<int> m = std::nullopt) {
  validate(manifest);
  const int slots = m.value_or(manifest.slots);
  if (slots < 1 || 24 % slots != 0)
    throw InvalidArgument(fmt::format("slot count {} must divide 24", slots));

  std::map<std::string, RawParticipant> people;
  const auto person = [&](std::string_view id) -> RawParticipant& {
    auto& p = people[std::string(id)];
    if (p.id.empty()) p.id = std::string(id);
    return p;
  };
  std::vector<std::string_view> f;

  {
    io::CsvReader csv(files.demographics, demographics_header());
    while (csv.next(f)) {
      if (f[0].empty()) csv.fail("empty participant_id");
      auto& p = person(f[0]);
      if (p.demographics) csv.fail(fmt::format("duplicate demographics for {}", f[0]));
      DemographicProfile d;
      const auto age = io::parse_number<int>(f[2]);
      if (!age || *age < kMinAge || *age > kMaxAge)
        csv.fail(fmt::format("age '{}' outside [{}, {}]", f[2], kMinAge, kMaxAge));
      d.age = *age;
      const std::array<std::size_t, 7> columns{1, 3, 4, 5, 6, 7, 8};
      for (std::size_t a = 0; a < 7; ++a) {
        const auto code = manifest.vocabulary.code(a, f[columns[a]]);
        if (!code)
          csv.fail(fmt::format("{} value '{}' not in manifest vocabulary", kCategoricalNames[a],
                               f[columns[a]]));
        d.codes[a] = *code;
      }
      p.demographics = d;
    }
  }
  {
    io::CsvReader csv(files.milestones, milestones_header());
    while (csv.next(f)) {
      if (f[0].empty()) csv.fail("empty participant_id");
      const auto ms = parse_milestone(f[1]);
      if (!ms) csv.fail(fmt::format("unknown milestone '{}'", f[1]));
      const auto bmi = io::parse_number<double>(f[2]);
      if (!bmi || !std::isfinite(*bmi) || *bmi <= 0.0) csv.fail(fmt::format("bmi '{}' is not positive", f[2]));
      auto& p = person(f[0]);
      if (!p.bmi.emplace(*ms, *bmi).second)
        csv.fail(fmt::format("duplicate {} milestone for {}", f[1], f[0]));
    }
  }
  {
    io::CsvReader csv(files.events, events_header());
    while (csv.next(f)) {
      if (f[0].empty()) csv.fail("empty participant_id");
      const auto ts = io::parse_timestamp(f[1]);
      if (!ts) csv.fail(fmt::format("bad timestamp '{}'", f[1]));
      const auto count = io::parse_number<std::int64_t>(f[2]);
      if (!count || *count < 0) csv.fail(fmt::format("step_count '{}' is not a non-negative integer", f[2]));
      person(f[0]).events.push_back({std::string(f[0]), *ts, *count});
    }
  }

  LoadedCohort out;
  for (auto& [id, raw] : people) {
    auto series = assemble_participant(std::move(raw), manifest, slots, out.report);
    for (auto& s : series) out.series.push_back(std::move(s));
  }
  return out;
}

}  // namespace stepwise::cohort
