#pragma once

// Synthetic study cohort with a planted activity -> BMI effect.
//
// Every participant draws a personal activity level; each study period is
// then classified "active" when the participant's (imputed) daily average
// steps exceed the cohort mean. Within a period the activity follows a
// linear up- or down-ramp around the participant's level, and the BMI
// outcome follows the ramp direction with probability `trend_fidelity`.
// Ramp prevalence per activity group is set so that
//   P(improved | active)   = p_drop_active
//   P(improved | inactive) = p_drop_inactive
// holds exactly in expectation. Demographics are drawn independently of
// activity and outcome.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <fmt/core.h>

#include "stepwise/cohort.hpp"
#include "stepwise/error.hpp"
#include "stepwise/io.hpp"

namespace stepwise::synth {

/// Hourly step weights, shaped after the hourly totals participants logged
/// in the original study (busiest 11:00-16:00, quietest 00:00-05:00).
inline std::array<double, 24> default_diurnal_profile() {
  std::array<double, 24> w = {834,   384,   240,   224,   472,   1500,  3800,  6500,
                              9000,  10800, 12400, 13860, 14527, 14221, 14061, 13528,
                              12900, 12200, 10900, 9000,  6800,  4600,  2800,  1500};
  const double s = std::accumulate(w.begin(), w.end(), 0.0);
  for (auto& v : w) v /= s;
  return w;
}

struct SynthConfig {
  int n_participants = 300;
  int n_days = 90;  // per period
  int periods = 2;
  int m = 6;        // slot count declared in the manifest
  std::uint64_t seed = 0;
  double p_drop_active = 0.73;
  double p_drop_inactive = 0.30;
  double base_log_mean = std::log(7000.0);  // participant daily steps, log-normal
  double base_log_sigma = 0.25;
  double period_log_sigma = 0.10;  // per-period shift of the personal level
  double daily_log_sigma = 0.25;   // day-to-day variation
  std::array<double, 24> diurnal_profile = default_diurnal_profile();
  double missing_rate = 0.05;  // probability that a whole day is unrecorded
  double drop_magnitude_droppers = 0.07;
  double drop_magnitude_non_droppers = 0.01;
  double non_dropper_sigma = 0.015;
  double dropout_fraction = 227.0 / 275.0;  // participants without a closeout BMI
  double trend_strength = 0.3;   // relative amplitude of the in-period ramp
  double trend_fidelity = 0.97;  // P(outcome follows ramp direction)
  double crt = 0.05;
  std::chrono::sys_days study_start = std::chrono::sys_days{std::chrono::year{2018} / 1 / 1};
};

/// Relative BMI changes stay this far from the CRT so labels survive text
/// round-trips.
inline constexpr double kLabelMargin = 0.002;

inline void validate(const SynthConfig& c) {
  const auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (c.n_participants < 2) throw InvalidArgument("synth: n_participants must be >= 2");
  if (c.n_days < 1) throw InvalidArgument("synth: n_days must be >= 1");
  if (c.periods != 1 && c.periods != 2) throw InvalidArgument("synth: periods must be 1 or 2");
  if (c.m < 1 || 24 % c.m != 0) throw InvalidArgument("synth: m must divide 24");
  if (!prob(c.p_drop_active) || !prob(c.p_drop_inactive) || !prob(c.missing_rate) ||
      !prob(c.dropout_fraction) || !prob(c.trend_fidelity))
    throw InvalidArgument("synth: probabilities must lie in [0,1]");
  double sum = 0.0;
  for (double w : c.diurnal_profile) {
    if (!(w >= 0.0)) throw InvalidArgument("synth: diurnal weights must be non-negative");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw InvalidArgument("synth: diurnal weights must sum to 1");
  const double lo = 1.0 - c.trend_fidelity, hi = c.trend_fidelity;
  for (double p : {c.p_drop_active, c.p_drop_inactive})
    if (p < lo || p > hi)
      throw InvalidArgument(fmt::format("synth: drop probability {} outside [{}, {}] reachable at trend_fidelity {}",
                                        p, lo, hi, c.trend_fidelity));
  if (!(c.crt > 0.0 && c.crt < 1.0)) throw InvalidArgument("synth: crt must lie in (0,1)");
  if (c.trend_strength < 0.0 || c.trend_strength >= 1.0) throw InvalidArgument("synth: trend_strength in [0,1)");
}

struct SyntheticParticipant {
  std::string id;
  std::uint32_t index = 0;
  cohort::DemographicProfile demographics;
  bool dropout = false;
  std::array<std::optional<double>, 3> bmi;  // enrollment, midpoint, closeout
  /// Expected daily totals over the whole horizon; NaN = unrecorded day.
  std::vector<double> expected_daily;
  std::vector<int> ramp;      // per period: +1 up, -1 down
  std::vector<bool> active;   // per period, relative to the cohort mean
  std::vector<bool> improved; // per period
};

struct SyntheticCohort {
  SynthConfig config;
  cohort::Manifest manifest;
  std::vector<SyntheticParticipant> participants;  // sorted by id
};

namespace detail {

enum Stream : std::uint32_t { kProfile = 1, kEvents = 2 };

inline std::mt19937_64 participant_rng(std::uint64_t seed, std::uint32_t index, Stream stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), index,
                    static_cast<std::uint32_t>(stream)};
  return std::mt19937_64(seq);
}

inline double uniform(std::mt19937_64& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

inline int categorical(std::mt19937_64& rng, std::initializer_list<double> weights) {
  std::discrete_distribution<int> d(weights);
  return d(rng);
}

/// Per-participant draws that do not depend on the rest of the cohort.
struct Draws {
  double level = 0.0;
  double dropout_key = 0.0;
  double bmi0 = 0.0;
  std::vector<double> base_daily;  // NaN when unrecorded
  std::vector<double> ramp_u, outcome_u, change;
};

inline Draws draw_participant(const SynthConfig& c, std::uint32_t index, cohort::DemographicProfile& demo) {
  auto rng = participant_rng(c.seed, index, kProfile);
  Draws d;
  // Demographics: independent of activity and outcome.
  demo.codes[0] = categorical(rng, {0.6, 0.4});
  const bool older = uniform(rng) < 0.498;
  const double age = std::normal_distribution<double>(older ? 61.0 : 38.0, 7.0)(rng);
  demo.age = std::clamp(static_cast<int>(std::lround(age)), older ? 51 : cohort::kMinAge, older ? 90 : 50);
  demo.codes[1] = categorical(rng, {0.3, 0.5, 0.15, 0.05});
  demo.codes[2] = categorical(rng, {0.25, 0.45, 0.2, 0.1});
  demo.codes[3] = categorical(rng, {0.25, 0.3, 0.3, 0.15});
  demo.codes[4] = categorical(rng, {0.85, 0.15});
  demo.codes[5] = categorical(rng, {0.6, 0.2, 0.1, 0.1});
  demo.codes[6] = categorical(rng, {0.55, 0.1, 0.1, 0.15, 0.1});

  d.level = std::exp(std::normal_distribution<double>(c.base_log_mean, c.base_log_sigma)(rng));
  d.dropout_key = uniform(rng);
  d.bmi0 = std::clamp(std::normal_distribution<double>(32.0, 4.0)(rng), 20.0, 55.0);

  std::normal_distribution<double> daily(0.0, c.daily_log_sigma);
  std::normal_distribution<double> period_shift(0.0, c.period_log_sigma);
  d.base_daily.resize(static_cast<std::size_t>(c.n_days) * c.periods);
  for (int p = 0; p < c.periods; ++p) {
    const double level = d.level * std::exp(period_shift(rng));
    for (int day = 0; day < c.n_days; ++day) {
      const bool missing = day > 0 && uniform(rng) < c.missing_rate;
      const double v = level * std::exp(daily(rng) - 0.5 * c.daily_log_sigma * c.daily_log_sigma);
      d.base_daily[p * c.n_days + day] = missing ? std::numeric_limits<double>::quiet_NaN() : v;
    }
    d.ramp_u.push_back(uniform(rng));
    d.outcome_u.push_back(uniform(rng));
  }
  // Relative BMI change magnitudes: [improving draw, non-improving draw] per period.
  const double floor = c.crt + kLabelMargin;
  const double ceiling = c.crt - kLabelMargin;
  std::exponential_distribution<double> excess(1.0 / std::max(1e-6, c.drop_magnitude_droppers - floor));
  std::normal_distribution<double> stay(c.drop_magnitude_non_droppers, c.non_dropper_sigma);
  for (int p = 0; p < c.periods; ++p) {
    d.change.push_back(std::min(floor + excess(rng), 0.5));
    double r = stay(rng);
    for (int tries = 0; r > ceiling && tries < 64; ++tries) r = stay(rng);
    d.change.push_back(std::min(r, ceiling));
  }
  return d;
}

}  // namespace detail

/// Hourly step events of one participant, in timestamp order. Recorded days
/// carry all 24 hours (zero counts included).
inline std::vector<cohort::ObservationEvent> participant_events(const SyntheticCohort& cohort,
                                                                const SyntheticParticipant& p) {
  const auto& c = cohort.config;
  auto rng = detail::participant_rng(c.seed, p.index, detail::kEvents);
  std::vector<cohort::ObservationEvent> events;
  std::uniform_int_distribution<int> minute(0, 59);
  for (std::size_t day = 0; day < p.expected_daily.size(); ++day) {
    const double total = p.expected_daily[day];
    if (std::isnan(total)) continue;
    for (int h = 0; h < 24; ++h) {
      const double mean = total * c.diurnal_profile[h];
      const std::int64_t count = mean > 0.0 ? std::poisson_distribution<std::int64_t>(mean)(rng) : 0;
      const int offset = minute(rng);
      events.push_back({p.id, {c.study_start + std::chrono::days{static_cast<int>(day)}, h * 60 + offset}, count});
    }
  }
  return events;
}

/// Days covered by the in-period ramp: the complete weeks of the period.
inline int ramp_span(int n_days) { return n_days >= 7 ? n_days / 7 * 7 : n_days; }

inline SyntheticCohort generate_cohort(const SynthConfig& config) {
  validate(config);
  SyntheticCohort out;
  out.config = config;
  out.manifest.study_start = config.study_start;
  out.manifest.days = config.n_days;
  out.manifest.slots = config.m;
  out.manifest.crt = config.crt;
  out.manifest.periods = config.periods;
  out.manifest.policy = cohort::PeriodPolicy::halves;
  out.manifest.min_events_per_period = 1;

  const int n = config.n_participants;
  const int width = std::max(4, static_cast<int>(std::to_string(n).size()));
  std::vector<detail::Draws> draws(n);
  out.participants.resize(n);
  for (int i = 0; i < n; ++i) {
    auto& p = out.participants[i];
    p.index = static_cast<std::uint32_t>(i);
    p.id = fmt::format("P{:0{}d}", i + 1, width);
    draws[i] = detail::draw_participant(config, p.index, p.demographics);
  }

  // Exactly round(fraction * n) participants leave after the midpoint.
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return draws[a].dropout_key < draws[b].dropout_key; });
  const int dropouts = static_cast<int>(std::lround(config.dropout_fraction * n));
  for (int r = 0; r < dropouts; ++r) out.participants[order[r]].dropout = true;

  // Dropouts record nothing after the midpoint.
  const auto included = [&](int i, int period) {
    return !(out.participants[i].dropout && period == config.periods - 1);
  };

  // Cohort mean daily total over recorded days of included periods. With
  // whole-day missingness this is also the imputed-grid DAS mean.
  double total = 0.0, recorded = 0.0;
  for (int i = 0; i < n; ++i)
    for (int p = 0; p < config.periods; ++p) {
      if (!included(i, p)) continue;
      for (int d = 0; d < config.n_days; ++d) {
        const double v = draws[i].base_daily[p * config.n_days + d];
        if (!std::isnan(v)) {
          total += v;
          recorded += 1.0;
        }
      }
    }
  const double cohort_mean = total / recorded;

  const double hi = config.trend_fidelity, lo = 1.0 - config.trend_fidelity;
  const auto p_up = [&](double p_drop) { return hi > lo ? (p_drop - lo) / (hi - lo) : 0.5; };

  for (int i = 0; i < n; ++i) {
    auto& part = out.participants[i];
    const auto& d = draws[i];
    part.expected_daily.assign(d.base_daily.size(), std::numeric_limits<double>::quiet_NaN());
    double bmi = d.bmi0;
    part.bmi[0] = bmi;
    for (int p = 0; p < config.periods; ++p) {
      if (!included(i, p)) {
        part.ramp.push_back(0);
        part.active.push_back(false);
        part.improved.push_back(false);
        continue;
      }
      double own = 0.0;
      int missing = 0;
      for (int day = 0; day < config.n_days; ++day) {
        const double v = d.base_daily[p * config.n_days + day];
        if (std::isnan(v)) ++missing;
        else own += v;
      }
      const double das = (own + missing * cohort_mean) / config.n_days;
      const bool active = das > cohort_mean;
      const int ramp = d.ramp_u[p] < p_up(active ? config.p_drop_active : config.p_drop_inactive) ? 1 : -1;
      const bool improved = d.outcome_u[p] < (ramp > 0 ? hi : lo);

      // Apply the ramp, then rescale so the period's recorded total (and so
      // its DAS) is unchanged. The ramp spans whole weeks only: days past the
      // last complete week stay flat, so up and down ramps are mirror images
      // for every order-free window statistic.
      const int span = ramp_span(config.n_days);
      double ramped = 0.0;
      for (int day = 0; day < config.n_days; ++day) {
        const double v = d.base_daily[p * config.n_days + day];
        if (std::isnan(v)) continue;
        const double pos = day < span && span > 1 ? 2.0 * day / (span - 1) - 1.0 : 0.0;
        const double w = v * (1.0 + ramp * config.trend_strength * pos);
        part.expected_daily[p * config.n_days + day] = w;
        ramped += w;
      }
      if (ramped > 0.0)
        for (int day = 0; day < config.n_days; ++day) {
          auto& w = part.expected_daily[p * config.n_days + day];
          if (!std::isnan(w)) w *= own / ramped;
        }

      const double change = d.change[2 * p + (improved ? 0 : 1)];
      bmi *= 1.0 - change;
      part.bmi[config.periods == 1 ? 2 : p + 1] = bmi;
      part.ramp.push_back(ramp);
      part.active.push_back(active);
      part.improved.push_back(improved);
    }
    if (part.dropout) part.bmi[2].reset();
  }
  return out;
}

inline cohort::RawParticipant to_raw(const SyntheticCohort& cohort, const SyntheticParticipant& p) {
  cohort::RawParticipant raw;
  raw.id = p.id;
  raw.events = participant_events(cohort, p);
  const std::array<cohort::Milestone, 3> ms{cohort::Milestone::enrollment, cohort::Milestone::midpoint,
                                            cohort::Milestone::closeout};
  for (std::size_t k = 0; k < 3; ++k)
    if (p.bmi[k]) raw.bmi[ms[k]] = *p.bmi[k];
  raw.demographics = p.demographics;
  return raw;
}

/// Builds the unimputed instances directly, one participant at a time,
/// exactly as load_cohort would from the written files.
inline cohort::LoadedCohort materialize(const SyntheticCohort& cohort, std::optional<int> m = std::nullopt) {
  cohort::LoadedCohort out;
  const int slots = m.value_or(cohort.manifest.slots);
  for (const auto& p : cohort.participants) {
    auto series = cohort::assemble_participant(to_raw(cohort, p), cohort.manifest, slots, out.report);
    for (auto& s : series) out.series.push_back(std::move(s));
  }
  return out;
}

/// Writes events.csv, milestones.csv, demographics.csv and manifest.ini.
inline void write_cohort(const SyntheticCohort& cohort, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto files = cohort::CohortFiles::in_directory(dir);
  const auto& vocab = cohort.manifest.vocabulary;
  {
    auto out = io::open_output(files.demographics);
    out << "participant_id,gender,age,marital,adults_in_household,highest_degree,hispanic_or_latino,race,occupation\n";
    for (const auto& p : cohort.participants) {
      const auto& c = p.demographics.codes;
      out << p.id << ',' << vocab.values[0][c[0]] << ',' << p.demographics.age;
      for (std::size_t a = 1; a < 7; ++a) out << ',' << vocab.values[a][c[a]];
      out << '\n';
    }
  }
  {
    auto out = io::open_output(files.milestones);
    out << "participant_id,milestone,bmi\n";
    const std::array<std::string_view, 3> names{"enrollment", "midpoint", "closeout"};
    for (const auto& p : cohort.participants)
      for (std::size_t k = 0; k < 3; ++k)
        if (p.bmi[k]) out << p.id << ',' << names[k] << ',' << io::format_double(*p.bmi[k]) << '\n';
  }
  {
    auto out = io::open_output(files.events);
    out << "participant_id,timestamp,step_count\n";
    std::string buf;
    for (const auto& p : cohort.participants) {
      buf.clear();
      for (const auto& e : participant_events(cohort, p))
        fmt::format_to(std::back_inserter(buf), "{},{},{}\n", e.participant_id, io::format_timestamp(e.timestamp),
                       e.step_count);
      out << buf;
    }
  }
  {
    auto out = io::open_output(files.manifest);
    out << cohort::to_ini(cohort.manifest);
  }
}

}  // namespace stepwise::synth
