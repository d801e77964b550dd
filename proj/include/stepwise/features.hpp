#pragma once

// Window features: each participant's n-day grid is cut into floor(n/k)
// consecutive k-day windows, and every window yields m slot averages, 11
// activity statistics and 8 demographic codes (m + 19 values).

#include <algorithm>
#include <array>
#include <cstddef>
#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <fmt/core.h>

#include "stepwise/cohort.hpp"
#include "stepwise/dataset.hpp"
#include "stepwise/error.hpp"
#include "stepwise/io.hpp"

namespace stepwise::features {

inline constexpr int kExtractedCount = 11;
inline constexpr int kDemographicCount = 8;

inline constexpr std::array<std::string_view, kExtractedCount> kExtractedNames = {
    "daily_avg_steps",
    "daily_max_steps",
    "daily_min_steps",
    "weekly_max_steps",
    "weekly_min_steps",
    "total_steps",
    "active_days",                     // total > 2 x cohort mean lowest daily total
    "days_above_own_daily_mean",
    "days_above_own_weekly_mean",      // compared per day against weekly mean / 7
    "days_above_cohort_daily_mean",
    "days_above_cohort_weekly_mean",   // compared per day against weekly mean / 7
};

struct WindowSpec {
  int k = 0;
  int n = 0;
  int window_count = 0;

  int first_day(int w) const { return w * k; }
};

inline WindowSpec partition_windows(int n, int k) {
  if (k < 1) throw InvalidArgument(fmt::format("window size k={} must be >= 1", k));
  if (k > n) throw InvalidArgument(fmt::format("window size k={} exceeds study length n={}", k, n));
  return {k, n, n / k};
}

enum class FeatureSet { slots, slots_demographics, all };

inline std::string_view to_string(FeatureSet s) {
  switch (s) {
    case FeatureSet::slots: return "slots";
    case FeatureSet::slots_demographics: return "slots+demo";
    case FeatureSet::all: return "all";
  }
  return "?";
}

inline std::optional<FeatureSet> parse_feature_set(std::string_view s) {
  if (s == "slots") return FeatureSet::slots;
  if (s == "slots+demo" || s == "slots_demo") return FeatureSet::slots_demographics;
  if (s == "all") return FeatureSet::all;
  return std::nullopt;
}

inline int feature_size(int m, FeatureSet s) {
  switch (s) {
    case FeatureSet::slots: return m;
    case FeatureSet::slots_demographics: return m + kDemographicCount;
    case FeatureSet::all: return m + kExtractedCount + kDemographicCount;
  }
  return 0;
}

inline std::vector<std::string> feature_names(int m, FeatureSet s) {
  std::vector<std::string> names;
  const int width = 24 / m;
  for (int j = 0; j < m; ++j) names.push_back(fmt::format("slot_{:02d}_{:02d}", j * width, (j + 1) * width));
  if (s == FeatureSet::all)
    for (auto n : kExtractedNames) names.emplace_back(n);
  if (s != FeatureSet::slots)
    for (auto n : cohort::kDemographicNames) names.emplace_back(n);
  return names;
}

/// Index of a named feature within a layout, if present.
inline std::optional<int> feature_index(std::span<const std::string> names, std::string_view name) {
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) return std::nullopt;
  return static_cast<int>(it - names.begin());
}

/// Study-wide statistics of one participant's (imputed) grid.
struct ParticipantStats {
  double daily_mean = 0.0;
  double weekly_mean = 0.0;  // mean total of complete 7-day blocks
  double lowest_daily = 0.0;
};

/// Training-split reductions over participants.
struct CohortStats {
  double cohort_daily_mean = 0.0;          // DAS over all participants
  double cohort_weekly_mean_per_day = 0.0;
  double mean_lowest_daily = 0.0;
};

namespace detail {

inline void require_complete(const cohort::SlotGrid& g) {
  if (!g.complete()) throw InvalidArgument("feature extraction requires an imputed grid");
}

/// Totals of complete 7-day blocks starting at `first_day`; a span shorter
/// than a week contributes its own total as the single block.
inline std::vector<double> week_totals(const cohort::SlotGrid& g, int first_day, int days) {
  std::vector<double> totals;
  if (days < 7) {
    double t = 0.0;
    for (int d = first_day; d < first_day + days; ++d) t += g.day_total(d);
    totals.push_back(t);
    return totals;
  }
  for (int w = 0; w + 7 <= days; w += 7) {
    double t = 0.0;
    for (int d = first_day + w; d < first_day + w + 7; ++d) t += g.day_total(d);
    totals.push_back(t);
  }
  return totals;
}

}  // namespace detail

inline ParticipantStats participant_stats(const cohort::SlotGrid& g) {
  detail::require_complete(g);
  ParticipantStats s;
  double total = 0.0;
  s.lowest_daily = std::numeric_limits<double>::infinity();
  for (int d = 0; d < g.days(); ++d) {
    const double t = g.day_total(d);
    total += t;
    s.lowest_daily = std::min(s.lowest_daily, t);
  }
  s.daily_mean = total / g.days();
  const auto weeks = detail::week_totals(g, 0, g.days());
  double wsum = 0.0;
  for (double w : weeks) wsum += w;
  s.weekly_mean = g.days() < 7 ? s.daily_mean * 7.0 : wsum / static_cast<double>(weeks.size());
  return s;
}

inline CohortStats compute_cohort_stats(std::span<const cohort::ParticipantSeries> series,
                                        std::span<const std::size_t> indices) {
  if (indices.empty()) throw InvalidArgument("cohort statistics need at least one participant");
  CohortStats c;
  for (auto i : indices) {
    const auto p = participant_stats(series[i].grid);
    c.cohort_daily_mean += p.daily_mean;
    c.cohort_weekly_mean_per_day += p.weekly_mean / 7.0;
    c.mean_lowest_daily += p.lowest_daily;
  }
  const double n = static_cast<double>(indices.size());
  c.cohort_daily_mean /= n;
  c.cohort_weekly_mean_per_day /= n;
  c.mean_lowest_daily /= n;
  return c;
}

inline CohortStats compute_cohort_stats(std::span<const cohort::ParticipantSeries> series) {
  std::vector<std::size_t> all(series.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return compute_cohort_stats(series, all);
}

struct WindowFeatures {
  std::vector<double> slot_avgs;
  std::array<double, kExtractedCount> extracted{};
  std::array<double, kDemographicCount> demographics{};

  std::vector<double> flatten(FeatureSet set = FeatureSet::all) const {
    std::vector<double> v(slot_avgs);
    if (set == FeatureSet::all) v.insert(v.end(), extracted.begin(), extracted.end());
    if (set != FeatureSet::slots) v.insert(v.end(), demographics.begin(), demographics.end());
    return v;
  }
};

/// Features of the k-day window starting at `first_day` of an imputed grid.
inline WindowFeatures extract_window_features(const cohort::SlotGrid& g, int first_day, int k,
                                              const ParticipantStats& own, const CohortStats& cohort_stats,
                                              const cohort::DemographicProfile& demographics) {
  detail::require_complete(g);
  if (k < 1 || first_day < 0 || first_day + k > g.days())
    throw InvalidArgument(fmt::format("window [{}, {}) outside grid of {} days", first_day, first_day + k, g.days()));
  const int m = g.slots();
  WindowFeatures f;
  f.slot_avgs.assign(m, 0.0);
  for (int d = first_day; d < first_day + k; ++d)
    for (int j = 0; j < m; ++j) f.slot_avgs[j] += g.value(d, j);
  for (auto& v : f.slot_avgs) v /= k;

  double total = 0.0, dmax = -std::numeric_limits<double>::infinity(),
         dmin = std::numeric_limits<double>::infinity();
  const double active_threshold = 2.0 * cohort_stats.mean_lowest_daily;
  const double own_weekly_per_day = own.weekly_mean / 7.0;
  std::array<double, 5> counts{};
  for (int d = first_day; d < first_day + k; ++d) {
    const double t = g.day_total(d);
    total += t;
    dmax = std::max(dmax, t);
    dmin = std::min(dmin, t);
    counts[0] += t > active_threshold;
    counts[1] += t > own.daily_mean;
    counts[2] += t > own_weekly_per_day;
    counts[3] += t > cohort_stats.cohort_daily_mean;
    counts[4] += t > cohort_stats.cohort_weekly_mean_per_day;
  }
  const auto weeks = detail::week_totals(g, first_day, k);
  f.extracted = {total / k,
                 dmax,
                 dmin,
                 *std::max_element(weeks.begin(), weeks.end()),
                 *std::min_element(weeks.begin(), weeks.end()),
                 total,
                 counts[0],
                 counts[1],
                 counts[2],
                 counts[3],
                 counts[4]};
  f.demographics = demographics.encoded();
  return f;
}

/// Builds one length-floor(n/k) sequence per instance; demographics repeat
/// in every window.
inline SequenceDataset build_sequences(std::span<const cohort::ParticipantSeries> series, int k,
                                       FeatureSet set, const CohortStats& cohort_stats) {
  SequenceDataset data;
  if (series.empty()) return data;
  const int n = series.front().n_days();
  const int m = series.front().m_slots();
  const auto spec = partition_windows(n, k);
  data.feature_names = feature_names(m, set);
  data.instances.reserve(series.size());
  for (const auto& s : series) {
    if (s.n_days() != n || s.m_slots() != m)
      throw InvalidArgument(fmt::format("instance {} has a {}x{} grid, expected {}x{}", s.participant_id,
                                        s.n_days(), s.m_slots(), n, m));
    const auto own = participant_stats(s.grid);
    SequenceInstance inst{s.participant_id, s.period,
                          Eigen::MatrixXd(feature_size(m, set), spec.window_count), s.improved,
                          s.demographics.age};
    for (int w = 0; w < spec.window_count; ++w) {
      const auto v = extract_window_features(s.grid, spec.first_day(w), k, own, cohort_stats, s.demographics)
                         .flatten(set);
      inst.steps.col(w) = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
    }
    data.instances.push_back(std::move(inst));
  }
  return data;
}

/// One CSV row per (instance, window): participant_id, period, label,
/// window, then the dataset's feature columns in order.
inline void write_feature_dump(const SequenceDataset& data, const std::filesystem::path& path) {
  auto out = io::open_output(path);
  out << "participant_id,period,label,window";
  for (const auto& n : data.feature_names) out << ',' << n;
  out << '\n';
  for (const auto& inst : data.instances)
    for (Eigen::Index w = 0; w < inst.steps.cols(); ++w) {
      out << inst.participant_id << ',' << inst.period << ',' << int(inst.label) << ',' << w;
      for (Eigen::Index r = 0; r < inst.steps.rows(); ++r) out << ',' << io::format_double(inst.steps(r, w));
      out << '\n';
    }
}

}  // namespace stepwise::features
