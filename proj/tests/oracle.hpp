#pragma once

// Brute-force feature recomputation straight from raw events. Shares no
// code with the library's grid, imputation or feature paths: every
// quantity is rebuilt with plain loops over the event list.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "stepwise/cohort.hpp"
#include "stepwise/synth.hpp"

namespace oracle {

struct Instance {
  std::string id;
  int period = 0;
  // counts[d][j]; -1 marks "no event in this cell" before imputation
  std::vector<std::vector<double>> counts;
  std::vector<double> demographics;  // 8 values
};

struct Cohort {
  int n = 0, m = 0;
  std::vector<Instance> instances;
};

/// Rebuilds every labeled instance of a synthetic cohort at slot count m,
/// then imputes each empty cell with the mean of the non-empty cells of its
/// slot across all instances.
inline Cohort build(const stepwise::synth::SyntheticCohort& synthetic, int m) {
  const auto& manifest = synthetic.manifest;
  Cohort c;
  c.n = manifest.days;
  c.m = m;
  const int hours_per_slot = 24 / m;
  for (const auto& p : synthetic.participants) {
    const auto raw = stepwise::synth::to_raw(synthetic, p);
    const auto bmi = [&](stepwise::cohort::Milestone ms) { return raw.bmi.count(ms) > 0; };
    for (int period = 0; period < manifest.periods; ++period) {
      using M = stepwise::cohort::Milestone;
      const bool usable = manifest.periods == 1 ? bmi(M::enrollment) && bmi(M::closeout)
                                                : (period == 0 ? bmi(M::enrollment) && bmi(M::midpoint)
                                                               : bmi(M::midpoint) && bmi(M::closeout));
      if (!usable) continue;
      Instance inst;
      inst.id = p.id;
      inst.period = period;
      inst.counts.assign(c.n, std::vector<double>(m, -1.0));
      int seen = 0;
      for (const auto& e : raw.events) {
        const long day = (e.timestamp.day - manifest.study_start).count() - static_cast<long>(period) * c.n;
        if (day < 0 || day >= c.n) continue;
        const int slot = (e.timestamp.minute_of_day / 60) / hours_per_slot;
        double& cell = inst.counts[day][slot];
        cell = (cell < 0 ? 0.0 : cell) + static_cast<double>(e.step_count);
        ++seen;
      }
      if (seen == 0) continue;
      // gender first, then age, then the remaining categorical codes
      const auto& codes = p.demographics.codes;
      inst.demographics.push_back(codes[0]);
      inst.demographics.push_back(p.demographics.age);
      for (std::size_t a = 1; a < codes.size(); ++a) inst.demographics.push_back(codes[a]);
      c.instances.push_back(std::move(inst));
    }
  }
  for (int j = 0; j < m; ++j) {
    double sum = 0.0;
    long count = 0;
    for (const auto& inst : c.instances)
      for (const auto& day : inst.counts)
        if (day[j] >= 0) {
          sum += day[j];
          ++count;
        }
    const double fill = count ? sum / static_cast<double>(count) : 0.0;
    for (auto& inst : c.instances)
      for (auto& day : inst.counts)
        if (day[j] < 0) day[j] = fill;
  }
  return c;
}

inline double day_total(const Instance& inst, int d) {
  double s = 0.0;
  for (double v : inst.counts[d]) s += v;
  return s;
}

struct Stats {
  double daily_mean, weekly_mean, lowest;
};

inline Stats participant(const Instance& inst) {
  const int n = static_cast<int>(inst.counts.size());
  Stats s{0.0, 0.0, 1e300};
  for (int d = 0; d < n; ++d) {
    s.daily_mean += day_total(inst, d) / n;
    s.lowest = std::min(s.lowest, day_total(inst, d));
  }
  if (n < 7) {
    s.weekly_mean = 7.0 * s.daily_mean;
  } else {
    const int weeks = n / 7;
    for (int w = 0; w < weeks; ++w)
      for (int d = 7 * w; d < 7 * w + 7; ++d) s.weekly_mean += day_total(inst, d) / weeks;
  }
  return s;
}

/// Full feature vector (slots, 11 extracted, 8 demographics) of window
/// [first, first + k) of instance i.
inline std::vector<double> window(const Cohort& c, std::size_t i, int first, int k) {
  double das = 0.0, weekly_per_day = 0.0, lowest = 0.0;
  for (const auto& inst : c.instances) {
    const auto s = participant(inst);
    das += s.daily_mean;
    weekly_per_day += s.weekly_mean / 7.0;
    lowest += s.lowest;
  }
  const double count = static_cast<double>(c.instances.size());
  das /= count;
  weekly_per_day /= count;
  lowest /= count;

  const auto& inst = c.instances[i];
  const auto own = participant(inst);
  std::vector<double> out;
  for (int j = 0; j < c.m; ++j) {
    double s = 0.0;
    for (int d = first; d < first + k; ++d) s += inst.counts[d][j];
    out.push_back(s / k);
  }
  std::vector<double> totals;
  for (int d = first; d < first + k; ++d) totals.push_back(day_total(inst, d));
  double total = 0.0;
  for (double t : totals) total += t;
  std::vector<double> weeks;
  if (k < 7) {
    weeks.push_back(total);
  } else {
    for (int w = 0; w + 7 <= k; w += 7) {
      double s = 0.0;
      for (int d = w; d < w + 7; ++d) s += totals[d];
      weeks.push_back(s);
    }
  }
  const auto above = [&](double threshold) {
    return static_cast<double>(std::count_if(totals.begin(), totals.end(), [&](double t) { return t > threshold; }));
  };
  out.push_back(total / k);
  out.push_back(*std::max_element(totals.begin(), totals.end()));
  out.push_back(*std::min_element(totals.begin(), totals.end()));
  out.push_back(*std::max_element(weeks.begin(), weeks.end()));
  out.push_back(*std::min_element(weeks.begin(), weeks.end()));
  out.push_back(total);
  out.push_back(above(2.0 * lowest));
  out.push_back(above(own.daily_mean));
  out.push_back(above(own.weekly_mean / 7.0));
  out.push_back(above(das));
  out.push_back(above(weekly_per_day));
  out.insert(out.end(), inst.demographics.begin(), inst.demographics.end());
  return out;
}

}  // namespace oracle
