#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <unistd.h>

#include "stepwise/stepwise.hpp"

namespace test_support {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("stepwise_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

/// Relative path -> file bytes for every regular file under `root`.
inline std::map<std::string, std::string> tree(const std::filesystem::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : std::filesystem::recursive_directory_iterator(root))
    if (e.is_regular_file()) out[std::filesystem::relative(e.path(), root).string()] = read_file(e.path());
  return out;
}

/// A default manifest file body for hand-written cohorts.
inline std::string manifest_ini(int days, int slots, int periods = 2, const std::string& extra = "") {
  return "[study]\nstart = 2020-03-01\ndays = " + std::to_string(days) + "\nslots = " + std::to_string(slots) +
         "\ncrt = 0.05\nperiods = " + std::to_string(periods) + "\n" + extra;
}

inline const char* kDemographicsHeader =
    "participant_id,gender,age,marital,adults_in_household,highest_degree,hispanic_or_latino,race,occupation\n";

inline std::string demographics_row(const std::string& id, int age = 40) {
  return id + ",female," + std::to_string(age) + ",married,2,bachelor,no,white,employed\n";
}

/// Imputed instances of a synthetic cohort at slot count m.
inline std::vector<stepwise::cohort::ParticipantSeries> imputed_series(const stepwise::synth::SyntheticCohort& c,
                                                                      int m) {
  auto loaded = stepwise::synth::materialize(c, m);
  stepwise::cohort::impute(loaded.series);
  return std::move(loaded.series);
}

}  // namespace test_support
