#pragma once

// Checkpoint file layout (all integers and floats little-endian):
//
//   bytes 0..7    magic "STEPWSCK"
//   u32           format version (1)
//   u64           length L of the JSON header
//   L bytes       UTF-8 JSON header
//   f64...        tensor payload, row-major, in header "tensors" order
//
// The header holds "config", "sequence_length", "feature_names",
// "pipeline", "train_stats" {mean, stddev}, "best_epoch", "curve" and
// "tensors": [{name, rows, cols, offset}] where offset counts f64 values
// from the start of the payload.

#include <array>
#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "stepwise/error.hpp"
#include "stepwise/io.hpp"
#include "stepwise/model/train.hpp"

namespace stepwise::model {

inline constexpr std::array<char, 8> kCheckpointMagic = {'S', 'T', 'E', 'P', 'W', 'S', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

template <class T>
void put_le(std::ostream& out, T v) {
  const auto u = std::bit_cast<std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>>(v);
  for (std::size_t b = 0; b < sizeof(T); ++b) out.put(static_cast<char>((u >> (8 * b)) & 0xff));
}

template <class T>
T get_le(std::istream& in, const std::string& path) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  std::array<unsigned char, sizeof(T)> buf{};
  if (!in.read(reinterpret_cast<char*>(buf.data()), sizeof(T))) throw ParseError(path, 0, "truncated checkpoint");
  U u = 0;
  for (std::size_t b = 0; b < sizeof(T); ++b) u |= static_cast<U>(buf[b]) << (8 * b);
  return std::bit_cast<T>(u);
}

}  // namespace detail

inline nlohmann::json to_json(const ModelConfig& c) {
  return {{"feature_dim", c.feature_dim},   {"embed_dim", c.embed_dim},       {"hidden_units", c.hidden_units},
          {"layers", c.layers},             {"dropout_rate", c.dropout_rate}, {"epochs", c.epochs},
          {"learning_rate", c.learning_rate}, {"l2_lambda", c.l2_lambda},     {"grad_clip_norm", c.grad_clip_norm},
          {"batch_size", c.batch_size},     {"seed", c.seed}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.feature_dim = j.at("feature_dim");
  c.embed_dim = j.at("embed_dim");
  c.hidden_units = j.at("hidden_units");
  c.layers = j.at("layers");
  c.dropout_rate = j.at("dropout_rate");
  c.epochs = j.at("epochs");
  c.learning_rate = j.at("learning_rate");
  c.l2_lambda = j.at("l2_lambda");
  c.grad_clip_norm = j.at("grad_clip_norm");
  c.batch_size = j.at("batch_size");
  c.seed = j.at("seed");
  return c;
}

inline nlohmann::json to_json(const FeaturePipeline& p) {
  return {{"k", p.k},
          {"m", p.m},
          {"feature_set", p.feature_set},
          {"cohort_daily_mean", p.cohort_daily_mean},
          {"cohort_weekly_mean_per_day", p.cohort_weekly_mean_per_day},
          {"mean_lowest_daily", p.mean_lowest_daily}};
}

inline FeaturePipeline pipeline_from_json(const nlohmann::json& j) {
  return {j.at("k"), j.at("m"), j.at("feature_set"), j.at("cohort_daily_mean"), j.at("cohort_weekly_mean_per_day"),
          j.at("mean_lowest_daily")};
}

inline nlohmann::json to_json(const EpochRecord& r) {
  return {{"epoch", r.epoch},
          {"train_loss", r.train_loss},
          {"train_accuracy", r.train_accuracy},
          {"val_loss", r.val_loss},
          {"val_accuracy", r.val_accuracy}};
}

inline void save_checkpoint(const TrainedModel& model, const std::filesystem::path& path) {
  nlohmann::json header;
  header["config"] = to_json(model.config);
  header["sequence_length"] = model.sequence_length;
  header["feature_names"] = model.feature_names;
  header["pipeline"] = to_json(model.pipeline);
  header["train_stats"] = {
      {"mean", std::vector<double>(model.train_stats.mean.begin(), model.train_stats.mean.end())},
      {"stddev", std::vector<double>(model.train_stats.stddev.begin(), model.train_stats.stddev.end())}};
  header["best_epoch"] = model.best_epoch;
  header["curve"] = nlohmann::json::array();
  for (const auto& r : model.curve) header["curve"].push_back(to_json(r));
  header["tensors"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  visit_tensors(model.params, [&](const std::string& name, const Eigen::MatrixXd& t, bool) {
    header["tensors"].push_back({{"name", name}, {"rows", t.rows()}, {"cols", t.cols()}, {"offset", offset}});
    offset += static_cast<std::uint64_t>(t.size());
  });
  const std::string text = header.dump();

  auto out = io::open_output(path);
  out.write(kCheckpointMagic.data(), kCheckpointMagic.size());
  detail::put_le(out, kCheckpointVersion);
  detail::put_le(out, static_cast<std::uint64_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  visit_tensors(model.params, [&](const std::string&, const Eigen::MatrixXd& t, bool) {
    for (Eigen::Index r = 0; r < t.rows(); ++r)
      for (Eigen::Index c = 0; c < t.cols(); ++c) detail::put_le(out, t(r, c));
  });
  if (!out) throw Error(fmt::format("failed writing checkpoint '{}'", path.string()));
}

inline TrainedModel load_checkpoint(const std::filesystem::path& path) {
  const std::string p = path.string();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingFileError(p);
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kCheckpointMagic) throw ParseError(p, 0, "not a checkpoint");
  const auto version = detail::get_le<std::uint32_t>(in, p);
  if (version != kCheckpointVersion) throw ParseError(p, 0, fmt::format("unsupported checkpoint version {}", version));
  const auto length = detail::get_le<std::uint64_t>(in, p);
  if (length > (1ull << 30)) throw ParseError(p, 0, "checkpoint header too large");
  std::string text(length, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(length))) throw ParseError(p, 0, "truncated checkpoint");

  TrainedModel model;
  try {
    const auto header = nlohmann::json::parse(text);
    model.config = model_config_from_json(header.at("config"));
    validate(model.config);
    model.sequence_length = header.at("sequence_length");
    model.feature_names = header.at("feature_names").get<std::vector<std::string>>();
    model.pipeline = pipeline_from_json(header.at("pipeline"));
    const auto mean = header.at("train_stats").at("mean").get<std::vector<double>>();
    const auto sd = header.at("train_stats").at("stddev").get<std::vector<double>>();
    model.train_stats.mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), static_cast<Eigen::Index>(mean.size()));
    model.train_stats.stddev = Eigen::Map<const Eigen::VectorXd>(sd.data(), static_cast<Eigen::Index>(sd.size()));
    model.best_epoch = header.at("best_epoch");
    for (const auto& r : header.at("curve"))
      model.curve.push_back({r.at("epoch"), r.at("train_loss"), r.at("train_accuracy"), r.at("val_loss"),
                             r.at("val_accuracy")});

    model.params = LstmParams::zeros(model.config);
    const auto& table = header.at("tensors");
    std::size_t k = 0;
    std::uint64_t expected_offset = 0;
    visit_tensors(model.params, [&](const std::string& name, Eigen::MatrixXd& t, bool) {
      if (k >= table.size()) throw ParseError(p, 0, "tensor table too short");
      const auto& e = table[k++];
      if (e.at("name") != name || e.at("rows") != t.rows() || e.at("cols") != t.cols() ||
          e.at("offset") != expected_offset)
        throw ParseError(p, 0, fmt::format("tensor '{}' does not match the declared config", name));
      expected_offset += static_cast<std::uint64_t>(t.size());
      for (Eigen::Index r = 0; r < t.rows(); ++r)
        for (Eigen::Index c = 0; c < t.cols(); ++c) t(r, c) = detail::get_le<double>(in, p);
    });
    if (k != table.size()) throw ParseError(p, 0, "tensor table has extra entries");
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(p, 0, fmt::format("bad checkpoint header: {}", e.what()));
  }
  if (model.train_stats.dim() != model.config.feature_dim ||
      static_cast<int>(model.feature_names.size()) != model.config.feature_dim)
    throw ParseError(p, 0, "feature dimension mismatch inside checkpoint");
  in.peek();
  if (!in.eof()) throw ParseError(p, 0, "trailing bytes after tensor payload");
  return model;
}

/// epoch,train_loss,train_accuracy,val_loss,val_accuracy
inline void write_training_curve(const TrainedModel& model, const std::filesystem::path& path) {
  auto out = io::open_output(path);
  out << "epoch,train_loss,train_accuracy,val_loss,val_accuracy\n";
  for (const auto& r : model.curve)
    out << r.epoch << ',' << io::format_double(r.train_loss) << ',' << io::format_double(r.train_accuracy) << ','
        << io::format_double(r.val_loss) << ',' << io::format_double(r.val_accuracy) << '\n';
}

}  // namespace stepwise::model
