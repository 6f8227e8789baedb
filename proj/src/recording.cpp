#include "connstream/recording.hpp"

#include <algorithm>
#include <bit>
#include <fstream>
#include <thread>

#include <nlohmann/json.hpp>

namespace connstream {

namespace fs = std::filesystem;

void RecordingInfo::validate() const {
  if (n_channels < 1) throw ConfigError("recording needs at least one channel");
  if (!(sfreq > 0.0)) throw ConfigError("recording sfreq must be > 0");
  if (!channels.empty() && static_cast<int>(channels.size()) != n_channels) {
    throw ConfigError("channel name count differs from n_channels");
  }
  for (int t : trigger_channels) {
    if (t < 0 || t >= n_channels) throw ConfigError("trigger channel index out of range");
  }
  if (!positions.empty() && static_cast<int>(positions.size()) != n_channels) {
    throw ConfigError("position count differs from n_channels");
  }
}

std::vector<int> RecordingInfo::data_channels() const {
  std::vector<int> out;
  for (int c = 0; c < n_channels; ++c) {
    if (std::find(trigger_channels.begin(), trigger_channels.end(), c) == trigger_channels.end()) {
      out.push_back(c);
    }
  }
  return out;
}

std::pair<fs::path, fs::path> recording_paths(const fs::path& path) {
  fs::path stem = path;
  const auto ext = path.extension();
  if (ext == ".json" || ext == ".f32" || ext == ".rawx") stem.replace_extension();
  fs::path sidecar = stem;
  sidecar += ".json";
  fs::path payload = stem;
  payload += ".f32";
  return {sidecar, payload};
}

RawRecording read_recording(const fs::path& path) {
  const auto [sidecar, payload] = recording_paths(path);
  std::ifstream meta(sidecar);
  if (!meta) throw ConfigError("cannot open " + sidecar.string());
  RawRecording rec;
  try {
    const auto doc = nlohmann::json::parse(meta);
    rec.info.n_channels = doc.at("n_channels").get<int>();
    rec.info.sfreq = doc.at("sfreq").get<double>();
    rec.info.channels = doc.value("channels", std::vector<std::string>{});
    rec.info.trigger_channels = doc.value("trigger_channels", std::vector<int>{});
    rec.info.unit = doc.value("unit", std::string("au"));
    if (doc.contains("positions")) {
      for (const auto& p : doc.at("positions")) {
        rec.info.positions.push_back({p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>()});
      }
    }
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError(sidecar.string() + ": " + ex.what());
  }
  rec.info.validate();

  std::ifstream in(payload, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + payload.string());
  const auto bytes = static_cast<std::int64_t>(fs::file_size(payload));
  const std::int64_t values = bytes / 4;
  const std::int64_t n_samples = values / rec.info.n_channels;
  rec.truncated = bytes % 4 != 0 || values % rec.info.n_channels != 0;
  std::vector<float> raw(static_cast<std::size_t>(n_samples * rec.info.n_channels));
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size() * 4));
  if (!in) throw ConfigError(payload.string() + ": read failed");
  static_assert(std::endian::native == std::endian::little);
  rec.data.resize(rec.info.n_channels, n_samples);
  for (std::int64_t s = 0; s < n_samples; ++s) {
    for (int c = 0; c < rec.info.n_channels; ++c) {
      rec.data(c, s) = raw[static_cast<std::size_t>(s * rec.info.n_channels + c)];
    }
  }
  return rec;
}

void write_recording(const fs::path& path, const RawRecording& rec) {
  rec.info.validate();
  if (rec.data.rows() != rec.info.n_channels) throw DimensionError("data rows != n_channels");
  const auto [sidecar, payload] = recording_paths(path);
  nlohmann::ordered_json doc;
  doc["n_channels"] = rec.info.n_channels;
  doc["sfreq"] = rec.info.sfreq;
  std::vector<std::string> names = rec.info.channels;
  if (names.empty()) {
    for (int c = 0; c < rec.info.n_channels; ++c) names.push_back("ch" + std::to_string(c));
  }
  doc["channels"] = names;
  doc["trigger_channels"] = rec.info.trigger_channels;
  doc["unit"] = rec.info.unit;
  if (!rec.info.positions.empty()) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& p : rec.info.positions) arr.push_back({p[0], p[1], p[2]});
    doc["positions"] = arr;
  }
  {
    std::ofstream meta(sidecar);
    if (!meta) throw ConfigError("cannot write " + sidecar.string());
    meta << doc.dump(2) << '\n';
  }
  std::vector<float> raw(static_cast<std::size_t>(rec.data.size()));
  for (Eigen::Index s = 0; s < rec.data.cols(); ++s) {
    for (Eigen::Index c = 0; c < rec.data.rows(); ++c) {
      raw[static_cast<std::size_t>(s * rec.data.rows() + c)] = static_cast<float>(rec.data(c, s));
    }
  }
  std::ofstream out(payload, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + payload.string());
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size() * 4));
  if (!out) throw ConfigError("short write to " + payload.string());
}

Replayer::Replayer(const RawRecording& rec, int block_size, double speed)
    : rec_(rec), block_size_(block_size), speed_(speed), start_(std::chrono::steady_clock::now()) {
  if (block_size < 1) throw ParameterError("block_size must be >= 1");
  if (speed < 0.0) throw ParameterError("speed must be >= 0");
}

std::optional<RealMatrix> Replayer::next() {
  if (stopped_) return std::nullopt;
  const std::int64_t n = rec_.n_samples();
  if (position_ >= n) {
    if (rec_.truncated) throw StreamError("recording payload is truncated after sample " + std::to_string(n));
    return std::nullopt;
  }
  const std::int64_t len = std::min<std::int64_t>(block_size_, n - position_);
  if (speed_ > 0.0) {
    const double seconds = static_cast<double>(emitted_ + 1) * block_size_ / (rec_.info.sfreq * speed_);
    std::this_thread::sleep_until(start_ + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                               std::chrono::duration<double>(seconds)));
  }
  RealMatrix block = rec_.data.middleCols(static_cast<Eigen::Index>(position_), static_cast<Eigen::Index>(len));
  position_ += len;
  ++emitted_;
  return block;
}

std::vector<RealMatrix> replay_all(const RawRecording& rec, int block_size) {
  Replayer r(rec, block_size, 0.0);
  std::vector<RealMatrix> blocks;
  while (auto b = r.next()) blocks.push_back(std::move(*b));
  return blocks;
}

}  // namespace connstream
