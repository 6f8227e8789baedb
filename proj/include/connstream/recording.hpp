#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "connstream/core.hpp"

namespace connstream {

struct RecordingInfo {
  int n_channels = 0;
  double sfreq = 0.0;
  std::vector<std::string> channels;
  std::vector<int> trigger_channels;
  std::string unit = "au";
  // Optional sensor positions (meters), one per channel.
  std::vector<Position> positions;

  void validate() const;
  /// Channels that are not trigger channels, in recording order.
  std::vector<int> data_channels() const;
};

/// .rawx recording: `<name>.json` sidecar plus `<name>.f32` sample-major float32 payload.
struct RawRecording {
  RecordingInfo info;
  RealMatrix data;  // channels x samples
  // Set when the payload ended mid-sample; `data` holds the complete samples only.
  bool truncated = false;

  std::int64_t n_samples() const { return data.cols(); }
};

/// `path` may name the sidecar, the payload, or the common stem.
RawRecording read_recording(const std::filesystem::path& path);
void write_recording(const std::filesystem::path& path, const RawRecording& rec);
/// Resolves `path` to the (sidecar, payload) pair.
std::pair<std::filesystem::path, std::filesystem::path> recording_paths(
    const std::filesystem::path& path);

/// Emits consecutive blocks of a recording. With speed > 0 block k is released at
/// start + (k + 1) * block_size / (sfreq * speed), i.e. when it would have finished
/// arriving from an acquisition system; speed 0 releases blocks immediately.
class Replayer {
 public:
  Replayer(const RawRecording& rec, int block_size, double speed);

  /// Next block, or nullopt at end of data. Throws StreamError after the last complete
  /// block of a truncated recording.
  std::optional<RealMatrix> next();
  void stop() { stopped_ = true; }
  std::int64_t blocks_emitted() const { return emitted_; }

 private:
  const RawRecording& rec_;
  int block_size_;
  double speed_;
  std::int64_t position_ = 0;
  std::int64_t emitted_ = 0;
  bool stopped_ = false;
  std::chrono::steady_clock::time_point start_;
};

std::vector<RealMatrix> replay_all(const RawRecording& rec, int block_size);

}  // namespace connstream
