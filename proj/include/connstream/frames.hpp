#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace connstream {

/// Wire frame: 4-byte big-endian payload length, 1 type byte, then `length` bytes of JSON.
enum class FrameType : std::uint8_t {
  Network = 0x01,
  Timing = 0x02,
  Ack = 0x03,
  Control = 0x10,  // client -> engine on the raw TCP port
};

inline constexpr std::size_t kMaxFramePayload = 16u << 20;
inline constexpr std::size_t kFrameHeader = 5;

/// Throws StreamError when the payload reaches kMaxFramePayload.
std::string encode_frame(FrameType type, std::string_view payload);

struct Frame {
  FrameType type = FrameType::Network;
  std::string payload;
};

/// Incremental decoder for a byte stream of frames.
class FrameDecoder {
 public:
  void feed(std::string_view bytes);
  /// Next complete frame. Throws StreamError on an oversized length or unknown type.
  std::optional<Frame> next();
  std::size_t buffered() const { return buffer_.size(); }

 private:
  std::string buffer_;
};

/// Processing time of one block through the pipeline stages.
struct StageTiming {
  std::int64_t block_index = 0;
  std::vector<std::pair<std::string, double>> stages_ms;
  double budget_ms = 0.0;
  // Wall clock from block release to the end of the last stage.
  double latency_ms = 0.0;
  int n_trials = 0;  // trials completed by this block

  double stage_ms(std::string_view name) const;
  double total_ms() const;
};

std::string timing_json(const StageTiming& timing);
StageTiming parse_timing(std::string_view json);

/// WebSocket text message wrapping a frame payload: {"type": ..., "data": <payload>}.
std::string websocket_message(FrameType type, std::string_view payload);

}  // namespace connstream
