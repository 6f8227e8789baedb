#include "connstream/frames.hpp"

#include <nlohmann/json.hpp>

#include "connstream/errors.hpp"

namespace connstream {

namespace {

bool known_type(std::uint8_t t) {
  return t == 0x01 || t == 0x02 || t == 0x03 || t == 0x10;
}

std::string_view type_name(FrameType type) {
  switch (type) {
    case FrameType::Network:
      return "network";
    case FrameType::Timing:
      return "timing";
    case FrameType::Ack:
      return "ack";
    case FrameType::Control:
      return "control";
  }
  return "unknown";
}

}  // namespace

std::string encode_frame(FrameType type, std::string_view payload) {
  if (payload.size() >= kMaxFramePayload) {
    throw StreamError("frame payload of " + std::to_string(payload.size()) + " bytes exceeds limit");
  }
  const auto len = static_cast<std::uint32_t>(payload.size());
  std::string out;
  out.reserve(kFrameHeader + payload.size());
  out.push_back(static_cast<char>((len >> 24) & 0xff));
  out.push_back(static_cast<char>((len >> 16) & 0xff));
  out.push_back(static_cast<char>((len >> 8) & 0xff));
  out.push_back(static_cast<char>(len & 0xff));
  out.push_back(static_cast<char>(type));
  out.append(payload);
  return out;
}

void FrameDecoder::feed(std::string_view bytes) { buffer_.append(bytes); }

std::optional<Frame> FrameDecoder::next() {
  if (buffer_.size() < kFrameHeader) return std::nullopt;
  const auto byte = [&](std::size_t k) { return static_cast<std::uint32_t>(static_cast<unsigned char>(buffer_[k])); };
  const std::uint32_t len = (byte(0) << 24) | (byte(1) << 16) | (byte(2) << 8) | byte(3);
  if (len >= kMaxFramePayload) throw StreamError("incoming frame too large");
  const auto type = static_cast<std::uint8_t>(buffer_[4]);
  if (!known_type(type)) throw StreamError("unknown frame type " + std::to_string(type));
  if (buffer_.size() < kFrameHeader + len) return std::nullopt;
  Frame f;
  f.type = static_cast<FrameType>(type);
  f.payload = buffer_.substr(kFrameHeader, len);
  buffer_.erase(0, kFrameHeader + len);
  return f;
}

double StageTiming::stage_ms(std::string_view name) const {
  for (const auto& [stage, ms] : stages_ms) {
    if (stage == name) return ms;
  }
  return 0.0;
}

double StageTiming::total_ms() const {
  double sum = 0.0;
  for (const auto& [stage, ms] : stages_ms) sum += ms;
  return sum;
}

std::string timing_json(const StageTiming& timing) {
  nlohmann::ordered_json doc;
  doc["block_index"] = timing.block_index;
  doc["budget_ms"] = timing.budget_ms;
  doc["latency_ms"] = timing.latency_ms;
  doc["n_trials"] = timing.n_trials;
  nlohmann::ordered_json stages = nlohmann::ordered_json::array();
  for (const auto& [name, ms] : timing.stages_ms) stages.push_back({{"stage", name}, {"ms", ms}});
  doc["stages"] = std::move(stages);
  return doc.dump();
}

StageTiming parse_timing(std::string_view json) {
  try {
    const auto doc = nlohmann::json::parse(json);
    StageTiming t;
    t.block_index = doc.at("block_index").get<std::int64_t>();
    t.budget_ms = doc.at("budget_ms").get<double>();
    t.latency_ms = doc.at("latency_ms").get<double>();
    t.n_trials = doc.at("n_trials").get<int>();
    for (const auto& s : doc.at("stages")) {
      t.stages_ms.emplace_back(s.at("stage").get<std::string>(), s.at("ms").get<double>());
    }
    return t;
  } catch (const nlohmann::json::exception& ex) {
    throw ParameterError(std::string("timing JSON: ") + ex.what());
  }
}

std::string websocket_message(FrameType type, std::string_view payload) {
  std::string out = R"({"type":")";
  out += type_name(type);
  out += R"(","data":)";
  out += payload;
  out += '}';
  return out;
}

}  // namespace connstream
