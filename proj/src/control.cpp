#include "connstream/control.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

namespace connstream {

std::string_view control_type(const ControlMessage& msg) {
  struct Visitor {
    std::string_view operator()(const SetMetric&) const { return "set_metric"; }
    std::string_view operator()(const SetBand&) const { return "set_band"; }
    std::string_view operator()(const SetThreshold&) const { return "set_threshold"; }
    std::string_view operator()(const SetAverageCount&) const { return "set_average_count"; }
    std::string_view operator()(const ResetAccumulators&) const { return "reset_accumulators"; }
  };
  return std::visit(Visitor{}, msg);
}

namespace {

const nlohmann::json& field(const nlohmann::json& doc, const char* key) {
  if (!doc.contains(key)) throw ParameterError(std::string("missing field '") + key + "'");
  return doc.at(key);
}

int int_field(const nlohmann::json& doc, const char* key) {
  const auto& v = field(doc, key);
  if (!v.is_number_integer()) throw ParameterError(std::string("'") + key + "' must be an integer");
  return v.get<int>();
}

}  // namespace

ControlMessage handle_control(std::string_view json) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json);
  } catch (const nlohmann::json::exception& ex) {
    throw ParameterError(std::string("control is not valid JSON: ") + ex.what());
  }
  if (!doc.is_object()) throw ParameterError("control must be a JSON object");
  const auto& type_v = field(doc, "type");
  if (!type_v.is_string()) throw ParameterError("'type' must be a string");
  const std::string type = type_v.get<std::string>();

  if (type == "set_metric") {
    const auto& v = field(doc, "value");
    if (!v.is_string()) throw ParameterError("'value' must be a metric name");
    return SetMetric{parse_metric(v.get<std::string>())};
  }
  if (type == "set_band") {
    const int lo = int_field(doc, "lo");
    const int hi = int_field(doc, "hi");
    if (lo < 0 || hi < lo) throw ParameterError("band needs 0 <= lo <= hi");
    return SetBand{lo, hi};
  }
  if (type == "set_threshold") {
    const auto& v = field(doc, "value");
    if (!v.is_number()) throw ParameterError("'value' must be a number");
    const double f = v.get<double>();
    if (!(f > 0.0) || f > 1.0) throw ParameterError("threshold must be in (0, 1]");
    return SetThreshold{f};
  }
  if (type == "set_average_count") {
    const int n = int_field(doc, "value");
    if (n < 0) throw ParameterError("average count must be >= 0");
    return SetAverageCount{n};
  }
  if (type == "reset_accumulators") return ResetAccumulators{};
  throw ParameterError("unknown control type '" + type + "'");
}

std::string ack_json(std::string_view request, bool accepted, std::string_view detail,
                     const std::optional<std::string>& id_json) {
  nlohmann::ordered_json doc;
  doc["type"] = "ack";
  doc["request"] = std::string(request);
  doc["accepted"] = accepted;
  doc["detail"] = std::string(detail);
  doc["id"] = id_json ? nlohmann::ordered_json::parse(*id_json) : nlohmann::ordered_json(nullptr);
  return doc.dump();
}

void ControlChannel::set_validator(Validator v) {
  std::lock_guard lock(mutex_);
  validator_ = std::move(v);
}

std::string ControlChannel::submit(std::string_view json) {
  std::string request = "unknown";
  std::optional<std::string> id;
  try {
    const auto doc = nlohmann::json::parse(json);
    if (doc.is_object()) {
      if (doc.contains("type") && doc["type"].is_string()) request = doc["type"].get<std::string>();
      if (doc.contains("id")) id = doc["id"].dump();
    }
  } catch (const nlohmann::json::exception&) {
    // reported by handle_control below
  }
  try {
    ControlMessage msg = handle_control(json);
    std::lock_guard lock(mutex_);
    if (validator_) validator_(msg);
    inbox_.push_back(msg);
    ++accepted_;
    return ack_json(request, true, "", id);
  } catch (const Error& ex) {
    std::lock_guard lock(mutex_);
    ++rejected_;
    return ack_json(request, false, ex.what(), id);
  }
}

void ControlChannel::submit(ControlMessage msg) {
  std::lock_guard lock(mutex_);
  if (validator_) validator_(msg);
  inbox_.push_back(msg);
  ++accepted_;
}

std::vector<ControlMessage> ControlChannel::drain() {
  std::lock_guard lock(mutex_);
  std::vector<ControlMessage> out;
  out.swap(inbox_);
  return out;
}

std::size_t ControlChannel::accepted() const {
  std::lock_guard lock(mutex_);
  return accepted_;
}

std::size_t ControlChannel::rejected() const {
  std::lock_guard lock(mutex_);
  return rejected_;
}

}  // namespace connstream
