#pragma once

#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "connstream/core.hpp"

namespace connstream {

struct SetMetric {
  MetricId metric;
};
struct SetBand {
  int lo_bin;
  int hi_bin;
};
struct SetThreshold {
  double fraction;
};
struct SetAverageCount {
  int n;  // 0 averages every trial
};
struct ResetAccumulators {};

using ControlMessage =
    std::variant<SetMetric, SetBand, SetThreshold, SetAverageCount, ResetAccumulators>;

std::string_view control_type(const ControlMessage& msg);

/// Parses and validates control JSON, e.g. {"type":"set_metric","value":"PLI"} or
/// {"type":"set_band","lo":18,"hi":30}. Unknown fields are ignored. Throws ParameterError
/// on malformed JSON, an unknown type or an invalid value.
ControlMessage handle_control(std::string_view json);

/// Ack payload: {"type":"ack","request":...,"accepted":bool,"detail":...,"id":...}.
/// `id` echoes the request's optional "id" field.
std::string ack_json(std::string_view request, bool accepted, std::string_view detail,
                     const std::optional<std::string>& id_json = std::nullopt);

/// Thread-safe inbox for control messages. submit() validates immediately (syntax plus the
/// optional context check) and returns the ack payload; accepted messages wait until the
/// pipeline drains them at the next trial boundary.
class ControlChannel {
 public:
  using Validator = std::function<void(const ControlMessage&)>;

  void set_validator(Validator v);
  std::string submit(std::string_view json);
  void submit(ControlMessage msg);
  std::vector<ControlMessage> drain();
  std::size_t accepted() const;
  std::size_t rejected() const;

 private:
  mutable std::mutex mutex_;
  Validator validator_;
  std::vector<ControlMessage> inbox_;
  std::size_t accepted_ = 0;
  std::size_t rejected_ = 0;
};

}  // namespace connstream
