#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "connstream/core.hpp"
#include "connstream/epoching.hpp"
#include "connstream/fir.hpp"
#include "connstream/spectral.hpp"

namespace connstream {

struct FilterConfig {
  bool enabled = true;
  FilterKind kind = FilterKind::Highpass;
  std::vector<double> cutoffs{2.0};
  double transition_bw = 2.0;
  int n_taps = 0;
};

struct TriggerConfig {
  int channel = -1;  // recording channel index; -1 picks the first trigger channel
  double threshold = 0.5;
};

enum class InverseMode {
  None,        // sensor space
  Fixed,       // operator loaded from file or built once with identity noise covariance
  Covariance,  // rebuilt whenever the covariance branch emits a new estimate
};

struct InverseConfig {
  InverseMode mode = InverseMode::None;
  std::string forward_path;
  std::string operator_path;
  double snr = 3.0;  // amplitude ratio; lambda = 1 / snr^2
  std::int64_t covariance_samples = 6000;
};

struct ConnectivityConfig {
  MetricId metric = MetricId::Coh;
  FrequencyBand band{18, 30, 0.0};  // bin_hz 0 = sfreq / nfft
  double threshold = 0.05;  // keep fraction; 1 keeps every edge
  bool normalize = true;
  int average_count = 0;
  bool storage = true;
  SpectralOptions spectral;
  int xcor_max_lag = -1;
  bool drop_reject_channel = true;
};

struct PublishConfig {
  std::string host = "127.0.0.1";
  int port = 0;  // 0 binds a free port
};

struct PipelineConfig {
  int block_size = 500;
  double speed = 0.0;
  std::size_t queue_capacity = 8;
  bool lossy = false;
  FilterConfig filter;
  TriggerConfig trigger;
  EpochSpec epoch;
  InverseConfig inverse;
  ConnectivityConfig connectivity;
  PublishConfig publish;

  void validate() const;
};

/// Reads a .json or .toml file. Relative paths inside it resolve against its directory.
PipelineConfig load_config(const std::filesystem::path& path);
PipelineConfig config_from_json(std::string_view json_text,
                                const std::filesystem::path& base_dir = {});
PipelineConfig config_from_toml(std::string_view toml_text,
                                const std::filesystem::path& base_dir = {});
std::string config_to_json(const PipelineConfig& config);

}  // namespace connstream
