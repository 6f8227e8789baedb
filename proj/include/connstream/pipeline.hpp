#pragma once

#include <atomic>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "connstream/config.hpp"
#include "connstream/control.hpp"
#include "connstream/epoching.hpp"
#include "connstream/fir.hpp"
#include "connstream/frames.hpp"
#include "connstream/inverse.hpp"
#include "connstream/recording.hpp"
#include "connstream/trial_cache.hpp"

namespace connstream {

/// Channel picking, filtering and epoching shared by the online and offline paths, so
/// both run the same arithmetic.
class SensorFrontend {
 public:
  SensorFrontend(const PipelineConfig& config, const RecordingInfo& info);

  struct Filtered {
    RealMatrix data;  // data channels, filtered (lags the trigger by delay())
    std::vector<double> trigger;
  };

  Filtered filter(const RealMatrix& raw_block);
  /// Drains the filter delay with zero input at end of stream.
  Filtered flush();
  std::vector<EpochResult> epoch(const Filtered& block);

  const std::vector<int>& data_channels() const { return data_channels_; }
  int trigger_channel() const { return trigger_channel_; }
  std::int64_t delay() const { return filter_ ? filter_->group_delay() : 0; }
  const FirFilter* fir() const { return filter_ ? &filter_->filter() : nullptr; }
  std::int64_t n_markers() const { return assembler_->n_markers(); }

 private:
  std::vector<int> data_channels_;
  int trigger_channel_ = -1;
  std::optional<FirStream> filter_;
  std::unique_ptr<EpochAssembler> assembler_;
};

/// Drops the reject channel from an accepted epoch when configured.
EpochMatrix pick_connectivity_channels(const EpochMatrix& epoch, const PipelineConfig& config);

/// Loads or builds the initial inverse operator for the configured mode (nullopt in sensor
/// space). Fixed mode without an operator file uses an identity noise covariance.
std::optional<InverseOperator> initial_operator(const PipelineConfig& config,
                                                std::optional<ForwardModel>* forward_out = nullptr);

/// Trial averaging plus live-mutable finalize settings.
class ConnectivityEngine {
 public:
  ConnectivityEngine(const ConnectivityConfig& config, int n_nodes, std::vector<Node> nodes,
                     double sfreq);

  /// Throws ParameterError for messages that cannot apply to this engine.
  void validate(const ControlMessage& msg) const;
  void apply(const ControlMessage& msg);

  void add_trial(const EpochMatrix& epoch);
  /// Finalized network as published (normalized, thresholded).
  ConnectivityNetwork current();
  /// Finalized network before normalization and thresholding.
  ConnectivityNetwork raw();
  ConnectivityNetwork raw(MetricId metric);
  ConnectivityNetwork publishable(ConnectivityNetwork raw_net) const;

  MetricId metric() const { return metric_; }
  const FrequencyBand& band() const { return band_; }
  double threshold() const { return threshold_; }
  TrialCache& cache() { return cache_; }

 private:
  TrialCache cache_;
  std::vector<Node> nodes_;
  MetricId metric_;
  FrequencyBand band_;
  double threshold_;
  bool normalize_;
};

struct PipelineHooks {
  // Connectivity thread, synchronous with the trial that produced the network.
  std::function<void(const ConnectivityNetwork&, int trial_number)> on_network;
  // Publish thread.
  std::function<void(FrameType, const std::string& payload)> on_frame;
  std::function<void(const StageTiming&)> on_timing;
};

struct PipelineReport {
  std::int64_t n_blocks = 0;
  std::int64_t n_markers = 0;
  std::int64_t n_epochs = 0;
  std::int64_t n_rejected = 0;
  std::int64_t n_networks = 0;
  std::int64_t n_finalize_skipped = 0;  // e.g. USPLI with one trial
  std::int64_t n_dropped_blocks = 0;
  std::int64_t n_operator_updates = 0;
  std::int64_t n_stage_over_budget = 0;
  std::int64_t n_latency_over_budget = 0;
  double budget_ms = 0.0;
  std::map<std::string, double> max_stage_ms;
  double max_latency_ms = 0.0;
  double max_trial_update_ms = 0.0;  // connectivity add + finalize + serialize for one trial
  std::optional<ConnectivityNetwork> final_network;
  std::vector<std::string> warnings;
};

struct RunOptions {
  ControlChannel* control = nullptr;
  PipelineHooks hooks;
  const std::atomic<bool>* stop = nullptr;
};

/// Threaded pipeline: replay -> filter -> epoch -> inverse -> connectivity -> publish,
/// one worker per stage over bounded queues, plus a covariance worker in covariance mode.
/// Stage failures stop the pipeline and are rethrown after all workers have joined.
PipelineReport run_pipeline(const PipelineConfig& config, const RawRecording& recording,
                            RunOptions options = {});

struct OfflineResult {
  std::vector<EpochMatrix> epochs;  // accepted epochs fed to connectivity
  std::int64_t n_markers = 0;
  std::int64_t n_rejected = 0;
  ConnectivityNetwork network;      // published form of the final network
  std::vector<Node> nodes;
};

/// The same stages run sequentially over the recording, cut into config.block_size blocks.
OfflineResult run_offline(const PipelineConfig& config, const RawRecording& recording);

/// Epochs only (front end + inverse), processing the recording in blocks of `block_size`
/// (0 = one block).
std::vector<EpochMatrix> extract_epochs(const PipelineConfig& config, const RawRecording& recording,
                                        int block_size = 0);

}  // namespace connstream
