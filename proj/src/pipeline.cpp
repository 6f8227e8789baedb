#include "connstream/pipeline.hpp"

#include <chrono>
#include <exception>
#include <mutex>
#include <thread>

#include "connstream/bounded_queue.hpp"

namespace connstream {

using Clock = std::chrono::steady_clock;

namespace {

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

int resolve_trigger_channel(const PipelineConfig& config, const RecordingInfo& info) {
  if (config.trigger.channel >= 0) {
    if (config.trigger.channel >= info.n_channels) throw ConfigError("trigger channel out of range");
    return config.trigger.channel;
  }
  if (info.trigger_channels.empty()) throw ConfigError("recording has no trigger channel");
  return info.trigger_channels.front();
}

}  // namespace

// ---- SensorFrontend -----------------------------------------------------------------

SensorFrontend::SensorFrontend(const PipelineConfig& config, const RecordingInfo& info) {
  info.validate();
  trigger_channel_ = resolve_trigger_channel(config, info);
  for (int c : info.data_channels()) {
    if (c != trigger_channel_) data_channels_.push_back(c);
  }
  if (data_channels_.empty()) throw ConfigError("recording has no data channels");
  if (config.filter.enabled) {
    filter_.emplace(design_fir(config.filter.kind, config.filter.cutoffs, config.filter.transition_bw,
                               config.filter.n_taps, info.sfreq));
  }
  assembler_ = std::make_unique<EpochAssembler>(config.epoch,
                                                static_cast<Eigen::Index>(data_channels_.size()),
                                                info.sfreq, delay(), config.trigger.threshold);
}

SensorFrontend::Filtered SensorFrontend::filter(const RealMatrix& raw_block) {
  Filtered out;
  RealMatrix picked(static_cast<Eigen::Index>(data_channels_.size()), raw_block.cols());
  for (std::size_t k = 0; k < data_channels_.size(); ++k) {
    picked.row(static_cast<Eigen::Index>(k)) = raw_block.row(data_channels_[k]);
  }
  out.data = filter_ ? filter_->process(picked) : std::move(picked);
  out.trigger.resize(static_cast<std::size_t>(raw_block.cols()));
  for (Eigen::Index t = 0; t < raw_block.cols(); ++t) {
    out.trigger[static_cast<std::size_t>(t)] = raw_block(trigger_channel_, t);
  }
  return out;
}

SensorFrontend::Filtered SensorFrontend::flush() {
  Filtered out;
  const auto n = static_cast<int>(delay());
  if (!filter_ || n == 0) {
    out.data.resize(static_cast<Eigen::Index>(data_channels_.size()), 0);
    return out;
  }
  out.data = filter_->flush(n);
  out.trigger.assign(static_cast<std::size_t>(n), 0.0);
  return out;
}

std::vector<EpochResult> SensorFrontend::epoch(const Filtered& block) {
  return assembler_->push(block.data, block.trigger);
}

EpochMatrix pick_connectivity_channels(const EpochMatrix& epoch, const PipelineConfig& config) {
  if (!config.epoch.reject_channel || !config.connectivity.drop_reject_channel) return epoch;
  const int drop = *config.epoch.reject_channel;
  EpochMatrix out;
  out.sfreq = epoch.sfreq;
  out.t0_offset = epoch.t0_offset;
  out.trial_index = epoch.trial_index;
  out.data.resize(epoch.n_channels() - 1, epoch.n_samples());
  Eigen::Index row = 0;
  for (Eigen::Index c = 0; c < epoch.n_channels(); ++c) {
    if (c != drop) out.data.row(row++) = epoch.data.row(c);
  }
  return out;
}

std::optional<InverseOperator> initial_operator(const PipelineConfig& config,
                                                std::optional<ForwardModel>* forward_out) {
  if (config.inverse.mode == InverseMode::None) return std::nullopt;
  std::optional<ForwardModel> fwd;
  if (!config.inverse.forward_path.empty()) fwd = read_forward(config.inverse.forward_path);
  if (forward_out) *forward_out = fwd;
  if (config.inverse.mode == InverseMode::Fixed && !config.inverse.operator_path.empty()) {
    return read_inverse(config.inverse.operator_path);
  }
  NoiseCovariance identity;
  identity.C = RealMatrix::Identity(fwd->n_sensors(), fwd->n_sensors());
  return build_inverse(*fwd, identity, config.inverse.snr);
}

// ---- ConnectivityEngine -------------------------------------------------------------

namespace {

TrialCacheOptions cache_options(const ConnectivityConfig& c) {
  TrialCacheOptions o;
  o.spectral = c.spectral;
  o.storage = c.storage;
  o.average_count = c.average_count;
  o.xcor_max_lag = c.xcor_max_lag;
  return o;
}

}  // namespace

ConnectivityEngine::ConnectivityEngine(const ConnectivityConfig& config, int n_nodes,
                                       std::vector<Node> nodes, double sfreq)
    : cache_(n_nodes, cache_options(config)),
      nodes_(std::move(nodes)),
      metric_(config.metric),
      band_(config.band),
      threshold_(config.threshold),
      normalize_(config.normalize) {
  if (band_.bin_hz <= 0.0) band_.bin_hz = sfreq / config.spectral.nfft;
  if (static_cast<int>(nodes_.size()) != n_nodes) nodes_ = default_nodes(static_cast<std::size_t>(n_nodes));
}

void ConnectivityEngine::validate(const ControlMessage& msg) const {
  if (const auto* b = std::get_if<SetBand>(&msg)) {
    const auto& s = cache_.options().spectral;
    if (b->lo_bin < s.first_bin || b->hi_bin > s.resolved_last_bin() || b->hi_bin < b->lo_bin) {
      throw ParameterError("band [" + std::to_string(b->lo_bin) + ", " + std::to_string(b->hi_bin) +
                           "] outside the computed bins [" + std::to_string(s.first_bin) + ", " +
                           std::to_string(s.resolved_last_bin()) + "]");
    }
  }
}

void ConnectivityEngine::apply(const ControlMessage& msg) {
  validate(msg);
  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, SetMetric>) {
          metric_ = m.metric;
        } else if constexpr (std::is_same_v<T, SetBand>) {
          band_.lo_bin = m.lo_bin;
          band_.hi_bin = m.hi_bin;
        } else if constexpr (std::is_same_v<T, SetThreshold>) {
          threshold_ = m.fraction;
        } else if constexpr (std::is_same_v<T, SetAverageCount>) {
          cache_.set_average_count(m.n);
        } else {
          cache_.reset();
        }
      },
      msg);
}

void ConnectivityEngine::add_trial(const EpochMatrix& epoch) { cache_.add_trial(epoch); }

ConnectivityNetwork ConnectivityEngine::raw(MetricId metric) {
  ConnectivityNetwork net = cache_.finalize(metric, band_);
  net.band = band_;
  net.nodes = nodes_;
  return net;
}

ConnectivityNetwork ConnectivityEngine::raw() { return raw(metric_); }

ConnectivityNetwork ConnectivityEngine::publishable(ConnectivityNetwork net) const {
  if (normalize_) net = normalize_network(std::move(net));
  if (threshold_ < 1.0) net = threshold_network(std::move(net), threshold_);
  return net;
}

ConnectivityNetwork ConnectivityEngine::current() { return publishable(raw()); }

// ---- threaded pipeline --------------------------------------------------------------

namespace {

struct Packet {
  std::int64_t block_index = 0;
  bool flush = false;
  Clock::time_point released;
  RealMatrix raw;
  SensorFrontend::Filtered filtered;
  std::vector<EpochMatrix> epochs;
  std::int64_t rejected = 0;
  std::vector<ConnectivityNetwork> networks;
  std::vector<double> trial_update_ms;
  std::vector<std::pair<std::string, double>> timings;
};

using Queue = BoundedQueue<Packet>;

class OperatorSlot {
 public:
  void set(std::shared_ptr<const InverseOperator> op) {
    std::lock_guard lock(mutex_);
    op_ = std::move(op);
  }
  std::shared_ptr<const InverseOperator> get() const {
    std::lock_guard lock(mutex_);
    return op_;
  }

 private:
  mutable std::mutex mutex_;
  std::shared_ptr<const InverseOperator> op_;
};

std::vector<Node> node_layout(const PipelineConfig& config, const RecordingInfo& info,
                              const SensorFrontend& frontend,
                              const std::optional<InverseOperator>& op) {
  if (op) {
    if (static_cast<Eigen::Index>(op->source_positions.size()) == op->M.rows()) {
      return nodes_from_positions(op->source_positions);
    }
    return default_nodes(static_cast<std::size_t>(op->M.rows()));
  }
  std::vector<Position> positions;
  const auto& chans = frontend.data_channels();
  for (std::size_t k = 0; k < chans.size(); ++k) {
    if (config.epoch.reject_channel && config.connectivity.drop_reject_channel &&
        static_cast<int>(k) == *config.epoch.reject_channel) {
      continue;
    }
    positions.push_back(info.positions.empty() ? Position{0.0, 0.0, 0.0}
                                               : info.positions[static_cast<std::size_t>(chans[k])]);
  }
  return nodes_from_positions(positions);
}

}  // namespace

PipelineReport run_pipeline(const PipelineConfig& config, const RawRecording& recording,
                            RunOptions options) {
  config.validate();
  const double sfreq = recording.info.sfreq;
  SensorFrontend frontend(config, recording.info);
  std::optional<ForwardModel> forward;
  const std::optional<InverseOperator> first_op = initial_operator(config, &forward);
  if (first_op && first_op->M.cols() != static_cast<Eigen::Index>(frontend.data_channels().size()) -
                                            (config.epoch.reject_channel && config.connectivity.drop_reject_channel ? 1 : 0)) {
    throw ConfigError("inverse operator sensor count does not match the recording");
  }
  OperatorSlot operator_slot;
  if (first_op) operator_slot.set(std::make_shared<const InverseOperator>(*first_op));

  const std::vector<Node> nodes = node_layout(config, recording.info, frontend, first_op);
  ConnectivityEngine engine(config.connectivity, static_cast<int>(nodes.size()), nodes, sfreq);
  if (options.control) {
    options.control->set_validator([&engine](const ControlMessage& m) { engine.validate(m); });
  }

  PipelineReport report;
  report.budget_ms = 1000.0 * config.block_size / sfreq;
  std::mutex report_mutex;

  Queue q_raw(config.queue_capacity), q_filtered(config.queue_capacity), q_epochs(config.queue_capacity),
      q_source(config.queue_capacity), q_networks(config.queue_capacity);
  BoundedQueue<RealMatrix> q_cov(config.queue_capacity);
  const bool covariance_mode = config.inverse.mode == InverseMode::Covariance;

  std::mutex error_mutex;
  std::exception_ptr first_error;
  std::atomic<bool> abort{false};
  auto close_all = [&] {
    q_raw.close();
    q_filtered.close();
    q_epochs.close();
    q_source.close();
    q_networks.close();
    q_cov.close();
  };
  auto guard = [&](auto&& body) {
    return [&, body]() mutable {
      try {
        body();
      } catch (...) {
        {
          std::lock_guard lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
        }
        abort = true;
        close_all();
      }
    };
  };

  std::vector<std::thread> workers;

  // replay
  workers.emplace_back(guard([&] {
    Replayer replayer(recording, config.block_size, config.speed);
    std::int64_t index = 0;
    while (!abort) {
      if (options.stop && options.stop->load()) break;
      auto block = replayer.next();
      if (!block) break;
      Packet p;
      p.block_index = index++;
      p.released = Clock::now();
      p.raw = std::move(*block);
      if (config.lossy) {
        if (q_raw.push_drop_oldest(std::move(p))) {
          std::lock_guard lock(report_mutex);
          ++report.n_dropped_blocks;
        }
      } else if (!q_raw.push(std::move(p))) {
        break;
      }
    }
    q_raw.close();
  }));

  // filter
  workers.emplace_back(guard([&] {
    while (auto p = q_raw.pop()) {
      const auto t0 = Clock::now();
      p->filtered = frontend.filter(p->raw);
      p->raw.resize(0, 0);
      p->timings.emplace_back("filter", ms_since(t0));
      if (covariance_mode) q_cov.push_drop_oldest(p->filtered.data);
      if (!q_filtered.push(std::move(*p))) return;
    }
    if (abort) return;
    Packet tail;
    tail.flush = true;
    tail.released = Clock::now();
    tail.filtered = frontend.flush();
    q_filtered.push(std::move(tail));
    q_filtered.close();
    q_cov.close();
  }));

  // epoch
  workers.emplace_back(guard([&] {
    while (auto p = q_filtered.pop()) {
      const auto t0 = Clock::now();
      for (auto& r : frontend.epoch(p->filtered)) {
        if (r.rejected) {
          ++p->rejected;
          continue;
        }
        p->epochs.push_back(pick_connectivity_channels(r.epoch, config));
      }
      p->filtered = {};
      p->timings.emplace_back("epoch", ms_since(t0));
      if (!q_epochs.push(std::move(*p))) return;
    }
    q_epochs.close();
  }));

  // covariance branch
  if (covariance_mode) {
    workers.emplace_back(guard([&] {
      const Eigen::Index n_sensors = forward->n_sensors();
      CovarianceEstimator estimator(n_sensors, config.inverse.covariance_samples);
      while (auto block = q_cov.pop()) {
        RealMatrix sensors = *block;
        if (config.epoch.reject_channel && config.connectivity.drop_reject_channel) {
          EpochMatrix tmp;
          tmp.data = std::move(sensors);
          sensors = pick_connectivity_channels(tmp, config).data;
        }
        if (auto cov = estimator.push(sensors)) {
          auto op = std::make_shared<const InverseOperator>(build_inverse(*forward, *cov, config.inverse.snr));
          operator_slot.set(std::move(op));
          std::lock_guard lock(report_mutex);
          ++report.n_operator_updates;
        }
      }
    }));
  }

  // inverse
  workers.emplace_back(guard([&] {
    while (auto p = q_epochs.pop()) {
      const auto t0 = Clock::now();
      if (auto op = operator_slot.get()) {
        for (auto& e : p->epochs) e = apply_inverse(*op, e);
      }
      p->timings.emplace_back("inverse", ms_since(t0));
      if (!q_source.push(std::move(*p))) return;
    }
    q_source.close();
  }));

  // connectivity
  int trial_number = 0;
  workers.emplace_back(guard([&] {
    while (auto p = q_source.pop()) {
      const auto t0 = Clock::now();
      for (const auto& epoch : p->epochs) {
        const auto t_trial = Clock::now();
        if (options.control) {
          for (const auto& msg : options.control->drain()) {
            try {
              engine.apply(msg);
            } catch (const Error& ex) {
              std::lock_guard lock(report_mutex);
              report.warnings.push_back(std::string("control not applied: ") + ex.what());
            }
          }
        }
        engine.add_trial(epoch);
        ++trial_number;
        try {
          ConnectivityNetwork net = engine.current();
          if (options.hooks.on_network) options.hooks.on_network(net, trial_number);
          p->networks.push_back(std::move(net));
          p->trial_update_ms.push_back(ms_since(t_trial));
        } catch (const DegenerateTrialCountError& ex) {
          std::lock_guard lock(report_mutex);
          ++report.n_finalize_skipped;
        }
      }
      p->timings.emplace_back("connectivity", ms_since(t0));
      if (!q_networks.push(std::move(*p))) return;
    }
    q_networks.close();
  }));

  // publish
  workers.emplace_back(guard([&] {
    while (auto p = q_networks.pop()) {
      const auto t0 = Clock::now();
      for (std::size_t k = 0; k < p->networks.size(); ++k) {
        const auto t_ser = Clock::now();
        const std::string payload = serialize_network(p->networks[k]);
        if (options.hooks.on_frame) options.hooks.on_frame(FrameType::Network, payload);
        p->trial_update_ms[k] += ms_since(t_ser);
      }
      p->timings.emplace_back("publish", ms_since(t0));

      StageTiming timing;
      timing.block_index = p->block_index;
      timing.stages_ms = p->timings;
      timing.budget_ms = report.budget_ms;
      timing.latency_ms = ms_since(p->released);
      timing.n_trials = static_cast<int>(p->epochs.size());
      {
        std::lock_guard lock(report_mutex);
        report.n_epochs += static_cast<std::int64_t>(p->epochs.size());
        report.n_rejected += p->rejected;
        report.n_networks += static_cast<std::int64_t>(p->networks.size());
        if (!p->networks.empty()) report.final_network = p->networks.back();
        for (double ms : p->trial_update_ms) report.max_trial_update_ms = std::max(report.max_trial_update_ms, ms);
        if (!p->flush) {
          ++report.n_blocks;
          for (const auto& [stage, ms] : timing.stages_ms) {
            auto& m = report.max_stage_ms[stage];
            m = std::max(m, ms);
            if (ms > timing.budget_ms) ++report.n_stage_over_budget;
          }
          report.max_latency_ms = std::max(report.max_latency_ms, timing.latency_ms);
          if (timing.latency_ms > timing.budget_ms) ++report.n_latency_over_budget;
        }
      }
      if (!p->flush) {
        if (options.hooks.on_timing) options.hooks.on_timing(timing);
        if (options.hooks.on_frame) options.hooks.on_frame(FrameType::Timing, timing_json(timing));
      }
    }
  }));

  for (auto& w : workers) w.join();
  if (options.control) options.control->set_validator(nullptr);
  if (first_error) std::rethrow_exception(first_error);
  report.n_markers = frontend.n_markers();
  return report;
}

// ---- offline ------------------------------------------------------------------------

namespace {

struct EpochRun {
  std::vector<EpochMatrix> epochs;
  std::int64_t n_markers = 0;
  std::int64_t n_rejected = 0;
  std::vector<Node> nodes;
};

EpochRun run_front(const PipelineConfig& config, const RawRecording& recording, int block_size) {
  config.validate();
  SensorFrontend frontend(config, recording.info);
  std::optional<ForwardModel> forward;
  std::optional<InverseOperator> op = initial_operator(config, &forward);
  std::optional<CovarianceEstimator> estimator;
  if (config.inverse.mode == InverseMode::Covariance) {
    estimator.emplace(forward->n_sensors(), config.inverse.covariance_samples);
  }
  EpochRun run;
  run.nodes = node_layout(config, recording.info, frontend, op);

  auto handle = [&](const SensorFrontend::Filtered& f) {
    for (auto& r : frontend.epoch(f)) {
      if (r.rejected) {
        ++run.n_rejected;
        continue;
      }
      EpochMatrix e = pick_connectivity_channels(r.epoch, config);
      if (op) e = apply_inverse(*op, e);
      run.epochs.push_back(std::move(e));
    }
    if (estimator) {
      RealMatrix sensors = f.data;
      if (config.epoch.reject_channel && config.connectivity.drop_reject_channel) {
        EpochMatrix tmp;
        tmp.data = std::move(sensors);
        sensors = pick_connectivity_channels(tmp, config).data;
      }
      if (auto cov = estimator->push(sensors)) op = build_inverse(*forward, *cov, config.inverse.snr);
    }
  };

  const Eigen::Index n = recording.data.cols();
  const Eigen::Index step = block_size > 0 ? block_size : std::max<Eigen::Index>(n, 1);
  for (Eigen::Index at = 0; at < n; at += step) {
    handle(frontend.filter(recording.data.middleCols(at, std::min(step, n - at))));
  }
  handle(frontend.flush());
  run.n_markers = frontend.n_markers();
  return run;
}

}  // namespace

std::vector<EpochMatrix> extract_epochs(const PipelineConfig& config, const RawRecording& recording,
                                        int block_size) {
  return run_front(config, recording, block_size).epochs;
}

OfflineResult run_offline(const PipelineConfig& config, const RawRecording& recording) {
  // Same block cuts as the streamed run, so both paths do identical arithmetic.
  EpochRun run = run_front(config, recording, config.block_size);
  if (run.epochs.empty()) throw NoDataError("no accepted epochs in the recording");
  ConnectivityEngine engine(config.connectivity, static_cast<int>(run.nodes.size()), run.nodes,
                            recording.info.sfreq);
  for (const auto& e : run.epochs) engine.add_trial(e);
  OfflineResult out;
  out.network = engine.current();
  out.epochs = std::move(run.epochs);
  out.n_markers = run.n_markers;
  out.n_rejected = run.n_rejected;
  out.nodes = std::move(run.nodes);
  return out;
}

}  // namespace connstream
