#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <utility>
#include <variant>
#include <vector>

#include "connstream/core.hpp"

namespace connstream {

struct EventMarker {
  std::int64_t sample_index = 0;  // absolute stream position
  int event_code = 0;
  bool operator==(const EventMarker&) const = default;
};

/// Rising-edge detector: a marker is emitted where the value goes from below `threshold`
/// to at or above it. The event code is the rounded value at the crossing sample.
/// `previous_tail` is the last sample of the previous block (0 at stream start).
std::vector<EventMarker> detect_triggers(std::span<const double> block, double threshold,
                                         double previous_tail, std::int64_t first_sample = 0);

class TriggerDetector {
 public:
  explicit TriggerDetector(double threshold);
  std::vector<EventMarker> process(std::span<const double> block);
  std::int64_t samples_seen() const { return position_; }

 private:
  double threshold_;
  double tail_ = 0.0;
  std::int64_t position_ = 0;
};

struct EpochSpec {
  double tmin = -0.1;
  double tmax = 0.4;
  std::optional<std::pair<double, double>> baseline;
  // Applied after baseline correction; the epoch is cut down to [c0, c1).
  std::optional<std::pair<double, double>> crop;
  std::optional<int> reject_channel;
  double reject_threshold = 0.0;  // <= 0 disables rejection
  std::pair<double, double> reject_exclusion{0.0, 0.010};
  std::vector<int> event_codes;  // empty accepts every code

  void validate() const;
  std::int64_t start_offset(double sfreq) const;
  std::int64_t n_samples(double sfreq) const;
  bool accepts(int event_code) const;
};

/// Multichannel ring buffer addressed by absolute sample index.
class SampleRing {
 public:
  SampleRing(Eigen::Index n_channels, std::size_t capacity);

  void push(const RealMatrix& block);
  std::int64_t head() const { return head_; }  // one past the newest sample
  std::int64_t oldest() const;
  Eigen::Index n_channels() const { return data_.rows(); }
  std::size_t capacity() const { return static_cast<std::size_t>(data_.cols()); }
  /// Copies samples [start, start + len). Throws DataLossError when start is older than the
  /// buffer and StreamError when the range is not yet buffered.
  RealMatrix read(std::int64_t start, std::int64_t len) const;

 private:
  RealMatrix data_;
  std::int64_t head_ = 0;
};

struct Pending {};

/// Cuts [marker + round(tmin*sfreq), marker + round(tmax*sfreq)) out of `ring`.
/// `delay` shifts the read position for data that lags the trigger stream (filter group
/// delay). Returns Pending when the end of the window is not buffered yet.
std::variant<EpochMatrix, Pending> extract_epoch(const SampleRing& ring, const EventMarker& marker,
                                                 const EpochSpec& spec, double sfreq,
                                                 std::int64_t delay = 0);

/// True when the peak-to-peak of reject_channel outside the exclusion window exceeds
/// reject_threshold.
bool reject_epoch(const EpochMatrix& epoch, const EpochSpec& spec);

/// Subtracts the per-channel mean over the baseline window [b0, b1).
EpochMatrix baseline_correct(EpochMatrix epoch, const EpochSpec& spec);

/// Keeps [c0, c1) relative to the trigger.
EpochMatrix crop_epoch(const EpochMatrix& epoch, double c0, double c1);

/// Elementwise mean of the newest min(n, size) epochs.
EpochMatrix moving_average(std::span<const EpochMatrix> epochs, int n);

struct EpochResult {
  EpochMatrix epoch;  // baseline-corrected and cropped, before channel picking
  EventMarker marker;
  bool rejected = false;
};

/// Turns a stream of (filtered data, raw trigger) blocks into epochs. Triggers are found on
/// the raw trigger samples; the data stream is expected to lag them by `delay` samples.
class EpochAssembler {
 public:
  EpochAssembler(EpochSpec spec, Eigen::Index n_channels, double sfreq, std::int64_t delay,
                 double trigger_threshold, std::size_t ring_capacity = 0);

  /// data: channels x n (filtered); trigger: n raw trigger samples for the same block.
  std::vector<EpochResult> push(const RealMatrix& data, std::span<const double> trigger);

  std::size_t pending() const { return pending_.size(); }
  std::int64_t n_markers() const { return n_markers_; }

 private:
  std::vector<EpochResult> drain();

  EpochSpec spec_;
  double sfreq_;
  std::int64_t delay_;
  TriggerDetector detector_;
  SampleRing ring_;
  std::deque<EventMarker> pending_;
  std::int64_t n_markers_ = 0;
  std::size_t next_trial_ = 0;
};

}  // namespace connstream
