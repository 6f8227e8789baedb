#include "connstream/epoching.hpp"

#include <algorithm>
#include <cmath>

namespace connstream {

std::vector<EventMarker> detect_triggers(std::span<const double> block, double threshold,
                                         double previous_tail, std::int64_t first_sample) {
  if (!(threshold > 0.0)) throw ParameterError("trigger threshold must be > 0");
  std::vector<EventMarker> markers;
  double prev = previous_tail;
  for (std::size_t k = 0; k < block.size(); ++k) {
    const double v = block[k];
    if (prev < threshold && v >= threshold) {
      markers.push_back({first_sample + static_cast<std::int64_t>(k),
                         static_cast<int>(std::lround(v))});
    }
    prev = v;
  }
  return markers;
}

TriggerDetector::TriggerDetector(double threshold) : threshold_(threshold) {
  if (!(threshold > 0.0)) throw ParameterError("trigger threshold must be > 0");
}

std::vector<EventMarker> TriggerDetector::process(std::span<const double> block) {
  auto markers = detect_triggers(block, threshold_, tail_, position_);
  if (!block.empty()) tail_ = block.back();
  position_ += static_cast<std::int64_t>(block.size());
  return markers;
}

// ---- EpochSpec ----------------------------------------------------------------------

namespace {

std::int64_t to_sample(double seconds, double sfreq) {
  return static_cast<std::int64_t>(std::llround(seconds * sfreq));
}

// Index range inside an epoch for [t0, t1) seconds relative to the trigger.
std::pair<Eigen::Index, Eigen::Index> window_indices(const EpochMatrix& epoch, double t0,
                                                     double t1) {
  const std::int64_t origin = to_sample(epoch.t0_offset, epoch.sfreq);
  return {static_cast<Eigen::Index>(to_sample(t0, epoch.sfreq) - origin),
          static_cast<Eigen::Index>(to_sample(t1, epoch.sfreq) - origin)};
}

}  // namespace

void EpochSpec::validate() const {
  if (!(tmin < tmax)) throw ParameterError("epoch tmin must be < tmax");
  if (baseline) {
    if (!(baseline->first < baseline->second)) throw ParameterError("baseline must be b0 < b1");
    if (baseline->first < tmin || baseline->second > tmax) {
      throw ParameterError("baseline outside the epoch window");
    }
  }
  if (crop) {
    if (!(crop->first < crop->second)) throw ParameterError("crop must be c0 < c1");
    if (crop->first < tmin || crop->second > tmax) {
      throw ParameterError("crop outside the epoch window");
    }
  }
  if (reject_channel && *reject_channel < 0) throw ParameterError("reject_channel must be >= 0");
}

std::int64_t EpochSpec::start_offset(double sfreq) const { return to_sample(tmin, sfreq); }

std::int64_t EpochSpec::n_samples(double sfreq) const {
  return to_sample(tmax, sfreq) - to_sample(tmin, sfreq);
}

bool EpochSpec::accepts(int event_code) const {
  return event_codes.empty() ||
         std::find(event_codes.begin(), event_codes.end(), event_code) != event_codes.end();
}

// ---- SampleRing ---------------------------------------------------------------------

SampleRing::SampleRing(Eigen::Index n_channels, std::size_t capacity)
    : data_(RealMatrix::Zero(n_channels, static_cast<Eigen::Index>(capacity))) {
  if (n_channels < 1 || capacity < 1) throw ParameterError("ring needs channels and capacity");
}

std::int64_t SampleRing::oldest() const {
  return std::max<std::int64_t>(0, head_ - static_cast<std::int64_t>(capacity()));
}

void SampleRing::push(const RealMatrix& block) {
  if (block.rows() != data_.rows()) throw StreamError("ring channel count mismatch");
  const auto cap = static_cast<std::int64_t>(capacity());
  const Eigen::Index n = block.cols();
  // Only the newest `cap` samples of an oversized block survive.
  const Eigen::Index skip = std::max<Eigen::Index>(0, n - cap);
  head_ += skip;
  for (Eigen::Index t = skip; t < n; ++t) {
    data_.col(static_cast<Eigen::Index>(head_ % cap)) = block.col(t).transpose();
    ++head_;
  }
}

RealMatrix SampleRing::read(std::int64_t start, std::int64_t len) const {
  if (len < 0) throw ParameterError("negative read length");
  if (start < oldest()) {
    throw DataLossError("samples from " + std::to_string(start) +
                        " are no longer buffered (oldest " + std::to_string(oldest()) + ")");
  }
  if (start + len > head_) throw StreamError("read past the buffered head");
  const auto cap = static_cast<std::int64_t>(capacity());
  RealMatrix out(data_.rows(), static_cast<Eigen::Index>(len));
  for (std::int64_t t = 0; t < len; ++t) {
    out.col(static_cast<Eigen::Index>(t)) = data_.col(static_cast<Eigen::Index>((start + t) % cap));
  }
  return out;
}

// ---- epoch operations ---------------------------------------------------------------

std::variant<EpochMatrix, Pending> extract_epoch(const SampleRing& ring, const EventMarker& marker,
                                                 const EpochSpec& spec, double sfreq,
                                                 std::int64_t delay) {
  spec.validate();
  const std::int64_t offset = spec.start_offset(sfreq);
  const std::int64_t len = spec.n_samples(sfreq);
  const std::int64_t start = marker.sample_index + offset + delay;
  if (start + len > ring.head()) return Pending{};
  EpochMatrix epoch;
  epoch.data = ring.read(start, len);
  epoch.sfreq = sfreq;
  epoch.t0_offset = static_cast<double>(offset) / sfreq;
  return epoch;
}

bool reject_epoch(const EpochMatrix& epoch, const EpochSpec& spec) {
  if (!spec.reject_channel || spec.reject_threshold <= 0.0) return false;
  const int ch = *spec.reject_channel;
  if (ch >= epoch.n_channels()) {
    throw ConfigError("reject channel " + std::to_string(ch) + " not in epoch");
  }
  const auto [e0, e1] = window_indices(epoch, spec.reject_exclusion.first,
                                       spec.reject_exclusion.second);
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (Eigen::Index t = 0; t < epoch.n_samples(); ++t) {
    if (t >= e0 && t < e1) continue;
    lo = std::min(lo, epoch.data(ch, t));
    hi = std::max(hi, epoch.data(ch, t));
  }
  return hi > lo && hi - lo > spec.reject_threshold;
}

EpochMatrix baseline_correct(EpochMatrix epoch, const EpochSpec& spec) {
  if (!spec.baseline) return epoch;
  const auto [b0, b1] = window_indices(epoch, spec.baseline->first, spec.baseline->second);
  if (b0 < 0 || b1 > epoch.n_samples() || b1 <= b0) {
    throw ParameterError("baseline window outside the epoch or empty");
  }
  const Eigen::VectorXd mean = epoch.data.middleCols(b0, b1 - b0).rowwise().mean();
  epoch.data.colwise() -= mean;
  return epoch;
}

EpochMatrix crop_epoch(const EpochMatrix& epoch, double c0, double c1) {
  const auto [i0, i1] = window_indices(epoch, c0, c1);
  if (i0 < 0 || i1 > epoch.n_samples() || i1 - i0 < 2) {
    throw ParameterError("crop window outside the epoch or shorter than two samples");
  }
  EpochMatrix out;
  out.data = epoch.data.middleCols(i0, i1 - i0);
  out.sfreq = epoch.sfreq;
  out.t0_offset = static_cast<double>(to_sample(c0, epoch.sfreq)) / epoch.sfreq;
  out.trial_index = epoch.trial_index;
  return out;
}

EpochMatrix moving_average(std::span<const EpochMatrix> epochs, int n) {
  if (n < 1) throw ParameterError("moving average needs n >= 1");
  if (epochs.empty()) throw NoDataError("no epochs to average");
  const std::size_t count = std::min<std::size_t>(static_cast<std::size_t>(n), epochs.size());
  const std::size_t first = epochs.size() - count;
  EpochMatrix out = epochs[first];
  for (std::size_t k = first + 1; k < epochs.size(); ++k) {
    if (epochs[k].data.rows() != out.data.rows() || epochs[k].data.cols() != out.data.cols()) {
      throw DimensionError("epochs differ in shape");
    }
    out.data += epochs[k].data;
  }
  out.data /= static_cast<double>(count);
  out.trial_index = epochs.back().trial_index;
  return out;
}

// ---- EpochAssembler -----------------------------------------------------------------

namespace {

// Blocks are cut into chunks no longer than this before buffering, so one-shot and
// streamed input walk through identical ring states.
constexpr Eigen::Index kChunk = 4096;

}  // namespace

EpochAssembler::EpochAssembler(EpochSpec spec, Eigen::Index n_channels, double sfreq,
                               std::int64_t delay, double trigger_threshold,
                               std::size_t ring_capacity)
    : spec_(std::move(spec)),
      sfreq_(sfreq),
      delay_(delay),
      detector_(trigger_threshold),
      ring_(n_channels, ring_capacity > 0
                            ? ring_capacity
                            : static_cast<std::size_t>(spec_.n_samples(sfreq) + delay +
                                                       std::abs(spec_.start_offset(sfreq)) +
                                                       2 * kChunk)) {
  spec_.validate();
  if (!(sfreq > 0.0)) throw ParameterError("sfreq must be > 0");
  if (delay < 0) throw ParameterError("delay must be >= 0");
}

std::vector<EpochResult> EpochAssembler::push(const RealMatrix& data,
                                              std::span<const double> trigger) {
  if (static_cast<std::size_t>(data.cols()) != trigger.size()) {
    throw StreamError("data and trigger blocks differ in length");
  }
  std::vector<EpochResult> out;
  for (Eigen::Index begin = 0; begin < data.cols(); begin += kChunk) {
    const Eigen::Index len = std::min(kChunk, data.cols() - begin);
    ring_.push(data.middleCols(begin, len));
    for (const auto& m : detector_.process(trigger.subspan(static_cast<std::size_t>(begin),
                                                           static_cast<std::size_t>(len)))) {
      ++n_markers_;
      if (spec_.accepts(m.event_code)) pending_.push_back(m);
    }
    auto ready = drain();
    std::move(ready.begin(), ready.end(), std::back_inserter(out));
  }
  return out;
}

std::vector<EpochResult> EpochAssembler::drain() {
  std::vector<EpochResult> out;
  while (!pending_.empty()) {
    const EventMarker m = pending_.front();
    const std::int64_t start = m.sample_index + spec_.start_offset(sfreq_) + delay_;
    if (start < 0) {
      // Window begins before the stream did.
      pending_.pop_front();
      ++next_trial_;
      continue;
    }
    auto cut = extract_epoch(ring_, m, spec_, sfreq_, delay_);
    if (std::holds_alternative<Pending>(cut)) break;
    pending_.pop_front();
    EpochResult r;
    r.marker = m;
    r.epoch = std::move(std::get<EpochMatrix>(cut));
    r.epoch.trial_index = next_trial_++;
    r.rejected = reject_epoch(r.epoch, spec_);
    r.epoch = baseline_correct(std::move(r.epoch), spec_);
    if (spec_.crop) r.epoch = crop_epoch(r.epoch, spec_.crop->first, spec_.crop->second);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace connstream
