#include "connstream/fir.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <nlohmann/json.hpp>

#include "connstream/parallel.hpp"

namespace connstream {

FilterKind parse_filter_kind(std::string_view name) {
  if (name == "lowpass") return FilterKind::Lowpass;
  if (name == "highpass") return FilterKind::Highpass;
  if (name == "bandpass") return FilterKind::Bandpass;
  throw ParameterError("unknown filter kind '" + std::string(name) + "'");
}

std::string_view to_string(FilterKind kind) {
  switch (kind) {
    case FilterKind::Lowpass:
      return "lowpass";
    case FilterKind::Highpass:
      return "highpass";
    case FilterKind::Bandpass:
      return "bandpass";
  }
  return "?";
}

std::complex<double> FirFilter::response(double hz) const {
  const double w = -2.0 * std::numbers::pi * hz / sfreq;
  std::complex<double> h{0.0, 0.0};
  for (std::size_t k = 0; k < taps.size(); ++k) {
    h += taps[k] * std::polar(1.0, w * static_cast<double>(k));
  }
  return h;
}

double FirFilter::gain_db(double hz) const {
  return 20.0 * std::log10(std::max(std::abs(response(hz)), 1e-300));
}

namespace {

constexpr double kHammingWidth = 3.3;

std::vector<double> lowpass_prototype(double fc, double sfreq, int n_taps) {
  const double m = (n_taps - 1) / 2.0;
  const double fn = fc / sfreq;
  std::vector<double> h(static_cast<std::size_t>(n_taps));
  double sum = 0.0;
  for (int k = 0; k < n_taps; ++k) {
    const double x = k - m;
    const double sinc = x == 0.0 ? 2.0 * fn
                                 : std::sin(2.0 * std::numbers::pi * fn * x) / (std::numbers::pi * x);
    const double window = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * k / (n_taps - 1));
    h[static_cast<std::size_t>(k)] = sinc * window;
    sum += h[static_cast<std::size_t>(k)];
  }
  for (double& v : h) v /= sum;
  return h;
}

}  // namespace

FirFilter design_fir(FilterKind kind, std::vector<double> cutoffs, double transition_bw,
                     int n_taps, double sfreq) {
  if (!(sfreq > 0.0)) throw ParameterError("sfreq must be > 0");
  const std::size_t expected = kind == FilterKind::Bandpass ? 2 : 1;
  if (cutoffs.size() != expected) {
    throw ParameterError(std::string(to_string(kind)) + " needs " + std::to_string(expected) +
                         " cutoff(s)");
  }
  for (double fc : cutoffs) {
    if (!(fc > 0.0) || !(fc < sfreq / 2.0)) {
      throw ParameterError("cutoff " + std::to_string(fc) + " Hz outside (0, sfreq/2)");
    }
  }
  if (kind == FilterKind::Bandpass && !(cutoffs[0] < cutoffs[1])) {
    throw ParameterError("bandpass cutoffs must be increasing");
  }
  if (n_taps == 0) {
    if (!(transition_bw > 0.0)) throw ParameterError("transition_bw must be > 0");
    n_taps = static_cast<int>(std::ceil(kHammingWidth * sfreq / transition_bw));
    if (n_taps % 2 == 0) ++n_taps;
    n_taps = std::max(n_taps, 3);
  } else if (n_taps < 3 || n_taps % 2 == 0) {
    throw ParameterError("n_taps must be odd and >= 3");
  }

  FirFilter f;
  f.kind = kind;
  f.cutoffs = cutoffs;
  f.sfreq = sfreq;
  f.transition_bw = std::max(transition_bw, kHammingWidth * sfreq / n_taps);
  const int centre = (n_taps - 1) / 2;
  switch (kind) {
    case FilterKind::Lowpass:
      f.taps = lowpass_prototype(cutoffs[0], sfreq, n_taps);
      break;
    case FilterKind::Highpass:
      f.taps = lowpass_prototype(cutoffs[0], sfreq, n_taps);
      for (double& v : f.taps) v = -v;
      f.taps[static_cast<std::size_t>(centre)] += 1.0;
      break;
    case FilterKind::Bandpass: {
      const auto lo = lowpass_prototype(cutoffs[0], sfreq, n_taps);
      f.taps = lowpass_prototype(cutoffs[1], sfreq, n_taps);
      for (std::size_t k = 0; k < f.taps.size(); ++k) f.taps[k] -= lo[k];
      break;
    }
  }
  // Exact symmetry regardless of rounding in the prototype.
  for (int k = 0; k < centre; ++k) {
    const auto a = static_cast<std::size_t>(k);
    const auto b = static_cast<std::size_t>(n_taps - 1 - k);
    const double mean = 0.5 * (f.taps[a] + f.taps[b]);
    f.taps[a] = f.taps[b] = mean;
  }
  return f;
}

std::string filter_response_json(const FirFilter& filter, int n_points) {
  if (n_points < 2) throw ParameterError("n_points must be >= 2");
  nlohmann::ordered_json doc;
  doc["kind"] = std::string(to_string(filter.kind));
  doc["cutoffs"] = filter.cutoffs;
  doc["transition_bw"] = filter.transition_bw;
  doc["sfreq"] = filter.sfreq;
  doc["n_taps"] = filter.n_taps();
  doc["group_delay"] = filter.group_delay();
  doc["taps"] = filter.taps;
  std::vector<double> freqs, mag_db, phase;
  for (int k = 0; k < n_points; ++k) {
    const double hz = filter.sfreq / 2.0 * k / (n_points - 1);
    const auto h = filter.response(hz);
    freqs.push_back(hz);
    mag_db.push_back(20.0 * std::log10(std::max(std::abs(h), 1e-300)));
    phase.push_back(std::arg(h));
  }
  doc["freq_hz"] = freqs;
  doc["magnitude_db"] = mag_db;
  doc["phase_rad"] = phase;
  return doc.dump();
}

RealMatrix convolve_full(const FirFilter& filter, const RealMatrix& signal) {
  const Eigen::Index n = signal.cols();
  const auto l = static_cast<Eigen::Index>(filter.taps.size());
  RealMatrix out = RealMatrix::Zero(signal.rows(), n + l - 1);
  for (Eigen::Index c = 0; c < signal.rows(); ++c) {
    for (Eigen::Index t = 0; t < n; ++t) {
      const double x = signal(c, t);
      for (Eigen::Index k = 0; k < l; ++k) out(c, t + k) += filter.taps[static_cast<std::size_t>(k)] * x;
    }
  }
  return out;
}

FirStream::FirStream(FirFilter filter, std::shared_ptr<FftBackend> backend)
    : filter_(std::move(filter)), backend_(std::move(backend)) {
  if (filter_.taps.empty()) throw ParameterError("filter has no taps");
  if (!backend_) backend_ = make_fft_backend();
}

const std::vector<std::complex<double>>& FirStream::taps_spectrum(std::size_t fft_len) {
  auto it = spectra_.find(fft_len);
  if (it != spectra_.end()) return it->second;
  std::vector<double> padded(fft_len, 0.0);
  std::copy(filter_.taps.begin(), filter_.taps.end(), padded.begin());
  std::vector<std::complex<double>> spec(fft_len / 2 + 1);
  backend_->forward(padded, spec);
  return spectra_.emplace(fft_len, std::move(spec)).first->second;
}

RealMatrix FirStream::process(const RealMatrix& block) {
  if (n_channels_ < 0) {
    n_channels_ = block.rows();
    tail_ = RealMatrix::Zero(n_channels_, filter_.n_taps() - 1);
  } else if (block.rows() != n_channels_) {
    throw StreamError("filter stream expects " + std::to_string(n_channels_) +
                      " channels, got " + std::to_string(block.rows()));
  }
  const Eigen::Index n = block.cols();
  RealMatrix out(n_channels_, n);
  if (n == 0) return out;
  const Eigen::Index l = filter_.n_taps();
  const Eigen::Index full = n + l - 1;
  const std::size_t fft_len = fast_fft_size(static_cast<std::size_t>(full));
  const auto& h = taps_spectrum(fft_len);

  RealMatrix next_tail = RealMatrix::Zero(n_channels_, l - 1);
  parallel_for_each_index(static_cast<std::size_t>(n_channels_), [&](std::size_t cu) {
    const auto c = static_cast<Eigen::Index>(cu);
    std::vector<double> buf(fft_len, 0.0);
    for (Eigen::Index t = 0; t < n; ++t) buf[static_cast<std::size_t>(t)] = block(c, t);
    std::vector<std::complex<double>> spec(fft_len / 2 + 1);
    backend_->forward(buf, spec);
    for (std::size_t b = 0; b < spec.size(); ++b) spec[b] *= h[b];
    backend_->inverse(spec, buf);
    const double scale = 1.0 / static_cast<double>(fft_len);
    // Full block convolution y[0..full) plus the carried tail on the first l-1 samples.
    for (Eigen::Index t = 0; t < full; ++t) {
      double v = buf[static_cast<std::size_t>(t)] * scale;
      if (t < l - 1) v += tail_(c, t);
      if (t < n) {
        out(c, t) = v;
      } else {
        next_tail(c, t - n) = v;
      }
    }
  });
  tail_ = std::move(next_tail);
  samples_out_ += n;
  return out;
}

RealMatrix FirStream::flush(int n) {
  if (n_channels_ < 0) throw StreamError("flush before any data");
  return process(RealMatrix::Zero(n_channels_, n));
}

void FirStream::reset() {
  n_channels_ = -1;
  tail_.resize(0, 0);
  samples_out_ = 0;
}

}  // namespace connstream
