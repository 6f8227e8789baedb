#pragma once

#include <complex>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "connstream/core.hpp"
#include "connstream/fft.hpp"

namespace connstream {

enum class FilterKind { Lowpass, Highpass, Bandpass };

FilterKind parse_filter_kind(std::string_view name);
std::string_view to_string(FilterKind kind);

/// Linear-phase FIR filter (odd length, symmetric taps).
struct FirFilter {
  std::vector<double> taps;
  FilterKind kind = FilterKind::Lowpass;
  std::vector<double> cutoffs;  // Hz; one for low/highpass, two for bandpass
  double transition_bw = 0.0;   // Hz, as realized by the tap count
  double sfreq = 1.0;

  int n_taps() const { return static_cast<int>(taps.size()); }
  int group_delay() const { return (n_taps() - 1) / 2; }
  std::complex<double> response(double hz) const;
  double gain_db(double hz) const;
};

/// Hamming windowed-sinc design.
///
/// n_taps = 0 picks the smallest odd length whose Hamming transition width
/// (3.3 * sfreq / n_taps) fits inside transition_bw. With an explicit n_taps the realized
/// transition width is max(transition_bw, 3.3 * sfreq / n_taps). Highpass is the spectral
/// inverse of the matching lowpass; bandpass is the difference of two lowpasses. Every
/// lowpass prototype is scaled to unit DC gain.
FirFilter design_fir(FilterKind kind, std::vector<double> cutoffs, double transition_bw,
                     int n_taps, double sfreq);

/// Taps plus magnitude/phase response on n_points frequencies in [0, sfreq/2].
std::string filter_response_json(const FirFilter& filter, int n_points = 257);

/// Direct-form convolution of every row, full length (n + taps - 1). Test oracle and
/// offline reference.
RealMatrix convolve_full(const FirFilter& filter, const RealMatrix& signal);

/// Causal streaming filter using FFT overlap-add. The output of process() is the running
/// convolution: sample n of the stream is sum_k taps[k] * x[n - k], so output lags the
/// input by group_delay() samples.
class FirStream {
 public:
  explicit FirStream(FirFilter filter, std::shared_ptr<FftBackend> backend = nullptr);

  /// block: channels x samples. The channel count is fixed by the first call.
  RealMatrix process(const RealMatrix& block);
  /// Output for `n` samples of zero input; used to drain the delay at end of stream.
  RealMatrix flush(int n);
  void reset();

  const FirFilter& filter() const { return filter_; }
  int group_delay() const { return filter_.group_delay(); }
  std::int64_t samples_out() const { return samples_out_; }

 private:
  const std::vector<std::complex<double>>& taps_spectrum(std::size_t fft_len);

  FirFilter filter_;
  std::shared_ptr<FftBackend> backend_;
  std::map<std::size_t, std::vector<std::complex<double>>> spectra_;
  RealMatrix tail_;  // channels x (taps - 1) pending overlap
  Eigen::Index n_channels_ = -1;
  std::int64_t samples_out_ = 0;
};

}  // namespace connstream
