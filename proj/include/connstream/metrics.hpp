#pragma once

#include <span>
#include <vector>

#include "connstream/core.hpp"
#include "connstream/fft.hpp"
#include "connstream/spectral.hpp"

namespace connstream {

/// Per-pair, per-bin values of a spectral metric over bins [first_bin, first_bin + cols).
/// `im` is only filled for COHY.
struct SpectralValues {
  RealMatrix re;
  RealMatrix im;
  bool is_complex = false;
  int first_bin = 0;
};

/// Finalizes `metric` for bins lo_bin..hi_bin (inclusive) from accumulated sums.
/// Throws DegenerateTrialCountError for USPLI with fewer than two trials and
/// NoDataError when nothing has been accumulated.
SpectralValues spectral_bins(const SpectrumSet& acc, MetricId metric, int lo_bin, int hi_bin);

/// Band-averaged all-to-all network for a spectral metric.
ConnectivityNetwork spectral_network(const SpectrumSet& acc, MetricId metric,
                                     const FrequencyBand& band);

ConnectivityNetwork cohy(const SpectrumSet& acc, const FrequencyBand& band);
ConnectivityNetwork coh(const SpectrumSet& acc, const FrequencyBand& band);
ConnectivityNetwork imagcohy(const SpectrumSet& acc, const FrequencyBand& band);
ConnectivityNetwork plv(const SpectrumSet& acc, const FrequencyBand& band);
ConnectivityNetwork pli(const SpectrumSet& acc, const FrequencyBand& band);
ConnectivityNetwork uspli(const SpectrumSet& acc, const FrequencyBand& band);
ConnectivityNetwork wpli(const SpectrumSet& acc, const FrequencyBand& band);
ConnectivityNetwork dswpli(const SpectrumSet& acc, const FrequencyBand& band);

// ---- time domain ---------------------------------------------------------------

/// Pearson correlation of every channel pair for one trial.
struct CorContribution {
  std::vector<double> values;  // pair_index order
  std::vector<int> dead_channels;
};

CorContribution cor_trial(const EpochMatrix& epoch);

/// Trial-averaged Pearson correlation. Zero-variance channels give 0-weight edges and a
/// warning on the network.
ConnectivityNetwork cor(std::span<const EpochMatrix> epochs);

struct XcorContribution {
  std::vector<XCorEdgeValue> values;  // pair_index order
  std::vector<int> dead_channels;
};

/// Normalized cross-correlation of channel i (x) against channel j (y):
///
///   r(lag) = sum_t x'(t) y'(t + lag) / sqrt(sum_overlap x'(t)^2 * sum_all y'(t)^2)
///
/// with x', y' centred on their full-window means and the x sum taken over the samples
/// that overlap y at that lag. Positive lag means y lags x. Peak = largest r(lag) over
/// |lag| <= max_lag (max_lag < 0 means n_samples - 1); ties keep the most negative lag.
XcorContribution xcor_trial(const EpochMatrix& epoch, int max_lag, FftBackend& backend);

/// r(lag) for lag = -max_lag..max_lag between two signals, computed by FFT.
std::vector<double> normalized_xcorr(std::span<const double> x, std::span<const double> y,
                                     int max_lag, FftBackend& backend);

/// Per pair: mean of the per-trial peak values and the rounded mean of the per-trial peak
/// lags. Edge weight is |mean peak|.
ConnectivityNetwork xcor(std::span<const EpochMatrix> epochs, int max_lag,
                         FftBackend& backend);
ConnectivityNetwork xcor(std::span<const EpochMatrix> epochs, int max_lag = -1);

/// Builds a network from per-pair scalar values (pair_index order).
ConnectivityNetwork network_from_pairs(MetricId metric, std::size_t n_channels,
                                       std::span<const double> values, const FrequencyBand& band,
                                       int n_trials);

}  // namespace connstream
