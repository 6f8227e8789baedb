#pragma once

#include <complex>
#include <cstddef>
#include <string>
#include <vector>

#include "connstream/core.hpp"
#include "connstream/fft.hpp"

namespace connstream {

enum class SpectralMode {
  Fixed,  // exactly nfft samples per trial (crop or zero-pad)
  Welch,  // mean cross-spectrum over consecutive non-overlapping nfft segments
};

SpectralMode parse_spectral_mode(std::string_view name);

struct SpectralOptions {
  int nfft = 600;
  SpectralMode mode = SpectralMode::Fixed;
  std::string fft_backend = "default";
  // Bins held by accumulators; -1 for last_bin means nfft / 2.
  int first_bin = 0;
  int last_bin = -1;

  int n_bins_total() const { return nfft / 2 + 1; }
  int resolved_last_bin() const { return last_bin < 0 ? nfft / 2 : last_bin; }
  int n_computed_bins() const { return resolved_last_bin() - first_bin + 1; }
  void validate() const;
};

/// Per-trial spectra restricted to the computed bin window: one channels x bins matrix
/// per segment (a single segment in fixed mode).
struct TrialSpectra {
  std::vector<ComplexMatrix> segments;
  int first_bin = 0;

  Eigen::Index n_channels() const { return segments.empty() ? 0 : segments.front().rows(); }
  Eigen::Index n_bins() const { return segments.empty() ? 0 : segments.front().cols(); }
  std::size_t memory_bytes() const;
};

/// |Im CSD| at or below this fraction of |CSD| counts as zero in the sign-based sums,
/// so zero-lag pairs are not flipped to +-1 by FFT rounding.
inline constexpr double kImagZeroTolerance = 1e-12;

/// Running cross-spectral sums over trials. Pair arrays are laid out pair-major
/// (pair_index order, i < j) with the computed bins contiguous per pair; the lower
/// triangle is the conjugate and is never stored.
class SpectrumSet {
 public:
  SpectrumSet() = default;
  SpectrumSet(int n_channels, int nfft, int first_bin, int n_bins);

  int n_channels() const { return n_channels_; }
  int nfft() const { return nfft_; }
  int first_bin() const { return first_bin_; }
  int n_bins() const { return n_bins_; }
  std::size_t n_pairs() const { return pair_count(static_cast<std::size_t>(n_channels_)); }
  int n_trials_accumulated() const { return n_trials_; }

  std::size_t offset(std::size_t pair, int bin) const {
    return pair * static_cast<std::size_t>(n_bins_) + static_cast<std::size_t>(bin - first_bin_);
  }

  /// Full cross-spectral sum for any ordered channel pair, including the diagonal.
  std::complex<double> csd(int i, int j, int bin) const;

  // Spectra of the most recently accumulated trial (first segment).
  ComplexMatrix spectra;
  std::vector<std::complex<double>> csd_sum;
  RealMatrix psd_sum;  // channels x bins
  std::vector<std::complex<double>> plv_sum;
  std::vector<double> pli_sum;
  std::vector<double> im_sum;
  std::vector<double> abs_im_sum;

  std::size_t memory_bytes() const;
  void clear();

 private:
  friend void accumulate_impl(SpectrumSet&, const TrialSpectra&, double);

  int n_channels_ = 0;
  int nfft_ = 0;
  int first_bin_ = 0;
  int n_bins_ = 0;
  int n_trials_ = 0;
};

/// fft_real for every channel (rows) of the epoch, sliced to the computed bins.
TrialSpectra trial_spectra(const EpochMatrix& epoch, const SpectralOptions& options,
                           FftBackend& backend);

/// Full one-sided spectra, channels x (nfft/2 + 1), fixed mode.
ComplexMatrix trial_spectra(const EpochMatrix& epoch, int nfft, FftBackend& backend);

void accumulate_spectra(SpectrumSet& acc, const TrialSpectra& trial);
/// Single-segment convenience form; `spectra` must cover the accumulator's bin window.
void accumulate_spectra(SpectrumSet& acc, const ComplexMatrix& spectra);
/// Exact inverse of accumulate_spectra for a trial that was previously added.
void remove_spectra(SpectrumSet& acc, const TrialSpectra& trial);

}  // namespace connstream
