#include "connstream/spectral.hpp"

#include <algorithm>
#include <cmath>

#include "connstream/parallel.hpp"

namespace connstream {

SpectralMode parse_spectral_mode(std::string_view name) {
  if (name == "fixed") return SpectralMode::Fixed;
  if (name == "welch") return SpectralMode::Welch;
  throw ParameterError("unknown spectral mode '" + std::string(name) + "'");
}

void SpectralOptions::validate() const {
  if (nfft < 2) throw ParameterError("nfft must be >= 2");
  const int last = resolved_last_bin();
  if (first_bin < 0 || last < first_bin || last > nfft / 2) {
    throw ParameterError("computed bin window outside 0..nfft/2");
  }
}

std::size_t TrialSpectra::memory_bytes() const {
  std::size_t bytes = 0;
  for (const auto& s : segments) bytes += static_cast<std::size_t>(s.size()) * sizeof(s(0, 0));
  return bytes;
}

SpectrumSet::SpectrumSet(int n_channels, int nfft, int first_bin, int n_bins)
    : n_channels_(n_channels), nfft_(nfft), first_bin_(first_bin), n_bins_(n_bins) {
  if (n_channels < 1 || nfft < 2 || n_bins < 1 || first_bin < 0 ||
      first_bin + n_bins > nfft / 2 + 1) {
    throw ParameterError("invalid SpectrumSet dimensions");
  }
  clear();
}

void SpectrumSet::clear() {
  const std::size_t n = n_pairs() * static_cast<std::size_t>(n_bins_);
  spectra = ComplexMatrix::Zero(n_channels_, n_bins_);
  csd_sum.assign(n, {0.0, 0.0});
  plv_sum.assign(n, {0.0, 0.0});
  pli_sum.assign(n, 0.0);
  im_sum.assign(n, 0.0);
  abs_im_sum.assign(n, 0.0);
  psd_sum = RealMatrix::Zero(n_channels_, n_bins_);
  n_trials_ = 0;
}

std::complex<double> SpectrumSet::csd(int i, int j, int bin) const {
  if (i == j) return {psd_sum(i, bin - first_bin_), 0.0};
  if (i < j) return csd_sum[offset(pair_index(i, j, n_channels_), bin)];
  return std::conj(csd_sum[offset(pair_index(j, i, n_channels_), bin)]);
}

std::size_t SpectrumSet::memory_bytes() const {
  const std::size_t n = csd_sum.size();
  return n * (2 * sizeof(std::complex<double>) + 3 * sizeof(double)) +
         static_cast<std::size_t>(psd_sum.size()) * sizeof(double) +
         static_cast<std::size_t>(spectra.size()) * sizeof(std::complex<double>);
}

ComplexMatrix trial_spectra(const EpochMatrix& epoch, int nfft, FftBackend& backend) {
  epoch.validate();
  const Eigen::Index n_bins = nfft / 2 + 1;
  ComplexMatrix out(epoch.n_channels(), n_bins);
  parallel_for_each_index(static_cast<std::size_t>(epoch.n_channels()), [&](std::size_t c) {
    const auto row = epoch.data.row(static_cast<Eigen::Index>(c));
    const auto spec = fft_real(std::span<const double>(row.data(), static_cast<std::size_t>(row.size())),
                               nfft, backend);
    for (Eigen::Index b = 0; b < n_bins; ++b) out(static_cast<Eigen::Index>(c), b) = spec[static_cast<std::size_t>(b)];
  });
  return out;
}

TrialSpectra trial_spectra(const EpochMatrix& epoch, const SpectralOptions& options,
                           FftBackend& backend) {
  options.validate();
  const auto n_samples = static_cast<std::size_t>(epoch.n_samples());
  const auto nfft = static_cast<std::size_t>(options.nfft);
  std::size_t n_segments = 1;
  if (options.mode == SpectralMode::Welch && n_samples > nfft) n_segments = n_samples / nfft;
  // samples past the last segment never reach an FFT
  epoch.validate(static_cast<Eigen::Index>(std::min(n_samples, n_segments * nfft)));

  TrialSpectra out;
  out.first_bin = options.first_bin;
  const int n_bins = options.n_computed_bins();
  out.segments.assign(n_segments, ComplexMatrix(epoch.n_channels(), n_bins));
  const std::size_t n_channels = static_cast<std::size_t>(epoch.n_channels());
  parallel_for_each_index(n_channels * n_segments, [&](std::size_t task) {
    const std::size_t c = task / n_segments;
    const std::size_t s = task % n_segments;
    const double* row = epoch.data.row(static_cast<Eigen::Index>(c)).data();
    const std::size_t begin = s * nfft;
    const std::size_t len = std::min(nfft, n_samples - begin);
    const auto spec = fft_real(std::span<const double>(row + begin, len), options.nfft, backend);
    auto& dst = out.segments[s];
    for (int b = 0; b < n_bins; ++b) {
      dst(static_cast<Eigen::Index>(c), b) = spec[static_cast<std::size_t>(options.first_bin + b)];
    }
  });
  return out;
}

void accumulate_impl(SpectrumSet& acc, const TrialSpectra& trial, double sign) {
  if (trial.segments.empty() || trial.n_channels() != acc.n_channels() ||
      trial.n_bins() != acc.n_bins() || trial.first_bin != acc.first_bin()) {
    throw DimensionError("trial spectra do not match the accumulator");
  }
  const int n_ch = acc.n_channels();
  const int n_bins = acc.n_bins();
  const std::size_t n_seg = trial.segments.size();
  const double seg_scale = 1.0 / static_cast<double>(n_seg);

  // Diagonal: power.
  for (int c = 0; c < n_ch; ++c) {
    for (int b = 0; b < n_bins; ++b) {
      double p = 0.0;
      for (const auto& seg : trial.segments) p += std::norm(seg(c, b));
      acc.psd_sum(c, b) += sign * p * seg_scale;
    }
  }

  // Raw views so the per-bin loop is branch-free and vectorizable.
  auto* csd = reinterpret_cast<double*>(acc.csd_sum.data());
  auto* plv = reinterpret_cast<double*>(acc.plv_sum.data());
  double* pli = acc.pli_sum.data();
  double* ims = acc.im_sum.data();
  double* abs_im = acc.abs_im_sum.data();

  parallel_for_each_index(static_cast<std::size_t>(n_ch), [&](std::size_t i) {
    std::vector<double> re(static_cast<std::size_t>(n_bins));
    std::vector<double> im(static_cast<std::size_t>(n_bins));
    for (int j = static_cast<int>(i) + 1; j < n_ch; ++j) {
      std::fill(re.begin(), re.end(), 0.0);
      std::fill(im.begin(), im.end(), 0.0);
      for (const auto& seg : trial.segments) {
        const auto* xi = reinterpret_cast<const double*>(seg.row(static_cast<Eigen::Index>(i)).data());
        const auto* xj = reinterpret_cast<const double*>(seg.row(j).data());
        for (int b = 0; b < n_bins; ++b) {
          const double ar = xi[2 * b], ai = xi[2 * b + 1];
          const double br = xj[2 * b], bi = xj[2 * b + 1];
          // x_i * conj(x_j)
          re[static_cast<std::size_t>(b)] += ar * br + ai * bi;
          im[static_cast<std::size_t>(b)] += ai * br - ar * bi;
        }
      }
      const std::size_t base = acc.offset(pair_index(i, static_cast<std::size_t>(j),
                                                     static_cast<std::size_t>(n_ch)),
                                          acc.first_bin());
      double* c = csd + 2 * base;
      double* u = plv + 2 * base;
      double* p = pli + base;
      double* m = ims + base;
      double* a = abs_im + base;
      for (int b = 0; b < n_bins; ++b) {
        const double cr = re[static_cast<std::size_t>(b)] * seg_scale;
        const double ci = im[static_cast<std::size_t>(b)] * seg_scale;
        const double mag = std::sqrt(cr * cr + ci * ci);
        const double inv = mag > 0.0 ? sign / mag : 0.0;
        c[2 * b] += sign * cr;
        c[2 * b + 1] += sign * ci;
        u[2 * b] += cr * inv;
        u[2 * b + 1] += ci * inv;
        const double imag_eff = std::abs(ci) <= kImagZeroTolerance * mag ? 0.0 : ci;
        p[b] += sign * static_cast<double>((imag_eff > 0.0) - (imag_eff < 0.0));
        m[b] += sign * imag_eff;
        a[b] += sign * std::abs(imag_eff);
      }
    }
  });

  acc.n_trials_ += sign > 0 ? 1 : -1;
  if (sign > 0) acc.spectra = trial.segments.front();
}

void accumulate_spectra(SpectrumSet& acc, const TrialSpectra& trial) {
  accumulate_impl(acc, trial, 1.0);
}

void accumulate_spectra(SpectrumSet& acc, const ComplexMatrix& spectra) {
  TrialSpectra trial;
  trial.first_bin = acc.first_bin();
  if (spectra.cols() == acc.n_bins()) {
    trial.segments.push_back(spectra);
  } else if (spectra.cols() >= acc.first_bin() + acc.n_bins()) {
    trial.segments.push_back(spectra.middleCols(acc.first_bin(), acc.n_bins()));
  } else {
    throw DimensionError("spectra do not cover the accumulator's bins");
  }
  accumulate_impl(acc, trial, 1.0);
}

void remove_spectra(SpectrumSet& acc, const TrialSpectra& trial) {
  if (acc.n_trials_accumulated() < 1) throw NoDataError("no trial to remove");
  accumulate_impl(acc, trial, -1.0);
}

}  // namespace connstream
