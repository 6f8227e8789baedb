#pragma once

#include <atomic>
#include <complex>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace connstream {

/// Real-input FFT engine. Implementations are safe to call from several threads at once.
class FftBackend {
 public:
  virtual ~FftBackend() = default;

  virtual std::string_view name() const = 0;

  /// Forward real-to-half-complex transform of length in.size(); out must hold n/2 + 1 values.
  void forward(std::span<const double> in, std::span<std::complex<double>> out);

  /// Unnormalized inverse of forward(); out.size() is the transform length n.
  void inverse(std::span<const std::complex<double>> in, std::span<double> out);

  std::uint64_t forward_calls() const { return forward_calls_.load(std::memory_order_relaxed); }
  std::uint64_t inverse_calls() const { return inverse_calls_.load(std::memory_order_relaxed); }

 protected:
  virtual void do_forward(std::span<const double> in, std::span<std::complex<double>> out) = 0;
  virtual void do_inverse(std::span<const std::complex<double>> in, std::span<double> out) = 0;

 private:
  std::atomic<std::uint64_t> forward_calls_{0};
  std::atomic<std::uint64_t> inverse_calls_{0};
};

/// "default" and "fftw" select FFTW3; "kiss" selects the KISS FFT shipped with Eigen.
std::shared_ptr<FftBackend> make_fft_backend(std::string_view name = "default");

/// Smallest size >= n whose only prime factors are 2, 3 and 5.
std::size_t fast_fft_size(std::size_t n);

/// One-sided spectrum of `signal` at resolution `nfft`: the first min(len, nfft) samples
/// are taken, their mean removed, and the result zero-padded to nfft.
std::vector<std::complex<double>> fft_real(std::span<const double> signal, int nfft,
                                           FftBackend& backend);

}  // namespace connstream
