#include "connstream/fft.hpp"

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <map>
#include <mutex>
#include <numeric>

#include <fftw3.h>
#include <unsupported/Eigen/FFT>

#include "connstream/errors.hpp"

namespace connstream {

void FftBackend::forward(std::span<const double> in, std::span<std::complex<double>> out) {
  if (in.size() < 2 || out.size() != in.size() / 2 + 1) {
    throw ParameterError("fft: output must hold n/2 + 1 bins");
  }
  forward_calls_.fetch_add(1, std::memory_order_relaxed);
  do_forward(in, out);
}

void FftBackend::inverse(std::span<const std::complex<double>> in, std::span<double> out) {
  if (out.size() < 2 || in.size() != out.size() / 2 + 1) {
    throw ParameterError("ifft: input must hold n/2 + 1 bins");
  }
  inverse_calls_.fetch_add(1, std::memory_order_relaxed);
  do_inverse(in, out);
}

namespace {

// Plans are created once per length under a lock and then executed through the
// new-array interface, which FFTW documents as thread-safe. Execution goes through
// aligned per-thread buffers so the plans can use SIMD kernels.
class FftwBackend final : public FftBackend {
 public:
  ~FftwBackend() override {
    std::lock_guard lock(planner_mutex());
    for (auto& [n, plan] : r2c_) fftw_destroy_plan(plan);
    for (auto& [n, plan] : c2r_) fftw_destroy_plan(plan);
  }

  std::string_view name() const override { return "fftw"; }

 protected:
  void do_forward(std::span<const double> in, std::span<std::complex<double>> out) override {
    const std::size_t n = in.size();
    fftw_plan plan = cached_plan(n, /*forward=*/true);
    auto& buf = buffers();
    buf.reserve(n);
    std::copy(in.begin(), in.end(), buf.real);
    fftw_execute_dft_r2c(plan, buf.real, buf.cplx);
    std::copy_n(reinterpret_cast<const std::complex<double>*>(buf.cplx), out.size(), out.begin());
  }

  void do_inverse(std::span<const std::complex<double>> in, std::span<double> out) override {
    const std::size_t n = out.size();
    fftw_plan plan = cached_plan(n, /*forward=*/false);
    auto& buf = buffers();
    buf.reserve(n);
    std::copy(in.begin(), in.end(), reinterpret_cast<std::complex<double>*>(buf.cplx));
    fftw_execute_dft_c2r(plan, buf.cplx, buf.real);
    std::copy_n(buf.real, n, out.begin());
  }

 private:
  struct Buffers {
    double* real = nullptr;
    fftw_complex* cplx = nullptr;
    std::size_t capacity = 0;

    void reserve(std::size_t n) {
      if (n <= capacity) return;
      release();
      real = fftw_alloc_real(n);
      cplx = fftw_alloc_complex(n / 2 + 1);
      capacity = n;
    }
    void release() {
      fftw_free(real);
      fftw_free(cplx);
      real = nullptr;
      cplx = nullptr;
      capacity = 0;
    }
    ~Buffers() { release(); }
  };

  static Buffers& buffers() {
    thread_local Buffers b;
    return b;
  }

  static std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
  }

  // Skips the planner lock when a thread keeps asking for the same transform.
  fftw_plan cached_plan(std::size_t n, bool forward) {
    struct Last {
      std::uint64_t backend = 0;
      std::size_t n = 0;
      bool forward = false;
      fftw_plan plan = nullptr;
    };
    thread_local Last last[2];
    Last& l = last[forward ? 1 : 0];
    if (l.backend == id_ && l.n == n) return l.plan;
    l = {id_, n, forward, plan_for(n, forward)};
    return l.plan;
  }

  fftw_plan plan_for(std::size_t n, bool forward) {
    std::lock_guard lock(planner_mutex());
    auto& plans = forward ? r2c_ : c2r_;
    if (auto it = plans.find(n); it != plans.end()) return it->second;
    double* real = fftw_alloc_real(n);
    fftw_complex* cplx = fftw_alloc_complex(n / 2 + 1);
    fftw_plan plan = forward ? fftw_plan_dft_r2c_1d(static_cast<int>(n), real, cplx, FFTW_ESTIMATE)
                             : fftw_plan_dft_c2r_1d(static_cast<int>(n), cplx, real, FFTW_ESTIMATE);
    fftw_free(real);
    fftw_free(cplx);
    plans.emplace(n, plan);
    return plan;
  }

  static std::uint64_t next_id() {
    static std::atomic<std::uint64_t> counter{0};
    return ++counter;
  }

  const std::uint64_t id_ = next_id();
  std::map<std::size_t, fftw_plan> r2c_;
  std::map<std::size_t, fftw_plan> c2r_;
};

class KissBackend final : public FftBackend {
 public:
  std::string_view name() const override { return "kiss"; }

 protected:
  void do_forward(std::span<const double> in, std::span<std::complex<double>> out) override {
    thread_local Eigen::FFT<double> fft;
    thread_local std::vector<double> src;
    thread_local std::vector<std::complex<double>> dst;
    fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
    src.assign(in.begin(), in.end());
    fft.fwd(dst, src);
    std::copy_n(dst.begin(), out.size(), out.begin());
  }

  void do_inverse(std::span<const std::complex<double>> in, std::span<double> out) override {
    thread_local Eigen::FFT<double> fft;
    thread_local std::vector<std::complex<double>> src;
    thread_local std::vector<double> dst;
    fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
    fft.SetFlag(Eigen::FFT<double>::Unscaled);
    src.assign(in.begin(), in.end());
    fft.inv(dst, src, static_cast<Eigen::Index>(out.size()));
    std::copy_n(dst.begin(), out.size(), out.begin());
  }
};

}  // namespace

std::shared_ptr<FftBackend> make_fft_backend(std::string_view name) {
  if (name == "default" || name == "fftw") return std::make_shared<FftwBackend>();
  if (name == "kiss") return std::make_shared<KissBackend>();
  throw ParameterError("unknown FFT backend '" + std::string(name) + "'");
}

std::size_t fast_fft_size(std::size_t n) {
  for (std::size_t m = std::max<std::size_t>(n, 1);; ++m) {
    std::size_t r = m;
    for (std::size_t p : {2, 3, 5}) {
      while (r % p == 0) r /= p;
    }
    if (r == 1) return m;
  }
}

std::vector<std::complex<double>> fft_real(std::span<const double> signal, int nfft,
                                           FftBackend& backend) {
  if (nfft < 2) throw ParameterError("nfft must be >= 2");
  if (signal.empty()) throw ParameterError("signal must not be empty");
  const std::size_t used = std::min<std::size_t>(signal.size(), static_cast<std::size_t>(nfft));
  std::vector<double> buffer(static_cast<std::size_t>(nfft), 0.0);
  const double mean =
      std::accumulate(signal.begin(), signal.begin() + static_cast<std::ptrdiff_t>(used), 0.0) /
      static_cast<double>(used);
  for (std::size_t t = 0; t < used; ++t) buffer[t] = signal[t] - mean;
  std::vector<std::complex<double>> out(static_cast<std::size_t>(nfft / 2 + 1));
  backend.forward(buffer, out);
  return out;
}

}  // namespace connstream
