#include <doctest.h>

#include "connstream/fft.hpp"
#include "connstream/spectral.hpp"
#include "oracles.hpp"

using namespace connstream;

TEST_CASE("fft_real matches a direct DFT for both backends") {
  const auto epochs = oracle::random_epochs(1, 3, 50, 11);
  for (const char* name : {"fftw", "kiss"}) {
    auto backend = make_fft_backend(name);
    for (int nfft : {64, 50, 30, 600}) {
      const auto x = epochs[0].data.row(1);
      const auto got = fft_real(std::span<const double>(x.data(), 50), nfft, *backend);
      const auto ref = oracle::dft(x.data(), 50, nfft);
      REQUIRE(got.size() == ref.size());
      for (std::size_t k = 0; k < ref.size(); ++k) CHECK(std::abs(got[k] - ref[k]) < 1e-9);
    }
  }
}

TEST_CASE("fast_fft_size returns 5-smooth sizes") {
  CHECK(fast_fft_size(1) == 1);
  CHECK(fast_fft_size(97) == 100);
  CHECK(fast_fft_size(499) == 500);
  CHECK(fast_fft_size(1024) == 1024);
  CHECK(fast_fft_size(1025) == 1080);
}

TEST_CASE("accumulated sums equal direct per-trial sums") {
  const auto epochs = oracle::random_epochs(5, 4, 40, 5);
  SpectralOptions o;
  o.nfft = 32;
  o.first_bin = 2;
  o.last_bin = 9;
  auto backend = make_fft_backend();
  SpectrumSet acc(4, o.nfft, o.first_bin, o.n_computed_bins());
  for (const auto& e : epochs) accumulate_spectra(acc, trial_spectra(e, o, *backend));
  CHECK(acc.n_trials_accumulated() == 5);
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      for (int b = 2; b <= 9; ++b) {
        std::complex<double> ref{0, 0};
        for (const auto& e : epochs) {
          const auto xi = oracle::dft(e.data.row(i).data(), 40, 32);
          const auto xj = oracle::dft(e.data.row(j).data(), 40, 32);
          ref += xi[b] * std::conj(xj[b]);
        }
        CHECK(std::abs(acc.csd(i, j, b) - ref) < 1e-9 * (1.0 + std::abs(ref)));
      }
    }
  }
}

TEST_CASE("remove_spectra undoes accumulate_spectra") {
  const auto epochs = oracle::random_epochs(3, 3, 64, 8);
  SpectralOptions o;
  o.nfft = 64;
  auto backend = make_fft_backend();
  SpectrumSet a(3, 64, 0, o.n_computed_bins());
  SpectrumSet b(3, 64, 0, o.n_computed_bins());
  accumulate_spectra(a, trial_spectra(epochs[0], o, *backend));
  accumulate_spectra(b, trial_spectra(epochs[0], o, *backend));
  const auto extra = trial_spectra(epochs[1], o, *backend);
  accumulate_spectra(b, extra);
  remove_spectra(b, extra);
  CHECK(b.n_trials_accumulated() == 1);
  for (std::size_t k = 0; k < a.csd_sum.size(); ++k) {
    CHECK(std::abs(a.csd_sum[k] - b.csd_sum[k]) < 1e-9);
    CHECK(std::abs(a.pli_sum[k] - b.pli_sum[k]) < 1e-12);
  }
}

TEST_CASE("mismatched spectra are rejected") {
  SpectrumSet acc(3, 64, 0, 33);
  auto backend = make_fft_backend();
  SpectralOptions o;
  o.nfft = 32;
  const auto e = oracle::random_epochs(1, 3, 32, 1)[0];
  CHECK_THROWS_AS(accumulate_spectra(acc, trial_spectra(e, o, *backend)), DimensionError);
}

TEST_CASE("spectral options validate") {
  SpectralOptions o;
  o.nfft = 1;
  CHECK_THROWS_AS(o.validate(), ParameterError);
  o.nfft = 64;
  o.first_bin = 10;
  o.last_bin = 5;
  CHECK_THROWS_AS(o.validate(), ParameterError);
  o.last_bin = 40;
  CHECK_THROWS_AS(o.validate(), ParameterError);
}
