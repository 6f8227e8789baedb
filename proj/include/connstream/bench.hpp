#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "connstream/core.hpp"

namespace connstream {

struct BenchCase {
  MetricId metric = MetricId::Coh;
  int n_nodes = 64;
  int window_sp = 1000;
  int n_trials = 1;
  int n_repeats = 5;
  bool storage = false;
};

struct BenchRow {
  BenchCase c;
  double mean_s = 0.0;
  double std_s = 0.0;
  bool timed_out = false;
};

struct BenchOptions {
  std::uint64_t seed = 1;
  double sfreq = 600.0;
  int nfft = 600;
  double band_lo_hz = 8.0;
  double band_hi_hz = 12.0;
  // A case whose warm-up run exceeds this is reported as timed out; larger cases of the
  // same metric are then skipped.
  double timeout_s = 30.0;
};

/// Times "metric calculation plus network construction" on seeded Gaussian data, one
/// warm-up run discarded. With storage on, per-trial intermediates (spectra, per-trial
/// correlations) are computed untimed beforehand and the timed region only combines them.
std::vector<BenchRow> run_sweep(const std::vector<BenchCase>& cases, const BenchOptions& options = {});

/// Window sweep (1 trial), trial sweep (1000 sp) and node sweep (1000 sp, 1 trial).
std::vector<BenchCase> default_sweep(const std::vector<MetricId>& metrics, int n_nodes = 64,
                                     int n_repeats = 5);
inline const std::vector<int> kBenchNodeCounts{32, 64, 128, 243, 265, 512};
inline const std::vector<int> kBenchWindows{100, 500, 1000, 2000, 5000, 10000};
inline const std::vector<int> kBenchTrials{1, 10, 50, 100};

void write_bench_csv(std::ostream& out, const std::vector<BenchRow>& rows);
std::vector<BenchRow> read_bench_csv(std::istream& in);

struct TrendCheck {
  std::string name;
  bool passed = true;
  bool evaluated = false;  // false when the sweep lacks the rows for it
  std::vector<std::string> offending;
};

struct TrendReport {
  std::vector<TrendCheck> checks;
  // Log-log slope of runtime over node count (>= 128 nodes) per metric.
  std::vector<std::pair<MetricId, double>> node_exponents;
  bool passed() const;
};

/// Ordinal checks: COR fastest and XCOR slowest in every comparable group, spectral
/// metrics within 3x of each other, spectral runtime at 5000 sp <= 2x that at 1000 sp,
/// node-count exponent in [1.7, 2.2].
TrendReport assert_trends(const std::vector<BenchRow>& rows);

}  // namespace connstream
