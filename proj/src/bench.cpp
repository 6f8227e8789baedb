#include "connstream/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <random>
#include <sstream>
#include <tuple>

#include "connstream/errors.hpp"
#include "connstream/metrics.hpp"
#include "connstream/spectral.hpp"

namespace connstream {

namespace {

using Clock = std::chrono::steady_clock;

std::vector<EpochMatrix> gaussian_epochs(const BenchCase& c, double sfreq, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<EpochMatrix> out(static_cast<std::size_t>(c.n_trials));
  for (int k = 0; k < c.n_trials; ++k) {
    auto& e = out[static_cast<std::size_t>(k)];
    e.sfreq = sfreq;
    e.trial_index = static_cast<std::size_t>(k);
    e.data.resize(c.n_nodes, c.window_sp);
    for (Eigen::Index i = 0; i < e.data.size(); ++i) e.data.data()[i] = gauss(rng);
  }
  return out;
}

// Per-trial intermediates for storage mode.
struct Stored {
  std::vector<TrialSpectra> spectra;
  std::vector<CorContribution> cor;
  std::vector<XcorContribution> xcor;
};

class CaseRunner {
 public:
  CaseRunner(const BenchCase& c, const BenchOptions& o)
      : c_(c), backend_(make_fft_backend()), epochs_(gaussian_epochs(c, o.sfreq, o.seed)) {
    spectral_.nfft = o.nfft;
    const double bin_hz = o.sfreq / o.nfft;
    band_.lo_bin = static_cast<int>(std::lround(o.band_lo_hz / bin_hz));
    band_.hi_bin = static_cast<int>(std::lround(o.band_hi_hz / bin_hz));
    band_.bin_hz = bin_hz;
    spectral_.first_bin = band_.lo_bin;
    spectral_.last_bin = band_.hi_bin;
    if (c.storage) prepare();
  }

  ConnectivityNetwork run() { return c_.storage ? combine() : compute(); }

 private:
  void prepare() {
    for (const auto& e : epochs_) {
      if (is_spectral(c_.metric)) {
        stored_.spectra.push_back(trial_spectra(e, spectral_, *backend_));
      } else if (c_.metric == MetricId::Cor) {
        stored_.cor.push_back(cor_trial(e));
      } else {
        stored_.xcor.push_back(xcor_trial(e, -1, *backend_));
      }
    }
  }

  SpectrumSet fresh_sums() const {
    return SpectrumSet(c_.n_nodes, spectral_.nfft, spectral_.first_bin, spectral_.n_computed_bins());
  }

  ConnectivityNetwork compute() {
    if (is_spectral(c_.metric)) {
      SpectrumSet acc = fresh_sums();
      for (const auto& e : epochs_) accumulate_spectra(acc, trial_spectra(e, spectral_, *backend_));
      return spectral_network(acc, c_.metric, band_);
    }
    if (c_.metric == MetricId::Cor) return cor(epochs_);
    return xcor(epochs_, -1, *backend_);
  }

  ConnectivityNetwork combine() {
    if (is_spectral(c_.metric)) {
      SpectrumSet acc = fresh_sums();
      for (const auto& s : stored_.spectra) accumulate_spectra(acc, s);
      return spectral_network(acc, c_.metric, band_);
    }
    const auto n = static_cast<std::size_t>(c_.n_nodes);
    const double k = static_cast<double>(c_.n_trials);
    if (c_.metric == MetricId::Cor) {
      std::vector<double> sum(pair_count(n), 0.0);
      for (const auto& t : stored_.cor) {
        for (std::size_t p = 0; p < sum.size(); ++p) sum[p] += t.values[p];
      }
      for (double& v : sum) v /= k;
      return network_from_pairs(MetricId::Cor, n, sum, FrequencyBand{}, c_.n_trials);
    }
    std::vector<double> value(pair_count(n), 0.0), lag(pair_count(n), 0.0);
    for (const auto& t : stored_.xcor) {
      for (std::size_t p = 0; p < value.size(); ++p) {
        value[p] += t.values[p].peak_value;
        lag[p] += t.values[p].peak_lag;
      }
    }
    for (std::size_t p = 0; p < value.size(); ++p) value[p] = std::abs(value[p] / k);
    ConnectivityNetwork net = network_from_pairs(MetricId::Xcor, n, value, FrequencyBand{}, c_.n_trials);
    for (std::size_t p = 0; p < value.size(); ++p) net.edges[p].lag = static_cast<int>(std::lround(lag[p] / k));
    return net;
  }

  BenchCase c_;
  std::shared_ptr<FftBackend> backend_;
  std::vector<EpochMatrix> epochs_;
  SpectralOptions spectral_;
  FrequencyBand band_;
  Stored stored_;
};

double seconds(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

bool dominates(const BenchCase& big, const BenchCase& small) {
  return big.metric == small.metric && big.storage == small.storage && big.n_nodes >= small.n_nodes &&
         big.window_sp >= small.window_sp && big.n_trials >= small.n_trials;
}

}  // namespace

std::vector<BenchRow> run_sweep(const std::vector<BenchCase>& cases, const BenchOptions& options) {
  std::vector<BenchRow> rows;
  std::vector<BenchCase> timed_out;
  for (const auto& c : cases) {
    if (c.n_nodes < 2 || c.window_sp < 1 || c.n_trials < 1 || c.n_repeats < 1) {
      throw ParameterError("bench case parameters must be positive (n_nodes >= 2)");
    }
    if (c.metric == MetricId::Uspli && c.n_trials < 2) throw ParameterError("USPLI needs at least 2 trials");
    BenchRow row;
    row.c = c;
    if (std::any_of(timed_out.begin(), timed_out.end(), [&](const BenchCase& t) { return dominates(c, t); })) {
      row.timed_out = true;
      row.mean_s = row.std_s = std::nan("");
      rows.push_back(row);
      continue;
    }
    CaseRunner runner(c, options);
    auto t0 = Clock::now();
    (void)runner.run();  // warm-up
    if (seconds(t0) > options.timeout_s) {
      row.timed_out = true;
      row.mean_s = row.std_s = std::nan("");
      timed_out.push_back(c);
      rows.push_back(row);
      continue;
    }
    std::vector<double> t(static_cast<std::size_t>(c.n_repeats));
    for (auto& ti : t) {
      t0 = Clock::now();
      const ConnectivityNetwork net = runner.run();
      ti = seconds(t0);
      if (net.edges.size() != pair_count(static_cast<std::size_t>(c.n_nodes))) {
        throw NumericalError("bench network has the wrong size", 0.0);
      }
    }
    double mean = 0.0;
    for (double v : t) mean += v;
    mean /= static_cast<double>(t.size());
    double var = 0.0;
    for (double v : t) var += (v - mean) * (v - mean);
    row.mean_s = mean;
    row.std_s = t.size() > 1 ? std::sqrt(var / static_cast<double>(t.size() - 1)) : 0.0;
    rows.push_back(row);
  }
  return rows;
}

std::vector<BenchCase> default_sweep(const std::vector<MetricId>& metrics, int n_nodes, int n_repeats) {
  std::vector<BenchCase> cases;
  auto add = [&](MetricId m, int nodes, int window, int trials) {
    if (m == MetricId::Uspli && trials < 2) trials = 2;
    BenchCase c{m, nodes, window, trials, n_repeats, false};
    for (const auto& existing : cases) {
      if (existing.metric == c.metric && existing.n_nodes == c.n_nodes && existing.window_sp == c.window_sp &&
          existing.n_trials == c.n_trials) {
        return;
      }
    }
    cases.push_back(c);
  };
  for (MetricId m : metrics) {
    for (int w : kBenchWindows) add(m, n_nodes, w, 1);
    for (int k : kBenchTrials) add(m, n_nodes, 1000, k);
    for (int n : kBenchNodeCounts) add(m, n, 1000, 1);
  }
  return cases;
}

void write_bench_csv(std::ostream& out, const std::vector<BenchRow>& rows) {
  out << "metric,n_nodes,window_sp,n_trials,storage,mean_s,std_s,timed_out\n";
  for (const auto& r : rows) {
    out << to_string(r.c.metric) << ',' << r.c.n_nodes << ',' << r.c.window_sp << ',' << r.c.n_trials << ','
        << (r.c.storage ? 1 : 0) << ',';
    if (r.timed_out) {
      out << ",,1\n";
    } else {
      std::ostringstream v;
      v.precision(9);
      v << r.mean_s << ',' << r.std_s;
      out << v.str() << ",0\n";
    }
  }
}

std::vector<BenchRow> read_bench_csv(std::istream& in) {
  std::vector<BenchRow> rows;
  std::string line;
  if (!std::getline(in, line) || line.rfind("metric,", 0) != 0) throw ParameterError("missing bench CSV header");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (line.back() == ',') f.emplace_back();
    if (f.size() != 8) throw ParameterError("bench CSV row needs 8 fields: " + line);
    BenchRow r;
    try {
      r.c.metric = parse_metric(f[0]);
      r.c.n_nodes = std::stoi(f[1]);
      r.c.window_sp = std::stoi(f[2]);
      r.c.n_trials = std::stoi(f[3]);
      r.c.storage = f[4] == "1";
      r.timed_out = f[7] == "1";
      r.mean_s = r.timed_out ? std::nan("") : std::stod(f[5]);
      r.std_s = r.timed_out ? std::nan("") : std::stod(f[6]);
    } catch (const std::logic_error&) {
      throw ParameterError("bad bench CSV row: " + line);
    }
    rows.push_back(r);
  }
  return rows;
}

bool TrendReport::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const TrendCheck& c) { return c.passed; });
}

namespace {

std::string describe(const BenchRow& r) {
  std::ostringstream s;
  s << to_string(r.c.metric) << " nodes=" << r.c.n_nodes << " window=" << r.c.window_sp
    << " trials=" << r.c.n_trials << " storage=" << r.c.storage << " mean_s=" << r.mean_s;
  return s.str();
}

TrendCheck named(std::string name) {
  TrendCheck c;
  c.name = std::move(name);
  return c;
}

}  // namespace

TrendReport assert_trends(const std::vector<BenchRow>& rows) {
  using Key = std::tuple<int, int, int, bool>;
  std::map<Key, std::vector<const BenchRow*>> groups;
  for (const auto& r : rows) {
    if (!r.timed_out) groups[{r.c.n_nodes, r.c.window_sp, r.c.n_trials, r.c.storage}].push_back(&r);
  }
  TrendReport report;
  TrendCheck fastest = named("COR fastest");
  TrendCheck slowest = named("XCOR slowest");
  TrendCheck spread = named("spectral metrics within 3x");
  for (const auto& [key, members] : groups) {
    const BenchRow* cor_row = nullptr;
    const BenchRow* xcor_row = nullptr;
    double spec_min = INFINITY, spec_max = 0.0;
    const BenchRow *spec_lo = nullptr, *spec_hi = nullptr;
    for (const BenchRow* r : members) {
      if (r->c.metric == MetricId::Cor) cor_row = r;
      if (r->c.metric == MetricId::Xcor) xcor_row = r;
      if (is_spectral(r->c.metric)) {
        if (r->mean_s < spec_min) spec_min = r->mean_s, spec_lo = r;
        if (r->mean_s > spec_max) spec_max = r->mean_s, spec_hi = r;
      }
    }
    for (const BenchRow* r : members) {
      if (cor_row && r != cor_row && r->mean_s < cor_row->mean_s) {
        fastest.passed = false;
        fastest.offending.push_back(describe(*cor_row) + " slower than " + describe(*r));
      }
      if (xcor_row && r != xcor_row && r->mean_s > xcor_row->mean_s) {
        slowest.passed = false;
        slowest.offending.push_back(describe(*xcor_row) + " faster than " + describe(*r));
      }
    }
    if (cor_row && members.size() > 1) fastest.evaluated = true;
    if (xcor_row && members.size() > 1) slowest.evaluated = true;
    if (spec_lo && spec_hi && spec_lo != spec_hi) {
      spread.evaluated = true;
      if (spec_max > 3.0 * spec_min) {
        spread.passed = false;
        spread.offending.push_back(describe(*spec_hi) + " vs " + describe(*spec_lo));
      }
    }
  }

  TrendCheck flat = named("spectral 5000 sp <= 2x 1000 sp");
  for (const auto& r5 : rows) {
    if (r5.timed_out || !is_spectral(r5.c.metric) || r5.c.window_sp != 5000) continue;
    for (const auto& r1 : rows) {
      if (r1.timed_out || r1.c.metric != r5.c.metric || r1.c.window_sp != 1000 || r1.c.n_nodes != r5.c.n_nodes ||
          r1.c.n_trials != r5.c.n_trials || r1.c.storage != r5.c.storage) {
        continue;
      }
      flat.evaluated = true;
      if (r5.mean_s > 2.0 * r1.mean_s) {
        flat.passed = false;
        flat.offending.push_back(describe(r5) + " vs " + describe(r1));
      }
    }
  }

  TrendCheck exponent = named("node exponent in [1.7, 2.2]");
  std::map<std::tuple<MetricId, int, int, bool>, std::vector<const BenchRow*>> series;
  for (const auto& r : rows) {
    if (!r.timed_out && r.c.n_nodes >= 128) series[{r.c.metric, r.c.window_sp, r.c.n_trials, r.c.storage}].push_back(&r);
  }
  for (const auto& [key, pts] : series) {
    if (pts.size() < 3) continue;
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (const BenchRow* r : pts) {
      const double x = std::log(static_cast<double>(r->c.n_nodes));
      const double y = std::log(r->mean_s);
      sx += x, sy += y, sxx += x * x, sxy += x * y;
    }
    const double n = static_cast<double>(pts.size());
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    report.node_exponents.emplace_back(std::get<0>(key), slope);
    exponent.evaluated = true;
    if (slope < 1.7 || slope > 2.2) {
      exponent.passed = false;
      std::ostringstream s;
      s << to_string(std::get<0>(key)) << " window=" << std::get<1>(key) << " slope=" << slope;
      exponent.offending.push_back(s.str());
    }
  }
  report.checks = {fastest, slowest, spread, flat, exponent};
  return report;
}

}  // namespace connstream
