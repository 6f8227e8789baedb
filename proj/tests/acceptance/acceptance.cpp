// Acceptance run: one PASS/FAIL line per primary criterion, details indented below it.
// Exit status is the number of failed criteria.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <boost/asio.hpp>

#include "connstream/bench.hpp"
#include "connstream/convergence.hpp"
#include "connstream/fir.hpp"
#include "connstream/metrics.hpp"
#include "connstream/pipeline.hpp"
#include "connstream/publisher.hpp"
#include "connstream/simulate.hpp"
#include "connstream/trial_cache.hpp"
#include "oracles.hpp"

using namespace connstream;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = true;
  std::vector<std::string> notes;

  void note(const std::string& s) { notes.push_back(s); }
  void require(bool ok, const std::string& what) {
    if (!ok) pass = false;
    notes.push_back(std::string(ok ? "ok   " : "FAIL ") + what);
  }
};

std::string fmt(double v, int prec = 4) {
  std::ostringstream s;
  s << std::setprecision(prec) << v;
  return s.str();
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

fs::path work_dir() {
  const auto d = fs::current_path() / "acceptance_work";
  fs::create_directories(d);
  return d;
}

int edge_rank(const ConnectivityNetwork& net, int i, int j) {
  double w = 0.0;
  for (const auto& e : net.edges)
    if (e.i == i && e.j == j) w = std::abs(e.weight);
  int above = 0;
  for (const auto& e : net.edges)
    if (std::abs(e.weight) > w) ++above;
  return above;
}

bool has_edge(const ConnectivityNetwork& net, int i, int j) {
  return std::any_of(net.edges.begin(), net.edges.end(), [&](const Edge& e) { return e.i == i && e.j == j; });
}

// Simulation shared by the replication, convergence and streaming checks.
struct SimRun {
  SimulationOptions options;
  Simulation sim;
  PipelineConfig config;
  std::vector<EpochMatrix> epochs;
};

const SimRun& default_simulation() {
  static const SimRun run = [] {
    SimRun r;
    r.sim = simulate(r.options);
    const auto fwd = work_dir() / "sim.fwdx";
    write_forward(fwd, r.sim.clustered);
    r.config = simulation_config(r.options, fwd.string());
    r.epochs = extract_epochs(r.config, r.sim.recording);
    return r;
  }();
  return run;
}

// ---- criteria -------------------------------------------------------------------------

Outcome oracle_equivalence() {
  Outcome out;
  const auto t0 = Clock::now();
  const auto epochs = oracle::random_epochs(20, 8, 64, 2024);
  const FrequencyBand band{3, 12, 1.0};
  TrialCacheOptions opts;
  opts.spectral.nfft = 64;
  TrialCache cache(8, opts);
  for (const auto& e : epochs) cache.add_trial(e);
  double worst_all = 0.0;
  for (MetricId m : kAllMetrics) {
    if (!is_spectral(m)) continue;
    const auto net = cache.finalize(m, band);
    const auto ref = oracle::spectral_metric(epochs, m, band.lo_bin, band.hi_bin, 64);
    double worst = 0.0;
    for (std::size_t p = 0; p < ref.size(); ++p) {
      const auto& e = net.edges[p];
      const auto got = e.complex_weight().value_or(std::complex<double>(e.weight, 0.0));
      worst = std::max(worst, std::abs(got - ref[p]) / std::max(std::abs(ref[p]), 1e-6));
    }
    worst_all = std::max(worst_all, worst);
    out.require(worst <= 1e-9, std::string(to_string(m)) + " max rel err " + fmt(worst, 3));
  }
  const double secs = seconds_since(t0);
  out.require(secs < 10.0, "runtime " + fmt(secs, 3) + " s (< 10 s)");
  out.note("relative error uses max(|oracle|, 1e-6) as denominator; worst " + fmt(worst_all, 3));
  return out;
}

double rel_diff(const ConnectivityNetwork& a, const ConnectivityNetwork& b) {
  if (a.edges.size() != b.edges.size()) return INFINITY;
  double d = 0.0;
  for (std::size_t k = 0; k < a.edges.size(); ++k) {
    const auto va = a.edges[k].complex_weight().value_or(std::complex<double>(a.edges[k].weight, 0.0));
    const auto vb = b.edges[k].complex_weight().value_or(std::complex<double>(b.edges[k].weight, 0.0));
    d = std::max(d, std::abs(va - vb) / std::max(std::abs(vb), 1e-6));
    if (a.edges[k].lag != b.edges[k].lag) return INFINITY;
  }
  return d;
}

SpectrumSet batch_spectra(std::span<const EpochMatrix> epochs, int nfft) {
  SpectralOptions o;
  o.nfft = nfft;
  auto backend = make_fft_backend();
  SpectrumSet acc(static_cast<int>(epochs.front().n_channels()), nfft, 0, o.n_computed_bins());
  for (const auto& e : epochs) accumulate_spectra(acc, trial_spectra(e, o, *backend));
  return acc;
}

ConnectivityNetwork batch_metric(std::span<const EpochMatrix> epochs, MetricId m, const FrequencyBand& band,
                                 int nfft) {
  if (m == MetricId::Cor) return cor(epochs);
  if (m == MetricId::Xcor) return xcor(epochs, -1);
  return spectral_network(batch_spectra(epochs, nfft), m, band);
}

Outcome incremental_equals_batch() {
  Outcome out;
  const auto epochs = oracle::random_epochs(20, 8, 64, 77);
  const FrequencyBand band{3, 12, 1.0};
  std::mt19937_64 rng(5);
  std::vector<std::size_t> order(epochs.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> worst(kAllMetrics.size(), 0.0);
  for (int rep = 0; rep < 50; ++rep) {
    std::shuffle(order.begin(), order.end(), rng);
    TrialCacheOptions opts;
    opts.spectral.nfft = 64;
    opts.storage = rep % 2 == 0;
    TrialCache cache(8, opts);
    std::vector<EpochMatrix> prefix;
    for (std::size_t k = 0; k < order.size(); ++k) {
      cache.add_trial(epochs[order[k]]);
      prefix.push_back(epochs[order[k]]);
      // every metric after the first, middle and last update; all of them on the last ordering
      const bool check_all = rep == 49 || k == 1 || k == order.size() / 2 || k + 1 == order.size();
      if (!check_all) continue;
      for (std::size_t m = 0; m < kAllMetrics.size(); ++m) {
        if (kAllMetrics[m] == MetricId::Uspli && prefix.size() < 2) continue;
        const auto inc = cache.finalize(kAllMetrics[m], band);
        const auto ref = batch_metric(prefix, kAllMetrics[m], band, 64);
        worst[m] = std::max(worst[m], rel_diff(inc, ref));
      }
    }
  }
  for (std::size_t m = 0; m < kAllMetrics.size(); ++m) {
    out.require(worst[m] <= 1e-10, std::string(to_string(kAllMetrics[m])) + " max rel diff " + fmt(worst[m], 3));
  }
  out.note("50 orderings, storage alternating on/off, finalized after updates 2, 11 and 20 (every update on the last)");
  return out;
}

Outcome simulation_replication() {
  Outcome out;
  const auto& run = default_simulation();
  out.note("simulation: " + std::to_string(run.options.n_sensors) + " sensors, " +
           std::to_string(run.epochs.size()) + " epochs, measured SNR " + fmt(run.sim.snr_db_measured) +
           " dB, " + std::to_string(run.sim.clustered.n_sources()) + " label nodes");
  out.require(run.epochs.size() == static_cast<std::size_t>(run.options.n_trials), "all 200 trials epoched");
  out.require(std::abs(run.sim.snr_db_measured - 11.85) < 0.1, "SNR within 0.1 dB of 11.85");
  const auto nodes = nodes_from_positions(run.sim.clustered.source_positions);
  for (MetricId m : kAllMetrics) {
    auto cc = run.config.connectivity;
    cc.metric = m;
    cc.threshold = 0.05;
    ConnectivityEngine engine(cc, static_cast<int>(nodes.size()), nodes, run.sim.recording.info.sfreq);
    for (const auto& e : run.epochs) engine.add_trial(e);
    const auto raw = engine.raw();
    const auto top = engine.current();
    const int rank = edge_rank(raw, 0, 1);
    const bool inside = has_edge(top, 0, 1);
    const std::string line = std::string(to_string(m)) + " true edge rank " + std::to_string(rank) + " of " +
                             std::to_string(raw.edges.size()) + ", in top 5% (" + std::to_string(top.edges.size()) +
                             " edges): " + (inside ? "yes" : "no");
    const bool required = m == MetricId::ImagCohy || m == MetricId::Pli || m == MetricId::Wpli || m == MetricId::Dswpli;
    if (required) {
      out.require(inside, line);
    } else {
      out.note("info " + line);
    }
  }

  // zero-lag mixtures of a single source
  std::mt19937_64 rng(9);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<EpochMatrix> mixed;
  const std::vector<double> gains{1.0, -0.7, 0.35, 2.0, -1.3, 0.9};
  for (int k = 0; k < 50; ++k) {
    EpochMatrix e;
    e.sfreq = 600.0;
    e.trial_index = static_cast<std::size_t>(k);
    e.data.resize(static_cast<Eigen::Index>(gains.size()), 600);
    for (int t = 0; t < 600; ++t) {
      const double s = g(rng);
      for (std::size_t c = 0; c < gains.size(); ++c) e.data(static_cast<Eigen::Index>(c), t) = gains[c] * s;
    }
    mixed.push_back(std::move(e));
  }
  TrialCacheOptions opts;
  opts.spectral.nfft = 600;
  TrialCache cache(static_cast<int>(gains.size()), opts);
  for (const auto& e : mixed) cache.add_trial(e);
  const FrequencyBand band{5, 200, 1.0};
  for (MetricId m : {MetricId::ImagCohy, MetricId::Pli, MetricId::Wpli}) {
    double worst = 0.0;
    for (const auto& e : cache.finalize(m, band).edges) worst = std::max(worst, std::abs(e.weight));
    out.require(worst <= 1e-9, std::string("zero-lag ") + std::string(to_string(m)) + " max |w| " + fmt(worst, 3));
  }
  for (MetricId m : {MetricId::Coh, MetricId::Plv}) {
    double least = INFINITY;
    for (const auto& e : cache.finalize(m, band).edges) least = std::min(least, std::abs(e.weight));
    out.require(least >= 0.99, std::string("zero-lag ") + std::string(to_string(m)) + " min |w| " + fmt(least, 6));
  }
  return out;
}

Outcome convergence() {
  Outcome out;
  const auto& run = default_simulation();
  TrialCacheOptions opts;
  opts.spectral = run.config.connectivity.spectral;
  opts.xcor_max_lag = run.config.connectivity.xcor_max_lag;
  auto band = run.config.connectivity.band;
  band.bin_hz = run.sim.recording.info.sfreq / opts.spectral.nfft;
  const std::vector<MetricId> all(kAllMetrics.begin(), kAllMetrics.end());
  const auto rows = convergence_curve(run.epochs, all, opts, band, 20);
  std::ofstream csv(work_dir() / "convergence.csv");
  write_convergence_csv(csv, rows);
  for (MetricId m : all) {
    const auto n = std::count_if(rows.begin(), rows.end(), [&](const ConvergenceRow& r) { return r.metric == m; });
    const double after40 = max_change_after(rows, m, 40);
    const std::string line = std::string(to_string(m)) + ": " + std::to_string(n) + " points, max change after 40 trials " +
                             fmt(100.0 * after40, 3) + "%";
    const bool gated = m == MetricId::Coh || m == MetricId::Plv || m == MetricId::Xcor || m == MetricId::Pli;
    out.require(n >= 199, std::string(to_string(m)) + " curve produced");
    if (gated) {
      out.require(after40 < 0.10, line);
    } else {
      out.note("info " + line);
    }
  }
  out.note("curve written to " + (work_dir() / "convergence.csv").string());
  return out;
}

// Online scenario: 265 nodes, 250-sample trials, bins 0..50 computed with 18..30 averaged,
// strongest 10% published, per-trial intermediates stored.
ConnectivityConfig online_connectivity(MetricId metric) {
  ConnectivityConfig cc;
  cc.metric = metric;
  cc.spectral.nfft = 600;
  cc.spectral.first_bin = 0;
  cc.spectral.last_bin = 50;
  cc.band = {18, 30, 0.0};
  cc.storage = true;
  cc.threshold = 0.10;
  return cc;
}

Outcome latency_budget() {
  Outcome out;
  constexpr int kNodes = 265;
  constexpr double kSfreq = 1792.0;
  // one engine per metric, timing add_trial + finalize + threshold + serialize
  {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> g(0.0, 1.0);
    int trial = 0;
    for (MetricId m : kAllMetrics) {
      ConnectivityEngine engine(online_connectivity(m), kNodes, default_nodes(kNodes), kSfreq);
      double worst = 0.0;
      // USPLI is undefined for a single trial, so its first update is not timed
      const int first_timed = m == MetricId::Uspli ? 1 : 0;
      for (int k = 0; k < 4 + first_timed; ++k) {
        EpochMatrix e;
        e.sfreq = kSfreq;
        e.trial_index = static_cast<std::size_t>(trial++);
        e.data.resize(kNodes, 250);
        for (Eigen::Index i = 0; i < e.data.size(); ++i) e.data.data()[i] = g(rng);
        if (k < first_timed) {
          engine.add_trial(e);
          continue;
        }
        const auto t0 = Clock::now();
        engine.add_trial(e);
        const auto payload = serialize_network(engine.current());
        const double ms = 1000.0 * seconds_since(t0);
        if (!payload.empty()) worst = std::max(worst, ms);
      }
      out.require(worst < 280.0, std::string(to_string(m)) + " max update+publish " + fmt(worst) + " ms");
    }
    out.note("265 nodes, 250-sample trials, nfft 600, bins 0-50 computed, band 18-30, top 10%, storage on");
  }
  // 200-trial replay at speed 1 through the threaded pipeline, switching metrics on the fly
  {
    SimulationOptions so;
    so.n_sensors = kNodes;
    so.sfreq = kSfreq;
    so.n_trials = 200;
    so.signal_duration = 250.0 / kSfreq;
    so.iti = 0.3;
    so.iti_jitter = 0.05;
    const auto sim = simulate(so);
    auto config = simulation_config(so, "");
    config.block_size = 500;
    config.speed = 1.0;
    config.epoch.tmin = -0.05;
    config.epoch.tmax = 0.2;
    config.epoch.baseline = {{-0.05, 0.0}};
    config.epoch.crop = {{0.0, 250.0 / kSfreq}};
    config.connectivity = online_connectivity(MetricId::Coh);
    config.validate();

    ControlChannel control;
    std::atomic<bool> finished{false};
    std::size_t switches = 0;
    std::thread switcher([&] {
      std::size_t k = 0;
      while (!finished) {
        for (int t = 0; t < 30 && !finished; ++t) std::this_thread::sleep_for(std::chrono::milliseconds(100));
        if (finished) break;
        const auto m = kAllMetrics[++k % kAllMetrics.size()];
        control.submit(R"({"type":"set_metric","value":")" + std::string(to_string(m)) + R"("})");
        ++switches;
      }
    });
    RunOptions opts;
    opts.control = &control;
    const auto t0 = Clock::now();
    PipelineReport report;
    try {
      report = run_pipeline(config, sim.recording, opts);
    } catch (...) {
      finished = true;
      switcher.join();
      throw;
    }
    const double wall = seconds_since(t0);
    finished = true;
    switcher.join();
    const double duration = static_cast<double>(sim.recording.n_samples()) / so.sfreq;
    out.note("replay: " + std::to_string(report.n_blocks) + " blocks of 500 at 1792 Hz, budget " + fmt(report.budget_ms) +
             " ms, wall " + fmt(wall) + " s for " + fmt(duration) + " s of data, " + std::to_string(switches) +
             " metric switches (" + std::to_string(control.accepted()) + " accepted)");
    std::string stages;
    for (const auto& [name, ms] : report.max_stage_ms) stages += " " + name + "=" + fmt(ms, 3);
    out.note("max stage ms:" + stages);
    out.require(report.n_epochs == 200, "200 trials processed (" + std::to_string(report.n_epochs) + ")");
    out.require(report.n_stage_over_budget == 0,
                "stages over budget: " + std::to_string(report.n_stage_over_budget));
    out.require(report.max_trial_update_ms < 280.0, "max trial update+publish " + fmt(report.max_trial_update_ms) + " ms");
    out.require(wall < duration + 2.0, "replay kept pace with the acquisition clock");
    out.note("info end-to-end latency max " + fmt(report.max_latency_ms) + " ms, over budget " +
             std::to_string(report.n_latency_over_budget) + " of " + std::to_string(report.n_blocks) + " blocks");
  }
  return out;
}

Outcome performance_trends() {
  Outcome out;
  std::vector<MetricId> all(kAllMetrics.begin(), kAllMetrics.end());
  std::vector<BenchCase> cases;
  for (auto c : default_sweep(all, 64, 5)) {
    if (c.n_nodes <= 128) cases.push_back(c);
  }
  const auto rows = run_sweep(cases);
  std::ofstream csv(work_dir() / "bench.csv");
  write_bench_csv(csv, rows);
  const auto report = assert_trends(rows);
  for (const auto& check : report.checks) {
    const bool gated = check.name != "node exponent in [1.7, 2.2]";
    if (!check.evaluated) {
      if (gated) {
        out.require(false, check.name + " not evaluated");
      } else {
        out.note("info " + check.name + " not evaluated (sweep capped at 128 nodes)");
      }
      continue;
    }
    std::string line = check.name + (check.passed ? "" : " (" + std::to_string(check.offending.size()) + " violations)");
    if (gated) {
      out.require(check.passed, line);
    } else {
      out.note("info " + line);
    }
    for (std::size_t k = 0; k < std::min<std::size_t>(check.offending.size(), 6); ++k) out.note("    " + check.offending[k]);
  }
  out.note("sweep rows written to " + (work_dir() / "bench.csv").string());
  return out;
}

Outcome streaming_equivalence() {
  Outcome out;
  const auto& run = default_simulation();
  const auto& rec = run.sim.recording;
  const auto one_shot = extract_epochs(run.config, rec, 0);
  for (int block : {128, 500, 1000, 4096}) {
    const auto got = extract_epochs(run.config, rec, block);
    double worst = got.size() == one_shot.size() ? 0.0 : INFINITY;
    for (std::size_t k = 0; k < std::min(got.size(), one_shot.size()); ++k) {
      worst = std::max(worst, (got[k].data - one_shot[k].data).cwiseAbs().maxCoeff());
    }
    out.require(worst <= 1e-9, "block " + std::to_string(block) + ": " + std::to_string(got.size()) +
                                   " epochs, max abs diff " + fmt(worst, 3));
  }

  // serve path: threaded pipeline publishing to a TCP subscriber
  auto config = run.config;
  config.block_size = 500;
  const auto offline = run_offline(config, rec);
  Publisher pub("127.0.0.1", 0, nullptr);
  boost::asio::io_context io;
  boost::asio::ip::tcp::socket sock(io);
  sock.connect({boost::asio::ip::make_address("127.0.0.1"), static_cast<unsigned short>(pub.port())});
  for (int k = 0; k < 200 && pub.n_clients() == 0; ++k) std::this_thread::sleep_for(std::chrono::milliseconds(10));
  std::string last_network;
  std::atomic<bool> done{false};
  std::thread reader([&] {
    FrameDecoder dec;
    std::array<char, 65536> buf{};
    boost::system::error_code ec;
    while (true) {
      const auto n = sock.read_some(boost::asio::buffer(buf), ec);
      if (ec) break;
      dec.feed(std::string_view(buf.data(), n));
      while (auto f = dec.next()) {
        if (f->type == FrameType::Network) last_network = f->payload;
      }
      if (done && pub.frames_sent() > 0 && dec.buffered() == 0) {
        // drained everything published so far
      }
    }
  });
  RunOptions opts;
  opts.hooks.on_frame = [&](FrameType t, const std::string& payload) { pub.publish(t, payload); };
  const auto report = run_pipeline(config, rec, opts);
  std::this_thread::sleep_for(std::chrono::milliseconds(500));
  done = true;
  pub.stop();
  reader.join();
  out.require(report.final_network && report.final_network->same_content(offline.network),
              "serve final network equals offline (" + std::to_string(offline.network.edges.size()) + " edges)");
  bool wire_same = false;
  if (!last_network.empty()) wire_same = deserialize_network(last_network).same_content(offline.network);
  out.require(wire_same, "last network frame received over TCP equals offline output");
  return out;
}

double dtft_db(const std::vector<double>& taps, double hz, double sfreq) {
  std::complex<double> h{0.0, 0.0};
  for (std::size_t k = 0; k < taps.size(); ++k) {
    const double a = -2.0 * std::numbers::pi * hz * static_cast<double>(k) / sfreq;
    h += taps[k] * std::complex<double>(std::cos(a), std::sin(a));
  }
  return 20.0 * std::log10(std::abs(h));
}

Outcome filter_suite() {
  Outcome out;
  struct Design {
    const char* name;
    FilterKind kind;
    std::vector<double> cutoffs;
    double tbw;
    double sfreq;
  };
  const std::vector<Design> designs{
      {"lowpass 40 Hz, 4 Hz transition, 600 Hz", FilterKind::Lowpass, {40}, 4.0, 600.0},
      {"highpass 2 Hz, 2 Hz transition, 600 Hz (pipeline default)", FilterKind::Highpass, {2}, 2.0, 600.0},
      {"bandpass 8-30 Hz, 4 Hz transition, 600 Hz", FilterKind::Bandpass, {8, 30}, 4.0, 600.0}};
  for (const auto& d : designs) {
    const auto f = design_fir(d.kind, d.cutoffs, d.tbw, 0, d.sfreq);
    bool symmetric = f.n_taps() % 2 == 1;
    for (int k = 0; k < f.n_taps(); ++k) symmetric = symmetric && f.taps[k] == f.taps[f.n_taps() - 1 - k];
    out.require(symmetric, std::string(d.name) + ": " + std::to_string(f.n_taps()) + " taps, exactly symmetric");

    // passband gain: DC for lowpass, band centre otherwise
    const double pass_hz = d.kind == FilterKind::Lowpass ? 0.0
                           : d.kind == FilterKind::Highpass ? 18.0
                                                            : 0.5 * (d.cutoffs[0] + d.cutoffs[1]);
    const double pass_db = dtft_db(f.taps, pass_hz, d.sfreq);
    out.require(std::abs(pass_db) < 0.03, std::string(d.name) + ": gain at " + fmt(pass_hz) + " Hz " + fmt(pass_db, 3) + " dB");
    if (d.kind != FilterKind::Lowpass) {
      const double dc = dtft_db(f.taps, 0.0, d.sfreq);
      out.require(dc < -40.0, std::string(d.name) + ": DC gain " + fmt(dc, 3) + " dB");
    }

    // stopband from the transition edge outward
    double worst = -INFINITY;
    auto scan = [&](double lo, double hi) {
      for (double hz = lo; hz <= hi; hz += 0.02) worst = std::max(worst, dtft_db(f.taps, hz, d.sfreq));
    };
    const double half = f.transition_bw / 2.0;
    if (d.kind == FilterKind::Lowpass) scan(d.cutoffs[0] + half, d.sfreq / 2);
    if (d.kind == FilterKind::Highpass) scan(0.0, d.cutoffs[0] - half);
    if (d.kind == FilterKind::Bandpass) {
      scan(0.0, d.cutoffs[0] - half);
      scan(d.cutoffs[1] + half, d.sfreq / 2);
    }
    out.require(worst <= -40.0, std::string(d.name) + ": stopband max " + fmt(worst, 4) + " dB");

    // delay from the cross-correlation peak of white noise in and out
    std::mt19937_64 rng(11);
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<double> x(8000);
    for (double& v : x) v = g(rng);
    auto y = oracle::convolve(f.taps, x);
    y.resize(x.size());
    const int max_lag = f.n_taps();
    const auto r = oracle::xcorr(x, y, max_lag);
    const auto peak = static_cast<int>(std::max_element(r.begin(), r.end()) - r.begin()) - max_lag;
    out.require(peak == f.group_delay(), std::string(d.name) + ": xcorr peak lag " + std::to_string(peak) +
                                             " = group delay " + std::to_string(f.group_delay()));
    // linear phase: the group delay is the same at every passband frequency
    const double step_hz = 0.1;
    const auto h1 = f.response(pass_hz + step_hz);
    const auto h2 = f.response(pass_hz + 2 * step_hz);
    const double gd =
        -std::remainder(std::arg(h2) - std::arg(h1), 2 * std::numbers::pi) / (2 * std::numbers::pi * step_hz) * d.sfreq;
    out.require(std::abs(gd - f.group_delay()) < 1e-6, std::string(d.name) + ": phase slope delay " + fmt(gd, 8) + " samples");
  }
  return out;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"oracle equivalence", oracle_equivalence},
      {"incremental equals batch", incremental_equals_batch},
      {"simulation replication", simulation_replication},
      {"convergence methodology", convergence},
      {"latency budget", latency_budget},
      {"performance trends", performance_trends},
      {"streaming equivalence", streaming_equivalence},
      {"filter suite", filter_suite},
  };
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& ex) {
      o.pass = false;
      o.note(std::string("exception: ") + ex.what());
    }
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << " (" << fmt(seconds_since(t0), 3) << " s)\n";
    for (const auto& n : o.notes) std::cout << "    " << n << "\n";
    std::cout.flush();
    if (!o.pass) ++failed;
  }
  std::cout << (criteria.size() - static_cast<std::size_t>(failed)) << "/" << criteria.size()
            << " primary criteria passed\n";
  return failed;
}
