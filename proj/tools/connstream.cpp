#include <atomic>
#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "connstream/bench.hpp"
#include "connstream/config.hpp"
#include "connstream/convergence.hpp"
#include "connstream/errors.hpp"
#include "connstream/fir.hpp"
#include "connstream/pipeline.hpp"
#include "connstream/publisher.hpp"
#include "connstream/recording.hpp"
#include "connstream/simulate.hpp"

namespace cs = connstream;

namespace {

enum Exit { kOk = 0, kInput = 2, kSemantic = 3, kEnvironment = 4 };

std::atomic<bool> g_stop{false};

extern "C" void on_signal(int) { g_stop = true; }

struct Overrides {
  std::string config;
  std::optional<int> block_size;
  std::optional<std::string> metric;
  std::optional<std::string> band;
  std::optional<double> threshold;
  std::optional<std::string> storage;
  std::optional<int> nfft;
  std::optional<double> speed;
  std::optional<int> port;

  void add_to(CLI::App* app, bool streaming) {
    app->add_option("--config", config, "TOML or JSON pipeline config");
    app->add_option("--metric", metric, "connectivity metric (COR, XCOR, COHY, COH, IMAGCOHY, PLV, PLI, USPLI, WPLI, DSWPLI)");
    app->add_option("--band", band, "frequency band as lo:hi bins");
    app->add_option("--threshold", threshold, "fraction of strongest edges to keep");
    app->add_option("--storage", storage, "keep per-trial intermediates (on|off)")
        ->check(CLI::IsMember({"on", "off"}));
    app->add_option("--nfft", nfft, "FFT length");
    app->add_option("--block-size", block_size, "samples per replayed block");
    if (streaming) {
      app->add_option("--speed", speed, "replay speed (1 = real time, 0 = as fast as possible)");
      app->add_option("--port", port, "TCP/WebSocket port (0 picks a free one)");
    }
  }

  cs::PipelineConfig apply() const {
    cs::PipelineConfig c = config.empty() ? cs::PipelineConfig{} : cs::load_config(config);
    if (metric) c.connectivity.metric = cs::parse_metric(*metric);
    if (band) {
      const auto colon = band->find(':');
      if (colon == std::string::npos) throw cs::ParameterError("--band expects lo:hi");
      try {
        c.connectivity.band.lo_bin = std::stoi(band->substr(0, colon));
        c.connectivity.band.hi_bin = std::stoi(band->substr(colon + 1));
      } catch (const std::logic_error&) {
        throw cs::ParameterError("--band expects integer bins lo:hi");
      }
    }
    if (threshold) c.connectivity.threshold = *threshold;
    if (storage) c.connectivity.storage = *storage == "on";
    if (nfft) c.connectivity.spectral.nfft = *nfft;
    if (block_size) c.block_size = *block_size;
    if (speed) c.speed = *speed;
    if (port) c.publish.port = *port;
    c.validate();
    return c;
  }
};

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text << '\n';
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw cs::EnvironmentError("cannot write " + path);
  out << text << '\n';
}

int run_offline(const Overrides& ov, const std::string& recording, const std::string& out_path,
                std::string convergence_path, bool convergence) {
  const cs::PipelineConfig config = ov.apply();
  const cs::RawRecording rec = cs::read_recording(recording);
  const cs::OfflineResult result = cs::run_offline(config, rec);
  write_text(out_path, cs::serialize_network(result.network));
  for (const auto& w : result.network.warnings) std::cerr << "warning: " << w << '\n';
  if (convergence) {
    if (convergence_path.empty()) {
      if (out_path.empty() || out_path == "-") return kOk;
      convergence_path = out_path + ".convergence.csv";
    }
    cs::TrialCacheOptions opts;
    opts.spectral = config.connectivity.spectral;
    opts.xcor_max_lag = config.connectivity.xcor_max_lag;
    cs::FrequencyBand band = config.connectivity.band;
    if (band.bin_hz <= 0.0) band.bin_hz = rec.info.sfreq / config.connectivity.spectral.nfft;
    const auto rows = cs::convergence_curve(result.epochs, {cs::kAllMetrics.begin(), cs::kAllMetrics.end()},
                                            opts, band, 20);
    std::ofstream csv(convergence_path);
    if (!csv) throw cs::EnvironmentError("cannot write " + convergence_path);
    cs::write_convergence_csv(csv, rows);
  }
  return kOk;
}

int run_serve(const Overrides& ov, const std::string& recording, const std::string& out_path, bool hold) {
  const cs::PipelineConfig config = ov.apply();
  const cs::RawRecording rec = cs::read_recording(recording);
  cs::ControlChannel control;
  cs::Publisher publisher(config.publish.host, config.publish.port, &control);
  std::cout << "listening on " << config.publish.host << ':' << publisher.port() << std::endl;

  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);

  cs::RunOptions options;
  options.control = &control;
  options.stop = &g_stop;
  options.hooks.on_frame = [&](cs::FrameType type, const std::string& payload) { publisher.publish(type, payload); };
  const cs::PipelineReport report = cs::run_pipeline(config, rec, options);
  if (report.final_network) write_text(out_path, cs::serialize_network(*report.final_network));

  std::cerr << "blocks " << report.n_blocks << ", epochs " << report.n_epochs << ", rejected " << report.n_rejected
            << ", networks " << report.n_networks << ", max latency " << report.max_latency_ms << " ms (budget "
            << report.budget_ms << " ms), stage overruns " << report.n_stage_over_budget << '\n';
  for (const auto& w : report.warnings) std::cerr << "warning: " << w << '\n';
  while (hold && !g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(50));
  publisher.stop();
  return kOk;
}

std::vector<cs::MetricId> parse_metric_list(const std::string& list) {
  std::vector<cs::MetricId> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(cs::parse_metric(item));
  }
  if (out.empty()) throw cs::ParameterError("empty metric list");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Streaming functional connectivity engine"};
  app.require_subcommand(1);

  Overrides offline_ov, serve_ov;
  std::string recording, out_path, convergence_path;
  bool no_convergence = false;
  auto* offline = app.add_subcommand("offline", "process a recording in one pass");
  offline->add_option("recording", recording, "recording (.json sidecar, .f32 payload or stem)")->required();
  offline->add_option("-o,--out", out_path, "network JSON output ('-' for stdout)");
  offline->add_option("--convergence", convergence_path, "convergence CSV (default <out>.convergence.csv)");
  offline->add_flag("--no-convergence", no_convergence, "skip the convergence table");
  offline_ov.add_to(offline, false);

  std::string serve_out = "final_network.json";
  bool hold = false;
  auto* serve = app.add_subcommand("serve", "replay a recording through the streaming pipeline");
  serve->add_option("recording", recording, "recording")->required();
  serve->add_option("-o,--out", serve_out, "final network written on exit");
  serve->add_flag("--hold", hold, "keep serving after the replay ends, until SIGINT");
  serve_ov.add_to(serve, true);

  std::string bench_out, bench_metrics = "COR,XCOR,COHY,COH,IMAGCOHY,PLV,PLI,USPLI,WPLI,DSWPLI";
  int bench_nodes = 64, bench_repeats = 5;
  std::uint64_t bench_seed = 1;
  double bench_timeout = 30.0;
  bool bench_check = false, bench_storage = false;
  auto* bench = app.add_subcommand("bench", "runtime sweeps over window, trials and nodes");
  bench->add_option("-o,--out", bench_out, "CSV output (default stdout)");
  bench->add_option("--metric", bench_metrics, "comma-separated metrics");
  bench->add_option("--nodes", bench_nodes, "node count for the window and trial sweeps");
  bench->add_option("--repeats", bench_repeats, "timed repeats per case");
  bench->add_option("--seed", bench_seed, "data seed");
  bench->add_option("--timeout", bench_timeout, "per-case cap in seconds");
  bench->add_flag("--storage", bench_storage, "time with stored per-trial intermediates");
  bench->add_flag("--check", bench_check, "exit 3 when a trend check fails");

  std::string sim_out;
  cs::SimulationOptions sim_opts;
  bool no_noise = false;
  auto* simulate = app.add_subcommand("simulate", "write the two-group quadrature simulation");
  simulate->add_option("output", sim_out, "output stem")->required();
  simulate->add_option("--seed", sim_opts.seed, "random seed");
  simulate->add_option("--trials", sim_opts.n_trials, "number of trials");
  simulate->add_option("--sensors", sim_opts.n_sensors, "number of sensors");
  simulate->add_option("--snr-db", sim_opts.snr_db, "target mean SNR in dB");
  simulate->add_option("--duration", sim_opts.signal_duration, "active signal per trial in seconds");
  simulate->add_flag("--no-noise", no_noise, "noise-free recording");

  std::string fd_kind = "highpass", fd_out;
  std::vector<double> fd_cutoffs{2.0};
  double fd_tbw = 2.0, fd_sfreq = 600.0;
  int fd_taps = 0;
  auto* filter_design = app.add_subcommand("filter-design", "design a FIR filter and export its response");
  filter_design->add_option("--kind", fd_kind, "lowpass, highpass or bandpass");
  filter_design->add_option("--cutoffs", fd_cutoffs, "cutoff frequencies in Hz")->delimiter(',');
  filter_design->add_option("--tbw", fd_tbw, "transition bandwidth in Hz");
  filter_design->add_option("--taps", fd_taps, "number of taps (0 = derived from --tbw)");
  filter_design->add_option("--sfreq", fd_sfreq, "sampling rate in Hz");
  filter_design->add_option("-o,--out", fd_out, "JSON output (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kInput;
  }

  try {
    if (offline->parsed()) return run_offline(offline_ov, recording, out_path, convergence_path, !no_convergence);
    if (serve->parsed()) return run_serve(serve_ov, recording, serve_out, hold);
    if (bench->parsed()) {
      auto cases = cs::default_sweep(parse_metric_list(bench_metrics), bench_nodes, bench_repeats);
      for (auto& c : cases) c.storage = bench_storage;
      cs::BenchOptions opts;
      opts.seed = bench_seed;
      opts.timeout_s = bench_timeout;
      const auto rows = cs::run_sweep(cases, opts);
      std::ostringstream csv;
      cs::write_bench_csv(csv, rows);
      if (bench_out.empty()) {
        std::cout << csv.str();
      } else {
        std::ofstream f(bench_out);
        if (!f) throw cs::EnvironmentError("cannot write " + bench_out);
        f << csv.str();
      }
      const auto report = cs::assert_trends(rows);
      for (const auto& check : report.checks) {
        std::cerr << (check.evaluated ? (check.passed ? "PASS " : "FAIL ") : "SKIP ") << check.name << '\n';
        for (const auto& o : check.offending) std::cerr << "  " << o << '\n';
      }
      for (const auto& [m, slope] : report.node_exponents) {
        std::cerr << "node exponent " << cs::to_string(m) << ' ' << slope << '\n';
      }
      return bench_check && !report.passed() ? kSemantic : kOk;
    }
    if (simulate->parsed()) {
      sim_opts.noise = !no_noise;
      const cs::Simulation sim = cs::simulate(sim_opts);
      cs::write_simulation(sim_out, sim, sim_opts);
      std::cout << "wrote " << sim_out << " (" << sim.markers.size() << " trials, "
                << sim.recording.info.n_channels << " channels)";
      if (sim_opts.noise) std::cout << ", measured SNR " << sim.snr_db_measured << " dB";
      std::cout << '\n';
      return kOk;
    }
    if (filter_design->parsed()) {
      const auto fir = cs::design_fir(cs::parse_filter_kind(fd_kind), fd_cutoffs, fd_tbw, fd_taps, fd_sfreq);
      write_text(fd_out, cs::filter_response_json(fir));
      return kOk;
    }
  } catch (const cs::EnvironmentError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kEnvironment;
  } catch (const cs::DegenerateTrialCountError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kSemantic;
  } catch (const cs::NumericalError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kSemantic;
  } catch (const cs::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInput;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 1;
  }
  return kInput;
}
