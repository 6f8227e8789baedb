#include "connstream/simulate.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>

#include "connstream/errors.hpp"

namespace connstream {

namespace {

Position random_direction(std::mt19937_64& rng, double radius) {
  std::normal_distribution<double> n(0.0, 1.0);
  Position p{n(rng), n(rng), n(rng)};
  const double r = std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]);
  for (double& v : p) v *= radius / r;
  return p;
}

}  // namespace

Simulation simulate(const SimulationOptions& o) {
  if (o.n_sensors < 2 || o.n_trials < 1 || o.sfreq <= 0.0 || o.freq_hz <= 0.0 ||
      o.signal_duration <= 0.0 || o.sin_dipoles < 1 || o.cos_dipoles < 1 || o.n_background_labels < 0) {
    throw ParameterError("invalid simulation options");
  }
  if (o.iti <= o.signal_duration) throw ParameterError("iti must exceed the signal duration");
  std::mt19937_64 rng(o.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  Simulation sim;

  // leadfield and source layout
  const int n_dipoles = o.sin_dipoles + o.cos_dipoles + 2 * o.n_background_labels;
  ForwardModel& fwd = sim.dipoles;
  fwd.gain.resize(o.n_sensors, n_dipoles);
  for (Eigen::Index s = 0; s < fwd.gain.rows(); ++s) {
    for (Eigen::Index d = 0; d < fwd.gain.cols(); ++d) fwd.gain(s, d) = gauss(rng);
  }
  for (int d = 0; d < n_dipoles; ++d) {
    int label = 0;
    if (d >= o.sin_dipoles) label = 1;
    if (d >= o.sin_dipoles + o.cos_dipoles) label = 2 + (d - o.sin_dipoles - o.cos_dipoles) / 2;
    fwd.labels.push_back(label);
    fwd.source_positions.push_back(random_direction(rng, 0.04 + 0.03 * unit(rng)));
  }
  sim.clustered = cluster_forward(fwd);

  // trigger schedule
  const auto len = static_cast<std::int64_t>(std::llround(o.signal_duration * o.sfreq));
  std::int64_t at = static_cast<std::int64_t>(std::llround(o.lead * o.sfreq));
  for (int k = 0; k < o.n_trials; ++k) {
    sim.markers.push_back(at);
    at += static_cast<std::int64_t>(std::llround((o.iti + o.iti_jitter * unit(rng)) * o.sfreq));
  }
  const std::int64_t n_samples = at;

  // noise-free sensor signal: label gains times the two waveforms
  const Eigen::VectorXd g_sin = fwd.gain.leftCols(o.sin_dipoles).rowwise().sum() * o.amplitude;
  const Eigen::VectorXd g_cos = fwd.gain.middleCols(o.sin_dipoles, o.cos_dipoles).rowwise().sum() * o.amplitude;
  RealMatrix signal = RealMatrix::Zero(o.n_sensors, n_samples);
  const double w = 2.0 * std::numbers::pi * o.freq_hz / o.sfreq;
  for (std::int64_t m : sim.markers) {
    for (std::int64_t t = 0; t < len && m + t < n_samples; ++t) {
      signal.col(m + t) = g_sin * std::sin(w * static_cast<double>(t)) + g_cos * std::cos(w * static_cast<double>(t));
    }
  }

  // per-sensor signal power over the active samples
  const double active = static_cast<double>(len) * static_cast<double>(sim.markers.size());
  Eigen::VectorXd p_signal = signal.rowwise().squaredNorm() / active;

  RecordingInfo& info = sim.recording.info;
  info.n_channels = o.n_sensors + 1;
  info.sfreq = o.sfreq;
  info.unit = "au";
  for (int c = 0; c < o.n_sensors; ++c) {
    info.channels.push_back("S" + std::to_string(c + 1));
    info.positions.push_back(random_direction(rng, 0.1));
  }
  info.channels.push_back("STI");
  info.positions.push_back({0.0, 0.0, 0.0});
  info.trigger_channels = {o.n_sensors};

  RealMatrix& data = sim.recording.data;
  data = RealMatrix::Zero(info.n_channels, n_samples);
  data.topRows(o.n_sensors) = signal;
  sim.snr_db_measured = std::numeric_limits<double>::quiet_NaN();
  if (o.noise) {
    if (o.background_share < 0.0 || o.background_share >= 1.0) {
      throw ParameterError("background_share must be in [0, 1)");
    }
    // Unit-variance AR(2) rhythm per label, projected through the summed dipole gains.
    const auto n_labels = sim.clustered.gain.cols();
    RealMatrix label_gain = RealMatrix::Zero(o.n_sensors, n_labels);
    for (Eigen::Index d = 0; d < fwd.gain.cols(); ++d) label_gain.col(fwd.labels[d]) += fwd.gain.col(d);
    RealMatrix rhythms(n_labels, n_samples);
    const double r = std::exp(-std::numbers::pi * o.rhythm_bw_hz / o.sfreq);
    std::uniform_real_distribution<double> peak(o.rhythm_lo_hz, o.rhythm_hi_hz);
    for (Eigen::Index l = 0; l < n_labels; ++l) {
      const double a1 = 2.0 * r * std::cos(2.0 * std::numbers::pi * peak(rng) / o.sfreq);
      const double a2 = -r * r;
      double x1 = 0.0, x2 = 0.0;
      for (std::int64_t t = -1000; t < n_samples; ++t) {  // burn-in
        const double x = a1 * x1 + a2 * x2 + gauss(rng);
        x2 = x1;
        x1 = x;
        if (t >= 0) rhythms(l, t) = x;
      }
      const double sd = std::sqrt(rhythms.row(l).squaredNorm() / static_cast<double>(n_samples));
      rhythms.row(l) /= sd;
    }
    RealMatrix background = label_gain * rhythms;
    const Eigen::VectorXd p_bg = background.rowwise().squaredNorm() / static_cast<double>(n_samples);
    const double p_bg_mean = p_bg.mean();

    // Total noise power level X: background scaled to share * X on average, white sensor
    // noise (1 - share) * X. Mean SNR in dB is monotone in X, so bisect on log X.
    auto mean_snr = [&](double x) {
      double acc = 0.0;
      for (int c = 0; c < o.n_sensors; ++c) {
        const double pn = p_bg(c) * o.background_share * x / p_bg_mean + (1.0 - o.background_share) * x;
        acc += 10.0 * std::log10(p_signal(c) / pn);
      }
      return acc / o.n_sensors;
    };
    double lo = -60.0, hi = 60.0;
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      (mean_snr(std::exp(mid)) > o.snr_db ? lo : hi) = mid;
    }
    const double level = std::exp(0.5 * (lo + hi));
    sim.noise_sigma = std::sqrt((1.0 - o.background_share) * level);
    const double bg_scale = std::sqrt(o.background_share * level / p_bg_mean);

    double measured = 0.0;
    for (int c = 0; c < o.n_sensors; ++c) {
      double p_noise = 0.0;
      for (std::int64_t t = 0; t < n_samples; ++t) {
        const double n = bg_scale * background(c, t) + sim.noise_sigma * gauss(rng);
        data(c, t) += n;
        p_noise += n * n;
      }
      p_noise /= static_cast<double>(n_samples);
      measured += 10.0 * std::log10(p_signal(c) / p_noise);
    }
    sim.snr_db_measured = measured / o.n_sensors;
  }
  const auto pulse = std::max<std::int64_t>(1, std::llround(0.005 * o.sfreq));
  for (std::int64_t m : sim.markers) {
    for (std::int64_t t = m; t < std::min(m + pulse, n_samples); ++t) data(o.n_sensors, t) = 1.0;
  }
  return sim;
}

PipelineConfig simulation_config(const SimulationOptions& o, const std::string& forward_path) {
  PipelineConfig c;
  c.inverse.mode = forward_path.empty() ? InverseMode::None : InverseMode::Fixed;
  c.inverse.forward_path = forward_path;
  c.epoch.tmin = -0.1;
  c.epoch.tmax = 0.4;
  c.epoch.baseline = std::make_pair(-0.05, 0.0);
  c.epoch.crop = std::make_pair(0.0, o.signal_duration);
  c.connectivity.metric = MetricId::ImagCohy;
  c.connectivity.spectral.nfft = static_cast<int>(std::lround(o.sfreq));
  const int bin = static_cast<int>(std::lround(o.freq_hz * c.connectivity.spectral.nfft / o.sfreq));
  c.connectivity.band = FrequencyBand{bin, bin, 0.0};
  return c;
}

void write_simulation(const std::filesystem::path& stem, const Simulation& sim,
                      const SimulationOptions& options) {
  write_recording(stem, sim.recording);
  auto fwdx = stem;
  fwdx += ".fwdx";
  write_forward(fwdx, sim.clustered);
  auto cfg = stem;
  cfg += ".config.json";
  std::ofstream out(cfg);
  if (!out) throw EnvironmentError("cannot write " + cfg.string());
  out << config_to_json(simulation_config(options, fwdx.filename().string())) << '\n';
}

}  // namespace connstream
