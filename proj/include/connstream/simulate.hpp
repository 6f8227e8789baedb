#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "connstream/config.hpp"
#include "connstream/inverse.hpp"
#include "connstream/recording.hpp"

namespace connstream {

/// Two labelled source groups driven at one frequency in quadrature (sine for the first
/// group, cosine for the second) after each trigger, mixed to sensors through a random
/// leadfield, plus Gaussian noise scaled to a target mean SNR.
struct SimulationOptions {
  std::uint64_t seed = 1;
  int n_sensors = 64;
  int n_trials = 200;
  double sfreq = 600.0;
  double freq_hz = 18.0;
  double signal_duration = 0.160;  // seconds of activity after each trigger
  double amplitude = 1.0;
  int sin_dipoles = 2;
  int cos_dipoles = 4;
  int n_background_labels = 14;  // silent labels, two dipoles each
  double iti = 0.6;              // seconds between triggers, plus jitter
  double iti_jitter = 0.1;
  double lead = 0.5;             // silence before the first trigger
  bool noise = true;
  double snr_db = 11.85;         // mean over sensors of 10 log10(P_signal / P_noise)
  // Share of the noise power from ongoing label activity (independent AR(2) rhythms with
  // peaks drawn from [rhythm_lo_hz, rhythm_hi_hz]) projected through the leadfield; the
  // rest is white sensor noise.
  double background_share = 0.7;
  double rhythm_lo_hz = 12.0;
  double rhythm_hi_hz = 24.0;
  double rhythm_bw_hz = 8.0;
};

struct Simulation {
  RawRecording recording;            // sensors then one trigger channel
  ForwardModel dipoles;              // generating leadfield, label per dipole
  ForwardModel clustered;            // one column per label (label 0 = sine, 1 = cosine)
  std::vector<std::int64_t> markers; // trigger onsets
  double noise_sigma = 0.0;          // white sensor component
  double snr_db_measured = 0.0;      // from the realised noise; NaN when noise is off
};

Simulation simulate(const SimulationOptions& options);

/// Pipeline settings matching the generator: fixed inverse onto the label clusters,
/// -0.1..0.4 s epochs baselined on -0.05..0 s and cropped to the active 160 ms, nfft equal to
/// sfreq so the drive frequency sits on one bin.
PipelineConfig simulation_config(const SimulationOptions& options, const std::string& forward_path);

/// Writes `<stem>.json`, `<stem>.f32`, the clustered forward model `<stem>.fwdx` and a
/// matching pipeline config `<stem>.config.json`.
void write_simulation(const std::filesystem::path& stem, const Simulation& sim,
                      const SimulationOptions& options);

}  // namespace connstream
