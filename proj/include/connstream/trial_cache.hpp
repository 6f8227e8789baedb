#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <optional>
#include <unordered_map>
#include <vector>

#include "connstream/core.hpp"
#include "connstream/fft.hpp"
#include "connstream/metrics.hpp"
#include "connstream/spectral.hpp"

namespace connstream {

struct TrialCacheOptions {
  SpectralOptions spectral;
  // Storage mode: keep per-trial intermediates keyed by trial_index.
  bool storage = true;
  // Number of most recent trials in the running average; 0 keeps all.
  int average_count = 0;
  int xcor_max_lag = -1;
};

/// Running per-trial sums for every metric family.
///
/// Spectral and COR sums are updated on every add_trial(). XCOR sums are built the first
/// time XCOR is finalized and kept current from then on. With storage on, spectra and
/// XCOR peaks are computed once as each trial arrives and kept per trial_index, so
/// switching to XCOR only sums stored values and re-adding a trial (after reset() or
/// eviction) runs no FFTs. With storage off only the epochs of active trials are kept;
/// evicting a trial recomputes its spectra to subtract them.
class TrialCache {
 public:
  TrialCache(int n_channels, TrialCacheOptions options,
             std::shared_ptr<FftBackend> backend = nullptr);

  void add_trial(const EpochMatrix& epoch);
  ConnectivityNetwork finalize(MetricId metric, const FrequencyBand& band);

  /// Shrinks the active set to the newest n trials when needed; 0 means unbounded.
  void set_average_count(int n);
  /// Drops storage when switched off.
  void set_storage(bool on);
  /// Clears sums and the active set. Stored intermediates survive.
  void reset();
  /// Clears everything, including storage.
  void clear();

  int n_trials() const { return static_cast<int>(active_.size()); }
  int n_channels() const { return n_channels_; }
  const TrialCacheOptions& options() const { return options_; }
  const SpectrumSet& sums() const { return sums_; }
  std::size_t stored_trials() const { return store_.size(); }
  /// Forward + inverse FFTs issued through this cache's backend.
  std::uint64_t fft_calls() const;
  /// Approximate bytes held by sums, storage and active epochs.
  std::size_t memory_bytes() const;
  const FftBackend& backend() const { return *backend_; }

 private:
  struct Stored {
    TrialSpectra spectra;
    std::vector<double> cor;
    std::vector<int> cor_dead;
    std::optional<XcorContribution> xcor;
  };

  TrialSpectra spectra_for(const EpochMatrix& epoch);
  void apply_time_domain(const EpochMatrix& epoch, double sign);
  void apply_xcor(const EpochMatrix& epoch, double sign);
  void evict_oldest();
  void build_xcor();
  Stored* stored(std::size_t trial_index);

  int n_channels_;
  TrialCacheOptions options_;
  std::shared_ptr<FftBackend> backend_;
  SpectrumSet sums_;
  std::vector<double> cor_sum_;
  std::map<int, int> cor_dead_;
  bool xcor_live_ = false;
  std::vector<double> xcor_value_sum_;
  std::vector<double> xcor_lag_sum_;
  std::map<int, int> xcor_dead_;
  std::deque<EpochMatrix> active_;
  std::unordered_map<std::size_t, Stored> store_;
};

/// Adds one trial and returns the band-averaged network for `metric` over all active trials.
ConnectivityNetwork update_and_finalize(TrialCache& cache, const EpochMatrix& new_epoch,
                                        MetricId metric, const FrequencyBand& band);

}  // namespace connstream
