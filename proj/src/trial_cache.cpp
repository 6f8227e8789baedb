#include "connstream/trial_cache.hpp"

#include <cmath>

namespace connstream {

namespace {

void bump(std::map<int, int>& counts, const std::vector<int>& channels, int delta) {
  for (int c : channels) {
    auto& n = counts[c];
    n += delta;
    if (n <= 0) counts.erase(c);
  }
}

void add_warnings(ConnectivityNetwork& net, const std::map<int, int>& dead) {
  for (const auto& [c, n] : dead) {
    net.warnings.push_back("channel " + std::to_string(c) + " has zero variance");
  }
}

}  // namespace

TrialCache::TrialCache(int n_channels, TrialCacheOptions options,
                       std::shared_ptr<FftBackend> backend)
    : n_channels_(n_channels), options_(std::move(options)), backend_(std::move(backend)) {
  if (n_channels < 2) throw ParameterError("connectivity needs at least two channels");
  if (options_.average_count < 0) throw ParameterError("average_count must be >= 0");
  options_.spectral.validate();
  if (!backend_) backend_ = make_fft_backend(options_.spectral.fft_backend);
  sums_ = SpectrumSet(n_channels, options_.spectral.nfft, options_.spectral.first_bin,
                      options_.spectral.n_computed_bins());
  cor_sum_.assign(pair_count(static_cast<std::size_t>(n_channels)), 0.0);
}

std::uint64_t TrialCache::fft_calls() const {
  return backend_->forward_calls() + backend_->inverse_calls();
}

TrialCache::Stored* TrialCache::stored(std::size_t trial_index) {
  if (!options_.storage) return nullptr;
  auto it = store_.find(trial_index);
  return it == store_.end() ? nullptr : &it->second;
}

TrialSpectra TrialCache::spectra_for(const EpochMatrix& epoch) {
  if (Stored* s = stored(epoch.trial_index)) return s->spectra;
  return trial_spectra(epoch, options_.spectral, *backend_);
}

void TrialCache::apply_time_domain(const EpochMatrix& epoch, double sign) {
  const std::vector<double>* values = nullptr;
  const std::vector<int>* dead = nullptr;
  CorContribution fresh;
  Stored* s = stored(epoch.trial_index);
  if (s && !s->cor.empty()) {
    values = &s->cor;
    dead = &s->cor_dead;
  } else {
    fresh = cor_trial(epoch);
    if (s) {
      s->cor = fresh.values;
      s->cor_dead = fresh.dead_channels;
    }
    values = &fresh.values;
    dead = &fresh.dead_channels;
  }
  for (std::size_t p = 0; p < cor_sum_.size(); ++p) cor_sum_[p] += sign * (*values)[p];
  bump(cor_dead_, *dead, sign > 0 ? 1 : -1);
}

void TrialCache::apply_xcor(const EpochMatrix& epoch, double sign) {
  XcorContribution fresh;
  const XcorContribution* c = nullptr;
  Stored* s = stored(epoch.trial_index);
  if (s && s->xcor) {
    c = &*s->xcor;
  } else {
    fresh = xcor_trial(epoch, options_.xcor_max_lag, *backend_);
    if (s) s->xcor = fresh;
    c = &fresh;
  }
  for (std::size_t p = 0; p < xcor_value_sum_.size(); ++p) {
    xcor_value_sum_[p] += sign * c->values[p].peak_value;
    xcor_lag_sum_[p] += sign * c->values[p].peak_lag;
  }
  bump(xcor_dead_, c->dead_channels, sign > 0 ? 1 : -1);
}

void TrialCache::add_trial(const EpochMatrix& epoch) {
  epoch.validate();
  if (epoch.n_channels() != n_channels_) {
    throw DimensionError("epoch has " + std::to_string(epoch.n_channels()) +
                         " channels, cache expects " + std::to_string(n_channels_));
  }
  if (!active_.empty() && active_.front().n_samples() != epoch.n_samples()) {
    throw DimensionError("epoch length differs from the active trials");
  }
  TrialSpectra spectra = spectra_for(epoch);
  accumulate_spectra(sums_, spectra);
  if (options_.storage) {
    auto [it, inserted] = store_.try_emplace(epoch.trial_index);
    if (inserted) it->second.spectra = std::move(spectra);
    if (!it->second.xcor) it->second.xcor = xcor_trial(epoch, options_.xcor_max_lag, *backend_);
  }
  apply_time_domain(epoch, 1.0);
  if (xcor_live_) apply_xcor(epoch, 1.0);
  active_.push_back(epoch);
  while (options_.average_count > 0 &&
         static_cast<int>(active_.size()) > options_.average_count) {
    evict_oldest();
  }
}

void TrialCache::evict_oldest() {
  const EpochMatrix& old = active_.front();
  remove_spectra(sums_, spectra_for(old));
  apply_time_domain(old, -1.0);
  if (xcor_live_) apply_xcor(old, -1.0);
  active_.pop_front();
}

void TrialCache::build_xcor() {
  const std::size_t n_pairs = pair_count(static_cast<std::size_t>(n_channels_));
  xcor_value_sum_.assign(n_pairs, 0.0);
  xcor_lag_sum_.assign(n_pairs, 0.0);
  xcor_dead_.clear();
  xcor_live_ = true;
  for (const auto& epoch : active_) apply_xcor(epoch, 1.0);
}

ConnectivityNetwork TrialCache::finalize(MetricId metric, const FrequencyBand& band) {
  if (active_.empty()) throw NoDataError("no trials accumulated");
  if (is_spectral(metric)) return spectral_network(sums_, metric, band);

  const auto n_ch = static_cast<std::size_t>(n_channels_);
  const double k = static_cast<double>(active_.size());
  ConnectivityNetwork net;
  if (metric == MetricId::Cor) {
    std::vector<double> mean(cor_sum_.size());
    for (std::size_t p = 0; p < mean.size(); ++p) mean[p] = cor_sum_[p] / k;
    net = network_from_pairs(MetricId::Cor, n_ch, mean, band, n_trials());
    add_warnings(net, cor_dead_);
    return net;
  }
  if (!xcor_live_) build_xcor();
  std::vector<double> mean(xcor_value_sum_.size());
  for (std::size_t p = 0; p < mean.size(); ++p) mean[p] = std::abs(xcor_value_sum_[p] / k);
  net = network_from_pairs(MetricId::Xcor, n_ch, mean, band, n_trials());
  for (std::size_t p = 0; p < net.edges.size(); ++p) {
    net.edges[p].lag = static_cast<int>(std::lround(xcor_lag_sum_[p] / k));
  }
  add_warnings(net, xcor_dead_);
  return net;
}

void TrialCache::set_average_count(int n) {
  if (n < 0) throw ParameterError("average_count must be >= 0");
  options_.average_count = n;
  while (n > 0 && static_cast<int>(active_.size()) > n) evict_oldest();
}

void TrialCache::set_storage(bool on) {
  options_.storage = on;
  if (!on) store_.clear();
}

void TrialCache::reset() {
  sums_.clear();
  std::fill(cor_sum_.begin(), cor_sum_.end(), 0.0);
  cor_dead_.clear();
  xcor_live_ = false;
  xcor_value_sum_.clear();
  xcor_lag_sum_.clear();
  xcor_dead_.clear();
  active_.clear();
}

void TrialCache::clear() {
  reset();
  store_.clear();
}

std::size_t TrialCache::memory_bytes() const {
  std::size_t bytes = sums_.memory_bytes();
  bytes += (cor_sum_.size() + xcor_value_sum_.size() + xcor_lag_sum_.size()) * sizeof(double);
  for (const auto& e : active_) bytes += static_cast<std::size_t>(e.data.size()) * sizeof(double);
  for (const auto& [idx, s] : store_) {
    bytes += s.spectra.memory_bytes() + s.cor.size() * sizeof(double);
    if (s.xcor) bytes += s.xcor->values.size() * sizeof(XCorEdgeValue);
  }
  return bytes;
}

ConnectivityNetwork update_and_finalize(TrialCache& cache, const EpochMatrix& new_epoch,
                                        MetricId metric, const FrequencyBand& band) {
  cache.add_trial(new_epoch);
  return cache.finalize(metric, band);
}

}  // namespace connstream
