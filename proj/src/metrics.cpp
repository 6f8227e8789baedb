#include "connstream/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "connstream/parallel.hpp"

namespace connstream {

namespace {

void check_accumulated(const SpectrumSet& acc, MetricId metric) {
  if (!is_spectral(metric)) throw ParameterError("not a spectral metric");
  if (acc.n_trials_accumulated() < 1) throw NoDataError("no trials accumulated");
  if (metric == MetricId::Uspli && acc.n_trials_accumulated() < 2) {
    throw DegenerateTrialCountError("USPLI needs at least two trials");
  }
}

ConnectivityNetwork empty_network(MetricId metric, std::size_t n_channels,
                                  const FrequencyBand& band, int n_trials) {
  ConnectivityNetwork net;
  net.metric = metric;
  net.band = band;
  net.n_trials = n_trials;
  net.nodes = default_nodes(n_channels);
  return net;
}

std::string dead_channel_warning(int channel) {
  return "channel " + std::to_string(channel) + " has zero variance";
}

// A centred channel whose energy is rounding noise relative to its amplitude counts as
// constant.
bool is_dead(double sumsq, double max_abs, std::size_t n) {
  const double floor = 1e-12 * max_abs;
  return sumsq <= static_cast<double>(n) * floor * floor;
}

}  // namespace

SpectralValues spectral_bins(const SpectrumSet& acc, MetricId metric, int lo_bin, int hi_bin) {
  check_accumulated(acc, metric);
  if (lo_bin < acc.first_bin() || hi_bin < lo_bin ||
      hi_bin >= acc.first_bin() + acc.n_bins()) {
    throw ParameterError("band outside the accumulated bins [" +
                         std::to_string(acc.first_bin()) + ", " +
                         std::to_string(acc.first_bin() + acc.n_bins() - 1) + "]");
  }
  const auto n_ch = static_cast<std::size_t>(acc.n_channels());
  const std::size_t n_pairs = acc.n_pairs();
  const int n_bins = hi_bin - lo_bin + 1;
  const double k = static_cast<double>(acc.n_trials_accumulated());

  SpectralValues out;
  out.first_bin = lo_bin;
  out.is_complex = metric == MetricId::Cohy;
  out.re = RealMatrix::Zero(static_cast<Eigen::Index>(n_pairs), n_bins);
  if (out.is_complex) out.im = RealMatrix::Zero(static_cast<Eigen::Index>(n_pairs), n_bins);

  const auto pairs = pair_list(n_ch);
  parallel_chunks(n_pairs, [&](std::size_t begin, std::size_t end) {
    for (std::size_t p = begin; p < end; ++p) {
      const auto [i, j] = pairs[p];
      const auto row = static_cast<Eigen::Index>(p);
      for (int b = 0; b < n_bins; ++b) {
        const int bin = lo_bin + b;
        const std::size_t o = acc.offset(p, bin);
        double value = 0.0;
        switch (metric) {
          case MetricId::Cohy:
          case MetricId::Coh:
          case MetricId::ImagCohy: {
            const double denom = std::sqrt(acc.psd_sum(i, bin - acc.first_bin()) *
                                           acc.psd_sum(j, bin - acc.first_bin()));
            std::complex<double> z{0.0, 0.0};
            if (denom > 0.0) z = acc.csd_sum[o] / denom;
            if (metric == MetricId::Cohy) {
              out.re(row, b) = z.real();
              out.im(row, b) = z.imag();
              continue;
            }
            // sqrt(norm) rather than std::abs: hypot dominates the finalize cost
            value = metric == MetricId::Coh ? std::sqrt(std::norm(z)) : z.imag();
            break;
          }
          case MetricId::Plv:
            value = std::sqrt(std::norm(acc.plv_sum[o])) / k;
            break;
          case MetricId::Pli:
            value = std::abs(acc.pli_sum[o]) / k;
            break;
          case MetricId::Uspli: {
            const double pli = std::abs(acc.pli_sum[o]) / k;
            value = (k * pli * pli - 1.0) / (k - 1.0);
            break;
          }
          case MetricId::Wpli:
          case MetricId::Dswpli: {
            const double denom = acc.abs_im_sum[o];
            const double w = denom > 0.0 ? std::abs(acc.im_sum[o]) / denom : 0.0;
            value = metric == MetricId::Wpli ? w : w * w;
            break;
          }
          default:
            break;
        }
        out.re(row, b) = value;
      }
    }
  }, 64);
  return out;
}

ConnectivityNetwork spectral_network(const SpectrumSet& acc, MetricId metric,
                                     const FrequencyBand& band) {
  const SpectralValues values = spectral_bins(acc, metric, band.lo_bin, band.hi_bin);
  const auto n_ch = static_cast<std::size_t>(acc.n_channels());
  ConnectivityNetwork net = empty_network(metric, n_ch, band, acc.n_trials_accumulated());
  FrequencyBand local = band;
  const Eigen::VectorXd re = band_average(values.re, local, values.first_bin);
  Eigen::VectorXd im;
  if (values.is_complex) im = band_average(values.im, local, values.first_bin);

  const auto pairs = pair_list(n_ch);
  net.edges.reserve(pairs.size());
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const auto [i, j] = pairs[p];
    const auto row = static_cast<Eigen::Index>(p);
    if (values.is_complex) {
      net.edges.push_back(make_complex_edge(i, j, {re(row), im(row)}));
    } else {
      Edge e;
      e.i = i;
      e.j = j;
      e.weight = re(row);
      net.edges.push_back(e);
    }
  }
  return net;
}

ConnectivityNetwork cohy(const SpectrumSet& acc, const FrequencyBand& band) {
  return spectral_network(acc, MetricId::Cohy, band);
}
ConnectivityNetwork coh(const SpectrumSet& acc, const FrequencyBand& band) {
  return spectral_network(acc, MetricId::Coh, band);
}
ConnectivityNetwork imagcohy(const SpectrumSet& acc, const FrequencyBand& band) {
  return spectral_network(acc, MetricId::ImagCohy, band);
}
ConnectivityNetwork plv(const SpectrumSet& acc, const FrequencyBand& band) {
  return spectral_network(acc, MetricId::Plv, band);
}
ConnectivityNetwork pli(const SpectrumSet& acc, const FrequencyBand& band) {
  return spectral_network(acc, MetricId::Pli, band);
}
ConnectivityNetwork uspli(const SpectrumSet& acc, const FrequencyBand& band) {
  return spectral_network(acc, MetricId::Uspli, band);
}
ConnectivityNetwork wpli(const SpectrumSet& acc, const FrequencyBand& band) {
  return spectral_network(acc, MetricId::Wpli, band);
}
ConnectivityNetwork dswpli(const SpectrumSet& acc, const FrequencyBand& band) {
  return spectral_network(acc, MetricId::Dswpli, band);
}

ConnectivityNetwork network_from_pairs(MetricId metric, std::size_t n_channels,
                                       std::span<const double> values, const FrequencyBand& band,
                                       int n_trials) {
  if (values.size() != pair_count(n_channels)) throw DimensionError("pair count mismatch");
  ConnectivityNetwork net = empty_network(metric, n_channels, band, n_trials);
  const auto pairs = pair_list(n_channels);
  net.edges.reserve(pairs.size());
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    Edge e;
    e.i = pairs[p].first;
    e.j = pairs[p].second;
    e.weight = values[p];
    net.edges.push_back(e);
  }
  return net;
}

// ---- COR --------------------------------------------------------------------------

CorContribution cor_trial(const EpochMatrix& epoch) {
  epoch.validate();
  const Eigen::Index n_ch = epoch.n_channels();
  const auto n = static_cast<std::size_t>(epoch.n_samples());
  RealMatrix z = epoch.data.colwise() - epoch.data.rowwise().mean();
  CorContribution out;
  for (Eigen::Index c = 0; c < n_ch; ++c) {
    const double sumsq = z.row(c).squaredNorm();
    if (is_dead(sumsq, epoch.data.row(c).cwiseAbs().maxCoeff(), n)) {
      z.row(c).setZero();
      out.dead_channels.push_back(static_cast<int>(c));
    } else {
      z.row(c) /= std::sqrt(sumsq);
    }
  }
  // upper triangle only
  RealMatrix gram = RealMatrix::Zero(n_ch, n_ch);
  gram.selfadjointView<Eigen::Upper>().rankUpdate(z);
  const auto n_chs = static_cast<std::size_t>(n_ch);
  out.values.resize(pair_count(n_chs));
  std::size_t p = 0;
  for (Eigen::Index i = 0; i < n_ch; ++i) {
    for (Eigen::Index j = i + 1; j < n_ch; ++j) out.values[p++] = gram(i, j);
  }
  return out;
}

ConnectivityNetwork cor(std::span<const EpochMatrix> epochs) {
  if (epochs.empty()) throw NoDataError("cor needs at least one epoch");
  const auto n_ch = static_cast<std::size_t>(epochs.front().n_channels());
  std::vector<double> sum(pair_count(n_ch), 0.0);
  std::vector<int> dead;
  for (const auto& epoch : epochs) {
    if (static_cast<std::size_t>(epoch.n_channels()) != n_ch ||
        epoch.n_samples() != epochs.front().n_samples()) {
      throw DimensionError("epochs differ in shape");
    }
    const CorContribution c = cor_trial(epoch);
    for (std::size_t p = 0; p < sum.size(); ++p) sum[p] += c.values[p];
    dead.insert(dead.end(), c.dead_channels.begin(), c.dead_channels.end());
  }
  const double k = static_cast<double>(epochs.size());
  for (double& v : sum) v /= k;
  ConnectivityNetwork net =
      network_from_pairs(MetricId::Cor, n_ch, sum, FrequencyBand{}, static_cast<int>(epochs.size()));
  std::sort(dead.begin(), dead.end());
  dead.erase(std::unique(dead.begin(), dead.end()), dead.end());
  for (int c : dead) net.warnings.push_back(dead_channel_warning(c));
  return net;
}

// ---- XCOR -------------------------------------------------------------------------

namespace {

struct CentredChannel {
  std::vector<std::complex<double>> spectrum;
  // 1 / sqrt(energy of this channel over the overlap at each lag), index lag + n - 1
  std::vector<double> inv_overlap;
  double inv_total = 0.0;  // 1 / sqrt(total energy)
  std::size_t n = 0;
  bool dead = false;
};

CentredChannel prepare_channel(std::span<const double> x, std::size_t fft_len,
                               FftBackend& backend) {
  CentredChannel ch;
  const std::size_t n = x.size();
  ch.n = n;
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
  double max_abs = 0.0;
  std::vector<double> padded(fft_len, 0.0);
  std::vector<double> prefix_sq(n + 1, 0.0);  // prefix_sq[t] = sum_{u < t} centred[u]^2
  for (std::size_t t = 0; t < n; ++t) {
    padded[t] = x[t] - mean;
    max_abs = std::max(max_abs, std::abs(x[t]));
    prefix_sq[t + 1] = prefix_sq[t] + padded[t] * padded[t];
  }
  const double total_sq = prefix_sq[n];
  ch.dead = is_dead(total_sq, max_abs, n);
  ch.inv_total = total_sq > 0.0 ? 1.0 / std::sqrt(total_sq) : 0.0;
  ch.inv_overlap.resize(2 * n - 1);
  for (std::size_t k = 0; k < ch.inv_overlap.size(); ++k) {
    const long lag = static_cast<long>(k) - static_cast<long>(n - 1);
    // samples of this channel overlapping the other one at this lag
    const double sq = lag >= 0 ? prefix_sq[n - static_cast<std::size_t>(lag)]
                               : total_sq - prefix_sq[static_cast<std::size_t>(-lag)];
    ch.inv_overlap[k] = sq > 0.0 ? 1.0 / std::sqrt(sq) : 0.0;
  }
  ch.spectrum.resize(fft_len / 2 + 1);
  backend.forward(padded, ch.spectrum);
  return ch;
}

// Fills r(lag) for lag in [-max_lag, max_lag] into `curve`. `work` and `prod` are scratch.
void correlate(const CentredChannel& x, const CentredChannel& y, int max_lag,
               std::size_t fft_len, FftBackend& backend, std::vector<std::complex<double>>& prod,
               std::vector<double>& work, std::vector<double>& curve) {
  curve.assign(static_cast<std::size_t>(2 * max_lag + 1), 0.0);
  if (x.dead || y.dead) return;
  prod.resize(x.spectrum.size());
  for (std::size_t b = 0; b < prod.size(); ++b) {
    const double ar = x.spectrum[b].real(), ai = x.spectrum[b].imag();
    const double br = y.spectrum[b].real(), bi = y.spectrum[b].imag();
    // conj(X) * Y
    prod[b] = {ar * br + ai * bi, ar * bi - ai * br};
  }
  work.resize(fft_len);
  backend.inverse(prod, work);
  const double scale = y.inv_total / static_cast<double>(fft_len);
  const double* inv = x.inv_overlap.data() + (x.n - 1);
  const auto m = static_cast<std::size_t>(max_lag);
  // negative lags wrap to the end of the circular result
  const double* tail = work.data() + fft_len - m;
  for (std::size_t k = 0; k < m; ++k) {
    curve[k] = tail[k] * scale * inv[static_cast<long>(k) - max_lag];
  }
  for (std::size_t lag = 0; lag <= m; ++lag) curve[m + lag] = work[lag] * scale * inv[lag];
}

int resolve_max_lag(int max_lag, Eigen::Index n_samples) {
  if (max_lag < 0) return static_cast<int>(n_samples - 1);
  if (max_lag >= n_samples) throw ParameterError("max_lag must be < n_samples");
  return max_lag;
}

XCorEdgeValue peak_of(const std::vector<double>& curve, int max_lag) {
  XCorEdgeValue best{curve.front(), -max_lag};
  for (std::size_t k = 1; k < curve.size(); ++k) {
    if (curve[k] > best.peak_value) best = {curve[k], static_cast<int>(k) - max_lag};
  }
  return best;
}

}  // namespace

std::vector<double> normalized_xcorr(std::span<const double> x, std::span<const double> y,
                                     int max_lag, FftBackend& backend) {
  if (x.size() != y.size() || x.size() < 2) throw DimensionError("signals must match, n >= 2");
  max_lag = resolve_max_lag(max_lag, static_cast<Eigen::Index>(x.size()));
  const std::size_t fft_len = fast_fft_size(2 * x.size() - 1);
  const CentredChannel cx = prepare_channel(x, fft_len, backend);
  const CentredChannel cy = prepare_channel(y, fft_len, backend);
  std::vector<std::complex<double>> prod;
  std::vector<double> work, curve;
  correlate(cx, cy, max_lag, fft_len, backend, prod, work, curve);
  return curve;
}

XcorContribution xcor_trial(const EpochMatrix& epoch, int max_lag, FftBackend& backend) {
  epoch.validate();
  max_lag = resolve_max_lag(max_lag, epoch.n_samples());
  const auto n = static_cast<std::size_t>(epoch.n_samples());
  const auto n_ch = static_cast<std::size_t>(epoch.n_channels());
  const std::size_t fft_len = fast_fft_size(2 * n - 1);

  std::vector<CentredChannel> channels(n_ch);
  parallel_for_each_index(n_ch, [&](std::size_t c) {
    const double* row = epoch.data.row(static_cast<Eigen::Index>(c)).data();
    channels[c] = prepare_channel(std::span<const double>(row, n), fft_len, backend);
  });

  XcorContribution out;
  for (std::size_t c = 0; c < n_ch; ++c) {
    if (channels[c].dead) out.dead_channels.push_back(static_cast<int>(c));
  }
  const auto pairs = pair_list(n_ch);
  out.values.resize(pairs.size());
  parallel_chunks(pairs.size(), [&](std::size_t begin, std::size_t end) {
    std::vector<std::complex<double>> prod;
    std::vector<double> work, curve;
    for (std::size_t p = begin; p < end; ++p) {
      const auto& x = channels[static_cast<std::size_t>(pairs[p].first)];
      const auto& y = channels[static_cast<std::size_t>(pairs[p].second)];
      if (x.dead || y.dead) {
        out.values[p] = {0.0, 0};
        continue;
      }
      correlate(x, y, max_lag, fft_len, backend, prod, work, curve);
      out.values[p] = peak_of(curve, max_lag);
    }
  }, 16);
  return out;
}

ConnectivityNetwork xcor(std::span<const EpochMatrix> epochs, int max_lag, FftBackend& backend) {
  if (epochs.empty()) throw NoDataError("xcor needs at least one epoch");
  const auto n_ch = static_cast<std::size_t>(epochs.front().n_channels());
  const std::size_t n_pairs = pair_count(n_ch);
  std::vector<double> value_sum(n_pairs, 0.0);
  std::vector<double> lag_sum(n_pairs, 0.0);
  std::vector<int> dead;
  for (const auto& epoch : epochs) {
    if (static_cast<std::size_t>(epoch.n_channels()) != n_ch ||
        epoch.n_samples() != epochs.front().n_samples()) {
      throw DimensionError("epochs differ in shape");
    }
    const XcorContribution c = xcor_trial(epoch, max_lag, backend);
    for (std::size_t p = 0; p < n_pairs; ++p) {
      value_sum[p] += c.values[p].peak_value;
      lag_sum[p] += c.values[p].peak_lag;
    }
    dead.insert(dead.end(), c.dead_channels.begin(), c.dead_channels.end());
  }
  const double k = static_cast<double>(epochs.size());
  ConnectivityNetwork net;
  net.metric = MetricId::Xcor;
  net.n_trials = static_cast<int>(epochs.size());
  net.nodes = default_nodes(n_ch);
  const auto pairs = pair_list(n_ch);
  net.edges.reserve(n_pairs);
  for (std::size_t p = 0; p < n_pairs; ++p) {
    Edge e;
    e.i = pairs[p].first;
    e.j = pairs[p].second;
    e.weight = std::abs(value_sum[p] / k);
    e.lag = static_cast<int>(std::lround(lag_sum[p] / k));
    net.edges.push_back(e);
  }
  std::sort(dead.begin(), dead.end());
  dead.erase(std::unique(dead.begin(), dead.end()), dead.end());
  for (int c : dead) net.warnings.push_back(dead_channel_warning(c));
  return net;
}

ConnectivityNetwork xcor(std::span<const EpochMatrix> epochs, int max_lag) {
  auto backend = make_fft_backend();
  return xcor(epochs, max_lag, *backend);
}

}  // namespace connstream
