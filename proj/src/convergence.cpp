#include "connstream/convergence.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "connstream/errors.hpp"

namespace connstream {

std::vector<ConvergenceRow> convergence_curve(std::span<const EpochMatrix> epochs,
                                              const std::vector<MetricId>& metrics,
                                              const TrialCacheOptions& options, const FrequencyBand& band,
                                              int top_n) {
  if (epochs.empty()) throw NoDataError("convergence needs epochs");
  if (top_n < 1) throw ParameterError("top_n must be positive");
  TrialCacheOptions opts = options;
  opts.storage = true;  // replays per metric reuse the stored spectra
  opts.average_count = 0;
  TrialCache cache(static_cast<int>(epochs.front().n_channels()), opts);

  std::vector<ConvergenceRow> rows;
  for (MetricId metric : metrics) {
    cache.reset();
    for (const auto& e : epochs) cache.add_trial(e);
    const ConnectivityNetwork final_net = cache.finalize(metric, band);
    std::vector<std::size_t> order(final_net.edges.size());
    std::iota(order.begin(), order.end(), 0);
    const auto n_top = std::min<std::size_t>(static_cast<std::size_t>(top_n), order.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_top), order.end(),
                      [&](std::size_t a, std::size_t b) {
                        const double wa = std::abs(final_net.edges[a].weight);
                        const double wb = std::abs(final_net.edges[b].weight);
                        return wa != wb ? wa > wb : a < b;
                      });
    order.resize(n_top);
    auto mean_top = [&](const ConnectivityNetwork& net) {
      double s = 0.0;
      for (std::size_t p : order) s += std::abs(net.edges[p].weight);
      return s / static_cast<double>(n_top);
    };
    const double final_mean = mean_top(final_net);

    cache.reset();
    for (const auto& e : epochs) {
      cache.add_trial(e);
      ConnectivityNetwork net;
      try {
        net = cache.finalize(metric, band);
      } catch (const DegenerateTrialCountError&) {
        continue;
      }
      ConvergenceRow row;
      row.metric = metric;
      row.n_trials = cache.n_trials();
      row.mean_top = mean_top(net);
      row.rel_change_vs_final =
          final_mean != 0.0 ? std::abs(row.mean_top - final_mean) / std::abs(final_mean) : 0.0;
      rows.push_back(row);
    }
  }
  return rows;
}

double max_change_after(const std::vector<ConvergenceRow>& rows, MetricId metric, int from_trials) {
  double worst = 0.0;
  for (const auto& r : rows) {
    if (r.metric == metric && r.n_trials >= from_trials) worst = std::max(worst, r.rel_change_vs_final);
  }
  return worst;
}

void write_convergence_csv(std::ostream& out, const std::vector<ConvergenceRow>& rows) {
  out << "metric,n_trials,mean_top20,rel_change_vs_final\n";
  const auto old = out.precision(12);
  for (const auto& r : rows) {
    out << to_string(r.metric) << ',' << r.n_trials << ',' << r.mean_top << ',' << r.rel_change_vs_final << '\n';
  }
  out.precision(old);
}

}  // namespace connstream
