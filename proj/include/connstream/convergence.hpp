#pragma once

#include <iosfwd>
#include <span>
#include <vector>

#include "connstream/core.hpp"
#include "connstream/trial_cache.hpp"

namespace connstream {

struct ConvergenceRow {
  MetricId metric = MetricId::Coh;
  int n_trials = 0;
  double mean_top = 0.0;            // mean |w| of the reference edges after n_trials
  double rel_change_vs_final = 0.0;
};

/// Picks the `top_n` strongest edges (raw |w|) of the all-trial network, then reports their
/// mean weight after each trial count 1..N. Trial counts a metric cannot finalize (USPLI
/// at one trial) are left out.
std::vector<ConvergenceRow> convergence_curve(std::span<const EpochMatrix> epochs,
                                              const std::vector<MetricId>& metrics,
                                              const TrialCacheOptions& options, const FrequencyBand& band,
                                              int top_n = 20);

/// Largest relative change versus the final value over rows with n_trials >= from_trials.
double max_change_after(const std::vector<ConvergenceRow>& rows, MetricId metric, int from_trials);

void write_convergence_csv(std::ostream& out, const std::vector<ConvergenceRow>& rows);

}  // namespace connstream
