#pragma once

#include <array>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "connstream/errors.hpp"

namespace connstream {

using RealMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ComplexMatrix =
    Eigen::Matrix<std::complex<double>, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Position = std::array<double, 3>;

/// One trial: channels x samples, time-locked to a trigger.
struct EpochMatrix {
  RealMatrix data;
  double sfreq = 1.0;
  double t0_offset = 0.0;  // seconds of the first sample relative to the trigger
  std::size_t trial_index = 0;

  Eigen::Index n_channels() const { return data.rows(); }
  Eigen::Index n_samples() const { return data.cols(); }

  /// Throws ParameterError unless channels >= 1, samples >= 2, sfreq > 0 and all values finite.
  void validate() const;
  /// Same, but only the first `used_samples` columns are checked for finite values.
  void validate(Eigen::Index used_samples) const;
};

/// Inclusive range of FFT bins.
struct FrequencyBand {
  int lo_bin = 0;
  int hi_bin = 0;
  double bin_hz = 1.0;

  int n_bins() const { return hi_bin - lo_bin + 1; }
  void validate(int nfft) const;
  bool operator==(const FrequencyBand&) const = default;
};

enum class MetricId { Cor, Xcor, Cohy, Coh, ImagCohy, Plv, Pli, Uspli, Wpli, Dswpli };

inline constexpr std::array<MetricId, 10> kAllMetrics = {
    MetricId::Cor, MetricId::Xcor, MetricId::Cohy, MetricId::Coh,  MetricId::ImagCohy,
    MetricId::Plv, MetricId::Pli,  MetricId::Uspli, MetricId::Wpli, MetricId::Dswpli};

std::string_view to_string(MetricId metric);
/// Case-insensitive; throws ParameterError for unknown names.
MetricId parse_metric(std::string_view name);
/// True for metrics finalized from accumulated cross-spectra.
bool is_spectral(MetricId metric);

struct XCorEdgeValue {
  double peak_value = 0.0;
  int peak_lag = 0;
};

struct Node {
  int id = 0;
  Position pos{0.0, 0.0, 0.0};
  bool operator==(const Node&) const = default;
};

/// Undirected edge with i < j.
///
/// `weight` is the scalar used for display and thresholding (always compared by
/// magnitude). Complex-valued edges (COHY) keep `weight` = |z| carrying the sign of
/// Re(z), plus `weight_im` = Im(z); the complex value is recovered by complex_weight().
struct Edge {
  int i = 0;
  int j = 0;
  double weight = 0.0;
  std::optional<double> weight_im;
  std::optional<int> lag;

  std::optional<std::complex<double>> complex_weight() const;
  bool operator==(const Edge&) const = default;
};

/// Builds the stored representation of a complex edge value.
Edge make_complex_edge(int i, int j, std::complex<double> value);

struct ConnectivityNetwork {
  std::vector<Node> nodes;
  std::vector<Edge> edges;
  MetricId metric = MetricId::Coh;
  FrequencyBand band;
  int n_trials = 1;
  bool normalized = false;
  // Diagnostics (e.g. zero-variance channels). Not part of the wire format.
  std::vector<std::string> warnings;

  bool same_content(const ConnectivityNetwork& other) const;
};

std::vector<Node> default_nodes(std::size_t n);
std::vector<Node> nodes_from_positions(const std::vector<Position>& positions);

// Upper-triangle pair indexing shared by accumulators and finalizers.
inline std::size_t pair_count(std::size_t n_channels) {
  return n_channels * (n_channels - 1) / 2;
}
inline std::size_t pair_row_offset(std::size_t i, std::size_t n_channels) {
  return i * n_channels - i * (i + 1) / 2;
}
inline std::size_t pair_index(std::size_t i, std::size_t j, std::size_t n_channels) {
  return pair_row_offset(i, n_channels) + (j - i - 1);
}
/// All (i, j) with i < j in pair_index order.
std::vector<std::pair<int, int>> pair_list(std::size_t n_channels);

/// Divides every weight by the largest |weight|. All-zero networks are only flagged.
ConnectivityNetwork normalize_network(ConnectivityNetwork net);

/// Keeps the ceil(keep_fraction * n_edges) strongest edges by |weight|. Ties go to the
/// lexicographically smaller (i, j). Retained edges keep their original order.
ConnectivityNetwork threshold_network(ConnectivityNetwork net, double keep_fraction);

/// Mean over the inclusive bin range of `band`, per row. Column c of `per_bin_weights`
/// holds bin `first_bin + c`.
Eigen::VectorXd band_average(const RealMatrix& per_bin_weights, const FrequencyBand& band,
                             int first_bin = 0);

/// Canonical JSON (fixed key order, shortest round-tripping doubles).
std::string serialize_network(const ConnectivityNetwork& net);
ConnectivityNetwork deserialize_network(std::string_view json_text);

}  // namespace connstream
