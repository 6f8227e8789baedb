#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "connstream/core.hpp"

namespace connstream {

/// Fixed-orientation leadfield: one column per source.
struct ForwardModel {
  RealMatrix gain;  // sensors x sources
  std::vector<Position> source_positions;
  std::vector<int> labels;  // empty or one region id per source

  Eigen::Index n_sensors() const { return gain.rows(); }
  Eigen::Index n_sources() const { return gain.cols(); }
  void validate() const;
};

struct NoiseCovariance {
  RealMatrix C;
  std::int64_t n_samples_used = 0;
};

struct InverseOperator {
  RealMatrix M;  // sources x sensors
  double lambda = 0.0;
  double snr_assumed = 0.0;
  std::vector<Position> source_positions;
};

/// Sample covariance (n - 1 normalization) of the row-mean-removed concatenation.
NoiseCovariance estimate_covariance(std::span<const RealMatrix> blocks);

/// Gathers blocks and emits a fresh covariance every time `target` samples have arrived.
class CovarianceEstimator {
 public:
  CovarianceEstimator(Eigen::Index n_sensors, std::int64_t target);
  std::optional<NoiseCovariance> push(const RealMatrix& block);
  std::int64_t buffered() const { return filled_; }

 private:
  RealMatrix buffer_;
  std::int64_t filled_ = 0;
};

/// Tikhonov minimum-norm operator M = G^T (G G^T + lambda * C')^-1, where C' is the noise
/// covariance scaled to trace(G G^T). lambda = 1 / snr^2.
InverseOperator build_inverse(const ForwardModel& fwd, const NoiseCovariance& cov, double snr);
InverseOperator build_inverse_with_lambda(const ForwardModel& fwd, const NoiseCovariance& cov,
                                          double lambda);

RealMatrix apply_inverse(const InverseOperator& op, const RealMatrix& data);
EpochMatrix apply_inverse(const InverseOperator& op, const EpochMatrix& epoch);

/// Averages leadfield columns (and positions) per label. A crude stand-in for anatomical
/// source clustering; labels come from the model.
ForwardModel cluster_forward(const ForwardModel& fwd);

// .fwdx container: uint64 LE header length, JSON header, f64 LE row-major payload.
void write_forward(const std::filesystem::path& path, const ForwardModel& fwd);
ForwardModel read_forward(const std::filesystem::path& path);
void write_inverse(const std::filesystem::path& path, const InverseOperator& op);
InverseOperator read_inverse(const std::filesystem::path& path);

}  // namespace connstream
