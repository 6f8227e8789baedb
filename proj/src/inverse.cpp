#include "connstream/inverse.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>

#include <nlohmann/json.hpp>

namespace connstream {

static_assert(std::endian::native == std::endian::little, "container I/O assumes little-endian");

void ForwardModel::validate() const {
  if (gain.rows() < 1 || gain.cols() < 1) throw ParameterError("empty leadfield");
  if (!gain.allFinite()) throw ParameterError("leadfield has non-finite entries");
  if (static_cast<Eigen::Index>(source_positions.size()) != gain.cols()) {
    throw DimensionError("need one position per source");
  }
  if (!labels.empty() && static_cast<Eigen::Index>(labels.size()) != gain.cols()) {
    throw DimensionError("need one label per source");
  }
}

NoiseCovariance estimate_covariance(std::span<const RealMatrix> blocks) {
  if (blocks.empty()) throw NoDataError("no blocks for covariance");
  Eigen::Index total = 0;
  for (const auto& b : blocks) {
    if (b.rows() != blocks.front().rows()) throw DimensionError("blocks differ in channels");
    total += b.cols();
  }
  if (total < 2) throw NoDataError("covariance needs at least two samples");
  RealMatrix x(blocks.front().rows(), total);
  Eigen::Index at = 0;
  for (const auto& b : blocks) {
    x.middleCols(at, b.cols()) = b;
    at += b.cols();
  }
  x.colwise() -= x.rowwise().mean();
  NoiseCovariance cov;
  cov.C = (x * x.transpose()) / static_cast<double>(total - 1);
  cov.C = 0.5 * (cov.C + cov.C.transpose()).eval();
  cov.n_samples_used = total;
  return cov;
}

CovarianceEstimator::CovarianceEstimator(Eigen::Index n_sensors, std::int64_t target)
    : buffer_(n_sensors, static_cast<Eigen::Index>(target)) {
  if (n_sensors < 1 || target < 2) throw ParameterError("covariance target must be >= 2");
}

std::optional<NoiseCovariance> CovarianceEstimator::push(const RealMatrix& block) {
  if (block.rows() != buffer_.rows()) throw DimensionError("covariance channel mismatch");
  std::optional<NoiseCovariance> latest;
  const auto target = static_cast<std::int64_t>(buffer_.cols());
  Eigen::Index t = 0;
  while (t < block.cols()) {
    const auto take = std::min<Eigen::Index>(block.cols() - t, target - filled_);
    buffer_.middleCols(static_cast<Eigen::Index>(filled_), take) = block.middleCols(t, take);
    filled_ += take;
    t += take;
    if (filled_ == target) {
      const RealMatrix full = buffer_;
      latest = estimate_covariance(std::span<const RealMatrix>(&full, 1));
      filled_ = 0;
    }
  }
  return latest;
}

InverseOperator build_inverse_with_lambda(const ForwardModel& fwd, const NoiseCovariance& cov,
                                          double lambda) {
  fwd.validate();
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ParameterError("lambda must be >= 0");
  const Eigen::Index n = fwd.n_sensors();
  if (cov.C.rows() != n || cov.C.cols() != n) {
    throw DimensionError("noise covariance is " + std::to_string(cov.C.rows()) + "x" +
                         std::to_string(cov.C.cols()) + ", leadfield has " + std::to_string(n) +
                         " sensors");
  }
  const Eigen::MatrixXd g = fwd.gain;
  const Eigen::MatrixXd ggt = g * g.transpose();
  const double trace_c = cov.C.trace();
  if (!(trace_c > 0.0)) {
    throw NumericalError("noise covariance has zero trace", std::numeric_limits<double>::infinity());
  }
  const Eigen::MatrixXd scaled_c = Eigen::MatrixXd(cov.C) * (ggt.trace() / trace_c);
  const Eigen::MatrixXd a = ggt + lambda * scaled_c;
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
  const double rcond = ldlt.info() == Eigen::Success ? ldlt.rcond() : 0.0;
  if (!(rcond > 1e-14)) {
    throw NumericalError("inverse system is singular after regularization",
                         rcond > 0.0 ? 1.0 / rcond : std::numeric_limits<double>::infinity());
  }
  const Eigen::MatrixXd x = ldlt.solve(g);
  InverseOperator op;
  op.M = x.transpose();
  op.lambda = lambda;
  op.snr_assumed = lambda > 0.0 ? 1.0 / std::sqrt(lambda) : std::numeric_limits<double>::infinity();
  op.source_positions = fwd.source_positions;
  return op;
}

InverseOperator build_inverse(const ForwardModel& fwd, const NoiseCovariance& cov, double snr) {
  if (!(snr > 0.0) || !std::isfinite(snr)) throw ParameterError("snr must be > 0");
  InverseOperator op = build_inverse_with_lambda(fwd, cov, 1.0 / (snr * snr));
  op.snr_assumed = snr;
  return op;
}

RealMatrix apply_inverse(const InverseOperator& op, const RealMatrix& data) {
  if (data.rows() != op.M.cols()) {
    throw DimensionError("operator expects " + std::to_string(op.M.cols()) + " sensors, got " +
                         std::to_string(data.rows()));
  }
  return op.M * data;
}

EpochMatrix apply_inverse(const InverseOperator& op, const EpochMatrix& epoch) {
  EpochMatrix out;
  out.data = apply_inverse(op, epoch.data);
  out.sfreq = epoch.sfreq;
  out.t0_offset = epoch.t0_offset;
  out.trial_index = epoch.trial_index;
  return out;
}

ForwardModel cluster_forward(const ForwardModel& fwd) {
  fwd.validate();
  if (fwd.labels.empty()) throw ParameterError("clustering needs source labels");
  std::map<int, std::vector<Eigen::Index>> groups;
  for (Eigen::Index s = 0; s < fwd.n_sources(); ++s) {
    groups[fwd.labels[static_cast<std::size_t>(s)]].push_back(s);
  }
  ForwardModel out;
  out.gain = RealMatrix::Zero(fwd.n_sensors(), static_cast<Eigen::Index>(groups.size()));
  Eigen::Index col = 0;
  for (const auto& [label, members] : groups) {
    Position pos{0.0, 0.0, 0.0};
    for (Eigen::Index s : members) {
      out.gain.col(col) += fwd.gain.col(s);
      for (int d = 0; d < 3; ++d) pos[d] += fwd.source_positions[static_cast<std::size_t>(s)][d];
    }
    const double k = static_cast<double>(members.size());
    out.gain.col(col) /= k;
    for (double& p : pos) p /= k;
    out.source_positions.push_back(pos);
    out.labels.push_back(label);
    ++col;
  }
  return out;
}

// ---- container I/O ------------------------------------------------------------------

namespace {

void write_container(const std::filesystem::path& path, const nlohmann::json& header,
                     const RealMatrix& payload) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  const std::string text = header.dump();
  const std::uint64_t len = text.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(payload.size() * sizeof(double)));
  if (!out) throw ConfigError("short write to " + path.string());
}

std::pair<nlohmann::json, RealMatrix> read_container(const std::filesystem::path& path,
                                                     const char* row_key, const char* col_key) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in || len > (1u << 26)) throw ConfigError(path.string() + ": bad header length");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw ConfigError(path.string() + ": truncated header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError(path.string() + ": " + ex.what());
  }
  const auto rows = header.at(row_key).get<Eigen::Index>();
  const auto cols = header.at(col_key).get<Eigen::Index>();
  if (rows < 1 || cols < 1) throw ConfigError(path.string() + ": bad dimensions");
  RealMatrix payload(rows, cols);
  in.read(reinterpret_cast<char*>(payload.data()),
          static_cast<std::streamsize>(payload.size() * sizeof(double)));
  if (!in) throw ConfigError(path.string() + ": truncated payload");
  return {std::move(header), std::move(payload)};
}

nlohmann::json positions_json(const std::vector<Position>& positions) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& p : positions) arr.push_back({p[0], p[1], p[2]});
  return arr;
}

std::vector<Position> positions_from(const nlohmann::json& arr) {
  std::vector<Position> out;
  for (const auto& p : arr) out.push_back({p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>()});
  return out;
}

}  // namespace

void write_forward(const std::filesystem::path& path, const ForwardModel& fwd) {
  fwd.validate();
  nlohmann::json header;
  header["kind"] = "forward";
  header["n_sensors"] = fwd.n_sensors();
  header["n_sources"] = fwd.n_sources();
  header["positions"] = positions_json(fwd.source_positions);
  header["labels"] = fwd.labels;
  write_container(path, header, fwd.gain);
}

ForwardModel read_forward(const std::filesystem::path& path) {
  auto [header, payload] = read_container(path, "n_sensors", "n_sources");
  try {
    if (header.value("kind", "") != "forward") throw ConfigError(path.string() + ": not a forward model");
    ForwardModel fwd;
    fwd.gain = std::move(payload);
    fwd.source_positions = positions_from(header.at("positions"));
    if (header.contains("labels")) fwd.labels = header.at("labels").get<std::vector<int>>();
    fwd.validate();
    return fwd;
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError(path.string() + ": " + ex.what());
  } catch (const ParameterError& ex) {
    throw ConfigError(path.string() + ": " + ex.what());
  }
}

void write_inverse(const std::filesystem::path& path, const InverseOperator& op) {
  nlohmann::json header;
  header["kind"] = "inverse";
  header["n_sources"] = op.M.rows();
  header["n_sensors"] = op.M.cols();
  header["lambda"] = op.lambda;
  header["snr"] = op.snr_assumed;
  header["positions"] = positions_json(op.source_positions);
  write_container(path, header, op.M);
}

InverseOperator read_inverse(const std::filesystem::path& path) {
  auto [header, payload] = read_container(path, "n_sources", "n_sensors");
  try {
    if (header.value("kind", "") != "inverse") throw ConfigError(path.string() + ": not an inverse operator");
    InverseOperator op;
    op.M = std::move(payload);
    op.lambda = header.at("lambda").get<double>();
    op.snr_assumed = header.at("snr").get<double>();
    op.source_positions = positions_from(header.at("positions"));
    return op;
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError(path.string() + ": " + ex.what());
  }
}

}  // namespace connstream
