#include <doctest.h>

#include <filesystem>
#include <random>

#include "connstream/inverse.hpp"

using namespace connstream;

namespace {

ForwardModel random_forward(Eigen::Index n_sensors, Eigen::Index n_sources, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  ForwardModel f;
  f.gain.resize(n_sensors, n_sources);
  for (Eigen::Index i = 0; i < f.gain.size(); ++i) f.gain.data()[i] = g(rng);
  for (Eigen::Index s = 0; s < n_sources; ++s) {
    f.source_positions.push_back({0.01 * static_cast<double>(s), 0.0, 0.05});
    f.labels.push_back(static_cast<int>(s % 3));
  }
  return f;
}

NoiseCovariance random_cov(Eigen::Index n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  RealMatrix a(n, 3 * n);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = g(rng);
  return {a * a.transpose() / static_cast<double>(a.cols()), a.cols()};
}

}  // namespace

TEST_CASE("operator matches the source-space form of the regularized solution") {
  // G^T (G G^T + l C)^-1 == (G^T C^-1 G + l I)^-1 G^T C^-1 for invertible C
  const auto fwd = random_forward(12, 30, 3);
  const auto cov = random_cov(12, 4);
  const double snr = 3.0;
  const auto op = build_inverse(fwd, cov, snr);
  const double lambda = 1.0 / (snr * snr);
  const Eigen::MatrixXd G = fwd.gain;
  const Eigen::MatrixXd C = cov.C * ((G * G.transpose()).trace() / cov.C.trace());
  const Eigen::MatrixXd Ci = C.inverse();
  const Eigen::MatrixXd A = G.transpose() * Ci * G + lambda * Eigen::MatrixXd::Identity(30, 30);
  const Eigen::MatrixXd M = A.inverse() * G.transpose() * Ci;
  CHECK((op.M - M).cwiseAbs().maxCoeff() < 1e-9 * M.cwiseAbs().maxCoeff());
  CHECK(op.lambda == doctest::Approx(lambda));
  CHECK(op.snr_assumed == snr);
  CHECK(op.source_positions.size() == 30);
}

TEST_CASE("scaling the covariance does not change the operator") {
  const auto fwd = random_forward(10, 20, 5);
  auto cov = random_cov(10, 6);
  const auto a = build_inverse(fwd, cov, 2.0);
  cov.C *= 1e-6;
  const auto b = build_inverse(fwd, cov, 2.0);
  CHECK((a.M - b.M).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("singular systems raise NumericalError") {
  // more sensors than sources and no regularization
  const auto fwd = random_forward(20, 5, 7);
  NoiseCovariance eye{RealMatrix::Identity(20, 20), 0};
  CHECK_THROWS_AS(build_inverse_with_lambda(fwd, eye, 0.0), NumericalError);
  NoiseCovariance zero{RealMatrix::Zero(20, 20), 0};
  CHECK_THROWS_AS(build_inverse(fwd, zero, 3.0), NumericalError);
  CHECK_THROWS_AS(build_inverse(fwd, eye, 0.0), ParameterError);
  NoiseCovariance wrong{RealMatrix::Identity(19, 19), 0};
  CHECK_THROWS_AS(build_inverse(fwd, wrong, 3.0), DimensionError);
}

TEST_CASE("apply maps sensors to sources") {
  const auto fwd = random_forward(8, 4, 9);
  const auto op = build_inverse(fwd, {RealMatrix::Identity(8, 8), 0}, 100.0);
  EpochMatrix e;
  e.data = fwd.gain * RealMatrix::Identity(4, 4);
  e.sfreq = 250.0;
  e.trial_index = 3;
  const auto s = apply_inverse(op, e);
  CHECK(s.n_channels() == 4);
  CHECK(s.trial_index == 3);
  // weak regularization with more sensors than sources nearly inverts the gain
  CHECK((s.data - RealMatrix::Identity(4, 4)).cwiseAbs().maxCoeff() < 1e-2);
  CHECK_THROWS_AS(apply_inverse(op, RealMatrix::Zero(7, 3)), DimensionError);
}

TEST_CASE("covariance estimate matches the direct sample covariance") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g(0.0, 1.0);
  RealMatrix x(3, 500);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = g(rng) + 2.0;
  std::vector<RealMatrix> blocks{x.leftCols(123), x.rightCols(377)};
  const auto cov = estimate_covariance(blocks);
  CHECK(cov.n_samples_used == 500);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double mi = x.row(i).mean(), mj = x.row(j).mean(), acc = 0.0;
      for (int t = 0; t < 500; ++t) acc += (x(i, t) - mi) * (x(j, t) - mj);
      CHECK(cov.C(i, j) == doctest::Approx(acc / 499.0).epsilon(1e-12));
    }

  CovarianceEstimator est(3, 200);
  int emitted = 0;
  for (Eigen::Index at = 0; at < 500; at += 70) {
    if (est.push(x.middleCols(at, std::min<Eigen::Index>(70, 500 - at)))) ++emitted;
  }
  CHECK(emitted == 2);
  CHECK(est.buffered() == 100);
}

TEST_CASE("clustering averages columns per label") {
  const auto fwd = random_forward(6, 9, 13);
  const auto c = cluster_forward(fwd);
  REQUIRE(c.n_sources() == 3);
  const Eigen::VectorXd mean0 = (fwd.gain.col(0) + fwd.gain.col(3) + fwd.gain.col(6)) / 3.0;
  CHECK((c.gain.col(0) - mean0).cwiseAbs().maxCoeff() < 1e-15);
  CHECK(c.source_positions[1][0] == doctest::Approx(0.04));
  auto unlabeled = fwd;
  unlabeled.labels.clear();
  CHECK_THROWS_AS(cluster_forward(unlabeled), ParameterError);
}

TEST_CASE("forward and operator containers round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "connstream_test_inverse";
  std::filesystem::create_directories(dir);
  const auto fwd = random_forward(5, 7, 17);
  write_forward(dir / "a.fwdx", fwd);
  const auto f2 = read_forward(dir / "a.fwdx");
  CHECK(f2.gain == fwd.gain);
  CHECK(f2.labels == fwd.labels);
  CHECK(f2.source_positions == fwd.source_positions);

  const auto op = build_inverse(fwd, {RealMatrix::Identity(5, 5), 0}, 3.0);
  write_inverse(dir / "a.invx", op);
  const auto op2 = read_inverse(dir / "a.invx");
  CHECK(op2.M == op.M);
  CHECK(op2.lambda == op.lambda);
  CHECK_THROWS_AS(read_forward(dir / "missing.fwdx"), ConfigError);
  std::filesystem::remove_all(dir);
}
