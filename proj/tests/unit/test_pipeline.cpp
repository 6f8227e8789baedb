#include <doctest.h>

#include <filesystem>

#include <nlohmann/json.hpp>

#include "connstream/pipeline.hpp"
#include "connstream/simulate.hpp"

using namespace connstream;
namespace fs = std::filesystem;

namespace {

SimulationOptions small_sim() {
  SimulationOptions o;
  o.n_sensors = 12;
  o.n_trials = 10;
  o.seed = 3;
  return o;
}

const Simulation& shared_sim() {
  static const Simulation sim = simulate(small_sim());
  return sim;
}

PipelineConfig sensor_config() {
  auto c = simulation_config(small_sim(), "");
  c.connectivity.threshold = 1.0;
  return c;
}

// Batch reference straight from the epochs, bypassing the pipeline.
ConnectivityNetwork batch(const PipelineConfig& c, const std::vector<EpochMatrix>& epochs, std::vector<Node> nodes) {
  ConnectivityEngine engine(c.connectivity, static_cast<int>(nodes.size()), nodes, shared_sim().recording.info.sfreq);
  for (const auto& e : epochs) engine.add_trial(e);
  return engine.current();
}

bool close(const ConnectivityNetwork& a, const ConnectivityNetwork& b, double tol) {
  if (a.edges.size() != b.edges.size() || a.metric != b.metric || a.n_trials != b.n_trials) return false;
  for (std::size_t k = 0; k < a.edges.size(); ++k) {
    if (a.edges[k].i != b.edges[k].i || a.edges[k].j != b.edges[k].j) return false;
    if (std::abs(a.edges[k].weight - b.edges[k].weight) > tol) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("epochs do not depend on the block size") {
  const auto c = sensor_config();
  const auto ref = extract_epochs(c, shared_sim().recording, 0);
  REQUIRE(ref.size() == 10);
  for (int block : {1, 37, 500, 4096}) {
    CAPTURE(block);
    const auto got = extract_epochs(c, shared_sim().recording, block);
    REQUIRE(got.size() == ref.size());
    for (std::size_t k = 0; k < got.size(); ++k) CHECK((got[k].data - ref[k].data).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("streamed, offline and batch results agree") {
  auto c = sensor_config();
  c.block_size = 250;
  const auto offline = run_offline(c, shared_sim().recording);
  CHECK(offline.epochs.size() == 10);
  CHECK(offline.n_markers == 10);

  int last_trial = 0;
  RunOptions opts;
  opts.hooks.on_network = [&](const ConnectivityNetwork&, int n) { last_trial = n; };
  std::size_t frames = 0;
  opts.hooks.on_frame = [&](FrameType t, const std::string& payload) {
    if (t == FrameType::Network) {
      ++frames;
      CHECK(nlohmann::json::parse(payload).contains("edges"));
    }
  };
  const auto report = run_pipeline(c, shared_sim().recording, opts);
  CHECK(report.n_epochs == 10);
  CHECK(report.n_networks == 10);
  CHECK(frames == 10);
  CHECK(last_trial == 10);
  REQUIRE(report.final_network);
  CHECK(report.final_network->same_content(offline.network));
  CHECK(batch(c, offline.epochs, offline.nodes).same_content(offline.network));

  // other block cuts only move the filter's rounding
  auto c2 = c;
  c2.block_size = 4096;
  CHECK(close(run_offline(c2, shared_sim().recording).network, offline.network, 1e-9));
  CHECK(report.budget_ms == doctest::Approx(1000.0 * 250 / 600));
  CHECK(report.max_stage_ms.count("connectivity") == 1);
}

TEST_CASE("control applies at the next trial boundary") {
  auto c = sensor_config();
  ControlChannel control;
  control.submit(R"({"type":"set_metric","value":"PLI"})");
  control.submit(R"({"type":"set_threshold","value":0.1})");
  std::vector<MetricId> seen;
  RunOptions opts;
  opts.control = &control;
  opts.hooks.on_network = [&](const ConnectivityNetwork& n, int) { seen.push_back(n.metric); };
  const auto report = run_pipeline(c, shared_sim().recording, opts);
  REQUIRE(!seen.empty());
  CHECK(seen.front() == MetricId::Pli);
  // 12 sensors -> 66 pairs, 10% kept
  CHECK(report.final_network->edges.size() == 7);
}

TEST_CASE("finalization failures are counted, not fatal") {
  auto c = sensor_config();
  c.connectivity.metric = MetricId::Uspli;
  const auto report = run_pipeline(c, shared_sim().recording);
  CHECK(report.n_finalize_skipped == 1);
  CHECK(report.n_networks == 9);
}

TEST_CASE("a truncated recording stops the pipeline with its error") {
  auto rec = shared_sim().recording;
  rec.truncated = true;
  CHECK_THROWS_AS(run_pipeline(sensor_config(), rec), StreamError);
}

TEST_CASE("fixed and covariance inverse modes") {
  const auto dir = fs::temp_directory_path() / "connstream_test_pipeline";
  fs::create_directories(dir);
  write_forward(dir / "m.fwdx", shared_sim().clustered);
  auto c = simulation_config(small_sim(), (dir / "m.fwdx").string());
  const auto fixed = run_offline(c, shared_sim().recording);
  CHECK(fixed.nodes.size() == static_cast<std::size_t>(shared_sim().clustered.n_sources()));

  c.inverse.mode = InverseMode::Covariance;
  c.inverse.covariance_samples = 1200;
  const auto report = run_pipeline(c, shared_sim().recording);
  CHECK(report.n_operator_updates >= 1);
  CHECK(report.n_networks >= 1);

  c.inverse.forward_path = (dir / "absent.fwdx").string();
  CHECK_THROWS_AS(run_pipeline(c, shared_sim().recording), ConfigError);
  fs::remove_all(dir);
}

TEST_CASE("engine rejects bands outside the computed bins") {
  auto c = sensor_config();
  c.connectivity.spectral.last_bin = 40;
  ConnectivityEngine engine(c.connectivity, 4, default_nodes(4), 600.0);
  CHECK_NOTHROW(engine.validate(SetBand{10, 40}));
  CHECK_THROWS_AS(engine.validate(SetBand{10, 41}), ParameterError);
}
