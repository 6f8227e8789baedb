#include <doctest.h>

#include <cmath>
#include <random>

#include "connstream/core.hpp"

using namespace connstream;

namespace {

ConnectivityNetwork random_network(std::size_t n_nodes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  ConnectivityNetwork net;
  net.nodes = default_nodes(n_nodes);
  for (const auto& [i, j] : pair_list(n_nodes)) {
    Edge e;
    e.i = i;
    e.j = j;
    e.weight = g(rng);
    net.edges.push_back(e);
  }
  return net;
}

}  // namespace

TEST_CASE("pair indexing enumerates the upper triangle in order") {
  for (std::size_t n : {2u, 3u, 7u, 265u}) {
    const auto pairs = pair_list(n);
    REQUIRE(pairs.size() == pair_count(n));
    for (std::size_t p = 0; p < pairs.size(); ++p) {
      CHECK(pair_index(pairs[p].first, pairs[p].second, n) == p);
      CHECK(pairs[p].first < pairs[p].second);
    }
  }
  CHECK(pair_count(265) == 34980);
}

TEST_CASE("threshold keeps ceil(f * n) strongest edges") {
  ConnectivityNetwork net;
  net.nodes = default_nodes(400);
  for (int k = 0; k < 65536; ++k) {
    Edge e;
    e.i = k / 256;
    e.j = 256 + k % 256;
    e.weight = std::sin(0.37 * k);
    net.edges.push_back(e);
  }
  const auto kept = threshold_network(net, 0.05);
  CHECK(kept.edges.size() == 3277);
  double min_kept = INFINITY;
  for (const auto& e : kept.edges) min_kept = std::min(min_kept, std::abs(e.weight));
  std::size_t stronger = 0;
  for (const auto& e : net.edges) stronger += std::abs(e.weight) > min_kept;
  CHECK(stronger <= 3277);

  CHECK(threshold_network(net, 1.0).edges.size() == net.edges.size());
  CHECK_THROWS_AS(threshold_network(net, 0.0), ParameterError);
  CHECK_THROWS_AS(threshold_network(net, 1.5), ParameterError);
}

TEST_CASE("threshold ties go to the smaller pair") {
  ConnectivityNetwork net;
  net.nodes = default_nodes(4);
  for (const auto& [i, j] : pair_list(4)) net.edges.push_back(Edge{i, j, 1.0, std::nullopt, std::nullopt});
  const auto kept = threshold_network(net, 0.3);  // ceil(1.8) = 2
  REQUIRE(kept.edges.size() == 2);
  CHECK(kept.edges[0].i == 0);
  CHECK(kept.edges[0].j == 1);
  CHECK(kept.edges[1].j == 2);
}

TEST_CASE("normalize divides by the largest magnitude") {
  auto net = random_network(12, 3);
  double max_abs = 0.0;
  for (const auto& e : net.edges) max_abs = std::max(max_abs, std::abs(e.weight));
  const auto n = normalize_network(net);
  CHECK(n.normalized);
  for (std::size_t k = 0; k < n.edges.size(); ++k) {
    CHECK(n.edges[k].weight == doctest::Approx(net.edges[k].weight / max_abs).epsilon(1e-15));
  }
  ConnectivityNetwork zero = net;
  for (auto& e : zero.edges) e.weight = 0.0;
  const auto z = normalize_network(zero);
  for (const auto& e : z.edges) CHECK(e.weight == 0.0);
}

TEST_CASE("network JSON keeps the wire key order and round-trips") {
  auto net = random_network(5, 9);
  net.metric = MetricId::Cohy;
  net.band = FrequencyBand{8, 12, 1.0};
  net.n_trials = 7;
  net.edges[0] = make_complex_edge(0, 1, {0.25, -0.5});
  net.edges[1].lag = -3;
  net.nodes[2].pos = {0.01, -0.02, 0.03};
  const std::string text = serialize_network(net);
  const auto pos = [&](const char* key) { return text.find(key); };
  CHECK(pos("\"metric\"") < pos("\"band\""));
  CHECK(pos("\"band\"") < pos("\"n_trials\""));
  CHECK(pos("\"n_trials\"") < pos("\"normalized\""));
  CHECK(pos("\"normalized\"") < pos("\"nodes\""));
  CHECK(pos("\"nodes\"") < pos("\"edges\""));
  CHECK(pos("\"lo_bin\"") < pos("\"hi_bin\""));
  CHECK(pos("\"hi_bin\"") < pos("\"bin_hz\""));

  const auto back = deserialize_network(text);
  CHECK(back.same_content(net));
  CHECK(serialize_network(back) == text);
  const auto z = back.edges[0].complex_weight();
  REQUIRE(z.has_value());
  CHECK(z->real() == doctest::Approx(0.25));
  CHECK(z->imag() == doctest::Approx(-0.5));
}

TEST_CASE("empty network serializes to a minimal document") {
  ConnectivityNetwork net;
  const std::string text = serialize_network(net);
  CHECK(deserialize_network(text).edges.empty());
}

TEST_CASE("metric names parse case-insensitively") {
  for (MetricId m : kAllMetrics) CHECK(parse_metric(to_string(m)) == m);
  CHECK(parse_metric("imagcohy") == MetricId::ImagCohy);
  CHECK_THROWS_AS(parse_metric("granger"), ParameterError);
}

TEST_CASE("band average is the mean over the inclusive range") {
  RealMatrix w(2, 5);
  w << 1, 2, 3, 4, 5, 10, 20, 30, 40, 50;
  const auto avg = band_average(w, FrequencyBand{3, 5, 1.0}, 2);
  CHECK(avg(0) == doctest::Approx(3.0));
  CHECK(avg(1) == doctest::Approx(30.0));
  CHECK_THROWS_AS(band_average(w, FrequencyBand{1, 3, 1.0}, 2), ParameterError);
}

TEST_CASE("epoch validation") {
  EpochMatrix e;
  e.data = RealMatrix::Zero(2, 1);
  CHECK_THROWS_AS(e.validate(), ParameterError);
  e.data = RealMatrix::Zero(2, 4);
  e.data(1, 2) = NAN;
  CHECK_THROWS_AS(e.validate(), ParameterError);
}
