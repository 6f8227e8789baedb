#include "connstream/core.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

namespace connstream {

namespace {

constexpr std::array<std::string_view, 10> kMetricNames = {
    "COR", "XCOR", "COHY", "COH", "IMAGCOHY", "PLV", "PLI", "USPLI", "WPLI", "DSWPLI"};

}  // namespace

void EpochMatrix::validate() const { validate(data.cols()); }

void EpochMatrix::validate(Eigen::Index used_samples) const {
  if (data.rows() < 1) throw ParameterError("epoch needs at least one channel");
  if (data.cols() < 2) throw ParameterError("epoch needs at least two samples");
  if (!(sfreq > 0.0) || !std::isfinite(sfreq)) throw ParameterError("epoch sfreq must be > 0");
  const Eigen::Index n = std::clamp<Eigen::Index>(used_samples, 0, data.cols());
  if (!data.leftCols(n).allFinite()) throw ParameterError("epoch contains non-finite samples");
}

void FrequencyBand::validate(int nfft) const {
  const int n_bins_total = nfft / 2 + 1;
  if (lo_bin < 0 || hi_bin < lo_bin || hi_bin >= n_bins_total) {
    throw ParameterError("band [" + std::to_string(lo_bin) + ", " + std::to_string(hi_bin) +
                         "] outside 0.." + std::to_string(n_bins_total - 1));
  }
}

std::string_view to_string(MetricId metric) {
  return kMetricNames[static_cast<std::size_t>(metric)];
}

MetricId parse_metric(std::string_view name) {
  std::string upper(name);
  std::transform(upper.begin(), upper.end(), upper.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  for (std::size_t k = 0; k < kMetricNames.size(); ++k) {
    if (upper == kMetricNames[k]) return static_cast<MetricId>(k);
  }
  throw ParameterError("unknown metric '" + std::string(name) + "'");
}

bool is_spectral(MetricId metric) {
  return metric != MetricId::Cor && metric != MetricId::Xcor;
}

std::optional<std::complex<double>> Edge::complex_weight() const {
  if (!weight_im) return std::nullopt;
  const double im = *weight_im;
  const double re = std::copysign(std::sqrt(std::max(weight * weight - im * im, 0.0)), weight);
  return std::complex<double>(re, im);
}

Edge make_complex_edge(int i, int j, std::complex<double> value) {
  Edge e;
  e.i = i;
  e.j = j;
  e.weight = std::copysign(std::abs(value), value.real());
  e.weight_im = value.imag();
  return e;
}

bool ConnectivityNetwork::same_content(const ConnectivityNetwork& other) const {
  return nodes == other.nodes && edges == other.edges && metric == other.metric &&
         band == other.band && n_trials == other.n_trials && normalized == other.normalized;
}

std::vector<Node> default_nodes(std::size_t n) {
  std::vector<Node> nodes(n);
  for (std::size_t k = 0; k < n; ++k) nodes[k].id = static_cast<int>(k);
  return nodes;
}

std::vector<Node> nodes_from_positions(const std::vector<Position>& positions) {
  std::vector<Node> nodes = default_nodes(positions.size());
  for (std::size_t k = 0; k < positions.size(); ++k) nodes[k].pos = positions[k];
  return nodes;
}

std::vector<std::pair<int, int>> pair_list(std::size_t n_channels) {
  std::vector<std::pair<int, int>> pairs;
  pairs.reserve(pair_count(n_channels));
  for (std::size_t i = 0; i < n_channels; ++i) {
    for (std::size_t j = i + 1; j < n_channels; ++j) {
      pairs.emplace_back(static_cast<int>(i), static_cast<int>(j));
    }
  }
  return pairs;
}

ConnectivityNetwork normalize_network(ConnectivityNetwork net) {
  double max_abs = 0.0;
  for (const Edge& e : net.edges) max_abs = std::max(max_abs, std::abs(e.weight));
  net.normalized = true;
  if (max_abs == 0.0) return net;
  for (Edge& e : net.edges) {
    e.weight /= max_abs;
    if (e.weight_im) *e.weight_im /= max_abs;
  }
  return net;
}

ConnectivityNetwork threshold_network(ConnectivityNetwork net, double keep_fraction) {
  if (!(keep_fraction > 0.0) || keep_fraction > 1.0) {
    throw ParameterError("keep_fraction must be in (0, 1]");
  }
  const std::size_t n_edges = net.edges.size();
  // The small offset keeps exact products such as 0.05 * 100 from rounding up.
  const auto n_keep = std::min<std::size_t>(
      n_edges, static_cast<std::size_t>(
                   std::ceil(keep_fraction * static_cast<double>(n_edges) - 1e-9)));
  if (n_keep >= n_edges) return net;

  std::vector<std::size_t> order(n_edges);
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto stronger = [&](std::size_t a, std::size_t b) {
    const Edge& ea = net.edges[a];
    const Edge& eb = net.edges[b];
    const double wa = std::abs(ea.weight);
    const double wb = std::abs(eb.weight);
    if (wa != wb) return wa > wb;
    if (ea.i != eb.i) return ea.i < eb.i;
    return ea.j < eb.j;
  };
  std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_keep),
                   order.end(), stronger);
  order.resize(n_keep);
  std::sort(order.begin(), order.end());

  std::vector<Edge> kept;
  kept.reserve(n_keep);
  for (std::size_t idx : order) kept.push_back(net.edges[idx]);
  net.edges = std::move(kept);
  return net;
}

Eigen::VectorXd band_average(const RealMatrix& per_bin_weights, const FrequencyBand& band,
                             int first_bin) {
  const int lo = band.lo_bin - first_bin;
  const int hi = band.hi_bin - first_bin;
  if (lo < 0 || hi < lo || hi >= per_bin_weights.cols()) {
    throw ParameterError("band outside available bins");
  }
  return per_bin_weights.middleCols(lo, hi - lo + 1).rowwise().mean();
}

std::string serialize_network(const ConnectivityNetwork& net) {
  using ordered = nlohmann::ordered_json;
  ordered doc;
  doc["metric"] = std::string(to_string(net.metric));
  ordered band;
  band["lo_bin"] = net.band.lo_bin;
  band["hi_bin"] = net.band.hi_bin;
  band["bin_hz"] = net.band.bin_hz;
  doc["band"] = std::move(band);
  doc["n_trials"] = net.n_trials;
  doc["normalized"] = net.normalized;

  ordered nodes = ordered::array();
  for (const Node& n : net.nodes) {
    ordered node;
    node["id"] = n.id;
    node["pos"] = {n.pos[0], n.pos[1], n.pos[2]};
    nodes.push_back(std::move(node));
  }
  doc["nodes"] = std::move(nodes);

  ordered edges = ordered::array();
  for (const Edge& e : net.edges) {
    ordered edge;
    edge["i"] = e.i;
    edge["j"] = e.j;
    edge["w"] = e.weight;
    edge["w_im"] = e.weight_im ? ordered(*e.weight_im) : ordered(nullptr);
    edge["lag"] = e.lag ? ordered(*e.lag) : ordered(nullptr);
    edges.push_back(std::move(edge));
  }
  doc["edges"] = std::move(edges);
  return doc.dump();
}

ConnectivityNetwork deserialize_network(std::string_view json_text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& ex) {
    throw ParameterError(std::string("network JSON: ") + ex.what());
  }
  try {
    ConnectivityNetwork net;
    net.metric = parse_metric(doc.at("metric").get<std::string>());
    const auto& band = doc.at("band");
    net.band.lo_bin = band.at("lo_bin").get<int>();
    net.band.hi_bin = band.at("hi_bin").get<int>();
    net.band.bin_hz = band.at("bin_hz").get<double>();
    net.n_trials = doc.at("n_trials").get<int>();
    net.normalized = doc.at("normalized").get<bool>();
    for (const auto& node : doc.at("nodes")) {
      Node n;
      n.id = node.at("id").get<int>();
      const auto& pos = node.at("pos");
      n.pos = {pos.at(0).get<double>(), pos.at(1).get<double>(), pos.at(2).get<double>()};
      net.nodes.push_back(n);
    }
    for (const auto& edge : doc.at("edges")) {
      Edge e;
      e.i = edge.at("i").get<int>();
      e.j = edge.at("j").get<int>();
      e.weight = edge.at("w").get<double>();
      if (!edge.at("w_im").is_null()) e.weight_im = edge.at("w_im").get<double>();
      if (!edge.at("lag").is_null()) e.lag = edge.at("lag").get<int>();
      net.edges.push_back(e);
    }
    return net;
  } catch (const nlohmann::json::exception& ex) {
    throw ParameterError(std::string("network JSON: ") + ex.what());
  }
}

}  // namespace connstream
