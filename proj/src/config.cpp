#include "connstream/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>
#include <toml.hpp>

namespace connstream {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void check_keys(const json& obj, std::string_view section, std::set<std::string> allowed) {
  if (!obj.is_object()) throw ConfigError(std::string(section) + " must be a table");
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.contains(key)) {
      throw ConfigError("unknown key '" + key + "' in " + std::string(section));
    }
  }
}

template <typename T>
void read(const json& obj, const char* key, T& out) {
  if (obj.contains(key) && !obj.at(key).is_null()) out = obj.at(key).get<T>();
}

std::optional<std::pair<double, double>> read_window(const json& obj, const char* key,
                                                     std::optional<std::pair<double, double>> fallback) {
  if (!obj.contains(key)) return fallback;
  const auto& v = obj.at(key);
  if (v.is_null() || (v.is_boolean() && !v.get<bool>())) return std::nullopt;
  if (!v.is_array() || v.size() != 2) throw ConfigError(std::string(key) + " must be [start, end]");
  return std::make_pair(v.at(0).get<double>(), v.at(1).get<double>());
}

std::string resolve(const std::string& p, const fs::path& base) {
  if (p.empty() || base.empty() || fs::path(p).is_absolute()) return p;
  return (base / p).string();
}

InverseMode parse_inverse_mode(const std::string& s) {
  if (s == "none") return InverseMode::None;
  if (s == "fixed") return InverseMode::Fixed;
  if (s == "covariance") return InverseMode::Covariance;
  throw ConfigError("unknown inverse mode '" + s + "'");
}

std::string_view inverse_mode_name(InverseMode m) {
  switch (m) {
    case InverseMode::None:
      return "none";
    case InverseMode::Fixed:
      return "fixed";
    case InverseMode::Covariance:
      return "covariance";
  }
  return "none";
}

PipelineConfig from_document(const json& doc, const fs::path& base) {
  PipelineConfig c;
  check_keys(doc, "config", {"block_size", "speed", "queue_capacity", "lossy", "filter", "trigger",
                             "epoch", "inverse", "connectivity", "publish"});
  read(doc, "block_size", c.block_size);
  read(doc, "speed", c.speed);
  read(doc, "queue_capacity", c.queue_capacity);
  read(doc, "lossy", c.lossy);

  if (doc.contains("filter")) {
    const auto& f = doc.at("filter");
    check_keys(f, "filter", {"enabled", "kind", "cutoffs", "transition_bw", "n_taps"});
    read(f, "enabled", c.filter.enabled);
    if (f.contains("kind")) c.filter.kind = parse_filter_kind(f.at("kind").get<std::string>());
    if (f.contains("cutoffs")) {
      const auto& v = f.at("cutoffs");
      c.filter.cutoffs = v.is_array() ? v.get<std::vector<double>>() : std::vector<double>{v.get<double>()};
    }
    read(f, "transition_bw", c.filter.transition_bw);
    read(f, "n_taps", c.filter.n_taps);
  }
  if (doc.contains("trigger")) {
    const auto& t = doc.at("trigger");
    check_keys(t, "trigger", {"channel", "threshold"});
    read(t, "channel", c.trigger.channel);
    read(t, "threshold", c.trigger.threshold);
  }
  if (doc.contains("epoch")) {
    const auto& e = doc.at("epoch");
    check_keys(e, "epoch", {"tmin", "tmax", "baseline", "crop", "reject_channel", "reject_threshold",
                            "reject_exclusion", "event_codes"});
    read(e, "tmin", c.epoch.tmin);
    read(e, "tmax", c.epoch.tmax);
    c.epoch.baseline = read_window(e, "baseline", c.epoch.baseline);
    c.epoch.crop = read_window(e, "crop", c.epoch.crop);
    if (e.contains("reject_channel")) {
      const auto& v = e.at("reject_channel");
      c.epoch.reject_channel = v.is_null() ? std::nullopt : std::optional<int>(v.get<int>());
    }
    read(e, "reject_threshold", c.epoch.reject_threshold);
    if (auto w = read_window(e, "reject_exclusion", c.epoch.reject_exclusion)) c.epoch.reject_exclusion = *w;
    read(e, "event_codes", c.epoch.event_codes);
  }
  if (doc.contains("inverse")) {
    const auto& i = doc.at("inverse");
    check_keys(i, "inverse", {"mode", "forward", "operator", "snr", "covariance_samples"});
    if (i.contains("mode")) c.inverse.mode = parse_inverse_mode(i.at("mode").get<std::string>());
    read(i, "forward", c.inverse.forward_path);
    read(i, "operator", c.inverse.operator_path);
    c.inverse.forward_path = resolve(c.inverse.forward_path, base);
    c.inverse.operator_path = resolve(c.inverse.operator_path, base);
    read(i, "snr", c.inverse.snr);
    read(i, "covariance_samples", c.inverse.covariance_samples);
  }
  if (doc.contains("connectivity")) {
    const auto& k = doc.at("connectivity");
    check_keys(k, "connectivity", {"metric", "band", "bin_hz", "threshold", "normalize", "average_count",
                                   "storage", "nfft", "mode", "fft_backend", "bins", "xcor_max_lag",
                                   "drop_reject_channel"});
    auto& cc = c.connectivity;
    if (k.contains("metric")) cc.metric = parse_metric(k.at("metric").get<std::string>());
    if (k.contains("band")) {
      const auto& b = k.at("band");
      if (!b.is_array() || b.size() != 2) throw ConfigError("band must be [lo_bin, hi_bin]");
      cc.band.lo_bin = b.at(0).get<int>();
      cc.band.hi_bin = b.at(1).get<int>();
    }
    read(k, "threshold", cc.threshold);
    read(k, "normalize", cc.normalize);
    read(k, "average_count", cc.average_count);
    read(k, "storage", cc.storage);
    read(k, "nfft", cc.spectral.nfft);
    if (k.contains("mode")) cc.spectral.mode = parse_spectral_mode(k.at("mode").get<std::string>());
    read(k, "fft_backend", cc.spectral.fft_backend);
    if (k.contains("bins")) {
      const auto& b = k.at("bins");
      if (!b.is_array() || b.size() != 2) throw ConfigError("bins must be [first, last]");
      cc.spectral.first_bin = b.at(0).get<int>();
      cc.spectral.last_bin = b.at(1).get<int>();
    }
    read(k, "xcor_max_lag", cc.xcor_max_lag);
    read(k, "drop_reject_channel", cc.drop_reject_channel);
    read(k, "bin_hz", cc.band.bin_hz);
  }
  if (doc.contains("publish")) {
    const auto& p = doc.at("publish");
    check_keys(p, "publish", {"host", "port"});
    read(p, "host", c.publish.host);
    read(p, "port", c.publish.port);
  }
  c.validate();
  return c;
}

}  // namespace

void PipelineConfig::validate() const {
  if (block_size < 1) throw ConfigError("block_size must be >= 1");
  if (speed < 0.0) throw ConfigError("speed must be >= 0");
  if (queue_capacity < 1) throw ConfigError("queue_capacity must be >= 1");
  if (trigger.threshold <= 0.0) throw ConfigError("trigger threshold must be > 0");
  if (!(connectivity.threshold > 0.0) || connectivity.threshold > 1.0) {
    throw ConfigError("connectivity threshold must be in (0, 1]");
  }
  if (connectivity.average_count < 0) throw ConfigError("average_count must be >= 0");
  if (publish.port < 0 || publish.port > 65535) throw ConfigError("port out of range");
  if (inverse.mode != InverseMode::None) {
    if (inverse.forward_path.empty() && inverse.operator_path.empty()) {
      throw ConfigError("inverse mode needs a forward model or an operator file");
    }
    if (inverse.mode == InverseMode::Covariance && inverse.forward_path.empty()) {
      throw ConfigError("covariance mode needs a forward model");
    }
    if (!(inverse.snr > 0.0)) throw ConfigError("snr must be > 0");
    if (inverse.covariance_samples < 2) throw ConfigError("covariance_samples must be >= 2");
  }
  try {
    epoch.validate();
    connectivity.spectral.validate();
    connectivity.band.validate(connectivity.spectral.nfft);
  } catch (const ParameterError& ex) {
    throw ConfigError(ex.what());
  }
  const int first = connectivity.spectral.first_bin;
  const int last = connectivity.spectral.resolved_last_bin();
  if (connectivity.band.lo_bin < first || connectivity.band.hi_bin > last) {
    throw ConfigError("band lies outside the computed bins [" + std::to_string(first) + ", " +
                      std::to_string(last) + "]");
  }
}

PipelineConfig config_from_json(std::string_view json_text, const fs::path& base_dir) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& ex) {
    throw ConfigError(std::string("config JSON: ") + ex.what());
  }
  try {
    return from_document(doc, base_dir);
  } catch (const json::exception& ex) {
    throw ConfigError(std::string("config: ") + ex.what());
  } catch (const ParameterError& ex) {
    throw ConfigError(std::string("config: ") + ex.what());
  }
}

PipelineConfig config_from_toml(std::string_view toml_text, const fs::path& base_dir) {
  toml::table table;
  try {
    table = toml::parse(toml_text);
  } catch (const toml::parse_error& ex) {
    throw ConfigError(std::string("config TOML: ") + std::string(ex.description()));
  }
  std::ostringstream as_json;
  as_json << toml::json_formatter{table};
  return config_from_json(as_json.str(), base_dir);
}

PipelineConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream text;
  text << in.rdbuf();
  const fs::path base = path.parent_path();
  if (path.extension() == ".toml") return config_from_toml(text.str(), base);
  return config_from_json(text.str(), base);
}

std::string config_to_json(const PipelineConfig& c) {
  nlohmann::ordered_json doc;
  doc["block_size"] = c.block_size;
  doc["speed"] = c.speed;
  doc["queue_capacity"] = c.queue_capacity;
  doc["lossy"] = c.lossy;
  doc["filter"] = {{"enabled", c.filter.enabled},
                   {"kind", std::string(to_string(c.filter.kind))},
                   {"cutoffs", c.filter.cutoffs},
                   {"transition_bw", c.filter.transition_bw},
                   {"n_taps", c.filter.n_taps}};
  doc["trigger"] = {{"channel", c.trigger.channel}, {"threshold", c.trigger.threshold}};
  auto window = [](const std::optional<std::pair<double, double>>& w) {
    return w ? nlohmann::ordered_json::array({w->first, w->second}) : nlohmann::ordered_json(nullptr);
  };
  doc["epoch"] = {{"tmin", c.epoch.tmin},
                  {"tmax", c.epoch.tmax},
                  {"baseline", window(c.epoch.baseline)},
                  {"crop", window(c.epoch.crop)},
                  {"reject_channel", c.epoch.reject_channel ? nlohmann::ordered_json(*c.epoch.reject_channel)
                                                            : nlohmann::ordered_json(nullptr)},
                  {"reject_threshold", c.epoch.reject_threshold},
                  {"reject_exclusion", {c.epoch.reject_exclusion.first, c.epoch.reject_exclusion.second}},
                  {"event_codes", c.epoch.event_codes}};
  doc["inverse"] = {{"mode", std::string(inverse_mode_name(c.inverse.mode))},
                    {"forward", c.inverse.forward_path},
                    {"operator", c.inverse.operator_path},
                    {"snr", c.inverse.snr},
                    {"covariance_samples", c.inverse.covariance_samples}};
  const auto& k = c.connectivity;
  doc["connectivity"] = {{"metric", std::string(to_string(k.metric))},
                         {"band", {k.band.lo_bin, k.band.hi_bin}},
                         {"bin_hz", k.band.bin_hz},
                         {"threshold", k.threshold},
                         {"normalize", k.normalize},
                         {"average_count", k.average_count},
                         {"storage", k.storage},
                         {"nfft", k.spectral.nfft},
                         {"mode", k.spectral.mode == SpectralMode::Welch ? "welch" : "fixed"},
                         {"fft_backend", k.spectral.fft_backend},
                         {"bins", {k.spectral.first_bin, k.spectral.last_bin}},
                         {"xcor_max_lag", k.xcor_max_lag},
                         {"drop_reject_channel", k.drop_reject_channel}};
  doc["publish"] = {{"host", c.publish.host}, {"port", c.publish.port}};
  return doc.dump(2);
}

}  // namespace connstream
