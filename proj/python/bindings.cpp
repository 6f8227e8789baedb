#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "connstream/core.hpp"
#include "connstream/errors.hpp"
#include "connstream/fir.hpp"
#include "connstream/frames.hpp"
#include "connstream/metrics.hpp"
#include "connstream/simulate.hpp"
#include "connstream/trial_cache.hpp"

namespace py = pybind11;
namespace cs = connstream;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

cs::EpochMatrix to_epoch(const Array& a, double sfreq, std::size_t trial_index) {
  if (a.ndim() != 2) throw cs::DimensionError("epoch must be a 2-D (channels, samples) array");
  cs::EpochMatrix e;
  e.sfreq = sfreq;
  e.trial_index = trial_index;
  e.data = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      a.data(), a.shape(0), a.shape(1));
  return e;
}

Array to_array(const cs::RealMatrix& m) {
  Array out({m.rows(), m.cols()});
  auto v = out.mutable_unchecked<2>();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) v(i, j) = m(i, j);
  }
  return out;
}

class PyTrialCache {
 public:
  PyTrialCache(int n_channels, int nfft, bool storage, int average_count, double sfreq)
      : sfreq_(sfreq), cache_(n_channels, options(nfft, storage, average_count)) {}

  void add_trial(const Array& epoch) { cache_.add_trial(to_epoch(epoch, sfreq_, next_++)); }

  std::string finalize(const std::string& metric, int lo_bin, int hi_bin) {
    const cs::FrequencyBand band{lo_bin, hi_bin, sfreq_ / cache_.options().spectral.nfft};
    return cs::serialize_network(cache_.finalize(cs::parse_metric(metric), band));
  }

  int n_trials() const { return cache_.n_trials(); }
  std::uint64_t fft_calls() const { return cache_.fft_calls(); }
  void reset() { cache_.reset(); }

 private:
  static cs::TrialCacheOptions options(int nfft, bool storage, int average_count) {
    cs::TrialCacheOptions o;
    o.spectral.nfft = nfft;
    o.storage = storage;
    o.average_count = average_count;
    return o;
  }

  double sfreq_;
  std::size_t next_ = 0;
  cs::TrialCache cache_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Streaming functional connectivity engine";

  // translators run newest first, so the base class goes in first
  py::register_exception<cs::Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<cs::ParameterError>(m, "ParameterError", PyExc_ValueError);
  py::register_exception<cs::DegenerateTrialCountError>(m, "DegenerateTrialCountError", PyExc_ValueError);

  m.def("metric_names", [] {
    std::vector<std::string> out;
    for (auto id : cs::kAllMetrics) out.emplace_back(cs::to_string(id));
    return out;
  });

  py::class_<PyTrialCache>(m, "TrialCache")
      .def(py::init<int, int, bool, int, double>(), py::arg("n_channels"), py::arg("nfft") = 600,
           py::arg("storage") = true, py::arg("average_count") = 0, py::arg("sfreq") = 600.0)
      .def("add_trial", &PyTrialCache::add_trial, py::arg("epoch"))
      .def("finalize_json", &PyTrialCache::finalize, py::arg("metric"), py::arg("lo_bin"), py::arg("hi_bin"))
      .def("reset", &PyTrialCache::reset)
      .def_property_readonly("n_trials", &PyTrialCache::n_trials)
      .def_property_readonly("fft_calls", &PyTrialCache::fft_calls);

  m.def(
      "normalized_xcorr",
      [](const std::vector<double>& x, const std::vector<double>& y, int max_lag) {
        auto backend = cs::make_fft_backend();
        return cs::normalized_xcorr(x, y, max_lag, *backend);
      },
      py::arg("x"), py::arg("y"), py::arg("max_lag"));

  m.def(
      "design_fir",
      [](const std::string& kind, std::vector<double> cutoffs, double tbw, int n_taps, double sfreq) {
        const auto f = cs::design_fir(cs::parse_filter_kind(kind), std::move(cutoffs), tbw, n_taps, sfreq);
        return py::make_tuple(f.taps, f.group_delay());
      },
      py::arg("kind"), py::arg("cutoffs"), py::arg("transition_bw"), py::arg("n_taps") = 0,
      py::arg("sfreq") = 600.0);

  m.def(
      "encode_frame",
      [](int type, const std::string& payload) {
        return py::bytes(cs::encode_frame(static_cast<cs::FrameType>(type), payload));
      },
      py::arg("type"), py::arg("payload"));

  m.def(
      "decode_frames",
      [](const py::bytes& data) {
        cs::FrameDecoder dec;
        dec.feed(std::string(data));
        py::list out;
        while (auto f = dec.next()) out.append(py::make_tuple(static_cast<int>(f->type), f->payload));
        return out;
      },
      py::arg("data"));

  m.def(
      "simulate",
      [](std::uint64_t seed, int n_trials, bool noise, double duration) {
        cs::SimulationOptions o;
        o.seed = seed;
        o.n_trials = n_trials;
        o.noise = noise;
        o.signal_duration = duration;
        const auto sim = cs::simulate(o);
        py::dict d;
        d["data"] = to_array(sim.recording.data);
        d["sfreq"] = sim.recording.info.sfreq;
        d["markers"] = sim.markers;
        d["gain"] = to_array(sim.clustered.gain);
        d["snr_db"] = sim.snr_db_measured;
        return d;
      },
      py::arg("seed") = 1, py::arg("n_trials") = 200, py::arg("noise") = true, py::arg("duration") = 0.16);
}
