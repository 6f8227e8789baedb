#include <doctest.h>

#include <random>

#include "connstream/epoching.hpp"

using namespace connstream;

namespace {

struct Stream {
  RealMatrix data;
  std::vector<double> trigger;
  std::vector<std::int64_t> onsets;
};

// Channel c at sample n holds 1000 * c + n so any cut can be checked by value.
Stream ramp_stream(Eigen::Index n_ch, std::int64_t n, std::vector<std::int64_t> onsets, int code = 1) {
  Stream s;
  s.data.resize(n_ch, n);
  for (Eigen::Index c = 0; c < n_ch; ++c)
    for (std::int64_t t = 0; t < n; ++t) s.data(c, t) = 1000.0 * static_cast<double>(c) + static_cast<double>(t);
  s.trigger.assign(static_cast<std::size_t>(n), 0.0);
  for (auto o : onsets)
    for (std::int64_t k = 0; k < 3; ++k) s.trigger[static_cast<std::size_t>(o + k)] = code;
  s.onsets = std::move(onsets);
  return s;
}

std::vector<EpochResult> run_blocks(const Stream& s, EpochAssembler& a, Eigen::Index block) {
  std::vector<EpochResult> out;
  for (Eigen::Index at = 0; at < s.data.cols(); at += block) {
    const auto n = std::min(block, s.data.cols() - at);
    auto r = a.push(s.data.middleCols(at, n),
                    std::span<const double>(s.trigger).subspan(static_cast<std::size_t>(at), static_cast<std::size_t>(n)));
    std::move(r.begin(), r.end(), std::back_inserter(out));
  }
  return out;
}

}  // namespace

TEST_CASE("rising edges only, carried across blocks") {
  const std::vector<double> x{0, 0, 1, 1, 0, 2, 2, 2, 0};
  const auto m = detect_triggers(x, 0.5, 0.0, 100);
  REQUIRE(m.size() == 2);
  CHECK(m[0] == EventMarker{102, 1});
  CHECK(m[1] == EventMarker{105, 2});
  // a level that was already high at the block boundary is not a new edge
  CHECK(detect_triggers(std::vector<double>{1, 1, 0}, 0.5, 1.0).empty());

  TriggerDetector d(0.5);
  std::vector<EventMarker> all;
  for (std::size_t k = 0; k < x.size(); ++k) {
    auto r = d.process(std::span<const double>(x).subspan(k, 1));
    all.insert(all.end(), r.begin(), r.end());
  }
  CHECK(all == std::vector<EventMarker>{{2, 1}, {5, 2}});
  CHECK_THROWS_AS(TriggerDetector(0.0), ParameterError);
}

TEST_CASE("ring buffer addresses absolute samples") {
  SampleRing ring(2, 10);
  RealMatrix b(2, 7);
  for (int t = 0; t < 7; ++t) b.col(t) << t, -t;
  ring.push(b);
  ring.push(b);
  CHECK(ring.head() == 14);
  CHECK(ring.oldest() == 4);
  const RealMatrix r = ring.read(5, 4);  // samples 5, 6, 7, 8 -> values 5, 6, 0, 1
  CHECK(r(0, 0) == 5);
  CHECK(r(0, 2) == 0);
  CHECK(r(1, 3) == -1);
  CHECK_THROWS_AS(ring.read(3, 2), DataLossError);
  CHECK_THROWS_AS(ring.read(12, 3), StreamError);
}

TEST_CASE("epoch window, baseline and crop") {
  EpochSpec spec;
  spec.tmin = -0.1;
  spec.tmax = 0.2;
  spec.baseline = {{-0.1, 0.0}};
  spec.crop = {{0.0, 0.1}};
  const double sfreq = 100.0;
  auto s = ramp_stream(2, 400, {50, 200});
  EpochAssembler a(spec, 2, sfreq, 0, 0.5);
  const auto r = run_blocks(s, a, 400);
  REQUIRE(r.size() == 2);
  // raw window [40, 70); baseline mean over [40, 50) is 44.5 (+1000 c); crop keeps [50, 60)
  const auto& e = r[0].epoch;
  CHECK(e.n_samples() == 10);
  CHECK(e.t0_offset == doctest::Approx(0.0));
  CHECK(e.data(0, 0) == doctest::Approx(50 - 44.5));
  CHECK(e.data(1, 9) == doctest::Approx(59 - 44.5));
  CHECK(r[1].epoch.trial_index == 1);
  CHECK(r[1].marker.sample_index == 200);
}

TEST_CASE("block size does not change the epochs") {
  EpochSpec spec;
  spec.tmin = -0.05;
  spec.tmax = 0.3;
  spec.baseline = {{-0.05, 0.0}};
  std::vector<std::int64_t> onsets;
  for (std::int64_t o = 30; o < 2800; o += 237) onsets.push_back(o);
  const auto s = ramp_stream(3, 3000, onsets);
  EpochAssembler ref_a(spec, 3, 200.0, 13, 0.5);
  const auto ref = run_blocks(s, ref_a, 3000);
  REQUIRE(!ref.empty());
  for (Eigen::Index block : {1, 17, 250, 999}) {
    CAPTURE(block);
    EpochAssembler a(spec, 3, 200.0, 13, 0.5);
    const auto got = run_blocks(s, a, block);
    REQUIRE(got.size() == ref.size());
    for (std::size_t k = 0; k < got.size(); ++k) {
      CHECK(got[k].marker == ref[k].marker);
      CHECK((got[k].epoch.data - ref[k].epoch.data).cwiseAbs().maxCoeff() == 0.0);
    }
  }
}

TEST_CASE("delay shifts the read position") {
  EpochSpec spec;
  spec.tmin = 0.0;
  spec.tmax = 0.05;
  const auto s = ramp_stream(1, 200, {20});
  EpochAssembler a(spec, 1, 100.0, 7, 0.5);
  const auto r = run_blocks(s, a, 200);
  REQUIRE(r.size() == 1);
  CHECK(r[0].epoch.data(0, 0) == 27);
}

TEST_CASE("epochs starting before the stream are skipped and codes filter") {
  EpochSpec spec;
  spec.tmin = -0.2;
  spec.tmax = 0.1;
  spec.event_codes = {2};
  auto s = ramp_stream(1, 300, {5, 100});
  for (int k = 0; k < 3; ++k) s.trigger[5 + k] = s.trigger[100 + k] = 2;
  EpochAssembler a(spec, 1, 100.0, 0, 0.5);
  const auto r = run_blocks(s, a, 300);
  CHECK(a.n_markers() == 2);
  REQUIRE(r.size() == 1);
  CHECK(r[0].marker.sample_index == 100);
}

TEST_CASE("peak-to-peak rejection ignores the exclusion window") {
  EpochSpec spec;
  spec.tmin = -0.1;
  spec.tmax = 0.1;
  spec.reject_channel = 1;
  spec.reject_threshold = 5.0;
  spec.reject_exclusion = {0.0, 0.02};
  EpochMatrix e;
  e.sfreq = 100.0;
  e.t0_offset = -0.1;
  e.data = RealMatrix::Zero(2, 20);
  e.data(1, 10) = 100.0;  // inside [0, 0.02)
  CHECK_FALSE(reject_epoch(e, spec));
  e.data(1, 12) = 6.0;
  CHECK(reject_epoch(e, spec));
  spec.reject_channel = 5;
  CHECK_THROWS_AS(reject_epoch(e, spec), ConfigError);
}

TEST_CASE("moving average of the newest epochs") {
  std::vector<EpochMatrix> es(4);
  for (int k = 0; k < 4; ++k) {
    es[k].data = RealMatrix::Constant(2, 3, k);
    es[k].trial_index = k;
  }
  const auto m = moving_average(es, 2);
  CHECK(m.data(0, 0) == doctest::Approx(2.5));
  CHECK(m.trial_index == 3);
  CHECK(moving_average(es, 10).data(1, 2) == doctest::Approx(1.5));
  CHECK_THROWS_AS(moving_average(es, 0), ParameterError);
}

TEST_CASE("spec validation") {
  EpochSpec spec;
  spec.tmin = 0.2;
  spec.tmax = 0.1;
  CHECK_THROWS_AS(spec.validate(), ParameterError);
  spec = {};
  spec.baseline = {{-0.5, 0.0}};
  CHECK_THROWS_AS(spec.validate(), ParameterError);
  spec = {};
  spec.crop = {{0.1, 0.05}};
  CHECK_THROWS_AS(spec.validate(), ParameterError);
}
