#include "doctest.h"
#include "helpers.hpp"

using namespace vipeeg;

TEST_CASE("generation is deterministic and independent of worker count") {
  auto cfg = testutil::small_synth(4, 3, 11);
  const auto a = generate(cfg);
  cfg.workers = 3;
  const auto b = generate(cfg);
  REQUIRE(a.segments.size() == 12);
  for (std::size_t i = 0; i < a.segments.size(); ++i) {
    CHECK(a.segments[i].samples == b.segments[i].samples);
    CHECK(a.manifest.entries[i].votes == b.manifest.entries[i].votes);
  }
  cfg.seed = 12;
  const auto c = generate(cfg);
  CHECK_FALSE(a.segments[0].samples == c.segments[0].samples);
}

TEST_CASE("generated segments respect the configuration") {
  auto cfg = testutil::small_synth(6, 5);
  cfg.annotators_min = 3;
  cfg.annotators_max = 15;
  const auto ds = generate(cfg);
  CHECK_NOTHROW(validate_manifest(ds.manifest));
  for (std::size_t i = 0; i < ds.segments.size(); ++i) {
    const auto& s = ds.segments[i];
    CHECK(s.channels() == 16);
    CHECK(s.length() == 500);
    CHECK_NOTHROW(validate_segment(s));
    const auto& e = ds.manifest.entries[i];
    CHECK(e.votes.total() >= 3);
    CHECK(e.votes.total() <= 15);
    CHECK((e.subset == Subset::High) == (e.votes.total() >= 10));
  }
}

TEST_CASE("noise-free votes agree with the generating class") {
  auto cfg = testutil::small_synth(4, 5);
  cfg.label_noise = 0;
  const auto ds = generate(cfg);
  for (std::size_t i = 0; i < ds.segments.size(); ++i)
    CHECK(consensus(ds.manifest.entries[i].votes) == ds.true_class[i]);
}

TEST_CASE("lateralized patterns dominate one hemisphere") {
  auto cfg = testutil::small_synth(10, 6);
  cfg.class_mix = {0, 1, 0, 0, 0, 0};
  const auto ds = generate(cfg);
  for (std::size_t i = 0; i < ds.segments.size(); ++i) {
    double left = 0, right = 0;
    const auto& x = ds.segments[i].samples;
    for (int c = 0; c < 16; ++c)
      for (double v : x.row(static_cast<std::size_t>(c))) (is_left_hemisphere(c) ? left : right) += v * v;
    CHECK((left > right) == static_cast<bool>(ds.left_side[i]));
  }
}

TEST_CASE("pink noise has unit RMS and a falling spectrum") {
  Rng rng(5);
  const auto x = pink_noise(4096, rng);
  double ss = 0;
  for (double v : x) ss += v * v;
  CHECK(std::sqrt(ss / 4096) == doctest::Approx(1.0).epsilon(1e-9));
  // Lag-1 autocorrelation of 1/f noise is strongly positive; white noise is ~0.
  double ac = 0;
  for (std::size_t i = 1; i < x.size(); ++i) ac += x[i] * x[i - 1];
  CHECK(ac / ss > 0.5);
}

TEST_CASE("invalid synthesis settings are rejected") {
  auto cfg = testutil::small_synth();
  cfg.t_total_s = 7;
  CHECK_THROWS_AS(validate_synth_config(cfg), ConfigError);
  cfg = testutil::small_synth();
  cfg.annotators_min = 5;
  cfg.annotators_max = 2;
  CHECK_THROWS_AS(validate_synth_config(cfg), ConfigError);
  cfg = testutil::small_synth();
  cfg.label_noise = 1.5;
  CHECK_THROWS_AS(validate_synth_config(cfg), ConfigError);
}
