#include "doctest.h"
#include "helpers.hpp"
#include "vipeeg/augment.hpp"

using namespace vipeeg;

namespace {

EegSegment random_segment(std::uint64_t seed, std::size_t T = 50) {
  Rng rng(seed);
  EegSegment s;
  s.fs = 5;
  s.t_total_s = 10;
  s.samples = Matrix(16, T);
  for (double& v : s.samples.data()) v = normal(rng);
  return s;
}

}  // namespace

TEST_CASE("elementary augmentations") {
  const auto s = random_segment(1);
  const auto inv = invert(s);
  const auto rev = time_reverse(s);
  const auto lr = swap_lr(s);
  for (std::size_t c = 0; c < 16; ++c)
    for (std::size_t t = 0; t < 50; ++t) {
      CHECK(inv.samples(c, t) == -s.samples(c, t));
      CHECK(rev.samples(c, t) == s.samples(c, 49 - t));
      CHECK(lr.samples(c, t) == s.samples(static_cast<std::size_t>(homologous_channel(static_cast<int>(c))), t));
    }
  CHECK(invert(inv).samples == s.samples);
  CHECK(time_reverse(rev).samples == s.samples);
  CHECK(swap_lr(lr).samples == s.samples);
}

TEST_CASE("chain permutation moves whole chains") {
  const auto s = random_segment(2);
  const std::array<int, 4> perm = {2, 0, 3, 1};
  const auto p = permute_chains(s, perm);
  for (int i = 0; i < 4; ++i)
    for (int k = 0; k < 4; ++k)
      CHECK(std::equal(p.samples.row(static_cast<std::size_t>(4 * i + k)).begin(),
                       p.samples.row(static_cast<std::size_t>(4 * i + k)).end(),
                       s.samples.row(static_cast<std::size_t>(4 * perm[static_cast<std::size_t>(i)] + k)).begin()));
  CHECK_THROWS_AS(permute_chains(s, {0, 0, 1, 2}), ConfigError);
}

TEST_CASE("masking zeroes exactly the requested window") {
  const auto s = random_segment(3);
  const auto m = mask_window(s, 10, 5, {0, 7});
  for (std::size_t c = 0; c < 16; ++c)
    for (std::size_t t = 0; t < 50; ++t) {
      const bool hit = (c == 0 || c == 7) && t >= 10 && t < 15;
      CHECK(m.samples(c, t) == (hit ? 0.0 : s.samples(c, t)));
    }
  CHECK_THROWS_AS(mask_window(s, 48, 5, {0}), DataError);
  CHECK_THROWS_AS(mask_window(s, 0, 5, {16}), DataError);
}

TEST_CASE("zero probabilities leave the segment untouched") {
  const auto s = random_segment(4);
  Rng rng(9);
  CHECK(augment(s, AugmentConfig::none(), rng).samples == s.samples);
}

TEST_CASE("certain augmentations always fire") {
  const auto s = random_segment(5);
  AugmentConfig c = AugmentConfig::none();
  c.p_invert = 1;
  Rng rng(1);
  CHECK(augment(s, c, rng).samples == invert(s).samples);
  c = AugmentConfig::none();
  c.p_time_reverse = 1;
  c.p_swap_lr = 1;
  CHECK(augment(s, c, rng).samples == swap_lr(time_reverse(s)).samples);
}

TEST_CASE("augmentation streams are reproducible per (epoch, sample)") {
  AugmentConfig c;
  c.seed = 3;
  const auto s = random_segment(6);
  auto r1 = augment_stream(c, 2, 7);
  auto r2 = augment_stream(c, 2, 7);
  CHECK(augment(s, c, r1).samples == augment(s, c, r2).samples);
  auto a = augment_stream(c, 2, 7);
  auto b = augment_stream(c, 2, 8);
  CHECK(a() != b());
}

TEST_CASE("augmentation probabilities are validated") {
  AugmentConfig c;
  c.p_mask = 1.5;
  CHECK_THROWS_AS(validate_augment_config(c), ConfigError);
  c = {};
  c.mask_max_frac = 0;
  CHECK_THROWS_AS(validate_augment_config(c), ConfigError);
}
