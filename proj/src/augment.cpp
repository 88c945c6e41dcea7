#include "vipeeg/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace vipeeg {

void validate_augment_config(const AugmentConfig& cfg) {
  for (double p : {cfg.p_mask, cfg.p_permute, cfg.p_invert, cfg.p_time_reverse, cfg.p_swap_lr})
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("augmentation probabilities must lie in [0, 1]");
  if (!(cfg.mask_max_frac > 0.0 && cfg.mask_max_frac <= 0.5))
    throw ConfigError("mask_max_frac must lie in (0, 0.5]");
}

EegSegment mask_window(const EegSegment& seg, std::size_t start, std::size_t len,
                       const std::vector<int>& channels) {
  if (start > seg.length() || len > seg.length() - start)
    throw DataError("mask_window: window [" + std::to_string(start) + ", " +
                    std::to_string(start + len) + ") exceeds " + std::to_string(seg.length()) +
                    " samples");
  EegSegment out = seg;
  for (int c : channels) {
    if (c < 0 || static_cast<std::size_t>(c) >= seg.channels())
      throw DataError("mask_window: channel " + std::to_string(c) + " out of range");
    auto row = out.samples.row(static_cast<std::size_t>(c));
    std::fill(row.begin() + static_cast<std::ptrdiff_t>(start),
              row.begin() + static_cast<std::ptrdiff_t>(start + len), 0.0);
  }
  return out;
}

EegSegment permute_chains(const EegSegment& seg, const std::array<int, kNumChains>& perm) {
  if (seg.channels() != static_cast<std::size_t>(kNumBipolarChannels))
    throw DataError("permute_chains: expected 16 bipolar channels");
  std::array<bool, kNumChains> seen{};
  for (int p : perm) {
    if (p < 0 || p >= kNumChains || seen[static_cast<std::size_t>(p)])
      throw ConfigError("permute_chains: not a permutation of the four chains");
    seen[static_cast<std::size_t>(p)] = true;
  }
  EegSegment out = seg;
  for (int i = 0; i < kNumChains; ++i)
    for (int j = 0; j < kChainLength; ++j) {
      auto src = seg.samples.row(static_cast<std::size_t>(perm[i] * kChainLength + j));
      std::copy(src.begin(), src.end(), out.samples.row(static_cast<std::size_t>(i * kChainLength + j)).begin());
    }
  return out;
}

EegSegment invert(const EegSegment& seg) {
  EegSegment out = seg;
  for (double& v : out.samples.data()) v = -v;
  return out;
}

EegSegment time_reverse(const EegSegment& seg) {
  EegSegment out = seg;
  for (std::size_t c = 0; c < out.channels(); ++c) {
    auto row = out.samples.row(c);
    std::reverse(row.begin(), row.end());
  }
  return out;
}

EegSegment swap_lr(const EegSegment& seg) {
  // LT <-> RT and LP <-> RP
  return permute_chains(seg, {1, 0, 3, 2});
}

EegSegment augment(const EegSegment& seg, const AugmentConfig& cfg, Rng& rng) {
  // Every draw happens regardless of outcome so the stream layout is fixed.
  const double u_mask = uniform01(rng), u_perm = uniform01(rng), u_inv = uniform01(rng),
               u_rev = uniform01(rng), u_swap = uniform01(rng);
  EegSegment out = seg;
  if (u_mask < cfg.p_mask) {
    const auto max_len = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::floor(cfg.mask_max_frac * static_cast<double>(seg.length()))));
    const auto len = static_cast<std::size_t>(uniform_int(rng, 1, static_cast<std::int64_t>(max_len)));
    const auto start = static_cast<std::size_t>(
        uniform_int(rng, 0, static_cast<std::int64_t>(seg.length() - len)));
    std::vector<int> channels;
    for (int c = 0; c < static_cast<int>(seg.channels()); ++c)
      if (uniform01(rng) < 0.5) channels.push_back(c);
    if (channels.empty()) channels.push_back(static_cast<int>(uniform_int(rng, 0, static_cast<std::int64_t>(seg.channels()) - 1)));
    out = mask_window(out, start, len, channels);
  }
  if (u_perm < cfg.p_permute) {
    std::vector<int> p(kNumChains);
    std::iota(p.begin(), p.end(), 0);
    shuffle(p, rng);
    out = permute_chains(out, {p[0], p[1], p[2], p[3]});
  }
  if (u_inv < cfg.p_invert) out = invert(out);
  if (u_rev < cfg.p_time_reverse) out = time_reverse(out);
  if (u_swap < cfg.p_swap_lr) out = swap_lr(out);
  return out;
}

Rng augment_stream(const AugmentConfig& cfg, std::uint64_t epoch, std::uint64_t sample) {
  return Rng(derive_seed(cfg.seed, 0xa09ULL, epoch, sample));
}

}  // namespace vipeeg
