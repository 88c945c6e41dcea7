#pragma once

#include <array>
#include <vector>

#include "vipeeg/data_model.hpp"

namespace vipeeg {

struct AugmentConfig {
  double p_mask = 0.5;
  double p_permute = 0.25;
  double p_invert = 0.25;
  double p_time_reverse = 0.25;
  double p_swap_lr = 0.25;
  double mask_max_frac = 0.1;
  std::uint64_t seed = 0;

  static AugmentConfig none() { return {0, 0, 0, 0, 0, 0.1, 0}; }
};

void validate_augment_config(const AugmentConfig& cfg);

// Zeroes samples [start, start+len) on the listed channels.
EegSegment mask_window(const EegSegment& seg, std::size_t start, std::size_t len,
                       const std::vector<int>& channels);
// Reorders whole chains: output chain i is input chain perm[i].
EegSegment permute_chains(const EegSegment& seg, const std::array<int, kNumChains>& perm);
EegSegment invert(const EegSegment& seg);
EegSegment time_reverse(const EegSegment& seg);
// Exchanges each left chain with its right homologue.
EegSegment swap_lr(const EegSegment& seg);

// Applies each augmentation independently with its configured probability.
// Segments are expected in microvolts, before clip_and_scale.
EegSegment augment(const EegSegment& seg, const AugmentConfig& cfg, Rng& rng);

// RNG stream for one (epoch, sample) draw.
Rng augment_stream(const AugmentConfig& cfg, std::uint64_t epoch, std::uint64_t sample);

}  // namespace vipeeg
