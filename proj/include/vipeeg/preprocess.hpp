#pragma once

#include <complex>
#include <vector>

#include "vipeeg/data_model.hpp"

namespace vipeeg {

enum class FilterMode { Causal, ZeroPhase };

struct FilterSpec {
  int order = 3;
  double low_hz = 0.5;
  double high_hz = 45.0;
  double fs = 200.0;
  FilterMode mode = FilterMode::ZeroPhase;
};

void validate_filter_spec(const FilterSpec& spec);

// One second-order section, a0 normalized to 1:
//   H(z) = (b0 + b1 z^-1 + b2 z^-2) / (1 + a1 z^-1 + a2 z^-2)
struct Biquad {
  double b0 = 1, b1 = 0, b2 = 0;
  double a1 = 0, a2 = 0;
};

using SosCascade = std::vector<Biquad>;

// Digital Butterworth bandpass of the given order (2*order poles) as a cascade
// of `order` second-order sections. Bilinear transform with band-edge pre-warping.
SosCascade design_bandpass(const FilterSpec& spec);

// Complex response of the cascade at frequency f (Hz).
std::complex<double> frequency_response(const SosCascade& sos, double f_hz, double fs);

// Causal filtering of one channel with zero initial state.
std::vector<double> sos_filter(const SosCascade& sos, std::span<const double> x);

// Forward-backward filtering with odd reflective padding of `pad` samples at each
// end and steady-state initial conditions. Requires x.size() > pad.
std::vector<double> sos_filtfilt(const SosCascade& sos, std::span<const double> x, std::size_t pad);

// Per-channel bandpass. Zero-phase mode pads 3*order samples per end and
// requires T > 6*order.
EegSegment filter_segment(const EegSegment& seg, const FilterSpec& spec);

inline constexpr double kClipMicrovolts = 1024.0;

// Clip to +/-1024 uV, then map linearly onto [0, 255].
EegSegment clip_and_scale(const EegSegment& seg);
double scale_value(double microvolts);
double unscale_value(double scaled);

}  // namespace vipeeg
