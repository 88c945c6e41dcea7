#include "vipeeg/preprocess.hpp"

#include <algorithm>
#include <cmath>

namespace vipeeg {

using cplx = std::complex<double>;

void validate_filter_spec(const FilterSpec& spec) {
  if (spec.order < 1) throw ConfigError("filter order must be >= 1");
  if (!(spec.fs > 0)) throw ConfigError("filter fs must be positive");
  if (!(spec.low_hz > 0 && spec.low_hz < spec.high_hz && spec.high_hz < spec.fs / 2))
    throw ConfigError("filter band edges must satisfy 0 < low < high < fs/2");
}

SosCascade design_bandpass(const FilterSpec& spec) {
  validate_filter_spec(spec);
  const int n = spec.order;
  const double fs2 = 2.0 * spec.fs;
  // Pre-warped analog band edges (rad/s).
  const double wl = fs2 * std::tan(M_PI * spec.low_hz / spec.fs);
  const double wh = fs2 * std::tan(M_PI * spec.high_hz / spec.fs);
  const double bw = wh - wl;
  const double w0sq = wl * wh;

  // Analog lowpass prototype poles on the left half unit circle, then the
  // lowpass-to-bandpass substitution s -> (s^2 + w0^2) / (s * bw).
  std::vector<cplx> poles;
  for (int k = 0; k < n; ++k) {
    const cplx p = std::polar(1.0, M_PI * (2.0 * k + n + 1) / (2.0 * n));
    const cplx half = p * bw / 2.0;
    const cplx root = std::sqrt(half * half - w0sq);
    poles.push_back(half + root);
    poles.push_back(half - root);
  }
  // Analog gain bw^n with n zeros at s = 0 and n at infinity.
  cplx gain = std::pow(bw, n);
  std::vector<cplx> zpoles;
  for (const auto& p : poles) {
    zpoles.push_back((fs2 + p) / (fs2 - p));
    gain /= (fs2 - p);
  }
  gain *= std::pow(fs2, n);  // zeros at s = 0 map to z = +1
  const double k_digital = gain.real();

  // Pair conjugate poles; leftover real poles are paired together.
  std::vector<cplx> complex_upper;
  std::vector<double> reals;
  for (const auto& z : zpoles) {
    if (std::abs(z.imag()) < 1e-12 * std::max(1.0, std::abs(z)))
      reals.push_back(z.real());
    else if (z.imag() > 0)
      complex_upper.push_back(z);
  }
  std::sort(reals.begin(), reals.end());
  std::sort(complex_upper.begin(), complex_upper.end(),
            [](const cplx& a, const cplx& b) { return std::abs(a) < std::abs(b); });

  SosCascade sos;
  for (const auto& z : complex_upper) {
    Biquad q;
    q.a1 = -2.0 * z.real();
    q.a2 = std::norm(z);
    sos.push_back(q);
  }
  for (std::size_t i = 0; i + 1 < reals.size(); i += 2) {
    Biquad q;
    q.a1 = -(reals[i] + reals[i + 1]);
    q.a2 = reals[i] * reals[i + 1];
    sos.push_back(q);
  }
  if (sos.size() != static_cast<std::size_t>(n))
    throw NumericError("design_bandpass: could not pair poles into sections");
  // Each section carries one zero at z = +1 and one at z = -1: 1 - z^-2.
  for (auto& q : sos) {
    q.b0 = 1.0;
    q.b1 = 0.0;
    q.b2 = -1.0;
  }
  sos.front().b0 *= k_digital;
  sos.front().b2 *= k_digital;
  return sos;
}

std::complex<double> frequency_response(const SosCascade& sos, double f_hz, double fs) {
  const cplx zinv = std::polar(1.0, -2.0 * M_PI * f_hz / fs);
  cplx h = 1.0;
  for (const auto& q : sos) {
    const cplx num = q.b0 + zinv * (q.b1 + zinv * q.b2);
    const cplx den = 1.0 + zinv * (q.a1 + zinv * q.a2);
    h *= num / den;
  }
  return h;
}

namespace {

struct SectionState {
  double z1 = 0, z2 = 0;
};

// Transposed direct form II over the whole cascade, in place.
void run_cascade(const SosCascade& sos, std::vector<double>& x, std::vector<SectionState> state) {
  for (std::size_t s = 0; s < sos.size(); ++s) {
    const auto& q = sos[s];
    double z1 = state[s].z1, z2 = state[s].z2;
    for (double& v : x) {
      const double in = v;
      const double y = q.b0 * in + z1;
      z1 = q.b1 * in - q.a1 * y + z2;
      z2 = q.b2 * in - q.a2 * y;
      v = y;
    }
  }
}

// State that makes each section's output constant for a constant input x0.
std::vector<SectionState> steady_state(const SosCascade& sos, double x0) {
  std::vector<SectionState> st(sos.size());
  double level = x0;
  for (std::size_t s = 0; s < sos.size(); ++s) {
    const auto& q = sos[s];
    const double g = (q.b0 + q.b1 + q.b2) / (1.0 + q.a1 + q.a2);
    const double y = g * level;
    st[s].z2 = q.b2 * level - q.a2 * y;
    st[s].z1 = q.b1 * level - q.a1 * y + st[s].z2;
    level = y;
  }
  return st;
}

}  // namespace

std::vector<double> sos_filter(const SosCascade& sos, std::span<const double> x) {
  std::vector<double> y(x.begin(), x.end());
  run_cascade(sos, y, std::vector<SectionState>(sos.size()));
  return y;
}

std::vector<double> sos_filtfilt(const SosCascade& sos, std::span<const double> x, std::size_t pad) {
  const std::size_t n = x.size();
  if (n <= pad) throw DataError("sos_filtfilt: signal of " + std::to_string(n) +
                                " samples is too short for padding " + std::to_string(pad));
  // Odd reflection about the end points: 2*x[0] - x[pad..1], x, 2*x[n-1] - x[n-2..n-1-pad].
  std::vector<double> ext;
  ext.reserve(n + 2 * pad);
  for (std::size_t i = pad; i >= 1; --i) ext.push_back(2.0 * x[0] - x[i]);
  ext.insert(ext.end(), x.begin(), x.end());
  for (std::size_t i = 1; i <= pad; ++i) ext.push_back(2.0 * x[n - 1] - x[n - 1 - i]);

  run_cascade(sos, ext, steady_state(sos, ext.front()));
  std::reverse(ext.begin(), ext.end());
  run_cascade(sos, ext, steady_state(sos, ext.front()));
  std::reverse(ext.begin(), ext.end());
  return {ext.begin() + static_cast<std::ptrdiff_t>(pad),
          ext.begin() + static_cast<std::ptrdiff_t>(pad + n)};
}

EegSegment filter_segment(const EegSegment& seg, const FilterSpec& spec) {
  FilterSpec s = spec;
  s.fs = seg.fs;
  const auto sos = design_bandpass(s);
  const std::size_t pad = 3 * static_cast<std::size_t>(s.order);
  if (s.mode == FilterMode::ZeroPhase && seg.length() <= 2 * pad)
    throw DataError("filter_segment: segment '" + seg.segment_id + "' has " +
                    std::to_string(seg.length()) + " samples; zero-phase filtering needs more than " +
                    std::to_string(2 * pad));
  EegSegment out = seg;
  for (std::size_t c = 0; c < seg.channels(); ++c) {
    auto y = s.mode == FilterMode::ZeroPhase ? sos_filtfilt(sos, seg.samples.row(c), pad)
                                             : sos_filter(sos, seg.samples.row(c));
    std::copy(y.begin(), y.end(), out.samples.row(c).begin());
  }
  return out;
}

double scale_value(double microvolts) {
  const double x = std::clamp(microvolts, -kClipMicrovolts, kClipMicrovolts);
  return (x + kClipMicrovolts) * 255.0 / (2.0 * kClipMicrovolts);
}

double unscale_value(double scaled) { return scaled * (2.0 * kClipMicrovolts) / 255.0 - kClipMicrovolts; }

EegSegment clip_and_scale(const EegSegment& seg) {
  EegSegment out = seg;
  for (double& v : out.samples.data()) {
    if (std::isnan(v)) throw DataError("clip_and_scale: NaN in segment '" + seg.segment_id + "'");
    v = scale_value(v);
  }
  return out;
}

}  // namespace vipeeg
