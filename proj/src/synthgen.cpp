#include "vipeeg/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace vipeeg {

void validate_synth_config(const SynthConfig& cfg) {
  if (cfg.n_patients < 1 || cfg.segments_per_patient < 1 || cfg.recordings_per_patient < 1)
    throw ConfigError("synth: patient, segment and recording counts must be >= 1");
  if (!(cfg.fs > 0)) throw ConfigError("synth: fs must be positive");
  const double t = cfg.t_total_s;
  if (!(t > 0) || std::abs(t / 5.0 - std::round(t / 5.0)) > 1e-9)
    throw ConfigError("synth: t_total_s must be a positive multiple of 5");
  const double n = cfg.fs * t;
  if (std::abs(n - std::round(n)) > 1e-9) throw ConfigError("synth: fs * t_total_s must be an integer");
  double sum = 0;
  for (double p : cfg.class_mix) {
    if (p < 0) throw ConfigError("synth: class_mix entries must be >= 0");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("synth: class_mix must sum to 1");
  if (cfg.annotators_min < 1 || cfg.annotators_max < cfg.annotators_min)
    throw ConfigError("synth: annotators range must satisfy 1 <= min <= max");
  if (!(cfg.label_noise >= 0 && cfg.label_noise <= 1)) throw ConfigError("synth: label_noise must be in [0, 1]");
}

std::vector<double> pink_noise(std::size_t n, Rng& rng) {
  // Kellet's refined pink filter applied to white Gaussian noise.
  std::vector<double> out(n);
  double b0 = 0, b1 = 0, b2 = 0, b3 = 0, b4 = 0, b5 = 0, b6 = 0;
  const std::size_t burn = 512;
  for (std::size_t i = 0; i < n + burn; ++i) {
    const double w = normal(rng);
    b0 = 0.99886 * b0 + w * 0.0555179;
    b1 = 0.99332 * b1 + w * 0.0750759;
    b2 = 0.96900 * b2 + w * 0.1538520;
    b3 = 0.86650 * b3 + w * 0.3104856;
    b4 = 0.55000 * b4 + w * 0.5329522;
    b5 = -0.7616 * b5 - w * 0.0168980;
    const double v = b0 + b1 + b2 + b3 + b4 + b5 + b6 + w * 0.5362;
    b6 = w * 0.115926;
    if (i >= burn) out[i - burn] = v;
  }
  const double mean = std::accumulate(out.begin(), out.end(), 0.0) / static_cast<double>(n);
  double ss = 0;
  for (double& v : out) {
    v -= mean;
    ss += v * v;
  }
  const double rms = std::sqrt(ss / static_cast<double>(n));
  if (rms > 0)
    for (double& v : out) v /= rms;
  return out;
}

namespace {

ClassId draw_class(const ClassVector& mix, Rng& rng) {
  const double u = uniform01(rng);
  double acc = 0;
  for (int c = 0; c < kNumClasses; ++c) {
    acc += mix[c];
    if (u < acc) return class_from_index(c);
  }
  for (int c = kNumClasses - 1; c >= 0; --c)
    if (mix[c] > 0) return class_from_index(c);
  return ClassId::Other;
}

// Raised-cosine ramps over `ramp` samples at both ends of [0, n).
double taper(std::size_t i, std::size_t n, std::size_t ramp) {
  if (ramp == 0) return 1.0;
  if (i < ramp) return 0.5 - 0.5 * std::cos(M_PI * static_cast<double>(i) / static_cast<double>(ramp));
  if (i >= n - ramp) return 0.5 - 0.5 * std::cos(M_PI * static_cast<double>(n - 1 - i) / static_cast<double>(ramp));
  return 1.0;
}

// Sharp transient followed by a slower wave of opposite sign.
double discharge(double dt_s) {
  const double spike = std::exp(-0.5 * std::pow(dt_s / 0.02, 2));
  const double slow = 0.4 * std::exp(-0.5 * std::pow((dt_s - 0.1) / 0.06, 2));
  return -spike + slow;
}

void add_signature(Matrix& x, ClassId cls, bool left, double fs, std::size_t begin, std::size_t len,
                   Rng& rng) {
  if (cls == ClassId::Other) return;
  const bool lateral = cls == ClassId::LPD || cls == ClassId::LRDA;
  auto active = [&](int ch) { return !lateral || is_left_hemisphere(ch) == left; };
  const auto ramp = static_cast<std::size_t>(0.1 * fs);
  std::vector<double> wave(len, 0.0);

  switch (cls) {
    case ClassId::Seizure: {
      // Evolving rhythm: frequency and amplitude drift across the window.
      const double f0 = uniform(rng, 3.0, 8.0);
      const double f1 = std::min(12.0, f0 + uniform(rng, 1.0, 4.0));
      const double amp = uniform(rng, 80.0, 150.0);
      const double phase0 = uniform(rng, 0, 2 * M_PI);
      const double dur = static_cast<double>(len) / fs;
      for (std::size_t i = 0; i < len; ++i) {
        const double t = static_cast<double>(i) / fs;
        const double ph = phase0 + 2 * M_PI * (f0 * t + 0.5 * (f1 - f0) * t * t / dur);
        const double env = 0.6 + 0.4 * t / dur;
        wave[i] = amp * env * std::sin(ph);
      }
      break;
    }
    case ClassId::LPD:
    case ClassId::GPD: {
      const double rate = uniform(rng, 0.5, 3.0);
      const double period = 1.0 / rate;
      const double amp = uniform(rng, 100.0, 200.0);
      const double t0 = uniform(rng, 0.0, std::min(period, static_cast<double>(len) / fs - 0.2));
      for (std::size_t i = 0; i < len; ++i) {
        const double t = static_cast<double>(i) / fs;
        double v = 0;
        for (double tk = t0; tk < static_cast<double>(len) / fs; tk += period) v += discharge(t - tk);
        wave[i] = amp * v;
      }
      break;
    }
    case ClassId::LRDA:
    case ClassId::GRDA: {
      const double f = uniform(rng, 1.0, 3.0);
      const double amp = uniform(rng, 60.0, 120.0);
      const double phase0 = uniform(rng, 0, 2 * M_PI);
      for (std::size_t i = 0; i < len; ++i)
        wave[i] = amp * std::sin(phase0 + 2 * M_PI * f * static_cast<double>(i) / fs);
      break;
    }
    case ClassId::Other:
      break;
  }
  for (int ch = 0; ch < static_cast<int>(x.rows()); ++ch) {
    if (!active(ch)) continue;
    const double gain = uniform(rng, 0.8, 1.2);
    auto row = x.row(static_cast<std::size_t>(ch));
    for (std::size_t i = 0; i < len; ++i) row[begin + i] += gain * taper(i, len, ramp) * wave[i];
  }
}

AnnotationSet draw_votes(ClassId truth, const SynthConfig& cfg, Rng& rng) {
  AnnotationSet a;
  const auto n = uniform_int(rng, cfg.annotators_min, cfg.annotators_max);
  for (std::int64_t k = 0; k < n; ++k) {
    int vote = index_of(truth);
    if (uniform01(rng) < cfg.label_noise) {
      auto off = static_cast<int>(uniform_int(rng, 0, kNumClasses - 2));
      vote = off >= index_of(truth) ? off + 1 : off;
    }
    ++a.votes[static_cast<std::size_t>(vote)];
  }
  return a;
}

std::string numbered(const char* prefix, int width, long n) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s%0*ld", prefix, width, n);
  return buf;
}

}  // namespace

SynthDataset generate(const SynthConfig& cfg) {
  validate_synth_config(cfg);
  const auto n_seg = static_cast<std::size_t>(cfg.n_patients) * static_cast<std::size_t>(cfg.segments_per_patient);
  const auto T = static_cast<std::size_t>(std::llround(cfg.fs * cfg.t_total_s));
  const std::size_t center_begin = 2 * T / 5;
  const std::size_t center_len = T / 5;

  SynthDataset ds;
  ds.segments.resize(n_seg);
  ds.true_class.resize(n_seg);
  ds.manifest.entries.resize(n_seg);
  std::vector<char> left(n_seg, 0);

  parallel_for(n_seg, cfg.workers, [&](std::size_t i) {
    Rng rng(derive_seed(cfg.seed, 0x5e9ULL, i));
    const int patient = static_cast<int>(i / static_cast<std::size_t>(cfg.segments_per_patient));
    const int within = static_cast<int>(i % static_cast<std::size_t>(cfg.segments_per_patient));
    const int recording = within % cfg.recordings_per_patient;

    const ClassId cls = draw_class(cfg.class_mix, rng);
    const bool is_left = uniform01(rng) < 0.5;

    EegSegment seg;
    seg.fs = cfg.fs;
    seg.t_total_s = cfg.t_total_s;
    seg.patient_id = numbered("P", 4, patient + 1);
    seg.recording_id = seg.patient_id + numbered("_R", 1, recording + 1);
    seg.segment_id = numbered("S", 6, static_cast<long>(i + 1));
    seg.samples = Matrix(kNumBipolarChannels, T);
    for (std::size_t ch = 0; ch < static_cast<std::size_t>(kNumBipolarChannels); ++ch) {
      auto noise = pink_noise(T, rng);
      auto row = seg.samples.row(ch);
      for (std::size_t t = 0; t < T; ++t) row[t] = cfg.background_rms_uv * noise[t];
    }
    add_signature(seg.samples, cls, is_left, cfg.fs, center_begin, center_len, rng);

    ManifestEntry e;
    e.segment_id = seg.segment_id;
    e.recording_id = seg.recording_id;
    e.patient_id = seg.patient_id;
    e.votes = draw_votes(cls, cfg, rng);
    e.subset = e.votes.total() >= cfg.high_quality_min_votes ? Subset::High : Subset::Low;
    e.path = "signals/" + seg.segment_id + ".bin";

    ds.manifest.entries[i] = std::move(e);
    ds.segments[i] = std::move(seg);
    ds.true_class[i] = cls;
    left[i] = is_left ? 1 : 0;
  });
  ds.left_side.assign(left.begin(), left.end());
  return ds;
}

void write_dataset(const std::filesystem::path& dir, const SynthDataset& ds, const std::string& comment) {
  std::filesystem::create_directories(dir / "signals");
  const auto montage = standard_double_banana();
  std::vector<std::string> names;
  for (std::size_t i = 0; i < montage.pairs.size(); ++i) names.push_back(montage.channel_name(i));
  for (std::size_t i = 0; i < ds.segments.size(); ++i)
    write_signal(dir / ds.manifest.entries[i].path, ds.segments[i], names);
  write_manifest_csv(dir / "manifest.csv", ds.manifest, comment);
}

}  // namespace vipeeg
