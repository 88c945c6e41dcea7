#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "vipeeg/preprocess.hpp"
#include "vipeeg/synthgen.hpp"
#include "vipeeg/train.hpp"

namespace testutil {

inline vipeeg::SynthConfig small_synth(int patients = 6, int segments = 4, std::uint64_t seed = 1) {
  vipeeg::SynthConfig c;
  c.n_patients = patients;
  c.segments_per_patient = segments;
  c.fs = 50;
  c.t_total_s = 10;
  c.seed = seed;
  return c;
}

// In-memory equivalent of prepare_dataset for a generated dataset.
inline vipeeg::PreparedDataset prepare(const vipeeg::SynthDataset& ds, const vipeeg::FilterSpec& filter = {}) {
  vipeeg::PreparedDataset out;
  out.fs = ds.segments.front().fs;
  for (std::size_t i = 0; i < ds.segments.size(); ++i) {
    vipeeg::PreparedSample s;
    const auto& e = ds.manifest.entries[i];
    s.segment_id = e.segment_id;
    s.patient_id = e.patient_id;
    s.votes = e.votes;
    s.label = vipeeg::soft_label(e.votes);
    vipeeg::FilterSpec f = filter;
    f.high_hz = std::min(f.high_hz, 0.45 * out.fs);
    s.segment = vipeeg::filter_segment(ds.segments[i], f);
    out.samples.push_back(std::move(s));
  }
  return out;
}

inline vipeeg::ModelConfig tiny_model() {
  vipeeg::ModelConfig m;
  m.backbone.stages = {{4, 2}, {8, 2}};
  m.backbone.input_scale = 1.0 / 16;
  return m;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("vipeeg_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace testutil
