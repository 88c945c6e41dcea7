#pragma once

#include <filesystem>
#include <vector>

#include "vipeeg/data_model.hpp"

namespace vipeeg {

struct SynthConfig {
  int n_patients = 60;
  int segments_per_patient = 20;
  int recordings_per_patient = 2;
  double fs = 200.0;
  double t_total_s = 50.0;
  ClassVector class_mix = {1.0 / 6, 1.0 / 6, 1.0 / 6, 1.0 / 6, 1.0 / 6, 1.0 / 6};
  int annotators_min = 1;
  int annotators_max = 20;
  double label_noise = 0.1;
  // Segments with at least this many votes are tagged "high".
  int high_quality_min_votes = 10;
  double background_rms_uv = 15.0;
  std::uint64_t seed = 0;
  int workers = 1;
};

void validate_synth_config(const SynthConfig& cfg);

struct SynthDataset {
  DatasetManifest manifest;
  std::vector<EegSegment> segments;  // bipolar montage, microvolts
  std::vector<ClassId> true_class;
  std::vector<bool> left_side;  // lateralized classes: signature on the left hemisphere
};

SynthDataset generate(const SynthConfig& cfg);

// Writes <dir>/manifest.csv and <dir>/signals/<segment_id>.bin.
void write_dataset(const std::filesystem::path& dir, const SynthDataset& ds, const std::string& comment = {});

// Unit-RMS 1/f noise.
std::vector<double> pink_noise(std::size_t n, Rng& rng);


}  // namespace vipeeg
