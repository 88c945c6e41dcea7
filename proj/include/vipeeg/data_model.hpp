#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vipeeg/common.hpp"

namespace vipeeg {

inline constexpr int kNumBipolarChannels = 16;
inline constexpr int kNumChains = 4;
inline constexpr int kChainLength = 4;

// Chain order of the longitudinal bipolar montage. Channel c belongs to chain c / 4.
enum class Chain : int { LeftTemporal = 0, RightTemporal = 1, LeftParasagittal = 2, RightParasagittal = 3 };

struct ElectrodePair {
  std::string anode;
  std::string cathode;
  bool operator==(const ElectrodePair&) const = default;
};

struct Montage {
  std::vector<ElectrodePair> pairs;
  std::string channel_name(std::size_t i) const { return pairs.at(i).anode + "-" + pairs.at(i).cathode; }
};

bool is_10_20_label(std::string_view name);
// Throws ConfigError unless the montage has 16 pairs in four chains of four,
// all with valid 10-20 electrode names.
void validate_montage(const Montage& m);
Montage standard_double_banana();
// Channel index of the homologous derivation on the other hemisphere.
int homologous_channel(int channel);
bool is_left_hemisphere(int channel);

// Re-references a referential recording: row i = anode_i - cathode_i.
// `electrodes` names the rows of `referential`.
Matrix apply_montage(const Matrix& referential, const std::vector<std::string>& electrodes,
                     const Montage& montage);

struct EegSegment {
  Matrix samples;  // [channels x T], microvolts (or 0-255 after scaling)
  double fs = 200.0;
  double t_total_s = 50.0;
  std::string segment_id;
  std::string recording_id;
  std::string patient_id;

  std::size_t channels() const { return samples.rows(); }
  std::size_t length() const { return samples.cols(); }
  double t_center_s() const { return t_total_s / 5.0; }
};

// Checks T = fs * t_total_s and finiteness.
void validate_segment(const EegSegment& seg);

struct AnnotationSet {
  std::array<int, kNumClasses> votes{};
  int total() const;
  bool operator==(const AnnotationSet&) const = default;
};

struct SoftLabel {
  ClassVector p{};
};

SoftLabel soft_label(const AnnotationSet& a);
// Majority class; ties go to the lowest class index.
ClassId consensus(const AnnotationSet& a);

enum class Subset { Low, High };
std::string_view subset_name(Subset s);
Subset parse_subset(std::string_view s);

struct ManifestEntry {
  std::string segment_id;
  std::string recording_id;
  std::string patient_id;
  AnnotationSet votes;
  Subset subset = Subset::Low;
  std::string path;  // relative to the manifest directory
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  std::vector<std::string> patients() const;  // sorted, unique
};

// Unique segment ids, recording -> single patient, at least one vote per entry.
void validate_manifest(const DatasetManifest& m);

// Manifest CSV. Lines starting with '#' are comments.
DatasetManifest read_manifest_csv(const std::filesystem::path& path);
void write_manifest_csv(const std::filesystem::path& path, const DatasetManifest& m,
                        const std::string& comment = {});

// Signal file: 8 text header lines, then row-major little-endian float32.
//   VIPEEG-SIGNAL 1
//   segment_id=<id>
//   recording_id=<id>
//   patient_id=<id>
//   fs=<Hz>
//   t_total_s=<seconds>
//   shape=<rows> <cols>
//   channels=<comma-separated names>
struct SignalFile {
  EegSegment segment;
  std::vector<std::string> channel_names;
};
SignalFile read_signal(const std::filesystem::path& path);
void write_signal(const std::filesystem::path& path, const EegSegment& seg,
                  const std::vector<std::string>& channel_names);

// Loads a signal and converts it to the 16-channel bipolar montage when the
// file stores referential electrodes.
EegSegment load_bipolar_segment(const std::filesystem::path& path);

enum class FoldBalance { Patients, Segments };

struct FoldAssignment {
  int k = 5;
  std::map<std::string, int> fold_of_patient;
  int fold_of(const std::string& patient) const;
};

FoldAssignment split_folds(const DatasetManifest& m, int k, std::uint64_t seed,
                           FoldBalance balance = FoldBalance::Patients);

struct SummaryColumn {
  std::string name;  // "whole", "low", "high"
  std::size_t patients = 0;
  std::size_t segments = 0;
  std::size_t recordings = 0;
  std::array<std::size_t, kNumClasses> counts{};
  std::array<double, kNumClasses> percent{};
};

struct SummaryTable {
  std::vector<SummaryColumn> columns;
};

// Per-subset segment counts by consensus class.
SummaryTable summarize(const DatasetManifest& m);
std::string format_summary(const SummaryTable& t);

}  // namespace vipeeg
