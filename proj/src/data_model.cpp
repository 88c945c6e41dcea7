#include "vipeeg/data_model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace vipeeg {

namespace {

const std::unordered_set<std::string_view>& electrode_labels() {
  static const std::unordered_set<std::string_view> labels = {
      "Fp1", "Fp2", "Fpz", "F3", "F4", "F7", "F8", "Fz", "C3", "C4", "Cz", "T3", "T4", "T5",
      "T6",  "T7",  "T8",  "P7", "P8", "P3", "P4", "Pz", "O1", "O2", "Oz", "A1", "A2"};
  return labels;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(line);
  while (std::getline(is, cur, sep)) out.push_back(cur);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

std::string trim(std::string s) {
  auto issp = [](unsigned char c) { return std::isspace(c) != 0; };
  s.erase(s.begin(), std::find_if_not(s.begin(), s.end(), issp));
  s.erase(std::find_if_not(s.rbegin(), s.rend(), issp).base(), s.end());
  return s;
}

int parse_int(const std::string& s, const std::string& what) {
  try {
    std::size_t pos = 0;
    int v = std::stoi(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw DataError("invalid integer for " + what + ": '" + s + "'");
  }
}

double parse_double(const std::string& s, const std::string& what) {
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw DataError("invalid number for " + what + ": '" + s + "'");
  }
}

constexpr const char* kManifestHeader =
    "segment_id,recording_id,patient_id,votes_seizure,votes_lpd,votes_gpd,votes_lrda,"
    "votes_grda,votes_other,subset,path";

}  // namespace

bool is_10_20_label(std::string_view name) { return electrode_labels().contains(name); }

void validate_montage(const Montage& m) {
  if (m.pairs.size() != static_cast<std::size_t>(kNumBipolarChannels))
    throw ConfigError("montage must have 16 pairs, got " + std::to_string(m.pairs.size()));
  for (std::size_t i = 0; i < m.pairs.size(); ++i) {
    const auto& p = m.pairs[i];
    if (!is_10_20_label(p.anode) || !is_10_20_label(p.cathode))
      throw ConfigError("montage pair " + std::to_string(i) + " uses a non 10-20 electrode: " +
                        m.channel_name(i));
  }
  // Longitudinal chains: each pair after the first continues from the previous cathode.
  for (int c = 0; c < kNumChains; ++c) {
    for (int j = 1; j < kChainLength; ++j) {
      const auto& prev = m.pairs[static_cast<std::size_t>(c * kChainLength + j - 1)];
      const auto& cur = m.pairs[static_cast<std::size_t>(c * kChainLength + j)];
      if (prev.cathode != cur.anode)
        throw ConfigError("montage chain " + std::to_string(c) + " is broken at " +
                          m.channel_name(static_cast<std::size_t>(c * kChainLength + j)));
    }
  }
}

Montage standard_double_banana() {
  return Montage{{{"Fp1", "F7"}, {"F7", "T3"}, {"T3", "T5"}, {"T5", "O1"},
                  {"Fp2", "F8"}, {"F8", "T4"}, {"T4", "T6"}, {"T6", "O2"},
                  {"Fp1", "F3"}, {"F3", "C3"}, {"C3", "P3"}, {"P3", "O1"},
                  {"Fp2", "F4"}, {"F4", "C4"}, {"C4", "P4"}, {"P4", "O2"}}};
}

int homologous_channel(int channel) {
  const int chain = channel / kChainLength;
  const int pos = channel % kChainLength;
  return (chain ^ 1) * kChainLength + pos;
}

bool is_left_hemisphere(int channel) {
  const int chain = channel / kChainLength;
  return chain == static_cast<int>(Chain::LeftTemporal) ||
         chain == static_cast<int>(Chain::LeftParasagittal);
}

Matrix apply_montage(const Matrix& referential, const std::vector<std::string>& electrodes,
                     const Montage& montage) {
  if (electrodes.size() != referential.rows())
    throw DataError("apply_montage: " + std::to_string(electrodes.size()) + " names for " +
                    std::to_string(referential.rows()) + " rows");
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < electrodes.size(); ++i) index[electrodes[i]] = i;
  auto lookup = [&](const std::string& name) {
    auto it = index.find(name);
    if (it == index.end()) throw DataError("apply_montage: missing electrode '" + name + "'");
    return it->second;
  };
  Matrix out(montage.pairs.size(), referential.cols());
  for (std::size_t i = 0; i < montage.pairs.size(); ++i) {
    auto a = referential.row(lookup(montage.pairs[i].anode));
    auto c = referential.row(lookup(montage.pairs[i].cathode));
    auto o = out.row(i);
    for (std::size_t t = 0; t < o.size(); ++t) o[t] = a[t] - c[t];
  }
  return out;
}

void validate_segment(const EegSegment& seg) {
  const double expected = seg.fs * seg.t_total_s;
  if (seg.fs <= 0 || seg.t_total_s <= 0)
    throw DataError("segment " + seg.segment_id + ": fs and duration must be positive");
  if (std::abs(expected - static_cast<double>(seg.length())) > 0.5)
    throw DataError("segment " + seg.segment_id + ": expected " +
                    std::to_string(static_cast<long>(std::lround(expected))) + " samples, got " +
                    std::to_string(seg.length()));
  for (double v : seg.samples.data())
    if (!std::isfinite(v)) throw DataError("segment " + seg.segment_id + ": non-finite sample");
}

int AnnotationSet::total() const { return std::accumulate(votes.begin(), votes.end(), 0); }

SoftLabel soft_label(const AnnotationSet& a) {
  for (int v : a.votes)
    if (v < 0) throw DataError("soft_label: negative vote count");
  const int n = a.total();
  if (n < 1) throw DataError("soft_label: segment has no votes");
  SoftLabel s;
  for (int i = 0; i < kNumClasses; ++i) s.p[i] = static_cast<double>(a.votes[i]) / n;
  return s;
}

ClassId consensus(const AnnotationSet& a) {
  if (a.total() < 1) throw DataError("consensus: segment has no votes");
  int best = 0;
  for (int i = 1; i < kNumClasses; ++i)
    if (a.votes[i] > a.votes[best]) best = i;
  return class_from_index(best);
}

std::string_view subset_name(Subset s) { return s == Subset::High ? "high" : "low"; }

Subset parse_subset(std::string_view s) {
  if (s == "high") return Subset::High;
  if (s == "low") return Subset::Low;
  throw DataError("unknown subset tag '" + std::string(s) + "'");
}

std::vector<std::string> DatasetManifest::patients() const {
  std::set<std::string> s;
  for (const auto& e : entries) s.insert(e.patient_id);
  return {s.begin(), s.end()};
}

void validate_manifest(const DatasetManifest& m) {
  std::unordered_set<std::string> ids;
  std::unordered_map<std::string, std::string> patient_of_recording;
  for (const auto& e : m.entries) {
    if (!ids.insert(e.segment_id).second)
      throw DataError("duplicate segment_id '" + e.segment_id + "'");
    auto [it, inserted] = patient_of_recording.emplace(e.recording_id, e.patient_id);
    if (!inserted && it->second != e.patient_id)
      throw DataError("recording '" + e.recording_id + "' maps to patients '" + it->second +
                      "' and '" + e.patient_id + "'");
    for (int v : e.votes.votes)
      if (v < 0) throw DataError("segment '" + e.segment_id + "' has negative votes");
    if (e.votes.total() < 1) throw DataError("segment '" + e.segment_id + "' has no votes");
  }
}

DatasetManifest read_manifest_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path.string());
  DatasetManifest m;
  std::string line;
  bool header_seen = false;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      if (trim(line) != kManifestHeader)
        throw DataError(path.string() + ": unexpected manifest header");
      header_seen = true;
      continue;
    }
    auto f = split(line, ',');
    if (f.size() != 11)
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected 11 fields, got " +
                      std::to_string(f.size()));
    ManifestEntry e;
    e.segment_id = trim(f[0]);
    e.recording_id = trim(f[1]);
    e.patient_id = trim(f[2]);
    for (int i = 0; i < kNumClasses; ++i)
      e.votes.votes[i] = parse_int(trim(f[3 + i]), "votes column " + std::to_string(3 + i));
    e.subset = parse_subset(trim(f[9]));
    e.path = trim(f[10]);
    m.entries.push_back(std::move(e));
  }
  if (!header_seen) throw DataError(path.string() + ": empty manifest");
  validate_manifest(m);
  return m;
}

void write_manifest_csv(const std::filesystem::path& path, const DatasetManifest& m,
                        const std::string& comment) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write manifest " + path.string());
  if (!comment.empty()) out << "# " << comment << "\n";
  out << kManifestHeader << "\n";
  for (const auto& e : m.entries) {
    for (const auto* s : {&e.segment_id, &e.recording_id, &e.patient_id, &e.path})
      if (s->find(',') != std::string::npos)
        throw DataError("manifest field contains a comma: '" + *s + "'");
    out << e.segment_id << ',' << e.recording_id << ',' << e.patient_id;
    for (int v : e.votes.votes) out << ',' << v;
    out << ',' << subset_name(e.subset) << ',' << e.path << "\n";
  }
  if (!out) throw DataError("write failed: " + path.string());
}

namespace {
void put_f32_le(std::ostream& out, float f) {
  auto bits = std::bit_cast<std::uint32_t>(f);
  char b[4] = {static_cast<char>(bits & 0xff), static_cast<char>((bits >> 8) & 0xff),
               static_cast<char>((bits >> 16) & 0xff), static_cast<char>((bits >> 24) & 0xff)};
  out.write(b, 4);
}

std::string header_value(std::istream& in, const std::string& key, const std::string& file) {
  std::string line;
  if (!std::getline(in, line)) throw DataError(file + ": truncated header");
  if (line.rfind(key + "=", 0) != 0) throw DataError(file + ": expected header key '" + key + "'");
  return line.substr(key.size() + 1);
}
}  // namespace

SignalFile read_signal(const std::filesystem::path& path) {
  const std::string file = path.string();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open signal " + file);
  std::string magic;
  std::getline(in, magic);
  if (magic != "VIPEEG-SIGNAL 1") throw DataError(file + ": not a signal file");
  SignalFile sf;
  auto& seg = sf.segment;
  seg.segment_id = header_value(in, "segment_id", file);
  seg.recording_id = header_value(in, "recording_id", file);
  seg.patient_id = header_value(in, "patient_id", file);
  seg.fs = parse_double(header_value(in, "fs", file), "fs");
  seg.t_total_s = parse_double(header_value(in, "t_total_s", file), "t_total_s");
  std::istringstream shape(header_value(in, "shape", file));
  long rows = 0, cols = 0;
  if (!(shape >> rows >> cols) || rows <= 0 || cols <= 0) throw DataError(file + ": bad shape");
  sf.channel_names = split(header_value(in, "channels", file), ',');
  if (sf.channel_names.size() != static_cast<std::size_t>(rows))
    throw DataError(file + ": channel name count does not match shape");
  seg.samples = Matrix(static_cast<std::size_t>(rows), static_cast<std::size_t>(cols));
  std::vector<unsigned char> raw(static_cast<std::size_t>(rows * cols) * 4);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size()))
    throw DataError(file + ": truncated sample data");
  auto& d = seg.samples.data();
  for (std::size_t i = 0; i < d.size(); ++i) {
    const unsigned char* b = &raw[4 * i];
    std::uint32_t bits = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
                         (static_cast<std::uint32_t>(b[2]) << 16) |
                         (static_cast<std::uint32_t>(b[3]) << 24);
    d[i] = static_cast<double>(std::bit_cast<float>(bits));
  }
  validate_segment(seg);
  return sf;
}

void write_signal(const std::filesystem::path& path, const EegSegment& seg,
                  const std::vector<std::string>& channel_names) {
  if (channel_names.size() != seg.channels())
    throw DataError("write_signal: channel name count does not match rows");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write signal " + path.string());
  std::ostringstream hdr;
  hdr.precision(17);
  hdr << "VIPEEG-SIGNAL 1\n"
      << "segment_id=" << seg.segment_id << "\n"
      << "recording_id=" << seg.recording_id << "\n"
      << "patient_id=" << seg.patient_id << "\n"
      << "fs=" << seg.fs << "\n"
      << "t_total_s=" << seg.t_total_s << "\n"
      << "shape=" << seg.channels() << " " << seg.length() << "\n"
      << "channels=";
  for (std::size_t i = 0; i < channel_names.size(); ++i)
    hdr << (i ? "," : "") << channel_names[i];
  hdr << "\n";
  out << hdr.str();
  for (double v : seg.samples.data()) put_f32_le(out, static_cast<float>(v));
  if (!out) throw DataError("write failed: " + path.string());
}

EegSegment load_bipolar_segment(const std::filesystem::path& path) {
  SignalFile sf = read_signal(path);
  const bool bipolar = std::all_of(sf.channel_names.begin(), sf.channel_names.end(),
                                   [](const std::string& n) { return n.find('-') != std::string::npos; });
  if (bipolar) {
    if (sf.segment.channels() != static_cast<std::size_t>(kNumBipolarChannels))
      throw DataError(path.string() + ": bipolar signal must have 16 channels");
    return std::move(sf.segment);
  }
  EegSegment seg = std::move(sf.segment);
  seg.samples = apply_montage(seg.samples, sf.channel_names, standard_double_banana());
  return seg;
}

int FoldAssignment::fold_of(const std::string& patient) const {
  auto it = fold_of_patient.find(patient);
  if (it == fold_of_patient.end()) throw DataError("patient '" + patient + "' has no fold");
  return it->second;
}

FoldAssignment split_folds(const DatasetManifest& m, int k, std::uint64_t seed, FoldBalance balance) {
  if (k < 2) throw ConfigError("split_folds: k must be >= 2");
  std::vector<std::string> patients = m.patients();
  if (patients.size() < static_cast<std::size_t>(k))
    throw DataError("split_folds: " + std::to_string(patients.size()) + " patients for " +
                    std::to_string(k) + " folds");
  Rng rng(derive_seed(seed, 0xf01dULL));
  shuffle(patients, rng);
  FoldAssignment fa;
  fa.k = k;
  if (balance == FoldBalance::Patients) {
    for (std::size_t i = 0; i < patients.size(); ++i)
      fa.fold_of_patient[patients[i]] = static_cast<int>(i % static_cast<std::size_t>(k));
    return fa;
  }
  // Segment balancing: largest patients first into the currently smallest fold.
  std::map<std::string, std::size_t> seg_count;
  for (const auto& e : m.entries) ++seg_count[e.patient_id];
  std::stable_sort(patients.begin(), patients.end(), [&](const auto& a, const auto& b) {
    return seg_count[a] > seg_count[b];
  });
  std::vector<std::size_t> load(static_cast<std::size_t>(k), 0);
  for (const auto& p : patients) {
    auto f = static_cast<std::size_t>(std::min_element(load.begin(), load.end()) - load.begin());
    fa.fold_of_patient[p] = static_cast<int>(f);
    load[f] += seg_count[p];
  }
  return fa;
}

SummaryTable summarize(const DatasetManifest& m) {
  if (m.entries.empty()) throw DataError("summarize: empty manifest");
  SummaryTable t;
  t.columns = {{"whole"}, {"low"}, {"high"}};
  std::array<std::set<std::string>, 3> patients, recordings;
  for (const auto& e : m.entries) {
    const auto c = static_cast<std::size_t>(index_of(consensus(e.votes)));
    for (std::size_t col : {std::size_t{0}, e.subset == Subset::Low ? std::size_t{1} : std::size_t{2}}) {
      auto& column = t.columns[col];
      ++column.segments;
      ++column.counts[c];
      patients[col].insert(e.patient_id);
      recordings[col].insert(e.recording_id);
    }
  }
  for (std::size_t col = 0; col < 3; ++col) {
    auto& column = t.columns[col];
    column.patients = patients[col].size();
    column.recordings = recordings[col].size();
    for (int c = 0; c < kNumClasses; ++c)
      column.percent[c] = column.segments
                              ? 100.0 * static_cast<double>(column.counts[c]) / column.segments
                              : 0.0;
  }
  return t;
}

std::string format_summary(const SummaryTable& t) {
  std::ostringstream os;
  char buf[128];
  os << "class";
  for (const auto& c : t.columns) os << "\t" << c.name;
  os << "\npatients";
  for (const auto& c : t.columns) os << "\t" << c.patients;
  os << "\nrecordings";
  for (const auto& c : t.columns) os << "\t" << c.recordings;
  os << "\nsegments";
  for (const auto& c : t.columns) os << "\t" << c.segments;
  os << "\n";
  for (int k = 0; k < kNumClasses; ++k) {
    os << class_name(class_from_index(k));
    for (const auto& c : t.columns) {
      std::snprintf(buf, sizeof buf, "\t%zu (%.2f)", c.counts[k], c.percent[k]);
      os << buf;
    }
    os << "\n";
  }
  return os.str();
}

}  // namespace vipeeg
