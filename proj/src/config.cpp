#include "vipeeg/config.hpp"

#include <cstdio>
#include <fstream>
#include <initializer_list>

namespace vipeeg {

namespace {

void check_keys(const json& j, std::initializer_list<const char*> keys, const char* what) {
  if (!j.is_object()) throw ConfigError(std::string(what) + ": expected a JSON object");
  for (const auto& [k, _] : j.items()) {
    bool known = false;
    for (const char* key : keys) known = known || k == key;
    if (!known) throw ConfigError(std::string(what) + ": unknown key '" + k + "'");
  }
}

template <class T>
void read(const json& j, const char* key, T& v) {
  const auto it = j.find(key);
  if (it == j.end()) return;
  try {
    v = it->get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

template <class E>
void read_enum(const json& j, const char* key, E& v, std::initializer_list<std::pair<const char*, E>> names) {
  const auto it = j.find(key);
  if (it == j.end()) return;
  if (!it->is_string()) throw ConfigError(std::string("config key '") + key + "' must be a string");
  const auto s = it->get<std::string>();
  for (const auto& [n, e] : names)
    if (s == n) {
      v = e;
      return;
    }
  throw ConfigError(std::string("config key '") + key + "': unknown value '" + s + "'");
}

template <class E>
const char* enum_name(E v, std::initializer_list<std::pair<const char*, E>> names) {
  for (const auto& [n, e] : names)
    if (e == v) return n;
  return "?";
}

const std::initializer_list<std::pair<const char*, FilterMode>> kFilterModes = {
    {"causal", FilterMode::Causal}, {"zero_phase", FilterMode::ZeroPhase}};
const std::initializer_list<std::pair<const char*, RowLayout>> kLayouts = {
    {"channel_major", RowLayout::ChannelMajor}, {"kernel_major", RowLayout::KernelMajor}};
const std::initializer_list<std::pair<const char*, EmbeddingKind>> kKinds = {
    {"learnable", EmbeddingKind::Learnable}, {"fixed_reshape", EmbeddingKind::FixedReshape}};
const std::initializer_list<std::pair<const char*, SampleWeighting>> kWeighting = {
    {"annotator_count", SampleWeighting::AnnotatorCount}, {"uniform", SampleWeighting::Uniform}};
const std::initializer_list<std::pair<const char*, DataScope>> kScopes = {
    {"all", DataScope::All}, {"high_quality_only", DataScope::HighQualityOnly}};
const std::initializer_list<std::pair<const char*, FoldBalance>> kBalance = {
    {"patients", FoldBalance::Patients}, {"segments", FoldBalance::Segments}};

}  // namespace

void to_json(json& j, const SynthConfig& c) {
  j = json{{"patients", c.n_patients},
           {"segments_per_patient", c.segments_per_patient},
           {"recordings_per_patient", c.recordings_per_patient},
           {"fs", c.fs},
           {"t_total_s", c.t_total_s},
           {"class_mix", c.class_mix},
           {"annotators_min", c.annotators_min},
           {"annotators_max", c.annotators_max},
           {"label_noise", c.label_noise},
           {"high_quality_min_votes", c.high_quality_min_votes},
           {"background_rms_uv", c.background_rms_uv},
           {"seed", c.seed}};
}

void from_json(const json& j, SynthConfig& c) {
  check_keys(j,
             {"patients", "segments_per_patient", "recordings_per_patient", "fs", "t_total_s", "class_mix",
              "annotators_min", "annotators_max", "label_noise", "high_quality_min_votes", "background_rms_uv",
              "seed"},
             "synth");
  read(j, "patients", c.n_patients);
  read(j, "segments_per_patient", c.segments_per_patient);
  read(j, "recordings_per_patient", c.recordings_per_patient);
  read(j, "fs", c.fs);
  read(j, "t_total_s", c.t_total_s);
  read(j, "class_mix", c.class_mix);
  read(j, "annotators_min", c.annotators_min);
  read(j, "annotators_max", c.annotators_max);
  read(j, "label_noise", c.label_noise);
  read(j, "high_quality_min_votes", c.high_quality_min_votes);
  read(j, "background_rms_uv", c.background_rms_uv);
  read(j, "seed", c.seed);
}

void to_json(json& j, const FilterSpec& c) {
  j = json{{"order", c.order}, {"low_hz", c.low_hz}, {"high_hz", c.high_hz}, {"mode", enum_name(c.mode, kFilterModes)}};
}

void from_json(const json& j, FilterSpec& c) {
  check_keys(j, {"order", "low_hz", "high_hz", "mode"}, "filter");
  read(j, "order", c.order);
  read(j, "low_hz", c.low_hz);
  read(j, "high_hz", c.high_hz);
  read_enum(j, "mode", c.mode, kFilterModes);
}

void to_json(json& j, const AugmentConfig& c) {
  j = json{{"p_mask", c.p_mask},         {"p_permute", c.p_permute}, {"p_invert", c.p_invert},
           {"p_time_reverse", c.p_time_reverse}, {"p_swap_lr", c.p_swap_lr}, {"mask_max_frac", c.mask_max_frac}};
}

void from_json(const json& j, AugmentConfig& c) {
  check_keys(j, {"p_mask", "p_permute", "p_invert", "p_time_reverse", "p_swap_lr", "mask_max_frac"}, "augment");
  read(j, "p_mask", c.p_mask);
  read(j, "p_permute", c.p_permute);
  read(j, "p_invert", c.p_invert);
  read(j, "p_time_reverse", c.p_time_reverse);
  read(j, "p_swap_lr", c.p_swap_lr);
  read(j, "mask_max_frac", c.mask_max_frac);
}

void to_json(json& j, const EmbeddingSpec& c) {
  j = json{{"groups", c.groups},
           {"kernels", c.kernels},
           {"length", c.length},
           {"stride", c.stride},
           {"layout", enum_name(c.layout, kLayouts)},
           {"kind", enum_name(c.kind, kKinds)}};
}

void from_json(const json& j, EmbeddingSpec& c) {
  check_keys(j, {"groups", "kernels", "length", "stride", "layout", "kind"}, "embedding");
  read(j, "groups", c.groups);
  read(j, "kernels", c.kernels);
  read(j, "length", c.length);
  read(j, "stride", c.stride);
  read_enum(j, "layout", c.layout, kLayouts);
  read_enum(j, "kind", c.kind, kKinds);
}

void to_json(json& j, const BackboneSpec& c) {
  json stages = json::array();
  for (const auto& s : c.stages) stages.push_back({{"channels", s.out_channels}, {"stride", s.stride}});
  j = json{{"stages", stages}, {"input_offset", c.input_offset}, {"input_scale", c.input_scale}};
}

void from_json(const json& j, BackboneSpec& c) {
  check_keys(j, {"stages", "input_offset", "input_scale"}, "backbone");
  if (const auto it = j.find("stages"); it != j.end()) {
    if (!it->is_array()) throw ConfigError("backbone.stages must be an array");
    c.stages.clear();
    for (const auto& s : *it) {
      check_keys(s, {"channels", "stride"}, "backbone stage");
      BackboneStage st;
      read(s, "channels", st.out_channels);
      read(s, "stride", st.stride);
      c.stages.push_back(st);
    }
  }
  read(j, "input_offset", c.input_offset);
  read(j, "input_scale", c.input_scale);
}

void to_json(json& j, const ModelConfig& c) {
  j = json{{"channels", c.n_channels},
           {"embedding", c.embedding},
           {"backbone", c.backbone},
           {"central_selection", c.central_selection},
           {"dropout", c.dropout}};
}

void from_json(const json& j, ModelConfig& c) {
  check_keys(j, {"channels", "embedding", "backbone", "central_selection", "dropout"}, "model");
  read(j, "channels", c.n_channels);
  read(j, "embedding", c.embedding);
  read(j, "backbone", c.backbone);
  read(j, "central_selection", c.central_selection);
  read(j, "dropout", c.dropout);
}

void to_json(json& j, const StageConfig& c) {
  j = json{{"lr_base", c.lr_base},
           {"epochs", c.epochs},
           {"weighting", enum_name(c.weighting, kWeighting)},
           {"scope", enum_name(c.scope, kScopes)},
           {"batch_size", c.batch_size},
           {"min_lr", c.min_lr},
           {"warmup_frac", c.warmup_frac}};
}

void from_json(const json& j, StageConfig& c) {
  check_keys(j, {"lr_base", "epochs", "weighting", "scope", "batch_size", "min_lr", "warmup_frac"}, "stage");
  read(j, "lr_base", c.lr_base);
  read(j, "epochs", c.epochs);
  read_enum(j, "weighting", c.weighting, kWeighting);
  read_enum(j, "scope", c.scope, kScopes);
  read(j, "batch_size", c.batch_size);
  read(j, "min_lr", c.min_lr);
  read(j, "warmup_frac", c.warmup_frac);
}

void to_json(json& j, const CvConfig& c) {
  j = json{{"model", c.model},
           {"stage1", c.stage1},
           {"stage2", c.stage2},
           {"augment", c.augment},
           {"folds", c.folds},
           {"fold_balance", enum_name(c.balance, kBalance)},
           {"hq_min_votes", c.hq_min_votes}};
}

void from_json(const json& j, CvConfig& c) {
  check_keys(j, {"model", "stage1", "stage2", "augment", "folds", "fold_balance", "hq_min_votes"}, "train");
  read(j, "model", c.model);
  read(j, "stage1", c.stage1);
  read(j, "stage2", c.stage2);
  read(j, "augment", c.augment);
  read(j, "folds", c.folds);
  read_enum(j, "fold_balance", c.balance, kBalance);
  read(j, "hq_min_votes", c.hq_min_votes);
}

void to_json(json& j, const PretextConfig& c) {
  j = json{{"height", c.height},         {"width", c.width},       {"n_train", c.n_train},
           {"n_test", c.n_test},         {"batch_size", c.batch_size}, {"lr", c.lr},
           {"max_epochs", c.max_epochs}, {"target_accuracy", c.target_accuracy}, {"noise", c.noise}};
}

void from_json(const json& j, PretextConfig& c) {
  check_keys(j, {"height", "width", "n_train", "n_test", "batch_size", "lr", "max_epochs", "target_accuracy", "noise"},
             "pretext");
  read(j, "height", c.height);
  read(j, "width", c.width);
  read(j, "n_train", c.n_train);
  read(j, "n_test", c.n_test);
  read(j, "batch_size", c.batch_size);
  read(j, "lr", c.lr);
  read(j, "max_epochs", c.max_epochs);
  read(j, "target_accuracy", c.target_accuracy);
  read(j, "noise", c.noise);
}

void to_json(json& j, const TsneConfig& c) {
  j = json{{"perplexity", c.perplexity},
           {"iterations", c.iterations},
           {"exaggeration", c.exaggeration},
           {"exaggeration_iters", c.exaggeration_iters},
           {"learning_rate", c.learning_rate}};
}

void from_json(const json& j, TsneConfig& c) {
  check_keys(j, {"perplexity", "iterations", "exaggeration", "exaggeration_iters", "learning_rate"}, "tsne");
  read(j, "perplexity", c.perplexity);
  read(j, "iterations", c.iterations);
  read(j, "exaggeration", c.exaggeration);
  read(j, "exaggeration_iters", c.exaggeration_iters);
  read(j, "learning_rate", c.learning_rate);
}

std::string config_hash(const json& j) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash_string(j.dump())));
  return buf;
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void write_json_file(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw DataError("write failed: " + path.string());
}

}  // namespace vipeeg
