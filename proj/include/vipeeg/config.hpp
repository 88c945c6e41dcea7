#pragma once

#include <string>

#include "json.hpp"
#include "vipeeg/analysis.hpp"
#include "vipeeg/augment.hpp"
#include "vipeeg/model.hpp"
#include "vipeeg/preprocess.hpp"
#include "vipeeg/synthgen.hpp"
#include "vipeeg/train.hpp"

namespace vipeeg {

using nlohmann::json;

// JSON mapping for the configuration structs. Reading starts from the built-in
// defaults and overrides only the keys present; unknown keys are a ConfigError.
void to_json(json& j, const SynthConfig& c);
void from_json(const json& j, SynthConfig& c);
void to_json(json& j, const FilterSpec& c);
void from_json(const json& j, FilterSpec& c);
void to_json(json& j, const AugmentConfig& c);
void from_json(const json& j, AugmentConfig& c);
void to_json(json& j, const EmbeddingSpec& c);
void from_json(const json& j, EmbeddingSpec& c);
void to_json(json& j, const BackboneSpec& c);
void from_json(const json& j, BackboneSpec& c);
void to_json(json& j, const ModelConfig& c);
void from_json(const json& j, ModelConfig& c);
void to_json(json& j, const StageConfig& c);
void from_json(const json& j, StageConfig& c);
void to_json(json& j, const CvConfig& c);
void from_json(const json& j, CvConfig& c);
void to_json(json& j, const PretextConfig& c);
void from_json(const json& j, PretextConfig& c);
void to_json(json& j, const TsneConfig& c);
void from_json(const json& j, TsneConfig& c);

// 16 hex digits of a 64-bit hash over the canonical (sorted-key) dump.
std::string config_hash(const json& j);

json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const json& j);

}  // namespace vipeeg
