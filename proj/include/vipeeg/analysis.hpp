#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "vipeeg/metrics.hpp"
#include "vipeeg/model.hpp"
#include "vipeeg/train.hpp"

namespace vipeeg {

enum class Variant { Full, NoCentral, NoPretrain, NoEeg2Img };

std::string_view variant_name(Variant v);
Variant parse_variant(std::string_view s);
std::vector<Variant> all_variants();

struct VariantSpec {
  Variant tag = Variant::Full;
  ModelConfig model;
  bool pretrained = true;  // backbone starts from pretext weights
};

// Full: the base configuration with a pretrained backbone. Every other variant
// changes exactly one component.
VariantSpec build_variant(Variant tag, const ModelConfig& base);

// Oriented-grating pretext task: 8 orientations k * 22.5 degrees.
struct PretextConfig {
  int height = 32;
  int width = 32;
  int n_train = 2048;
  int n_test = 512;
  int batch_size = 32;
  double lr = 2e-3;
  int max_epochs = 12;
  double target_accuracy = 0.9;
  double noise = 20.0;
  std::uint64_t seed = 0;
  int workers = 1;
};

inline constexpr int kPretextClasses = 8;

struct PretextSample {
  Tensor3 image;  // 3 x H x W, 0-255
  int label = 0;
};

// Deterministic in (cfg.seed, split); split 0 = train, 1 = test.
std::vector<PretextSample> pretext_dataset(const PretextConfig& cfg, int split);

struct PretrainResult {
  std::vector<ConvParams> backbone;
  double accuracy = 0;  // held-out pretext accuracy
  int epochs = 0;
};

// Trains backbone + linear probe until the held-out accuracy reaches the
// target or max_epochs pass. Throws NumericError below 60%.
PretrainResult pretrain_backbone(const BackboneSpec& spec, const PretextConfig& cfg);

struct AblationConfig {
  CvConfig cv;
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
  std::vector<Variant> variants = all_variants();
  PretextConfig pretext;
};

struct AblationRow {
  Variant variant = Variant::Full;
  std::vector<double> seed_kld;     // out-of-fold mean KLD on the high-quality subset, per seed
  double mean_kld = 0;
  std::vector<double> patient_kld;  // per patient, averaged over seeds
  double statistic = 0;             // rank sum vs the full model
  double p_value = 1;
};

struct AblationTable {
  std::vector<AblationRow> rows;
};

AblationTable run_ablation(const PreparedDataset& data, const DatasetManifest& manifest, const AblationConfig& cfg,
                           const std::function<void(const std::string&)>& progress = {});

struct TsneConfig {
  double perplexity = 30;
  int iterations = 1000;
  double exaggeration = 12;
  int exaggeration_iters = 250;
  double learning_rate = 200;
  std::uint64_t seed = 0;
};

struct TsneResult {
  Matrix coords;                 // n x 2
  std::vector<double> objective;  // KL(P || Q) after every iteration, unexaggerated P
};

// Exact t-SNE.
TsneResult tsne(const Matrix& x, const TsneConfig& cfg);

struct ReportInputs {
  const EvalReport* eval = nullptr;
  const Matrix* tsne_coords = nullptr;
  std::vector<ClassId> tsne_labels;
  const AblationTable* ablation = nullptr;
  std::string comment;  // written as the first line of every CSV
  nlohmann::json extra = nlohmann::json::object();  // merged into report.json
};

// report.json, roc_<class>.csv, roc.svg, confusion.csv, confusion.svg,
// tsne.csv, tsne.svg, ablation.csv, ablation.svg, for the inputs present.
void emit_report(const std::filesystem::path& dir, const ReportInputs& in);

}  // namespace vipeeg
