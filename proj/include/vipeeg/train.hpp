#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "vipeeg/augment.hpp"
#include "vipeeg/data_model.hpp"
#include "vipeeg/model.hpp"
#include "vipeeg/preprocess.hpp"

namespace vipeeg {

enum class SampleWeighting { AnnotatorCount, Uniform };
enum class DataScope { All, HighQualityOnly };

struct StageConfig {
  double lr_base = 1e-3;
  int epochs = 15;
  SampleWeighting weighting = SampleWeighting::AnnotatorCount;
  DataScope scope = DataScope::All;
  int batch_size = 32;
  double min_lr = 1e-6;
  double warmup_frac = 0.1;
};

StageConfig stage1_defaults();
StageConfig stage2_defaults();
void validate_stage_config(const StageConfig& cfg);

// weight * sum_i y_i ln(y_i / p_i), p clipped to >= 1e-15. Throws DataError
// when y does not sum to 1 within 1e-9.
double kld_loss(const SoftLabel& y, const ClassVector& p, double weight = 1.0);

// Linear warmup over floor(warmup_frac * total) steps, then cosine decay that
// reaches min_lr on the last step.
double lr_at(long step, long total_steps, const StageConfig& cfg);

// Adam over a fixed list of tensors.
class Adam {
 public:
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

  explicit Adam(const std::vector<std::size_t>& sizes);
  void step(const std::vector<std::span<double>>& params, const std::vector<std::span<const double>>& grads,
            double lr);
  long steps() const { return t_; }

 private:
  std::vector<std::vector<double>> m_, v_;
  long t_ = 0;
};

// A segment kept in memory for training: filtered microvolts plus labels.
struct PreparedSample {
  std::string segment_id;
  std::string patient_id;
  AnnotationSet votes;
  SoftLabel label;
  EegSegment segment;  // filtered, microvolts
};

struct PreparedDataset {
  std::vector<PreparedSample> samples;
  double fs = 0;
};

// Loads every manifest entry from `dir`, converts to the bipolar montage and
// band-pass filters it. With `filtered` set, signals are taken as already filtered.
PreparedDataset prepare_dataset(const DatasetManifest& m, const std::filesystem::path& dir,
                                const FilterSpec& filter, bool filtered, int workers);

// Model input for a filtered segment: clip and scale to 0-255.
Matrix model_input(const EegSegment& uv);

struct StepInfo {
  int epoch = 0;
  long step = 0;  // within the stage
  double lr = 0;
  double batch_loss = 0;
};

struct EpochRecord {
  int epoch = 0;
  long step = 0;
  double lr = 0;
  double train_loss = 0;
  double val_loss = 0;
};

struct TrainOptions {
  AugmentConfig augment;
  std::uint64_t seed = 0;
  int workers = 1;
  int hq_min_votes = 10;
  std::function<void(const StepInfo&, const ModelParams&)> on_step;
  std::function<void(const EpochRecord&)> on_epoch;
};

struct StageResult {
  ModelParams params;  // best validation checkpoint
  double best_val_loss = 0;
  double initial_train_loss = 0;  // first epoch
  double final_train_loss = 0;    // last epoch
  std::vector<EpochRecord> history;
};

double sample_weight(const PreparedSample& s, SampleWeighting w);

// Weighted mean KLD: sum w_i KL_i / sum w_i over the samples, eval mode.
double evaluate_loss(const ModelConfig& cfg, const ModelParams& params,
                     const std::vector<const PreparedSample*>& samples, SampleWeighting weighting, int workers);

// Selects the samples a stage trains on (all, or those with enough votes).
std::vector<const PreparedSample*> stage_scope(const std::vector<const PreparedSample*>& samples, DataScope scope,
                                               int hq_min_votes);

StageResult train_stage(const ModelConfig& cfg, ModelParams init, const std::vector<const PreparedSample*>& train,
                        const std::vector<const PreparedSample*>& val, const StageConfig& stage,
                        const TrainOptions& opt);

struct CvConfig {
  ModelConfig model;
  StageConfig stage1 = stage1_defaults();
  StageConfig stage2 = stage2_defaults();
  AugmentConfig augment;
  int folds = 5;
  FoldBalance balance = FoldBalance::Patients;
  int hq_min_votes = 10;
  std::uint64_t seed = 0;
  int workers = 1;
};

struct OofPrediction {
  std::size_t sample = 0;  // index into the prepared dataset
  int fold = 0;
  ClassVector probs{};
  std::vector<double> embedding;
};

struct CvResult {
  FoldAssignment folds;
  std::vector<ModelParams> models;  // one per fold
  std::vector<double> fold_val_loss;
  std::vector<OofPrediction> oof;   // every held-out sample, dataset order
  std::vector<std::vector<EpochRecord>> stage1_history, stage2_history;
};

// Optional per-fold initial backbone (transfer weights).
CvResult run_cv(const PreparedDataset& data, const DatasetManifest& manifest, const CvConfig& cfg,
                const std::vector<ConvParams>* init_backbone = nullptr,
                const std::function<void(int fold, int stage, const EpochRecord&)>& on_epoch = {});

// Mean of the per-model probability vectors.
ClassVector ensemble_predict(const ModelConfig& cfg, const std::vector<ModelParams>& models, const Matrix& x);

// Checkpoint: "VIPEEG-CHECKPOINT 1\n", one JSON header line, then the tensors
// as little-endian float64 in ModelParams::tensors() order.
struct Checkpoint {
  ModelConfig config;
  ModelParams params;
  std::string meta;  // JSON object text stored in the header
};
void save_checkpoint(const std::filesystem::path& path, const ModelConfig& cfg, const ModelParams& params,
                     const std::string& meta_json);
Checkpoint load_checkpoint(const std::filesystem::path& path);

struct PredictionRow {
  std::string id;
  ClassVector probs{};
};
// Columns id,seizure_vote,...,other_vote after an optional '#' comment line.
void write_predictions_csv(const std::filesystem::path& path, const std::vector<PredictionRow>& rows,
                           const std::string& comment);
std::vector<PredictionRow> read_predictions_csv(const std::filesystem::path& path);

}  // namespace vipeeg
