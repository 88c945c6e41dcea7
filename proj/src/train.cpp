#include "vipeeg/train.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <mutex>
#include <numeric>
#include <sstream>

#include "vipeeg/config.hpp"

namespace vipeeg {

StageConfig stage1_defaults() { return StageConfig{}; }

StageConfig stage2_defaults() {
  StageConfig s;
  s.lr_base = 3e-4;
  s.epochs = 5;
  s.weighting = SampleWeighting::Uniform;
  s.scope = DataScope::HighQualityOnly;
  return s;
}

void validate_stage_config(const StageConfig& cfg) {
  if (!(cfg.min_lr >= 0) || !(cfg.lr_base >= cfg.min_lr))
    throw ConfigError("stage: need lr_base >= min_lr >= 0");
  if (cfg.epochs < 1) throw ConfigError("stage: epochs must be >= 1");
  if (cfg.batch_size < 1) throw ConfigError("stage: batch_size must be >= 1");
  if (!(cfg.warmup_frac >= 0 && cfg.warmup_frac < 1)) throw ConfigError("stage: warmup_frac must be in [0, 1)");
}

double kld_loss(const SoftLabel& y, const ClassVector& p, double weight) {
  double sum = 0;
  for (double v : y.p) sum += v;
  if (std::abs(sum - 1.0) > 1e-9) throw DataError("kld_loss: label sums to " + std::to_string(sum));
  return weight * kl_divergence(y.p, p);
}

double lr_at(long step, long total_steps, const StageConfig& cfg) {
  const long warm = static_cast<long>(std::floor(cfg.warmup_frac * static_cast<double>(total_steps)));
  if (step < warm) return cfg.lr_base * static_cast<double>(step) / static_cast<double>(warm);
  const long span = total_steps - 1 - warm;
  const double progress = span > 0 ? static_cast<double>(step - warm) / static_cast<double>(span) : 1.0;
  // Both ends are returned verbatim; min + (base - min) can round.
  if (progress >= 1.0) return cfg.min_lr;
  if (progress <= 0.0) return cfg.lr_base;
  return cfg.min_lr + 0.5 * (cfg.lr_base - cfg.min_lr) * (1.0 + std::cos(M_PI * progress));
}

Adam::Adam(const std::vector<std::size_t>& sizes) {
  for (auto n : sizes) {
    m_.emplace_back(n, 0.0);
    v_.emplace_back(n, 0.0);
  }
}

void Adam::step(const std::vector<std::span<double>>& params, const std::vector<std::span<const double>>& grads,
                double lr) {
  if (params.size() != m_.size() || grads.size() != m_.size()) throw ConfigError("Adam: tensor count mismatch");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < m.size(); ++i) {
      const double g = grads[k][i];
      m[i] = beta1 * m[i] + (1 - beta1) * g;
      v[i] = beta2 * v[i] + (1 - beta2) * g * g;
      params[k][i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
    }
  }
}

PreparedDataset prepare_dataset(const DatasetManifest& m, const std::filesystem::path& dir,
                                const FilterSpec& filter, bool filtered, int workers) {
  PreparedDataset ds;
  ds.samples.resize(m.entries.size());
  parallel_for(m.entries.size(), workers, [&](std::size_t i) {
    const auto& e = m.entries[i];
    EegSegment seg = load_bipolar_segment(dir / e.path);
    if (seg.segment_id != e.segment_id)
      throw DataError((dir / e.path).string() + ": holds segment '" + seg.segment_id + "', manifest expects '" +
                      e.segment_id + "'");
    validate_segment(seg);
    auto& s = ds.samples[i];
    s.segment_id = e.segment_id;
    s.patient_id = e.patient_id;
    s.votes = e.votes;
    s.label = soft_label(e.votes);
    s.segment = filtered ? std::move(seg) : filter_segment(seg, filter);
  });
  if (!ds.samples.empty()) {
    ds.fs = ds.samples.front().segment.fs;
    for (const auto& s : ds.samples)
      if (s.segment.fs != ds.fs || s.segment.length() != ds.samples.front().segment.length())
        throw DataError("segment '" + s.segment_id + "' differs in sampling rate or length from the rest");
  }
  return ds;
}

Matrix model_input(const EegSegment& uv) { return clip_and_scale(uv).samples; }

double sample_weight(const PreparedSample& s, SampleWeighting w) {
  return w == SampleWeighting::AnnotatorCount ? static_cast<double>(s.votes.total()) : 1.0;
}

double evaluate_loss(const ModelConfig& cfg, const ModelParams& params,
                     const std::vector<const PreparedSample*>& samples, SampleWeighting weighting, int workers) {
  std::vector<double> kl(samples.size());
  parallel_for(samples.size(), workers, [&](std::size_t i) {
    const auto r = forward(cfg, params, model_input(samples[i]->segment), Mode::Eval);
    kl[i] = kl_divergence(samples[i]->label.p, r.probs);
  });
  double num = 0, den = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double w = sample_weight(*samples[i], weighting);
    num += w * kl[i];
    den += w;
  }
  return den > 0 ? num / den : 0.0;
}

std::vector<const PreparedSample*> stage_scope(const std::vector<const PreparedSample*>& samples, DataScope scope,
                                               int hq_min_votes) {
  if (scope == DataScope::All) return samples;
  std::vector<const PreparedSample*> out;
  for (const auto* s : samples)
    if (s->votes.total() >= hq_min_votes) out.push_back(s);
  return out;
}

namespace {

struct TrainableView {
  std::vector<std::span<double>> params;
  std::vector<std::span<const double>> grads;
  std::vector<std::size_t> sizes;
};

TrainableView trainable(ModelParams& p, ModelParams& g) {
  TrainableView v;
  auto pt = p.tensors();
  auto gt = g.tensors();
  for (std::size_t i = 0; i < pt.size(); ++i) {
    if (!pt[i].trainable) continue;
    v.params.push_back(pt[i].data);
    v.grads.emplace_back(gt[i].data);
    v.sizes.push_back(pt[i].data.size());
  }
  return v;
}

void add_into(ModelParams& acc, const ModelParams& g) {
  auto a = acc.tensors();
  const auto b = g.tensors();
  for (std::size_t k = 0; k < a.size(); ++k)
    for (std::size_t i = 0; i < a[k].data.size(); ++i) a[k].data[i] += b[k][i];
}

}  // namespace

StageResult train_stage(const ModelConfig& cfg, ModelParams init, const std::vector<const PreparedSample*>& train_set,
                        const std::vector<const PreparedSample*>& val_set, const StageConfig& stage,
                        const TrainOptions& opt) {
  validate_stage_config(stage);
  const auto train = stage_scope(train_set, stage.scope, opt.hq_min_votes);
  if (train.empty()) throw DataError("train_stage: no training samples in scope");
  const auto val = stage_scope(val_set, stage.scope, opt.hq_min_votes);
  const bool learn_embedding = init.embedding.spec.kind == EmbeddingKind::Learnable;

  const auto n = train.size();
  const auto batch = static_cast<std::size_t>(stage.batch_size);
  const long steps_per_epoch = static_cast<long>((n + batch - 1) / batch);
  const long total = steps_per_epoch * stage.epochs;

  StageResult res;
  ModelParams params = std::move(init);
  ModelParams grads = params.zeros_like();
  std::vector<ModelParams> slot(std::min(batch, n), grads);
  auto view = trainable(params, grads);
  Adam adam(view.sizes);
  double best = std::numeric_limits<double>::infinity();
  long step = 0;

  std::vector<std::size_t> order(n);
  std::vector<double> slot_loss(slot.size());
  for (int epoch = 0; epoch < stage.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(derive_seed(opt.seed, 0x5af1eULL, static_cast<std::uint64_t>(epoch)));
    shuffle(order, shuffle_rng);
    double epoch_num = 0, epoch_den = 0;
    double lr = 0;
    for (std::size_t b0 = 0; b0 < n; b0 += batch) {
      const std::size_t bn = std::min(batch, n - b0);
      double wsum = 0;
      for (std::size_t j = 0; j < bn; ++j) wsum += sample_weight(*train[order[b0 + j]], stage.weighting);
      // Per-sample gradients land in their own slot and are summed in batch order,
      // so the result does not depend on the worker count.
      parallel_for(bn, opt.workers, [&](std::size_t j) {
        const std::size_t idx = order[b0 + j];
        const auto& s = *train[idx];
        Rng arng = augment_stream(opt.augment, static_cast<std::uint64_t>(epoch), idx);
        const Matrix x = model_input(augment(s.segment, opt.augment, arng));
        slot[j].zero();
        const double w = sample_weight(s, stage.weighting) / wsum;
        slot_loss[j] = backward(cfg, params, x, s.label, w, Mode::Train,
                                derive_seed(opt.seed, 0xd809ULL, static_cast<std::uint64_t>(epoch), idx), slot[j]);
      });
      grads.zero();
      double batch_loss = 0;
      for (std::size_t j = 0; j < bn; ++j) {
        add_into(grads, slot[j]);
        batch_loss += slot_loss[j];
      }
      if (!std::isfinite(batch_loss))
        throw NumericError("train_stage: non-finite batch loss at epoch " + std::to_string(epoch) + ", step " +
                           std::to_string(step));
      lr = lr_at(step, total, stage);
      adam.step(view.params, view.grads, lr);
      if (learn_embedding) project_embedding(params.embedding);
      epoch_num += batch_loss * wsum;
      epoch_den += wsum;
      if (opt.on_step) opt.on_step(StepInfo{epoch, step, lr, batch_loss}, params);
      ++step;
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.step = step;
    rec.lr = lr;
    rec.train_loss = epoch_num / epoch_den;
    rec.val_loss = val.empty() ? rec.train_loss : evaluate_loss(cfg, params, val, stage.weighting, opt.workers);
    if (!std::isfinite(rec.val_loss)) throw NumericError("train_stage: non-finite validation loss");
    if (epoch == 0) res.initial_train_loss = rec.train_loss;
    res.final_train_loss = rec.train_loss;
    if (rec.val_loss < best) {
      best = rec.val_loss;
      res.params = params;
    }
    res.history.push_back(rec);
    if (opt.on_epoch) opt.on_epoch(rec);
  }
  res.best_val_loss = best;
  return res;
}

CvResult run_cv(const PreparedDataset& data, const DatasetManifest& manifest, const CvConfig& cfg,
                const std::vector<ConvParams>* init_backbone,
                const std::function<void(int, int, const EpochRecord&)>& on_epoch) {
  validate_model_config(cfg.model);
  validate_augment_config(cfg.augment);
  if (data.samples.size() != manifest.entries.size()) throw DataError("run_cv: dataset and manifest sizes differ");
  CvResult res;
  res.folds = split_folds(manifest, cfg.folds, cfg.seed, cfg.balance);
  const int k = cfg.folds;
  std::vector<int> fold_of(data.samples.size());
  for (std::size_t i = 0; i < data.samples.size(); ++i) fold_of[i] = res.folds.fold_of(data.samples[i].patient_id);

  res.models.resize(static_cast<std::size_t>(k));
  res.fold_val_loss.resize(static_cast<std::size_t>(k));
  res.stage1_history.resize(static_cast<std::size_t>(k));
  res.stage2_history.resize(static_cast<std::size_t>(k));
  std::vector<std::optional<OofPrediction>> oof(data.samples.size());
  std::mutex log_mutex;

  const int fold_workers = std::max(1, std::min(cfg.workers, k));
  const int inner_workers = std::max(1, cfg.workers / fold_workers);
  parallel_for(static_cast<std::size_t>(k), fold_workers, [&](std::size_t f) {
    const int fold = static_cast<int>(f);
    std::vector<const PreparedSample*> train, val;
    std::vector<std::size_t> val_idx;
    for (std::size_t i = 0; i < data.samples.size(); ++i) {
      if (fold_of[i] == fold) {
        val.push_back(&data.samples[i]);
        val_idx.push_back(i);
      } else {
        train.push_back(&data.samples[i]);
      }
    }
    if (train.empty() || val.empty()) throw DataError("run_cv: fold " + std::to_string(fold) + " is empty");

    ModelParams params = init_params(cfg.model, derive_seed(cfg.seed, 0x1417ULL, f));
    if (init_backbone) {
      if (init_backbone->size() != params.backbone.size())
        throw ConfigError("run_cv: transfer backbone has a different number of stages");
      for (std::size_t l = 0; l < params.backbone.size(); ++l) {
        const auto& src = (*init_backbone)[l];
        if (src.w.size() != params.backbone[l].w.size() || src.b.size() != params.backbone[l].b.size())
          throw ConfigError("run_cv: transfer backbone shape mismatch at stage " + std::to_string(l));
      }
      params.backbone = *init_backbone;
    }

    auto stage_opts = [&](int stage) {
      TrainOptions o;
      o.augment = cfg.augment;
      o.augment.seed = derive_seed(cfg.seed, 0xa06ULL, f, static_cast<std::uint64_t>(stage));
      o.seed = derive_seed(cfg.seed, 0x57a6eULL, f, static_cast<std::uint64_t>(stage));
      o.workers = inner_workers;
      o.hq_min_votes = cfg.hq_min_votes;
      if (on_epoch)
        o.on_epoch = [&, stage](const EpochRecord& r) {
          std::lock_guard lock(log_mutex);
          on_epoch(fold, stage, r);
        };
      return o;
    };
    auto s1 = train_stage(cfg.model, std::move(params), train, val, cfg.stage1, stage_opts(1));
    auto s2 = train_stage(cfg.model, std::move(s1.params), train, val, cfg.stage2, stage_opts(2));
    res.stage1_history[f] = std::move(s1.history);
    res.stage2_history[f] = std::move(s2.history);
    res.fold_val_loss[f] = s2.best_val_loss;

    for (std::size_t j = 0; j < val.size(); ++j) {
      const auto r = forward(cfg.model, s2.params, model_input(val[j]->segment), Mode::Eval);
      oof[val_idx[j]] = OofPrediction{val_idx[j], fold, r.probs, r.embedding};
    }
    res.models[f] = std::move(s2.params);
  });
  for (auto& o : oof) res.oof.push_back(std::move(*o));
  return res;
}

ClassVector ensemble_predict(const ModelConfig& cfg, const std::vector<ModelParams>& models, const Matrix& x) {
  if (models.empty()) throw ConfigError("ensemble_predict: no models");
  ClassVector mean{};
  for (const auto& m : models) {
    if (m.head.out != kNumClasses || m.tensors().size() != models.front().tensors().size())
      throw ConfigError("ensemble_predict: model shapes differ");
    const auto r = forward(cfg, m, x, Mode::Eval);
    for (int c = 0; c < kNumClasses; ++c) mean[c] += r.probs[c];
  }
  double sum = 0;
  for (double& v : mean) {
    v /= static_cast<double>(models.size());
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-12)
    for (double& v : mean) v /= sum;
  return mean;
}

namespace {

constexpr const char* kCheckpointMagic = "VIPEEG-CHECKPOINT 1";

void write_f64(std::ostream& out, std::span<const double> v) {
  std::vector<std::uint64_t> buf(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    auto u = std::bit_cast<std::uint64_t>(v[i]);
    if constexpr (std::endian::native == std::endian::big) u = __builtin_bswap64(u);
    buf[i] = u;
  }
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 8));
}

void read_f64(std::istream& in, std::span<double> v) {
  std::vector<std::uint64_t> buf(v.size());
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 8));
  if (!in) throw DataError("checkpoint: truncated tensor data");
  for (std::size_t i = 0; i < v.size(); ++i) {
    auto u = buf[i];
    if constexpr (std::endian::native == std::endian::big) u = __builtin_bswap64(u);
    v[i] = std::bit_cast<double>(u);
  }
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ModelConfig& cfg, const ModelParams& params,
                     const std::string& meta_json) {
  json header;
  header["model"] = cfg;
  header["meta"] = meta_json.empty() ? json::object() : json::parse(meta_json);
  json tensors = json::array();
  const auto names = params.tensor_names();
  const auto data = params.tensors();
  for (std::size_t i = 0; i < names.size(); ++i) tensors.push_back({{"name", names[i]}, {"size", data[i].size()}});
  header["tensors"] = tensors;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out << kCheckpointMagic << '\n' << header.dump() << '\n';
  for (const auto& t : data) write_f64(out, t);
  if (!out) throw DataError("write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  std::string magic, header_line;
  std::getline(in, magic);
  if (magic != kCheckpointMagic) throw DataError(path.string() + ": not a checkpoint");
  std::getline(in, header_line);
  json header;
  try {
    header = json::parse(header_line);
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": bad checkpoint header: " + e.what());
  }
  Checkpoint ck;
  ck.config = header.at("model").get<ModelConfig>();
  ck.meta = header.at("meta").dump();
  ck.params = init_params(ck.config, 0);
  auto tensors = ck.params.tensors();
  const auto& listed = header.at("tensors");
  if (listed.size() != tensors.size()) throw DataError(path.string() + ": tensor count does not match the model");
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    if (listed[i].at("name").get<std::string>() != tensors[i].name ||
        listed[i].at("size").get<std::size_t>() != tensors[i].data.size())
      throw DataError(path.string() + ": tensor '" + tensors[i].name + "' does not match the model");
    read_f64(in, tensors[i].data);
  }
  return ck;
}

void write_predictions_csv(const std::filesystem::path& path, const std::vector<PredictionRow>& rows,
                           const std::string& comment) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  if (!comment.empty()) out << "# " << comment << '\n';
  out << "id";
  for (int c = 0; c < kNumClasses; ++c) out << ',' << class_key(class_from_index(c)) << "_vote";
  out << '\n';
  char buf[32];
  for (const auto& r : rows) {
    out << r.id;
    for (double p : r.probs) {
      std::snprintf(buf, sizeof buf, "%.12g", p);
      out << ',' << buf;
    }
    out << '\n';
  }
  if (!out) throw DataError("write failed: " + path.string());
}

std::vector<PredictionRow> read_predictions_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<PredictionRow> rows;
  std::string line;
  bool header = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      header = true;
      continue;
    }
    std::stringstream ss(line);
    PredictionRow r;
    std::string cell;
    std::getline(ss, r.id, ',');
    for (int c = 0; c < kNumClasses; ++c) {
      if (!std::getline(ss, cell, ',')) throw DataError(path.string() + ": short row for '" + r.id + "'");
      r.probs[c] = std::stod(cell);
    }
    rows.push_back(r);
  }
  return rows;
}

}  // namespace vipeeg
