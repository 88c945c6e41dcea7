// Command-line entry point: gen, preprocess, train, evaluate, ablate, tsne, predict.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <tuple>

#include "CLI11.hpp"
#include "vipeeg/analysis.hpp"
#include "vipeeg/config.hpp"
#include "vipeeg/metrics.hpp"
#include "vipeeg/preprocess.hpp"
#include "vipeeg/synthgen.hpp"
#include "vipeeg/train.hpp"

namespace fs = std::filesystem;
using namespace vipeeg;

namespace {

enum ExitCode { kOk = 0, kDataError = 1, kUsageError = 2, kNumericError = 3, kInternalError = 4 };

enum class LogLevel { Quiet, Info, Debug };
LogLevel g_level = LogLevel::Info;
const auto g_start = std::chrono::steady_clock::now();

// One JSON object per line on stderr.
void log_event(const std::string& event, json fields = json::object(), LogLevel level = LogLevel::Info) {
  if (static_cast<int>(level) > static_cast<int>(g_level)) return;
  const double t = std::chrono::duration<double>(std::chrono::steady_clock::now() - g_start).count();
  fields["event"] = event;
  fields["elapsed_s"] = std::round(t * 1000) / 1000;
  std::cerr << fields.dump() << std::endl;
}

struct RunConfig {
  SynthConfig synth;
  FilterSpec filter;
  CvConfig train;
  PretextConfig pretext;
  TsneConfig tsne;
};

json to_json_run(const RunConfig& c) {
  return json{{"synth", c.synth}, {"filter", c.filter}, {"train", c.train}, {"pretext", c.pretext}, {"tsne", c.tsne}};
}

void merge_run(const json& j, RunConfig& c) {
  if (!j.is_object()) throw ConfigError("config file must hold a JSON object");
  for (const auto& [k, v] : j.items()) {
    if (k == "synth") from_json(v, c.synth);
    else if (k == "filter") from_json(v, c.filter);
    else if (k == "train") from_json(v, c.train);
    else if (k == "pretext") from_json(v, c.pretext);
    else if (k == "tsne") from_json(v, c.tsne);
    else throw ConfigError("config: unknown section '" + k + "'");
  }
}

struct Globals {
  std::uint64_t seed = 0;
  int workers = 1;
  std::string config_path;
  std::string log_level = "info";
};

std::string default_data_dir() {
  const char* env = std::getenv("VIPEEG_DATA_DIR");
  return env && *env ? env : "data";
}

std::string artifact_tag(const std::string& hash, std::uint64_t seed) {
  return "config_hash=" + hash + " seed=" + std::to_string(seed);
}

void require_dir(const fs::path& p, const char* what) {
  if (!fs::is_directory(p)) throw DataError(std::string(what) + " '" + p.string() + "' is not a directory");
}

void require_file(const fs::path& p, const char* what) {
  if (!fs::is_regular_file(p)) throw DataError(std::string(what) + " '" + p.string() + "' does not exist");
}

void make_dir(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw DataError("cannot create '" + p.string() + "': " + ec.message());
}

void write_text(const fs::path& path, const std::string& s) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << s;
  if (!out) throw DataError("write failed: " + path.string());
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

// Loads <dir>/manifest.csv and prepares every segment for the model.
struct LoadedData {
  DatasetManifest manifest;
  PreparedDataset data;
  bool prefiltered = false;
};

LoadedData load_data(const fs::path& dir, const FilterSpec& filter, int workers) {
  require_dir(dir, "data directory");
  require_file(dir / "manifest.csv", "manifest");
  LoadedData d;
  d.manifest = read_manifest_csv(dir / "manifest.csv");
  validate_manifest(d.manifest);
  d.prefiltered = fs::exists(dir / "preprocess.json");
  d.data = prepare_dataset(d.manifest, dir, filter, d.prefiltered, workers);
  log_event("data_loaded", {{"segments", d.manifest.entries.size()},
                            {"patients", d.manifest.patients().size()},
                            {"prefiltered", d.prefiltered}});
  return d;
}

// ------------------------------------------------------------------ gen

struct GenArgs {
  std::string out;
  std::optional<int> patients, segments, recordings, annotators_min, annotators_max;
  std::optional<double> fs, duration, noise;
};

int cmd_gen(const Globals& g, RunConfig rc, const GenArgs& a) {
  if (a.patients) rc.synth.n_patients = *a.patients;
  if (a.segments) rc.synth.segments_per_patient = *a.segments;
  if (a.recordings) rc.synth.recordings_per_patient = *a.recordings;
  if (a.annotators_min) rc.synth.annotators_min = *a.annotators_min;
  if (a.annotators_max) rc.synth.annotators_max = *a.annotators_max;
  if (a.fs) rc.synth.fs = *a.fs;
  if (a.duration) rc.synth.t_total_s = *a.duration;
  if (a.noise) rc.synth.label_noise = *a.noise;
  rc.synth.seed = g.seed;
  rc.synth.workers = g.workers;
  validate_synth_config(rc.synth);
  const json cfg = rc.synth;
  const auto hash = config_hash(cfg);
  const fs::path out = a.out.empty() ? default_data_dir() : a.out;
  make_dir(out);
  log_event("gen_start", {{"out", out.string()}, {"config_hash", hash}});
  const auto ds = generate(rc.synth);
  write_dataset(out, ds, artifact_tag(hash, g.seed));
  write_json_file(out / "synth.json", {{"synth", cfg}, {"config_hash", hash}, {"seed", g.seed}});
  std::cout << format_summary(summarize(ds.manifest));
  log_event("gen_done", {{"segments", ds.segments.size()}});
  return kOk;
}

// ------------------------------------------------------------------ preprocess

struct FilterArgs {
  std::optional<int> order;
  std::optional<double> low, high;
  bool causal = false;
};

void apply_filter_args(RunConfig& rc, const FilterArgs& f) {
  if (f.order) rc.filter.order = *f.order;
  if (f.low) rc.filter.low_hz = *f.low;
  if (f.high) rc.filter.high_hz = *f.high;
  if (f.causal) rc.filter.mode = FilterMode::Causal;
}

int cmd_preprocess(const Globals& g, RunConfig rc, const std::string& data, const std::string& out_dir,
                   const FilterArgs& fa, bool scaled) {
  apply_filter_args(rc, fa);
  const fs::path in = data.empty() ? default_data_dir() : data;
  require_dir(in, "data directory");
  require_file(in / "manifest.csv", "manifest");
  if (fs::exists(in / "preprocess.json")) throw DataError("'" + in.string() + "' already holds preprocessed signals");
  const fs::path out = out_dir;
  if (fs::weakly_canonical(in) == fs::weakly_canonical(out)) throw ConfigError("--out must differ from --data");
  const auto manifest = read_manifest_csv(in / "manifest.csv");
  validate_manifest(manifest);
  const json cfg = {{"filter", rc.filter}, {"scaled", scaled}};
  const auto hash = config_hash(cfg);
  make_dir(out / "signals");
  parallel_for(manifest.entries.size(), g.workers, [&](std::size_t i) {
    const auto& e = manifest.entries[i];
    EegSegment seg = load_bipolar_segment(in / e.path);
    FilterSpec f = rc.filter;
    seg = filter_segment(seg, f);
    if (scaled) seg = clip_and_scale(seg);
    const auto montage = standard_double_banana();
    std::vector<std::string> names;
    for (std::size_t c = 0; c < montage.pairs.size(); ++c) names.push_back(montage.channel_name(c));
    make_dir((out / e.path).parent_path());
    write_signal(out / e.path, seg, names);
  });
  write_manifest_csv(out / "manifest.csv", manifest, artifact_tag(hash, g.seed));
  // Training only reads unscaled, filtered signals; scaled output is for export.
  write_json_file(out / (scaled ? "preprocess_scaled.json" : "preprocess.json"),
                  {{"config", cfg}, {"config_hash", hash}, {"seed", g.seed}});
  log_event("preprocess_done", {{"segments", manifest.entries.size()}, {"out", out.string()}});
  return kOk;
}

// ------------------------------------------------------------------ train

struct TrainArgs {
  std::string data, out;
  std::optional<int> epochs1, epochs2, batch, folds;
  std::optional<double> lr1, lr2;
  std::string variant = "full";
  FilterArgs filter;
};

void apply_train_args(RunConfig& rc, const TrainArgs& a) {
  apply_filter_args(rc, a.filter);
  if (a.epochs1) rc.train.stage1.epochs = *a.epochs1;
  if (a.epochs2) rc.train.stage2.epochs = *a.epochs2;
  if (a.lr1) rc.train.stage1.lr_base = *a.lr1;
  if (a.lr2) rc.train.stage2.lr_base = *a.lr2;
  if (a.batch) rc.train.stage1.batch_size = rc.train.stage2.batch_size = *a.batch;
  if (a.folds) rc.train.folds = *a.folds;
}

int cmd_train(const Globals& g, RunConfig rc, const TrainArgs& a) {
  apply_train_args(rc, a);
  const auto variant = build_variant(parse_variant(a.variant), rc.train.model);
  rc.train.model = variant.model;
  rc.train.seed = g.seed;
  rc.train.workers = g.workers;
  validate_model_config(rc.train.model);
  validate_stage_config(rc.train.stage1);
  validate_stage_config(rc.train.stage2);
  validate_augment_config(rc.train.augment);
  validate_filter_spec(rc.filter);
  if (a.out.empty()) throw ConfigError("train: --out is required");

  const json cfg = {{"filter", rc.filter},
                    {"train", rc.train},
                    {"pretext", rc.pretext},
                    {"variant", a.variant},
                    {"pretrained", variant.pretrained}};
  const auto hash = config_hash(cfg);
  const auto tag = artifact_tag(hash, g.seed);
  const fs::path out = a.out;
  const auto loaded = load_data(a.data.empty() ? default_data_dir() : a.data, rc.filter, g.workers);
  make_dir(out / "checkpoints");

  json report = {{"config", cfg}, {"config_hash", hash}, {"seed", g.seed}};
  std::optional<PretrainResult> pre;
  if (variant.pretrained) {
    PretextConfig pc = rc.pretext;
    pc.seed = derive_seed(g.seed, 0x9e7ULL);
    pc.workers = g.workers;
    pre = pretrain_backbone(rc.train.model.backbone, pc);
    report["pretext"] = {{"accuracy", pre->accuracy}, {"epochs", pre->epochs}};
    log_event("pretext_done", {{"accuracy", pre->accuracy}, {"epochs", pre->epochs}});
  }

  // Folds may finish in any order when run in parallel; the file is written sorted.
  std::map<std::tuple<int, int, int>, std::string> epoch_lines;
  const auto res = run_cv(loaded.data, loaded.manifest, rc.train, pre ? &pre->backbone : nullptr,
                          [&](int fold, int stage, const EpochRecord& r) {
                            const json rec = {{"fold", fold},           {"stage", stage},
                                              {"epoch", r.epoch},       {"step", r.step},
                                              {"lr", r.lr},             {"train_loss", r.train_loss},
                                              {"val_loss", r.val_loss}};
                            epoch_lines[{fold, stage, r.epoch}] = rec.dump();
                            log_event("epoch", rec, LogLevel::Info);
                          });
  std::ofstream log(out / "train_log.jsonl", std::ios::binary);
  for (const auto& [key, line] : epoch_lines) log << line << '\n';
  if (!log) throw DataError("cannot write " + (out / "train_log.jsonl").string());

  for (std::size_t f = 0; f < res.models.size(); ++f) {
    const json meta = {{"config_hash", hash}, {"seed", g.seed}, {"fold", f}, {"val_loss", res.fold_val_loss[f]}};
    save_checkpoint(out / "checkpoints" / ("fold_" + std::to_string(f) + ".ckpt"), rc.train.model, res.models[f],
                    meta.dump());
  }

  std::string oof = "# " + tag + "\nid,fold";
  for (int c = 0; c < kNumClasses; ++c) oof += "," + std::string(class_key(class_from_index(c))) + "_vote";
  oof += "\n";
  std::string emb = "# " + tag + "\nid";
  const std::size_t dim = res.oof.empty() ? 0 : res.oof.front().embedding.size();
  for (std::size_t k = 0; k < dim; ++k) emb += ",e" + std::to_string(k);
  emb += "\n";
  // Out-of-fold scores on every segment and on the high-quality subset.
  std::vector<SoftLabel> labels[2];
  std::vector<ClassVector> preds[2];
  long correct[2] = {0, 0};
  for (const auto& o : res.oof) {
    const auto& s = loaded.data.samples[o.sample];
    oof += s.segment_id + "," + std::to_string(o.fold);
    for (double p : o.probs) oof += "," + fmt(p);
    oof += "\n";
    emb += s.segment_id;
    for (double v : o.embedding) emb += "," + fmt(v);
    emb += "\n";
    for (int k = 0; k < 2; ++k) {
      if (k == 1 && s.votes.total() < rc.train.hq_min_votes) continue;
      labels[k].push_back(s.label);
      preds[k].push_back(o.probs);
      correct[k] += argmax_class(o.probs) == consensus(s.votes);
    }
  }
  write_text(out / "oof.csv", oof);
  write_text(out / "embeddings.csv", emb);

  json folds = json::array();
  for (std::size_t f = 0; f < res.models.size(); ++f) {
    auto hist = [](const std::vector<EpochRecord>& h) {
      json a = json::array();
      for (const auto& r : h)
        a.push_back({{"epoch", r.epoch}, {"step", r.step}, {"lr", r.lr}, {"train_loss", r.train_loss}, {"val_loss", r.val_loss}});
      return a;
    };
    folds.push_back({{"fold", f},
                     {"best_val_loss", res.fold_val_loss[f]},
                     {"stage1", hist(res.stage1_history[f])},
                     {"stage2", hist(res.stage2_history[f])}});
  }
  report["folds"] = folds;
  json assignment = json::object();
  for (const auto& [p, f] : res.folds.fold_of_patient) assignment[p] = f;
  report["fold_of_patient"] = assignment;
  for (int k = 0; k < 2; ++k) {
    if (labels[k].empty()) continue;
    report[k == 0 ? "oof_all" : "oof_high_quality"] = {
        {"n", labels[k].size()},
        {"mean_kld", mean_kld(labels[k], preds[k])},
        {"accuracy", static_cast<double>(correct[k]) / static_cast<double>(labels[k].size())}};
  }
  log_event("train_done", {{"oof_all", report["oof_all"]}});
  write_json_file(out / "train_report.json", report);
  write_json_file(out / "run.json", {{"config", cfg}, {"config_hash", hash}, {"seed", g.seed}});
  return kOk;
}

// ------------------------------------------------------------------ evaluate / tsne / predict

struct RunInfo {
  json config;
  std::string hash;
  std::uint64_t seed = 0;
  FilterSpec filter;
  CvConfig train;
  TsneConfig tsne;
};

RunInfo read_run(const fs::path& run) {
  require_dir(run, "run directory");
  require_file(run / "run.json", "run description");
  const auto j = read_json_file(run / "run.json");
  RunInfo r;
  r.config = j.at("config");
  r.hash = j.at("config_hash").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  from_json(r.config.at("filter"), r.filter);
  from_json(r.config.at("train"), r.train);
  return r;
}

struct OofRow {
  int fold = 0;
  ClassVector probs{};
};

std::map<std::string, OofRow> read_oof(const fs::path& path) {
  require_file(path, "out-of-fold predictions");
  std::ifstream in(path);
  std::map<std::string, OofRow> rows;
  std::string line;
  bool header = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      header = true;
      continue;
    }
    std::stringstream ss(line);
    std::string id, cell;
    std::getline(ss, id, ',');
    OofRow r;
    std::getline(ss, cell, ',');
    r.fold = std::stoi(cell);
    for (int c = 0; c < kNumClasses; ++c) {
      if (!std::getline(ss, cell, ',')) throw DataError(path.string() + ": short row for '" + id + "'");
      r.probs[c] = std::stod(cell);
    }
    rows[id] = r;
  }
  return rows;
}

std::map<std::string, std::vector<double>> read_embeddings(const fs::path& path) {
  require_file(path, "embeddings");
  std::ifstream in(path);
  std::map<std::string, std::vector<double>> rows;
  std::string line;
  bool header = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      header = true;
      continue;
    }
    std::stringstream ss(line);
    std::string id, cell;
    std::getline(ss, id, ',');
    auto& v = rows[id];
    while (std::getline(ss, cell, ',')) v.push_back(std::stod(cell));
  }
  return rows;
}

int cmd_evaluate(const std::string& run_dir, const std::string& data, const std::string& out_dir, bool all_samples) {
  const fs::path run = run_dir;
  const auto info = read_run(run);
  const fs::path dir = data.empty() ? default_data_dir() : data;
  require_file(dir / "manifest.csv", "manifest");
  const auto manifest = read_manifest_csv(dir / "manifest.csv");
  const auto oof = read_oof(run / "oof.csv");
  EvalInput in;
  for (const auto& e : manifest.entries) {
    if (!all_samples && e.votes.total() < info.train.hq_min_votes) continue;
    const auto it = oof.find(e.segment_id);
    if (it == oof.end()) throw DataError("no out-of-fold prediction for segment '" + e.segment_id + "'");
    in.votes.push_back(e.votes);
    in.preds.push_back(it->second.probs);
    in.patients.push_back(e.patient_id);
    in.folds.push_back(it->second.fold);
  }
  const auto rep = evaluate(in);
  ReportInputs ri;
  ri.eval = &rep;
  ri.comment = artifact_tag(info.hash, info.seed);
  ri.extra = {{"config_hash", info.hash}, {"seed", info.seed}, {"subset", all_samples ? "all" : "high_quality"}};
  const fs::path out = out_dir.empty() ? run / "report" : fs::path(out_dir);
  emit_report(out, ri);
  log_event("evaluate_done", {{"mean_kld", rep.mean_kld.mean}, {"accuracy", rep.accuracy}, {"out", out.string()}});
  std::cout << "mean KLD " << fmt(rep.mean_kld.mean) << "  accuracy " << fmt(rep.accuracy) << "  n " << rep.n_samples
            << "\n";
  return kOk;
}

int cmd_tsne(const Globals& g, const std::string& run_dir, const std::string& data, const std::string& out_dir,
             const std::string& input, std::optional<double> perplexity, std::optional<int> iterations,
             const RunConfig& rc) {
  const fs::path run = run_dir;
  const auto info = read_run(run);
  const fs::path dir = data.empty() ? default_data_dir() : data;
  require_file(dir / "manifest.csv", "manifest");
  const auto manifest = read_manifest_csv(dir / "manifest.csv");
  TsneConfig tc = rc.tsne;
  if (perplexity) tc.perplexity = *perplexity;
  if (iterations) tc.iterations = *iterations;
  tc.seed = g.seed;
  std::map<std::string, std::vector<double>> features;
  if (input == "embedding") {
    features = read_embeddings(run / "embeddings.csv");
  } else if (input == "softmax") {
    for (const auto& [id, r] : read_oof(run / "oof.csv")) features[id] = std::vector<double>(r.probs.begin(), r.probs.end());
  } else {
    throw ConfigError("tsne: --input must be 'embedding' or 'softmax'");
  }
  std::vector<std::vector<double>> rows;
  std::vector<ClassId> labels;
  for (const auto& e : manifest.entries) {
    if (e.votes.total() < info.train.hq_min_votes) continue;
    const auto it = features.find(e.segment_id);
    if (it == features.end()) throw DataError("no features for segment '" + e.segment_id + "'");
    rows.push_back(it->second);
    labels.push_back(consensus(e.votes));
  }
  if (rows.empty()) throw DataError("tsne: no high-quality samples");
  Matrix x(rows.size(), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t k = 0; k < rows[i].size(); ++k) x(i, k) = rows[i][k];
  const auto res = tsne(x, tc);
  ReportInputs ri;
  ri.tsne_coords = &res.coords;
  ri.tsne_labels = labels;
  const json cfg = {{"run_config_hash", info.hash}, {"tsne", tc}, {"input", input}};
  const auto hash = config_hash(cfg);
  ri.comment = artifact_tag(hash, g.seed);
  ri.extra = {{"config_hash", hash}, {"seed", g.seed}, {"tsne", {{"input", input}, {"n", rows.size()},
              {"final_objective", res.objective.back()}}}};
  const fs::path out = out_dir.empty() ? run / "tsne" : fs::path(out_dir);
  emit_report(out, ri);
  log_event("tsne_done", {{"n", rows.size()}, {"objective", res.objective.back()}});
  return kOk;
}

int cmd_predict(const Globals& g, const std::string& run_dir, const std::string& data, const std::string& out_file) {
  const fs::path run = run_dir;
  const auto info = read_run(run);
  std::vector<ModelParams> models;
  std::optional<ModelConfig> cfg;
  for (int f = 0;; ++f) {
    const auto p = run / "checkpoints" / ("fold_" + std::to_string(f) + ".ckpt");
    if (!fs::exists(p)) break;
    auto ck = load_checkpoint(p);
    if (cfg && json(*cfg) != json(ck.config)) throw DataError("checkpoint " + p.string() + " has a different model");
    cfg = ck.config;
    models.push_back(std::move(ck.params));
  }
  if (models.empty()) throw DataError("no checkpoints under " + (run / "checkpoints").string());
  const auto loaded = load_data(data.empty() ? default_data_dir() : data, info.filter, g.workers);
  std::vector<PredictionRow> rows(loaded.data.samples.size());
  parallel_for(rows.size(), g.workers, [&](std::size_t i) {
    const auto& s = loaded.data.samples[i];
    rows[i] = {s.segment_id, ensemble_predict(*cfg, models, model_input(s.segment))};
  });
  if (out_file.empty()) throw ConfigError("predict: --out is required");
  const fs::path out = out_file;
  if (out.has_parent_path()) make_dir(out.parent_path());
  write_predictions_csv(out, rows, artifact_tag(info.hash, info.seed));
  log_event("predict_done", {{"rows", rows.size()}, {"models", models.size()}});
  return kOk;
}

// ------------------------------------------------------------------ ablate

int cmd_ablate(const Globals& g, RunConfig rc, const TrainArgs& a, const std::vector<std::uint64_t>& seeds,
               const std::vector<std::string>& variant_names) {
  apply_train_args(rc, a);
  rc.train.workers = g.workers;
  if (a.out.empty()) throw ConfigError("ablate: --out is required");
  AblationConfig ac;
  ac.cv = rc.train;
  ac.pretext = rc.pretext;
  ac.pretext.workers = g.workers;
  ac.seeds = seeds.empty() ? std::vector<std::uint64_t>{g.seed} : seeds;
  if (!variant_names.empty()) {
    ac.variants.clear();
    for (const auto& v : variant_names) ac.variants.push_back(parse_variant(v));
  }
  json names = json::array();
  for (auto v : ac.variants) names.push_back(std::string(variant_name(v)));
  const json cfg = {{"filter", rc.filter}, {"train", rc.train}, {"pretext", rc.pretext}, {"seeds", ac.seeds}, {"variants", names}};
  const auto hash = config_hash(cfg);
  const auto loaded = load_data(a.data.empty() ? default_data_dir() : a.data, rc.filter, g.workers);
  const auto table = run_ablation(loaded.data, loaded.manifest, ac, [](const std::string& m) {
    log_event("ablation_progress", {{"message", m}});
  });
  ReportInputs ri;
  ri.ablation = &table;
  ri.comment = artifact_tag(hash, g.seed);
  ri.extra = {{"config_hash", hash}, {"seed", g.seed}, {"config", cfg}};
  emit_report(a.out, ri);
  for (const auto& r : table.rows)
    std::cout << variant_name(r.variant) << "  mean KLD " << fmt(r.mean_kld) << "  p " << fmt(r.p_value) << "\n";
  return kOk;
}

void add_filter_flags(CLI::App* sc, FilterArgs& f) {
  sc->add_option("--filter-order", f.order, "Butterworth order (default 3)");
  sc->add_option("--low-hz", f.low, "Band-pass low cutoff in Hz (default 0.5)");
  sc->add_option("--high-hz", f.high, "Band-pass high cutoff in Hz (default 45)");
  sc->add_flag("--causal", f.causal, "Single forward pass instead of zero-phase filtering");
}

void add_train_flags(CLI::App* sc, TrainArgs& t) {
  sc->add_option("--data", t.data, "Dataset directory with manifest.csv (default $VIPEEG_DATA_DIR or ./data)");
  sc->add_option("--out", t.out, "Output directory")->required();
  sc->add_option("--epochs1", t.epochs1, "Stage-1 epochs");
  sc->add_option("--epochs2", t.epochs2, "Stage-2 epochs");
  sc->add_option("--lr1", t.lr1, "Stage-1 base learning rate");
  sc->add_option("--lr2", t.lr2, "Stage-2 base learning rate");
  sc->add_option("--batch", t.batch, "Batch size for both stages");
  sc->add_option("--folds", t.folds, "Number of cross-validation folds");
  add_filter_flags(sc, t.filter);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vipeeg: EEG harmful-brain-activity classification pipeline"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Random seed recorded in every artifact")->capture_default_str();
  app.add_option("--workers", g.workers, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);
  app.add_option("--config", g.config_path, "JSON config file (sections: synth, filter, train, pretext, tsne)");
  app.add_option("--log-level", g.log_level, "quiet, info or debug")
      ->capture_default_str()
      ->check(CLI::IsMember({"quiet", "info", "debug"}));

  GenArgs gen;
  auto* sc_gen = app.add_subcommand("gen", "Generate a synthetic labelled dataset");
  sc_gen->add_option("--out", gen.out, "Output directory (default $VIPEEG_DATA_DIR or ./data)");
  sc_gen->add_option("--patients", gen.patients, "Number of patients");
  sc_gen->add_option("--segments", gen.segments, "Segments per patient");
  sc_gen->add_option("--recordings", gen.recordings, "Recordings per patient");
  sc_gen->add_option("--fs", gen.fs, "Sampling rate in Hz");
  sc_gen->add_option("--duration", gen.duration, "Segment length in seconds (multiple of 5)");
  sc_gen->add_option("--label-noise", gen.noise, "Probability that a vote goes to another class");
  sc_gen->add_option("--annotators-min", gen.annotators_min, "Minimum votes per segment");
  sc_gen->add_option("--annotators-max", gen.annotators_max, "Maximum votes per segment");

  std::string pre_data, pre_out;
  FilterArgs pre_filter;
  bool pre_scaled = false;
  auto* sc_pre = app.add_subcommand("preprocess", "Band-pass filter a dataset into a new directory");
  sc_pre->add_option("--data", pre_data, "Input dataset directory (default $VIPEEG_DATA_DIR or ./data)");
  sc_pre->add_option("--out", pre_out, "Output directory")->required();
  sc_pre->add_flag("--scaled", pre_scaled, "Also clip and scale to 0-255 (export only; not usable for training)");
  add_filter_flags(sc_pre, pre_filter);

  TrainArgs tr;
  auto* sc_train = app.add_subcommand("train", "Two-stage k-fold training with out-of-fold predictions");
  add_train_flags(sc_train, tr);
  sc_train->add_option("--variant", tr.variant, "full, no_central, no_pretrain or no_eeg2img")
      ->capture_default_str()
      ->check(CLI::IsMember({"full", "no_central", "no_pretrain", "no_eeg2img"}));

  std::string ev_run, ev_data, ev_out;
  bool ev_all = false;
  auto* sc_eval = app.add_subcommand("evaluate", "Score out-of-fold predictions and write the report");
  sc_eval->add_option("--run", ev_run, "Training output directory")->required();
  sc_eval->add_option("--data", ev_data, "Dataset directory (default $VIPEEG_DATA_DIR or ./data)");
  sc_eval->add_option("--out", ev_out, "Report directory (default <run>/report)");
  sc_eval->add_flag("--all-samples", ev_all, "Score every segment instead of the high-quality subset");

  TrainArgs ab;
  std::vector<std::uint64_t> ab_seeds;
  std::vector<std::string> ab_variants;
  auto* sc_ab = app.add_subcommand("ablate", "Retrain component-removal variants and compare with the full model");
  add_train_flags(sc_ab, ab);
  sc_ab->add_option("--seeds", ab_seeds, "Seeds to repeat the comparison over (default: --seed)")->delimiter(',');
  sc_ab->add_option("--variants", ab_variants, "Variants to run (default: all four)")->delimiter(',');

  std::string ts_run, ts_data, ts_out, ts_input = "embedding";
  std::optional<double> ts_perp;
  std::optional<int> ts_iter;
  auto* sc_tsne = app.add_subcommand("tsne", "Embed out-of-fold model outputs in 2-D");
  sc_tsne->add_option("--run", ts_run, "Training output directory")->required();
  sc_tsne->add_option("--data", ts_data, "Dataset directory (default $VIPEEG_DATA_DIR or ./data)");
  sc_tsne->add_option("--out", ts_out, "Output directory (default <run>/tsne)");
  sc_tsne->add_option("--input", ts_input, "embedding (pooled features) or softmax")
      ->capture_default_str()
      ->check(CLI::IsMember({"embedding", "softmax"}));
  sc_tsne->add_option("--perplexity", ts_perp, "Perplexity (default 30)");
  sc_tsne->add_option("--iterations", ts_iter, "Gradient iterations (default 1000)");

  std::string pr_run, pr_data, pr_out;
  auto* sc_pred = app.add_subcommand("predict", "Fold-ensemble probabilities for every segment of a dataset");
  sc_pred->add_option("--run", pr_run, "Training output directory")->required();
  sc_pred->add_option("--data", pr_data, "Dataset directory (default $VIPEEG_DATA_DIR or ./data)");
  sc_pred->add_option("--out", pr_out, "Output CSV path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsageError;
  }

  g_level = g.log_level == "quiet" ? LogLevel::Quiet : g.log_level == "debug" ? LogLevel::Debug : LogLevel::Info;
  try {
    RunConfig rc;
    if (!g.config_path.empty()) merge_run(read_json_file(g.config_path), rc);
    if (sc_gen->parsed()) return cmd_gen(g, rc, gen);
    if (sc_pre->parsed()) return cmd_preprocess(g, rc, pre_data, pre_out, pre_filter, pre_scaled);
    if (sc_train->parsed()) return cmd_train(g, rc, tr);
    if (sc_eval->parsed()) return cmd_evaluate(ev_run, ev_data, ev_out, ev_all);
    if (sc_ab->parsed()) return cmd_ablate(g, rc, ab, ab_seeds, ab_variants);
    if (sc_tsne->parsed()) return cmd_tsne(g, ts_run, ts_data, ts_out, ts_input, ts_perp, ts_iter, rc);
    if (sc_pred->parsed()) return cmd_predict(g, pr_run, pr_data, pr_out);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsageError;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kNumericError;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kInternalError;
  }
  return kInternalError;
}
