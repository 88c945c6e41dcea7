#include "vipeeg/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

namespace vipeeg {

std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::Full: return "full";
    case Variant::NoCentral: return "no_central";
    case Variant::NoPretrain: return "no_pretrain";
    case Variant::NoEeg2Img: return "no_eeg2img";
  }
  return "?";
}

Variant parse_variant(std::string_view s) {
  for (auto v : all_variants())
    if (variant_name(v) == s) return v;
  throw ConfigError("unknown variant '" + std::string(s) + "' (expected full, no_central, no_pretrain, no_eeg2img)");
}

std::vector<Variant> all_variants() {
  return {Variant::Full, Variant::NoCentral, Variant::NoPretrain, Variant::NoEeg2Img};
}

VariantSpec build_variant(Variant tag, const ModelConfig& base) {
  VariantSpec v{tag, base, true};
  v.model.central_selection = true;
  v.model.embedding.kind = EmbeddingKind::Learnable;
  switch (tag) {
    case Variant::Full: break;
    case Variant::NoCentral: v.model.central_selection = false; break;
    case Variant::NoPretrain: v.pretrained = false; break;
    case Variant::NoEeg2Img: v.model.embedding.kind = EmbeddingKind::FixedReshape; break;
  }
  return v;
}

// ---------------------------------------------------------------- pretext

std::vector<PretextSample> pretext_dataset(const PretextConfig& cfg, int split) {
  const int n = split == 0 ? cfg.n_train : cfg.n_test;
  std::vector<PretextSample> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    Rng rng(derive_seed(cfg.seed, 0x9a7eULL, static_cast<std::uint64_t>(split), static_cast<std::uint64_t>(i)));
    auto& s = out[static_cast<std::size_t>(i)];
    s.label = static_cast<int>(uniform_int(rng, 0, kPretextClasses - 1));
    const double theta = M_PI * s.label / kPretextClasses;
    const double freq = uniform(rng, 0.08, 0.2);
    const double phase = uniform(rng, 0, 2 * M_PI);
    const double amp = uniform(rng, 60, 120);
    const double ct = std::cos(theta), st = std::sin(theta);
    s.image = Tensor3(3, cfg.height, cfg.width);
    for (int c = 0; c < 3; ++c) {
      const double gain = uniform(rng, 0.5, 1.0);
      for (int y = 0; y < cfg.height; ++y)
        for (int x = 0; x < cfg.width; ++x) {
          const double v = 127.5 + amp * gain * std::cos(2 * M_PI * freq * (x * ct + y * st) + phase) +
                           cfg.noise * normal(rng);
          s.image.at(c, y, x) = std::clamp(v, 0.0, 255.0);
        }
    }
  }
  return out;
}

namespace {

// Logits of backbone + global average pool + dense; fills the trace.
std::vector<double> probe_forward(const BackboneSpec& spec, const std::vector<ConvParams>& bb, const DenseParams& head,
                                  const Tensor3& img, BackboneTrace& trace, std::vector<double>& pooled) {
  const Tensor3& f = backbone_forward(spec, bb, img, trace);
  pooled.assign(static_cast<std::size_t>(f.c), 0.0);
  const double inv = 1.0 / (static_cast<double>(f.h) * f.w);
  for (int c = 0; c < f.c; ++c) {
    const double* p = f.plane(c);
    pooled[static_cast<std::size_t>(c)] = std::accumulate(p, p + static_cast<std::ptrdiff_t>(f.h) * f.w, 0.0) * inv;
  }
  std::vector<double> logits(head.b.begin(), head.b.end());
  for (int i = 0; i < head.in; ++i)
    for (int j = 0; j < head.out; ++j)
      logits[static_cast<std::size_t>(j)] += pooled[static_cast<std::size_t>(i)] * head.w[static_cast<std::size_t>(i * head.out + j)];
  return logits;
}

double pretext_accuracy(const BackboneSpec& spec, const std::vector<ConvParams>& bb, const DenseParams& head,
                        const std::vector<PretextSample>& data) {
  BackboneTrace trace;
  std::vector<double> pooled;
  long correct = 0;
  for (const auto& s : data) {
    const auto logits = probe_forward(spec, bb, head, s.image, trace, pooled);
    const auto best = std::max_element(logits.begin(), logits.end()) - logits.begin();
    correct += best == s.label;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace

PretrainResult pretrain_backbone(const BackboneSpec& spec, const PretextConfig& cfg) {
  const auto train = pretext_dataset(cfg, 0);
  const auto test = pretext_dataset(cfg, 1);
  if (train.empty() || test.empty()) throw ConfigError("pretrain: empty pretext split");
  PretrainResult res;
  res.backbone = init_backbone(spec, 3, derive_seed(cfg.seed, 0xbb0ULL));
  DenseParams head;
  head.in = spec.stages.back().out_channels;
  head.out = kPretextClasses;
  head.w.resize(static_cast<std::size_t>(head.in * head.out));
  head.b.assign(static_cast<std::size_t>(head.out), 0.0);
  {
    Rng rng(derive_seed(cfg.seed, 0xbb1ULL));
    const double limit = std::sqrt(6.0 / (head.in + head.out));
    for (double& w : head.w) w = uniform(rng, -limit, limit);
  }

  auto gb = res.backbone;
  DenseParams gh = head;
  std::vector<std::span<double>> params;
  std::vector<std::span<const double>> grads;
  std::vector<std::size_t> sizes;
  for (std::size_t l = 0; l < res.backbone.size(); ++l) {
    params.emplace_back(res.backbone[l].w);
    params.emplace_back(res.backbone[l].b);
    grads.emplace_back(gb[l].w);
    grads.emplace_back(gb[l].b);
  }
  params.emplace_back(head.w);
  params.emplace_back(head.b);
  grads.emplace_back(gh.w);
  grads.emplace_back(gh.b);
  for (const auto& p : params) sizes.push_back(p.size());
  Adam adam(sizes);

  BackboneTrace trace;
  std::vector<double> pooled;
  std::vector<std::size_t> order(train.size());
  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng srng(derive_seed(cfg.seed, 0xbb2ULL, static_cast<std::uint64_t>(epoch)));
    shuffle(order, srng);
    for (std::size_t b0 = 0; b0 < order.size(); b0 += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t bn = std::min(static_cast<std::size_t>(cfg.batch_size), order.size() - b0);
      for (auto& l : gb) {
        std::fill(l.w.begin(), l.w.end(), 0.0);
        std::fill(l.b.begin(), l.b.end(), 0.0);
      }
      std::fill(gh.w.begin(), gh.w.end(), 0.0);
      std::fill(gh.b.begin(), gh.b.end(), 0.0);
      for (std::size_t j = 0; j < bn; ++j) {
        const auto& s = train[order[b0 + j]];
        const auto logits = probe_forward(spec, res.backbone, head, s.image, trace, pooled);
        auto p = softmax(logits);
        p[static_cast<std::size_t>(s.label)] -= 1.0;
        const double scale = 1.0 / static_cast<double>(bn);
        std::vector<double> dpooled(pooled.size(), 0.0);
        for (int i = 0; i < head.in; ++i)
          for (int k = 0; k < head.out; ++k) {
            const auto wi = static_cast<std::size_t>(i * head.out + k);
            gh.w[wi] += scale * p[static_cast<std::size_t>(k)] * pooled[static_cast<std::size_t>(i)];
            dpooled[static_cast<std::size_t>(i)] += scale * p[static_cast<std::size_t>(k)] * head.w[wi];
          }
        for (int k = 0; k < head.out; ++k) gh.b[static_cast<std::size_t>(k)] += scale * p[static_cast<std::size_t>(k)];
        const Tensor3& f = trace.layers.back().a;
        Tensor3 df(f.c, f.h, f.w);
        const double inv = 1.0 / (static_cast<double>(f.h) * f.w);
        for (int c = 0; c < f.c; ++c) std::fill(df.plane(c), df.plane(c) + f.h * f.w, dpooled[static_cast<std::size_t>(c)] * inv);
        backbone_backward(spec, res.backbone, trace, df, gb, false);
      }
      adam.step(params, grads, cfg.lr);
    }
    res.epochs = epoch + 1;
    res.accuracy = pretext_accuracy(spec, res.backbone, head, test);
    if (res.accuracy >= cfg.target_accuracy) break;
  }
  if (res.accuracy < 0.6)
    throw NumericError("pretrain: pretext accuracy " + std::to_string(res.accuracy) + " after " +
                       std::to_string(res.epochs) + " epochs; the training loop is not learning");
  return res;
}

// ---------------------------------------------------------------- ablation

AblationTable run_ablation(const PreparedDataset& data, const DatasetManifest& manifest, const AblationConfig& cfg,
                           const std::function<void(const std::string&)>& progress) {
  if (cfg.seeds.empty()) throw ConfigError("ablation: need at least one seed");
  std::vector<Variant> variants = cfg.variants;
  if (std::find(variants.begin(), variants.end(), Variant::Full) == variants.end())
    variants.insert(variants.begin(), Variant::Full);

  std::vector<std::size_t> hq;
  for (std::size_t i = 0; i < data.samples.size(); ++i)
    if (data.samples[i].votes.total() >= cfg.cv.hq_min_votes) hq.push_back(i);
  if (hq.empty()) throw DataError("ablation: no high-quality samples to score");
  std::vector<std::string> patients;
  for (auto i : hq) patients.push_back(data.samples[i].patient_id);
  std::sort(patients.begin(), patients.end());
  patients.erase(std::unique(patients.begin(), patients.end()), patients.end());
  std::map<std::string, std::size_t> pidx;
  for (std::size_t p = 0; p < patients.size(); ++p) pidx[patients[p]] = p;

  AblationTable table;
  for (auto v : variants) {
    AblationRow row;
    row.variant = v;
    row.patient_kld.assign(patients.size(), 0.0);
    table.rows.push_back(row);
  }

  for (auto seed : cfg.seeds) {
    std::optional<PretrainResult> pre;
    for (auto& row : table.rows) {
      const auto spec = build_variant(row.variant, cfg.cv.model);
      if (spec.pretrained && !pre) {
        PretextConfig pc = cfg.pretext;
        pc.seed = derive_seed(seed, 0x9e7ULL);
        pre = pretrain_backbone(cfg.cv.model.backbone, pc);
      }
      CvConfig cv = cfg.cv;
      cv.model = spec.model;
      cv.seed = seed;
      const auto res = run_cv(data, manifest, cv, spec.pretrained ? &pre->backbone : nullptr);
      std::vector<double> sum(patients.size(), 0.0);
      std::vector<int> count(patients.size(), 0);
      double total = 0;
      for (auto i : hq) {
        const double k = kl_divergence(data.samples[i].label.p, res.oof[i].probs);
        total += k;
        const auto p = pidx.at(data.samples[i].patient_id);
        sum[p] += k;
        ++count[p];
      }
      row.seed_kld.push_back(total / static_cast<double>(hq.size()));
      for (std::size_t p = 0; p < patients.size(); ++p)
        row.patient_kld[p] += sum[p] / count[p] / static_cast<double>(cfg.seeds.size());
      if (progress) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "seed %llu variant %s: out-of-fold KLD %.4f",
                      static_cast<unsigned long long>(seed), std::string(variant_name(row.variant)).c_str(),
                      row.seed_kld.back());
        progress(buf);
      }
    }
  }
  const auto& full = table.rows.front().patient_kld;
  for (auto& row : table.rows) {
    row.mean_kld = std::accumulate(row.seed_kld.begin(), row.seed_kld.end(), 0.0) / static_cast<double>(row.seed_kld.size());
    const auto w = wilcoxon_rank_sum(row.patient_kld, full);
    row.statistic = w.statistic;
    row.p_value = w.p_two_sided;
  }
  return table;
}

// ---------------------------------------------------------------- t-SNE

TsneResult tsne(const Matrix& x, const TsneConfig& cfg) {
  const std::size_t n = x.rows(), d = x.cols();
  if (n < 10) throw ConfigError("tsne: need at least 10 points");
  for (double v : x.data())
    if (!std::isfinite(v)) throw DataError("tsne: non-finite input");
  if (!(cfg.perplexity > 0) || cfg.perplexity >= static_cast<double>(n - 1) / 3.0)
    throw ConfigError("tsne: perplexity must be positive and below (n - 1) / 3 = " +
                      std::to_string(static_cast<double>(n - 1) / 3.0));
  if (cfg.iterations <= cfg.exaggeration_iters) throw ConfigError("tsne: iterations must exceed the exaggeration phase");

  std::vector<double> D(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      double s = 0;
      for (std::size_t k = 0; k < d; ++k) {
        const double t = x(i, k) - x(j, k);
        s += t * t;
      }
      D[i * n + j] = D[j * n + i] = s;
    }

  // Conditional affinities with per-point bandwidth matched to the perplexity.
  std::vector<double> P(n * n, 0.0);
  const double target = std::log(cfg.perplexity);
  for (std::size_t i = 0; i < n; ++i) {
    double beta = 1.0, lo = 0.0, hi = std::numeric_limits<double>::infinity();
    const double* Di = D.data() + i * n;
    double* Pi = P.data() + i * n;
    double dmin = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) dmin = std::min(dmin, Di[j]);
    for (int it = 0; it < 200; ++it) {
      double sum = 0, dot = 0;
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) {
          Pi[j] = 0;
          continue;
        }
        Pi[j] = std::exp(-beta * (Di[j] - dmin));
        sum += Pi[j];
        dot += Pi[j] * (Di[j] - dmin);
      }
      const double H = std::log(sum) + beta * dot / sum;
      for (std::size_t j = 0; j < n; ++j) Pi[j] /= sum;
      const double diff = H - target;
      if (std::abs(diff) < 1e-6) break;
      if (diff > 0) {
        lo = beta;
        beta = std::isinf(hi) ? beta * 2 : 0.5 * (beta + hi);
      } else {
        hi = beta;
        beta = 0.5 * (beta + lo);
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double v = std::max((P[i * n + j] + P[j * n + i]) / (2.0 * static_cast<double>(n)), 1e-12);
      P[i * n + j] = P[j * n + i] = v;
    }

  TsneResult res;
  res.coords = Matrix(n, 2);
  Rng rng(derive_seed(cfg.seed, 0x75eULL));
  for (double& v : res.coords.data()) v = 1e-4 * normal(rng);
  auto recenter = [&] {
    for (std::size_t k = 0; k < 2; ++k) {
      double m = 0;
      for (std::size_t i = 0; i < n; ++i) m += res.coords(i, k);
      m /= static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i) res.coords(i, k) -= m;
    }
  };
  recenter();

  std::vector<double> num(n * n), update(n * 2, 0.0), gains(n * 2, 1.0), grad(n * 2);
  for (int it = 0;; ++it) {
    double Z = 0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) {
        const double dx = res.coords(i, 0) - res.coords(j, 0), dy = res.coords(i, 1) - res.coords(j, 1);
        const double q = 1.0 / (1.0 + dx * dx + dy * dy);
        num[i * n + j] = num[j * n + i] = q;
        Z += 2 * q;
      }
    if (it > 0) {
      double kl = 0;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          if (i == j) continue;
          const double p = P[i * n + j];
          kl += p * std::log(p / std::max(num[i * n + j] / Z, 1e-12));
        }
      res.objective.push_back(kl);
    }
    if (it == cfg.iterations) break;
    const double exag = it < cfg.exaggeration_iters ? cfg.exaggeration : 1.0;
    const double momentum = it < cfg.exaggeration_iters ? 0.5 : 0.8;
    std::fill(grad.begin(), grad.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j) continue;
        const double q = num[i * n + j];
        const double m = 4.0 * (exag * P[i * n + j] - std::max(q / Z, 1e-12)) * q;
        grad[i * 2] += m * (res.coords(i, 0) - res.coords(j, 0));
        grad[i * 2 + 1] += m * (res.coords(i, 1) - res.coords(j, 1));
      }
    for (std::size_t k = 0; k < grad.size(); ++k) {
      const bool same = (grad[k] > 0) == (update[k] > 0);
      gains[k] = std::max(0.01, same ? gains[k] * 0.8 : gains[k] + 0.2);
      update[k] = momentum * update[k] - cfg.learning_rate * gains[k] * grad[k];
      res.coords.data()[k] += update[k];
    }
    recenter();
  }
  return res;
}

// ---------------------------------------------------------------- report

namespace {

std::string fmt(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

const char* const kClassColors[kNumClasses] = {"#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e", "#7f7f7f"};

class Svg {
 public:
  Svg(int w, int h) {
    out_ << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w
         << "\" height=\"" << h << "\" viewBox=\"0 0 " << w << ' ' << h << "\">\n"
         << "<rect x=\"0\" y=\"0\" width=\"" << w << "\" height=\"" << h << "\" fill=\"white\"/>\n";
  }
  void line(double x1, double y1, double x2, double y2, const std::string& stroke, double width = 1) {
    out_ << "<line x1=\"" << n(x1) << "\" y1=\"" << n(y1) << "\" x2=\"" << n(x2) << "\" y2=\"" << n(y2)
         << "\" stroke=\"" << stroke << "\" stroke-width=\"" << n(width) << "\"/>\n";
  }
  void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& stroke) {
    out_ << "<polyline fill=\"none\" stroke=\"" << stroke << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < pts.size(); ++i) out_ << (i ? " " : "") << n(pts[i].first) << ',' << n(pts[i].second);
    out_ << "\"/>\n";
  }
  void rect(double x, double y, double w, double h, const std::string& fill) {
    out_ << "<rect x=\"" << n(x) << "\" y=\"" << n(y) << "\" width=\"" << n(w) << "\" height=\"" << n(h)
         << "\" fill=\"" << fill << "\"/>\n";
  }
  void circle(double x, double y, double r, const std::string& fill) {
    out_ << "<circle cx=\"" << n(x) << "\" cy=\"" << n(y) << "\" r=\"" << n(r) << "\" fill=\"" << fill << "\"/>\n";
  }
  void text(double x, double y, const std::string& s, int size = 12, const char* anchor = "start") {
    out_ << "<text x=\"" << n(x) << "\" y=\"" << n(y) << "\" font-family=\"sans-serif\" font-size=\"" << size
         << "\" text-anchor=\"" << anchor << "\">" << escape(s) << "</text>\n";
  }
  std::string str() const { return out_.str() + "</svg>\n"; }

 private:
  static std::string n(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
  }
  static std::string escape(const std::string& s) {
    std::string o;
    for (char c : s) {
      switch (c) {
        case '&': o += "&amp;"; break;
        case '<': o += "&lt;"; break;
        case '>': o += "&gt;"; break;
        case '"': o += "&quot;"; break;
        default: o += c;
      }
    }
    return o;
  }
  std::ostringstream out_;
};

void write_text(const std::filesystem::path& path, const std::string& s) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << s;
  if (!out) throw DataError("write failed: " + path.string());
}

std::string csv_head(const std::string& comment) { return comment.empty() ? "" : "# " + comment + "\n"; }

std::string heat(double f) {
  const int v = static_cast<int>(std::lround(255 - 200 * std::clamp(f, 0.0, 1.0)));
  char buf[16];
  std::snprintf(buf, sizeof buf, "#%02x%02xff", v, v);
  return buf;
}

void roc_files(const std::filesystem::path& dir, const EvalReport& e, const std::string& comment) {
  bool any = false;
  for (const auto& r : e.roc) any = any || r.points.size() > 1;
  if (!any) return;
  Svg svg(520, 460);
  const double x0 = 60, y0 = 400, side = 340;
  svg.rect(x0, y0 - side, side, side, "#f7f7f7");
  svg.line(x0, y0, x0 + side, y0 - side, "#bbbbbb");
  svg.text(x0 + side / 2, y0 + 40, "false positive rate", 12, "middle");
  svg.text(20, y0 - side / 2, "TPR", 12, "middle");
  for (int t = 0; t <= 4; ++t) {
    svg.text(x0 + side * t / 4, y0 + 16, fmt(t / 4.0), 10, "middle");
    svg.text(x0 - 6, y0 - side * t / 4 + 4, fmt(t / 4.0), 10, "end");
  }
  int legend = 0;
  for (int c = 0; c < kNumClasses; ++c) {
    const auto& roc = e.roc[c];
    if (roc.points.size() <= 1) continue;
    const auto key = std::string(class_key(class_from_index(c)));
    std::string csv = csv_head(comment) + "threshold,fpr,tpr\n";
    std::vector<std::pair<double, double>> pts;
    for (const auto& p : roc.points) {
      csv += fmt(p.threshold) + "," + fmt(p.fpr) + "," + fmt(p.tpr) + "\n";
      pts.emplace_back(x0 + side * p.fpr, y0 - side * p.tpr);
    }
    write_text(dir / ("roc_" + key + ".csv"), csv);
    svg.polyline(pts, kClassColors[c]);
    if (e.optimal_thresholds[c]) {
      const double t = *e.optimal_thresholds[c];
      const RocPoint* at = &roc.points.front();
      for (const auto& p : roc.points)
        if (p.threshold > t) at = &p;
      svg.circle(x0 + side * at->fpr, y0 - side * at->tpr, 4, kClassColors[c]);
    }
    svg.rect(x0 + side + 20, 70 + 18 * legend, 10, 10, kClassColors[c]);
    std::string label = std::string(class_name(class_from_index(c)));
    if (e.auroc[c]) {
      char buf[32];
      std::snprintf(buf, sizeof buf, " %.3f", *e.auroc[c]);
      label += buf;
    }
    svg.text(x0 + side + 36, 79 + 18 * legend, label, 11);
    ++legend;
  }
  svg.text(x0 + side / 2, 40, "One-vs-rest ROC (dots: Youden-optimal thresholds)", 13, "middle");
  write_text(dir / "roc.svg", svg.str());
}

void confusion_files(const std::filesystem::path& dir, const EvalReport& e, const std::string& comment) {
  std::string csv = csv_head(comment) + "consensus";
  for (int c = 0; c < kNumClasses; ++c) csv += "," + std::string(class_key(class_from_index(c)));
  csv += "\n";
  for (int r = 0; r < kNumClasses; ++r) {
    csv += std::string(class_key(class_from_index(r)));
    for (int c = 0; c < kNumClasses; ++c) csv += "," + std::to_string(e.confusion.matrix[r][c]);
    csv += "\n";
  }
  write_text(dir / "confusion.csv", csv);

  Svg svg(480, 460);
  const double x0 = 110, y0 = 80, cell = 55;
  for (int r = 0; r < kNumClasses; ++r) {
    long row = 0;
    for (int c = 0; c < kNumClasses; ++c) row += e.confusion.matrix[r][c];
    svg.text(x0 - 8, y0 + cell * r + cell / 2 + 4, std::string(class_name(class_from_index(r))), 11, "end");
    for (int c = 0; c < kNumClasses; ++c) {
      const long v = e.confusion.matrix[r][c];
      svg.rect(x0 + cell * c, y0 + cell * r, cell - 1, cell - 1, heat(row ? static_cast<double>(v) / row : 0.0));
      svg.text(x0 + cell * c + cell / 2, y0 + cell * r + cell / 2 + 4, std::to_string(v), 11, "middle");
    }
  }
  for (int c = 0; c < kNumClasses; ++c)
    svg.text(x0 + cell * c + cell / 2, y0 - 8, std::string(class_name(class_from_index(c))), 11, "middle");
  svg.text(240, 30, "Confusion matrix (rows: consensus, columns: predicted)", 13, "middle");
  write_text(dir / "confusion.svg", svg.str());
}

void tsne_files(const std::filesystem::path& dir, const Matrix& y, const std::vector<ClassId>& labels,
                const std::string& comment) {
  std::string csv = csv_head(comment) + "index,x,y,consensus\n";
  for (std::size_t i = 0; i < y.rows(); ++i)
    csv += std::to_string(i) + "," + fmt(y(i, 0)) + "," + fmt(y(i, 1)) + "," +
           (i < labels.size() ? std::string(class_key(labels[i])) : std::string("NA")) + "\n";
  write_text(dir / "tsne.csv", csv);

  double lo[2] = {0, 0}, hi[2] = {1, 1};
  if (y.rows() > 0)
    for (int k = 0; k < 2; ++k) {
      lo[k] = hi[k] = y(0, static_cast<std::size_t>(k));
      for (std::size_t i = 0; i < y.rows(); ++i) {
        lo[k] = std::min(lo[k], y(i, static_cast<std::size_t>(k)));
        hi[k] = std::max(hi[k], y(i, static_cast<std::size_t>(k)));
      }
      if (hi[k] == lo[k]) hi[k] = lo[k] + 1;
    }
  Svg svg(560, 480);
  const double x0 = 30, y0 = 450, side = 400;
  for (std::size_t i = 0; i < y.rows(); ++i) {
    const double px = x0 + side * (y(i, 0) - lo[0]) / (hi[0] - lo[0]);
    const double py = y0 - side * (y(i, 1) - lo[1]) / (hi[1] - lo[1]);
    svg.circle(px, py, 2.5, i < labels.size() ? kClassColors[index_of(labels[i])] : "#000000");
  }
  for (int c = 0; c < kNumClasses; ++c) {
    svg.rect(450, 60 + 18 * c, 10, 10, kClassColors[c]);
    svg.text(466, 69 + 18 * c, std::string(class_name(class_from_index(c))), 11);
  }
  svg.text(230, 30, "t-SNE of model embeddings, coloured by consensus", 13, "middle");
  write_text(dir / "tsne.svg", svg.str());
}

void ablation_files(const std::filesystem::path& dir, const AblationTable& t, const std::string& comment) {
  std::string csv = csv_head(comment) + "variant,mean_kld,rank_sum,p_value";
  const std::size_t n_seeds = t.rows.empty() ? 0 : t.rows.front().seed_kld.size();
  for (std::size_t s = 0; s < n_seeds; ++s) csv += ",kld_run" + std::to_string(s);
  csv += "\n";
  for (const auto& r : t.rows) {
    csv += std::string(variant_name(r.variant)) + "," + fmt(r.mean_kld) + "," + fmt(r.statistic) + "," + fmt(r.p_value);
    for (double v : r.seed_kld) csv += "," + fmt(v);
    csv += "\n";
  }
  write_text(dir / "ablation.csv", csv);

  double top = 0;
  for (const auto& r : t.rows) top = std::max(top, r.mean_kld);
  if (top <= 0) top = 1;
  Svg svg(520, 360);
  const double x0 = 60, y0 = 300, h = 230, bw = 70;
  svg.line(x0, y0, x0 + 110 * static_cast<double>(t.rows.size()), y0, "#333333");
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& r = t.rows[i];
    const double bh = h * r.mean_kld / top;
    const double x = x0 + 20 + 110 * static_cast<double>(i);
    svg.rect(x, y0 - bh, bw, bh, i == 0 ? "#1f77b4" : "#aec7e8");
    svg.text(x + bw / 2, y0 + 16, std::string(variant_name(r.variant)), 11, "middle");
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3f", r.mean_kld);
    svg.text(x + bw / 2, y0 - bh - 18, buf, 11, "middle");
    if (i > 0) {
      std::snprintf(buf, sizeof buf, "p=%.3g", r.p_value);
      svg.text(x + bw / 2, y0 - bh - 5, buf, 10, "middle");
    }
  }
  svg.text(260, 30, "Out-of-fold mean KLD by variant (lower is better)", 13, "middle");
  write_text(dir / "ablation.svg", svg.str());
}

}  // namespace

void emit_report(const std::filesystem::path& dir, const ReportInputs& in) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw DataError("cannot create " + dir.string() + ": " + ec.message());
  nlohmann::json report = in.extra;
  if (in.eval) {
    report.update(to_json(*in.eval));
    roc_files(dir, *in.eval, in.comment);
    confusion_files(dir, *in.eval, in.comment);
  }
  if (in.tsne_coords) tsne_files(dir, *in.tsne_coords, in.tsne_labels, in.comment);
  if (in.ablation) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : in.ablation->rows)
      rows.push_back({{"variant", variant_name(r.variant)},
                      {"mean_kld", r.mean_kld},
                      {"run_kld", r.seed_kld},
                      {"rank_sum", r.statistic},
                      {"p_value", r.p_value}});
    report["ablation"] = rows;
    ablation_files(dir, *in.ablation, in.comment);
  }
  write_text(dir / "report.json", report.dump(2) + "\n");
}

}  // namespace vipeeg
