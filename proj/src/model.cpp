#include "vipeeg/model.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace vipeeg {

namespace {

constexpr double kProbFloor = 1e-15;

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Four independent accumulators so the loop vectorizes without reassociation flags.
inline double dot(const double* a, const double* b, std::size_t n) {
  double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

inline void axpy(double* y, double a, const double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

int out_dim(int in, int stride) { return (in - 1) / stride + 1; }

void im2col(const Tensor3& in, int stride, int ho, int wo, std::vector<double>& cols) {
  const std::size_t p = static_cast<std::size_t>(ho) * wo;
  cols.assign(static_cast<std::size_t>(in.c) * 9 * p, 0.0);
  for (int c = 0; c < in.c; ++c) {
    const double* src = in.plane(c);
    for (int ky = 0; ky < 3; ++ky)
      for (int kx = 0; kx < 3; ++kx) {
        double* dst = cols.data() + (static_cast<std::size_t>(c) * 9 + ky * 3 + kx) * p;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride + ky - 1;
          if (iy < 0 || iy >= in.h) continue;
          const double* srow = src + static_cast<std::size_t>(iy) * in.w;
          double* drow = dst + static_cast<std::size_t>(oy) * wo;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride + kx - 1;
            if (ix >= 0 && ix < in.w) drow[ox] = srow[ix];
          }
        }
      }
  }
}

void col2im(const std::vector<double>& dcols, int stride, int ho, int wo, Tensor3& din) {
  const std::size_t p = static_cast<std::size_t>(ho) * wo;
  for (int c = 0; c < din.c; ++c) {
    double* dst = din.plane(c);
    for (int ky = 0; ky < 3; ++ky)
      for (int kx = 0; kx < 3; ++kx) {
        const double* src = dcols.data() + (static_cast<std::size_t>(c) * 9 + ky * 3 + kx) * p;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride + ky - 1;
          if (iy < 0 || iy >= din.h) continue;
          double* drow = dst + static_cast<std::size_t>(iy) * din.w;
          const double* srow = src + static_cast<std::size_t>(oy) * wo;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride + kx - 1;
            if (ix >= 0 && ix < din.w) drow[ix] += srow[ox];
          }
        }
      }
  }
}

std::vector<double> dropout_mask(std::size_t n, double rate, std::uint64_t seed) {
  std::vector<double> m(n, 1.0);
  if (rate <= 0) return m;
  Rng rng(derive_seed(seed, 0xd70ULL));
  const double keep_scale = 1.0 / (1.0 - rate);
  for (auto& v : m) v = uniform01(rng) < rate ? 0.0 : keep_scale;
  return m;
}

}  // namespace

void validate_model_config(const ModelConfig& cfg) {
  const auto& e = cfg.embedding;
  if (cfg.n_channels < 1) throw ConfigError("model: n_channels must be >= 1");
  if (e.groups < 1 || e.kernels < 1 || e.length < 1 || e.stride < 1)
    throw ConfigError("model: embedding dimensions must be >= 1");
  if (e.kind == EmbeddingKind::FixedReshape && e.kernels > e.length)
    throw ConfigError("model: fixed reshape needs kernels <= kernel length");
  if (cfg.backbone.stages.empty()) throw ConfigError("model: backbone needs at least one stage");
  for (const auto& s : cfg.backbone.stages)
    if (s.out_channels < 1 || s.stride < 1) throw ConfigError("model: invalid backbone stage");
  if (!(cfg.dropout >= 0 && cfg.dropout < 1)) throw ConfigError("model: dropout must be in [0, 1)");
}

std::vector<NamedTensor> ModelParams::tensors() {
  std::vector<NamedTensor> out;
  out.push_back({"embedding.w", embedding.w, embedding.spec.kind == EmbeddingKind::Learnable});
  for (std::size_t i = 0; i < backbone.size(); ++i) {
    out.push_back({"backbone." + std::to_string(i) + ".w", backbone[i].w, true});
    out.push_back({"backbone." + std::to_string(i) + ".b", backbone[i].b, true});
  }
  out.push_back({"head.w", head.w, true});
  out.push_back({"head.b", head.b, true});
  return out;
}

std::vector<std::span<const double>> ModelParams::tensors() const {
  std::vector<std::span<const double>> out;
  out.emplace_back(embedding.w);
  for (const auto& l : backbone) {
    out.emplace_back(l.w);
    out.emplace_back(l.b);
  }
  out.emplace_back(head.w);
  out.emplace_back(head.b);
  return out;
}

std::vector<std::string> ModelParams::tensor_names() const {
  std::vector<std::string> out{"embedding.w"};
  for (std::size_t i = 0; i < backbone.size(); ++i) {
    out.push_back("backbone." + std::to_string(i) + ".w");
    out.push_back("backbone." + std::to_string(i) + ".b");
  }
  out.push_back("head.w");
  out.push_back("head.b");
  return out;
}

ModelParams ModelParams::zeros_like() const {
  ModelParams z = *this;
  z.zero();
  return z;
}

void ModelParams::zero() {
  for (auto& t : tensors()) std::fill(t.data.begin(), t.data.end(), 0.0);
}

std::size_t ModelParams::trainable_count() const {
  auto& self = const_cast<ModelParams&>(*this);
  std::size_t n = 0;
  for (const auto& t : self.tensors())
    if (t.trainable) n += t.data.size();
  return n;
}

bool ModelParams::operator==(const ModelParams& o) const {
  const auto a = tensors();
  const auto b = o.tensors();
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!std::equal(a[i].begin(), a[i].end(), b[i].begin(), b[i].end())) return false;
  return embedding.spec.kind == o.embedding.spec.kind;
}

std::vector<double> project_simplex(std::span<const double> v) {
  std::vector<double> w(v.begin(), v.end());
  project_simplex_inplace(w);
  return w;
}

void project_simplex_inplace(std::span<double> v) {
  if (v.empty()) return;
  for (double x : v)
    if (!std::isfinite(x)) throw NumericError("project_simplex: non-finite input");
  // Feasible points are left bit-identical.
  if (*std::min_element(v.begin(), v.end()) >= 0 && std::abs(std::accumulate(v.begin(), v.end(), 0.0) - 1.0) <= 1e-12)
    return;
  std::vector<double> u(v.begin(), v.end());
  std::sort(u.begin(), u.end(), std::greater<>());
  double css = 0, theta = 0;
  for (std::size_t j = 0; j < u.size(); ++j) {
    css += u[j];
    const double t = (css - 1.0) / static_cast<double>(j + 1);
    if (u[j] - t > 0) theta = t;
  }
  for (double& x : v) x = std::max(x - theta, 0.0);
}

void project_embedding(Eeg2ImageParams& p) {
  if (p.spec.kind != EmbeddingKind::Learnable) return;
  for (int g = 0; g < p.spec.groups; ++g)
    for (int k = 0; k < p.spec.kernels; ++k) project_simplex_inplace(p.kernel(g, k));
}

Eeg2ImageParams init_embedding(const EmbeddingSpec& spec, std::uint64_t /*seed*/) {
  Eeg2ImageParams p;
  p.spec = spec;
  p.w.assign(static_cast<std::size_t>(spec.groups) * spec.kernels * spec.length, 0.0);
  const double uniform_part = 1.0 / spec.length;
  for (int g = 0; g < spec.groups; ++g)
    for (int k = 0; k < spec.kernels; ++k) {
      auto w = p.kernel(g, k);
      const int hot = k % spec.length;
      for (int j = 0; j < spec.length; ++j) {
        const double onehot = j == hot ? 1.0 : 0.0;
        w[static_cast<std::size_t>(j)] =
            spec.kind == EmbeddingKind::Learnable ? 0.5 * onehot + 0.5 * uniform_part : onehot;
      }
      if (spec.kind == EmbeddingKind::Learnable) project_simplex_inplace(w);
    }
  return p;
}

std::vector<ConvParams> init_backbone(const BackboneSpec& spec, int in_channels, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0xbac0ULL));
  std::vector<ConvParams> layers;
  int in_c = in_channels;
  for (const auto& s : spec.stages) {
    ConvParams l;
    l.in_channels = in_c;
    l.out_channels = s.out_channels;
    l.stride = s.stride;
    l.w.resize(static_cast<std::size_t>(s.out_channels) * in_c * 9);
    l.b.assign(static_cast<std::size_t>(s.out_channels), 0.0);
    const double std_dev = std::sqrt(2.0 / (in_c * 9.0));
    for (auto& w : l.w) w = std_dev * normal(rng);
    layers.push_back(std::move(l));
    in_c = s.out_channels;
  }
  return layers;
}

ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
  validate_model_config(cfg);
  ModelParams p;
  p.embedding = init_embedding(cfg.embedding, seed);
  p.backbone = init_backbone(cfg.backbone, cfg.embedding.groups, seed);
  const int feat = cfg.backbone.stages.back().out_channels;
  p.head.in = feat;
  p.head.out = kNumClasses;
  p.head.w.resize(static_cast<std::size_t>(feat) * kNumClasses);
  p.head.b.assign(kNumClasses, 0.0);
  Rng rng(derive_seed(seed, 0x4eadULL));
  const double limit = std::sqrt(6.0 / (feat + kNumClasses));
  for (auto& w : p.head.w) w = uniform(rng, -limit, limit);
  return p;
}

int image_row(const EmbeddingSpec& spec, int n_channels, int channel, int kernel) {
  return spec.layout == RowLayout::ChannelMajor ? channel * spec.kernels + kernel
                                                : kernel * n_channels + channel;
}

Tensor3 eeg_to_image(const Matrix& x, const Eeg2ImageParams& p) {
  Tensor3 img;
  eeg_to_image_into(x, p, img);
  return img;
}

void eeg_to_image_into(const Matrix& x, const Eeg2ImageParams& p, Tensor3& img) {
  const auto& s = p.spec;
  if (x.cols() % static_cast<std::size_t>(s.stride) != 0)
    throw DataError("eeg_to_image: length " + std::to_string(x.cols()) + " is not divisible by stride " +
                    std::to_string(s.stride));
  const int C = static_cast<int>(x.rows());
  const int W = static_cast<int>(x.cols()) / s.stride;
  if (static_cast<std::size_t>(W - 1) * s.stride + s.length > x.cols())
    throw DataError("eeg_to_image: kernel length exceeds the final stride window");
  img.reset(s.groups, C * s.kernels, W);
  for (int g = 0; g < s.groups; ++g)
    for (int c = 0; c < C; ++c) {
      const auto row_in = x.row(static_cast<std::size_t>(c));
      for (int k = 0; k < s.kernels; ++k) {
        const auto w = p.kernel(g, k);
        double* out = img.plane(g) + static_cast<std::size_t>(image_row(s, C, c, k)) * W;
        for (int t = 0; t < W; ++t)
          out[t] = dot(w.data(), row_in.data() + static_cast<std::size_t>(t) * s.stride,
                       static_cast<std::size_t>(s.length));
      }
    }
}

ColumnRange central_columns(int width) {
  if (width < 5)
    throw DataError("central selection needs a feature map at least 5 columns wide, got " +
                    std::to_string(width));
  return {(2 * width) / 5, (width + 4) / 5};
}

Tensor3 central_select(const Tensor3& fmap) {
  const auto r = central_columns(fmap.w);
  Tensor3 out(fmap.c, fmap.h, r.count);
  for (int c = 0; c < fmap.c; ++c)
    for (int y = 0; y < fmap.h; ++y)
      for (int x = 0; x < r.count; ++x) out.at(c, y, x) = fmap.at(c, y, r.begin + x);
  return out;
}

std::pair<int, int> backbone_output_hw(const BackboneSpec& spec, int h, int w) {
  for (const auto& s : spec.stages) {
    h = out_dim(h, s.stride);
    w = out_dim(w, s.stride);
  }
  return {h, w};
}

const Tensor3& backbone_forward(const BackboneSpec& spec, const std::vector<ConvParams>& layers,
                                const Tensor3& image, BackboneTrace& trace) {
  trace.layers.resize(layers.size());
  trace.stem = image;
  for (double& v : trace.stem.v) v = (v - spec.input_offset) * spec.input_scale;
  const Tensor3* in = &trace.stem;
  for (std::size_t li = 0; li < layers.size(); ++li) {
    const auto& L = layers[li];
    auto& tr = trace.layers[li];
    if (in->c != L.in_channels) throw ConfigError("backbone: channel mismatch at layer " + std::to_string(li));
    tr.in_c = in->c;
    tr.in_h = in->h;
    tr.in_w = in->w;
    const int ho = out_dim(in->h, L.stride), wo = out_dim(in->w, L.stride);
    im2col(*in, L.stride, ho, wo, tr.cols);
    const std::size_t P = static_cast<std::size_t>(ho) * wo;
    const std::size_t K = static_cast<std::size_t>(L.in_channels) * 9;
    tr.z.reset(L.out_channels, ho, wo);
    for (int o = 0; o < L.out_channels; ++o) {
      double* z = tr.z.plane(o);
      std::fill(z, z + P, L.b[static_cast<std::size_t>(o)]);
    }
    cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, L.out_channels, static_cast<int>(P), static_cast<int>(K), 1.0,
                L.w.data(), static_cast<int>(K), tr.cols.data(), static_cast<int>(P), 1.0, tr.z.v.data(), static_cast<int>(P));
    tr.a = tr.z;
    for (double& v : tr.a.v) v *= sigmoid(v);
    in = &tr.a;
  }
  return trace.layers.back().a;
}

Tensor3 backbone_backward(const BackboneSpec& spec, const std::vector<ConvParams>& layers,
                          const BackboneTrace& trace, const Tensor3& d_out,
                          std::vector<ConvParams>& grads, bool want_input_grad) {
  thread_local Tensor3 da, dz, din;
  thread_local std::vector<double> dcols;
  da = d_out;
  for (std::size_t li = layers.size(); li-- > 0;) {
    const auto& L = layers[li];
    const auto& tr = trace.layers[li];
    auto& G = grads[li];
    const std::size_t P = static_cast<std::size_t>(tr.z.h) * tr.z.w;
    const std::size_t K = static_cast<std::size_t>(L.in_channels) * 9;
    // d/dz [z * sigmoid(z)] = s * (1 + z * (1 - s))
    dz = da;
    for (std::size_t i = 0; i < dz.v.size(); ++i) {
      const double z = tr.z.v[i];
      const double s = sigmoid(z);
      dz.v[i] *= s * (1.0 + z * (1.0 - s));
    }
    for (int o = 0; o < L.out_channels; ++o) {
      const double* dzo = dz.plane(o);
      double bsum = 0;
      for (std::size_t p = 0; p < P; ++p) bsum += dzo[p];
      G.b[static_cast<std::size_t>(o)] += bsum;
    }
    cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, L.out_channels, static_cast<int>(K), static_cast<int>(P), 1.0,
                dz.v.data(), static_cast<int>(P), tr.cols.data(), static_cast<int>(P), 1.0, G.w.data(), static_cast<int>(K));
    if (li == 0 && !want_input_grad) break;
    dcols.resize(K * P);
    cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, static_cast<int>(K), static_cast<int>(P), L.out_channels, 1.0,
                L.w.data(), static_cast<int>(K), dz.v.data(), static_cast<int>(P), 0.0, dcols.data(), static_cast<int>(P));
    din.reset(tr.in_c, tr.in_h, tr.in_w);
    col2im(dcols, L.stride, tr.z.h, tr.z.w, din);
    std::swap(da, din);
  }
  if (!want_input_grad) return {};
  for (double& v : da.v) v *= spec.input_scale;
  return da;
}

ClassVector softmax6(std::span<const double> logits) {
  auto s = softmax(logits);
  ClassVector p{};
  std::copy_n(s.begin(), kNumClasses, p.begin());
  return p;
}

std::vector<double> softmax(std::span<const double> logits) {
  const double m = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double sum = 0;
  for (std::size_t i = 0; i < p.size(); ++i) sum += (p[i] = std::exp(logits[i] - m));
  for (double& v : p) v /= sum;
  return p;
}

double kl_divergence(const ClassVector& y, const ClassVector& p) {
  double s = 0;
  for (int i = 0; i < kNumClasses; ++i)
    if (y[i] > 0) s += y[i] * (std::log(y[i]) - std::log(std::max(p[i], kProbFloor)));
  return s;
}

namespace {

struct Pass {
  Tensor3 image;
  BackboneTrace trace;
  ColumnRange cols;
  std::vector<double> pooled, mask, hidden, logits;
  ClassVector probs{};
};

void run_forward(const ModelConfig& cfg, const ModelParams& params, const Matrix& x, Mode mode,
                 std::uint64_t dropout_seed, Pass& ps) {
  if (x.rows() != static_cast<std::size_t>(cfg.n_channels))
    throw DataError("forward: expected " + std::to_string(cfg.n_channels) + " channels, got " +
                    std::to_string(x.rows()));
  eeg_to_image_into(x, params.embedding, ps.image);
  const Tensor3& fmap = backbone_forward(cfg.backbone, params.backbone, ps.image, ps.trace);
  ps.cols = cfg.central_selection ? central_columns(fmap.w) : ColumnRange{0, fmap.w};
  const int C = fmap.c;
  ps.pooled.assign(static_cast<std::size_t>(C), 0.0);
  const double inv = 1.0 / (static_cast<double>(fmap.h) * ps.cols.count);
  for (int c = 0; c < C; ++c) {
    double s = 0;
    for (int y = 0; y < fmap.h; ++y) {
      const double* row = fmap.plane(c) + static_cast<std::size_t>(y) * fmap.w + ps.cols.begin;
      for (int t = 0; t < ps.cols.count; ++t) s += row[t];
    }
    ps.pooled[static_cast<std::size_t>(c)] = s * inv;
  }
  ps.mask = mode == Mode::Train ? dropout_mask(ps.pooled.size(), cfg.dropout, dropout_seed)
                                : std::vector<double>(ps.pooled.size(), 1.0);
  ps.hidden.resize(ps.pooled.size());
  for (std::size_t i = 0; i < ps.pooled.size(); ++i) ps.hidden[i] = ps.pooled[i] * ps.mask[i];
  const auto& H = params.head;
  if (static_cast<std::size_t>(H.in) != ps.hidden.size())
    throw ConfigError("forward: head expects " + std::to_string(H.in) + " features");
  ps.logits.assign(H.b.begin(), H.b.end());
  for (int i = 0; i < H.in; ++i)
    axpy(ps.logits.data(), ps.hidden[static_cast<std::size_t>(i)],
         H.w.data() + static_cast<std::size_t>(i) * H.out, static_cast<std::size_t>(H.out));
  ps.probs = softmax6(ps.logits);
}

Pass& workspace() {
  thread_local Pass ps;
  return ps;
}

}  // namespace

ForwardResult forward(const ModelConfig& cfg, const ModelParams& params, const Matrix& x, Mode mode,
                      std::uint64_t dropout_seed) {
  Pass& ps = workspace();
  run_forward(cfg, params, x, mode, dropout_seed, ps);
  return {ps.probs, ps.pooled, ps.logits};
}

double backward(const ModelConfig& cfg, const ModelParams& params, const Matrix& x,
                const SoftLabel& target, double weight, Mode mode, std::uint64_t dropout_seed,
                ModelParams& grads) {
  Pass& ps = workspace();
  run_forward(cfg, params, x, mode, dropout_seed, ps);
  const double loss = weight * kl_divergence(target.p, ps.probs);
  if (!std::isfinite(loss)) {
    std::string msg = "backward: non-finite loss; probs=[";
    for (int i = 0; i < kNumClasses; ++i) msg += (i ? "," : "") + std::to_string(ps.probs[i]);
    throw NumericError(msg + "] weight=" + std::to_string(weight));
  }
  // Softmax + KL: d loss / d logits = weight * (p - y).
  const auto& H = params.head;
  std::vector<double> dlogits(kNumClasses);
  for (int j = 0; j < kNumClasses; ++j) dlogits[j] = weight * (ps.probs[j] - target.p[j]);
  auto& GH = grads.head;
  for (int j = 0; j < H.out; ++j) GH.b[static_cast<std::size_t>(j)] += dlogits[static_cast<std::size_t>(j)];
  std::vector<double> dpooled(static_cast<std::size_t>(H.in));
  for (int i = 0; i < H.in; ++i) {
    const double h = ps.hidden[static_cast<std::size_t>(i)];
    const double* wrow = H.w.data() + static_cast<std::size_t>(i) * H.out;
    axpy(GH.w.data() + static_cast<std::size_t>(i) * H.out, h, dlogits.data(), static_cast<std::size_t>(H.out));
    dpooled[static_cast<std::size_t>(i)] =
        dot(wrow, dlogits.data(), static_cast<std::size_t>(H.out)) * ps.mask[static_cast<std::size_t>(i)];
  }
  const Tensor3& fmap = ps.trace.layers.back().a;
  thread_local Tensor3 dfmap;
  dfmap.reset(fmap.c, fmap.h, fmap.w);
  const double inv = 1.0 / (static_cast<double>(fmap.h) * ps.cols.count);
  for (int c = 0; c < fmap.c; ++c) {
    const double g = dpooled[static_cast<std::size_t>(c)] * inv;
    for (int y = 0; y < fmap.h; ++y)
      for (int t = 0; t < ps.cols.count; ++t) dfmap.at(c, y, ps.cols.begin + t) = g;
  }
  const bool learn_embedding = params.embedding.spec.kind == EmbeddingKind::Learnable;
  Tensor3 dimg = backbone_backward(cfg.backbone, params.backbone, ps.trace, dfmap, grads.backbone, learn_embedding);
  if (learn_embedding) {
    const auto& s = params.embedding.spec;
    const int C = static_cast<int>(x.rows());
    for (int g = 0; g < s.groups; ++g)
      for (int c = 0; c < C; ++c) {
        const auto row_in = x.row(static_cast<std::size_t>(c));
        for (int k = 0; k < s.kernels; ++k) {
          const double* d = dimg.plane(g) + static_cast<std::size_t>(image_row(s, C, c, k)) * dimg.w;
          auto gw = grads.embedding.kernel(g, k);
          for (int t = 0; t < dimg.w; ++t)
            axpy(gw.data(), d[t], row_in.data() + static_cast<std::size_t>(t) * s.stride,
                 static_cast<std::size_t>(s.length));
        }
      }
  }
  return loss;
}

}  // namespace vipeeg
