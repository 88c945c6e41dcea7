#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "vipeeg/common.hpp"
#include "vipeeg/data_model.hpp"

namespace vipeeg {

// Planar tensor [c][h][w]. Images use c = colour group (R, G, B).
struct Tensor3 {
  int c = 0, h = 0, w = 0;
  std::vector<double> v;

  Tensor3() = default;
  Tensor3(int c_, int h_, int w_, double fill = 0.0)
      : c(c_), h(h_), w(w_), v(static_cast<std::size_t>(c_) * h_ * w_, fill) {}
  // Resizes and zero-fills, reusing the existing allocation when possible.
  void reset(int c_, int h_, int w_) {
    c = c_;
    h = h_;
    w = w_;
    v.assign(static_cast<std::size_t>(c_) * h_ * w_, 0.0);
  }
  double& at(int ci, int y, int x) { return v[(static_cast<std::size_t>(ci) * h + y) * w + x]; }
  double at(int ci, int y, int x) const { return v[(static_cast<std::size_t>(ci) * h + y) * w + x]; }
  double* plane(int ci) { return v.data() + static_cast<std::size_t>(ci) * h * w; }
  const double* plane(int ci) const { return v.data() + static_cast<std::size_t>(ci) * h * w; }
  bool operator==(const Tensor3&) const = default;
};

enum class RowLayout { ChannelMajor, KernelMajor };
enum class EmbeddingKind { Learnable, FixedReshape };

struct EmbeddingSpec {
  int groups = 3;
  int kernels = 10;
  int length = 10;
  int stride = 10;
  RowLayout layout = RowLayout::ChannelMajor;
  EmbeddingKind kind = EmbeddingKind::Learnable;
};

struct BackboneStage {
  int out_channels = 16;
  int stride = 2;
};

// 3x3 convolutions with "same" padding and x*sigmoid(x) activations. The stem
// maps 0-255 inputs onto roughly [-1, 1] before the first convolution.
struct BackboneSpec {
  std::vector<BackboneStage> stages = {{16, 2}, {32, 2}, {64, 2}, {128, 2}};
  double input_offset = 127.5;
  double input_scale = 1.0 / 127.5;
};

struct ModelConfig {
  int n_channels = kNumBipolarChannels;
  EmbeddingSpec embedding;
  BackboneSpec backbone;
  bool central_selection = true;
  double dropout = 0.2;
};

void validate_model_config(const ModelConfig& cfg);

struct Eeg2ImageParams {
  EmbeddingSpec spec;
  std::vector<double> w;  // [group][kernel][tap]

  std::span<double> kernel(int g, int k) {
    return {w.data() + (static_cast<std::size_t>(g) * spec.kernels + k) * spec.length,
            static_cast<std::size_t>(spec.length)};
  }
  std::span<const double> kernel(int g, int k) const {
    return {w.data() + (static_cast<std::size_t>(g) * spec.kernels + k) * spec.length,
            static_cast<std::size_t>(spec.length)};
  }
};

struct ConvParams {
  int in_channels = 0, out_channels = 0, stride = 2;
  std::vector<double> w;  // [out][in][3][3]
  std::vector<double> b;  // [out]
};

struct DenseParams {
  int in = 0, out = 0;
  std::vector<double> w;  // [in][out]
  std::vector<double> b;  // [out]
};

struct NamedTensor {
  std::string name;
  std::span<double> data;
  bool trainable = true;
};

struct ModelParams {
  Eeg2ImageParams embedding;
  std::vector<ConvParams> backbone;
  DenseParams head;

  // Stable order: embedding.w, backbone.<i>.w, backbone.<i>.b, head.w, head.b.
  std::vector<NamedTensor> tensors();
  std::vector<std::span<const double>> tensors() const;
  std::vector<std::string> tensor_names() const;
  ModelParams zeros_like() const;
  void zero();
  std::size_t trainable_count() const;
  bool operator==(const ModelParams& o) const;
};

// Euclidean projection onto {w >= 0, sum w = 1} by sort-and-threshold.
std::vector<double> project_simplex(std::span<const double> v);
void project_simplex_inplace(std::span<double> v);
void project_embedding(Eeg2ImageParams& p);

// Learnable: 0.5 * onehot(k) + 0.5 * uniform, projected onto the simplex. The
// blend has no random term, so the seed does not change the result.
// FixedReshape: onehot(k), i.e. tap k of every stride window becomes row k.
Eeg2ImageParams init_embedding(const EmbeddingSpec& spec, std::uint64_t seed = 0);

// He-normal convolutions, Glorot-uniform head, zero biases.
ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed);
std::vector<ConvParams> init_backbone(const BackboneSpec& spec, int in_channels, std::uint64_t seed);

// x: [channels x T] with T divisible by the stride. Output [groups][channels*K][T/S].
Tensor3 eeg_to_image(const Matrix& x, const Eeg2ImageParams& p);
void eeg_to_image_into(const Matrix& x, const Eeg2ImageParams& p, Tensor3& img);
int image_row(const EmbeddingSpec& spec, int n_channels, int channel, int kernel);

struct ColumnRange {
  int begin = 0, count = 0;
};
// Central fifth of a width-W feature map: [floor(2W/5), floor(2W/5) + ceil(W/5)).
ColumnRange central_columns(int width);
Tensor3 central_select(const Tensor3& fmap);

// --- backbone building blocks (shared with backbone pretraining) ---

struct ConvTrace {
  std::vector<double> cols;  // im2col of the layer input
  Tensor3 z;                 // pre-activation
  Tensor3 a;                 // activation
  int in_c = 0, in_h = 0, in_w = 0;
};

struct BackboneTrace {
  Tensor3 stem;  // rescaled input
  std::vector<ConvTrace> layers;
};

const Tensor3& backbone_forward(const BackboneSpec& spec, const std::vector<ConvParams>& layers,
                                const Tensor3& image, BackboneTrace& trace);
// Accumulates parameter gradients; returns d(loss)/d(image) when want_input_grad.
Tensor3 backbone_backward(const BackboneSpec& spec, const std::vector<ConvParams>& layers,
                          const BackboneTrace& trace, const Tensor3& d_out,
                          std::vector<ConvParams>& grads, bool want_input_grad);

std::pair<int, int> backbone_output_hw(const BackboneSpec& spec, int h, int w);

ClassVector softmax6(std::span<const double> logits);
std::vector<double> softmax(std::span<const double> logits);

enum class Mode { Train, Eval };

struct ForwardResult {
  ClassVector probs{};
  std::vector<double> embedding;  // pooled features before dropout
  std::vector<double> logits;
};

// x: preprocessed, 0-255 scaled segment [channels x T].
ForwardResult forward(const ModelConfig& cfg, const ModelParams& params, const Matrix& x,
                      Mode mode = Mode::Eval, std::uint64_t dropout_seed = 0);

// Loss weight * KL(target || prediction) and its exact gradient, added into `grads`.
double backward(const ModelConfig& cfg, const ModelParams& params, const Matrix& x,
                const SoftLabel& target, double weight, Mode mode, std::uint64_t dropout_seed,
                ModelParams& grads);

// KL(y || p) with p clipped to >= 1e-15 and 0 * log 0 = 0.
double kl_divergence(const ClassVector& y, const ClassVector& p);

}  // namespace vipeeg
