#include <algorithm>
#include <numeric>

#include "doctest.h"
#include "helpers.hpp"
#include "vipeeg/model.hpp"

using namespace vipeeg;

namespace {

Matrix random_input(std::size_t C, std::size_t T, std::uint64_t seed) {
  Rng rng(seed);
  Matrix x(C, T);
  for (double& v : x.data()) v = uniform(rng, 0, 255);
  return x;
}

double dist2(std::span<const double> a, std::span<const double> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

}  // namespace

TEST_CASE("simplex projection lands on the simplex and is nearest") {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> v(10);
    for (double& x : v) x = 3 * normal(rng);
    const auto p = project_simplex(v);
    CHECK(std::accumulate(p.begin(), p.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(*std::min_element(p.begin(), p.end()) >= 0.0);
    // No random simplex point is closer.
    for (int k = 0; k < 20; ++k) {
      std::vector<double> q(10);
      double s = 0;
      for (double& x : q) s += (x = -std::log(uniform01(rng) + 1e-300));
      for (double& x : q) x /= s;
      CHECK(dist2(p, v) <= dist2(q, v) + 1e-12);
    }
  }
  const std::vector<double> inside = {0.2, 0.3, 0.5};
  CHECK(project_simplex(inside) == inside);
}

TEST_CASE("embedding initialization") {
  EmbeddingSpec spec;
  const auto learn = init_embedding(spec);
  for (int g = 0; g < 3; ++g)
    for (int k = 0; k < 10; ++k) {
      const auto w = learn.kernel(g, k);
      CHECK(std::accumulate(w.begin(), w.end(), 0.0) == doctest::Approx(1.0));
      CHECK(w[static_cast<std::size_t>(k)] == doctest::Approx(0.55));
    }
  spec.kind = EmbeddingKind::FixedReshape;
  const auto fixed = init_embedding(spec);
  for (int k = 0; k < 10; ++k)
    for (int t = 0; t < 10; ++t) CHECK(fixed.kernel(1, k)[static_cast<std::size_t>(t)] == (t == k ? 1.0 : 0.0));
}

TEST_CASE("fixed reshape image is the folded signal") {
  EmbeddingSpec spec;
  spec.kind = EmbeddingKind::FixedReshape;
  const auto p = init_embedding(spec);
  const auto x = random_input(16, 200, 2);
  const auto img = eeg_to_image(x, p);
  REQUIRE(img.c == 3);
  REQUIRE(img.h == 160);
  REQUIRE(img.w == 20);
  for (int g = 0; g < 3; ++g)
    for (int c = 0; c < 16; ++c)
      for (int k = 0; k < 10; ++k)
        for (int t = 0; t < 20; ++t) CHECK(img.at(g, c * 10 + k, t) == x(c, t * 10 + k));
}

TEST_CASE("image layouts and shape checks") {
  EmbeddingSpec spec;
  spec.layout = RowLayout::KernelMajor;
  CHECK(image_row(spec, 16, 3, 2) == 2 * 16 + 3);
  spec.layout = RowLayout::ChannelMajor;
  CHECK(image_row(spec, 16, 3, 2) == 3 * 10 + 2);
  const auto p = init_embedding(spec);
  CHECK_THROWS_AS(eeg_to_image(random_input(16, 205, 1), p), DataError);
}

TEST_CASE("central columns") {
  CHECK(central_columns(1000).begin == 400);
  CHECK(central_columns(1000).count == 200);
  CHECK(central_columns(7).begin == 2);
  CHECK(central_columns(7).count == 2);
  CHECK_THROWS_AS(central_columns(4), DataError);
  Tensor3 f(2, 3, 10);
  for (std::size_t i = 0; i < f.v.size(); ++i) f.v[i] = static_cast<double>(i);
  const auto s = central_select(f);
  CHECK(s.w == 2);
  CHECK(s.at(1, 2, 0) == f.at(1, 2, 4));
  CHECK(s.at(1, 2, 1) == f.at(1, 2, 5));
}

TEST_CASE("softmax and KL divergence") {
  const std::vector<double> z = {1000, 1000, 1000, 1000, 1000, 1000};
  for (double p : softmax6(z)) CHECK(p == doctest::Approx(1.0 / 6));
  const auto s = softmax(std::vector<double>{0, std::log(3.0)});
  CHECK(s[1] == doctest::Approx(0.75));
  ClassVector onehot{1, 0, 0, 0, 0, 0}, uni;
  uni.fill(1.0 / 6);
  CHECK(kl_divergence(onehot, uni) == doctest::Approx(std::log(6.0)).epsilon(1e-14));
  CHECK(kl_divergence(uni, uni) == 0.0);
  ClassVector zero_pred{0, 1, 0, 0, 0, 0};
  CHECK(kl_divergence(onehot, zero_pred) == doctest::Approx(-std::log(1e-15)));
}

TEST_CASE("forward pass shapes and probability output") {
  const auto cfg = testutil::tiny_model();
  const auto params = init_params(cfg, 3);
  const auto x = random_input(16, 200, 4);
  const auto r = forward(cfg, params, x);
  CHECK(std::accumulate(r.probs.begin(), r.probs.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r.embedding.size() == 8);
  CHECK(forward(cfg, params, x).probs == r.probs);
  // Dropout only acts in training mode, deterministically per seed.
  const auto t1 = forward(cfg, params, x, Mode::Train, 5);
  const auto t2 = forward(cfg, params, x, Mode::Train, 5);
  CHECK(t1.probs == t2.probs);
  CHECK(t1.embedding == r.embedding);
}

TEST_CASE("parameter bookkeeping") {
  auto cfg = testutil::tiny_model();
  auto p = init_params(cfg, 1);
  const auto names = p.tensor_names();
  REQUIRE(names.size() == 1 + 2 * 2 + 2);
  CHECK(names.front() == "embedding.w");
  CHECK(names.back() == "head.b");
  std::size_t n = 0;
  for (const auto& t : p.tensors()) n += t.trainable ? t.data.size() : 0;
  CHECK(n == p.trainable_count());
  cfg.embedding.kind = EmbeddingKind::FixedReshape;
  auto q = init_params(cfg, 1);
  CHECK(q.trainable_count() == n - 300);
  CHECK(init_params(cfg, 1) == q);
  CHECK_FALSE(init_params(cfg, 2) == q);
  auto z = p.zeros_like();
  for (const auto& t : z.tensors()) CHECK(std::all_of(t.data.begin(), t.data.end(), [](double v) { return v == 0; }));
}

TEST_CASE("backward agrees with finite differences") {
  auto cfg = testutil::tiny_model();
  cfg.backbone.stages = {{3, 2}, {4, 1}};
  auto params = init_params(cfg, 8);
  // Move the kernels off the simplex barycentre so every tap matters.
  Rng rng(4);
  for (double& w : params.embedding.w) w += 0.05 * normal(rng);
  const auto x = random_input(16, 100, 6);
  SoftLabel y;
  y.p = {0.5, 0.1, 0.1, 0.1, 0.1, 0.1};
  auto grads = params.zeros_like();
  const double loss = backward(cfg, params, x, y, 1.0, Mode::Train, 11, grads);
  CHECK(loss == doctest::Approx(kl_divergence(y.p, forward(cfg, params, x, Mode::Train, 11).probs)));

  auto pt = params.tensors();
  const auto gt = grads.tensors();
  int checked = 0;
  for (std::size_t t = 0; t < pt.size(); ++t) {
    const auto n = pt[t].data.size();
    for (std::size_t i = 0; i < n; i += std::max<std::size_t>(1, n / 7)) {
      double& w = pt[t].data[i];
      const double w0 = w, h = 1e-5;
      w = w0 + h;
      const double lp = kl_divergence(y.p, forward(cfg, params, x, Mode::Train, 11).probs);
      w = w0 - h;
      const double lm = kl_divergence(y.p, forward(cfg, params, x, Mode::Train, 11).probs);
      w = w0;
      const double fd = (lp - lm) / (2 * h);
      const double an = gt[t].data[i];
      CHECK(std::abs(fd - an) <= 1e-6 + 1e-4 * std::max(std::abs(fd), std::abs(an)));
      ++checked;
    }
  }
  CHECK(checked > 40);
}

TEST_CASE("model configuration validation") {
  auto cfg = testutil::tiny_model();
  cfg.dropout = 1.0;
  CHECK_THROWS_AS(validate_model_config(cfg), ConfigError);
  cfg = testutil::tiny_model();
  cfg.backbone.stages.clear();
  CHECK_THROWS_AS(validate_model_config(cfg), ConfigError);
  cfg = testutil::tiny_model();
  cfg.embedding.length = 0;
  CHECK_THROWS_AS(validate_model_config(cfg), ConfigError);
}
