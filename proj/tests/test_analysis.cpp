#include <cmath>
#include <regex>

#include "doctest.h"
#include "helpers.hpp"
#include "vipeeg/analysis.hpp"

using namespace vipeeg;

namespace {

// Minimal well-formedness check: every opened tag is closed in order.
bool balanced_xml(const std::string& s) {
  std::vector<std::string> stack;
  const std::regex tag(R"(<(/?)([A-Za-z]+)[^>]*?(/?)>)");
  for (auto it = std::sregex_iterator(s.begin(), s.end(), tag); it != std::sregex_iterator(); ++it) {
    const auto& m = *it;
    if (m[3].length() > 0) continue;
    if (m[1].length() == 0) {
      stack.push_back(m[2]);
    } else {
      if (stack.empty() || stack.back() != m[2]) return false;
      stack.pop_back();
    }
  }
  return stack.empty() && s.find("<svg") != std::string::npos;
}

Matrix two_blobs(std::size_t per, double gap, std::uint64_t seed) {
  Rng rng(seed);
  Matrix x(2 * per, 5);
  for (std::size_t i = 0; i < 2 * per; ++i)
    for (std::size_t k = 0; k < 5; ++k) x(i, k) = normal(rng) + (i >= per && k == 0 ? gap : 0.0);
  return x;
}

EvalReport small_report() {
  EvalInput in;
  for (int i = 0; i < 36; ++i) {
    AnnotationSet a;
    a.votes[static_cast<std::size_t>(i % 6)] = 10;
    in.votes.push_back(a);
    ClassVector p;
    p.fill(0.1);
    p[static_cast<std::size_t>((i * 7) % 6)] = 0.5;
    in.preds.push_back(p);
    in.patients.push_back("P" + std::to_string(i % 9));
    in.folds.push_back(i % 3);
  }
  return evaluate(in);
}

}  // namespace

TEST_CASE("variants change exactly one component") {
  ModelConfig base;
  const auto full = build_variant(Variant::Full, base);
  CHECK(full.pretrained);
  CHECK(full.model.central_selection);
  CHECK(full.model.embedding.kind == EmbeddingKind::Learnable);
  const auto nc = build_variant(Variant::NoCentral, base);
  CHECK_FALSE(nc.model.central_selection);
  CHECK(nc.pretrained);
  const auto np = build_variant(Variant::NoPretrain, base);
  CHECK_FALSE(np.pretrained);
  CHECK(np.model.central_selection);
  const auto ne = build_variant(Variant::NoEeg2Img, base);
  CHECK(ne.model.embedding.kind == EmbeddingKind::FixedReshape);
  CHECK(ne.pretrained);
  for (auto v : all_variants()) CHECK(parse_variant(variant_name(v)) == v);
  CHECK_THROWS_AS(parse_variant("bogus"), ConfigError);
}

TEST_CASE("pretext data is deterministic and covers every class") {
  PretextConfig c;
  c.n_train = 64;
  c.n_test = 16;
  const auto a = pretext_dataset(c, 0);
  const auto b = pretext_dataset(c, 0);
  REQUIRE(a.size() == 64);
  std::vector<int> count(kPretextClasses, 0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].image == b[i].image);
    CHECK(a[i].image.c == 3);
    ++count[static_cast<std::size_t>(a[i].label)];
    for (double v : a[i].image.v) CHECK((v >= 0 && v <= 255));
  }
  for (int k : count) CHECK(k > 0);
  CHECK_FALSE(pretext_dataset(c, 1)[0].image == a[0].image);
}

TEST_CASE("pretraining returns a backbone of the requested shape") {
  BackboneSpec spec;
  spec.stages = {{4, 2}, {8, 2}};
  PretextConfig c;
  spec.stages = {{8, 2}, {16, 2}};
  c.n_train = 1024;
  c.n_test = 256;
  const auto r = pretrain_backbone(spec, c);
  REQUIRE(r.backbone.size() == 2);
  CHECK(r.backbone[0].in_channels == 3);
  CHECK(r.backbone[1].out_channels == 16);
  CHECK(r.accuracy >= 0.6);
}

TEST_CASE("t-SNE separates two blobs and stays centred") {
  const auto x = two_blobs(30, 10, 1);
  TsneConfig c;
  c.perplexity = 10;
  c.iterations = 400;
  const auto r = tsne(x, c);
  REQUIRE(r.coords.rows() == 60);
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < 60; ++i) mx += r.coords(i, 0), my += r.coords(i, 1);
  CHECK(std::abs(mx / 60) < 1e-6);
  CHECK(std::abs(my / 60) < 1e-6);
  // Nearest-neighbour labels agree with the blob labels.
  int agree = 0;
  for (std::size_t i = 0; i < 60; ++i) {
    std::size_t best = i == 0 ? 1 : 0;
    double bd = 1e300;
    for (std::size_t j = 0; j < 60; ++j) {
      if (j == i) continue;
      const double d = std::hypot(r.coords(i, 0) - r.coords(j, 0), r.coords(i, 1) - r.coords(j, 1));
      if (d < bd) bd = d, best = j;
    }
    agree += (i < 30) == (best < 30);
  }
  CHECK(agree >= 57);
  CHECK(r.objective.size() == 400);
  CHECK(r.objective.back() < r.objective[c.exaggeration_iters]);
  const auto again = tsne(x, c);
  CHECK(again.coords == r.coords);
}

TEST_CASE("t-SNE keeps duplicates together and validates inputs") {
  auto x = two_blobs(100, 6, 2);
  for (std::size_t k = 0; k < 5; ++k) x(1, k) = x(0, k);
  TsneConfig c;
  const auto r = tsne(x, c);
  double diameter = 0;
  for (std::size_t i = 0; i < 200; ++i)
    for (std::size_t j = 0; j < i; ++j)
      diameter = std::max(diameter, std::hypot(r.coords(i, 0) - r.coords(j, 0), r.coords(i, 1) - r.coords(j, 1)));
  CHECK(std::hypot(r.coords(0, 0) - r.coords(1, 0), r.coords(0, 1) - r.coords(1, 1)) < 0.01 * diameter);
  x = two_blobs(20, 6, 2);
  c.perplexity = 20;
  CHECK_THROWS_AS(tsne(x, c), ConfigError);
  CHECK_THROWS_AS(tsne(Matrix(5, 2), TsneConfig{}), ConfigError);
  x(3, 2) = std::nan("");
  c.perplexity = 5;
  CHECK_THROWS_AS(tsne(x, c), DataError);
}

TEST_CASE("report files are complete, well formed and reproducible") {
  const auto rep = small_report();
  const auto x = two_blobs(10, 5, 3);
  TsneConfig tc;
  tc.perplexity = 5;
  tc.iterations = 100;
  tc.exaggeration_iters = 50;
  const auto ts = tsne(x, tc);
  AblationTable ab;
  for (auto v : all_variants()) {
    AblationRow row;
    row.variant = v;
    row.seed_kld = {0.5, 0.6};
    row.mean_kld = 0.55;
    row.p_value = 0.3;
    ab.rows.push_back(row);
  }
  ReportInputs in;
  in.eval = &rep;
  in.tsne_coords = &ts.coords;
  in.tsne_labels.assign(20, ClassId::GPD);
  in.ablation = &ab;
  in.comment = "config_hash=abc seed=0";
  const auto d1 = testutil::scratch_dir("report1");
  const auto d2 = testutil::scratch_dir("report2");
  emit_report(d1, in);
  emit_report(d2, in);
  for (const char* f : {"report.json", "roc_seizure.csv", "roc.svg", "confusion.csv", "confusion.svg", "tsne.csv",
                        "tsne.svg", "ablation.csv", "ablation.svg"}) {
    CAPTURE(f);
    REQUIRE(std::filesystem::exists(d1 / f));
    CHECK(testutil::slurp(d1 / f) == testutil::slurp(d2 / f));
  }
  for (const char* f : {"roc.svg", "confusion.svg", "tsne.svg", "ablation.svg"}) {
    CAPTURE(f);
    CHECK(balanced_xml(testutil::slurp(d1 / f)));
  }
  CHECK(testutil::slurp(d1 / "tsne.csv").rfind("# config_hash=abc seed=0\n", 0) == 0);
  const auto j = nlohmann::json::parse(testutil::slurp(d1 / "report.json"));
  CHECK(j.contains("mean_kld"));
  CHECK(j.contains("ablation"));
}

TEST_CASE("a report without ROC data writes no ROC files") {
  EvalReport empty;
  ReportInputs in;
  in.eval = &empty;
  const auto d = testutil::scratch_dir("report_empty");
  emit_report(d, in);
  CHECK(std::filesystem::exists(d / "report.json"));
  CHECK_FALSE(std::filesystem::exists(d / "roc.svg"));
  CHECK_FALSE(std::filesystem::exists(d / "roc_seizure.csv"));
}
