#include <cmath>
#include <numeric>

#include "doctest.h"
#include "helpers.hpp"
#include "vipeeg/metrics.hpp"

using namespace vipeeg;

namespace {

double auroc_pairs(const std::vector<double>& s, const std::vector<bool>& pos) {
  double num = 0;
  long pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (pos[i] && !pos[j]) {
        num += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
        ++pairs;
      }
  return num / static_cast<double>(pairs);
}

// Two-sided exact p by enumerating every split of the pooled sample.
double rank_sum_enum(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> pool(a);
  pool.insert(pool.end(), b.begin(), b.end());
  const std::size_t N = pool.size(), n = a.size();
  std::vector<double> rank(N);
  for (std::size_t i = 0; i < N; ++i) {
    double less = 0, eq = 0;
    for (double v : pool) less += v < pool[i], eq += v == pool[i];
    rank[i] = less + (eq + 1) / 2;
  }
  const double w = std::accumulate(rank.begin(), rank.begin() + static_cast<long>(n), 0.0);
  const double mean = static_cast<double>(n) * static_cast<double>(N + 1) / 2;
  long hit = 0, total = 0;
  for (unsigned mask = 0; mask < (1u << N); ++mask) {
    if (static_cast<std::size_t>(__builtin_popcount(mask)) != n) continue;
    double s = 0;
    for (std::size_t i = 0; i < N; ++i)
      if (mask >> i & 1u) s += rank[i];
    ++total;
    hit += std::abs(s - mean) >= std::abs(w - mean) - 1e-9;
  }
  return static_cast<double>(hit) / static_cast<double>(total);
}

}  // namespace

TEST_CASE("mean KLD matches the per-sample loop") {
  Rng rng(1);
  std::vector<SoftLabel> y(50);
  std::vector<ClassVector> p(50);
  double naive = 0;
  for (std::size_t i = 0; i < 50; ++i) {
    AnnotationSet a;
    for (int k = 0; k < 7; ++k) ++a.votes[static_cast<std::size_t>(uniform_int(rng, 0, 5))];
    y[i] = soft_label(a);
    double s = 0;
    for (double& v : p[i]) s += (v = uniform01(rng) + 1e-3);
    for (double& v : p[i]) v /= s;
    for (int c = 0; c < 6; ++c)
      if (y[i].p[c] > 0) naive += y[i].p[c] * std::log(y[i].p[c] / p[i][c]);
  }
  CHECK(std::abs(mean_kld(y, p) - naive / 50) <= 1e-12);
  CHECK_THROWS_AS(mean_kld(y, {}), DataError);
}

TEST_CASE("AUROC equals the pairwise count") {
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const auto n = static_cast<std::size_t>(uniform_int(rng, 2, 60));
    std::vector<double> s(n);
    std::vector<bool> pos(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(uniform_int(rng, 0, 8)) / 8;
      pos[i] = i == 0 ? true : i == 1 ? false : uniform01(rng) < 0.4;
    }
    CHECK(auroc(s, pos) == auroc_pairs(s, pos));
  }
  CHECK_THROWS_AS(auroc(std::vector<double>{0.1, 0.2}, {true, true}), DataError);
}

TEST_CASE("ROC curve walks distinct thresholds") {
  const std::vector<double> s = {0.9, 0.8, 0.8, 0.3, 0.1};
  const std::vector<bool> pos = {true, false, true, false, false};
  const auto roc = roc_curve(s, pos);
  REQUIRE(roc.points.size() == 5);
  CHECK(std::isinf(roc.points[0].threshold));
  CHECK(roc.points[0].tp == 0);
  CHECK(roc.points[2].threshold == 0.8);
  CHECK(roc.points[2].tp == 2);
  CHECK(roc.points[2].fp == 1);
  CHECK(roc.points.back().tpr == 1.0);
  CHECK(roc.points.back().fpr == 1.0);
  // Best split is above 0.3: tpr 1, fpr 1/3; midpoint of (0.3, 0.8).
  CHECK(optimal_threshold(roc) == doctest::Approx(0.55));
}

TEST_CASE("confusion matrix and rates match tallies") {
  const std::vector<ClassId> cons = {ClassId::Seizure, ClassId::Seizure, ClassId::LPD, ClassId::Other, ClassId::LPD};
  const std::vector<ClassId> pred = {ClassId::Seizure, ClassId::LPD, ClassId::LPD, ClassId::LPD, ClassId::LPD};
  const auto r = confusion_and_rates(cons, pred);
  CHECK(r.matrix[0][0] == 1);
  CHECK(r.matrix[0][1] == 1);
  CHECK(r.matrix[1][1] == 2);
  CHECK(r.matrix[5][1] == 1);
  CHECK(*r.sensitivity[0] == 0.5);
  CHECK(*r.sensitivity[1] == 1.0);
  CHECK(*r.precision[1] == 0.5);
  CHECK(*r.precision[0] == 1.0);
  CHECK_FALSE(r.sensitivity[2].has_value());
  CHECK_FALSE(r.precision[5].has_value());
  CHECK(argmax_class({0.2, 0.3, 0.3, 0.1, 0.05, 0.05}) == ClassId::LPD);
}

TEST_CASE("fold confidence interval") {
  const std::vector<double> v = {0, 1};
  const auto ci = fold_ci(v);
  CHECK(ci.mean == 0.5);
  CHECK(ci.hi - ci.mean == doctest::Approx(0.693).epsilon(1e-3));
  CHECK(ci.mean - ci.lo == doctest::Approx(ci.hi - ci.mean));
  const std::vector<double> one = {0.3};
  CHECK_THROWS_AS(fold_ci(one), DataError);
}

TEST_CASE("exact rank-sum test matches enumeration") {
  Rng rng(3);
  for (int trial = 0; trial < 40; ++trial) {
    const auto n = static_cast<std::size_t>(uniform_int(rng, 2, 7));
    const auto m = static_cast<std::size_t>(uniform_int(rng, 2, 7));
    std::vector<double> a(n), b(m);
    for (double& v : a) v = static_cast<double>(uniform_int(rng, 0, 6));
    for (double& v : b) v = static_cast<double>(uniform_int(rng, 0, 6));
    const auto r = wilcoxon_rank_sum(a, b, RankSumMethod::Exact);
    CHECK(r.exact);
    CHECK(r.p_two_sided == doctest::Approx(rank_sum_enum(a, b)).epsilon(1e-12));
  }
  const std::vector<double> hi = {6, 7, 8, 9, 10}, lo = {1, 2, 3, 4, 5};
  CHECK(wilcoxon_rank_sum(hi, lo).p_two_sided == doctest::Approx(2.0 / 252).epsilon(1e-12));
  CHECK(wilcoxon_rank_sum(hi, lo).statistic == 40);
  const std::vector<double> same = {1, 1, 1};
  CHECK(wilcoxon_rank_sum(same, same).p_two_sided == 1.0);
}

TEST_CASE("normal approximation tracks the exact test") {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> a(8), b(8);
    for (double& v : a) v = normal(rng);
    for (double& v : b) v = normal(rng) + 0.8;
    const auto ex = wilcoxon_rank_sum(a, b, RankSumMethod::Exact);
    const auto ap = wilcoxon_rank_sum(a, b, RankSumMethod::Normal);
    CHECK_FALSE(ap.exact);
    CHECK(std::abs(ex.p_two_sided - ap.p_two_sided) <= 0.01);
  }
}

TEST_CASE("evaluate pools predictions and reports per-fold intervals") {
  EvalInput in;
  Rng rng(5);
  for (int i = 0; i < 60; ++i) {
    AnnotationSet a;
    a.votes[static_cast<std::size_t>(i % 6)] = 10;
    in.votes.push_back(a);
    ClassVector p;
    p.fill(0.1);
    p[static_cast<std::size_t>(i % 6)] = 0.5;
    if (i % 5 == 0) std::swap(p[0], p[static_cast<std::size_t>(i % 6)]);
    in.preds.push_back(p);
    in.patients.push_back("P" + std::to_string(i / 4));
    in.folds.push_back(i % 3);
  }
  const auto r = evaluate(in);
  CHECK(r.n_samples == 60);
  CHECK(r.n_patients == 15);
  CHECK(r.n_folds == 3);
  std::vector<SoftLabel> y;
  for (const auto& v : in.votes) y.push_back(soft_label(v));
  CHECK(r.mean_kld.mean == doctest::Approx(mean_kld(y, in.preds)).epsilon(1e-12));
  long correct = 0;
  for (std::size_t i = 0; i < 60; ++i) correct += argmax_class(in.preds[i]) == consensus(in.votes[i]);
  CHECK(r.accuracy == doctest::Approx(static_cast<double>(correct) / 60));
  REQUIRE(r.auroc[1].has_value());
  CHECK(r.mean_kld.lo <= r.mean_kld.mean);
  const auto j = to_json(r);
  CHECK(j.contains("mean_kld_ci95"));
  CHECK(j["classes"].contains("seizure"));
}
