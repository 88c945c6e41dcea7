#include "vipeeg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace vipeeg {

namespace {

constexpr double kProbFloor = 1e-15;

double kld(const ClassVector& y, const ClassVector& p) {
  double s = 0;
  for (int i = 0; i < kNumClasses; ++i)
    if (y[i] > 0) s += y[i] * (std::log(y[i]) - std::log(std::max(p[i], kProbFloor)));
  return s;
}

// 1-based midranks of the values.
std::vector<double> midranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j < idx.size() && v[idx[j]] == v[idx[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) r[idx[k]] = rank;
    i = j;
  }
  return r;
}

}  // namespace

double mean_kld(const std::vector<SoftLabel>& labels, const std::vector<ClassVector>& preds) {
  if (labels.size() != preds.size())
    throw DataError("mean_kld: " + std::to_string(labels.size()) + " labels vs " + std::to_string(preds.size()) +
                    " predictions");
  if (labels.empty()) throw DataError("mean_kld: no samples");
  double s = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) s += kld(labels[i].p, preds[i]);
  return s / static_cast<double>(labels.size());
}

double auroc(std::span<const double> scores, const std::vector<bool>& positive) {
  if (scores.size() != positive.size()) throw DataError("auroc: scores and labels differ in length");
  const auto r = midranks(scores);
  double rank_sum = 0;
  long P = 0;
  for (std::size_t i = 0; i < r.size(); ++i)
    if (positive[i]) {
      rank_sum += r[i];
      ++P;
    }
  const long N = static_cast<long>(scores.size()) - P;
  if (P == 0 || N == 0) throw DataError("auroc: need at least one positive and one negative");
  const double u = rank_sum - 0.5 * static_cast<double>(P) * static_cast<double>(P + 1);
  return u / (static_cast<double>(P) * static_cast<double>(N));
}

double auroc_ovr(const std::vector<ClassId>& consensus, const std::vector<ClassVector>& scores, ClassId c) {
  if (consensus.size() != scores.size()) throw DataError("auroc_ovr: length mismatch");
  std::vector<double> s(scores.size());
  std::vector<bool> pos(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    s[i] = scores[i][index_of(c)];
    pos[i] = consensus[i] == c;
  }
  const auto n_pos = std::count(pos.begin(), pos.end(), true);
  if (n_pos == 0 || n_pos == static_cast<long>(pos.size()))
    throw DataError("auroc_ovr: class '" + std::string(class_name(c)) + "' has no " +
                    (n_pos == 0 ? "positive" : "negative") + " samples");
  return auroc(s, pos);
}

RocCurve roc_curve(std::span<const double> scores, const std::vector<bool>& positive) {
  if (scores.size() != positive.size()) throw DataError("roc_curve: scores and labels differ in length");
  RocCurve roc;
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  for (bool p : positive) (p ? roc.positives : roc.negatives) += 1;
  roc.points.push_back({std::numeric_limits<double>::infinity(), 0, 0, 0.0, 0.0});
  long tp = 0, fp = 0;
  for (std::size_t i = 0; i < idx.size();) {
    const double s = scores[idx[i]];
    while (i < idx.size() && scores[idx[i]] == s) {
      (positive[idx[i]] ? tp : fp) += 1;
      ++i;
    }
    roc.scores_desc.push_back(s);
    roc.points.push_back({s, tp, fp, roc.positives ? static_cast<double>(tp) / static_cast<double>(roc.positives) : 0.0,
                          roc.negatives ? static_cast<double>(fp) / static_cast<double>(roc.negatives) : 0.0});
  }
  return roc;
}

double optimal_threshold(const RocCurve& roc) {
  if (roc.positives == 0 || roc.negatives == 0) throw DataError("optimal_threshold: degenerate ROC");
  const std::size_t d = roc.scores_desc.size();
  if (d < 2) throw DataError("optimal_threshold: all scores are equal");
  // Cut i keeps scores >= scores_desc[i]; J * P * N = tp * N - fp * P, compared exactly.
  std::size_t best = 0;
  long double best_j = -std::numeric_limits<long double>::infinity();
  for (std::size_t i = 0; i + 1 < d; ++i) {
    const auto& pt = roc.points[i + 1];
    const long double j = static_cast<long double>(pt.tp) * roc.negatives - static_cast<long double>(pt.fp) * roc.positives;
    if (j >= best_j) {
      best_j = j;
      best = i;
    }
  }
  return 0.5 * (roc.scores_desc[best] + roc.scores_desc[best + 1]);
}

ClassId argmax_class(const ClassVector& p) {
  int best = 0;
  for (int c = 1; c < kNumClasses; ++c)
    if (p[c] > p[best]) best = c;
  return class_from_index(best);
}

ConfusionReport confusion_and_rates(const std::vector<ClassId>& consensus, const std::vector<ClassId>& predicted) {
  if (consensus.size() != predicted.size()) throw DataError("confusion_and_rates: length mismatch");
  ConfusionReport r;
  for (std::size_t i = 0; i < consensus.size(); ++i) ++r.matrix[index_of(consensus[i])][index_of(predicted[i])];
  for (int c = 0; c < kNumClasses; ++c) {
    long row = 0, col = 0;
    for (int j = 0; j < kNumClasses; ++j) {
      row += r.matrix[c][j];
      col += r.matrix[j][c];
    }
    if (row > 0) r.sensitivity[c] = static_cast<double>(r.matrix[c][c]) / static_cast<double>(row);
    if (col > 0) r.precision[c] = static_cast<double>(r.matrix[c][c]) / static_cast<double>(col);
  }
  return r;
}

Interval fold_ci(std::span<const double> values) {
  if (values.size() < 2) throw DataError("fold_ci: need at least two values");
  const double k = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / k;
  double ss = 0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double half = 1.96 * std::sqrt(ss / k) / std::sqrt(k);
  return {mean, mean - half, mean + half};
}

RankSumResult wilcoxon_rank_sum(std::span<const double> a, std::span<const double> b, RankSumMethod method) {
  if (a.empty() || b.empty()) throw DataError("wilcoxon_rank_sum: both samples must be non-empty");
  const std::size_t n = a.size(), m = b.size(), N = n + m;
  std::vector<double> pooled(a.begin(), a.end());
  pooled.insert(pooled.end(), b.begin(), b.end());
  const auto r = midranks(pooled);
  RankSumResult res;
  for (std::size_t i = 0; i < n; ++i) res.statistic += r[i];
  const double expected = 0.5 * static_cast<double>(n) * static_cast<double>(N + 1);
  const double dev = std::abs(res.statistic - expected);

  if (std::all_of(pooled.begin(), pooled.end(), [&](double v) { return v == pooled.front(); })) {
    res.p_two_sided = 1.0;
    res.exact = method != RankSumMethod::Normal && (method == RankSumMethod::Exact || N <= 16);
    return res;
  }

  const bool exact = method == RankSumMethod::Exact || (method == RankSumMethod::Auto && N <= 16);
  if (exact) {
    if (N > 60) throw ConfigError("wilcoxon_rank_sum: exact path limited to n + m <= 60");
    // Ranks are multiples of 1/2; count subsets of size n by doubled rank sum.
    std::vector<int> r2(N);
    int total2 = 0;
    for (std::size_t i = 0; i < N; ++i) {
      r2[i] = static_cast<int>(std::lround(2 * r[i]));
      total2 += r2[i];
    }
    std::vector<std::vector<std::uint64_t>> ways(n + 1, std::vector<std::uint64_t>(static_cast<std::size_t>(total2) + 1, 0));
    ways[0][0] = 1;
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t k = std::min(i + 1, n); k >= 1; --k)
        for (int s = total2; s >= r2[i]; --s) ways[k][static_cast<std::size_t>(s)] += ways[k - 1][static_cast<std::size_t>(s - r2[i])];
    std::uint64_t hit = 0, all = 0;
    for (int s = 0; s <= total2; ++s) {
      const auto w = ways[n][static_cast<std::size_t>(s)];
      if (w == 0) continue;
      all += w;
      if (std::abs(0.5 * s - expected) >= dev - 1e-9) hit += w;
    }
    res.p_two_sided = static_cast<double>(hit) / static_cast<double>(all);
    res.exact = true;
    return res;
  }

  double ties = 0;
  std::vector<double> sorted = pooled;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < N;) {
    std::size_t j = i;
    while (j < N && sorted[j] == sorted[i]) ++j;
    const double t = static_cast<double>(j - i);
    ties += t * t * t - t;
    i = j;
  }
  const double Nd = static_cast<double>(N);
  const double var = static_cast<double>(n) * static_cast<double>(m) / 12.0 * ((Nd + 1) - ties / (Nd * (Nd - 1)));
  const double num = dev - 0.5;
  if (num <= 0 || var <= 0) {
    res.p_two_sided = 1.0;
    return res;
  }
  // Edgeworth term for the (negative) excess kurtosis of the rank sum.
  const double nd = static_cast<double>(n), md = static_cast<double>(m);
  const double kurt = -1.2 * (nd * nd + md * md + nd * md + nd + md) / (nd * md * (Nd + 1));
  const double z = num / std::sqrt(var);
  const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2 * M_PI);
  const double upper = 0.5 * std::erfc(z / std::sqrt(2.0)) + pdf * kurt / 24.0 * (z * z * z - 3 * z);
  res.p_two_sided = std::clamp(2 * upper, 0.0, 1.0);
  return res;
}

EvalReport evaluate(const EvalInput& in) {
  const std::size_t n = in.votes.size();
  if (in.preds.size() != n || in.patients.size() != n || in.folds.size() != n)
    throw DataError("evaluate: input arrays differ in length");
  if (n == 0) throw DataError("evaluate: no samples");
  EvalReport rep;
  rep.n_samples = n;
  rep.n_patients = std::set<std::string>(in.patients.begin(), in.patients.end()).size();

  std::vector<SoftLabel> labels(n);
  std::vector<ClassId> cons(n), pred(n);
  for (std::size_t i = 0; i < n; ++i) {
    labels[i] = soft_label(in.votes[i]);
    cons[i] = consensus(in.votes[i]);
    pred[i] = argmax_class(in.preds[i]);
  }
  std::vector<int> fold_ids(in.folds.begin(), in.folds.end());
  std::sort(fold_ids.begin(), fold_ids.end());
  fold_ids.erase(std::unique(fold_ids.begin(), fold_ids.end()), fold_ids.end());
  rep.n_folds = static_cast<int>(fold_ids.size());

  auto fold_subset = [&](int f) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < n; ++i)
      if (in.folds[i] == f) idx.push_back(i);
    return idx;
  };

  const double overall = mean_kld(labels, in.preds);
  rep.mean_kld = {overall, overall, overall};
  if (fold_ids.size() >= 2) {
    std::vector<double> per_fold;
    for (int f : fold_ids) {
      std::vector<SoftLabel> l;
      std::vector<ClassVector> p;
      for (auto i : fold_subset(f)) {
        l.push_back(labels[i]);
        p.push_back(in.preds[i]);
      }
      per_fold.push_back(mean_kld(l, p));
    }
    const auto ci = fold_ci(per_fold);
    rep.mean_kld = {overall, ci.lo, ci.hi};
  }

  for (int c = 0; c < kNumClasses; ++c) {
    const ClassId cls = class_from_index(c);
    std::vector<double> s(n);
    std::vector<bool> pos(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = in.preds[i][c];
      pos[i] = cons[i] == cls;
    }
    rep.roc[c] = roc_curve(s, pos);
    if (rep.roc[c].positives == 0 || rep.roc[c].negatives == 0) continue;
    rep.auroc[c] = auroc(s, pos);
    if (rep.roc[c].scores_desc.size() >= 2) rep.optimal_thresholds[c] = optimal_threshold(rep.roc[c]);
    std::vector<double> per_fold;
    for (int f : fold_ids) {
      std::vector<double> fs;
      std::vector<bool> fp;
      for (auto i : fold_subset(f)) {
        fs.push_back(s[i]);
        fp.push_back(pos[i]);
      }
      const auto np = std::count(fp.begin(), fp.end(), true);
      if (np > 0 && np < static_cast<long>(fp.size())) per_fold.push_back(auroc(fs, fp));
    }
    if (per_fold.size() >= 2) {
      const auto ci = fold_ci(per_fold);
      rep.auroc_ci[c] = ci;
    }
  }

  rep.confusion = confusion_and_rates(cons, pred);
  long correct = 0;
  for (int c = 0; c < kNumClasses; ++c) correct += rep.confusion.matrix[c][c];
  rep.accuracy = static_cast<double>(correct) / static_cast<double>(n);
  return rep;
}

nlohmann::json to_json(const EvalReport& r) {
  using nlohmann::json;
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  json classes = json::object();
  for (int c = 0; c < kNumClasses; ++c) {
    const auto key = std::string(class_key(class_from_index(c)));
    json ci = nullptr;
    if (r.auroc_ci[c]) ci = {r.auroc_ci[c]->lo, r.auroc_ci[c]->hi};
    classes[key] = {{"auroc", opt(r.auroc[c])},
                    {"auroc_ci95", ci},
                    {"optimal_threshold", opt(r.optimal_thresholds[c])},
                    {"sensitivity", opt(r.confusion.sensitivity[c])},
                    {"precision", opt(r.confusion.precision[c])}};
  }
  json matrix = json::array();
  for (const auto& row : r.confusion.matrix) matrix.push_back(row);
  json labels = json::array();
  for (int c = 0; c < kNumClasses; ++c) labels.push_back(std::string(class_key(class_from_index(c))));
  return json{{"mean_kld", r.mean_kld.mean},
              {"mean_kld_ci95", {r.mean_kld.lo, r.mean_kld.hi}},
              {"ci_method", "fold"},
              {"accuracy", r.accuracy},
              {"classes", classes},
              {"confusion", {{"labels", labels}, {"rows_consensus_cols_predicted", matrix}}},
              {"n_samples", r.n_samples},
              {"n_patients", r.n_patients},
              {"n_folds", r.n_folds}};
}

}  // namespace vipeeg
