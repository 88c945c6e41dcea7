#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "vipeeg/data_model.hpp"

namespace vipeeg {

// Mean over samples of sum y ln(y / p), p clipped to >= 1e-15.
double mean_kld(const std::vector<SoftLabel>& labels, const std::vector<ClassVector>& preds);

// Rank-statistic AUROC (midranks, ties count 1/2). Throws DataError without
// at least one positive and one negative.
double auroc(std::span<const double> scores, const std::vector<bool>& positive);
// One-vs-rest AUROC for class c with consensus = c as the positive set.
double auroc_ovr(const std::vector<ClassId>& consensus, const std::vector<ClassVector>& scores, ClassId c);

struct RocPoint {
  double threshold = 0;  // predict positive when score >= threshold
  long tp = 0, fp = 0;
  double tpr = 0, fpr = 0;
};

struct RocCurve {
  long positives = 0, negatives = 0;
  std::vector<RocPoint> points;  // threshold descending; first is (0, 0) at +inf
  std::vector<double> scores_desc;  // distinct scores, descending
};

RocCurve roc_curve(std::span<const double> scores, const std::vector<bool>& positive);

// Youden-optimal threshold: maximizes TPR - FPR over cuts between consecutive
// distinct scores and returns the midpoint of the chosen gap. Ties go to the
// lower threshold.
double optimal_threshold(const RocCurve& roc);

struct ConfusionReport {
  std::array<std::array<long, kNumClasses>, kNumClasses> matrix{};  // [consensus][predicted]
  std::array<std::optional<double>, kNumClasses> sensitivity{};      // empty when 0/0
  std::array<std::optional<double>, kNumClasses> precision{};
};

ConfusionReport confusion_and_rates(const std::vector<ClassId>& consensus, const std::vector<ClassId>& predicted);

// Most probable class; ties go to the lowest index.
ClassId argmax_class(const ClassVector& p);

struct Interval {
  double mean = 0, lo = 0, hi = 0;
};
// mean +/- 1.96 * sd / sqrt(k), sd with divisor k.
Interval fold_ci(std::span<const double> values);

enum class RankSumMethod { Auto, Exact, Normal };

struct RankSumResult {
  double statistic = 0;  // rank sum of the first sample
  double p_two_sided = 1;
  bool exact = false;
};

// Wilcoxon rank-sum with midranks. Auto uses exact enumeration when
// n + m <= 16, otherwise the tie-corrected normal approximation with
// continuity correction and an Edgeworth kurtosis term.
RankSumResult wilcoxon_rank_sum(std::span<const double> a, std::span<const double> b,
                                RankSumMethod method = RankSumMethod::Auto);

struct EvalInput {
  std::vector<AnnotationSet> votes;
  std::vector<ClassVector> preds;
  std::vector<std::string> patients;
  std::vector<int> folds;  // fold of each sample; drives the confidence intervals
};

// Point estimates are pooled over all samples; the 95% intervals come from
// fold_ci over the per-fold values.
struct EvalReport {
  Interval mean_kld;
  std::array<std::optional<double>, kNumClasses> auroc{};
  std::array<std::optional<Interval>, kNumClasses> auroc_ci{};
  std::array<std::optional<double>, kNumClasses> optimal_thresholds{};
  ConfusionReport confusion;
  double accuracy = 0;  // argmax prediction vs consensus
  std::size_t n_samples = 0;
  std::size_t n_patients = 0;
  int n_folds = 0;
  std::array<RocCurve, kNumClasses> roc{};
};

EvalReport evaluate(const EvalInput& in);

nlohmann::json to_json(const EvalReport& r);

}  // namespace vipeeg
