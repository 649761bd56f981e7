#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "eisderm/errors.hpp"

namespace eisderm::stats {

// Paired (lesion id, label, score) arrays. A score is called malignant iff
// score > threshold (strict; ties at the threshold count as benign).
struct ScoredSet {
  std::vector<std::string> ids;
  std::vector<int> labels;     // 1 = malignant
  std::vector<double> scores;  // [0,1]

  size_t size() const { return ids.size(); }
  void push(std::string id, int label, double score);
  void validate() const;  // no duplicate ids, aligned arrays
};

struct StatsConfig {
  double target_sensitivity = 0.98;
  int n_ci = 10000;    // bootstrap resamples
  int n_perm = 10000;  // permutation-test permutations
  double alpha = 0.05;
  uint64_t seed = 7;
};

// Largest threshold achieving sensitivity >= target (maximizes specificity
// subject to the constraint). Candidates are the observed scores plus a
// below-minimum fallback that classifies everything malignant.
double threshold_at_sensitivity(const ScoredSet& s, double target);

struct Rates {
  std::optional<double> sensitivity;  // empty when no positives present
  std::optional<double> specificity;  // empty when no negatives present
};

Rates confusion_rates(const ScoredSet& s, double threshold);

// Trapezoidal ROC area == Mann-Whitney P(pos > neg) + 0.5 P(tie).
double auc(const ScoredSet& s);

struct Interval {
  double lo = 0.0, hi = 0.0;
  bool degenerate = false;  // bootstrap distribution collapsed to one value
};

// Bias-corrected and accelerated bootstrap 95% interval. Resampling is
// stratified by class so both rates stay defined in every resample.
Interval bca_interval(const ScoredSet& s,
                      const std::function<double(const ScoredSet&)>& statistic,
                      const StatsConfig& cfg);

// Two-sided paired permutation test on T = specificity_A - specificity_B,
// each at its own refit threshold; the null swaps the two models' scores per
// lesion with probability 1/2.
double paired_permutation_test(const ScoredSet& a, const ScoredSet& b,
                               const StatsConfig& cfg);

struct MetricWithCi {
  double value = 0.0;
  Interval ci;
};

struct EvalReport {
  MetricWithCi sensitivity, specificity, auc;
  double threshold = 0.0;
  std::map<std::string, double> p_values;  // vs other models, by tag
};

// Fixed-sensitivity operating point + AUC, each with a BCa interval.
EvalReport evaluate(const ScoredSet& s, const StatsConfig& cfg);

std::string report_to_json(const EvalReport& r);

double normal_cdf(double x);
double normal_quantile(double p);

}  // namespace eisderm::stats
