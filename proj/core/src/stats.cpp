#include "eisderm/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "eisderm/rng.hpp"

namespace eisderm::stats {

void ScoredSet::push(std::string id, int label, double score) {
  ids.push_back(std::move(id));
  labels.push_back(label);
  scores.push_back(score);
}

void ScoredSet::validate() const {
  if (ids.size() != labels.size() || ids.size() != scores.size())
    throw ContractError("ScoredSet: misaligned arrays");
  std::unordered_set<std::string> seen;
  for (const auto& id : ids)
    if (!seen.insert(id).second)
      throw ContractError("ScoredSet: duplicate lesion id " + id);
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// Acklam's rational approximation with one Halley refinement step.
double normal_quantile(double p) {
  if (p <= 0.0) return -std::numeric_limits<double>::infinity();
  if (p >= 1.0) return std::numeric_limits<double>::infinity();
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425, phigh = 1 - plow;
  double x;
  if (p < plow) {
    double q = std::sqrt(-2 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  } else if (p <= phigh) {
    double q = p - 0.5, r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) *
        q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
  } else {
    double q = std::sqrt(-2 * std::log(1 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  }
  double e = normal_cdf(x) - p;
  double u = e * std::sqrt(2 * M_PI) * std::exp(x * x / 2);
  return x - u / (1 + x * u / 2);
}

double threshold_at_sensitivity(const ScoredSet& s, double target) {
  if (target > 1.0)
    throw ContractError("threshold_at_sensitivity: target > 1 unreachable");
  std::vector<double> pos;
  for (size_t i = 0; i < s.size(); ++i)
    if (s.labels[i]) pos.push_back(s.scores[i]);
  if (pos.empty())
    throw ContractError("threshold_at_sensitivity: no positive lesions");
  std::sort(pos.begin(), pos.end());
  size_t P = pos.size();
  // Need at least `need` positives strictly above the threshold.
  size_t need = (size_t)std::ceil(target * (double)P - 1e-12);
  need = std::max<size_t>(need, 1);
  double cutoff = pos[P - need];  // threshold must be < this score
  double best = -std::numeric_limits<double>::infinity();
  bool found = false;
  for (double v : s.scores)
    if (v < cutoff && v > best) {
      best = v;
      found = true;
    }
  if (found) return best;
  // Fallback below every observed score: everything is called malignant.
  return *std::min_element(s.scores.begin(), s.scores.end()) - 1.0;
}

Rates confusion_rates(const ScoredSet& s, double threshold) {
  size_t tp = 0, fn = 0, tn = 0, fp = 0;
  for (size_t i = 0; i < s.size(); ++i) {
    bool called = s.scores[i] > threshold;
    if (s.labels[i])
      (called ? tp : fn)++;
    else
      (called ? fp : tn)++;
  }
  Rates r;
  if (tp + fn) r.sensitivity = (double)tp / (double)(tp + fn);
  if (tn + fp) r.specificity = (double)tn / (double)(tn + fp);
  return r;
}

double auc(const ScoredSet& s) {
  size_t P = 0, N = 0;
  for (int l : s.labels) (l ? P : N)++;
  if (P == 0 || N == 0)
    throw ContractError("auc: both classes must be present");
  std::vector<size_t> order(s.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return s.scores[a] < s.scores[b]; });
  // Average ranks across ties, then the Mann-Whitney statistic.
  std::vector<double> rank(s.size());
  size_t i = 0;
  while (i < order.size()) {
    size_t j = i;
    while (j + 1 < order.size() &&
           s.scores[order[j + 1]] == s.scores[order[i]])
      ++j;
    double avg = ((double)i + (double)j) / 2.0 + 1.0;
    for (size_t k = i; k <= j; ++k) rank[order[k]] = avg;
    i = j + 1;
  }
  double pos_rank_sum = 0.0;
  for (size_t k = 0; k < s.size(); ++k)
    if (s.labels[k]) pos_rank_sum += rank[k];
  double u = pos_rank_sum - (double)P * ((double)P + 1.0) / 2.0;
  return u / ((double)P * (double)N);
}

namespace {

std::vector<size_t> class_indices(const ScoredSet& s, int label) {
  std::vector<size_t> out;
  for (size_t i = 0; i < s.size(); ++i)
    if (s.labels[i] == label) out.push_back(i);
  return out;
}

ScoredSet subset(const ScoredSet& s, const std::vector<size_t>& idx) {
  ScoredSet out;
  for (size_t i : idx)
    out.push(s.ids[i], s.labels[i], s.scores[i]);
  return out;
}

double quantile_sorted(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return 0.0;
  double pos = q * (double)(sorted.size() - 1);
  long lo = std::clamp((long)std::floor(pos), 0L, (long)sorted.size() - 1);
  long hi = std::clamp(lo + 1, 0L, (long)sorted.size() - 1);
  double frac = pos - (double)lo;
  return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

}  // namespace

Interval bca_interval(const ScoredSet& s,
                      const std::function<double(const ScoredSet&)>& statistic,
                      const StatsConfig& cfg) {
  if (s.size() < 2) throw ContractError("bca_interval: need n >= 2");
  double theta_hat = statistic(s);
  auto pos = class_indices(s, 1);
  auto neg = class_indices(s, 0);
  Rng rng(cfg.seed);
  std::vector<double> thetas;
  thetas.reserve((size_t)cfg.n_ci);
  std::vector<size_t> idx(s.size());
  for (int b = 0; b < cfg.n_ci; ++b) {
    idx.clear();
    for (size_t k = 0; k < pos.size(); ++k)
      idx.push_back(pos[rng.below(pos.size())]);
    for (size_t k = 0; k < neg.size(); ++k)
      idx.push_back(neg[rng.below(neg.size())]);
    thetas.push_back(statistic(subset(s, idx)));
  }
  std::vector<double> sorted = thetas;
  std::sort(sorted.begin(), sorted.end());
  if (sorted.front() == sorted.back())
    return {theta_hat, theta_hat, true};

  size_t below = 0;
  for (double t : thetas)
    if (t < theta_hat) ++below;
  double frac =
      std::clamp((double)below / (double)cfg.n_ci, 0.5 / cfg.n_ci,
                 1.0 - 0.5 / cfg.n_ci);
  double z0 = normal_quantile(frac);

  // Jackknife acceleration.
  double a = 0.0;
  {
    std::vector<double> jack(s.size());
    std::vector<size_t> keep;
    keep.reserve(s.size() - 1);
    for (size_t i = 0; i < s.size(); ++i) {
      keep.clear();
      for (size_t k = 0; k < s.size(); ++k)
        if (k != i) keep.push_back(k);
      jack[i] = statistic(subset(s, keep));
    }
    double mean = std::accumulate(jack.begin(), jack.end(), 0.0) /
                  (double)jack.size();
    double s2 = 0.0, s3 = 0.0;
    for (double v : jack) {
      double d = mean - v;
      s2 += d * d;
      s3 += d * d * d;
    }
    double denom = 6.0 * std::pow(s2, 1.5);
    a = denom > 0.0 ? s3 / denom : 0.0;
  }

  double z_lo = normal_quantile(0.025), z_hi = normal_quantile(0.975);
  auto adjust = [&](double z) {
    double num = z0 + z;
    return normal_cdf(z0 + num / (1.0 - a * num));
  };
  return {quantile_sorted(sorted, adjust(z_lo)),
          quantile_sorted(sorted, adjust(z_hi)), false};
}

namespace {

double specificity_at_target(const ScoredSet& s, double target) {
  double t = threshold_at_sensitivity(s, target);
  return confusion_rates(s, t).specificity.value();
}

}  // namespace

double paired_permutation_test(const ScoredSet& a, const ScoredSet& b,
                               const StatsConfig& cfg) {
  if (a.size() != b.size())
    throw ContractError("paired_permutation_test: sets differ in size");
  // Align b's scores to a's lesion order.
  std::unordered_map<std::string, double> b_scores;
  for (size_t i = 0; i < b.size(); ++i) b_scores[b.ids[i]] = b.scores[i];
  std::vector<double> sa = a.scores, sb(a.size());
  for (size_t i = 0; i < a.size(); ++i) {
    auto it = b_scores.find(a.ids[i]);
    if (it == b_scores.end())
      throw ContractError("paired_permutation_test: lesion sets differ (" +
                          a.ids[i] + " missing)");
    sb[i] = it->second;
  }

  ScoredSet wa = a, wb = a;
  wb.scores = sb;
  double t_obs = specificity_at_target(wa, cfg.target_sensitivity) -
                 specificity_at_target(wb, cfg.target_sensitivity);

  Rng rng(cfg.seed);
  size_t ge = 0;
  for (int p = 0; p < cfg.n_perm; ++p) {
    for (size_t i = 0; i < a.size(); ++i) {
      bool swap = rng.uniform() < 0.5;
      wa.scores[i] = swap ? sb[i] : sa[i];
      wb.scores[i] = swap ? sa[i] : sb[i];
    }
    double t = specificity_at_target(wa, cfg.target_sensitivity) -
               specificity_at_target(wb, cfg.target_sensitivity);
    if (std::abs(t) >= std::abs(t_obs) - 1e-12) ++ge;
  }
  return ((double)ge + 1.0) / ((double)cfg.n_perm + 1.0);
}

EvalReport evaluate(const ScoredSet& s, const StatsConfig& cfg) {
  s.validate();
  EvalReport r;
  r.threshold = threshold_at_sensitivity(s, cfg.target_sensitivity);
  Rates rates = confusion_rates(s, r.threshold);
  r.sensitivity.value = rates.sensitivity.value();
  r.specificity.value = rates.specificity.value();
  r.auc.value = auc(s);
  double t = r.threshold;
  r.sensitivity.ci = bca_interval(
      s,
      [t](const ScoredSet& x) {
        return confusion_rates(x, t).sensitivity.value();
      },
      cfg);
  r.specificity.ci = bca_interval(
      s,
      [t](const ScoredSet& x) {
        return confusion_rates(x, t).specificity.value();
      },
      cfg);
  r.auc.ci = bca_interval(s, [](const ScoredSet& x) { return auc(x); }, cfg);
  return r;
}

std::string report_to_json(const EvalReport& r) {
  auto metric = [](const MetricWithCi& m) {
    return nlohmann::ordered_json{{"value", m.value},
                                  {"ci_lo", m.ci.lo},
                                  {"ci_hi", m.ci.hi},
                                  {"degenerate", m.ci.degenerate}};
  };
  nlohmann::ordered_json j{{"sensitivity", metric(r.sensitivity)},
                           {"specificity", metric(r.specificity)},
                           {"auc", metric(r.auc)},
                           {"threshold", r.threshold}};
  if (!r.p_values.empty()) j["p_values"] = r.p_values;
  return j.dump(2);
}

}  // namespace eisderm::stats
