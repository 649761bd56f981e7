// Acceptance suite: prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "eisderm/fusion.hpp"
#include "eisderm/harness.hpp"
#include "eisderm/synth.hpp"

using namespace eisderm;
using ad::Tensor;

namespace {

int g_failures = 0;

void verdict(int criterion, bool pass, const std::string& detail) {
  std::printf("%s criterion %d: %s\n", pass ? "PASS" : "FAIL", criterion,
              detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

double now_seconds() {
  using clock = std::chrono::steady_clock;
  static const auto t0 = clock::now();
  return std::chrono::duration<double>(clock::now() - t0).count();
}

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Tensor random_leaf(ad::Shape shape, Rng& rng, double scale = 1.0) {
  std::vector<double> v(ad::shape_size(shape));
  for (double& x : v) x = scale * rng.normal();
  return Tensor::from(std::move(shape), std::move(v), true);
}

double fd_worst_rel_err(Tensor leaf, const std::function<double()>& loss) {
  const double eps = 1e-5;
  double worst = 0.0;
  for (size_t i = 0; i < leaf.size(); ++i) {
    double keep = leaf.data()[i];
    leaf.data()[i] = keep + eps;
    double up = loss();
    leaf.data()[i] = keep - eps;
    double dn = loss();
    leaf.data()[i] = keep;
    double fd = (up - dn) / (2.0 * eps);
    double an = leaf.grad()[i];
    double denom = std::max({std::abs(fd), std::abs(an), 1e-6});
    worst = std::max(worst, std::abs(fd - an) / denom);
  }
  return worst;
}

// ---------------------------------------------------------------------------
// 1. Gradient suite across 20 seeds, < 1 min.
void criterion_1() {
  double start = now_seconds();
  double worst = 0.0;
  for (uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(seed);
    Tensor img = random_leaf({2, 8, 8}, rng, 0.6);
    Tensor cw = random_leaf({3, 2, 3, 3}, rng, 0.4);
    Tensor cb = random_leaf({3, 1}, rng, 0.2);
    Tensor A = random_leaf({4, 3}, rng, 0.5);
    Tensor b2 = random_leaf({4, 1}, rng, 0.3);
    Tensor w3 = random_leaf({4, 1}, rng, 0.5);
    Tensor row = random_leaf({1, 8}, rng, 0.5);
    Tensor row2 = random_leaf({1, 4}, rng, 0.5);
    auto forward = [&] {
      Tensor gap = ad::global_avg_pool(
          ad::relu(ad::maxpool2d(ad::conv2d(img, cw, cb))));
      Tensor u = ad::tanh_op(ad::add(ad::matmul(A, gap), b2));
      Tensor v = ad::sigmoid(ad::affine(u, 1.3, -0.2));
      Tensor m = ad::mul(v, w3);
      Tensor seq = ad::concat_cols({u, v, m});
      Tensor pooled = ad::concat_rows(
          {ad::seq_max_pool(seq), ad::seq_mean_pool(seq)});
      Tensor logit1 = ad::matmul(row, pooled);
      Tensor diff =
          ad::sub(ad::slice_cols(seq, 0, 2), ad::slice_cols(seq, 1, 3));
      Tensor logit2 = ad::matmul(row2, diff);
      return ad::add(ad::bce_with_logits_mean(logit1, {1.0}),
                     ad::scale(ad::bce_with_logits_mean(logit2, {0.0, 1.0}),
                               0.5));
    };
    std::vector<Tensor> leaves = {img, cw, cb, A, b2, w3, row, row2};
    Tensor loss = forward();
    ad::zero_grad(leaves);
    ad::backward(loss);
    auto scalar = [&] { return forward().item(); };
    for (auto& leaf : leaves)
      worst = std::max(worst, fd_worst_rel_err(leaf, scalar));
  }
  double elapsed = now_seconds() - start;
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "autodiff vs finite differences, worst rel err %.2e over 20 "
                "seeds in %.1fs",
                worst, elapsed);
  verdict(1, worst < 1e-4 && elapsed < 60.0, buf);
}

// ---------------------------------------------------------------------------
// 2. Hand-computed GRU step, h_j = z_j c_j + (1 - z_j) h_{j-1}.
void criterion_2() {
  GruCell cell;
  cell.hidden = 2;
  cell.input = 1;
  cell.Mz = Tensor::from({2, 2}, {0.5, -0.3, 0.2, 0.1});
  cell.Mr = Tensor::from({2, 2}, {-0.4, 0.6, 0.3, -0.2});
  cell.Mc = Tensor::from({2, 2}, {0.7, 0.1, -0.5, 0.4});
  cell.Lz = Tensor::from({2, 1}, {0.4, -0.2});
  cell.Lr = Tensor::from({2, 1}, {-0.6, 0.5});
  cell.Lc = Tensor::from({2, 1}, {0.8, -0.7});
  double x1 = 0.9, x2 = -1.3;
  double z1a = sig(0.4 * x1), z1b = sig(-0.2 * x1);
  double h1a = z1a * std::tanh(0.8 * x1), h1b = z1b * std::tanh(-0.7 * x1);
  double z2a = sig(0.5 * h1a - 0.3 * h1b + 0.4 * x2);
  double z2b = sig(0.2 * h1a + 0.1 * h1b - 0.2 * x2);
  double r2a = sig(-0.4 * h1a + 0.6 * h1b - 0.6 * x2);
  double r2b = sig(0.3 * h1a - 0.2 * h1b + 0.5 * x2);
  double c2a = std::tanh(0.7 * (r2a * h1a) + 0.1 * (r2b * h1b) + 0.8 * x2);
  double c2b = std::tanh(-0.5 * (r2a * h1a) + 0.4 * (r2b * h1b) - 0.7 * x2);
  double h2a = z2a * c2a + (1.0 - z2a) * h1a;
  double h2b = z2b * c2b + (1.0 - z2b) * h1b;

  auto enc = gru_encode(cell, Tensor::from({1, 2}, {x1, x2}), PoolMode::Last);
  double err = 0.0;
  double want[4] = {h1a, h2a, h1b, h2b};
  for (int i = 0; i < 4; ++i)
    err = std::max(err, std::abs(enc.H.data()[i] - want[i]));
  err = std::max(err, std::abs(enc.pooled.data()[0] - h2a));
  err = std::max(err, std::abs(enc.pooled.data()[1] - h2b));
  char buf[128];
  std::snprintf(buf, sizeof(buf),
                "hand-computed two-step GRU, max abs err %.2e", err);
  verdict(2, err <= 1e-12, buf);
}

// ---------------------------------------------------------------------------
// 3. Pooling equivalence and max dominance.
void criterion_3() {
  bool ok = true;
  Rng rng(3);
  auto make_cell = [&](size_t H, size_t I) {
    GruCell cell;
    cell.hidden = H;
    cell.input = I;
    cell.Mz = random_leaf({H, H}, rng, 0.5);
    cell.Mr = random_leaf({H, H}, rng, 0.5);
    cell.Mc = random_leaf({H, H}, rng, 0.5);
    cell.Lz = random_leaf({H, I}, rng, 0.5);
    cell.Lr = random_leaf({H, I}, rng, 0.5);
    cell.Lc = random_leaf({H, I}, rng, 0.5);
    return cell;
  };
  for (int trial = 0; trial < 100 && ok; ++trial) {
    GruCell cell = make_cell(4, 3);
    // N = 1: the three pooling modes agree bitwise.
    Tensor x1 = random_leaf({3, 1}, rng);
    auto last = gru_encode(cell, x1, PoolMode::Last);
    auto mean = gru_encode(cell, x1, PoolMode::Mean);
    auto mx = gru_encode(cell, x1, PoolMode::Max);
    ok = ok && last.pooled.data() == mean.pooled.data() &&
         mean.pooled.data() == mx.pooled.data();
    // N > 1: the max pool dominates every state column.
    size_t n = 2 + rng.below(5);
    Tensor xs = random_leaf({3, n}, rng);
    auto enc = gru_encode(cell, xs, PoolMode::Max);
    for (size_t i = 0; i < 4; ++i) {
      double best = -1e300;
      for (size_t j = 0; j < n; ++j) {
        double h = enc.H.data()[i * n + j];
        ok = ok && enc.pooled.data()[i] >= h;
        best = std::max(best, h);
      }
      ok = ok && enc.pooled.data()[i] == best;
    }
  }
  verdict(3, ok,
          "N=1 pooling bitwise identical; max dominates state columns on 100 "
          "sequences");
}

// ---------------------------------------------------------------------------
// 4. Statistics oracles.
stats::ScoredSet random_scores(size_t n, Rng& rng, double sep) {
  stats::ScoredSet s;
  for (size_t i = 0; i < n; ++i) {
    int label = rng.uniform() < 0.4 ? 1 : 0;
    s.push("L" + std::to_string(i), label, sig(rng.normal() + sep * label));
  }
  s.labels[0] = 0;
  s.labels[n - 1] = 1;
  return s;
}

double mw_auc(const stats::ScoredSet& s) {
  double num = 0.0;
  size_t p = 0, n = 0;
  for (size_t i = 0; i < s.size(); ++i) {
    if (!s.labels[i]) {
      ++n;
      continue;
    }
    ++p;
    for (size_t j = 0; j < s.size(); ++j) {
      if (s.labels[j]) continue;
      if (s.scores[i] > s.scores[j]) num += 1.0;
      else if (s.scores[i] == s.scores[j]) num += 0.5;
    }
  }
  return num / ((double)p * (double)n);
}

void criterion_4() {
  double start = now_seconds();
  Rng rng(4);
  bool auc_ok = true;
  for (int trial = 0; trial < 30; ++trial) {
    stats::ScoredSet s = random_scores(20 + rng.below(60), rng, 0.8);
    for (double& v : s.scores) v = std::round(v * 8.0) / 8.0;  // force ties
    auc_ok = auc_ok && stats::auc(s) == mw_auc(s);
  }

  bool thr_ok = true;
  for (int trial = 0; trial < 40; ++trial) {
    stats::ScoredSet s = random_scores(5 + rng.below(196), rng, 1.0);
    for (double target : {0.5, 0.9, 0.98, 1.0}) {
      double t = stats::threshold_at_sensitivity(s, target);
      // brute force over every candidate threshold
      std::vector<double> cands = s.scores;
      cands.push_back(*std::min_element(s.scores.begin(), s.scores.end()) -
                      1.0);
      double best_spec = -1.0;
      for (double c : cands) {
        auto r = stats::confusion_rates(s, c);
        if (*r.sensitivity >= target) best_spec = std::max(best_spec, *r.specificity);
      }
      auto got = stats::confusion_rates(s, t);
      thr_ok = thr_ok && *got.sensitivity >= target &&
               std::abs(*got.specificity - best_spec) < 1e-12;
    }
  }

  int covered = 0;
  const int trials = 500;
  Rng crng(44);
  for (int trial = 0; trial < trials; ++trial) {
    stats::ScoredSet s;
    for (int i = 0; i < 200; ++i)
      s.push("D" + std::to_string(i), i % 2, crng.normal());
    stats::StatsConfig cfg;
    cfg.n_ci = 600;
    cfg.seed = 5000 + (uint64_t)trial;
    auto iv = stats::bca_interval(
        s,
        [](const stats::ScoredSet& x) {
          double m = 0.0;
          for (double v : x.scores) m += v;
          return m / (double)x.size();
        },
        cfg);
    covered += (iv.lo <= 0.0 && 0.0 <= iv.hi);
  }
  double cov = (double)covered / (double)trials;
  double elapsed = now_seconds() - start;
  char buf[200];
  std::snprintf(buf, sizeof(buf),
                "auc oracle %s, threshold brute force %s, BCa coverage %.3f "
                "over 500 trials in %.1fs",
                auc_ok ? "exact" : "MISMATCH",
                thr_ok ? "matched" : "MISMATCH", cov, elapsed);
  verdict(4, auc_ok && thr_ok && cov >= 0.90 && cov <= 0.98 && elapsed < 120.0,
          buf);
}

// ---------------------------------------------------------------------------
// 5-8. Seeded experiment matrix on the default dataset shape.
struct SeedResults {
  std::map<std::string, double> auc, spec;
};

std::vector<stats::EvalReport> g_reports;

RunRecord run_model(const Dataset& data, const std::string& tag,
                    uint64_t seed) {
  ExperimentConfig cfg;
  cfg.model_tag = tag;
  cfg.seed = seed;
  cfg.stats.n_ci = 200;
  cfg.stats.n_perm = 2000;
  std::cerr << "  [seed " << seed << "] " << tag << "..." << std::flush;
  RunRecord rec = run_cv(data, cfg);
  std::cerr << " auc " << rec.report.auc.value << " spec "
            << rec.report.specificity.value << " (" << (int)rec.wall_seconds
            << "s)\n";
  g_reports.push_back(rec.report);
  return rec;
}

void criteria_5_7_8() {
  const std::vector<uint64_t> seeds = {1, 2, 3, 4, 5};
  const std::vector<std::string> combined = {"fused-lin", "fused-fc",
                                             "fused-ca"};
  double start = now_seconds();
  int pass5 = 0, pass7 = 0;
  RunRecord ca_first, cnn_first;
  std::ostringstream detail5;
  for (uint64_t seed : seeds) {
    GenConfig g;  // default 988-lesion shape, complementarity 1
    g.seed = seed;
    Dataset data = gen_dataset_memory(g);
    SeedResults r;
    for (const std::string& tag :
         {std::string("gru-max"), std::string("gru-last"), std::string("cnn"),
          combined[0], combined[1], combined[2]}) {
      RunRecord rec = run_model(data, tag, seed);
      r.auc[tag] = rec.report.auc.value;
      r.spec[tag] = rec.report.specificity.value;
      if (seed == seeds.front() && tag == "fused-ca") ca_first = rec;
      if (seed == seeds.front() && tag == "cnn") cnn_first = rec;
    }
    double single_auc = std::max(r.auc["gru-max"], r.auc["cnn"]);
    double single_spec = std::max(r.spec["gru-max"], r.spec["cnn"]);
    bool auc_ok = true;
    for (const auto& tag : combined)
      auc_ok = auc_ok && r.auc[tag] >= single_auc + 0.02;
    bool spec_ok = r.spec["fused-ca"] >= single_spec + 0.05;
    pass5 += auc_ok && spec_ok;
    pass7 += r.auc["gru-max"] >= r.auc["gru-last"];
    detail5 << (auc_ok && spec_ok ? " +" : " -");
  }
  double elapsed = now_seconds() - start;
  char buf[200];
  std::snprintf(buf, sizeof(buf),
                "fusion ordering on%s holds for %d/5 seeds in %.0fs",
                detail5.str().c_str(), pass5, elapsed);
  verdict(5, pass5 >= 4 && elapsed < 1800.0, buf);

  // criterion 6 runs next on its own datasets so the verdicts stay in order.
  {
    int pass6 = 0;
    std::ostringstream detail6;
    for (uint64_t seed : seeds) {
      GenConfig g;
      g.seed = seed;
      g.complementarity = 0.0;
      Dataset data = gen_dataset_memory(g);
      SeedResults r;
      for (const std::string& tag :
           {std::string("gru-max"), std::string("cnn"), std::string("fused-lin"),
            std::string("fused-ca")}) {
        RunRecord rec = run_model(data, tag, seed);
        r.auc[tag] = rec.report.auc.value;
      }
      double single = std::max(r.auc["gru-max"], r.auc["cnn"]);
      double comb = std::max(r.auc["fused-lin"], r.auc["fused-ca"]);
      bool ok = comb - single < 0.02;
      pass6 += ok;
      detail6 << (ok ? " +" : " -");
    }
    std::snprintf(buf, sizeof(buf),
                  "redundant modalities (knob 0): AUC gap < 0.02 on%s, %d/5 "
                  "seeds",
                  detail6.str().c_str(), pass6);
    verdict(6, pass6 >= 4, buf);
  }

  std::snprintf(buf, sizeof(buf),
                "gru-max pooled AUC >= gru-last for %d/5 seeds", pass7);
  verdict(7, pass7 >= 4, buf);

  stats::StatsConfig scfg;
  scfg.n_perm = 2000;
  double p_ab = compare_runs(ca_first, cnn_first, scfg);
  double p_self = compare_runs(cnn_first, cnn_first, scfg);
  std::snprintf(buf, sizeof(buf),
                "compare(fused-ca, cnn) p = %.4f; compare(run, itself) p = "
                "%.4f",
                p_ab, p_self);
  verdict(8, p_ab < 0.05 && p_self == 1.0, buf);
}

// ---------------------------------------------------------------------------
// 9. Byte-identical reproduce runs.
std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

void criterion_9() {
  namespace fs = std::filesystem;
  std::string bin;
  for (const char* cand :
       {"../tools/eisderm", "tools/eisderm", "./eisderm", "build/tools/eisderm"})
    if (fs::exists(cand)) {
      bin = cand;
      break;
    }
  if (bin.empty()) {
    verdict(9, false, "eisderm binary not found next to the test binary");
    return;
  }
  std::string args =
      " reproduce -s 3 gen.n_lesions=60 gen.img_h=24 gen.img_w=24"
      " reproduce.models=fcnn train.eis_epochs=3 stats.n_ci=100"
      " stats.n_perm=100 >/dev/null 2>&1";
  fs::remove_all("acc_rep_a");
  fs::remove_all("acc_rep_b");
  int rc1 = std::system((bin + args + " -o acc_rep_a").c_str());
  int rc2 = std::system((bin + args + " -o acc_rep_b").c_str());
  bool ok = rc1 == 0 && rc2 == 0;
  std::string pa = slurp("acc_rep_a/predictions_fcnn.csv");
  std::string pb = slurp("acc_rep_b/predictions_fcnn.csv");
  std::string ra = slurp("acc_rep_a/report_fcnn.json");
  std::string rb = slurp("acc_rep_b/report_fcnn.json");
  ok = ok && !pa.empty() && pa == pb && !ra.empty() && ra == rb;
  if (ok) {
    auto j = nlohmann::json::parse(ra);
    stats::EvalReport rep;
    rep.sensitivity.value = j["sensitivity"]["value"].get<double>();
    rep.specificity.value = j["specificity"]["value"].get<double>();
    rep.auc.value = j["auc"]["value"].get<double>();
    g_reports.push_back(rep);
  }
  fs::remove_all("acc_rep_a");
  fs::remove_all("acc_rep_b");
  verdict(9, ok,
          "reproduce twice with one master seed: prediction CSV and report "
          "JSON byte-identical");
}

// ---------------------------------------------------------------------------
// 10. Every emitted report row holds the 98% sensitivity contract.
void criterion_10() {
  double worst = 1.0;
  for (const auto& r : g_reports) worst = std::min(worst, r.sensitivity.value);
  char buf[128];
  std::snprintf(buf, sizeof(buf),
                "all %zu emitted reports have sensitivity >= 0.98 (min %.4f)",
                g_reports.size(), worst);
  verdict(10, !g_reports.empty() && worst >= 0.98, buf);
}

}  // namespace

int main() {
  criterion_1();
  criterion_2();
  criterion_3();
  criterion_4();
  criteria_5_7_8();
  criterion_9();
  criterion_10();
  return g_failures == 0 ? 0 : 1;
}
