#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdio>
#include <filesystem>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "eisderm/harness.hpp"
#include "eisderm/synth.hpp"

using namespace eisderm;

namespace {

GenConfig tiny_gen(uint64_t seed = 1) {
  GenConfig cfg;
  cfg.n_lesions = 50;
  cfg.n_benign = 32;
  cfg.n_malignant = 18;
  cfg.img_h = 24;
  cfg.img_w = 24;
  cfg.seed = seed;
  return cfg;
}

ExperimentConfig tiny_experiment(const std::string& tag, uint64_t seed = 1) {
  ExperimentConfig cfg;
  cfg.model_tag = tag;
  cfg.seed = seed;
  cfg.eis_epochs = 2;
  cfg.cnn_epochs = 2;
  cfg.joint_epochs = 2;
  cfg.crop_size = 16;
  cfg.n_crops = 4;
  cfg.n_perm_eval = 2;
  cfg.stats.n_ci = 50;
  cfg.stats.n_perm = 50;
  return cfg;
}

}  // namespace

TEST_CASE("model tag registry") {
  for (const char* tag : {"fcnn", "gru-last", "gru-mean", "gru-max", "cnn",
                          "fused-lin", "fused-fc", "fused-ca"})
    CHECK(is_known_tag(tag));
  CHECK(is_known_tag("ensemble-cnn+gru-max"));
  CHECK(is_known_tag("ensemble-fcnn+cnn"));
  CHECK_FALSE(is_known_tag(""));
  CHECK_FALSE(is_known_tag("gru"));
  CHECK_FALSE(is_known_tag("resnet"));
  CHECK_FALSE(is_known_tag("ensemble-cnn"));
  CHECK_FALSE(is_known_tag("ensemble-cnn+unknown"));
  CHECK_FALSE(is_known_tag("ensemble-+cnn"));
}

TEST_CASE("unknown tags are rejected by the factory and the harness") {
  Rng rng(1);
  CHECK_THROWS_AS((void)make_classifier("resnet", rng), ContractError);
  Dataset ds = gen_dataset_memory(tiny_gen());
  ExperimentConfig cfg = tiny_experiment("not-a-model");
  CHECK_THROWS_AS((void)run_cv(ds, cfg), ContractError);
}

TEST_CASE("config hash is stable and sensitive to every field family") {
  ExperimentConfig a;
  ExperimentConfig b;
  CHECK(a.hash() == b.hash());
  b.model_tag = "cnn";
  CHECK(a.hash() != b.hash());
  b = a;
  b.seed = 2;
  CHECK(a.hash() != b.hash());
  b = a;
  b.mode = RunMode::Validate;
  CHECK(a.hash() != b.hash());
  b = a;
  b.eis_lr = 2e-3;
  CHECK(a.hash() != b.hash());
  b = a;
  b.n_crops = 9;
  CHECK(a.hash() != b.hash());
  b = a;
  b.stats.n_ci = 999;
  CHECK(a.hash() != b.hash());
}

TEST_CASE("paper preset records the published recipe") {
  ExperimentConfig cfg;
  cfg.apply_paper_preset();
  CHECK(cfg.eis_epochs == 200);
  CHECK(cfg.eis_lr == 2e-5);
  CHECK(cfg.cnn_epochs == 100);
  CHECK(cfg.cnn_lr == 2.5e-5);
  CHECK(cfg.crop_size == 224);
  CHECK(cfg.n_crops == 36);
}

TEST_CASE("cross-validation pools every lesion exactly once") {
  Dataset ds = gen_dataset_memory(tiny_gen());
  ExperimentConfig cfg = tiny_experiment("fcnn");
  RunRecord rec = run_cv(ds, cfg);
  CHECK(rec.model_tag == "fcnn");
  CHECK(rec.seed == cfg.seed);
  CHECK(rec.config_hash == cfg.hash());
  REQUIRE(rec.pooled.size() == ds.lesions.size());
  std::set<std::string> seen(rec.pooled.ids.begin(), rec.pooled.ids.end());
  CHECK(seen.size() == ds.lesions.size());
  size_t want_eval = 0;
  for (const auto& l : ds.lesions) want_eval += l.in_eval_subset();
  CHECK(rec.eval_subset.size() == want_eval);
  for (double p : rec.pooled.scores) {
    CHECK(p >= 0.0);
    CHECK(p <= 1.0);
  }
  CHECK(rec.report.sensitivity.value >= 0.0);
  CHECK(rec.wall_seconds > 0.0);
}

TEST_CASE("cross-validation is bit-reproducible for a fixed config") {
  Dataset ds = gen_dataset_memory(tiny_gen(2));
  ExperimentConfig cfg = tiny_experiment("fcnn", 7);
  RunRecord a = run_cv(ds, cfg);
  RunRecord b = run_cv(ds, cfg);
  REQUIRE(a.pooled.size() == b.pooled.size());
  CHECK(a.pooled.ids == b.pooled.ids);
  CHECK(a.pooled.scores == b.pooled.scores);
  CHECK(a.report.auc.value == b.report.auc.value);
  CHECK(a.report.specificity.ci.lo == b.report.specificity.ci.lo);

  ExperimentConfig other = cfg;
  other.seed = 8;
  RunRecord c = run_cv(ds, other);
  CHECK(a.pooled.scores != c.pooled.scores);
}

TEST_CASE("validate mode holds out an extra fold but still scores all lesions") {
  Dataset ds = gen_dataset_memory(tiny_gen(3));
  ExperimentConfig cfg = tiny_experiment("fcnn", 3);
  cfg.mode = RunMode::Validate;
  RunRecord rec = run_cv(ds, cfg);
  CHECK(rec.pooled.size() == ds.lesions.size());
  ExperimentConfig test_cfg = cfg;
  test_cfg.mode = RunMode::Test;
  RunRecord test_rec = run_cv(ds, test_cfg);
  // Different training sets must change at least some scores.
  CHECK(rec.pooled.scores != test_rec.pooled.scores);
}

TEST_CASE("a run compared to itself has p-value one") {
  Dataset ds = gen_dataset_memory(tiny_gen(4));
  ExperimentConfig cfg = tiny_experiment("fcnn", 4);
  RunRecord rec = run_cv(ds, cfg);
  CHECK(compare_runs(rec, rec, cfg.stats) == doctest::Approx(1.0));
  RunRecord truncated = rec;
  truncated.eval_subset = stats::ScoredSet();
  truncated.eval_subset.push("only", 1, 0.5);
  CHECK_THROWS_AS((void)compare_runs(rec, truncated, cfg.stats), ContractError);
}

TEST_CASE("tables group models and the csv twin keeps full precision") {
  RunRecord eis, derm, fused;
  auto fill = [](RunRecord& r, const std::string& tag, double auc) {
    r.model_tag = tag;
    r.report.sensitivity = {0.9833333333333333, {0.95, 0.99, false}};
    r.report.specificity = {0.3666666666666667, {0.31, 0.42, false}};
    r.report.auc = {auc, {auc - 0.03, auc + 0.02, false}};
  };
  fill(fused, "fused-ca", 0.871234567891234);
  fill(derm, "cnn", 0.83);
  fill(eis, "gru-max", 0.80);
  std::vector<RunRecord> runs = {fused, derm, eis};

  std::string text = emit_table_text(runs);
  CHECK(text.find("EIS") != std::string::npos);
  CHECK(text.find("Derm") != std::string::npos);
  CHECK(text.find("Combined") != std::string::npos);
  // grouped ordering regardless of input order
  CHECK(text.find("gru-max") < text.find("cnn"));
  CHECK(text.find("cnn") < text.find("fused-ca"));
  CHECK(text.find("98.3") != std::string::npos);

  std::string csv = emit_table_csv(runs);
  std::istringstream is(csv);
  std::string line;
  std::getline(is, line);
  CHECK(line ==
        "group,model_tag,sensitivity,sensitivity_lo,sensitivity_hi,"
        "specificity,specificity_lo,specificity_hi,auc,auc_lo,auc_hi");
  bool found = false;
  while (std::getline(is, line)) {
    auto f = split_csv_line(line);
    REQUIRE(f.size() == 11);
    if (f[1] == "fused-ca") {
      found = true;
      CHECK(f[0] == "Combined");
      // %.17g output reparses to the exact double
      CHECK(std::stod(f[8]) == 0.871234567891234);
      CHECK(std::stod(f[2]) == 0.9833333333333333);
    }
  }
  CHECK(found);
  CHECK_THROWS_AS((void)emit_table_text({}), ContractError);
}

TEST_CASE("prediction csv round-trips scores bitwise") {
  Dataset ds = gen_dataset_memory(tiny_gen(5));
  ExperimentConfig cfg = tiny_experiment("fcnn", 5);
  RunRecord rec = run_cv(ds, cfg);
  std::string path = "harness_pred_tmp.csv";
  write_predictions_csv(path, rec, ds);
  stats::ScoredSet back = read_predictions_csv(path);
  REQUIRE(back.size() == rec.pooled.size());
  CHECK(back.ids == rec.pooled.ids);
  CHECK(back.labels == rec.pooled.labels);
  CHECK(back.scores == rec.pooled.scores);
  std::filesystem::remove(path);
  CHECK_THROWS_AS((void)read_predictions_csv("missing_file.csv"),
                  ContractError);
}

TEST_CASE("classifier checkpoints restore identical predictions") {
  Dataset ds = gen_dataset_memory(tiny_gen(6));
  std::vector<size_t> idx;
  for (size_t i = 0; i < ds.lesions.size(); ++i) idx.push_back(i);
  ExperimentConfig cfg = tiny_experiment("fcnn", 6);
  Rng rng(11);
  auto clf = make_classifier("fcnn", rng);
  clf->train(ds, idx, cfg, 99);
  std::string path = "harness_ckpt_tmp.json";
  clf->save(path);
  Rng fresh(12);
  auto clone = make_classifier("fcnn", fresh);
  clone->load(path);
  Rng r1(13), r2(13);
  for (size_t i = 0; i < 5; ++i)
    CHECK(clf->predict(ds.lesions[i], cfg, r1) ==
          clone->predict(ds.lesions[i], cfg, r2));
  std::filesystem::remove(path);
}
