#include "eisderm/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "eisderm/checkpoint.hpp"
#include "eisderm/derm.hpp"
#include "eisderm/eis.hpp"
#include "eisderm/fusion.hpp"
#include "eisderm/synth.hpp"

namespace eisderm {

namespace {

const std::vector<std::string> kSimpleTags = {
    "fcnn", "gru-last", "gru-mean", "gru-max", "cnn",
    "fused-lin", "fused-fc", "fused-ca"};

bool split_ensemble_tag(const std::string& tag, std::string& a,
                        std::string& b) {
  const std::string prefix = "ensemble-";
  if (tag.rfind(prefix, 0) != 0) return false;
  std::string rest = tag.substr(prefix.size());
  auto plus = rest.find('+');
  if (plus == std::string::npos) return false;
  a = rest.substr(0, plus);
  b = rest.substr(plus + 1);
  return true;
}

}  // namespace

bool is_known_tag(const std::string& tag) {
  for (const auto& t : kSimpleTags)
    if (t == tag) return true;
  std::string a, b;
  if (split_ensemble_tag(tag, a, b))
    return is_known_tag(a) && is_known_tag(b);
  return false;
}

void ExperimentConfig::apply_paper_preset() {
  eis_epochs = 200;
  eis_batch = 10;
  eis_lr = 2e-5;
  cnn_epochs = 100;
  cnn_batch = 20;
  cnn_lr = 2.5e-5;
  joint_epochs = 100;
  joint_batch = 20;
  joint_lr = 2.5e-5;
  crop_size = 224;
  n_crops = 36;
}

uint64_t ExperimentConfig::hash() const {
  std::ostringstream os;
  os << model_tag << "|" << seed << "|" << (mode == RunMode::Test) << "|"
     << eis_epochs << "," << eis_batch << "," << eis_lr << "|" << cnn_epochs
     << "," << cnn_batch << "," << cnn_lr << "|" << joint_epochs << ","
     << joint_batch << "," << joint_lr << "|" << crop_size << "," << n_crops
     << "," << n_perm_eval << "|" << stats.target_sensitivity << ","
     << stats.n_ci << "," << stats.n_perm << "," << stats.seed;
  uint64_t h = 0xcbf29ce484222325ull;
  for (char c : os.str()) {
    h ^= (unsigned char)c;
    h *= 0x100000001b3ull;
  }
  return h;
}

namespace {

class GruClassifier : public Classifier {
 public:
  GruClassifier(PoolMode mode, Rng& rng) : model_(mode, 64, 32, rng) {}

  void train(const Dataset& data, const std::vector<size_t>& train_idx,
             const ExperimentConfig& cfg, uint64_t seed) override {
    Rng rng(seed);
    EisTrainConfig tc{cfg.eis_epochs, cfg.eis_batch, cfg.eis_lr};
    train_gru(model_, data, train_idx, tc, rng);
  }
  double predict(const Lesion& lesion, const ExperimentConfig& cfg,
                 Rng& rng) override {
    return permuted_inference(model_, lesion, cfg.n_perm_eval, rng);
  }
  void save(const std::string& path) override {
    auto pm = model_.params();
    save_params(path, pm);
  }
  void load(const std::string& path) override {
    model_.norm.mean.assign(kEisFeatures, 0.0);
    model_.norm.stddev.assign(kEisFeatures, 1.0);
    auto pm = model_.params();
    load_params(path, pm);
  }

 private:
  GruModel model_;
};

class FcnnClassifier : public Classifier {
 public:
  explicit FcnnClassifier(Rng& rng) : model_(64, rng) {}

  void train(const Dataset& data, const std::vector<size_t>& train_idx,
             const ExperimentConfig& cfg, uint64_t seed) override {
    Rng rng(seed);
    EisTrainConfig tc{cfg.eis_epochs, cfg.eis_batch, cfg.eis_lr};
    train_fcnn(model_, data, train_idx, tc, rng);
  }
  double predict(const Lesion& lesion, const ExperimentConfig&, Rng&) override {
    return fcnn_predict_lesion(model_, lesion).p;
  }
  void save(const std::string& path) override {
    auto pm = model_.params();
    save_params(path, pm);
  }
  void load(const std::string& path) override {
    model_.norm.mean.assign(kEisFeatures, 0.0);
    model_.norm.stddev.assign(kEisFeatures, 1.0);
    auto pm = model_.params();
    load_params(path, pm);
  }

 private:
  FcnnModel model_;
};

class CnnClassifier : public Classifier {
 public:
  explicit CnnClassifier(Rng& rng) : model_(rng) {}

  void train(const Dataset& data, const std::vector<size_t>& train_idx,
             const ExperimentConfig& cfg, uint64_t seed) override {
    Rng rng(seed);
    DermTrainConfig tc;
    tc.epochs = cfg.cnn_epochs;
    tc.batch = cfg.cnn_batch;
    tc.lr = cfg.cnn_lr;
    tc.crop = cfg.crop_size;
    train_cnn(model_, data, train_idx, tc, rng);
  }
  double predict(const Lesion& lesion, const ExperimentConfig& cfg,
                 Rng&) override {
    CropPlan plan = make_crop_plan(lesion.image.h, lesion.image.w,
                                   cfg.crop_size, cfg.n_crops);
    return multicrop_predict(model_, lesion.image, plan);
  }
  void save(const std::string& path) override {
    auto pm = model_.params();
    save_params(path, pm);
  }
  void load(const std::string& path) override {
    auto pm = model_.params();
    load_params(path, pm);
  }

 private:
  CnnModel model_;
};

class JointClassifier : public Classifier {
 public:
  JointClassifier(FusionMode mode, Rng& rng) : model_(mode, rng) {}

  void train(const Dataset& data, const std::vector<size_t>& train_idx,
             const ExperimentConfig& cfg, uint64_t seed) override {
    Rng rng(seed);
    JointTrainConfig tc;
    tc.epochs = cfg.joint_epochs;
    tc.batch = cfg.joint_batch;
    tc.lr = cfg.joint_lr;
    tc.crop = cfg.crop_size;
    train_joint(model_, data, train_idx, tc, rng);
  }
  double predict(const Lesion& lesion, const ExperimentConfig& cfg,
                 Rng& rng) override {
    CropPlan plan = make_crop_plan(lesion.image.h, lesion.image.w,
                                   cfg.crop_size, cfg.n_crops);
    if (model_.mode == FusionMode::CrossAttention) {
      has_heads_ = true;
      return joint_forward(model_, lesion, plan, rng, &last_head_cnn_,
                           &last_head_eis_);
    }
    return joint_forward(model_, lesion, plan, rng);
  }
  bool last_heads(double& cnn, double& eis) const override {
    if (!has_heads_) return false;
    cnn = last_head_cnn_;
    eis = last_head_eis_;
    return true;
  }
  void save(const std::string& path) override {
    auto pm = model_.params();
    save_params(path, pm);
  }
  void load(const std::string& path) override {
    model_.norm.mean.assign(kEisFeatures, 0.0);
    model_.norm.stddev.assign(kEisFeatures, 1.0);
    auto pm = model_.params();
    load_params(path, pm);
  }

 private:
  JointModel model_;
  bool has_heads_ = false;
  double last_head_cnn_ = 0.0, last_head_eis_ = 0.0;
};

class EnsembleClassifier : public Classifier {
 public:
  EnsembleClassifier(const std::string& tag_a, const std::string& tag_b,
                     Rng& rng)
      : a_(make_classifier(tag_a, rng)), b_(make_classifier(tag_b, rng)) {}

  void train(const Dataset& data, const std::vector<size_t>& train_idx,
             const ExperimentConfig& cfg, uint64_t seed) override {
    // Members are independent models trained with different seeds.
    a_->train(data, train_idx, cfg, Rng::mix(seed ^ 0xA));
    b_->train(data, train_idx, cfg, Rng::mix(seed ^ 0xB));
  }
  double predict(const Lesion& lesion, const ExperimentConfig& cfg,
                 Rng& rng) override {
    return ensemble_max(b_->predict(lesion, cfg, rng),
                        a_->predict(lesion, cfg, rng));
  }
  void save(const std::string& path) override {
    a_->save(path + ".a");
    b_->save(path + ".b");
  }
  void load(const std::string& path) override {
    a_->load(path + ".a");
    b_->load(path + ".b");
  }

 private:
  std::unique_ptr<Classifier> a_, b_;
};

}  // namespace

std::unique_ptr<Classifier> make_classifier(const std::string& tag, Rng& rng) {
  if (tag == "fcnn") return std::make_unique<FcnnClassifier>(rng);
  if (tag == "gru-last")
    return std::make_unique<GruClassifier>(PoolMode::Last, rng);
  if (tag == "gru-mean")
    return std::make_unique<GruClassifier>(PoolMode::Mean, rng);
  if (tag == "gru-max")
    return std::make_unique<GruClassifier>(PoolMode::Max, rng);
  if (tag == "cnn") return std::make_unique<CnnClassifier>(rng);
  if (tag == "fused-lin")
    return std::make_unique<JointClassifier>(FusionMode::Linear, rng);
  if (tag == "fused-fc")
    return std::make_unique<JointClassifier>(FusionMode::Fc, rng);
  if (tag == "fused-ca")
    return std::make_unique<JointClassifier>(FusionMode::CrossAttention, rng);
  std::string a, b;
  if (split_ensemble_tag(tag, a, b))
    return std::make_unique<EnsembleClassifier>(a, b, rng);
  throw ContractError("unknown model tag '" + tag + "'");
}

RunRecord run_cv(const Dataset& data, const ExperimentConfig& cfg) {
  if (!is_known_tag(cfg.model_tag))
    throw ContractError("unknown model tag '" + cfg.model_tag + "'");
  auto start = std::chrono::steady_clock::now();
  RunRecord rec;
  rec.model_tag = cfg.model_tag;
  rec.seed = cfg.seed;
  rec.config_hash = cfg.hash();

  struct Entry {
    int label;
    double p;
    int fold;
    double hc = -1.0, he = -1.0;
    bool has_heads = false;
  };
  std::map<std::string, Entry> by_id;

  for (int fold = 0; fold < 5; ++fold) {
    std::vector<size_t> eval_idx = data.fold_indices(fold);
    std::vector<size_t> train_idx;
    if (cfg.mode == RunMode::Test) {
      train_idx = data.indices_except_fold(fold);
    } else {
      int holdout = (fold + 1) % 5;
      for (size_t i = 0; i < data.lesions.size(); ++i)
        if (data.lesions[i].fold != fold && data.lesions[i].fold != holdout)
          train_idx.push_back(i);
    }
    {
      std::set<size_t> train_set(train_idx.begin(), train_idx.end());
      for (size_t i : eval_idx)
        if (train_set.count(i))
          throw LeakageError("lesion " + data.lesions[i].id +
                             " appears in both train and eval of fold " +
                             std::to_string(fold));
    }
    Rng fold_rng(Rng::mix(cfg.seed * 1315423911ull + (uint64_t)fold + 1));
    Rng init_rng = fold_rng.spawn(1);
    Rng predict_rng = fold_rng.spawn(3);
    uint64_t train_seed = Rng::mix(cfg.seed ^ ((uint64_t)fold << 32) ^ 2);
    auto clf = make_classifier(cfg.model_tag, init_rng);
    clf->train(data, train_idx, cfg, train_seed);
    for (size_t i : eval_idx) {
      const Lesion& l = data.lesions[i];
      Entry e;
      e.label = l.label;
      e.fold = fold;
      e.p = clf->predict(l, cfg, predict_rng);
      e.has_heads = clf->last_heads(e.hc, e.he);
      by_id[l.id] = e;
    }
  }

  bool any_heads = false;
  for (const auto& [id, e] : by_id) {
    rec.pooled.push(id, e.label, e.p);
    any_heads = any_heads || e.has_heads;
  }
  if (any_heads) {
    for (const auto& [id, e] : by_id) {
      rec.head_cnn.push_back(e.hc);
      rec.head_eis.push_back(e.he);
    }
  }
  rec.pooled.validate();
  for (size_t i = 0; i < rec.pooled.size(); ++i) {
    // Metrics reflect melanoma detection: benign + melanoma lesions only.
    const auto& id = rec.pooled.ids[i];
    for (const auto& l : data.lesions) {
      if (l.id == id) {
        if (l.in_eval_subset())
          rec.eval_subset.push(id, rec.pooled.labels[i], rec.pooled.scores[i]);
        break;
      }
    }
  }
  rec.report = stats::evaluate(rec.eval_subset, cfg.stats);
  rec.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  return rec;
}

double compare_runs(const RunRecord& a, const RunRecord& b,
                    const stats::StatsConfig& cfg) {
  if (a.eval_subset.size() != b.eval_subset.size())
    throw ContractError("compare_runs: runs cover different lesion sets");
  return stats::paired_permutation_test(a.eval_subset, b.eval_subset, cfg);
}

namespace {

int tag_group(const std::string& tag) {
  if (tag == "fcnn" || tag.rfind("gru-", 0) == 0) return 0;  // EIS
  if (tag == "cnn") return 1;                                // Derm
  if (tag.rfind("ensemble-", 0) == 0) return 2;              // Ensemble
  return 3;                                                  // Combined
}

const char* kGroupNames[4] = {"EIS", "Derm", "Ensemble", "Combined"};

std::vector<size_t> table_order(const std::vector<RunRecord>& runs) {
  std::vector<size_t> order(runs.size());
  for (size_t i = 0; i < runs.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return tag_group(runs[a].model_tag) < tag_group(runs[b].model_tag);
  });
  return order;
}

}  // namespace

std::string emit_table_text(const std::vector<RunRecord>& runs) {
  if (runs.empty()) throw ContractError("emit_table: no runs");
  std::ostringstream os;
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%-10s %-24s %-22s %-22s %-22s\n", "", "",
                "Sensitivity", "Specificity", "AUC");
  os << buf;
  int last_group = -1;
  for (size_t i : table_order(runs)) {
    const auto& r = runs[i];
    int g = tag_group(r.model_tag);
    auto fmt = [&](const stats::MetricWithCi& m) {
      char s[64];
      std::snprintf(s, sizeof(s), "%.1f (%.1f-%.1f)", 100.0 * m.value,
                    100.0 * m.ci.lo, 100.0 * m.ci.hi);
      return std::string(s);
    };
    std::snprintf(buf, sizeof(buf), "%-10s %-24s %-22s %-22s %-22s\n",
                  g != last_group ? kGroupNames[g] : "", r.model_tag.c_str(),
                  fmt(r.report.sensitivity).c_str(),
                  fmt(r.report.specificity).c_str(),
                  fmt(r.report.auc).c_str());
    os << buf;
    last_group = g;
  }
  return os.str();
}

std::string emit_table_csv(const std::vector<RunRecord>& runs) {
  if (runs.empty()) throw ContractError("emit_table: no runs");
  std::ostringstream os;
  os << "group,model_tag,sensitivity,sensitivity_lo,sensitivity_hi,"
        "specificity,specificity_lo,specificity_hi,auc,auc_lo,auc_hi\n";
  char buf[64];
  for (size_t i : table_order(runs)) {
    const auto& r = runs[i];
    os << kGroupNames[tag_group(r.model_tag)] << "," << r.model_tag;
    for (const auto* m :
         {&r.report.sensitivity, &r.report.specificity, &r.report.auc}) {
      for (double v : {m->value, m->ci.lo, m->ci.hi}) {
        std::snprintf(buf, sizeof(buf), ",%.17g", v);
        os << buf;
      }
    }
    os << "\n";
  }
  return os.str();
}

void write_predictions_csv(const std::string& path, const RunRecord& rec,
                           const Dataset& data) {
  std::map<std::string, const Lesion*> by_id;
  for (const auto& l : data.lesions) by_id[l.id] = &l;
  std::ofstream os(path);
  if (!os) throw ContractError("cannot write " + path);
  bool heads = !rec.head_cnn.empty();
  os << (heads ? "lesion_id,label,p,p_head_cnn,p_head_eis,model_tag,fold\n"
               : "lesion_id,label,p,model_tag,fold\n");
  char buf[64];
  for (size_t i = 0; i < rec.pooled.size(); ++i) {
    const auto& id = rec.pooled.ids[i];
    auto it = by_id.find(id);
    int fold = it != by_id.end() ? it->second->fold : -1;
    os << id << "," << rec.pooled.labels[i];
    std::snprintf(buf, sizeof(buf), ",%.17g", rec.pooled.scores[i]);
    os << buf;
    if (heads) {
      std::snprintf(buf, sizeof(buf), ",%.17g,%.17g", rec.head_cnn[i],
                    rec.head_eis[i]);
      os << buf;
    }
    os << "," << rec.model_tag << "," << fold << "\n";
  }
}

stats::ScoredSet read_predictions_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ContractError("cannot read " + path);
  std::string line;
  std::getline(is, line);  // header
  stats::ScoredSet out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto f = split_csv_line(line);
    if (f.size() < 5) throw ContractError("predictions csv: bad row");
    out.push(f[0], std::stoi(f[1]), std::stod(f[2]));
  }
  return out;
}

}  // namespace eisderm
