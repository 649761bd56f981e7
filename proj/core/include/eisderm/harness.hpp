#pragma once

#include <memory>
#include <string>
#include <vector>

#include "eisderm/data.hpp"
#include "eisderm/rng.hpp"
#include "eisderm/stats.hpp"

namespace eisderm {

// Known model tags:
//   fcnn, gru-last, gru-mean, gru-max, cnn,
//   fused-lin, fused-fc, fused-ca,
//   ensemble-<tagA>+<tagB> (post-hoc max of two independently trained models)
bool is_known_tag(const std::string& tag);

enum class RunMode { Validate, Test };

struct ExperimentConfig {
  std::string model_tag = "gru-max";
  uint64_t seed = 1;
  RunMode mode = RunMode::Test;

  int eis_epochs = 15;
  int eis_batch = 10;
  double eis_lr = 1e-3;
  int cnn_epochs = 12;
  int cnn_batch = 20;
  double cnn_lr = 1e-3;
  int joint_epochs = 18;
  int joint_batch = 10;
  double joint_lr = 1e-3;

  int crop_size = 32;
  int n_crops = 16;
  int n_perm_eval = 5;

  stats::StatsConfig stats;

  // Paper-reported recipe: 200/100/100 epochs, lr 2e-5 / 2.5e-5, batch 10/20,
  // 224x224 crops, 36-crop evaluation.
  void apply_paper_preset();

  uint64_t hash() const;
};

// One fold-trained-and-predicted model interface.
class Classifier {
 public:
  virtual ~Classifier() = default;
  virtual void train(const Dataset& data, const std::vector<size_t>& train_idx,
                     const ExperimentConfig& cfg, uint64_t seed) = 0;
  virtual double predict(const Lesion& lesion, const ExperimentConfig& cfg,
                         Rng& rng) = 0;
  // Per-head probabilities of the most recent predict(); dual-head models only.
  virtual bool last_heads(double&, double&) const { return false; }
  virtual void save(const std::string& path) = 0;
  virtual void load(const std::string& path) = 0;
};

std::unique_ptr<Classifier> make_classifier(const std::string& tag, Rng& rng);

struct RunRecord {
  std::string model_tag;
  uint64_t seed = 0;
  uint64_t config_hash = 0;
  stats::ScoredSet pooled;       // every lesion exactly once (test mode)
  std::vector<double> head_cnn, head_eis;  // aligned with pooled; dual-head only
  stats::ScoredSet eval_subset;  // benign + melanoma only
  stats::EvalReport report;
  double wall_seconds = 0.0;  // informational only, never serialized
};

// Five-fold cross-validation: per-fold train/predict, pooled predictions,
// evaluation on the benign + melanoma subset. Throws LeakageError if a
// lesion ends up on both sides of a split.
RunRecord run_cv(const Dataset& data, const ExperimentConfig& cfg);

// Paired permutation p-value on the shared evaluation subset.
double compare_runs(const RunRecord& a, const RunRecord& b,
                    const stats::StatsConfig& cfg);

// Table-1-style text table (percent, CI in brackets, grouped
// EIS / Derm / Ensemble / Combined) and a full-precision CSV twin.
std::string emit_table_text(const std::vector<RunRecord>& runs);
std::string emit_table_csv(const std::vector<RunRecord>& runs);

// predictions CSV: lesion_id,label,p,model_tag,fold
void write_predictions_csv(const std::string& path, const RunRecord& rec,
                           const Dataset& data);
stats::ScoredSet read_predictions_csv(const std::string& path);

}  // namespace eisderm
