#pragma once

#include <algorithm>
#include <utility>
#include <vector>

#include "eisderm/derm.hpp"
#include "eisderm/eis.hpp"

namespace eisderm {

enum class FusionMode { Ensemble, Linear, Fc, CrossAttention };
const char* fusion_mode_name(FusionMode m);

// p = max{p_EIS, p_CNN}; both must lie in [0,1].
double ensemble_max(double p_eis, double p_cnn);

// logit = w . concat(f_cnn, f_eis) + b
struct LinearFusion {
  nn::Linear out;

  LinearFusion() = default;
  LinearFusion(size_t d_f, size_t d_h, Rng& rng) : out(1, d_f + d_h, rng) {}
  ad::Tensor operator()(const ad::Tensor& f_cnn, const ad::Tensor& f_eis) const;
  void collect(const std::string& prefix, nn::ParamMap& pm) const;
};

// logit = out(ReLU(batchnorm(W . concat + b)))
struct FcFusion {
  nn::Linear fc;
  nn::BatchNorm1d bn;
  nn::Linear out;

  FcFusion() = default;
  FcFusion(size_t d_f, size_t d_h, size_t hidden, Rng& rng)
      : fc(hidden, d_f + d_h, rng), bn(hidden), out(1, hidden, rng) {}
  ad::Tensor operator()(const ad::Tensor& f_cnn, const ad::Tensor& f_eis);
  void set_training(bool t) { bn.training = t; }
  void collect(const std::string& prefix, nn::ParamMap& pm);
};

// Each modality's features are gated by a sigmoid FC of the *original*
// features of the other modality; each gated path has its own output head.
struct CrossAttention {
  nn::Linear gate_eis_to_cnn;  // (d_f, d_h): weights CNN features from EIS
  nn::Linear gate_cnn_to_eis;  // (d_h, d_f)
  nn::Linear head_cnn, head_eis;

  CrossAttention() = default;
  CrossAttention(size_t d_f, size_t d_h, Rng& rng)
      : gate_eis_to_cnn(d_f, d_h, rng),
        gate_cnn_to_eis(d_h, d_f, rng),
        head_cnn(1, d_f, rng),
        head_eis(1, d_h, rng) {
    // Gates start at exactly 1/2 (zero weights): a random projection of the
    // faster-learning modality's features would otherwise leak its label
    // signal into the other head and starve that encoder of gradient.
    for (auto* g : {&gate_eis_to_cnn, &gate_cnn_to_eis}) {
      std::fill(g->W.data().begin(), g->W.data().end(), 0.0);
      std::fill(g->b.data().begin(), g->b.data().end(), 0.0);
    }
  }
  // Returns (logit_cnn_path, logit_eis_path), each (1,B).
  std::pair<ad::Tensor, ad::Tensor> operator()(const ad::Tensor& f_cnn,
                                               const ad::Tensor& f_eis) const;
  void collect(const std::string& prefix, nn::ParamMap& pm) const;
};

// End-to-end model: CNN backbone + GRU encoder feeding one fusion mechanism.
struct JointModel {
  CnnBackbone backbone;
  GruCell cell;
  EisNormalizer norm;
  PoolMode pool = PoolMode::Max;
  FusionMode mode = FusionMode::CrossAttention;
  LinearFusion lin;
  FcFusion fcf;
  CrossAttention ca;

  JointModel() = default;
  JointModel(FusionMode mode, Rng& rng);
  nn::ParamMap params();
  void set_training(bool t);
};

// One crop + one fresh EIS permutation per fused forward pass, averaged over
// the plan's crops. For cross-attention the per-head crop-mean probabilities
// are also reported when requested.
double joint_forward(JointModel& model, const Lesion& lesion,
                     const CropPlan& plan, Rng& rng,
                     double* head_cnn_mean = nullptr,
                     double* head_eis_mean = nullptr);

struct JointTrainConfig {
  int epochs = 12;
  int batch = 10;
  double lr = 1e-3;
  int crop = 32;
  // Cross-attention gates stay frozen at 1/2 for the first gate_warmup_frac
  // of the epochs and then learn at a reduced rate. If the gates move while
  // one encoder is still uninformative, the head on that side amplifies the
  // gate's projection of the other (faster-learning) modality instead, and
  // the starved encoder never recovers.
  double gate_lr_scale = 0.05;
  double gate_warmup_frac = 1.0;
  AugmentConfig augment;
};

std::vector<double> train_joint(JointModel& model, const Dataset& data,
                                const std::vector<size_t>& train_idx,
                                const JointTrainConfig& cfg, Rng& rng);

}  // namespace eisderm
