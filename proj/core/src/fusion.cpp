#include "eisderm/fusion.hpp"

#include <algorithm>
#include <cmath>

namespace eisderm {

using namespace eisderm::ad;

const char* fusion_mode_name(FusionMode m) {
  switch (m) {
    case FusionMode::Ensemble: return "ensemble";
    case FusionMode::Linear: return "linear";
    case FusionMode::Fc: return "fc";
    case FusionMode::CrossAttention: return "cross_attention";
  }
  return "cross_attention";
}

double ensemble_max(double p_eis, double p_cnn) {
  if (p_eis < 0.0 || p_eis > 1.0 || p_cnn < 0.0 || p_cnn > 1.0)
    throw ContractError("ensemble_max: probabilities must lie in [0,1]");
  return std::max(p_eis, p_cnn);
}

Tensor LinearFusion::operator()(const Tensor& f_cnn,
                                const Tensor& f_eis) const {
  return out(concat_rows({f_cnn, f_eis}));
}

void LinearFusion::collect(const std::string& prefix, nn::ParamMap& pm) const {
  out.collect(prefix + ".out", pm);
}

Tensor FcFusion::operator()(const Tensor& f_cnn, const Tensor& f_eis) {
  return out(relu(bn(fc(concat_rows({f_cnn, f_eis})))));
}

void FcFusion::collect(const std::string& prefix, nn::ParamMap& pm) {
  fc.collect(prefix + ".fc", pm);
  bn.collect(prefix + ".bn", pm);
  out.collect(prefix + ".out", pm);
}

std::pair<Tensor, Tensor> CrossAttention::operator()(
    const Tensor& f_cnn, const Tensor& f_eis) const {
  // Both gates read the original (pre-gated) features of the other path.
  Tensor g_cnn = sigmoid(gate_eis_to_cnn(f_eis));
  Tensor g_eis = sigmoid(gate_cnn_to_eis(f_cnn));
  Tensor gated_cnn = mul(f_cnn, g_cnn);
  Tensor gated_eis = mul(f_eis, g_eis);
  return {head_cnn(gated_cnn), head_eis(gated_eis)};
}

void CrossAttention::collect(const std::string& prefix,
                             nn::ParamMap& pm) const {
  gate_eis_to_cnn.collect(prefix + ".gate_eis_to_cnn", pm);
  gate_cnn_to_eis.collect(prefix + ".gate_cnn_to_eis", pm);
  head_cnn.collect(prefix + ".head_cnn", pm);
  head_eis.collect(prefix + ".head_eis", pm);
}

JointModel::JointModel(FusionMode mode_, Rng& rng)
    : backbone({8, 16, 32}, rng), cell(64, kEisFeatures, rng), mode(mode_) {
  size_t d_f = backbone.feature_dim, d_h = cell.hidden;
  switch (mode) {
    case FusionMode::Linear: lin = LinearFusion(d_f, d_h, rng); break;
    case FusionMode::Fc: fcf = FcFusion(d_f, d_h, 64, rng); break;
    case FusionMode::CrossAttention: ca = CrossAttention(d_f, d_h, rng); break;
    case FusionMode::Ensemble:
      throw ContractError("JointModel: ensemble mode combines trained models "
                          "post hoc, not end-to-end");
  }
}

nn::ParamMap JointModel::params() {
  nn::ParamMap pm;
  backbone.collect("backbone", pm);
  cell.collect("gru", pm);
  switch (mode) {
    case FusionMode::Linear: lin.collect("fusion", pm); break;
    case FusionMode::Fc: fcf.collect("fusion", pm); break;
    case FusionMode::CrossAttention: ca.collect("fusion", pm); break;
    case FusionMode::Ensemble: break;
  }
  pm.add_buffer("norm.mean", &norm.mean);
  pm.add_buffer("norm.stddev", &norm.stddev);
  return pm;
}

void JointModel::set_training(bool t) {
  if (mode == FusionMode::Fc) fcf.set_training(t);
}

namespace {

double logistic(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x))
                : std::exp(x) / (1.0 + std::exp(x));
}

Tensor eis_sequence(const JointModel& model, const Lesion& lesion,
                    const std::vector<size_t>& order) {
  size_t N = order.size();
  std::vector<double> data(kEisFeatures * N);
  for (size_t j = 0; j < N; ++j) {
    Measurement m = model.norm.fitted()
                        ? model.norm.apply(lesion.measurements[order[j]])
                        : lesion.measurements[order[j]];
    for (size_t f = 0; f < kEisFeatures; ++f) data[f * N + j] = m[f];
  }
  return Tensor::from({kEisFeatures, N}, std::move(data));
}

}  // namespace

double joint_forward(JointModel& model, const Lesion& lesion,
                     const CropPlan& plan, Rng& rng, double* head_cnn_mean,
                     double* head_eis_mean) {
  model.set_training(false);
  double acc = 0.0, acc_hc = 0.0, acc_he = 0.0;
  for (const auto& [y, x] : plan.offsets) {
    DermImage c = crop_image(lesion.image, y, x, plan.crop_h, plan.crop_w);
    Tensor f_cnn = model.backbone(image_tensor(c));
    auto order = rng.permutation(lesion.measurements.size());
    Tensor f_eis =
        gru_encode(model.cell, eis_sequence(model, lesion, order), model.pool)
            .pooled;
    double p;
    switch (model.mode) {
      case FusionMode::Linear:
        p = logistic(model.lin(f_cnn, f_eis).item());
        break;
      case FusionMode::Fc:
        p = logistic(model.fcf(f_cnn, f_eis).item());
        break;
      case FusionMode::CrossAttention: {
        auto [lc, le] = model.ca(f_cnn, f_eis);
        double pc = logistic(lc.item()), pe = logistic(le.item());
        acc_hc += pc;
        acc_he += pe;
        p = std::max(pc, pe);
        break;
      }
      default:
        throw ContractError("joint_forward: unsupported fusion mode");
    }
    acc += p;
  }
  double n = (double)plan.offsets.size();
  if (head_cnn_mean) *head_cnn_mean = acc_hc / n;
  if (head_eis_mean) *head_eis_mean = acc_he / n;
  return acc / n;
}

std::vector<double> train_joint(JointModel& model, const Dataset& data,
                                const std::vector<size_t>& train_idx,
                                const JointTrainConfig& cfg, Rng& rng) {
  {
    std::vector<const Measurement*> train;
    for (size_t i : train_idx)
      for (const auto& m : data.lesions[i].measurements) train.push_back(&m);
    model.norm.fit(train);
  }
  model.set_training(true);
  auto named = model.params();
  std::vector<Tensor> params, gate_params;
  for (const auto& [name, t] : named.tensors) {
    if (model.mode == FusionMode::CrossAttention &&
        name.find(".gate_") != std::string::npos)
      gate_params.push_back(t);
    else
      params.push_back(t);
  }
  // Adam steps are gradient-scale invariant, so the slow gate schedule needs
  // its own optimizer state with a genuinely smaller learning rate.
  nn::AdamState gate_adam;
  gate_adam.cfg.lr = cfg.lr * cfg.gate_lr_scale;
  nn::AdamState adam;
  adam.cfg.lr = cfg.lr;
  std::vector<double> trajectory;
  std::vector<size_t> order = train_idx;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double decay = nn::cosine_lr(1.0, epoch, cfg.epochs);
    adam.cfg.lr = cfg.lr * decay;
    gate_adam.cfg.lr = cfg.lr * cfg.gate_lr_scale * decay;
    rng.shuffle(order);
    double epoch_loss = 0.0;
    size_t batches = 0;
    for (size_t b = 0; b < order.size(); b += (size_t)cfg.batch) {
      size_t e = std::min(order.size(), b + (size_t)cfg.batch);
      std::vector<Tensor> f_cnn_cols, f_eis_cols;
      std::vector<double> targets;
      for (size_t i = b; i < e; ++i) {
        const Lesion& l = data.lesions[order[i]];
        int y0 = (int)rng.below((uint64_t)(l.image.h - cfg.crop + 1));
        int x0 = (int)rng.below((uint64_t)(l.image.w - cfg.crop + 1));
        DermImage c = augment(crop_image(l.image, y0, x0, cfg.crop, cfg.crop),
                              rng, cfg.augment);
        f_cnn_cols.push_back(model.backbone(image_tensor(c)));
        auto perm = rng.permutation(l.measurements.size());
        f_eis_cols.push_back(
            gru_encode(model.cell, eis_sequence(model, l, perm), model.pool)
                .pooled);
        targets.push_back((double)l.label);
      }
      Tensor f_cnn = concat_cols(f_cnn_cols);
      Tensor f_eis = concat_cols(f_eis_cols);
      Tensor loss;
      switch (model.mode) {
        case FusionMode::Linear:
          loss = bce_with_logits_mean(model.lin(f_cnn, f_eis), targets);
          break;
        case FusionMode::Fc:
          loss = bce_with_logits_mean(model.fcf(f_cnn, f_eis), targets);
          break;
        case FusionMode::CrossAttention: {
          auto [lc, le] = model.ca(f_cnn, f_eis);
          // Both heads feed the max-prediction rule, so both see the label.
          loss = add(bce_with_logits_mean(lc, targets),
                     bce_with_logits_mean(le, targets));
          break;
        }
        default:
          throw ContractError("train_joint: unsupported fusion mode");
      }
      if (!std::isfinite(loss.item()))
        throw NumericError("train_joint: non-finite loss");
      epoch_loss += loss.item();
      ++batches;
      ad::zero_grad(params);
      ad::zero_grad(gate_params);
      ad::backward(loss);
      nn::adam_step(params, adam);
      bool gates_live =
          (double)epoch >= cfg.gate_warmup_frac * (double)cfg.epochs;
      if (!gate_params.empty() && gates_live)
        nn::adam_step(gate_params, gate_adam);
    }
    trajectory.push_back(epoch_loss / (double)std::max<size_t>(batches, 1));
  }
  return trajectory;
}

}  // namespace eisderm
