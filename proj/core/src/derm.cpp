#include "eisderm/derm.hpp"

#include <algorithm>
#include <cmath>

namespace eisderm {

using namespace eisderm::ad;

DermImage shades_of_gray(const DermImage& img, double p) {
  if (p < 1.0) throw ContractError("shades_of_gray: p must be >= 1");
  if (img.h == 0 || img.w == 0)
    throw ContractError("shades_of_gray: empty image");
  size_t hw = (size_t)img.h * img.w;
  double illum[3];
  for (int c = 0; c < 3; ++c) {
    double acc = 0.0;
    for (size_t i = 0; i < hw; ++i) acc += std::pow(img.px[c * hw + i], p);
    illum[c] = std::pow(acc / (double)hw, 1.0 / p);
  }
  double mean_illum = (illum[0] + illum[1] + illum[2]) / 3.0;
  DermImage out(img.h, img.w);
  for (int c = 0; c < 3; ++c) {
    double s = illum[c] > 0.0 ? mean_illum / illum[c] : 1.0;
    for (size_t i = 0; i < hw; ++i)
      out.px[c * hw + i] = std::clamp(img.px[c * hw + i] * s, 0.0, 1.0);
  }
  return out;
}

CropPlan make_crop_plan(int img_h, int img_w, int crop, int n_crops) {
  if (crop > img_h || crop > img_w)
    throw ContractError("make_crop_plan: crop larger than image");
  if (n_crops < 1) throw ContractError("make_crop_plan: n_crops must be >= 1");
  CropPlan plan;
  plan.crop_h = plan.crop_w = crop;
  if (crop == img_h && crop == img_w) {
    plan.offsets.emplace_back(0, 0);
    return plan;
  }
  // Split n into the most square grid gy x gx with gy*gx == n.
  int gy = 1, gx = n_crops;
  for (int d = 1; d * d <= n_crops; ++d) {
    if (n_crops % d == 0) {
      gy = d;
      gx = n_crops / d;
    }
  }
  auto spread = [](int g, int span) {
    std::vector<int> offs(g);
    for (int i = 0; i < g; ++i)
      offs[i] = g == 1 ? 0 : (int)std::lround((double)i * span / (g - 1));
    return offs;
  };
  auto ys = spread(gy, img_h - crop);
  auto xs = spread(gx, img_w - crop);
  for (int y : ys)
    for (int x : xs) plan.offsets.emplace_back(y, x);
  return plan;
}

DermImage crop_image(const DermImage& img, int y0, int x0, int h, int w) {
  if (y0 < 0 || x0 < 0 || y0 + h > img.h || x0 + w > img.w)
    throw ContractError("crop_image: crop out of bounds");
  DermImage out(h, w);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) out.at(c, y, x) = img.at(c, y0 + y, x0 + x);
  return out;
}

DermImage augment(const DermImage& img, Rng& rng, const AugmentConfig& cfg) {
  DermImage out = img;
  if (rng.uniform() < cfg.flip_prob) {  // horizontal
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < out.h; ++y)
        for (int x = 0; x < out.w / 2; ++x)
          std::swap(out.at(c, y, x), out.at(c, y, out.w - 1 - x));
  }
  if (rng.uniform() < cfg.flip_prob) {  // vertical
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < out.h / 2; ++y)
        for (int x = 0; x < out.w; ++x)
          std::swap(out.at(c, y, x), out.at(c, out.h - 1 - y, x));
  }
  double delta = rng.uniform(-cfg.brightness, cfg.brightness);
  double factor = rng.uniform(cfg.contrast_lo, cfg.contrast_hi);
  double mean = 0.0;
  for (double v : out.px) mean += v;
  mean /= (double)out.px.size();
  for (double& v : out.px)
    v = std::clamp(mean + factor * (v - mean) + delta, 0.0, 1.0);
  return out;
}

CnnBackbone::CnnBackbone(const std::vector<size_t>& channels, Rng& rng) {
  size_t in_c = 3;
  for (size_t c : channels) {
    blocks.emplace_back(c, in_c, 3, rng);
    in_c = c;
  }
  feature_dim = in_c;
}

Tensor CnnBackbone::operator()(const Tensor& img) const {
  Tensor x = img;
  for (const auto& block : blocks) x = maxpool2d(relu(block(x)));
  return global_avg_pool(x);
}

void CnnBackbone::collect(const std::string& prefix, nn::ParamMap& pm) const {
  for (size_t i = 0; i < blocks.size(); ++i)
    blocks[i].collect(prefix + ".block" + std::to_string(i), pm);
}

CnnModel::CnnModel(Rng& rng) : backbone({8, 16, 32}, rng) {
  out = nn::Linear(1, backbone.feature_dim, rng);
}

nn::ParamMap CnnModel::params() {
  nn::ParamMap pm;
  backbone.collect("backbone", pm);
  out.collect("out", pm);
  return pm;
}

Tensor CnnModel::forward_batch(const std::vector<Tensor>& crops) {
  std::vector<Tensor> feats;
  feats.reserve(crops.size());
  for (const auto& c : crops) feats.push_back(backbone(c));
  return out(concat_cols(feats));
}

Tensor image_tensor(const DermImage& img) {
  return Tensor::from({3, (size_t)img.h, (size_t)img.w}, img.px);
}

namespace {

double logistic(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x))
                : std::exp(x) / (1.0 + std::exp(x));
}

}  // namespace

double multicrop_predict(CnnModel& model, const DermImage& img,
                         const CropPlan& plan) {
  double acc = 0.0;
  for (const auto& [y, x] : plan.offsets) {
    DermImage c = crop_image(img, y, x, plan.crop_h, plan.crop_w);
    Tensor logit = model.forward_batch({image_tensor(c)});
    acc += logistic(logit.item());
  }
  return acc / (double)plan.offsets.size();
}

std::vector<double> train_cnn(CnnModel& model, const Dataset& data,
                              const std::vector<size_t>& train_idx,
                              const DermTrainConfig& cfg, Rng& rng) {
  auto params = model.params().trainable();
  nn::AdamState adam;
  adam.cfg.lr = cfg.lr;
  std::vector<double> trajectory;
  std::vector<size_t> order = train_idx;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    adam.cfg.lr = nn::cosine_lr(cfg.lr, epoch, cfg.epochs);
    rng.shuffle(order);
    double epoch_loss = 0.0;
    size_t batches = 0;
    for (size_t b = 0; b < order.size(); b += (size_t)cfg.batch) {
      size_t e = std::min(order.size(), b + (size_t)cfg.batch);
      std::vector<Tensor> crops;
      std::vector<double> targets;
      for (size_t i = b; i < e; ++i) {
        const Lesion& l = data.lesions[order[i]];
        int y0 = (int)rng.below((uint64_t)(l.image.h - cfg.crop + 1));
        int x0 = (int)rng.below((uint64_t)(l.image.w - cfg.crop + 1));
        DermImage c = augment(crop_image(l.image, y0, x0, cfg.crop, cfg.crop),
                              rng, cfg.augment);
        crops.push_back(image_tensor(c));
        targets.push_back((double)l.label);
      }
      Tensor loss = bce_with_logits_mean(model.forward_batch(crops), targets);
      if (!std::isfinite(loss.item()))
        throw NumericError("train_cnn: non-finite loss");
      epoch_loss += loss.item();
      ++batches;
      ad::zero_grad(params);
      ad::backward(loss);
      nn::adam_step(params, adam);
    }
    trajectory.push_back(epoch_loss / (double)std::max<size_t>(batches, 1));
  }
  return trajectory;
}

}  // namespace eisderm
