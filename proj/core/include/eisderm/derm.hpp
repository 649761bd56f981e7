#pragma once

#include <utility>
#include <vector>

#include "eisderm/data.hpp"
#include "eisderm/nn.hpp"
#include "eisderm/rng.hpp"

namespace eisderm {

// Shades-of-Gray color constancy with Minkowski norm p.
DermImage shades_of_gray(const DermImage& img, double p = 6.0);

struct CropPlan {
  int crop_h = 0, crop_w = 0;
  std::vector<std::pair<int, int>> offsets;  // (y, x) top-left corners
};

// Evenly spread grid of n_crops crops covering the whole image.
CropPlan make_crop_plan(int img_h, int img_w, int crop, int n_crops);

// Paper-scale evaluation plan: 36 crops of 224x224 on a 600x450 image.
inline CropPlan paper_crop_plan() { return make_crop_plan(450, 600, 224, 36); }

DermImage crop_image(const DermImage& img, int y0, int x0, int h, int w);

struct AugmentConfig {
  double flip_prob = 0.5;
  double brightness = 0.1;    // additive delta in [-brightness, brightness]
  double contrast_lo = 0.9;   // multiplicative factor around the image mean
  double contrast_hi = 1.1;
};

DermImage augment(const DermImage& img, Rng& rng, const AugmentConfig& cfg);

// Small conv backbone: (conv3x3 -> ReLU -> 2x2 maxpool) blocks, then global
// average pooling to a fixed-length feature vector.
struct CnnBackbone {
  std::vector<nn::Conv2d> blocks;
  size_t feature_dim = 0;

  CnnBackbone() = default;
  CnnBackbone(const std::vector<size_t>& channels, Rng& rng);
  ad::Tensor operator()(const ad::Tensor& img) const;  // (3,h,w) -> (d_f,1)
  void collect(const std::string& prefix, nn::ParamMap& pm) const;
};

struct CnnModel {
  CnnBackbone backbone;
  nn::Linear out;  // binary output layer on the pooled features

  CnnModel() = default;
  explicit CnnModel(Rng& rng);
  nn::ParamMap params();
  ad::Tensor forward_batch(const std::vector<ad::Tensor>& crops);  // (1,B)
};

ad::Tensor image_tensor(const DermImage& img);

// Mean of the per-crop probabilities over the plan.
double multicrop_predict(CnnModel& model, const DermImage& img,
                         const CropPlan& plan);

struct DermTrainConfig {
  int epochs = 12;
  int batch = 20;
  double lr = 1e-3;
  int crop = 32;
  AugmentConfig augment;
};

// Paper-reported training recipe for the CNN models.
inline DermTrainConfig derm_paper_preset() {
  DermTrainConfig cfg;
  cfg.epochs = 100;
  cfg.batch = 20;
  cfg.lr = 2.5e-5;
  cfg.crop = 224;
  return cfg;
}

// Random-crop + augmentation Adam training; returns per-epoch mean loss.
std::vector<double> train_cnn(CnnModel& model, const Dataset& data,
                              const std::vector<size_t>& train_idx,
                              const DermTrainConfig& cfg, Rng& rng);

}  // namespace eisderm
