#pragma once

#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "eisderm/rng.hpp"
#include "eisderm/tensor.hpp"

namespace eisderm::nn {

using ad::Tensor;

// Named view of a model's trainable tensors plus non-trainable buffers
// (running statistics, normalization constants).
struct ParamMap {
  std::vector<std::pair<std::string, Tensor>> tensors;
  std::vector<std::pair<std::string, std::vector<double>*>> buffers;

  void add(const std::string& name, const Tensor& t) {
    tensors.emplace_back(name, t);
  }
  void add_buffer(const std::string& name, std::vector<double>* v) {
    buffers.emplace_back(name, v);
  }
  std::vector<Tensor> trainable() const {
    std::vector<Tensor> out;
    out.reserve(tensors.size());
    for (const auto& [_, t] : tensors) out.push_back(t);
    return out;
  }
};

Tensor xavier_init(ad::Shape shape, size_t fan_in, size_t fan_out, Rng& rng);

struct Linear {
  Tensor W, b;  // W (out,in), b (out,1)

  Linear() = default;
  Linear(size_t out, size_t in, Rng& rng);
  Tensor operator()(const Tensor& x) const { return ad::add(ad::matmul(W, x), b); }
  void collect(const std::string& prefix, ParamMap& pm) const;
};

struct Conv2d {
  Tensor W, b;  // W (out_c,in_c,k,k), b (out_c,1)

  Conv2d() = default;
  Conv2d(size_t out_c, size_t in_c, size_t k, Rng& rng);
  Tensor operator()(const Tensor& x) const { return ad::conv2d(x, W, b); }
  void collect(const std::string& prefix, ParamMap& pm) const;
};

// 1-d batchnorm over the column (batch) axis of an (F,B) tensor.
struct BatchNorm1d {
  Tensor gamma, beta;  // (F,1)
  std::vector<double> running_mean, running_var;
  double momentum = 0.9;
  double eps = 1e-5;
  bool training = true;

  BatchNorm1d() = default;
  explicit BatchNorm1d(size_t features);
  Tensor operator()(const Tensor& x);
  void collect(const std::string& prefix, ParamMap& pm);
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig cfg;
  long t = 0;
  std::unordered_map<const ad::Node*,
                     std::pair<std::vector<double>, std::vector<double>>>
      moments;  // first (m) and second (v) per parameter
};

// Bias-corrected Adam update from each parameter's .grad. Throws
// ContractError if any parameter has no populated gradient buffer.
void adam_step(const std::vector<Tensor>& params, AdamState& state);

// Cosine learning-rate schedule from base_lr down to 5% of it over the run.
double cosine_lr(double base_lr, int epoch, int total_epochs);

}  // namespace eisderm::nn
