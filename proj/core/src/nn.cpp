#include "eisderm/nn.hpp"

#include <cmath>

namespace eisderm::nn {

using namespace eisderm::ad;

Tensor xavier_init(Shape shape, size_t fan_in, size_t fan_out, Rng& rng) {
  double a = std::sqrt(6.0 / (double)(fan_in + fan_out));
  size_t n = shape_size(shape);
  std::vector<double> data(n);
  for (auto& v : data) v = rng.uniform(-a, a);
  return Tensor::from(std::move(shape), std::move(data), true);
}

Linear::Linear(size_t out, size_t in, Rng& rng) {
  W = xavier_init({out, in}, in, out, rng);
  b = Tensor::zeros({out, 1}, true);
}

void Linear::collect(const std::string& prefix, ParamMap& pm) const {
  pm.add(prefix + ".W", W);
  pm.add(prefix + ".b", b);
}

Conv2d::Conv2d(size_t out_c, size_t in_c, size_t k, Rng& rng) {
  W = xavier_init({out_c, in_c, k, k}, in_c * k * k, out_c * k * k, rng);
  b = Tensor::zeros({out_c, 1}, true);
}

void Conv2d::collect(const std::string& prefix, ParamMap& pm) const {
  pm.add(prefix + ".W", W);
  pm.add(prefix + ".b", b);
}

BatchNorm1d::BatchNorm1d(size_t features) {
  gamma = Tensor::full({features, 1}, 1.0, true);
  beta = Tensor::zeros({features, 1}, true);
  running_mean.assign(features, 0.0);
  running_var.assign(features, 1.0);
}

void BatchNorm1d::collect(const std::string& prefix, ParamMap& pm) {
  pm.add(prefix + ".gamma", gamma);
  pm.add(prefix + ".beta", beta);
  pm.add_buffer(prefix + ".running_mean", &running_mean);
  pm.add_buffer(prefix + ".running_var", &running_var);
}

Tensor BatchNorm1d::operator()(const Tensor& x) {
  if (x.shape().size() != 2 || x.shape()[0] != running_mean.size())
    throw DimensionError("batchnorm1d: expected (" +
                         std::to_string(running_mean.size()) + ",B) input, got " +
                         shape_str(x.shape()));
  size_t F = x.shape()[0], B = x.shape()[1];
  auto mean = std::make_shared<std::vector<double>>(F, 0.0);
  auto invstd = std::make_shared<std::vector<double>>(F, 0.0);
  if (training) {
    for (size_t f = 0; f < F; ++f) {
      double m = 0.0;
      for (size_t j = 0; j < B; ++j) m += x.data()[f * B + j];
      m /= (double)B;
      double v = 0.0;
      for (size_t j = 0; j < B; ++j) {
        double d = x.data()[f * B + j] - m;
        v += d * d;
      }
      v /= (double)B;
      (*mean)[f] = m;
      (*invstd)[f] = 1.0 / std::sqrt(v + eps);
      running_mean[f] = momentum * running_mean[f] + (1.0 - momentum) * m;
      running_var[f] = momentum * running_var[f] + (1.0 - momentum) * v;
    }
  } else {
    for (size_t f = 0; f < F; ++f) {
      (*mean)[f] = running_mean[f];
      (*invstd)[f] = 1.0 / std::sqrt(running_var[f] + eps);
    }
  }
  auto xhat = std::make_shared<std::vector<double>>(F * B);
  std::vector<double> out(F * B);
  for (size_t f = 0; f < F; ++f) {
    double g = gamma.data()[f], bt = beta.data()[f];
    for (size_t j = 0; j < B; ++j) {
      double xh = (x.data()[f * B + j] - (*mean)[f]) * (*invstd)[f];
      (*xhat)[f * B + j] = xh;
      out[f * B + j] = g * xh + bt;
    }
  }

  auto n = std::make_shared<Node>();
  n->op = training ? "batchnorm1d_train" : "batchnorm1d_eval";
  n->shape = {F, B};
  n->value = std::move(out);
  auto xn = x.node();
  auto gn = gamma.node();
  auto bn = beta.node();
  n->requires_grad =
      xn->requires_grad || gn->requires_grad || bn->requires_grad;
  if (n->requires_grad) {
    n->parents = {xn, gn, bn};
    bool train_mode = training;
    n->backward_fn = [xn, gn, bn, xhat, invstd, F, B,
                      train_mode](Node& nd) {
      for (size_t f = 0; f < F; ++f) {
        double gsum = 0.0, gxsum = 0.0;
        for (size_t j = 0; j < B; ++j) {
          gsum += nd.grad[f * B + j];
          gxsum += nd.grad[f * B + j] * (*xhat)[f * B + j];
        }
        if (gn->requires_grad) {
          gn->ensure_grad();
          gn->grad[f] += gxsum;
        }
        if (bn->requires_grad) {
          bn->ensure_grad();
          bn->grad[f] += gsum;
        }
        if (xn->requires_grad) {
          xn->ensure_grad();
          double g = gn->value[f] * (*invstd)[f];
          if (train_mode) {
            for (size_t j = 0; j < B; ++j) {
              xn->grad[f * B + j] +=
                  g / (double)B *
                  ((double)B * nd.grad[f * B + j] - gsum -
                   (*xhat)[f * B + j] * gxsum);
            }
          } else {
            for (size_t j = 0; j < B; ++j)
              xn->grad[f * B + j] += g * nd.grad[f * B + j];
          }
        }
      }
    };
  }
  return Tensor(n);
}

void adam_step(const std::vector<Tensor>& params, AdamState& state) {
  for (const auto& p : params) {
    if (!p.has_grad())
      throw ContractError("adam_step: parameter has no gradient");
  }
  state.t += 1;
  double bc1 = 1.0 - std::pow(state.cfg.beta1, (double)state.t);
  double bc2 = 1.0 - std::pow(state.cfg.beta2, (double)state.t);
  for (const auto& p : params) {
    auto* node = p.raw();
    auto& [m, v] = state.moments[node];
    if (m.size() != p.size()) {
      m.assign(p.size(), 0.0);
      v.assign(p.size(), 0.0);
    }
    auto& val = p.node()->value;
    auto& g = p.node()->grad;
    for (size_t i = 0; i < val.size(); ++i) {
      m[i] = state.cfg.beta1 * m[i] + (1.0 - state.cfg.beta1) * g[i];
      v[i] = state.cfg.beta2 * v[i] + (1.0 - state.cfg.beta2) * g[i] * g[i];
      double mhat = m[i] / bc1;
      double vhat = v[i] / bc2;
      val[i] -= state.cfg.lr * mhat / (std::sqrt(vhat) + state.cfg.eps);
    }
  }
}

double cosine_lr(double base_lr, int epoch, int total_epochs) {
  if (total_epochs <= 1) return base_lr;
  double floor = 0.05 * base_lr;
  double t = (double)epoch / (double)(total_epochs - 1);
  return floor + 0.5 * (base_lr - floor) * (1.0 + std::cos(M_PI * t));
}

}  // namespace eisderm::nn
