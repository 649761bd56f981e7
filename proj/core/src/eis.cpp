#include "eisderm/eis.hpp"

#include <algorithm>
#include <cmath>

namespace eisderm {

using namespace eisderm::ad;

void EisNormalizer::fit(const std::vector<const Measurement*>& train) {
  if (train.empty()) throw ContractError("EisNormalizer: empty training set");
  size_t F = train[0]->size();
  mean.assign(F, 0.0);
  stddev.assign(F, 0.0);
  for (const auto* m : train)
    for (size_t f = 0; f < F; ++f) mean[f] += (*m)[f];
  for (size_t f = 0; f < F; ++f) mean[f] /= (double)train.size();
  for (const auto* m : train)
    for (size_t f = 0; f < F; ++f) {
      double d = (*m)[f] - mean[f];
      stddev[f] += d * d;
    }
  for (size_t f = 0; f < F; ++f)
    stddev[f] = std::max(std::sqrt(stddev[f] / (double)train.size()), 1e-8);
}

Measurement EisNormalizer::apply(const Measurement& m) const {
  if (m.size() != mean.size())
    throw DimensionError("EisNormalizer: feature count mismatch");
  Measurement out(m.size());
  for (size_t f = 0; f < m.size(); ++f)
    out[f] = (m[f] - mean[f]) / stddev[f];
  return out;
}

const char* pool_mode_name(PoolMode m) {
  switch (m) {
    case PoolMode::Last: return "last";
    case PoolMode::Mean: return "mean";
    case PoolMode::Max: return "max";
  }
  return "max";
}

GruCell::GruCell(size_t hidden_, size_t input_, Rng& rng)
    : hidden(hidden_), input(input_) {
  Mz = nn::xavier_init({hidden, hidden}, hidden, hidden, rng);
  Mr = nn::xavier_init({hidden, hidden}, hidden, hidden, rng);
  Mc = nn::xavier_init({hidden, hidden}, hidden, hidden, rng);
  Lz = nn::xavier_init({hidden, input}, input, hidden, rng);
  Lr = nn::xavier_init({hidden, input}, input, hidden, rng);
  Lc = nn::xavier_init({hidden, input}, input, hidden, rng);
}

void GruCell::collect(const std::string& prefix, nn::ParamMap& pm) const {
  pm.add(prefix + ".Mz", Mz);
  pm.add(prefix + ".Mr", Mr);
  pm.add(prefix + ".Mc", Mc);
  pm.add(prefix + ".Lz", Lz);
  pm.add(prefix + ".Lr", Lr);
  pm.add(prefix + ".Lc", Lc);
}

SequenceEncoding gru_encode(const GruCell& cell, const Tensor& X,
                            PoolMode mode) {
  if (X.shape().size() != 2 || X.shape()[0] != cell.input)
    throw DimensionError("gru_encode: X must be (input,N)");
  size_t N = X.shape()[1];
  if (N == 0) throw ContractError("gru_encode: empty sequence");
  // Input projections for the whole sequence in three GEMMs; the recurrence
  // then only needs small (hidden x hidden) products per step.
  Tensor Pz = matmul(cell.Lz, X);
  Tensor Pr = matmul(cell.Lr, X);
  Tensor Pc = matmul(cell.Lc, X);
  Tensor h = Tensor::zeros({cell.hidden, 1});
  std::vector<Tensor> states;
  states.reserve(N);
  for (size_t j = 0; j < N; ++j) {
    Tensor z = sigmoid(add(matmul(cell.Mz, h), slice_cols(Pz, j, j + 1)));
    Tensor r = sigmoid(add(matmul(cell.Mr, h), slice_cols(Pr, j, j + 1)));
    Tensor c = tanh_op(add(matmul(cell.Mc, mul(r, h)), slice_cols(Pc, j, j + 1)));
    h = add(mul(z, c), mul(affine(z, -1.0, 1.0), h));
    states.push_back(h);
  }
  SequenceEncoding enc;
  enc.mode = mode;
  enc.H = concat_cols(states);
  switch (mode) {
    case PoolMode::Last: enc.pooled = states.back(); break;
    case PoolMode::Mean: enc.pooled = seq_mean_pool(enc.H); break;
    case PoolMode::Max: enc.pooled = seq_max_pool(enc.H); break;
  }
  return enc;
}

EisHead::EisHead(size_t in_dim, size_t hidden_dim, Rng& rng)
    : fc(hidden_dim, in_dim, rng), bn(hidden_dim), out(1, hidden_dim, rng) {}

Tensor EisHead::operator()(const Tensor& x) { return out(relu(bn(fc(x)))); }

void EisHead::collect(const std::string& prefix, nn::ParamMap& pm) {
  fc.collect(prefix + ".fc", pm);
  bn.collect(prefix + ".bn", pm);
  out.collect(prefix + ".out", pm);
}

GruModel::GruModel(PoolMode mode_, size_t hidden, size_t head_hidden, Rng& rng)
    : cell(hidden, kEisFeatures, rng),
      head(hidden, head_hidden, rng),
      mode(mode_) {}

nn::ParamMap GruModel::params() {
  nn::ParamMap pm;
  cell.collect("gru", pm);
  head.collect("head", pm);
  pm.add_buffer("norm.mean", &norm.mean);
  pm.add_buffer("norm.stddev", &norm.stddev);
  return pm;
}

Tensor GruModel::sequence_tensor(const std::vector<Measurement>& meas,
                                 const std::vector<size_t>& order) const {
  size_t N = order.size();
  std::vector<double> data(kEisFeatures * N);
  for (size_t j = 0; j < N; ++j) {
    Measurement m = norm.fitted() ? norm.apply(meas[order[j]]) : meas[order[j]];
    for (size_t f = 0; f < kEisFeatures; ++f) data[f * N + j] = m[f];
  }
  return Tensor::from({kEisFeatures, N}, std::move(data));
}

Tensor GruModel::forward(const std::vector<Tensor>& sequences) {
  std::vector<Tensor> pooled;
  pooled.reserve(sequences.size());
  for (const auto& X : sequences)
    pooled.push_back(gru_encode(cell, X, mode).pooled);
  return head(concat_cols(pooled));
}

FcnnModel::FcnnModel(size_t hidden, Rng& rng)
    : fc(hidden, kEisFeatures, rng), bn(hidden), out(1, hidden, rng) {}

nn::ParamMap FcnnModel::params() {
  nn::ParamMap pm;
  fc.collect("fc", pm);
  bn.collect("bn", pm);
  out.collect("out", pm);
  pm.add_buffer("norm.mean", &norm.mean);
  pm.add_buffer("norm.stddev", &norm.stddev);
  return pm;
}

Tensor FcnnModel::forward(const Tensor& X) { return out(relu(bn(fc(X)))); }

namespace {

double logistic(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x))
                : std::exp(x) / (1.0 + std::exp(x));
}

}  // namespace

LesionPrediction fcnn_predict_lesion(FcnnModel& model, const Lesion& lesion) {
  if (lesion.measurements.empty())
    throw ContractError("fcnn_predict_lesion: lesion has no measurements");
  model.bn.training = false;
  size_t N = lesion.measurements.size();
  std::vector<double> data(kEisFeatures * N);
  for (size_t j = 0; j < N; ++j) {
    Measurement m = model.norm.fitted() ? model.norm.apply(lesion.measurements[j])
                                        : lesion.measurements[j];
    for (size_t f = 0; f < kEisFeatures; ++f) data[f * N + j] = m[f];
  }
  Tensor logits = model.forward(Tensor::from({kEisFeatures, N}, std::move(data)));
  LesionPrediction pred;
  pred.lesion_id = lesion.id;
  pred.per_measurement.resize(N);
  for (size_t j = 0; j < N; ++j)
    pred.per_measurement[j] = logistic(logits.data()[j]);
  pred.p = *std::max_element(pred.per_measurement.begin(),
                             pred.per_measurement.end());
  return pred;
}

double permuted_inference(GruModel& model, const Lesion& lesion, int n_perm,
                          Rng& rng) {
  if (n_perm < 1) throw ContractError("permuted_inference: n_perm must be >= 1");
  model.head.set_training(false);
  double acc = 0.0;
  for (int k = 0; k < n_perm; ++k) {
    auto order = rng.permutation(lesion.measurements.size());
    Tensor X = model.sequence_tensor(lesion.measurements, order);
    Tensor logit = model.forward({X});
    acc += logistic(logit.item());
  }
  return acc / (double)n_perm;
}

namespace {

void fit_normalizer(EisNormalizer& norm, const Dataset& data,
                    const std::vector<size_t>& train_idx) {
  std::vector<const Measurement*> train;
  for (size_t i : train_idx)
    for (const auto& m : data.lesions[i].measurements) train.push_back(&m);
  norm.fit(train);
}

void check_loss(double loss) {
  if (!std::isfinite(loss))
    throw NumericError("training diverged: non-finite loss");
}

}  // namespace

std::vector<double> train_gru(GruModel& model, const Dataset& data,
                              const std::vector<size_t>& train_idx,
                              const EisTrainConfig& cfg, Rng& rng) {
  fit_normalizer(model.norm, data, train_idx);
  model.head.set_training(true);
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
      std::vector<Tensor> seqs;
      std::vector<double> targets;
      for (size_t i = b; i < e; ++i) {
        const Lesion& l = data.lesions[order[i]];
        auto perm = rng.permutation(l.measurements.size());
        seqs.push_back(model.sequence_tensor(l.measurements, perm));
        targets.push_back((double)l.label);
      }
      Tensor loss = bce_with_logits_mean(model.forward(seqs), targets);
      check_loss(loss.item());
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

std::vector<double> train_fcnn(FcnnModel& model, const Dataset& data,
                               const std::vector<size_t>& train_idx,
                               const EisTrainConfig& cfg, Rng& rng) {
  fit_normalizer(model.norm, data, train_idx);
  model.bn.training = true;
  auto params = model.params().trainable();
  nn::AdamState adam;
  adam.cfg.lr = cfg.lr;
  // One sample per measurement, labelled with its lesion's diagnosis.
  std::vector<std::pair<size_t, size_t>> samples;
  for (size_t i : train_idx)
    for (size_t j = 0; j < data.lesions[i].measurements.size(); ++j)
      samples.emplace_back(i, j);
  std::vector<double> trajectory;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    adam.cfg.lr = nn::cosine_lr(cfg.lr, epoch, cfg.epochs);
    rng.shuffle(samples);
    double epoch_loss = 0.0;
    size_t batches = 0;
    for (size_t b = 0; b < samples.size(); b += (size_t)cfg.batch) {
      size_t e = std::min(samples.size(), b + (size_t)cfg.batch);
      size_t B = e - b;
      std::vector<double> xdata(kEisFeatures * B);
      std::vector<double> targets(B);
      for (size_t i = 0; i < B; ++i) {
        const auto& [li, mi] = samples[b + i];
        Measurement m = model.norm.apply(data.lesions[li].measurements[mi]);
        for (size_t f = 0; f < kEisFeatures; ++f) xdata[f * B + i] = m[f];
        targets[i] = (double)data.lesions[li].label;
      }
      Tensor X = Tensor::from({kEisFeatures, B}, std::move(xdata));
      Tensor loss = bce_with_logits_mean(model.forward(X), targets);
      check_loss(loss.item());
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
