#pragma once

#include <vector>

#include "eisderm/data.hpp"
#include "eisderm/nn.hpp"
#include "eisderm/rng.hpp"
#include "eisderm/tensor.hpp"

namespace eisderm {

// Per-feature standardization fitted on training-fold measurements only.
struct EisNormalizer {
  std::vector<double> mean, stddev;

  void fit(const std::vector<const Measurement*>& train_measurements);
  Measurement apply(const Measurement& m) const;
  bool fitted() const { return !mean.empty(); }
};

enum class PoolMode { Last, Mean, Max };
const char* pool_mode_name(PoolMode m);

// Gated recurrent cell:
//   z_j = sigmoid(M_z h_{j-1} + L_z x_j)
//   r_j = sigmoid(M_r h_{j-1} + L_r x_j)
//   c_j = tanh(M_c (r_j o h_{j-1}) + L_c x_j)
//   h_j = z_j o c_j + (1 - z_j) o h_{j-1}
// Note the update gate multiplies the candidate, not the carried state.
struct GruCell {
  ad::Tensor Mz, Mr, Mc;  // (hidden, hidden)
  ad::Tensor Lz, Lr, Lc;  // (hidden, input)
  size_t hidden = 0, input = 0;

  GruCell() = default;
  GruCell(size_t hidden, size_t input, Rng& rng);
  void collect(const std::string& prefix, nn::ParamMap& pm) const;
};

struct SequenceEncoding {
  ad::Tensor H;       // (hidden, N) state matrix, columns h_1..h_N
  ad::Tensor pooled;  // (hidden, 1)
  PoolMode mode;
};

// X is (input, N) with measurement j in column j; h_0 = 0.
SequenceEncoding gru_encode(const GruCell& cell, const ad::Tensor& X,
                            PoolMode mode);

// FC hidden layer + batchnorm + ReLU + scalar output layer.
struct EisHead {
  nn::Linear fc;
  nn::BatchNorm1d bn;
  nn::Linear out;

  EisHead() = default;
  EisHead(size_t in_dim, size_t hidden_dim, Rng& rng);
  ad::Tensor operator()(const ad::Tensor& x);  // (in,B) -> (1,B)
  void set_training(bool t) { bn.training = t; }
  void collect(const std::string& prefix, nn::ParamMap& pm);
};

struct GruModel {
  GruCell cell;
  EisHead head;
  EisNormalizer norm;
  PoolMode mode = PoolMode::Max;

  GruModel() = default;
  GruModel(PoolMode mode, size_t hidden, size_t head_hidden, Rng& rng);
  nn::ParamMap params();
  // Logits for a batch of normalized sequences, each (input, N_i).
  ad::Tensor forward(const std::vector<ad::Tensor>& sequences);
  ad::Tensor sequence_tensor(const std::vector<Measurement>& meas,
                             const std::vector<size_t>& order) const;
};

// Two-layer per-measurement baseline; lesion score is the per-measurement max.
struct FcnnModel {
  nn::Linear fc;
  nn::BatchNorm1d bn;
  nn::Linear out;
  EisNormalizer norm;

  FcnnModel() = default;
  FcnnModel(size_t hidden, Rng& rng);
  nn::ParamMap params();
  ad::Tensor forward(const ad::Tensor& X);  // (700,B) -> (1,B)
};

struct LesionPrediction {
  std::string lesion_id;
  double p = 0.0;
  std::vector<double> per_measurement;  // baseline models only
};

LesionPrediction fcnn_predict_lesion(FcnnModel& model, const Lesion& lesion);

// Mean model probability over n_perm random permutations of the sequence.
double permuted_inference(GruModel& model, const Lesion& lesion, int n_perm,
                          Rng& rng);

struct EisTrainConfig {
  int epochs = 15;
  int batch = 10;
  double lr = 1e-3;
};

// Paper-reported training recipe for the EIS models.
inline EisTrainConfig eis_paper_preset() { return {200, 10, 2e-5}; }

// Adam training with per-epoch random sequence permutation per lesion.
// Returns the per-epoch mean loss trajectory. Throws NumericError on NaN loss.
std::vector<double> train_gru(GruModel& model, const Dataset& data,
                              const std::vector<size_t>& train_idx,
                              const EisTrainConfig& cfg, Rng& rng);
std::vector<double> train_fcnn(FcnnModel& model, const Dataset& data,
                               const std::vector<size_t>& train_idx,
                               const EisTrainConfig& cfg, Rng& rng);

}  // namespace eisderm
