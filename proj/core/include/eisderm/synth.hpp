#pragma once

#include <array>
#include <string>
#include <vector>

#include "eisderm/data.hpp"
#include "eisderm/rng.hpp"

namespace eisderm {

struct GenConfig {
  size_t n_lesions = 988;
  size_t n_benign = 631;
  size_t n_malignant = 357;
  uint64_t seed = 1;
  // 0: both modalities read the same latent signal; 1: fully independent
  // modality-specific signals. Class separation of each latent is class_sep.
  double complementarity = 1.0;
  double class_sep = 1.5;
  int img_h = 64, img_w = 64;
  double pixel_noise = 0.012;
  double eis_log_noise = 0.05;   // log-normal sigma on |Z|
  double eis_phase_noise = 0.01; // additive sigma on phase (radians)
  int max_measurements = 8;
  double mean_measurements = 3.2;
  // Fraction of the EIS signal seen by the non-informative (off-lesion)
  // measurements; 0 means they read only healthy surrounding skin.
  double off_signal_frac = 0.0;
};

struct LesionSpec {
  size_t index = 0;
  int label = 0;
  Subtype subtype = Subtype::Nevus;
  int fold = 0;
  // Latent per-modality malignancy scores (the Bayes-oracle signals).
  double z_eis = 0.0, z_derm = 0.0;
  // Dispersion parameters.
  double r_inf = 300.0;
  double delta_r = 2000.0;
  double f_c = 2e4;
  double alpha = 0.9;
  // Sequence structure: only the informative measurement carries the full
  // EIS signal, the rest are attenuated off-lesion readings.
  int n_measurements = 1;
  int informative_index = 0;
  double off_signal_frac = 0.0;
  // Noise levels (copied from GenConfig; zero for closed-form checks).
  double log_noise = 0.05;
  double phase_noise = 0.01;
  // Image parameters.
  double asymmetry = 0.0;
  double irregularity = 0.0;
  double color_variance = 0.0;
  double darkness = 0.5;
  double radius_frac = 0.27;
  std::array<double, 6> harmonic_amp{};
  std::array<double, 6> harmonic_phase{};
  uint64_t noise_seed = 0;
};

LesionSpec sample_lesion_spec(size_t index, int label, Subtype subtype,
                              const GenConfig& cfg, Rng& rng);

// Cole-Cole spectrum Z(f) = R_inf + dR_depth / (1 + (i f/f_c)^alpha) for one
// depth (1..10); emits 35 (log|Z|, phase) pairs. `signal` scales the
// malignancy deformation (deeper depths carry more of it).
std::vector<double> gen_eis_spectrum(const LesionSpec& spec, int depth,
                                     double signal, Rng& rng);

// Full 700-feature measurement; measurement meas_idx carries the full signal
// iff it equals spec.informative_index.
Measurement gen_eis_measurement(const LesionSpec& spec, int meas_idx, Rng& rng);

DermImage gen_lesion_image(const LesionSpec& spec, const GenConfig& cfg);

// Writes manifest.csv, eis.csv, images/*.ppm and params.json into out_dir.
void gen_dataset(const GenConfig& cfg, const std::string& out_dir);

// In-memory variant (specs returned for oracle computations in tests).
Dataset gen_dataset_memory(const GenConfig& cfg,
                           std::vector<LesionSpec>* specs_out = nullptr);

}  // namespace eisderm
