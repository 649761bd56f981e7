#include "eisderm/synth.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace eisderm {

namespace {

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

uint64_t lesion_seed(uint64_t master, size_t index) {
  return Rng::mix(master * 0x9e3779b97f4a7c15ull + index + 1);
}

}  // namespace

LesionSpec sample_lesion_spec(size_t index, int label, Subtype subtype,
                              const GenConfig& cfg, Rng& rng) {
  LesionSpec spec;
  spec.index = index;
  spec.label = label;
  spec.subtype = subtype;
  spec.log_noise = cfg.eis_log_noise;
  spec.phase_noise = cfg.eis_phase_noise;
  spec.off_signal_frac = cfg.off_signal_frac;

  double k = std::clamp(cfg.complementarity, 0.0, 1.0);
  double mu = label ? cfg.class_sep : 0.0;
  double shared = rng.normal();
  spec.z_eis = mu + std::sqrt(1.0 - k) * shared + std::sqrt(k) * rng.normal();
  spec.z_derm = mu + std::sqrt(1.0 - k) * shared + std::sqrt(k) * rng.normal();

  spec.r_inf = 300.0 * std::exp(0.20 * rng.normal());
  spec.delta_r = 2000.0 * std::exp(0.25 * rng.normal());
  spec.f_c = 2.0e4 * std::exp(0.35 * rng.normal());
  spec.alpha = 0.82 + 0.12 * rng.uniform();

  // Truncated geometric measurement count, mean ~= cfg.mean_measurements.
  double p = 1.0 / cfg.mean_measurements;
  int n = 1;
  while (n < cfg.max_measurements && rng.uniform() > p) ++n;
  spec.n_measurements = n;
  spec.informative_index = (int)rng.below((uint64_t)n);

  double t = spec.z_derm;
  spec.irregularity = 0.02 + 0.06 * logistic(t + 0.1 * rng.normal());
  spec.asymmetry = 0.25 * logistic(0.8 * (t + 0.15 * rng.normal()));
  spec.color_variance = 0.18 * logistic(0.7 * (t + 0.15 * rng.normal()));
  spec.darkness = 0.5 - 0.17 * std::tanh(0.5 * (t + 0.1 * rng.normal()));
  spec.radius_frac = rng.uniform(0.22, 0.30);
  for (size_t i = 0; i < spec.harmonic_amp.size(); ++i) {
    spec.harmonic_amp[i] = spec.irregularity * rng.normal() / (double)(i + 2);
    spec.harmonic_phase[i] = rng.uniform(0.0, 2.0 * M_PI);
  }
  spec.noise_seed = rng.raw();
  return spec;
}

std::vector<double> gen_eis_spectrum(const LesionSpec& spec, int depth,
                                     double signal, Rng& rng) {
  if (depth < 1 || depth > (int)kEisDepths)
    throw ContractError("gen_eis_spectrum: depth must be in 1..10");
  // Deeper electrode permutations carry more of the malignancy deformation.
  double wd = (double)depth / (double)kEisDepths;
  double dr = spec.delta_r * (1.0 + 0.8 * wd) * std::exp(0.55 * signal * wd);
  double fc = spec.f_c * std::exp(0.45 * signal * wd);
  std::vector<double> out(2 * kEisFrequencies);
  double lf0 = std::log(kEisFreqLo), lf1 = std::log(kEisFreqHi);
  for (size_t i = 0; i < kEisFrequencies; ++i) {
    double f = std::exp(lf0 + (lf1 - lf0) * (double)i /
                                  (double)(kEisFrequencies - 1));
    double m = std::pow(f / fc, spec.alpha);
    std::complex<double> denom(1.0 + m * std::cos(M_PI * spec.alpha / 2.0),
                               m * std::sin(M_PI * spec.alpha / 2.0));
    std::complex<double> z = spec.r_inf + dr / denom;
    double logmag = std::log(std::abs(z)) + spec.log_noise * rng.normal();
    double phase = std::arg(z) + spec.phase_noise * rng.normal();
    out[2 * i] = logmag;
    out[2 * i + 1] = phase;
  }
  return out;
}

Measurement gen_eis_measurement(const LesionSpec& spec, int meas_idx,
                                Rng& rng) {
  // Off-lesion measurements only see a small fraction of the signal.
  double signal = meas_idx == spec.informative_index
                      ? spec.z_eis
                      : spec.off_signal_frac * spec.z_eis;
  Measurement m;
  m.reserve(kEisFeatures);
  for (int depth = 1; depth <= (int)kEisDepths; ++depth) {
    auto seg = gen_eis_spectrum(spec, depth, signal, rng);
    m.insert(m.end(), seg.begin(), seg.end());
  }
  return m;
}

DermImage gen_lesion_image(const LesionSpec& spec, const GenConfig& cfg) {
  Rng rng(spec.noise_seed);
  int h = cfg.img_h, w = cfg.img_w;
  DermImage img(h, w);
  const double bg[3] = {0.84, 0.66, 0.55};
  const double lesion_base[3] = {1.0, 0.62, 0.45};
  // Per-sector color jitter (8 angular sectors).
  double sector_mult[8][3];
  for (auto& s : sector_mult)
    for (double& c : s) c = 1.0 + spec.color_variance * 0.6 * rng.normal();
  double cx = (w - 1) / 2.0, cy = (h - 1) / 2.0;
  double r0 = spec.radius_frac * std::min(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double dx = x - cx, dy = y - cy;
      double r = std::hypot(dx, dy);
      double theta = std::atan2(dy, dx);
      double boundary = 1.0;
      for (size_t k = 0; k < spec.harmonic_amp.size(); ++k)
        boundary += spec.harmonic_amp[k] *
                    std::cos((double)(k + 2) * theta + spec.harmonic_phase[k]);
      double R = r0 * boundary;
      double inside = std::clamp((R - r) / 1.5 + 0.5, 0.0, 1.0);
      int sector = std::clamp(
          (int)((theta + M_PI) / (2.0 * M_PI) * 8.0), 0, 7);
      double skew =
          std::clamp(1.0 - spec.asymmetry * dx / std::max(r0, 1.0), 0.5, 1.5);
      for (int c = 0; c < 3; ++c) {
        double lesion_v =
            spec.darkness * lesion_base[c] * sector_mult[sector][c] * skew;
        double v = bg[c] * (1.0 - inside) + lesion_v * inside;
        v += cfg.pixel_noise * rng.normal();
        img.at(c, y, x) = std::clamp(v, 0.0, 1.0);
      }
    }
  }
  return img;
}

Dataset gen_dataset_memory(const GenConfig& cfg,
                           std::vector<LesionSpec>* specs_out) {
  if (cfg.n_lesions < 10)
    throw ContractError("gen_dataset: need at least 10 lesions");
  if (cfg.n_benign + cfg.n_malignant != cfg.n_lesions ||
      cfg.n_benign == 0 || cfg.n_malignant == 0)
    throw ContractError("gen_dataset: infeasible class ratio");

  Dataset ds;
  std::vector<LesionSpec> specs;
  for (size_t i = 0; i < cfg.n_lesions; ++i) {
    int label = i < cfg.n_benign ? 0 : 1;
    Rng lrng(lesion_seed(cfg.seed, i));
    Subtype subtype = Subtype::Nevus;
    if (label) {
      double u = lrng.uniform();
      subtype = u < 0.60   ? Subtype::Melanoma
                : u < 0.85 ? Subtype::OtherMalignant
                           : Subtype::Dysplastic;
    }
    LesionSpec spec = sample_lesion_spec(i, label, subtype, cfg, lrng);
    Lesion l;
    char idbuf[16];
    std::snprintf(idbuf, sizeof(idbuf), "L%04zu", i);
    l.id = idbuf;
    l.label = label;
    l.subtype = subtype;
    for (int j = 0; j < spec.n_measurements; ++j)
      l.measurements.push_back(gen_eis_measurement(spec, j, lrng));
    l.image = gen_lesion_image(spec, cfg);
    ds.lesions.push_back(std::move(l));
    specs.push_back(spec);
  }

  // Stratified five-fold assignment: shuffle within class, deal round-robin.
  Rng frng(Rng::mix(cfg.seed ^ 0xF01DF01Dull));
  std::vector<size_t> benign, malignant;
  for (size_t i = 0; i < ds.lesions.size(); ++i)
    (ds.lesions[i].label ? malignant : benign).push_back(i);
  frng.shuffle(benign);
  frng.shuffle(malignant);
  for (size_t i = 0; i < benign.size(); ++i)
    ds.lesions[benign[i]].fold = (int)(i % 5);
  for (size_t i = 0; i < malignant.size(); ++i)
    ds.lesions[malignant[i]].fold = (int)(i % 5);
  for (size_t i = 0; i < specs.size(); ++i)
    specs[i].fold = ds.lesions[i].fold;

  if (specs_out) *specs_out = std::move(specs);
  return ds;
}

void gen_dataset(const GenConfig& cfg, const std::string& out_dir) {
  std::vector<LesionSpec> specs;
  Dataset ds = gen_dataset_memory(cfg, &specs);

  namespace fs = std::filesystem;
  fs::create_directories(out_dir + "/images");

  std::ofstream manifest(out_dir + "/manifest.csv");
  manifest << "lesion_id,image_path,label,subtype,fold\n";
  for (const auto& l : ds.lesions) {
    std::string img_path = "images/" + l.id + ".ppm";
    write_ppm(out_dir + "/" + img_path, l.image);
    manifest << l.id << "," << img_path << "," << l.label << ","
             << subtype_name(l.subtype) << "," << l.fold << "\n";
  }
  manifest.close();

  std::ofstream eis(out_dir + "/eis.csv");
  eis << "lesion_id,measurement_index";
  for (size_t f = 0; f < kEisFeatures; ++f) {
    char col[8];
    std::snprintf(col, sizeof(col), ",f%03zu", f);
    eis << col;
  }
  eis << "\n";
  char num[32];
  for (const auto& l : ds.lesions) {
    for (size_t j = 0; j < l.measurements.size(); ++j) {
      eis << l.id << "," << j;
      for (double v : l.measurements[j]) {
        std::snprintf(num, sizeof(num), ",%.10g", v);
        eis << num;
      }
      eis << "\n";
    }
  }
  eis.close();

  nlohmann::ordered_json j;
  j["generator"] = {{"n_lesions", cfg.n_lesions},
                    {"n_benign", cfg.n_benign},
                    {"n_malignant", cfg.n_malignant},
                    {"seed", cfg.seed},
                    {"complementarity", cfg.complementarity},
                    {"class_sep", cfg.class_sep},
                    {"img_h", cfg.img_h},
                    {"img_w", cfg.img_w}};
  nlohmann::ordered_json lesions = nlohmann::ordered_json::array();
  for (size_t i = 0; i < specs.size(); ++i) {
    const auto& s = specs[i];
    lesions.push_back({{"id", ds.lesions[i].id},
                       {"label", s.label},
                       {"subtype", subtype_name(s.subtype)},
                       {"fold", s.fold},
                       {"z_eis", s.z_eis},
                       {"z_derm", s.z_derm},
                       {"irregularity", s.irregularity},
                       {"n_measurements", s.n_measurements},
                       {"informative_index", s.informative_index}});
  }
  j["lesions"] = std::move(lesions);
  std::ofstream params(out_dir + "/params.json");
  params << j.dump(2) << "\n";
}

}  // namespace eisderm
