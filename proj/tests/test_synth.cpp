#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <vector>

#include "doctest.h"
#include "eisderm/stats.hpp"
#include "eisderm/synth.hpp"

using namespace eisderm;

namespace {

double grid_frequency(size_t i) {
  double lf0 = std::log(kEisFreqLo), lf1 = std::log(kEisFreqHi);
  return std::exp(lf0 + (lf1 - lf0) * (double)i / (double)(kEisFrequencies - 1));
}

LesionSpec noiseless_spec() {
  LesionSpec spec;
  spec.log_noise = 0.0;
  spec.phase_noise = 0.0;
  spec.r_inf = 300.0;
  spec.delta_r = 2000.0;
  spec.f_c = 2e4;
  spec.alpha = 0.9;
  return spec;
}

GenConfig small_config(uint64_t seed = 1) {
  GenConfig cfg;
  cfg.n_lesions = 60;
  cfg.n_benign = 38;
  cfg.n_malignant = 22;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST_CASE("noiseless spectrum matches the complex-arithmetic closed form") {
  LesionSpec spec = noiseless_spec();
  Rng rng(1);
  for (int depth : {1, 4, 10}) {
    CAPTURE(depth);
    double wd = (double)depth / (double)kEisDepths;
    for (double signal : {0.0, 1.3}) {
      CAPTURE(signal);
      auto seg = gen_eis_spectrum(spec, depth, signal, rng);
      REQUIRE(seg.size() == 2 * kEisFrequencies);
      double dr = spec.delta_r * (1.0 + 0.8 * wd) * std::exp(0.55 * signal * wd);
      double fc = spec.f_c * std::exp(0.45 * signal * wd);
      for (size_t i = 0; i < kEisFrequencies; ++i) {
        std::complex<double> iw(0.0, grid_frequency(i) / fc);
        std::complex<double> z = spec.r_inf + dr / (1.0 + std::pow(iw, spec.alpha));
        CHECK(seg[2 * i] ==
              doctest::Approx(std::log(std::abs(z))).epsilon(1e-12));
        CHECK(seg[2 * i + 1] == doctest::Approx(std::arg(z)).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("alpha = 1 at the characteristic frequency gives Z = R_inf + dR(1-i)/2") {
  LesionSpec spec = noiseless_spec();
  spec.alpha = 1.0;
  const size_t pivot = 17;
  spec.f_c = grid_frequency(pivot);
  Rng rng(2);
  int depth = 10;  // wd = 1, so the depth factor is exactly 1.8
  auto seg = gen_eis_spectrum(spec, depth, 0.0, rng);
  double dr = spec.delta_r * 1.8;
  std::complex<double> z(spec.r_inf + dr / 2.0, -dr / 2.0);
  CHECK(seg[2 * pivot] == doctest::Approx(std::log(std::abs(z))).epsilon(1e-12));
  CHECK(seg[2 * pivot + 1] == doctest::Approx(std::arg(z)).epsilon(1e-12));
}

TEST_CASE("spectrum rejects out-of-range depths") {
  LesionSpec spec = noiseless_spec();
  Rng rng(3);
  CHECK_THROWS_AS((void)gen_eis_spectrum(spec, 0, 0.0, rng), ContractError);
  CHECK_THROWS_AS((void)gen_eis_spectrum(spec, 11, 0.0, rng), ContractError);
}

TEST_CASE("only the informative measurement carries the full deformation") {
  LesionSpec spec = noiseless_spec();
  spec.z_eis = 2.0;
  spec.n_measurements = 3;
  spec.informative_index = 1;
  Rng rng(4);
  Measurement on = gen_eis_measurement(spec, 1, rng);
  Measurement off = gen_eis_measurement(spec, 0, rng);
  REQUIRE(on.size() == kEisFeatures);
  REQUIRE(off.size() == kEisFeatures);
  // The attenuated reading equals a full reading at the off-signal fraction.
  Rng rng2(5);
  LesionSpec weak = spec;
  weak.z_eis = spec.off_signal_frac * spec.z_eis;
  Measurement weak_on = gen_eis_measurement(weak, 1, rng2);
  for (size_t i = 0; i < kEisFeatures; ++i)
    CHECK(off[i] == doctest::Approx(weak_on[i]).epsilon(1e-12));
  // And the informative one differs materially from the off-lesion one.
  double diff = 0.0;
  for (size_t i = 0; i < kEisFeatures; ++i) diff += std::abs(on[i] - off[i]);
  CHECK(diff > 1.0);
}

TEST_CASE("noiseless symmetric lesion renders a mirror-symmetric image") {
  GenConfig cfg;
  cfg.pixel_noise = 0.0;
  cfg.img_h = 32;
  cfg.img_w = 32;
  LesionSpec spec = noiseless_spec();
  spec.asymmetry = 0.0;
  spec.color_variance = 0.0;
  spec.irregularity = 0.0;
  spec.harmonic_amp = {};
  spec.noise_seed = 99;
  DermImage img = gen_lesion_image(spec, cfg);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < img.h; ++y)
      for (int x = 0; x < img.w; ++x) {
        CHECK(img.at(c, y, x) ==
              doctest::Approx(img.at(c, y, img.w - 1 - x)).epsilon(1e-12));
        CHECK(img.at(c, y, x) ==
              doctest::Approx(img.at(c, img.h - 1 - y, x)).epsilon(1e-12));
      }
}

TEST_CASE("darkness controls the lesion-center intensity") {
  GenConfig cfg;
  cfg.pixel_noise = 0.0;
  cfg.img_h = 32;
  cfg.img_w = 32;
  LesionSpec light = noiseless_spec();
  light.color_variance = 0.0;
  light.darkness = 0.62;
  LesionSpec dark = light;
  dark.darkness = 0.38;
  DermImage li = gen_lesion_image(light, cfg);
  DermImage di = gen_lesion_image(dark, cfg);
  int cy = cfg.img_h / 2, cx = cfg.img_w / 2;
  for (int c = 0; c < 3; ++c) CHECK(di.at(c, cy, cx) < li.at(c, cy, cx));
  for (double p : li.px) {
    CHECK(p >= 0.0);
    CHECK(p <= 1.0);
  }
}

TEST_CASE("dataset generation is deterministic in the seed") {
  GenConfig cfg = small_config();
  std::vector<LesionSpec> s1, s2;
  Dataset a = gen_dataset_memory(cfg, &s1);
  Dataset b = gen_dataset_memory(cfg, &s2);
  REQUIRE(a.lesions.size() == b.lesions.size());
  for (size_t i = 0; i < a.lesions.size(); ++i) {
    CHECK(a.lesions[i].id == b.lesions[i].id);
    CHECK(a.lesions[i].fold == b.lesions[i].fold);
    CHECK(a.lesions[i].image.px == b.lesions[i].image.px);
    REQUIRE(a.lesions[i].measurements.size() ==
            b.lesions[i].measurements.size());
    for (size_t j = 0; j < a.lesions[i].measurements.size(); ++j)
      CHECK(a.lesions[i].measurements[j] == b.lesions[i].measurements[j]);
    CHECK(s1[i].z_eis == s2[i].z_eis);
  }
  GenConfig other = small_config(2);
  Dataset c = gen_dataset_memory(other);
  CHECK(a.lesions[0].measurements[0] != c.lesions[0].measurements[0]);
}

TEST_CASE("dataset respects class counts, folds and measurement bounds") {
  GenConfig cfg = small_config();
  std::vector<LesionSpec> specs;
  Dataset ds = gen_dataset_memory(cfg, &specs);
  REQUIRE(ds.lesions.size() == cfg.n_lesions);

  size_t benign = 0, malignant = 0;
  int fold_class_counts[5][2] = {};
  for (size_t i = 0; i < ds.lesions.size(); ++i) {
    const Lesion& l = ds.lesions[i];
    (l.label ? malignant : benign)++;
    REQUIRE(l.fold >= 0);
    REQUIRE(l.fold < 5);
    fold_class_counts[l.fold][l.label]++;
    CHECK((int)l.measurements.size() == specs[i].n_measurements);
    CHECK(specs[i].n_measurements >= 1);
    CHECK(specs[i].n_measurements <= cfg.max_measurements);
    CHECK(specs[i].informative_index >= 0);
    CHECK(specs[i].informative_index < specs[i].n_measurements);
    if (!l.label) CHECK(l.subtype == Subtype::Nevus);
    CHECK(l.image.h == cfg.img_h);
    CHECK(l.image.w == cfg.img_w);
    for (const auto& m : l.measurements) {
      REQUIRE(m.size() == kEisFeatures);
      for (double v : m) CHECK(std::isfinite(v));
    }
  }
  CHECK(benign == cfg.n_benign);
  CHECK(malignant == cfg.n_malignant);
  // Stratified assignment: per-class fold sizes differ by at most one.
  for (int cls = 0; cls < 2; ++cls) {
    int lo = fold_class_counts[0][cls], hi = lo;
    for (int f = 1; f < 5; ++f) {
      lo = std::min(lo, fold_class_counts[f][cls]);
      hi = std::max(hi, fold_class_counts[f][cls]);
    }
    CHECK(hi - lo <= 1);
  }
}

TEST_CASE("latent scores are informative oracles for the labels") {
  GenConfig cfg;
  cfg.n_lesions = 400;
  cfg.n_benign = 255;
  cfg.n_malignant = 145;
  std::vector<LesionSpec> specs;
  Dataset ds = gen_dataset_memory(cfg, &specs);
  stats::ScoredSet eis, derm, irr;
  for (size_t i = 0; i < specs.size(); ++i) {
    eis.push(ds.lesions[i].id, specs[i].label, specs[i].z_eis);
    derm.push(ds.lesions[i].id, specs[i].label, specs[i].z_derm);
    irr.push(ds.lesions[i].id, specs[i].label, specs[i].irregularity);
  }
  // class_sep 1.5 on unit-variance latents: AUC = Phi(1.5/sqrt(2)) ~ 0.86
  CHECK(stats::auc(eis) > 0.75);
  CHECK(stats::auc(eis) < 0.95);
  CHECK(stats::auc(derm) > 0.75);
  CHECK(stats::auc(derm) < 0.95);
  // Image attributes inherit most of the dermoscopy latent's signal.
  CHECK(stats::auc(irr) > 0.70);
}

TEST_CASE("zero complementarity makes the two latents identical") {
  GenConfig cfg = small_config();
  cfg.complementarity = 0.0;
  std::vector<LesionSpec> specs;
  gen_dataset_memory(cfg, &specs);
  for (const auto& s : specs) CHECK(s.z_eis == s.z_derm);
}

TEST_CASE("full complementarity decorrelates the latents") {
  GenConfig cfg;
  cfg.n_lesions = 500;
  cfg.n_benign = 320;
  cfg.n_malignant = 180;
  cfg.complementarity = 1.0;
  std::vector<LesionSpec> specs;
  gen_dataset_memory(cfg, &specs);
  // Within the benign class the latents are independent draws.
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  size_t n = 0;
  for (const auto& s : specs) {
    if (s.label) continue;
    ++n;
    sx += s.z_eis;
    sy += s.z_derm;
    sxx += s.z_eis * s.z_eis;
    syy += s.z_derm * s.z_derm;
    sxy += s.z_eis * s.z_derm;
  }
  double corr = (sxy - sx * sy / (double)n) /
                std::sqrt((sxx - sx * sx / (double)n) *
                          (syy - sy * sy / (double)n));
  CHECK(std::abs(corr) < 0.2);
}

TEST_CASE("generator rejects infeasible configurations") {
  GenConfig tiny;
  tiny.n_lesions = 5;
  tiny.n_benign = 3;
  tiny.n_malignant = 2;
  CHECK_THROWS_AS((void)gen_dataset_memory(tiny), ContractError);
  GenConfig bad = small_config();
  bad.n_benign = bad.n_lesions;  // counts no longer add up
  CHECK_THROWS_AS((void)gen_dataset_memory(bad), ContractError);
}

TEST_CASE("on-disk dataset round-trips through load_dataset") {
  GenConfig cfg = small_config(3);
  std::string dir = "synth_roundtrip_tmp";
  std::filesystem::remove_all(dir);
  gen_dataset(cfg, dir);
  CHECK(std::filesystem::exists(dir + "/manifest.csv"));
  CHECK(std::filesystem::exists(dir + "/eis.csv"));
  CHECK(std::filesystem::exists(dir + "/params.json"));

  Dataset mem = gen_dataset_memory(cfg);
  Dataset disk = load_dataset(dir);
  REQUIRE(disk.lesions.size() == mem.lesions.size());
  for (size_t i = 0; i < mem.lesions.size(); ++i) {
    const Lesion& a = mem.lesions[i];
    const Lesion& b = disk.lesions[i];
    CHECK(a.id == b.id);
    CHECK(a.label == b.label);
    CHECK(a.subtype == b.subtype);
    CHECK(a.fold == b.fold);
    REQUIRE(a.measurements.size() == b.measurements.size());
    for (size_t j = 0; j < a.measurements.size(); ++j)
      for (size_t f = 0; f < kEisFeatures; ++f)
        CHECK(b.measurements[j][f] ==
              doctest::Approx(a.measurements[j][f]).epsilon(1e-8));
    REQUIRE(b.image.h == a.image.h);
    REQUIRE(b.image.w == a.image.w);
    // PPM stores 8-bit channels, so the round trip quantizes.
    for (size_t p = 0; p < a.image.px.size(); ++p)
      CHECK(std::abs(a.image.px[p] - b.image.px[p]) <= 1.0 / 255.0);
  }
  std::filesystem::remove_all(dir);
}
