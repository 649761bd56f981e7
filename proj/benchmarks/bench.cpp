#include <benchmark/benchmark.h>

#include <cmath>
#include <vector>

#include "eisderm/derm.hpp"
#include "eisderm/eis.hpp"
#include "eisderm/stats.hpp"
#include "eisderm/synth.hpp"

using namespace eisderm;
using ad::Tensor;

namespace {

Tensor random_tensor(ad::Shape shape, Rng& rng, bool grad = false) {
  std::vector<double> v(ad::shape_size(shape));
  for (double& x : v) x = rng.normal();
  return Tensor::from(std::move(shape), std::move(v), grad);
}

void bm_matmul(benchmark::State& state) {
  size_t n = (size_t)state.range(0);
  Rng rng(1);
  Tensor a = random_tensor({n, n}, rng);
  Tensor b = random_tensor({n, n}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(ad::matmul(a, b).data().data());
  state.SetItemsProcessed(state.iterations() * (int64_t)(2 * n * n * n));
}

void bm_gru_encode(benchmark::State& state) {
  size_t seq = (size_t)state.range(0);
  Rng rng(2);
  GruModel model(PoolMode::Max, 64, 32, rng);
  Tensor xs = random_tensor({kEisFeatures, seq}, rng);
  for (auto _ : state)
    benchmark::DoNotOptimize(
        gru_encode(model.cell, xs, PoolMode::Max).pooled.data().data());
}

void bm_backbone_forward(benchmark::State& state) {
  int crop = (int)state.range(0);
  Rng rng(3);
  CnnBackbone backbone({8, 16, 32}, rng);
  Tensor img = random_tensor({3, (size_t)crop, (size_t)crop}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(backbone(img).data().data());
}

void bm_shades_of_gray(benchmark::State& state) {
  Rng rng(4);
  DermImage img(64, 64);
  for (double& p : img.px) p = rng.uniform();
  for (auto _ : state) benchmark::DoNotOptimize(shades_of_gray(img).px.data());
}

stats::ScoredSet bench_scores(size_t n) {
  Rng rng(5);
  stats::ScoredSet s;
  for (size_t i = 0; i < n; ++i) {
    int label = i % 3 == 0;
    s.push("L" + std::to_string(i), label,
           1.0 / (1.0 + std::exp(-(rng.normal() + 1.2 * label))));
  }
  return s;
}

void bm_auc(benchmark::State& state) {
  stats::ScoredSet s = bench_scores((size_t)state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(stats::auc(s));
}

void bm_bca_interval(benchmark::State& state) {
  stats::ScoredSet s = bench_scores(800);
  stats::StatsConfig cfg;
  cfg.n_ci = (int)state.range(0);
  for (auto _ : state) {
    auto iv = stats::bca_interval(
        s, [](const stats::ScoredSet& x) { return stats::auc(x); }, cfg);
    benchmark::DoNotOptimize(iv.lo);
  }
}

void bm_gen_measurement(benchmark::State& state) {
  GenConfig cfg;
  Rng rng(6);
  LesionSpec spec = sample_lesion_spec(0, 1, Subtype::Melanoma, cfg, rng);
  for (auto _ : state)
    benchmark::DoNotOptimize(gen_eis_measurement(spec, 0, rng).data());
}

void bm_gen_image(benchmark::State& state) {
  GenConfig cfg;
  Rng rng(7);
  LesionSpec spec = sample_lesion_spec(0, 1, Subtype::Melanoma, cfg, rng);
  for (auto _ : state)
    benchmark::DoNotOptimize(gen_lesion_image(spec, cfg).px.data());
}

}  // namespace

BENCHMARK(bm_matmul)->Arg(64)->Arg(256);
BENCHMARK(bm_gru_encode)->Arg(1)->Arg(4)->Arg(8);
BENCHMARK(bm_backbone_forward)->Arg(32)->Arg(64);
BENCHMARK(bm_shades_of_gray);
BENCHMARK(bm_auc)->Arg(200)->Arg(1000);
BENCHMARK(bm_bca_interval)->Arg(200)->Arg(1000);
BENCHMARK(bm_gen_measurement);
BENCHMARK(bm_gen_image);

BENCHMARK_MAIN();
