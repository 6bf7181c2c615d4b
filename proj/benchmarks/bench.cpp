#include <benchmark/benchmark.h>

#include "ppl/attribution.hpp"
#include "ppl/losses.hpp"
#include "ppl/predictor.hpp"
#include "ppl/rng.hpp"
#include "ppl/rpr.hpp"
#include "ppl/synth_corpus.hpp"

namespace {

using namespace ppl;

DetectorConfig desk_config() {
  DetectorConfig cfg;
  cfg.image_h = 112;
  cfg.image_w = 112;
  cfg.channels = 3;
  cfg.patch_size = 14;
  cfg.embed_dim = 64;
  cfg.depth = 4;
  cfg.heads = 4;
  return cfg;
}

void BM_DetectorForward(benchmark::State& state) {
  const DetectorConfig cfg = desk_config();
  const auto params = init_params<float>(cfg, 1);
  const Image img = gen_real(1, 112, 112);
  for (auto _ : state) {
    auto out = forward(params, img);
    benchmark::DoNotOptimize(out.logits);
  }
}
BENCHMARK(BM_DetectorForward);

void BM_DetectorForwardBackward(benchmark::State& state) {
  const DetectorConfig cfg = desk_config();
  const auto params = init_params<float>(cfg, 1);
  const Image img = gen_real(1, 112, 112);
  DetectorParams grads = zero_like(params);
  ForwardCache cache;
  for (auto _ : state) {
    auto out = forward(params, img, &cache);
    std::array<float, 2> dl{};
    bce(out.logits, kLabelSynthetic, &dl);
    backward(params, cache, dl, {}, grads);
    benchmark::DoNotOptimize(grads.head_b[0]);
  }
}
BENCHMARK(BM_DetectorForwardBackward);

void BM_Reconstruct(benchmark::State& state) {
  ArtifactProfile profile;
  profile.name = "ckbd";
  profile.kind = FingerprintKind::kCheckerboardModulation;
  const Image img = gen_real(2, 112, 112);
  for (auto _ : state) {
    Image out = reconstruct(img, profile, 0.25);
    benchmark::DoNotOptimize(out.data.data());
  }
}
BENCHMARK(BM_Reconstruct);

void BM_RprTransform(benchmark::State& state) {
  RPRConfig cfg;
  cfg.profile.name = "ckbd";
  cfg.profile.kind = FingerprintKind::kCheckerboardModulation;
  const Image img = gen_real(3, 112, 112);
  std::uint64_t seed = 0;
  for (auto _ : state) {
    Rng rng(seed++);
    RPRResult res = rpr_transform(img, cfg, rng);
    benchmark::DoNotOptimize(res.image.data.data());
  }
}
BENCHMARK(BM_RprTransform);

void BM_MarginContrastive(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0)), dim = 64;
  Rng rng(4);
  std::vector<float> emb(static_cast<std::size_t>(n) * dim);
  for (auto& v : emb) v = static_cast<float>(rng.normal());
  std::vector<std::int8_t> labels(static_cast<std::size_t>(n));
  for (auto& l : labels) l = static_cast<std::int8_t>(rng.below(2));
  ContrastiveConfig cfg;
  cfg.max_pairs = 4096;
  std::vector<float> grad;
  for (auto _ : state) {
    const double loss = margin_contrastive(emb, n, dim, labels, cfg, 7, &grad);
    benchmark::DoNotOptimize(loss);
  }
}
BENCHMARK(BM_MarginContrastive)->Arg(256)->Arg(1024);

void BM_CdeMap(benchmark::State& state) {
  const DetectorConfig cfg = desk_config();
  const DetectorPredictor model{init_params<float>(cfg, 5)};
  const Image img = gen_real(6, 112, 112);
  const PatchGrid grid(112, 112, 14);
  for (auto _ : state) {
    CDEMap map = cde_map(model, img, grid);
    benchmark::DoNotOptimize(map.values.data());
  }
}
BENCHMARK(BM_CdeMap);

}  // namespace

BENCHMARK_MAIN();
