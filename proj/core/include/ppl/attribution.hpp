#pragma once

#include <filesystem>
#include <vector>

#include "ppl/manifest.hpp"
#include "ppl/patch_grid.hpp"
#include "ppl/predictor.hpp"

namespace ppl {

// Per-patch controlled-direct-effect values for one image: how much the
// synthetic-vs-real logit difference drops when that patch is zero-masked.
struct CDEMap {
  PatchGrid grid;
  std::vector<double> values;  // row-major, length K, logit-difference units
};

// values[k] = delta(image) - delta(image with patch k masked). Exactly
// K + 1 predictor calls; the masked passes run in parallel but the result
// is identical to the sequential order.
CDEMap cde_map(const Predictor& model, const Image& image,
               const PatchGrid& grid);

// exp(v - max(v)) per patch; the strongest patch maps to exactly 1.
std::vector<double> normalize_cde(const CDEMap& map);

struct UniformityStats {
  double entropy = 0.0;    // nats, over the normalized weights
  double topk_mass = 0.0;  // mass of the top ceil(K/10) patches
  double gini = 0.0;
};

UniformityStats uniformity_stats(const std::vector<double>& normalized);

struct OcclusionEntry {
  int mask_size = 0;
  int row = 0;
  int col = 0;
  double recall = 0.0;
  double drop = 0.0;  // baseline_recall - recall
};

struct OcclusionResult {
  double baseline_recall = 0.0;
  std::vector<OcclusionEntry> entries;
  double mean_drop = 0.0;
  double max_drop = 0.0;
};

// Recall degradation when one aligned square region is zero-masked in
// every image. `fake_images` must all be synthetic-labeled samples; every
// mask size must divide the image dimensions.
OcclusionResult occlusion_recall_curve(const Predictor& model,
                                       const std::vector<Image>& fake_images,
                                       const std::vector<int>& mask_sizes);

// Replicates one patch across the whole image.
Image tile_patch(const Image& image, const PatchGrid& grid, PatchIndex idx);

struct TileEvalResult {
  double accuracy = 0.0;
  int n = 0;
};

// For every record one patch is chosen uniformly (per-record seed) and
// tiled over the image; accuracy of predict against the image labels.
TileEvalResult tile_patch_eval(const Predictor& model, const Manifest& manifest,
                               const PatchGrid& grid, std::uint64_t seed);

struct CdeAggregate {
  std::vector<double> histogram;  // fixed bins over [0,1], masses sum to 1
  double entropy_mean = 0.0, entropy_std = 0.0;
  double topk_mass_mean = 0.0, topk_mass_std = 0.0;
  double gini_mean = 0.0, gini_std = 0.0;
  int n_images = 0;
};

// Per-image normalize_cde over the manifest's fake samples, aggregated.
CdeAggregate corpus_cde_report(const Predictor& model, const Manifest& manifest,
                               const PatchGrid& grid, int bins = 20);

void write_cde_csv(const std::filesystem::path& path, const CDEMap& map,
                   const std::vector<double>& normalized);
// 8-bit grayscale PGM (P5), one pixel per patch.
void write_cde_pgm(const std::filesystem::path& path, const PatchGrid& grid,
                   const std::vector<double>& normalized);
void write_cde_aggregate_json(const std::filesystem::path& path,
                              const CdeAggregate& agg);
CdeAggregate read_cde_aggregate_json(const std::filesystem::path& path);

}  // namespace ppl
