#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ppl/artifact_profile.hpp"
#include "ppl/image.hpp"
#include "ppl/patch_grid.hpp"
#include "ppl/rng.hpp"

namespace ppl {

enum class RPRVariant {
  kRandom,
  kFixedHalfUpper,
  kFixedHalfLower,
  kFixedHalfLeft,
  kFixedHalfRight,
  kDropout,
};

std::string to_string(RPRVariant v);
RPRVariant rpr_variant_from_string(const std::string& s);

struct RPRConfig {
  double apply_prob = 0.9;
  double ratio = 0.5;
  int patch_size = 14;
  RPRVariant variant = RPRVariant::kRandom;
  double dropout_rate = 0.15;  // dropout variant only
  double strength = 0.25;
  ArtifactProfile profile;

  void validate() const;
};

// round-half-up patch count for a coverage ratio.
int rpr_patch_count(double ratio, int patch_count);

struct RPRResult {
  Image image;
  PatchLabelMap patch_labels;
};

// Hybrid of a real image and its reconstruction: round(ratio*K) patches,
// picked uniformly without replacement, come from the reconstruction; the
// rest stay bit-identical to the input. Labels mark the replaced patches.
RPRResult rpr_transform(const Image& real_image, const RPRConfig& cfg,
                        Rng& rng);

// Same, but with the selected set forced by the caller (also the hook the
// variant-equivalence tests use).
RPRResult rpr_transform_with_selection(const Image& real_image,
                                       const RPRConfig& cfg,
                                       const std::vector<PatchIndex>& selected);

// Deterministic contiguous-half selection named by cfg.variant.
RPRResult fixed_position_transform(const Image& real_image,
                                   const RPRConfig& cfg);

// Zero-fills round(dropout_rate*K) patches of a fully synthetic image.
// Dropped patches are labeled kPatchExcluded, survivors 1.
RPRResult patch_dropout_transform(const Image& fake_image,
                                  const RPRConfig& cfg, Rng& rng);

struct BatchSample {
  const Image* image = nullptr;
  int image_label = 0;
};

struct AugmentedSample {
  Image image;
  int image_label = 0;
  PatchLabelMap patch_labels;
  bool replaced = false;  // true when RPR substituted the original sample
};

// Per-sample augmentation of one batch. Fake samples are replaced with an
// RPR hybrid of real_pool[i % pool] with probability apply_prob (variant
// dropout instead transforms the fake itself); everything else passes
// through with patch labels inherited from the image label. Sample i uses
// a seed derived from (seed, i), so execution order never matters.
std::vector<AugmentedSample> apply_batch(
    const std::vector<BatchSample>& samples,
    const std::vector<const Image*>& real_pool, const RPRConfig& cfg,
    std::uint64_t seed);

// Writes augmented samples in the corpus manifest format with
// generator_tag "rpr:<variant>:<ratio>". Returns the manifest path.
std::filesystem::path persist_augmented(
    const std::vector<AugmentedSample>& samples, const RPRConfig& cfg,
    const std::filesystem::path& out_dir, const std::string& split);

}  // namespace ppl
