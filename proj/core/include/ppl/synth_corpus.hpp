#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ppl/artifact_profile.hpp"
#include "ppl/image.hpp"
#include "ppl/manifest.hpp"
#include "ppl/patch_grid.hpp"
#include "ppl/rng.hpp"

namespace ppl {

// Procedural stand-in for a natural photo: a low-pass random field
// composited with a few anti-aliased shapes. Values stay in [0.15, 0.85]
// so later fingerprint injection never saturates. Deterministic per seed.
Image gen_real(std::uint64_t seed, int h, int w, int channels = 3);

// Re-renders the image with the profile's global fingerprint imprinted at
// every pixel, scaled by `strength` in (0, 1]. Per-pixel deviation is
// bounded by 0.25 * strength; deterministic in (image, profile, strength).
Image reconstruct(const Image& image, const ArtifactProfile& profile,
                  double strength);

// Blends a saturated high-frequency grating over the given patches;
// amplitude 1 replaces the pixels with the {0.9, 1.0} stripe pattern,
// amplitude 0 is the identity. rng picks stripe orientation and parity.
Image inject_dominant_artifact(const Image& image, const PatchGrid& grid,
                               const std::vector<PatchIndex>& region,
                               double amplitude, Rng& rng);

enum class CorruptionKind { kGaussianBlur, kResize, kJpeg };

CorruptionKind corruption_kind_from_string(const std::string& s);
std::string to_string(CorruptionKind kind);

// Robustness-sweep transforms. blur: separable Gaussian, reflect padding,
// sigma in [0,3]. resize: bilinear to floor(S*dim) and back, S in
// [0.5,1.5]. jpeg: encode/decode at quality Q in {60..100}; throws
// InvalidArgument when no codec is built in.
Image corrupt(const Image& image, CorruptionKind kind, double param);

// Shared helper (also used by gen_real); sigma 0 returns a copy.
Image gaussian_blur(const Image& image, double sigma);
Image resize_bilinear(const Image& image, int out_h, int out_w);

// ---------------------------------------------------------------------
// Corpus building
// ---------------------------------------------------------------------

struct FakeSpec {
  std::string profile;  // name in the profile registry
  int count = 0;
};

struct SplitSpec {
  int real_count = 0;
  std::vector<FakeSpec> fakes;
};

struct CorpusConfig {
  int height = 112;
  int width = 112;
  int channels = 3;
  int patch_size = 14;
  std::uint64_t master_seed = 0;
  std::vector<ArtifactProfile> profiles;
  // Split name -> contents. "train" and "test" are conventional; extra
  // evaluation splits are allowed.
  std::map<std::string, SplitSpec> splits;

  void validate() const;
  const ArtifactProfile& profile_by_name(const std::string& name) const;
  PatchGrid grid() const { return PatchGrid(height, width, patch_size); }
};

// Writes images/<split>/*.png, one manifest.<split>.jsonl per split and a
// corpus.json sidecar into out_dir. Fully deterministic per master seed.
// Returns the manifest of each split keyed by split name.
std::map<std::string, Manifest> build_corpus(
    const CorpusConfig& config, const std::filesystem::path& out_dir);

}  // namespace ppl
