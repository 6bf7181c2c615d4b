#pragma once

#include <string>

#include "ppl/common.hpp"

namespace ppl {

enum class FingerprintKind {
  kCheckerboardModulation,  // pixel-parity additive pattern
  kSpectralNotch,           // near-Nyquist sinusoidal grating
  kLevelQuantization,       // pull intensities toward a coarse level set
};

std::string to_string(FingerprintKind kind);
FingerprintKind fingerprint_kind_from_string(const std::string& s);

// Placement of the dominant (shortcut) artifact region.
enum class DominantPlacement { kFixed, kRandom };

struct DominantParams {
  double amplitude = 1.0;  // 0 disables the pattern, 1 fully saturates it
  int region_rows = 1;     // region spans region_rows x region_cols patches
  int region_cols = 1;
  DominantPlacement placement = DominantPlacement::kFixed;
  int row = 0;  // anchor patch for fixed placement
  int col = 0;
};

// One synthetic-generator identity: a global fingerprint imprinted by the
// reconstruction backend, plus an optional strong localized artifact.
struct ArtifactProfile {
  std::string name;
  FingerprintKind kind = FingerprintKind::kCheckerboardModulation;
  double depth = 1.0;  // fingerprint contrast scale, (0, 1]

  // Kind-specific scalars.
  double freq_x = 0.45;  // spectral-notch: cycles/pixel
  double freq_y = 0.38;
  double phase = 0.7;
  int levels = 12;  // level-quantization: number of levels, >= 2

  bool dominant_enabled = false;
  DominantParams dominant;

  void validate() const {
    if (name.empty()) throw InvalidArgument("ArtifactProfile: empty name");
    if (!(depth > 0.0 && depth <= 1.0))
      throw InvalidArgument("ArtifactProfile: depth must be in (0,1]");
    if (levels < 2)
      throw InvalidArgument("ArtifactProfile: levels must be >= 2");
    if (dominant_enabled) {
      const int patches = dominant.region_rows * dominant.region_cols;
      if (patches < 1 || patches > 4)
        throw InvalidArgument(
            "ArtifactProfile: dominant region must span 1-4 patches");
      if (dominant.amplitude < 0.0 || dominant.amplitude > 1.0)
        throw InvalidArgument(
            "ArtifactProfile: dominant amplitude must be in [0,1]");
    }
  }
};

}  // namespace ppl
