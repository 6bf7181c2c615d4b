#pragma once

#include <cstdint>
#include <vector>

#include "ppl/common.hpp"
#include "ppl/image.hpp"
#include "ppl/rng.hpp"

namespace ppl {

struct PatchIndex {
  int row = 0;
  int col = 0;
  friend bool operator==(const PatchIndex&, const PatchIndex&) = default;
};

// Non-overlapping square patch grid over an image. The patch size must
// divide both dimensions exactly; patches tile the image.
struct PatchGrid {
  int image_h = 0;
  int image_w = 0;
  int patch_size = 0;

  PatchGrid() = default;
  PatchGrid(int h, int w, int p) : image_h(h), image_w(w), patch_size(p) {
    if (h <= 0 || w <= 0 || p <= 0)
      throw InvalidArgument("PatchGrid: dimensions must be positive");
    if (h % p != 0 || w % p != 0)
      throw InvalidArgument("PatchGrid: patch_size must divide image dims");
  }

  int rows() const { return image_h / patch_size; }
  int cols() const { return image_w / patch_size; }
  int patch_count() const { return rows() * cols(); }

  bool contains(PatchIndex idx) const {
    return idx.row >= 0 && idx.row < rows() && idx.col >= 0 &&
           idx.col < cols();
  }

  // Row-major flat index; matches the detector's patch-token order.
  int flat(PatchIndex idx) const { return idx.row * cols() + idx.col; }
  PatchIndex from_flat(int k) const { return {k / cols(), k % cols()}; }

  friend bool operator==(const PatchGrid&, const PatchGrid&) = default;
};

struct PixelRect {
  int top = 0;
  int left = 0;
  int height = 0;
  int width = 0;
  friend bool operator==(const PixelRect&, const PixelRect&) = default;
};

// Per-patch binary ground truth (0 real, 1 synthetic) in row-major patch
// order; kPatchExcluded marks tokens outside the contrastive pool.
struct PatchLabelMap {
  PatchGrid grid;
  std::vector<std::int8_t> labels;

  PatchLabelMap() = default;
  explicit PatchLabelMap(const PatchGrid& g, std::int8_t fill = 0)
      : grid(g), labels(static_cast<std::size_t>(g.patch_count()), fill) {}

  std::int8_t& at(PatchIndex idx) {
    return labels[static_cast<std::size_t>(grid.flat(idx))];
  }
  std::int8_t at(PatchIndex idx) const {
    return labels[static_cast<std::size_t>(grid.flat(idx))];
  }
  int count(std::int8_t value) const;
};

PixelRect patch_pixel_bounds(const PatchGrid& grid, PatchIndex idx);

// Copy of `image` with the patch zero-filled across all channels.
Image mask_patch(const Image& image, const PatchGrid& grid, PatchIndex idx);

// Copy of `dst` where every selected patch is taken bit-exactly from `src`.
Image replace_patches(const Image& dst, const Image& src,
                      const PatchGrid& grid,
                      const std::vector<PatchIndex>& selected);

// `count` distinct indices drawn uniformly without replacement
// (Fisher-Yates prefix); result sorted by flat index.
std::vector<PatchIndex> select_random_patches(const PatchGrid& grid, int count,
                                              Rng& rng);

}  // namespace ppl
