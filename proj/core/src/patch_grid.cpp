#include "ppl/patch_grid.hpp"

#include <algorithm>
#include <cstring>
#include <numeric>

namespace ppl {

int PatchLabelMap::count(std::int8_t value) const {
  return static_cast<int>(
      std::count(labels.begin(), labels.end(), value));
}

PixelRect patch_pixel_bounds(const PatchGrid& grid, PatchIndex idx) {
  if (!grid.contains(idx))
    throw InvalidArgument("patch_pixel_bounds: index out of range");
  const int p = grid.patch_size;
  return {idx.row * p, idx.col * p, p, p};
}

static void check_image_matches(const Image& image, const PatchGrid& grid,
                                const char* op) {
  if (image.height != grid.image_h || image.width != grid.image_w)
    throw InvalidArgument(std::string(op) + ": image does not match grid");
}

Image mask_patch(const Image& image, const PatchGrid& grid, PatchIndex idx) {
  check_image_matches(image, grid, "mask_patch");
  const PixelRect r = patch_pixel_bounds(grid, idx);
  Image out = image;
  for (int y = r.top; y < r.top + r.height; ++y) {
    float* row = &out.at(y, r.left, 0);
    std::memset(row, 0, sizeof(float) * static_cast<std::size_t>(r.width) *
                            out.channels);
  }
  return out;
}

Image replace_patches(const Image& dst, const Image& src,
                      const PatchGrid& grid,
                      const std::vector<PatchIndex>& selected) {
  if (!dst.same_shape(src))
    throw InvalidArgument("replace_patches: dst/src shape mismatch");
  check_image_matches(dst, grid, "replace_patches");
  Image out = dst;
  for (const PatchIndex idx : selected) {
    const PixelRect r = patch_pixel_bounds(grid, idx);
    for (int y = r.top; y < r.top + r.height; ++y) {
      const float* from = &src.at(y, r.left, 0);
      float* to = &out.at(y, r.left, 0);
      std::memcpy(to, from, sizeof(float) *
                                static_cast<std::size_t>(r.width) *
                                out.channels);
    }
  }
  return out;
}

std::vector<PatchIndex> select_random_patches(const PatchGrid& grid, int count,
                                              Rng& rng) {
  const int k = grid.patch_count();
  if (count < 0 || count > k)
    throw InvalidArgument("select_random_patches: count out of range");
  std::vector<int> flat(static_cast<std::size_t>(k));
  std::iota(flat.begin(), flat.end(), 0);
  for (int i = 0; i < count; ++i) {
    const int j =
        i + static_cast<int>(rng.below(static_cast<std::uint64_t>(k - i)));
    std::swap(flat[static_cast<std::size_t>(i)],
              flat[static_cast<std::size_t>(j)]);
  }
  flat.resize(static_cast<std::size_t>(count));
  std::sort(flat.begin(), flat.end());
  std::vector<PatchIndex> out;
  out.reserve(flat.size());
  for (int f : flat) out.push_back(grid.from_flat(f));
  return out;
}

}  // namespace ppl
