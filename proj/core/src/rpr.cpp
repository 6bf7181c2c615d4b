#include "ppl/rpr.hpp"

#include <cmath>
#include <cstdio>

#include "ppl/image_io.hpp"
#include "ppl/manifest.hpp"
#include "ppl/synth_corpus.hpp"

namespace ppl {

namespace {
constexpr std::uint64_t kStreamApply = 0x6170706c79ull;
}

std::string to_string(RPRVariant v) {
  switch (v) {
    case RPRVariant::kRandom:
      return "random";
    case RPRVariant::kFixedHalfUpper:
      return "fixed_half_upper";
    case RPRVariant::kFixedHalfLower:
      return "fixed_half_lower";
    case RPRVariant::kFixedHalfLeft:
      return "fixed_half_left";
    case RPRVariant::kFixedHalfRight:
      return "fixed_half_right";
    case RPRVariant::kDropout:
      return "dropout";
  }
  throw InvalidArgument("unknown RPRVariant");
}

RPRVariant rpr_variant_from_string(const std::string& s) {
  if (s == "random") return RPRVariant::kRandom;
  if (s == "fixed_half_upper") return RPRVariant::kFixedHalfUpper;
  if (s == "fixed_half_lower") return RPRVariant::kFixedHalfLower;
  if (s == "fixed_half_left") return RPRVariant::kFixedHalfLeft;
  if (s == "fixed_half_right") return RPRVariant::kFixedHalfRight;
  if (s == "dropout") return RPRVariant::kDropout;
  throw InvalidArgument("unknown RPR variant: " + s);
}

void RPRConfig::validate() const {
  if (apply_prob < 0.0 || apply_prob > 1.0)
    throw InvalidArgument("RPRConfig: apply_prob must be in [0,1]");
  if (ratio < 0.0 || ratio > 1.0)
    throw InvalidArgument("RPRConfig: ratio must be in [0,1]");
  if (dropout_rate < 0.0 || dropout_rate > 1.0)
    throw InvalidArgument("RPRConfig: dropout_rate must be in [0,1]");
  if (patch_size <= 0) throw InvalidArgument("RPRConfig: bad patch_size");
  if (!(strength > 0.0 && strength <= 1.0))
    throw InvalidArgument("RPRConfig: strength must be in (0,1]");
  profile.validate();
}

int rpr_patch_count(double ratio, int patch_count) {
  return static_cast<int>(std::floor(ratio * patch_count + 0.5));
}

RPRResult rpr_transform_with_selection(
    const Image& real_image, const RPRConfig& cfg,
    const std::vector<PatchIndex>& selected) {
  cfg.validate();
  const PatchGrid grid(real_image.height, real_image.width, cfg.patch_size);
  const Image recon = reconstruct(real_image, cfg.profile, cfg.strength);

  RPRResult res;
  res.image = replace_patches(real_image, recon, grid, selected);
  res.patch_labels = PatchLabelMap(grid, 0);
  for (const PatchIndex idx : selected) res.patch_labels.at(idx) = 1;
  return res;
}

RPRResult rpr_transform(const Image& real_image, const RPRConfig& cfg,
                        Rng& rng) {
  cfg.validate();
  const PatchGrid grid(real_image.height, real_image.width, cfg.patch_size);
  const int count = rpr_patch_count(cfg.ratio, grid.patch_count());
  const auto selected = select_random_patches(grid, count, rng);
  return rpr_transform_with_selection(real_image, cfg, selected);
}

RPRResult fixed_position_transform(const Image& real_image,
                                   const RPRConfig& cfg) {
  cfg.validate();
  const PatchGrid grid(real_image.height, real_image.width, cfg.patch_size);
  const int rows = grid.rows(), cols = grid.cols();

  std::vector<PatchIndex> selected;
  auto take = [&](int r0, int r1, int c0, int c1) {
    for (int r = r0; r < r1; ++r)
      for (int c = c0; c < c1; ++c) selected.push_back({r, c});
  };
  switch (cfg.variant) {
    case RPRVariant::kFixedHalfUpper:
    case RPRVariant::kFixedHalfLower:
      if (rows % 2 != 0)
        throw InvalidArgument(
            "fixed_position_transform: odd grid rows for a row half");
      if (cfg.variant == RPRVariant::kFixedHalfUpper)
        take(0, rows / 2, 0, cols);
      else
        take(rows / 2, rows, 0, cols);
      break;
    case RPRVariant::kFixedHalfLeft:
    case RPRVariant::kFixedHalfRight:
      if (cols % 2 != 0)
        throw InvalidArgument(
            "fixed_position_transform: odd grid cols for a column half");
      if (cfg.variant == RPRVariant::kFixedHalfLeft)
        take(0, rows, 0, cols / 2);
      else
        take(0, rows, cols / 2, cols);
      break;
    default:
      throw InvalidArgument(
          "fixed_position_transform: variant must be a fixed half");
  }
  return rpr_transform_with_selection(real_image, cfg, selected);
}

RPRResult patch_dropout_transform(const Image& fake_image,
                                  const RPRConfig& cfg, Rng& rng) {
  cfg.validate();
  if (cfg.variant != RPRVariant::kDropout)
    throw InvalidArgument("patch_dropout_transform: variant must be dropout");
  const PatchGrid grid(fake_image.height, fake_image.width, cfg.patch_size);
  const int count = rpr_patch_count(cfg.dropout_rate, grid.patch_count());
  const auto dropped = select_random_patches(grid, count, rng);

  RPRResult res;
  res.image = fake_image;
  res.patch_labels = PatchLabelMap(grid, 1);
  for (const PatchIndex idx : dropped) {
    res.image = mask_patch(res.image, grid, idx);
    res.patch_labels.at(idx) = static_cast<std::int8_t>(kPatchExcluded);
  }
  return res;
}

std::vector<AugmentedSample> apply_batch(
    const std::vector<BatchSample>& samples,
    const std::vector<const Image*>& real_pool, const RPRConfig& cfg,
    std::uint64_t seed) {
  cfg.validate();
  std::vector<AugmentedSample> out(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const BatchSample& s = samples[i];
    if (s.image == nullptr) throw InvalidArgument("apply_batch: null image");
    const PatchGrid grid(s.image->height, s.image->width, cfg.patch_size);
    AugmentedSample& a = out[i];
    a.image_label = s.image_label;

    Rng rng(derive_seed(seed, kStreamApply, i));
    if (s.image_label == kLabelSynthetic && rng.bernoulli(cfg.apply_prob)) {
      if (cfg.variant == RPRVariant::kDropout) {
        RPRResult r = patch_dropout_transform(*s.image, cfg, rng);
        a.image = std::move(r.image);
        a.patch_labels = std::move(r.patch_labels);
        a.replaced = true;
      } else {
        if (real_pool.empty())
          throw InvalidArgument("apply_batch: empty real pool");
        const Image& donor = *real_pool[i % real_pool.size()];
        RPRResult r = cfg.variant == RPRVariant::kRandom
                          ? rpr_transform(donor, cfg, rng)
                          : fixed_position_transform(donor, cfg);
        a.image = std::move(r.image);
        a.patch_labels = std::move(r.patch_labels);
        a.replaced = true;
        // Hybrids substitute for fake training images and keep label 1.
        a.image_label = kLabelSynthetic;
      }
    } else {
      a.image = *s.image;
      a.patch_labels = PatchLabelMap(
          grid, s.image_label == kLabelSynthetic ? std::int8_t{1}
                                                 : std::int8_t{0});
    }
  }
  return out;
}

std::filesystem::path persist_augmented(
    const std::vector<AugmentedSample>& samples, const RPRConfig& cfg,
    const std::filesystem::path& out_dir, const std::string& split) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "images" / split, ec);
  if (ec) throw IoError("persist_augmented: cannot create " + out_dir.string());

  char ratio_buf[32];
  std::snprintf(ratio_buf, sizeof(ratio_buf), "%g",
                cfg.variant == RPRVariant::kDropout ? cfg.dropout_rate
                                                    : cfg.ratio);
  const std::string tag =
      "rpr:" + to_string(cfg.variant) + ":" + ratio_buf;

  std::vector<SampleRecord> records;
  CorpusInfo info;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const AugmentedSample& s = samples[i];
    char name[32];
    std::snprintf(name, sizeof(name), "%05zu.png", i);
    const auto rel =
        (std::filesystem::path("images") / split / name).generic_string();
    write_png(out_dir / rel, s.image);

    SampleRecord rec;
    rec.image_path = rel;
    rec.image_label = s.image_label;
    rec.patch_labels = s.patch_labels.labels;
    rec.generator_tag = s.replaced ? tag : "passthrough";
    records.push_back(std::move(rec));

    info.height = s.image.height;
    info.width = s.image.width;
    info.channels = s.image.channels;
    info.patch_size = cfg.patch_size;
  }
  info.split_sizes.emplace_back(split, static_cast<int>(records.size()));

  write_corpus_info(out_dir / "corpus.json", info);
  const auto manifest_path = out_dir / ("manifest." + split + ".jsonl");
  write_manifest_records(manifest_path, records);
  return manifest_path;
}

}  // namespace ppl
