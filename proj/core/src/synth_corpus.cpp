#include "ppl/synth_corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "ppl/image_io.hpp"
#include "ppl/parallel.hpp"

namespace ppl {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Stream tags for seed derivation.
constexpr std::uint64_t kStreamRecord = 0x7265636f72ull;    // corpus records
constexpr std::uint64_t kStreamDominant = 0x646f6d696eull;  // dominant region

// FNV-1a; std::hash is not pinned across standard libraries.
std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

int reflect_index(int i, int n) {
  while (i < 0 || i >= n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - 1 - i;
  }
  return i;
}

}  // namespace

std::string to_string(FingerprintKind kind) {
  switch (kind) {
    case FingerprintKind::kCheckerboardModulation:
      return "checkerboard-modulation";
    case FingerprintKind::kSpectralNotch:
      return "spectral-notch";
    case FingerprintKind::kLevelQuantization:
      return "level-quantization";
  }
  throw InvalidArgument("unknown FingerprintKind");
}

FingerprintKind fingerprint_kind_from_string(const std::string& s) {
  if (s == "checkerboard-modulation")
    return FingerprintKind::kCheckerboardModulation;
  if (s == "spectral-notch") return FingerprintKind::kSpectralNotch;
  if (s == "level-quantization") return FingerprintKind::kLevelQuantization;
  throw InvalidArgument("unknown fingerprint kind: " + s);
}

std::string to_string(CorruptionKind kind) {
  switch (kind) {
    case CorruptionKind::kGaussianBlur:
      return "gaussian_blur";
    case CorruptionKind::kResize:
      return "resize";
    case CorruptionKind::kJpeg:
      return "jpeg";
  }
  throw InvalidArgument("unknown CorruptionKind");
}

CorruptionKind corruption_kind_from_string(const std::string& s) {
  if (s == "gaussian_blur" || s == "blur") return CorruptionKind::kGaussianBlur;
  if (s == "resize") return CorruptionKind::kResize;
  if (s == "jpeg") return CorruptionKind::kJpeg;
  throw InvalidArgument("unknown corruption kind: " + s);
}

Image gaussian_blur(const Image& image, double sigma) {
  if (sigma < 0.0) throw InvalidArgument("gaussian_blur: sigma must be >= 0");
  if (sigma == 0.0) return image;

  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> w(static_cast<std::size_t>(2 * radius + 1));
  double wsum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double v = std::exp(-0.5 * (i * i) / (sigma * sigma));
    w[static_cast<std::size_t>(i + radius)] = v;
    wsum += v;
  }
  for (double& v : w) v /= wsum;

  const int h = image.height, wd = image.width, ch = image.channels;
  Image tmp(h, wd, ch);
  // Horizontal pass.
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < wd; ++x)
      for (int c = 0; c < ch; ++c) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i)
          acc += w[static_cast<std::size_t>(i + radius)] *
                 image.at(y, reflect_index(x + i, wd), c);
        tmp.at(y, x, c) = static_cast<float>(acc);
      }
  // Vertical pass.
  Image out(h, wd, ch);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < wd; ++x)
      for (int c = 0; c < ch; ++c) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i)
          acc += w[static_cast<std::size_t>(i + radius)] *
                 tmp.at(reflect_index(y + i, h), x, c);
        out.at(y, x, c) = static_cast<float>(acc);
      }
  return out;
}

Image resize_bilinear(const Image& image, int out_h, int out_w) {
  if (out_h <= 0 || out_w <= 0)
    throw InvalidArgument("resize_bilinear: output dims must be positive");
  if (out_h == image.height && out_w == image.width) return image;

  Image out(out_h, out_w, image.channels);
  const double sy = static_cast<double>(image.height) / out_h;
  const double sx = static_cast<double>(image.width) / out_w;
  for (int y = 0; y < out_h; ++y) {
    double fy = (y + 0.5) * sy - 0.5;
    fy = std::clamp(fy, 0.0, static_cast<double>(image.height - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, image.height - 1);
    const double ty = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      double fx = (x + 0.5) * sx - 0.5;
      fx = std::clamp(fx, 0.0, static_cast<double>(image.width - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, image.width - 1);
      const double tx = fx - x0;
      for (int c = 0; c < image.channels; ++c) {
        const double top = (1.0 - tx) * image.at(y0, x0, c) +
                           tx * image.at(y0, x1, c);
        const double bot = (1.0 - tx) * image.at(y1, x0, c) +
                           tx * image.at(y1, x1, c);
        out.at(y, x, c) = static_cast<float>((1.0 - ty) * top + ty * bot);
      }
    }
  }
  return out;
}

Image gen_real(std::uint64_t seed, int h, int w, int channels) {
  if (h <= 0 || w <= 0 || channels <= 0)
    throw InvalidArgument("gen_real: dimensions must be positive");
  Rng rng(derive_seed(seed, 0x67656e72ull));

  // Low-pass random luminance field, normalized to [-1, 1].
  Image field(h, w, 1);
  for (auto& v : field.data) v = static_cast<float>(rng.normal());
  const double sigma = 4.0 + 6.0 * rng.unit();
  field = gaussian_blur(field, sigma);
  float max_abs = 1e-6f;
  for (float v : field.data) max_abs = std::max(max_abs, std::abs(v));
  for (auto& v : field.data) v /= max_abs;

  // Per-channel tint keeps the background inside [0.2, 0.8].
  Image img(h, w, channels);
  std::vector<double> tint(static_cast<std::size_t>(channels));
  for (auto& t : tint) t = 0.75 + 0.25 * rng.unit();
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < channels; ++c)
        img.at(y, x, c) = static_cast<float>(
            0.5 + 0.3 * field.at(y, x, 0) * tint[static_cast<std::size_t>(c)]);

  // 1-3 anti-aliased shapes with colors in [0.15, 0.85]; compositing a
  // convex blend keeps every pixel inside [0.15, 0.85].
  auto draw_shape = [&](bool disk, double cx, double cy, double r1, double r2,
                        double alpha, const std::vector<double>& color) {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double d;  // signed distance to the shape edge, >0 inside
        if (disk) {
          const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
          d = r1 - std::sqrt(dx * dx + dy * dy);
        } else {
          const double dx = r1 - std::abs(x + 0.5 - cx);
          const double dy = r2 - std::abs(y + 0.5 - cy);
          d = std::min(dx, dy);
        }
        const double cov = std::clamp(d + 0.5, 0.0, 1.0) * alpha;
        if (cov <= 0.0) continue;
        for (int c = 0; c < channels; ++c) {
          const double base = img.at(y, x, c);
          img.at(y, x, c) = static_cast<float>(
              (1.0 - cov) * base + cov * color[static_cast<std::size_t>(c)]);
        }
      }
  };

  const int n_shapes = 1 + static_cast<int>(rng.below(3));
  for (int s = 0; s < n_shapes; ++s) {
    const bool disk = rng.below(2) == 0;
    const double cx = rng.unit() * w;
    const double cy = rng.unit() * h;
    const double r1 = (0.08 + 0.22 * rng.unit()) * std::min(h, w);
    const double r2 = disk ? r1 : (0.08 + 0.22 * rng.unit()) * std::min(h, w);
    const double alpha = 0.5 + 0.5 * rng.unit();
    std::vector<double> color(static_cast<std::size_t>(channels));
    for (auto& c : color) c = 0.15 + 0.7 * rng.unit();
    draw_shape(disk, cx, cy, r1, r2, alpha, color);
  }

  // Half the images get one deep shadow, so flat near-black regions are
  // part of the real-image distribution.
  if (rng.unit() < 0.5) {
    const double cx = rng.unit() * w;
    const double cy = rng.unit() * h;
    const double r = (0.12 + 0.18 * rng.unit()) * std::min(h, w);
    const double alpha = 0.85 + 0.10 * rng.unit();
    const std::vector<double> shadow(static_cast<std::size_t>(channels),
                                     0.01 + 0.04 * rng.unit());
    draw_shape(true, cx, cy, r, r, alpha, shadow);
  }

  // Sensor-noise floor.
  for (auto& v : img.data)
    v = clamp01(static_cast<float>(v + 0.01 * rng.normal()));
  return img;
}

Image reconstruct(const Image& image, const ArtifactProfile& profile,
                  double strength) {
  if (!(strength > 0.0 && strength <= 1.0))
    throw InvalidArgument("reconstruct: strength must be in (0,1]");
  profile.validate();

  Image out(image.height, image.width, image.channels);
  const double depth = profile.depth;

  switch (profile.kind) {
    case FingerprintKind::kCheckerboardModulation: {
      const double amp = 0.25 * strength * depth;
      for (int y = 0; y < image.height; ++y)
        for (int x = 0; x < image.width; ++x) {
          const double sign = ((x + y) & 1) ? -1.0 : 1.0;
          for (int c = 0; c < image.channels; ++c)
            out.at(y, x, c) = clamp01(static_cast<float>(
                image.at(y, x, c) + amp * sign));
        }
      break;
    }
    case FingerprintKind::kSpectralNotch: {
      const double amp = 0.25 * strength * depth;
      for (int y = 0; y < image.height; ++y)
        for (int x = 0; x < image.width; ++x)
          for (int c = 0; c < image.channels; ++c) {
            const double arg = 2.0 * kPi * (profile.freq_x * x +
                                            profile.freq_y * y) +
                               profile.phase + 2.1 * c;
            out.at(y, x, c) = clamp01(static_cast<float>(
                image.at(y, x, c) + amp * std::sin(arg)));
          }
      break;
    }
    case FingerprintKind::kLevelQuantization: {
      // Pull each value toward the nearest of `levels` equispaced levels.
      // gain is capped so the per-pixel bound 0.25*strength always holds.
      const double steps = profile.levels - 1;
      const double gain = std::min(4.0, 0.5 * steps);
      for (std::size_t i = 0; i < image.data.size(); ++i) {
        const double v = image.data[i];
        const double q = std::round(v * steps) / steps;
        out.data[i] = clamp01(static_cast<float>(
            v + strength * depth * gain * (q - v)));
      }
      break;
    }
  }
  return out;
}

Image inject_dominant_artifact(const Image& image, const PatchGrid& grid,
                               const std::vector<PatchIndex>& region,
                               double amplitude, Rng& rng) {
  if (region.empty())
    throw InvalidArgument("inject_dominant_artifact: empty region");
  if (image.height != grid.image_h || image.width != grid.image_w)
    throw InvalidArgument("inject_dominant_artifact: image/grid mismatch");
  if (amplitude < 0.0 || amplitude > 1.0)
    throw InvalidArgument("inject_dominant_artifact: amplitude in [0,1]");
  for (const PatchIndex idx : region)
    if (!grid.contains(idx))
      throw InvalidArgument("inject_dominant_artifact: index out of grid");

  const bool vertical_stripes = rng.below(2) == 0;
  const int parity = static_cast<int>(rng.below(2));
  if (amplitude == 0.0) return image;

  Image out = image;
  for (const PatchIndex idx : region) {
    const PixelRect r = patch_pixel_bounds(grid, idx);
    for (int y = r.top; y < r.top + r.height; ++y)
      for (int x = r.left; x < r.left + r.width; ++x) {
        const int stripe = ((vertical_stripes ? x : y) + parity) & 1;
        const double target = stripe ? 1.0 : 0.9;
        for (int c = 0; c < image.channels; ++c)
          out.at(y, x, c) = static_cast<float>(
              (1.0 - amplitude) * image.at(y, x, c) + amplitude * target);
      }
  }
  return out;
}

Image corrupt(const Image& image, CorruptionKind kind, double param) {
  switch (kind) {
    case CorruptionKind::kGaussianBlur:
      if (param < 0.0 || param > 3.0)
        throw InvalidArgument("corrupt: blur sigma must be in [0,3]");
      return gaussian_blur(image, param);
    case CorruptionKind::kResize: {
      if (param < 0.5 || param > 1.5)
        throw InvalidArgument("corrupt: resize factor must be in [0.5,1.5]");
      const int sh = std::max(
          1, static_cast<int>(std::floor(param * image.height)));
      const int sw = std::max(
          1, static_cast<int>(std::floor(param * image.width)));
      if (sh == image.height && sw == image.width) return image;
      const Image small = resize_bilinear(image, sh, sw);
      return resize_bilinear(small, image.height, image.width);
    }
    case CorruptionKind::kJpeg: {
      const int q = static_cast<int>(std::lround(param));
      if (q < 60 || q > 100)
        throw InvalidArgument("corrupt: jpeg quality must be in {60..100}");
      return jpeg_roundtrip(image, q);
    }
  }
  throw InvalidArgument("corrupt: unknown kind");
}

// ---------------------------------------------------------------------
// Corpus building
// ---------------------------------------------------------------------

void CorpusConfig::validate() const {
  if (height <= 0 || width <= 0 || channels <= 0 || patch_size <= 0)
    throw InvalidArgument("CorpusConfig: dimensions must be positive");
  if (height % patch_size != 0 || width % patch_size != 0)
    throw InvalidArgument("CorpusConfig: patch_size must divide image dims");
  if (splits.empty()) throw InvalidArgument("CorpusConfig: no splits");
  std::vector<std::string> names;
  for (const auto& p : profiles) {
    p.validate();
    if (std::find(names.begin(), names.end(), p.name) != names.end())
      throw InvalidArgument("CorpusConfig: duplicate profile " + p.name);
    names.push_back(p.name);
    if (p.dominant_enabled) {
      const PatchGrid g = grid();
      if (p.dominant.region_rows > g.rows() ||
          p.dominant.region_cols > g.cols())
        throw InvalidArgument("CorpusConfig: dominant region exceeds grid");
    }
  }
  for (const auto& [split, spec] : splits) {
    if (spec.real_count < 0)
      throw InvalidArgument("CorpusConfig: negative real count in " + split);
    for (const auto& f : spec.fakes) {
      if (f.count < 0)
        throw InvalidArgument("CorpusConfig: negative fake count in " + split);
      profile_by_name(f.profile);  // throws if unknown
    }
  }
}

const ArtifactProfile& CorpusConfig::profile_by_name(
    const std::string& name) const {
  for (const auto& p : profiles)
    if (p.name == name) return p;
  throw InvalidArgument("CorpusConfig: unknown profile " + name);
}

// Reconstruction strength used for fully synthetic corpus images.
static constexpr double kCorpusStrength = 0.25;

namespace {

struct PlannedRecord {
  std::string split;
  std::string image_path;  // relative to out_dir
  int image_label = 0;
  const ArtifactProfile* profile = nullptr;  // null for real images
  std::uint64_t seed = 0;
};

std::vector<PatchIndex> dominant_region(const ArtifactProfile& profile,
                                        const PatchGrid& grid, Rng& rng) {
  const DominantParams& d = profile.dominant;
  int row = d.row, col = d.col;
  if (d.placement == DominantPlacement::kRandom) {
    row = static_cast<int>(rng.below(
        static_cast<std::uint64_t>(grid.rows() - d.region_rows + 1)));
    col = static_cast<int>(rng.below(
        static_cast<std::uint64_t>(grid.cols() - d.region_cols + 1)));
  }
  if (row < 0 || col < 0 || row + d.region_rows > grid.rows() ||
      col + d.region_cols > grid.cols())
    throw InvalidArgument("dominant region does not fit the grid");
  std::vector<PatchIndex> region;
  for (int r = 0; r < d.region_rows; ++r)
    for (int c = 0; c < d.region_cols; ++c)
      region.push_back({row + r, col + c});
  return region;
}

}  // namespace

std::map<std::string, Manifest> build_corpus(
    const CorpusConfig& config, const std::filesystem::path& out_dir) {
  config.validate();
  const PatchGrid grid = config.grid();
  const int K = grid.patch_count();

  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("build_corpus: cannot create " + out_dir.string());

  // Plan all records up front so generation can run in parallel while the
  // manifests keep a fixed order.
  std::vector<PlannedRecord> plan;
  for (const auto& [split, spec] : config.splits) {
    const auto img_dir = out_dir / "images" / split;
    std::filesystem::create_directories(img_dir, ec);
    if (ec) throw IoError("build_corpus: cannot create " + img_dir.string());
    const std::uint64_t split_tag = fnv1a(split);
    int index = 0;
    auto rel_path = [&](int i) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%05d.png", i);
      return (std::filesystem::path("images") / split / buf)
          .generic_string();
    };
    for (int i = 0; i < spec.real_count; ++i, ++index) {
      plan.push_back({split, rel_path(index), kLabelReal, nullptr,
                      derive_seed(config.master_seed, kStreamRecord,
                                  split_tag + static_cast<std::uint64_t>(index))});
    }
    for (const auto& f : spec.fakes) {
      const ArtifactProfile& prof = config.profile_by_name(f.profile);
      for (int i = 0; i < f.count; ++i, ++index) {
        plan.push_back({split, rel_path(index), kLabelSynthetic, &prof,
                        derive_seed(config.master_seed, kStreamRecord,
                                    split_tag +
                                        static_cast<std::uint64_t>(index))});
      }
    }
  }

  parallel_for(plan.size(), [&](std::size_t i) {
    const PlannedRecord& pr = plan[i];
    Image img = gen_real(pr.seed, config.height, config.width,
                         config.channels);
    if (pr.profile != nullptr) {
      img = reconstruct(img, *pr.profile, kCorpusStrength);
      if (pr.profile->dominant_enabled) {
        Rng rng(derive_seed(pr.seed, kStreamDominant));
        const auto region = dominant_region(*pr.profile, grid, rng);
        img = inject_dominant_artifact(img, grid, region,
                                       pr.profile->dominant.amplitude, rng);
      }
    }
    write_png(out_dir / pr.image_path, img);
  });

  // Assemble manifests in plan order.
  std::map<std::string, Manifest> result;
  CorpusInfo info;
  info.height = config.height;
  info.width = config.width;
  info.channels = config.channels;
  info.patch_size = config.patch_size;
  info.master_seed = config.master_seed;
  info.profiles = config.profiles;
  for (const auto& [split, spec] : config.splits) {
    int n = spec.real_count;
    for (const auto& f : spec.fakes) n += f.count;
    info.split_sizes.emplace_back(split, n);
  }

  for (const PlannedRecord& pr : plan) {
    Manifest& man = result[pr.split];
    man.split = pr.split;
    man.base_dir = out_dir;
    SampleRecord rec;
    rec.image_path = pr.image_path;
    rec.image_label = pr.image_label;
    rec.seed = pr.seed;
    if (pr.profile != nullptr) {
      rec.generator_tag = pr.profile->name;
      rec.patch_labels =
          std::vector<std::int8_t>(static_cast<std::size_t>(K), 1);
    } else {
      rec.generator_tag = "real";
      rec.patch_labels = std::nullopt;
    }
    man.records.push_back(std::move(rec));
  }

  write_corpus_info(out_dir / "corpus.json", info);
  for (auto& [split, man] : result) {
    man.info = info;
    write_manifest_records(out_dir / ("manifest." + split + ".jsonl"),
                           man.records);
  }
  return result;
}

}  // namespace ppl
