#include "ppl/attribution.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "ppl/parallel.hpp"
#include "ppl/rng.hpp"

namespace ppl {

using nlohmann::json;

namespace {
constexpr std::uint64_t kStreamTile = 0x74696c65ull;
}

CDEMap cde_map(const Predictor& model, const Image& image,
               const PatchGrid& grid) {
  if (image.height != grid.image_h || image.width != grid.image_w)
    throw InvalidArgument("cde_map: image does not match grid");
  const int K = grid.patch_count();

  const double delta_full = model.predict(image).delta;
  CDEMap map;
  map.grid = grid;
  map.values.assign(static_cast<std::size_t>(K), 0.0);
  parallel_for(static_cast<std::size_t>(K), [&](std::size_t k) {
    const Image masked =
        mask_patch(image, grid, grid.from_flat(static_cast<int>(k)));
    map.values[k] = delta_full - static_cast<double>(model.predict(masked).delta);
  });
  return map;
}

std::vector<double> normalize_cde(const CDEMap& map) {
  if (map.values.empty()) throw InvalidArgument("normalize_cde: empty map");
  for (double v : map.values)
    if (!std::isfinite(v))
      throw NumericalError("normalize_cde: non-finite CDE value");
  const double vmax = *std::max_element(map.values.begin(), map.values.end());
  std::vector<double> out(map.values.size());
  for (std::size_t i = 0; i < map.values.size(); ++i)
    out[i] = std::exp(map.values[i] - vmax);
  return out;
}

UniformityStats uniformity_stats(const std::vector<double>& normalized) {
  const std::size_t k = normalized.size();
  if (k < 2) throw InvalidArgument("uniformity_stats: need K >= 2");
  double sum = 0.0;
  for (double v : normalized) {
    if (!(v > 0.0))
      throw InvalidArgument("uniformity_stats: values must be positive");
    sum += v;
  }
  std::vector<double> w(k);
  for (std::size_t i = 0; i < k; ++i) w[i] = normalized[i] / sum;

  UniformityStats stats;
  for (double wi : w) stats.entropy -= wi * std::log(wi);

  std::vector<double> sorted = w;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t topk = (k + 9) / 10;  // ceil(K/10)
  for (std::size_t i = k - topk; i < k; ++i) stats.topk_mass += sorted[i];

  // Gini from the sorted weights: (2 * sum_i i*w_(i) - (K+1)) / K, 1-based.
  double weighted = 0.0;
  for (std::size_t i = 0; i < k; ++i)
    weighted += static_cast<double>(i + 1) * sorted[i];
  stats.gini = (2.0 * weighted - static_cast<double>(k + 1)) /
               static_cast<double>(k);
  return stats;
}

OcclusionResult occlusion_recall_curve(const Predictor& model,
                                       const std::vector<Image>& fake_images,
                                       const std::vector<int>& mask_sizes) {
  if (fake_images.empty())
    throw InvalidArgument("occlusion_recall_curve: no images");
  const Image& first = fake_images.front();
  for (int m : mask_sizes)
    if (m <= 0 || first.height % m != 0 || first.width % m != 0)
      throw InvalidArgument(
          "occlusion_recall_curve: mask size must divide image dims");

  const std::size_t n = fake_images.size();
  std::vector<int> hits(n, 0);
  parallel_for(n, [&](std::size_t i) {
    hits[i] = model.predict(fake_images[i]).label == kLabelSynthetic ? 1 : 0;
  });
  OcclusionResult res;
  res.baseline_recall =
      static_cast<double>(std::accumulate(hits.begin(), hits.end(), 0)) / n;

  for (int m : mask_sizes) {
    const PatchGrid mask_grid(first.height, first.width, m);
    for (int k = 0; k < mask_grid.patch_count(); ++k) {
      const PatchIndex idx = mask_grid.from_flat(k);
      parallel_for(n, [&](std::size_t i) {
        const Image masked = mask_patch(fake_images[i], mask_grid, idx);
        hits[i] = model.predict(masked).label == kLabelSynthetic ? 1 : 0;
      });
      OcclusionEntry e;
      e.mask_size = m;
      e.row = idx.row;
      e.col = idx.col;
      e.recall =
          static_cast<double>(std::accumulate(hits.begin(), hits.end(), 0)) / n;
      e.drop = res.baseline_recall - e.recall;
      res.entries.push_back(e);
    }
  }

  if (!res.entries.empty()) {
    double sum = 0.0, mx = res.entries.front().drop;
    for (const auto& e : res.entries) {
      sum += e.drop;
      mx = std::max(mx, e.drop);
    }
    res.mean_drop = sum / static_cast<double>(res.entries.size());
    res.max_drop = mx;
  }
  return res;
}

Image tile_patch(const Image& image, const PatchGrid& grid, PatchIndex idx) {
  if (image.height != grid.image_h || image.width != grid.image_w)
    throw InvalidArgument("tile_patch: image does not match grid");
  const PixelRect src = patch_pixel_bounds(grid, idx);
  Image out(image.height, image.width, image.channels);
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x) {
      const int sy = src.top + y % grid.patch_size;
      const int sx = src.left + x % grid.patch_size;
      for (int c = 0; c < image.channels; ++c)
        out.at(y, x, c) = image.at(sy, sx, c);
    }
  return out;
}

TileEvalResult tile_patch_eval(const Predictor& model, const Manifest& manifest,
                               const PatchGrid& grid, std::uint64_t seed) {
  const std::size_t n = manifest.records.size();
  if (n == 0) throw InvalidArgument("tile_patch_eval: empty manifest");
  std::vector<int> correct(n, 0);
  parallel_for(n, [&](std::size_t i) {
    const Image img = load_image(manifest, manifest.records[i]);
    Rng rng(derive_seed(seed, kStreamTile, i));
    const int k = static_cast<int>(
        rng.below(static_cast<std::uint64_t>(grid.patch_count())));
    const Image tiled = tile_patch(img, grid, grid.from_flat(k));
    correct[i] =
        model.predict(tiled).label == manifest.records[i].image_label ? 1 : 0;
  });
  TileEvalResult res;
  res.n = static_cast<int>(n);
  res.accuracy =
      static_cast<double>(std::accumulate(correct.begin(), correct.end(), 0)) /
      static_cast<double>(n);
  return res;
}

CdeAggregate corpus_cde_report(const Predictor& model, const Manifest& manifest,
                               const PatchGrid& grid, int bins) {
  if (bins < 1) throw InvalidArgument("corpus_cde_report: bins must be >= 1");
  std::vector<std::size_t> fakes;
  for (std::size_t i = 0; i < manifest.records.size(); ++i)
    if (manifest.records[i].image_label == kLabelSynthetic) fakes.push_back(i);
  if (fakes.empty())
    throw InvalidArgument("corpus_cde_report: manifest has no fake samples");

  CdeAggregate agg;
  agg.histogram.assign(static_cast<std::size_t>(bins), 0.0);
  agg.n_images = static_cast<int>(fakes.size());
  std::vector<double> entropies, topks, ginis;

  for (std::size_t idx : fakes) {
    const Image img = load_image(manifest, manifest.records[idx]);
    const CDEMap map = cde_map(model, img, grid);
    const std::vector<double> norm = normalize_cde(map);
    const UniformityStats st = uniformity_stats(norm);
    entropies.push_back(st.entropy);
    topks.push_back(st.topk_mass);
    ginis.push_back(st.gini);
    const double mass = 1.0 / (static_cast<double>(norm.size()) *
                               static_cast<double>(fakes.size()));
    for (double v : norm) {
      int b = static_cast<int>(v * bins);
      if (b >= bins) b = bins - 1;  // v == 1 lands in the last bin
      if (b < 0) b = 0;
      agg.histogram[static_cast<std::size_t>(b)] += mass;
    }
  }

  auto mean_std = [](const std::vector<double>& xs, double& mean,
                     double& stdev) {
    mean = std::accumulate(xs.begin(), xs.end(), 0.0) /
           static_cast<double>(xs.size());
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    stdev = std::sqrt(var / static_cast<double>(xs.size()));
  };
  mean_std(entropies, agg.entropy_mean, agg.entropy_std);
  mean_std(topks, agg.topk_mass_mean, agg.topk_mass_std);
  mean_std(ginis, agg.gini_mean, agg.gini_std);
  return agg;
}

void write_cde_csv(const std::filesystem::path& path, const CDEMap& map,
                   const std::vector<double>& normalized) {
  if (normalized.size() != map.values.size())
    throw InvalidArgument("write_cde_csv: size mismatch");
  std::ofstream out(path);
  if (!out) throw IoError("write_cde_csv: cannot open " + path.string());
  out << "row,col,cde,normalized\n";
  char buf[128];
  for (std::size_t k = 0; k < map.values.size(); ++k) {
    const PatchIndex idx = map.grid.from_flat(static_cast<int>(k));
    std::snprintf(buf, sizeof(buf), "%d,%d,%.9g,%.9g\n", idx.row, idx.col,
                  map.values[k], normalized[k]);
    out << buf;
  }
  if (!out) throw IoError("write_cde_csv: write failed " + path.string());
}

void write_cde_pgm(const std::filesystem::path& path, const PatchGrid& grid,
                   const std::vector<double>& normalized) {
  if (normalized.size() != static_cast<std::size_t>(grid.patch_count()))
    throw InvalidArgument("write_cde_pgm: size mismatch");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("write_cde_pgm: cannot open " + path.string());
  out << "P5\n" << grid.cols() << " " << grid.rows() << "\n255\n";
  for (double v : normalized) {
    const int byte = static_cast<int>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
    out.put(static_cast<char>(byte));
  }
  if (!out) throw IoError("write_cde_pgm: write failed " + path.string());
}

void write_cde_aggregate_json(const std::filesystem::path& path,
                              const CdeAggregate& agg) {
  json j;
  j["histogram"] = agg.histogram;
  j["entropy"] = {{"mean", agg.entropy_mean}, {"std", agg.entropy_std}};
  j["topk_mass"] = {{"mean", agg.topk_mass_mean}, {"std", agg.topk_mass_std}};
  j["gini"] = {{"mean", agg.gini_mean}, {"std", agg.gini_std}};
  j["n_images"] = agg.n_images;
  std::ofstream out(path);
  if (!out)
    throw IoError("write_cde_aggregate_json: cannot open " + path.string());
  out << j.dump(2) << "\n";
  if (!out)
    throw IoError("write_cde_aggregate_json: write failed " + path.string());
}

CdeAggregate read_cde_aggregate_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in)
    throw IoError("read_cde_aggregate_json: cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError("read_cde_aggregate_json: " + std::string(e.what()));
  }
  try {
    CdeAggregate agg;
    agg.histogram = j.at("histogram").get<std::vector<double>>();
    agg.entropy_mean = j.at("entropy").at("mean").get<double>();
    agg.entropy_std = j.at("entropy").at("std").get<double>();
    agg.topk_mass_mean = j.at("topk_mass").at("mean").get<double>();
    agg.topk_mass_std = j.at("topk_mass").at("std").get<double>();
    agg.gini_mean = j.at("gini").at("mean").get<double>();
    agg.gini_std = j.at("gini").at("std").get<double>();
    agg.n_images = j.at("n_images").get<int>();
    return agg;
  } catch (const json::exception& e) {
    throw FormatError("read_cde_aggregate_json: " + std::string(e.what()));
  }
}

}  // namespace ppl
