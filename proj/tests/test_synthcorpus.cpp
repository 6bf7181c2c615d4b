#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "ppl/image_io.hpp"
#include "ppl/synth_corpus.hpp"

using namespace ppl;

TEST_SUITE_BEGIN("synthcorpus");

namespace {

ArtifactProfile make_profile(FingerprintKind kind) {
  ArtifactProfile p;
  p.name = "test";
  p.kind = kind;
  return p;
}

const FingerprintKind kAllKinds[] = {FingerprintKind::kCheckerboardModulation,
                                     FingerprintKind::kSpectralNotch,
                                     FingerprintKind::kLevelQuantization};

}  // namespace

TEST_CASE("gen_real is deterministic per seed") {
  const Image a = gen_real(42, 56, 56);
  const Image b = gen_real(42, 56, 56);
  CHECK(a.data == b.data);
}

TEST_CASE("gen_real adjacent seeds differ broadly") {
  const Image a = gen_real(7, 56, 56);
  const Image b = gen_real(8, 56, 56);
  std::size_t differing = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i)
    if (std::abs(a.data[i] - b.data[i]) > 0.01f) ++differing;
  CHECK(static_cast<double>(differing) / a.data.size() > 0.10);
}

TEST_CASE("gen_real stays inside the unit interval over 1000 seeds") {
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const Image img = gen_real(seed, 28, 28);
    for (float v : img.data) {
      CHECK(v >= 0.0f);
      CHECK(v <= 1.0f);
    }
  }
}

TEST_CASE("gen_real is smoother than white noise") {
  const Image img = gen_real(3, 112, 112);
  double grad_sum = 0.0;
  std::size_t n = 0;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x + 1 < img.width; ++x, ++n)
      grad_sum += std::abs(img.at(y, x + 1, 0) - img.at(y, x, 0));
  CHECK(grad_sum / static_cast<double>(n) < 0.05);
}

TEST_CASE("reconstruct checkerboard closed form on a constant image") {
  // s = 0.25 on constant 0.5: alternating +-(0.25 * s * depth).
  ArtifactProfile p = make_profile(FingerprintKind::kCheckerboardModulation);
  p.depth = 0.8;
  const Image in(28, 28, 3, 0.5f);
  const Image out = reconstruct(in, p, 0.25);
  const double amp = 0.25 * 0.25 * 0.8;
  for (int y = 0; y < 28; ++y)
    for (int x = 0; x < 28; ++x) {
      const double expected = ((x + y) % 2 == 0) ? 0.5 + amp : 0.5 - amp;
      for (int c = 0; c < 3; ++c)
        CHECK(out.at(y, x, c) == doctest::Approx(expected).epsilon(1e-6));
    }
}

TEST_CASE("reconstruct max change is monotone in strength and vanishes") {
  const Image in = gen_real(11, 56, 56);
  for (const auto kind : kAllKinds) {
    const ArtifactProfile p = make_profile(kind);
    double prev = 1e9;
    for (const double s : {0.5, 0.25, 0.1, 0.01, 0.001}) {
      const Image out = reconstruct(in, p, s);
      float max_change = 0.0f;
      for (std::size_t i = 0; i < in.data.size(); ++i)
        max_change = std::max(max_change, std::abs(out.data[i] - in.data[i]));
      CHECK(max_change <= prev + 1e-7);
      prev = max_change;
    }
    CHECK(prev < 0.001);  // s -> 0 limit
  }
  CHECK_THROWS_AS(reconstruct(in, make_profile(kAllKinds[0]), 0.0),
                  InvalidArgument);
  CHECK_THROWS_AS(reconstruct(in, make_profile(kAllKinds[0]), 1.5),
                  InvalidArgument);
}

TEST_CASE("reconstruct per-pixel deviation bound over 100 random images") {
  for (const auto kind : kAllKinds) {
    const ArtifactProfile p = make_profile(kind);
    for (int t = 0; t < 100; ++t) {
      const Image in = (t % 2 == 0) ? gen_real(1000 + t, 28, 28)
                                    : test::random_image(2000 + t, 28, 28, 3);
      const double s = 0.05 + 0.90 * (t / 99.0);
      const Image out = reconstruct(in, p, s);
      CHECK(out.same_shape(in));
      const float bound = static_cast<float>(0.25 * s) + 1e-6f;
      for (std::size_t i = 0; i < in.data.size(); ++i)
        CHECK(std::abs(out.data[i] - in.data[i]) <= bound);
    }
  }
}

TEST_CASE("reconstruct fingerprint reaches every patch") {
  const PatchGrid grid(56, 56, 14);
  for (const auto kind : kAllKinds) {
    const ArtifactProfile p = make_profile(kind);
    for (int t = 0; t < 5; ++t) {
      const Image in = gen_real(300 + t, 56, 56);
      for (const double s : {0.1, 0.25}) {
        const Image out = reconstruct(in, p, s);
        for (int k = 0; k < grid.patch_count(); ++k) {
          const PixelRect r = patch_pixel_bounds(grid, grid.from_flat(k));
          double dev = 0.0;
          bool identical = true;
          for (int y = r.top; y < r.top + r.height; ++y)
            for (int x = r.left; x < r.left + r.width; ++x)
              for (int c = 0; c < 3; ++c) {
                dev += std::abs(out.at(y, x, c) - in.at(y, x, c));
                identical &= out.at(y, x, c) == in.at(y, x, c);
              }
          CHECK(dev > 0.0);
          CHECK_FALSE(identical);
        }
      }
    }
  }
}

TEST_CASE("inject_dominant_artifact amplitude zero is the identity") {
  const PatchGrid g(56, 56, 14);
  const Image in = gen_real(5, 56, 56);
  Rng rng(6);
  const Image out = inject_dominant_artifact(in, g, {{0, 0}}, 0.0, rng);
  CHECK(out.data == in.data);
}

TEST_CASE("inject_dominant_artifact touches only the region") {
  const PatchGrid g(56, 56, 14);
  const Image in = gen_real(5, 56, 56);
  Rng rng(6);
  const Image out = inject_dominant_artifact(in, g, {{0, 0}}, 0.5, rng);
  const PixelRect r = patch_pixel_bounds(g, {0, 0});
  bool region_differs = false;
  for (int y = 0; y < 56; ++y)
    for (int x = 0; x < 56; ++x) {
      const bool inside = y >= r.top && y < r.top + r.height && x >= r.left &&
                          x < r.left + r.width;
      for (int c = 0; c < 3; ++c) {
        if (inside)
          region_differs |= out.at(y, x, c) != in.at(y, x, c);
        else
          CHECK(out.at(y, x, c) == in.at(y, x, c));
      }
    }
  CHECK(region_differs);
  Rng rng2(6);
  CHECK_THROWS_AS(inject_dominant_artifact(in, g, {}, 0.5, rng2),
                  InvalidArgument);
}

TEST_CASE("dominant artifact separable by a logistic probe on patch means") {
  // 200 artifact images vs 200 clean, features = per-patch means, fixed
  // region {(0,0)} at full amplitude.
  const PatchGrid g(56, 56, 14);
  const int K = g.patch_count();
  const int n_per_class = 200;
  std::vector<std::vector<double>> features;
  std::vector<int> labels;
  for (int i = 0; i < n_per_class; ++i) {
    const Image clean = gen_real(9000 + i, 56, 56);
    Rng rng(40 + i);
    const Image dirty = inject_dominant_artifact(clean, g, {{0, 0}}, 1.0, rng);
    for (const Image* img : {&clean, &dirty}) {
      std::vector<double> f(static_cast<std::size_t>(K), 0.0);
      for (int k = 0; k < K; ++k) {
        const PixelRect r = patch_pixel_bounds(g, g.from_flat(k));
        double sum = 0.0;
        int count = 0;
        for (int y = r.top; y < r.top + r.height; ++y)
          for (int x = r.left; x < r.left + r.width; ++x)
            for (int c = 0; c < 3; ++c, ++count) sum += img->at(y, x, c);
        f[static_cast<std::size_t>(k)] = sum / count;
      }
      features.push_back(std::move(f));
      labels.push_back(img == &dirty ? 1 : 0);
    }
  }

  // Plain logistic regression, gradient descent.
  std::vector<double> w(static_cast<std::size_t>(K), 0.0);
  double b = 0.0;
  for (int it = 0; it < 500; ++it) {
    std::vector<double> gw(static_cast<std::size_t>(K), 0.0);
    double gb = 0.0;
    for (std::size_t i = 0; i < features.size(); ++i) {
      double z = b;
      for (int k = 0; k < K; ++k)
        z += w[static_cast<std::size_t>(k)] * features[i][static_cast<std::size_t>(k)];
      const double p = 1.0 / (1.0 + std::exp(-z));
      const double err = p - labels[i];
      for (int k = 0; k < K; ++k)
        gw[static_cast<std::size_t>(k)] += err * features[i][static_cast<std::size_t>(k)];
      gb += err;
    }
    for (int k = 0; k < K; ++k)
      w[static_cast<std::size_t>(k)] -= 2.0 * gw[static_cast<std::size_t>(k)] /
                                        static_cast<double>(features.size());
    b -= 2.0 * gb / static_cast<double>(features.size());
  }
  int correct = 0;
  for (std::size_t i = 0; i < features.size(); ++i) {
    double z = b;
    for (int k = 0; k < K; ++k)
      z += w[static_cast<std::size_t>(k)] * features[i][static_cast<std::size_t>(k)];
    correct += (z > 0.0 ? 1 : 0) == labels[i];
  }
  CHECK(correct == 2 * n_per_class);
}

TEST_CASE("corrupt blur identity and constants") {
  const Image img = gen_real(20, 56, 56);
  CHECK(corrupt(img, CorruptionKind::kGaussianBlur, 0.0).data == img.data);

  const Image constant(56, 56, 3, 0.37f);
  const Image blurred = corrupt(constant, CorruptionKind::kGaussianBlur, 2.0);
  for (float v : blurred.data) CHECK(v == doctest::Approx(0.37f).epsilon(1e-6));

  CHECK_THROWS_AS(corrupt(img, CorruptionKind::kGaussianBlur, 3.5),
                  InvalidArgument);
}

TEST_CASE("corrupt resize identity and round trip shape") {
  const Image img = gen_real(21, 56, 56);
  const Image same = corrupt(img, CorruptionKind::kResize, 1.0);
  for (std::size_t i = 0; i < img.data.size(); ++i)
    CHECK(std::abs(same.data[i] - img.data[i]) < 1e-6f);

  for (const double s : {0.5, 0.75, 1.25, 1.5}) {
    const Image out = corrupt(img, CorruptionKind::kResize, s);
    CHECK(out.same_shape(img));
  }
  CHECK_THROWS_AS(corrupt(img, CorruptionKind::kResize, 0.4), InvalidArgument);
}

TEST_CASE("corrupt jpeg round trip when a codec is available") {
  const Image img = gen_real(22, 56, 56);
  if (!jpeg_supported()) {
    CHECK_THROWS_AS(corrupt(img, CorruptionKind::kJpeg, 90), InvalidArgument);
    return;
  }
  const Image q90 = corrupt(img, CorruptionKind::kJpeg, 90);
  CHECK(q90.same_shape(img));
  for (float v : q90.data) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
  }
  // Higher quality should not be farther from the source than low quality.
  const Image q60 = corrupt(img, CorruptionKind::kJpeg, 60);
  double err90 = 0, err60 = 0;
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    err90 += std::abs(q90.data[i] - img.data[i]);
    err60 += std::abs(q60.data[i] - img.data[i]);
  }
  CHECK(err90 <= err60);
  CHECK_THROWS_AS(corrupt(img, CorruptionKind::kJpeg, 40), InvalidArgument);
}

namespace {

CorpusConfig small_corpus_config(std::uint64_t seed) {
  CorpusConfig cfg;
  cfg.height = 28;
  cfg.width = 28;
  cfg.channels = 3;
  cfg.patch_size = 14;
  cfg.master_seed = seed;
  ArtifactProfile fp = make_profile(FingerprintKind::kCheckerboardModulation);
  fp.name = "ckbd_dom";
  fp.dominant_enabled = true;
  fp.dominant.amplitude = 1.0;
  fp.dominant.region_rows = 1;
  fp.dominant.region_cols = 1;
  fp.dominant.placement = DominantPlacement::kFixed;
  cfg.profiles.push_back(fp);
  cfg.splits["train"] = {10, {{"ckbd_dom", 10}}};
  cfg.splits["test"] = {4, {{"ckbd_dom", 4}}};
  return cfg;
}

}  // namespace

TEST_CASE("build_corpus counts, labels, tags") {
  test::ScratchDir dir("corpus");
  const auto manifests = build_corpus(small_corpus_config(5), dir.path());
  const Manifest& train = manifests.at("train");
  CHECK(train.records.size() == 20);
  int fakes = 0;
  for (const auto& rec : train.records) {
    if (rec.image_label == kLabelSynthetic) {
      ++fakes;
      CHECK(rec.generator_tag == "ckbd_dom");
      REQUIRE(rec.patch_labels.has_value());
      for (auto v : *rec.patch_labels) CHECK(v == 1);
    } else {
      CHECK(rec.generator_tag == "real");
      CHECK_FALSE(rec.patch_labels.has_value());
    }
    CHECK(std::filesystem::exists(train.image_file(rec)));
    const Image img = load_image(train, rec);
    CHECK(img.height == 28);
    CHECK(img.width == 28);
  }
  CHECK(fakes == 10);

  // Round trip through the manifest files.
  const Manifest reloaded =
      load_manifest(dir.path() / "manifest.train.jsonl");
  CHECK(reloaded.split == "train");
  CHECK(reloaded.records.size() == train.records.size());
  CHECK(reloaded.info.patch_size == 14);
  CHECK(reloaded.info.profiles.size() == 1);
  CHECK(reloaded.info.profiles[0].dominant_enabled);
}

TEST_CASE("build_corpus is byte-deterministic per master seed") {
  test::ScratchDir a("corpus_a"), b("corpus_b");
  build_corpus(small_corpus_config(77), a.path());
  build_corpus(small_corpus_config(77), b.path());
  for (const auto& entry :
       std::filesystem::recursive_directory_iterator(a.path())) {
    if (!entry.is_regular_file()) continue;
    const auto rel = std::filesystem::relative(entry.path(), a.path());
    CHECK(test::read_file(entry.path()) == test::read_file(b.path() / rel));
  }
  test::ScratchDir c("corpus_c");
  build_corpus(small_corpus_config(78), c.path());
  CHECK(test::read_file(a.path() / "images/train/00000.png") !=
        test::read_file(c.path() / "images/train/00000.png"));
}

TEST_SUITE_END();
