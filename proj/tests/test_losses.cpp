#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "ppl/losses.hpp"
#include "ppl/rng.hpp"

using namespace ppl;

TEST_SUITE_BEGIN("losses");

namespace {

// Independent brute-force margin loss: plain double loops over all
// unordered pairs, no shared code with the implementation.
double brute_force_margin(const std::vector<double>& emb, int n, int dim,
                          const std::vector<std::int8_t>& labels, double alpha,
                          bool cosine, bool mean_norm) {
  std::vector<int> usable;
  for (int i = 0; i < n; ++i)
    if (labels[static_cast<std::size_t>(i)] != kPatchExcluded) usable.push_back(i);
  double total = 0.0;
  long pairs = 0;
  for (std::size_t a = 0; a + 1 < usable.size(); ++a)
    for (std::size_t b = a + 1; b < usable.size(); ++b) {
      const int i = usable[a], j = usable[b];
      double d2;
      if (!cosine) {
        d2 = 0.0;
        for (int k = 0; k < dim; ++k) {
          const double diff = emb[static_cast<std::size_t>(i) * dim + k] -
                              emb[static_cast<std::size_t>(j) * dim + k];
          d2 += diff * diff;
        }
      } else {
        double dot = 0, ni = 0, nj = 0;
        for (int k = 0; k < dim; ++k) {
          dot += emb[static_cast<std::size_t>(i) * dim + k] *
                 emb[static_cast<std::size_t>(j) * dim + k];
          ni += emb[static_cast<std::size_t>(i) * dim + k] *
                emb[static_cast<std::size_t>(i) * dim + k];
          nj += emb[static_cast<std::size_t>(j) * dim + k] *
                emb[static_cast<std::size_t>(j) * dim + k];
        }
        const double d = 1.0 - dot / std::max(std::sqrt(ni) * std::sqrt(nj), 1e-12);
        d2 = d * d;
      }
      const bool same = labels[static_cast<std::size_t>(i)] ==
                        labels[static_cast<std::size_t>(j)];
      total += same ? d2 : std::max(0.0, alpha - d2);
      ++pairs;
    }
  return mean_norm ? total / static_cast<double>(pairs) : total;
}

std::vector<double> random_embeddings(Rng& rng, int n, int dim, double scale) {
  std::vector<double> emb(static_cast<std::size_t>(n) * dim);
  for (auto& v : emb) v = rng.normal() * scale;
  return emb;
}

std::vector<std::int8_t> random_labels(Rng& rng, int n, bool with_excluded) {
  std::vector<std::int8_t> labels(static_cast<std::size_t>(n));
  for (auto& l : labels) {
    const double u = rng.unit();
    if (with_excluded && u < 0.1)
      l = static_cast<std::int8_t>(kPatchExcluded);
    else
      l = u < 0.55 ? 0 : 1;
  }
  // Guarantee two usable tokens.
  labels[0] = 0;
  labels[static_cast<std::size_t>(n - 1)] = 1;
  return labels;
}

ContrastiveConfig full_cfg(double margin, PairDistance dist,
                           PairNormalization norm) {
  ContrastiveConfig cfg;
  cfg.margin = margin;
  cfg.distance = dist;
  cfg.normalization = norm;
  cfg.max_pairs = std::nullopt;
  return cfg;
}

}  // namespace

TEST_CASE("margin loss on two-token batches") {
  ContrastiveConfig cfg = full_cfg(1.0, PairDistance::kEuclidean,
                                   PairNormalization::kMean);

  // same label, identical embeddings -> 0
  std::vector<double> emb = {0.3, -0.2, 0.3, -0.2};
  CHECK(margin_contrastive(emb, 2, 2, {1, 1}, cfg, 0) == doctest::Approx(0.0));

  // different labels, identical embeddings, alpha=1 -> 1
  CHECK(margin_contrastive(emb, 2, 2, {0, 1}, cfg, 0) == doctest::Approx(1.0));

  // different labels, d^2 = 2 >= alpha -> 0
  std::vector<double> spread = {0.0, 0.0, 1.0, 1.0};
  CHECK(margin_contrastive(spread, 2, 2, {0, 1}, cfg, 0) ==
        doctest::Approx(0.0));

  // fewer than two usable tokens
  CHECK_THROWS_AS(
      margin_contrastive(emb, 2, 2,
                         {static_cast<std::int8_t>(kPatchExcluded), 1}, cfg, 0),
      InvalidArgument);
  std::vector<double> bad = {0.0, std::nan(""), 0.0, 0.0};
  CHECK_THROWS_AS(margin_contrastive(bad, 2, 2, {0, 1}, cfg, 0),
                  NumericalError);
}

TEST_CASE("margin loss matches the brute-force oracle on random batches") {
  Rng rng(808);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 2 + static_cast<int>(rng.below(63));  // N <= 64
    const int dim = 1 + static_cast<int>(rng.below(8));
    const auto emb = random_embeddings(rng, n, dim, 0.7);
    const auto labels = random_labels(rng, n, trial % 3 == 0);
    const double alpha = rng.unit() * 2.0;
    for (const bool cosine : {false, true})
      for (const bool mean_norm : {false, true}) {
        const ContrastiveConfig cfg = full_cfg(
            alpha, cosine ? PairDistance::kCosine : PairDistance::kEuclidean,
            mean_norm ? PairNormalization::kMean : PairNormalization::kSum);
        const double got = margin_contrastive(emb, n, dim, labels, cfg, 0);
        const double want =
            brute_force_margin(emb, n, dim, labels, alpha, cosine, mean_norm);
        CHECK(got == doctest::Approx(want).epsilon(1e-6));
      }
  }
}

TEST_CASE("margin loss is symmetric under token permutation") {
  Rng rng(11);
  const int n = 10, dim = 4;
  auto emb = random_embeddings(rng, n, dim, 1.0);
  auto labels = random_labels(rng, n, false);
  const ContrastiveConfig cfg =
      full_cfg(1.0, PairDistance::kEuclidean, PairNormalization::kMean);
  const double base = margin_contrastive(emb, n, dim, labels, cfg, 0);

  // Swap tokens 2 and 7.
  for (int k = 0; k < dim; ++k)
    std::swap(emb[2 * dim + k], emb[7 * dim + k]);
  std::swap(labels[2], labels[7]);
  CHECK(margin_contrastive(emb, n, dim, labels, cfg, 0) ==
        doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("excluded tokens contribute nothing") {
  Rng rng(12);
  const int n = 12, dim = 3;
  const auto emb = random_embeddings(rng, n, dim, 1.0);
  auto labels = random_labels(rng, n, false);
  labels[3] = static_cast<std::int8_t>(kPatchExcluded);
  labels[8] = static_cast<std::int8_t>(kPatchExcluded);
  const ContrastiveConfig cfg =
      full_cfg(1.0, PairDistance::kEuclidean, PairNormalization::kMean);
  const double with_excluded = margin_contrastive(emb, n, dim, labels, cfg, 0);

  // Remove the excluded tokens entirely.
  std::vector<double> emb2;
  std::vector<std::int8_t> labels2;
  for (int i = 0; i < n; ++i) {
    if (labels[static_cast<std::size_t>(i)] == kPatchExcluded) continue;
    labels2.push_back(labels[static_cast<std::size_t>(i)]);
    for (int k = 0; k < dim; ++k)
      emb2.push_back(emb[static_cast<std::size_t>(i) * dim + k]);
  }
  const double removed = margin_contrastive(
      emb2, static_cast<int>(labels2.size()), dim, labels2, cfg, 0);
  CHECK(with_excluded == doctest::Approx(removed).epsilon(1e-12));

  std::vector<float> grad;
  std::vector<float> embf(emb.begin(), emb.end());
  margin_contrastive(embf, n, dim, labels, cfg, 0, &grad);
  for (int k = 0; k < dim; ++k) {
    CHECK(grad[3 * dim + k] == 0.0f);
    CHECK(grad[8 * dim + k] == 0.0f);
  }
}

TEST_CASE("max_pairs sampling is seeded and a superset cap is exact") {
  Rng rng(13);
  const int n = 16, dim = 4;
  const auto emb = random_embeddings(rng, n, dim, 1.0);
  const auto labels = random_labels(rng, n, false);
  ContrastiveConfig cfg =
      full_cfg(1.0, PairDistance::kEuclidean, PairNormalization::kMean);
  cfg.max_pairs = 1000;  // >= C(16,2) = 120 -> full set
  const double capped = margin_contrastive(emb, n, dim, labels, cfg, 42);
  cfg.max_pairs = std::nullopt;
  const double full = margin_contrastive(emb, n, dim, labels, cfg, 42);
  CHECK(capped == doctest::Approx(full).epsilon(1e-12));

  cfg.max_pairs = 30;
  const double a = margin_contrastive(emb, n, dim, labels, cfg, 7);
  const double b = margin_contrastive(emb, n, dim, labels, cfg, 7);
  const double c = margin_contrastive(emb, n, dim, labels, cfg, 8);
  CHECK(a == b);
  CHECK(a != c);  // different pair sample
}

TEST_CASE("margin loss gradient matches finite differences") {
  Rng rng(14);
  const int n = 6, dim = 3;
  for (const auto dist : {PairDistance::kEuclidean, PairDistance::kCosine}) {
    auto emb = random_embeddings(rng, n, dim, 0.8);
    const auto labels = random_labels(rng, n, false);
    const ContrastiveConfig cfg =
        full_cfg(1.7, dist, PairNormalization::kMean);
    std::vector<double> grad;
    margin_contrastive(emb, n, dim, labels, cfg, 0, &grad);
    const double h = 1e-6;
    for (std::size_t i = 0; i < emb.size(); ++i) {
      const double orig = emb[i];
      emb[i] = orig + h;
      const double lp = margin_contrastive(emb, n, dim, labels, cfg, 0);
      emb[i] = orig - h;
      const double lm = margin_contrastive(emb, n, dim, labels, cfg, 0);
      emb[i] = orig;
      const double numeric = (lp - lm) / (2 * h);
      CHECK(grad[i] == doctest::Approx(numeric).epsilon(1e-4));
    }
  }
}

TEST_CASE("infonce closed-form example") {
  // q = k+, two negatives at cosine similarity 0, tau = 0.5:
  // -log(e^2 / (e^2 + 2)) per anchor.
  std::vector<double> emb = {1, 0, 1, 0, 0, 1, 0, 1};
  const std::vector<std::int8_t> labels = {1, 1, 0, 0};
  InfoNCEConfig cfg;
  cfg.temperature = 0.5;
  const double e2 = std::exp(2.0);
  const double expected = -std::log(e2 / (e2 + 2.0));
  CHECK(infonce(emb, 4, 2, labels, cfg, 0) ==
        doctest::Approx(expected).epsilon(1e-9));
  CHECK(expected == doctest::Approx(0.2395).epsilon(1e-3));
}

TEST_CASE("infonce single positive pair with no negatives is zero") {
  std::vector<double> emb = {0.5, 0.1, 0.4, 0.3};
  const std::vector<std::int8_t> labels = {1, 1};
  InfoNCEConfig cfg;
  CHECK(infonce(emb, 2, 2, labels, cfg, 0) == doctest::Approx(0.0));
}

TEST_CASE("infonce is invariant to positive rescaling") {
  Rng rng(15);
  const int n = 8, dim = 5;
  auto emb = random_embeddings(rng, n, dim, 1.0);
  const auto labels = random_labels(rng, n, false);
  InfoNCEConfig cfg;
  const double base = infonce(emb, n, dim, labels, cfg, 3);
  for (int k = 0; k < dim; ++k) emb[2 * dim + k] *= 7.5;
  CHECK(infonce(emb, n, dim, labels, cfg, 3) ==
        doctest::Approx(base).epsilon(1e-9));
}

TEST_CASE("infonce rejects anchor-free batches") {
  std::vector<double> emb = {1, 0, 0, 1};
  const std::vector<std::int8_t> labels = {0, 1};
  InfoNCEConfig cfg;
  CHECK_THROWS_AS(infonce(emb, 2, 2, labels, cfg, 0), InvalidArgument);
}

TEST_CASE("infonce gradient matches finite differences") {
  Rng rng(16);
  const int n = 6, dim = 4;
  auto emb = random_embeddings(rng, n, dim, 1.0);
  const auto labels = random_labels(rng, n, false);
  InfoNCEConfig cfg;
  cfg.temperature = 0.7;
  std::vector<double> grad;
  infonce(emb, n, dim, labels, cfg, 5, &grad);
  const double h = 1e-6;
  for (std::size_t i = 0; i < emb.size(); ++i) {
    const double orig = emb[i];
    emb[i] = orig + h;
    const double lp = infonce(emb, n, dim, labels, cfg, 5);
    emb[i] = orig - h;
    const double lm = infonce(emb, n, dim, labels, cfg, 5);
    emb[i] = orig;
    CHECK(grad[i] == doctest::Approx((lp - lm) / (2 * h)).epsilon(1e-5));
  }
}

TEST_CASE("bce closed forms and positivity") {
  CHECK(bce<double>({0.0, 0.0}, 0) == doctest::Approx(std::log(2.0)));
  CHECK(bce<double>({0.0, 0.0}, 1) == doctest::Approx(std::log(2.0)));

  const double tiny = bce<double>({-10.0, 10.0}, 1);
  CHECK(tiny == doctest::Approx(std::log1p(std::exp(-20.0))).epsilon(1e-12));
  CHECK(tiny < 1e-8);
  CHECK(tiny > 0.0);

  Rng rng(17);
  for (int t = 0; t < 50; ++t) {
    const std::array<double, 2> logits = {rng.normal() * 3, rng.normal() * 3};
    CHECK(bce(logits, t % 2) >= 0.0);
  }
  CHECK_THROWS_AS(bce<double>({0.0, 0.0}, 2), InvalidArgument);
  CHECK_THROWS_AS(
      bce<double>({std::numeric_limits<double>::infinity(), 0.0}, 0),
      NumericalError);
}

TEST_CASE("bce gradient matches finite differences") {
  Rng rng(18);
  for (int t = 0; t < 20; ++t) {
    std::array<double, 2> logits = {rng.normal() * 2, rng.normal() * 2};
    const int label = t % 2;
    std::array<double, 2> grad{};
    bce(logits, label, &grad);
    const double h = 1e-6;
    for (int i = 0; i < 2; ++i) {
      const double orig = logits[static_cast<std::size_t>(i)];
      logits[static_cast<std::size_t>(i)] = orig + h;
      const double lp = bce(logits, label);
      logits[static_cast<std::size_t>(i)] = orig - h;
      const double lm = bce(logits, label);
      logits[static_cast<std::size_t>(i)] = orig;
      CHECK(grad[static_cast<std::size_t>(i)] ==
            doctest::Approx((lp - lm) / (2 * h)).epsilon(1e-6));
    }
  }
}

TEST_CASE("total loss weighting") {
  CHECK(total_loss(2.0, 1.0, 0.0) == 1.0);
  CHECK(total_loss(2.0, 1.0, 1.0) == 2.0);
  CHECK(total_loss(2.0, 1.0, 0.3) == doctest::Approx(1.3));
  CHECK_THROWS_AS(total_loss(1.0, 1.0, -0.1), InvalidArgument);
  CHECK_THROWS_AS(total_loss(1.0, 1.0, 1.1), InvalidArgument);
}

TEST_SUITE_END();
