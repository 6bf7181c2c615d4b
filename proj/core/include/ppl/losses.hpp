#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ppl/common.hpp"

namespace ppl {

enum class PairDistance { kEuclidean, kCosine };
enum class PairNormalization { kMean, kSum };

PairDistance pair_distance_from_string(const std::string& s);
PairNormalization pair_normalization_from_string(const std::string& s);

struct ContrastiveConfig {
  double margin = 1.0;
  PairDistance distance = PairDistance::kEuclidean;
  PairNormalization normalization = PairNormalization::kMean;
  std::optional<int> max_pairs = 4096;  // nullopt -> full pair set

  void validate() const {
    if (margin < 0.0) throw InvalidArgument("ContrastiveConfig: margin < 0");
    if (max_pairs && *max_pairs < 1)
      throw InvalidArgument("ContrastiveConfig: max_pairs must be >= 1");
  }
};

struct InfoNCEConfig {
  double temperature = 0.5;

  void validate() const {
    if (!(temperature > 0.0))
      throw InvalidArgument("InfoNCEConfig: temperature must be > 0");
  }
};

// Margin contrastive loss over unordered pairs of the non-excluded tokens
// (labels kPatchExcluded are skipped entirely). `embeddings` is N x D
// row-major. When cfg.max_pairs caps the pair set, pairs are sampled
// uniformly without replacement using `seed`. When `grad` is non-null it
// receives dLoss/dEmbeddings (N x D; excluded rows stay zero).
template <typename T>
double margin_contrastive(const std::vector<T>& embeddings, int n, int dim,
                          const std::vector<std::int8_t>& labels,
                          const ContrastiveConfig& cfg, std::uint64_t seed,
                          std::vector<T>* grad = nullptr);

// InfoNCE over length-normalized embeddings with cosine similarity. Each
// token with at least one same-label partner acts as an anchor with one
// sampled positive; all other tokens form the denominator. Anchors
// without positives are skipped; if all are skipped this throws.
template <typename T>
double infonce(const std::vector<T>& embeddings, int n, int dim,
               const std::vector<std::int8_t>& labels, const InfoNCEConfig& cfg,
               std::uint64_t seed, std::vector<T>* grad = nullptr);

// Two-class softmax cross entropy in log-sum-exp form.
template <typename T>
double bce(const std::array<T, 2>& logits, int label,
           std::array<T, 2>* dlogits = nullptr);

double total_loss(double l_con, double l_ce, double lambda);

}  // namespace ppl
