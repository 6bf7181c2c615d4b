#include "ppl/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ppl/rng.hpp"

namespace ppl {

PairDistance pair_distance_from_string(const std::string& s) {
  if (s == "euclidean") return PairDistance::kEuclidean;
  if (s == "cosine") return PairDistance::kCosine;
  throw InvalidArgument("unknown pair distance: " + s);
}

PairNormalization pair_normalization_from_string(const std::string& s) {
  if (s == "mean") return PairNormalization::kMean;
  if (s == "sum") return PairNormalization::kSum;
  throw InvalidArgument("unknown pair normalization: " + s);
}

namespace {

template <typename T>
void check_finite(const std::vector<T>& embeddings, const char* op) {
  for (T v : embeddings)
    if (!std::isfinite(static_cast<double>(v)))
      throw NumericalError(std::string(op) + ": non-finite embedding");
}

}  // namespace

template <typename T>
double margin_contrastive(const std::vector<T>& embeddings, int n, int dim,
                          const std::vector<std::int8_t>& labels,
                          const ContrastiveConfig& cfg, std::uint64_t seed,
                          std::vector<T>* grad) {
  cfg.validate();
  if (n < 0 || embeddings.size() != static_cast<std::size_t>(n) * dim ||
      labels.size() != static_cast<std::size_t>(n))
    throw InvalidArgument("margin_contrastive: shape mismatch");
  check_finite(embeddings, "margin_contrastive");

  std::vector<int> usable;
  for (int i = 0; i < n; ++i)
    if (labels[static_cast<std::size_t>(i)] != kPatchExcluded)
      usable.push_back(i);
  if (usable.size() < 2)
    throw InvalidArgument("margin_contrastive: fewer than 2 usable tokens");

  if (grad != nullptr) grad->assign(static_cast<std::size_t>(n) * dim, T(0));

  const std::size_t m = usable.size();
  const std::size_t total_pairs = m * (m - 1) / 2;
  // Unordered pair p -> (a, b) with a < b over usable positions.
  std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs;
  pairs.reserve(total_pairs);
  for (std::uint32_t a = 0; a + 1 < m; ++a)
    for (std::uint32_t b = a + 1; b < m; ++b) pairs.emplace_back(a, b);

  std::size_t used = total_pairs;
  if (cfg.max_pairs && static_cast<std::size_t>(*cfg.max_pairs) < total_pairs) {
    used = static_cast<std::size_t>(*cfg.max_pairs);
    Rng rng(derive_seed(seed, 0x70616972ull));
    for (std::size_t i = 0; i < used; ++i) {
      const std::size_t j =
          i + static_cast<std::size_t>(rng.below(total_pairs - i));
      std::swap(pairs[i], pairs[j]);
    }
    pairs.resize(used);
  }

  const double alpha = cfg.margin;
  double loss = 0.0;
  for (const auto& [pa, pb] : pairs) {
    const int i = usable[pa], j = usable[pb];
    const T* ei = embeddings.data() + static_cast<std::ptrdiff_t>(i) * dim;
    const T* ej = embeddings.data() + static_cast<std::ptrdiff_t>(j) * dim;
    const bool same = labels[static_cast<std::size_t>(i)] ==
                      labels[static_cast<std::size_t>(j)];

    if (cfg.distance == PairDistance::kEuclidean) {
      double d2 = 0.0;
      for (int k = 0; k < dim; ++k) {
        const double diff = static_cast<double>(ei[k]) - ej[k];
        d2 += diff * diff;
      }
      double w = 0.0;  // d(term)/d(d2)
      if (same) {
        loss += d2;
        w = 1.0;
      } else if (alpha - d2 > 0.0) {
        loss += alpha - d2;
        w = -1.0;
      }
      if (grad != nullptr && w != 0.0) {
        T* gi = grad->data() + static_cast<std::ptrdiff_t>(i) * dim;
        T* gj = grad->data() + static_cast<std::ptrdiff_t>(j) * dim;
        for (int k = 0; k < dim; ++k) {
          const T diff = ei[k] - ej[k];
          gi[k] += static_cast<T>(2.0 * w) * diff;
          gj[k] -= static_cast<T>(2.0 * w) * diff;
        }
      }
    } else {
      // d = 1 - cosine similarity; the loss uses d^2 as written.
      double dot = 0.0, ni = 0.0, nj = 0.0;
      for (int k = 0; k < dim; ++k) {
        dot += static_cast<double>(ei[k]) * ej[k];
        ni += static_cast<double>(ei[k]) * ei[k];
        nj += static_cast<double>(ej[k]) * ej[k];
      }
      ni = std::sqrt(ni);
      nj = std::sqrt(nj);
      const double denom = std::max(ni * nj, 1e-12);
      const double c = dot / denom;
      const double d = 1.0 - c;
      const double d2 = d * d;
      double w = 0.0;
      if (same) {
        loss += d2;
        w = 1.0;
      } else if (alpha - d2 > 0.0) {
        loss += alpha - d2;
        w = -1.0;
      }
      if (grad != nullptr && w != 0.0 && ni > 1e-12 && nj > 1e-12) {
        // d(d2)/dc = -2d; dc/dei = ej/(ni*nj) - c*ei/ni^2.
        const double f = w * (-2.0 * d);
        T* gi = grad->data() + static_cast<std::ptrdiff_t>(i) * dim;
        T* gj = grad->data() + static_cast<std::ptrdiff_t>(j) * dim;
        for (int k = 0; k < dim; ++k) {
          gi[k] += static_cast<T>(f * (ej[k] / denom - c * ei[k] / (ni * ni)));
          gj[k] += static_cast<T>(f * (ei[k] / denom - c * ej[k] / (nj * nj)));
        }
      }
    }
  }

  if (cfg.normalization == PairNormalization::kMean) {
    loss /= static_cast<double>(used);
    if (grad != nullptr)
      for (auto& g : *grad) g /= static_cast<T>(used);
  }
  return loss;
}

template double margin_contrastive(const std::vector<float>&, int, int,
                                   const std::vector<std::int8_t>&,
                                   const ContrastiveConfig&, std::uint64_t,
                                   std::vector<float>*);
template double margin_contrastive(const std::vector<double>&, int, int,
                                   const std::vector<std::int8_t>&,
                                   const ContrastiveConfig&, std::uint64_t,
                                   std::vector<double>*);

template <typename T>
double infonce(const std::vector<T>& embeddings, int n, int dim,
               const std::vector<std::int8_t>& labels, const InfoNCEConfig& cfg,
               std::uint64_t seed, std::vector<T>* grad) {
  cfg.validate();
  if (n < 0 || embeddings.size() != static_cast<std::size_t>(n) * dim ||
      labels.size() != static_cast<std::size_t>(n))
    throw InvalidArgument("infonce: shape mismatch");
  check_finite(embeddings, "infonce");

  std::vector<int> usable;
  for (int i = 0; i < n; ++i)
    if (labels[static_cast<std::size_t>(i)] != kPatchExcluded)
      usable.push_back(i);
  const int m = static_cast<int>(usable.size());
  if (m < 2) throw InvalidArgument("infonce: fewer than 2 usable tokens");

  // Unit-normalize; cosine similarity becomes a dot product.
  std::vector<double> unit(static_cast<std::size_t>(m) * dim);
  std::vector<double> norms(static_cast<std::size_t>(m));
  for (int a = 0; a < m; ++a) {
    const T* e = embeddings.data() +
                 static_cast<std::ptrdiff_t>(usable[static_cast<std::size_t>(a)]) * dim;
    double nrm = 0.0;
    for (int k = 0; k < dim; ++k) nrm += static_cast<double>(e[k]) * e[k];
    nrm = std::sqrt(nrm);
    if (nrm < 1e-12) throw NumericalError("infonce: zero-norm embedding");
    norms[static_cast<std::size_t>(a)] = nrm;
    for (int k = 0; k < dim; ++k)
      unit[static_cast<std::size_t>(a) * dim + k] = e[k] / nrm;
  }

  Rng rng(derive_seed(seed, 0x6e6365ull));
  const double tau = cfg.temperature;
  double loss = 0.0;
  int anchors = 0;
  std::vector<double> dunit(static_cast<std::size_t>(m) * dim, 0.0);
  std::vector<double> sims(static_cast<std::size_t>(m));
  std::vector<double> probs(static_cast<std::size_t>(m));

  for (int a = 0; a < m; ++a) {
    std::vector<int> positives;
    for (int b = 0; b < m; ++b)
      if (b != a && labels[static_cast<std::size_t>(usable[static_cast<std::size_t>(b)])] ==
                        labels[static_cast<std::size_t>(usable[static_cast<std::size_t>(a)])])
        positives.push_back(b);
    if (positives.empty()) continue;  // anchor skipped
    const int pos = positives[static_cast<std::size_t>(
        rng.below(positives.size()))];

    const double* ua = unit.data() + static_cast<std::ptrdiff_t>(a) * dim;
    double max_s = -1e300;
    for (int b = 0; b < m; ++b) {
      if (b == a) continue;
      const double* ub = unit.data() + static_cast<std::ptrdiff_t>(b) * dim;
      double s = 0.0;
      for (int k = 0; k < dim; ++k) s += ua[k] * ub[k];
      sims[static_cast<std::size_t>(b)] = s / tau;
      max_s = std::max(max_s, sims[static_cast<std::size_t>(b)]);
    }
    double z = 0.0;
    for (int b = 0; b < m; ++b) {
      if (b == a) continue;
      probs[static_cast<std::size_t>(b)] =
          std::exp(sims[static_cast<std::size_t>(b)] - max_s);
      z += probs[static_cast<std::size_t>(b)];
    }
    loss += -(sims[static_cast<std::size_t>(pos)] - max_s) + std::log(z);
    ++anchors;

    if (grad != nullptr) {
      for (int b = 0; b < m; ++b) {
        if (b == a) continue;
        const double p = probs[static_cast<std::size_t>(b)] / z;
        const double ds = (p - (b == pos ? 1.0 : 0.0)) / tau;
        const double* ub = unit.data() + static_cast<std::ptrdiff_t>(b) * dim;
        double* da = dunit.data() + static_cast<std::ptrdiff_t>(a) * dim;
        double* db = dunit.data() + static_cast<std::ptrdiff_t>(b) * dim;
        for (int k = 0; k < dim; ++k) {
          da[k] += ds * ub[k];
          db[k] += ds * ua[k];
        }
      }
    }
  }
  if (anchors == 0)
    throw InvalidArgument("infonce: every anchor lacks a positive partner");
  loss /= anchors;

  if (grad != nullptr) {
    grad->assign(static_cast<std::size_t>(n) * dim, T(0));
    // Through the normalization: de = (du - u * (u . du)) / |e|.
    for (int a = 0; a < m; ++a) {
      const double* ua = unit.data() + static_cast<std::ptrdiff_t>(a) * dim;
      const double* da = dunit.data() + static_cast<std::ptrdiff_t>(a) * dim;
      double dot = 0.0;
      for (int k = 0; k < dim; ++k) dot += ua[k] * da[k];
      T* g = grad->data() +
             static_cast<std::ptrdiff_t>(usable[static_cast<std::size_t>(a)]) * dim;
      const double inv = 1.0 / (norms[static_cast<std::size_t>(a)] * anchors);
      for (int k = 0; k < dim; ++k)
        g[k] = static_cast<T>((da[k] - ua[k] * dot) * inv);
    }
  }
  return loss;
}

template double infonce(const std::vector<float>&, int, int,
                        const std::vector<std::int8_t>&, const InfoNCEConfig&,
                        std::uint64_t, std::vector<float>*);
template double infonce(const std::vector<double>&, int, int,
                        const std::vector<std::int8_t>&, const InfoNCEConfig&,
                        std::uint64_t, std::vector<double>*);

template <typename T>
double bce(const std::array<T, 2>& logits, int label,
           std::array<T, 2>* dlogits) {
  if (label != kLabelReal && label != kLabelSynthetic)
    throw InvalidArgument("bce: label must be 0 or 1");
  for (T v : logits)
    if (!std::isfinite(static_cast<double>(v)))
      throw NumericalError("bce: non-finite logit");

  const double l0 = logits[0], l1 = logits[1];
  const double mx = std::max(l0, l1);
  const double lse = mx + std::log(std::exp(l0 - mx) + std::exp(l1 - mx));
  const double loss = lse - (label == 0 ? l0 : l1);
  if (dlogits != nullptr) {
    const double p0 = std::exp(l0 - lse);
    const double p1 = std::exp(l1 - lse);
    (*dlogits)[0] = static_cast<T>(p0 - (label == 0 ? 1.0 : 0.0));
    (*dlogits)[1] = static_cast<T>(p1 - (label == 1 ? 1.0 : 0.0));
  }
  return loss;
}

template double bce(const std::array<float, 2>&, int, std::array<float, 2>*);
template double bce(const std::array<double, 2>&, int, std::array<double, 2>*);

double total_loss(double l_con, double l_ce, double lambda) {
  if (lambda < 0.0 || lambda > 1.0)
    throw InvalidArgument("total_loss: lambda must be in [0,1]");
  return lambda * l_con + (1.0 - lambda) * l_ce;
}

}  // namespace ppl
