#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "ppl/common.hpp"
#include "ppl/image.hpp"

namespace ppl {

enum class Pooling { kClsToken, kMeanPatch };

struct DetectorConfig {
  int image_h = 112;
  int image_w = 112;
  int channels = 3;
  int patch_size = 14;
  int embed_dim = 64;
  int depth = 4;  // 0 is allowed (patchify + embed only, used by tests)
  int heads = 4;
  double mlp_ratio = 4.0;
  Pooling pooling = Pooling::kClsToken;
  static constexpr int kNumClasses = 2;

  void validate() const {
    if (image_h <= 0 || image_w <= 0 || channels <= 0 || patch_size <= 0)
      throw InvalidArgument("DetectorConfig: dimensions must be positive");
    if (image_h % patch_size != 0 || image_w % patch_size != 0)
      throw InvalidArgument("DetectorConfig: patch_size must divide dims");
    if (embed_dim <= 0 || heads <= 0 || depth < 0)
      throw InvalidArgument("DetectorConfig: bad architecture sizes");
    if (embed_dim % heads != 0)
      throw InvalidArgument("DetectorConfig: embed_dim % heads != 0");
    if (mlp_ratio <= 0.0) throw InvalidArgument("DetectorConfig: bad mlp_ratio");
  }

  int patch_rows() const { return image_h / patch_size; }
  int patch_cols() const { return image_w / patch_size; }
  int patch_count() const { return patch_rows() * patch_cols(); }
  int tokens() const { return patch_count() + 1; }
  int patch_dim() const { return patch_size * patch_size * channels; }
  int mlp_dim() const { return static_cast<int>(mlp_ratio * embed_dim); }
  int head_dim() const { return embed_dim / heads; }

  friend bool operator==(const DetectorConfig&, const DetectorConfig&) =
      default;
};

// All trainable tensors. Row-major throughout; linear weights are stored
// (out x in) and applied as y = x * W^T + b.
template <typename T>
struct DetectorParamsT {
  DetectorConfig cfg;

  std::vector<T> patch_proj_w;  // D x patch_dim
  std::vector<T> patch_proj_b;  // D
  std::vector<T> cls_token;     // D
  std::vector<T> pos_embed;     // (K+1) x D

  struct Block {
    std::vector<T> ln1_g, ln1_b;                    // D
    std::vector<T> wq, wk, wv, wo;                  // D x D
    std::vector<T> bq, bk, bv, bo;                  // D
    std::vector<T> ln2_g, ln2_b;                    // D
    std::vector<T> fc1_w;                           // M x D
    std::vector<T> fc1_b;                           // M
    std::vector<T> fc2_w;                           // D x M
    std::vector<T> fc2_b;                           // D
  };
  std::vector<Block> blocks;

  std::vector<T> final_ln_g, final_ln_b;  // D
  std::vector<T> head_w;                  // 2 x D
  std::vector<T> head_b;                  // 2
};

// Mutable view of one named tensor; the enumeration order is the
// checkpoint serialization order.
template <typename T>
struct TensorRef {
  std::string name;
  std::vector<int> shape;
  std::vector<T>* data;
};

template <typename T>
std::vector<TensorRef<T>> tensor_refs(DetectorParamsT<T>& params);

std::size_t parameter_count(const DetectorConfig& cfg);

template <typename T>
struct DetectorOutputT {
  std::vector<T> img_embedding;     // D
  std::vector<T> patch_embeddings;  // K x D, row-major, patch-token order
  std::array<T, 2> logits{};        // [real, synthetic]
};

// Intermediate activations kept for the backward pass (and for attention
// extraction). One instance per concurrently processed image.
template <typename T>
struct ForwardCacheT {
  std::vector<T> patches;  // K x patch_dim
  std::vector<T> tokens0;  // (K+1) x D after embed + pos
  struct BlockCache {
    std::vector<T> x_in;            // tokens entering the block
    std::vector<T> n1, n1_mu, n1_rstd;
    std::vector<T> q, k, v;         // T x D
    std::vector<T> attn;            // heads x T x T softmax probabilities
    std::vector<T> ctx;             // T x D
    std::vector<T> x_mid;           // after attention residual
    std::vector<T> n2, n2_mu, n2_rstd;
    std::vector<T> h1, a1;          // T x M pre/post activation
  };
  std::vector<BlockCache> blocks;
  std::vector<T> x_final;  // tokens entering the final norm
  std::vector<T> nf, nf_mu, nf_rstd;
};

template <typename T>
DetectorParamsT<T> init_params(const DetectorConfig& cfg, std::uint64_t seed);

template <typename T>
DetectorParamsT<T> zero_like(const DetectorParamsT<T>& params);

// Pre-norm transformer forward pass. Throws NumericalError if the outputs
// are not finite. `cache` may be null when no backward pass follows.
template <typename T>
DetectorOutputT<T> forward(const DetectorParamsT<T>& params,
                           const Image& image,
                           ForwardCacheT<T>* cache = nullptr);

// Accumulates parameter gradients for the upstream gradients dlogits and
// dpatch_embeddings (K x D; may be empty for zero). `grads` must have the
// same shapes as `params`.
template <typename T>
void backward(const DetectorParamsT<T>& params, const ForwardCacheT<T>& cache,
              const std::array<T, 2>& dlogits,
              const std::vector<T>& dpatch_embeddings,
              DetectorParamsT<T>& grads);

struct Prediction {
  int label = 0;                  // kLabelReal / kLabelSynthetic
  std::array<float, 2> logits{};  // [real, synthetic]
  float delta = 0.0f;             // logits[synthetic] - logits[real]
};

Prediction prediction_from_logits(const std::array<float, 2>& logits);
Prediction predict(const DetectorParamsT<float>& params, const Image& image);

// Last block's class-token attention over the K patch tokens, averaged
// across heads and renormalized; requires depth >= 1.
std::vector<float> attention_map(const DetectorParamsT<float>& params,
                                 const Image& image);

using DetectorParams = DetectorParamsT<float>;
using DetectorOutput = DetectorOutputT<float>;
using ForwardCache = ForwardCacheT<float>;

extern template struct DetectorParamsT<float>;
extern template struct DetectorParamsT<double>;

}  // namespace ppl
