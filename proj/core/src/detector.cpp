#include "ppl/detector.hpp"

#include <Eigen/Dense>

#include <cmath>

#include "ppl/rng.hpp"

namespace ppl {

namespace {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapM = Eigen::Map<Mat<T>>;
template <typename T>
using CMapM = Eigen::Map<const Mat<T>>;

constexpr double kLnEps = 1e-5;

template <typename T>
T gelu(T x) {
  return T(0.5) * x * (T(1) + std::erf(x / T(M_SQRT2)));
}

template <typename T>
T gelu_grad(T x) {
  const T cdf = T(0.5) * (T(1) + std::erf(x / T(M_SQRT2)));
  const T pdf = std::exp(T(-0.5) * x * x) / T(std::sqrt(2.0 * M_PI));
  return cdf + x * pdf;
}

// y = g .* (x - mu) * rstd + b, per token row.
template <typename T>
void layer_norm(const T* x, int rows, int dim, const std::vector<T>& g,
                const std::vector<T>& b, T* y, T* mu_out, T* rstd_out) {
  for (int t = 0; t < rows; ++t) {
    const T* xr = x + static_cast<std::ptrdiff_t>(t) * dim;
    T* yr = y + static_cast<std::ptrdiff_t>(t) * dim;
    T mu = 0;
    for (int i = 0; i < dim; ++i) mu += xr[i];
    mu /= T(dim);
    T var = 0;
    for (int i = 0; i < dim; ++i) {
      const T d = xr[i] - mu;
      var += d * d;
    }
    var /= T(dim);
    const T rstd = T(1) / std::sqrt(var + T(kLnEps));
    for (int i = 0; i < dim; ++i) yr[i] = g[i] * (xr[i] - mu) * rstd + b[i];
    mu_out[t] = mu;
    rstd_out[t] = rstd;
  }
}

// Backward of layer_norm. Adds dx into dx (accumulating), dg/db into the
// parameter gradients.
template <typename T>
void layer_norm_backward(const T* x, const T* dy, int rows, int dim,
                         const std::vector<T>& g, const T* mu, const T* rstd,
                         T* dx, std::vector<T>& dg, std::vector<T>& db) {
  for (int t = 0; t < rows; ++t) {
    const T* xr = x + static_cast<std::ptrdiff_t>(t) * dim;
    const T* dyr = dy + static_cast<std::ptrdiff_t>(t) * dim;
    T* dxr = dx + static_cast<std::ptrdiff_t>(t) * dim;
    const T m = mu[t], r = rstd[t];
    T mean_dn = 0, mean_dn_nh = 0;
    for (int i = 0; i < dim; ++i) {
      const T nh = (xr[i] - m) * r;
      const T dn = dyr[i] * g[i];
      dg[static_cast<std::size_t>(i)] += dyr[i] * nh;
      db[static_cast<std::size_t>(i)] += dyr[i];
      mean_dn += dn;
      mean_dn_nh += dn * nh;
    }
    mean_dn /= T(dim);
    mean_dn_nh /= T(dim);
    for (int i = 0; i < dim; ++i) {
      const T nh = (xr[i] - m) * r;
      const T dn = dyr[i] * g[i];
      dxr[i] += r * (dn - mean_dn - nh * mean_dn_nh);
    }
  }
}

// y = x * W^T + b. x: rows x in, W: out x in, y: rows x out.
template <typename T>
void linear(const T* x, int rows, int in, int out, const std::vector<T>& w,
            const std::vector<T>& b, T* y) {
  CMapM<T> xm(x, rows, in);
  CMapM<T> wm(w.data(), out, in);
  MapM<T> ym(y, rows, out);
  ym.noalias() = xm * wm.transpose();
  for (int t = 0; t < rows; ++t)
    for (int i = 0; i < out; ++i) ym(t, i) += b[static_cast<std::size_t>(i)];
}

// Backward of linear: accumulates dW, db and adds x-gradient into dx.
template <typename T>
void linear_backward(const T* x, const T* dy, int rows, int in, int out,
                     const std::vector<T>& w, std::vector<T>& dw,
                     std::vector<T>& db, T* dx) {
  CMapM<T> xm(x, rows, in);
  CMapM<T> dym(dy, rows, out);
  CMapM<T> wm(w.data(), out, in);
  MapM<T> dwm(dw.data(), out, in);
  dwm.noalias() += dym.transpose() * xm;
  for (int t = 0; t < rows; ++t)
    for (int i = 0; i < out; ++i)
      db[static_cast<std::size_t>(i)] += dym(t, i);
  if (dx != nullptr) {
    MapM<T> dxm(dx, rows, in);
    dxm.noalias() += dym * wm;
  }
}

template <typename T>
void fill_normal(std::vector<T>& v, Rng& rng, double stddev) {
  for (auto& x : v) x = static_cast<T>(rng.normal() * stddev);
}

}  // namespace

template struct DetectorParamsT<float>;
template struct DetectorParamsT<double>;

template <typename T>
std::vector<TensorRef<T>> tensor_refs(DetectorParamsT<T>& p) {
  const DetectorConfig& c = p.cfg;
  const int D = c.embed_dim, M = c.mlp_dim();
  std::vector<TensorRef<T>> refs;
  refs.push_back({"patch_proj.weight", {D, c.patch_dim()}, &p.patch_proj_w});
  refs.push_back({"patch_proj.bias", {D}, &p.patch_proj_b});
  refs.push_back({"cls_token", {D}, &p.cls_token});
  refs.push_back({"pos_embed", {c.tokens(), D}, &p.pos_embed});
  for (int b = 0; b < c.depth; ++b) {
    auto& blk = p.blocks[static_cast<std::size_t>(b)];
    const std::string prefix = "blocks." + std::to_string(b) + ".";
    refs.push_back({prefix + "ln1.gain", {D}, &blk.ln1_g});
    refs.push_back({prefix + "ln1.bias", {D}, &blk.ln1_b});
    refs.push_back({prefix + "attn.wq", {D, D}, &blk.wq});
    refs.push_back({prefix + "attn.bq", {D}, &blk.bq});
    refs.push_back({prefix + "attn.wk", {D, D}, &blk.wk});
    refs.push_back({prefix + "attn.bk", {D}, &blk.bk});
    refs.push_back({prefix + "attn.wv", {D, D}, &blk.wv});
    refs.push_back({prefix + "attn.bv", {D}, &blk.bv});
    refs.push_back({prefix + "attn.wo", {D, D}, &blk.wo});
    refs.push_back({prefix + "attn.bo", {D}, &blk.bo});
    refs.push_back({prefix + "ln2.gain", {D}, &blk.ln2_g});
    refs.push_back({prefix + "ln2.bias", {D}, &blk.ln2_b});
    refs.push_back({prefix + "mlp.fc1.weight", {M, D}, &blk.fc1_w});
    refs.push_back({prefix + "mlp.fc1.bias", {M}, &blk.fc1_b});
    refs.push_back({prefix + "mlp.fc2.weight", {D, M}, &blk.fc2_w});
    refs.push_back({prefix + "mlp.fc2.bias", {D}, &blk.fc2_b});
  }
  refs.push_back({"final_ln.gain", {D}, &p.final_ln_g});
  refs.push_back({"final_ln.bias", {D}, &p.final_ln_b});
  refs.push_back({"head.weight", {DetectorConfig::kNumClasses, D}, &p.head_w});
  refs.push_back({"head.bias", {DetectorConfig::kNumClasses}, &p.head_b});
  return refs;
}

template std::vector<TensorRef<float>> tensor_refs(DetectorParamsT<float>&);
template std::vector<TensorRef<double>> tensor_refs(DetectorParamsT<double>&);

std::size_t parameter_count(const DetectorConfig& cfg) {
  cfg.validate();
  DetectorParamsT<float> p = init_params<float>(cfg, 0);
  std::size_t n = 0;
  for (const auto& ref : tensor_refs(p)) n += ref.data->size();
  return n;
}

template <typename T>
DetectorParamsT<T> init_params(const DetectorConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  DetectorParamsT<T> p;
  p.cfg = cfg;
  const int D = cfg.embed_dim, M = cfg.mlp_dim();

  auto alloc = [](std::vector<T>& v, int n, T fill = T(0)) {
    v.assign(static_cast<std::size_t>(n), fill);
  };
  alloc(p.patch_proj_w, D * cfg.patch_dim());
  alloc(p.patch_proj_b, D);
  alloc(p.cls_token, D);
  alloc(p.pos_embed, cfg.tokens() * D);
  p.blocks.resize(static_cast<std::size_t>(cfg.depth));
  for (auto& blk : p.blocks) {
    alloc(blk.ln1_g, D, T(1));
    alloc(blk.ln1_b, D);
    alloc(blk.wq, D * D);
    alloc(blk.bq, D);
    alloc(blk.wk, D * D);
    alloc(blk.bk, D);
    alloc(blk.wv, D * D);
    alloc(blk.bv, D);
    alloc(blk.wo, D * D);
    alloc(blk.bo, D);
    alloc(blk.ln2_g, D, T(1));
    alloc(blk.ln2_b, D);
    alloc(blk.fc1_w, M * D);
    alloc(blk.fc1_b, M);
    alloc(blk.fc2_w, D * M);
    alloc(blk.fc2_b, D);
  }
  alloc(p.final_ln_g, D, T(1));
  alloc(p.final_ln_b, D);
  alloc(p.head_w, DetectorConfig::kNumClasses * D);
  alloc(p.head_b, DetectorConfig::kNumClasses);

  // Variance-scaled init for projections; each tensor draws from its own
  // derived stream, so the values do not depend on enumeration order.
  auto refs = tensor_refs(p);
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const TensorRef<T>& ref = refs[i];
    Rng rng(derive_seed(seed, 0x696e6974ull, i));
    const std::string& n = ref.name;
    if (n.ends_with(".bias") || n.ends_with(".bq") || n.ends_with(".bk") ||
        n.ends_with(".bv") || n.ends_with(".bo") || n.ends_with(".gain"))
      continue;  // zeros / ones already in place
    if (n == "cls_token" || n == "pos_embed") {
      fill_normal(*ref.data, rng, 0.02);
    } else {
      const int fan_in = ref.shape.size() == 2 ? ref.shape[1] : ref.shape[0];
      fill_normal(*ref.data, rng, 1.0 / std::sqrt(static_cast<double>(fan_in)));
    }
  }
  return p;
}

template DetectorParamsT<float> init_params(const DetectorConfig&,
                                            std::uint64_t);
template DetectorParamsT<double> init_params(const DetectorConfig&,
                                             std::uint64_t);

template <typename T>
DetectorParamsT<T> zero_like(const DetectorParamsT<T>& params) {
  DetectorParamsT<T> z = params;
  auto refs = tensor_refs(z);
  for (auto& ref : refs)
    std::fill(ref.data->begin(), ref.data->end(), T(0));
  return z;
}

template DetectorParamsT<float> zero_like(const DetectorParamsT<float>&);
template DetectorParamsT<double> zero_like(const DetectorParamsT<double>&);

template <typename T>
DetectorOutputT<T> forward(const DetectorParamsT<T>& params,
                           const Image& image, ForwardCacheT<T>* cache) {
  const DetectorConfig& c = params.cfg;
  if (image.height != c.image_h || image.width != c.image_w ||
      image.channels != c.channels)
    throw InvalidArgument("forward: image shape does not match config");

  const int K = c.patch_count(), Tn = c.tokens(), D = c.embed_dim;
  const int P = c.patch_size, pd = c.patch_dim(), H = c.heads,
            dh = c.head_dim(), M = c.mlp_dim();

  ForwardCacheT<T> local;
  ForwardCacheT<T>& cc = cache != nullptr ? *cache : local;

  // Patchify: row-major patches, row-major (y, x, c) inside each patch.
  cc.patches.assign(static_cast<std::size_t>(K) * pd, T(0));
  for (int k = 0; k < K; ++k) {
    const int pr = k / c.patch_cols(), pc = k % c.patch_cols();
    T* dst = cc.patches.data() + static_cast<std::ptrdiff_t>(k) * pd;
    int off = 0;
    for (int y = 0; y < P; ++y)
      for (int x = 0; x < P; ++x)
        for (int ch = 0; ch < c.channels; ++ch)
          dst[off++] = static_cast<T>(
              image.at(pr * P + y, pc * P + x, ch));
  }

  // Embed, prepend the class token, add positional embeddings.
  cc.tokens0.assign(static_cast<std::size_t>(Tn) * D, T(0));
  for (int i = 0; i < D; ++i) cc.tokens0[static_cast<std::size_t>(i)] =
      params.cls_token[static_cast<std::size_t>(i)];
  linear(cc.patches.data(), K, pd, D, params.patch_proj_w,
         params.patch_proj_b, cc.tokens0.data() + D);
  for (std::size_t i = 0; i < cc.tokens0.size(); ++i)
    cc.tokens0[i] += params.pos_embed[i];

  std::vector<T> x = cc.tokens0;
  cc.blocks.resize(static_cast<std::size_t>(c.depth));
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));

  for (int b = 0; b < c.depth; ++b) {
    const auto& blk = params.blocks[static_cast<std::size_t>(b)];
    auto& bc = cc.blocks[static_cast<std::size_t>(b)];
    bc.x_in = x;

    bc.n1.assign(static_cast<std::size_t>(Tn) * D, T(0));
    bc.n1_mu.assign(static_cast<std::size_t>(Tn), T(0));
    bc.n1_rstd.assign(static_cast<std::size_t>(Tn), T(0));
    layer_norm(bc.x_in.data(), Tn, D, blk.ln1_g, blk.ln1_b, bc.n1.data(),
               bc.n1_mu.data(), bc.n1_rstd.data());

    bc.q.assign(static_cast<std::size_t>(Tn) * D, T(0));
    bc.k.assign(static_cast<std::size_t>(Tn) * D, T(0));
    bc.v.assign(static_cast<std::size_t>(Tn) * D, T(0));
    linear(bc.n1.data(), Tn, D, D, blk.wq, blk.bq, bc.q.data());
    linear(bc.n1.data(), Tn, D, D, blk.wk, blk.bk, bc.k.data());
    linear(bc.n1.data(), Tn, D, D, blk.wv, blk.bv, bc.v.data());

    bc.attn.assign(static_cast<std::size_t>(H) * Tn * Tn, T(0));
    bc.ctx.assign(static_cast<std::size_t>(Tn) * D, T(0));
    for (int h = 0; h < H; ++h) {
      // Head slices are strided views of q/k/v.
      using Stride = Eigen::Stride<Eigen::Dynamic, 1>;
      Eigen::Map<const Mat<T>, 0, Stride> qh(bc.q.data() + h * dh, Tn, dh,
                                             Stride(D, 1));
      Eigen::Map<const Mat<T>, 0, Stride> kh(bc.k.data() + h * dh, Tn, dh,
                                             Stride(D, 1));
      Eigen::Map<const Mat<T>, 0, Stride> vh(bc.v.data() + h * dh, Tn, dh,
                                             Stride(D, 1));
      MapM<T> a(bc.attn.data() + static_cast<std::ptrdiff_t>(h) * Tn * Tn, Tn,
                Tn);
      a.noalias() = qh * kh.transpose() * scale;
      for (int t = 0; t < Tn; ++t) {
        T row_max = a(t, 0);
        for (int j = 1; j < Tn; ++j) row_max = std::max(row_max, a(t, j));
        T sum = 0;
        for (int j = 0; j < Tn; ++j) {
          a(t, j) = std::exp(a(t, j) - row_max);
          sum += a(t, j);
        }
        for (int j = 0; j < Tn; ++j) a(t, j) /= sum;
      }
      Eigen::Map<Mat<T>, 0, Stride> ch(bc.ctx.data() + h * dh, Tn, dh,
                                       Stride(D, 1));
      ch.noalias() = a * vh;
    }

    // Projection + residual.
    std::vector<T> attn_out(static_cast<std::size_t>(Tn) * D, T(0));
    linear(bc.ctx.data(), Tn, D, D, blk.wo, blk.bo, attn_out.data());
    bc.x_mid = bc.x_in;
    for (std::size_t i = 0; i < bc.x_mid.size(); ++i)
      bc.x_mid[i] += attn_out[i];

    bc.n2.assign(static_cast<std::size_t>(Tn) * D, T(0));
    bc.n2_mu.assign(static_cast<std::size_t>(Tn), T(0));
    bc.n2_rstd.assign(static_cast<std::size_t>(Tn), T(0));
    layer_norm(bc.x_mid.data(), Tn, D, blk.ln2_g, blk.ln2_b, bc.n2.data(),
               bc.n2_mu.data(), bc.n2_rstd.data());

    bc.h1.assign(static_cast<std::size_t>(Tn) * M, T(0));
    linear(bc.n2.data(), Tn, D, M, blk.fc1_w, blk.fc1_b, bc.h1.data());
    bc.a1.resize(bc.h1.size());
    for (std::size_t i = 0; i < bc.h1.size(); ++i) bc.a1[i] = gelu(bc.h1[i]);

    std::vector<T> mlp_out(static_cast<std::size_t>(Tn) * D, T(0));
    linear(bc.a1.data(), Tn, M, D, blk.fc2_w, blk.fc2_b, mlp_out.data());
    x = bc.x_mid;
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += mlp_out[i];
  }

  cc.x_final = x;
  cc.nf.assign(static_cast<std::size_t>(Tn) * D, T(0));
  cc.nf_mu.assign(static_cast<std::size_t>(Tn), T(0));
  cc.nf_rstd.assign(static_cast<std::size_t>(Tn), T(0));
  layer_norm(cc.x_final.data(), Tn, D, params.final_ln_g, params.final_ln_b,
             cc.nf.data(), cc.nf_mu.data(), cc.nf_rstd.data());

  DetectorOutputT<T> out;
  out.img_embedding.assign(static_cast<std::size_t>(D), T(0));
  if (c.pooling == Pooling::kClsToken) {
    for (int i = 0; i < D; ++i)
      out.img_embedding[static_cast<std::size_t>(i)] =
          cc.nf[static_cast<std::size_t>(i)];
  } else {
    for (int k = 0; k < K; ++k)
      for (int i = 0; i < D; ++i)
        out.img_embedding[static_cast<std::size_t>(i)] +=
            cc.nf[static_cast<std::size_t>(k + 1) * D + i];
    for (auto& v : out.img_embedding) v /= T(K);
  }
  out.patch_embeddings.assign(cc.nf.begin() + D, cc.nf.end());

  for (int i = 0; i < DetectorConfig::kNumClasses; ++i) {
    T acc = params.head_b[static_cast<std::size_t>(i)];
    for (int j = 0; j < D; ++j)
      acc += params.head_w[static_cast<std::size_t>(i) * D + j] *
             out.img_embedding[static_cast<std::size_t>(j)];
    out.logits[static_cast<std::size_t>(i)] = acc;
  }

  for (T v : out.logits)
    if (!std::isfinite(static_cast<double>(v)))
      throw NumericalError("forward: non-finite logits");
  for (T v : out.img_embedding)
    if (!std::isfinite(static_cast<double>(v)))
      throw NumericalError("forward: non-finite image embedding");
  return out;
}

template DetectorOutputT<float> forward(const DetectorParamsT<float>&,
                                        const Image&, ForwardCacheT<float>*);
template DetectorOutputT<double> forward(const DetectorParamsT<double>&,
                                         const Image&, ForwardCacheT<double>*);

template <typename T>
void backward(const DetectorParamsT<T>& params, const ForwardCacheT<T>& cache,
              const std::array<T, 2>& dlogits,
              const std::vector<T>& dpatch_embeddings,
              DetectorParamsT<T>& grads) {
  const DetectorConfig& c = params.cfg;
  const int K = c.patch_count(), Tn = c.tokens(), D = c.embed_dim;
  const int H = c.heads, dh = c.head_dim(), M = c.mlp_dim(), pd = c.patch_dim();
  if (!dpatch_embeddings.empty() &&
      dpatch_embeddings.size() != static_cast<std::size_t>(K) * D)
    throw InvalidArgument("backward: dpatch_embeddings has wrong size");

  // Head: logits = head_w * img_emb + head_b.
  std::vector<T> img_emb(static_cast<std::size_t>(D), T(0));
  if (c.pooling == Pooling::kClsToken) {
    for (int i = 0; i < D; ++i)
      img_emb[static_cast<std::size_t>(i)] = cache.nf[static_cast<std::size_t>(i)];
  } else {
    for (int k = 0; k < K; ++k)
      for (int i = 0; i < D; ++i)
        img_emb[static_cast<std::size_t>(i)] +=
            cache.nf[static_cast<std::size_t>(k + 1) * D + i];
    for (auto& v : img_emb) v /= T(K);
  }
  std::vector<T> dimg(static_cast<std::size_t>(D), T(0));
  for (int i = 0; i < DetectorConfig::kNumClasses; ++i) {
    const T dl = dlogits[static_cast<std::size_t>(i)];
    grads.head_b[static_cast<std::size_t>(i)] += dl;
    for (int j = 0; j < D; ++j) {
      grads.head_w[static_cast<std::size_t>(i) * D + j] +=
          dl * img_emb[static_cast<std::size_t>(j)];
      dimg[static_cast<std::size_t>(j)] +=
          dl * params.head_w[static_cast<std::size_t>(i) * D + j];
    }
  }

  // Gradient on the final-norm output tokens.
  std::vector<T> dnf(static_cast<std::size_t>(Tn) * D, T(0));
  if (c.pooling == Pooling::kClsToken) {
    for (int i = 0; i < D; ++i) dnf[static_cast<std::size_t>(i)] = dimg[static_cast<std::size_t>(i)];
  } else {
    for (int k = 0; k < K; ++k)
      for (int i = 0; i < D; ++i)
        dnf[static_cast<std::size_t>(k + 1) * D + i] += dimg[static_cast<std::size_t>(i)] / T(K);
  }
  if (!dpatch_embeddings.empty())
    for (std::size_t i = 0; i < dpatch_embeddings.size(); ++i)
      dnf[static_cast<std::size_t>(D) + i] += dpatch_embeddings[i];

  std::vector<T> dx(static_cast<std::size_t>(Tn) * D, T(0));
  layer_norm_backward(cache.x_final.data(), dnf.data(), Tn, D,
                      params.final_ln_g, cache.nf_mu.data(),
                      cache.nf_rstd.data(), dx.data(), grads.final_ln_g,
                      grads.final_ln_b);

  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  for (int b = c.depth - 1; b >= 0; --b) {
    const auto& blk = params.blocks[static_cast<std::size_t>(b)];
    auto& gblk = grads.blocks[static_cast<std::size_t>(b)];
    const auto& bc = cache.blocks[static_cast<std::size_t>(b)];

    // x_out = x_mid + mlp(n2(x_mid)); dx currently holds d(x_out).
    std::vector<T> da1(static_cast<std::size_t>(Tn) * M, T(0));
    linear_backward(bc.a1.data(), dx.data(), Tn, M, D, blk.fc2_w, gblk.fc2_w,
                    gblk.fc2_b, da1.data());
    std::vector<T> dh1(static_cast<std::size_t>(Tn) * M);
    for (std::size_t i = 0; i < dh1.size(); ++i)
      dh1[i] = da1[i] * gelu_grad(bc.h1[i]);
    std::vector<T> dn2(static_cast<std::size_t>(Tn) * D, T(0));
    linear_backward(bc.n2.data(), dh1.data(), Tn, D, M, blk.fc1_w, gblk.fc1_w,
                    gblk.fc1_b, dn2.data());
    // Residual: d(x_mid) = d(x_out) + LN2-path gradient.
    layer_norm_backward(bc.x_mid.data(), dn2.data(), Tn, D, blk.ln2_g,
                        bc.n2_mu.data(), bc.n2_rstd.data(), dx.data(),
                        gblk.ln2_g, gblk.ln2_b);

    // x_mid = x_in + proj(ctx); dx holds d(x_mid).
    std::vector<T> dctx(static_cast<std::size_t>(Tn) * D, T(0));
    linear_backward(bc.ctx.data(), dx.data(), Tn, D, D, blk.wo, gblk.wo,
                    gblk.bo, dctx.data());

    std::vector<T> dq(static_cast<std::size_t>(Tn) * D, T(0));
    std::vector<T> dk(static_cast<std::size_t>(Tn) * D, T(0));
    std::vector<T> dv(static_cast<std::size_t>(Tn) * D, T(0));
    for (int h = 0; h < H; ++h) {
      using Stride = Eigen::Stride<Eigen::Dynamic, 1>;
      Eigen::Map<const Mat<T>, 0, Stride> qh(bc.q.data() + h * dh, Tn, dh,
                                             Stride(D, 1));
      Eigen::Map<const Mat<T>, 0, Stride> kh(bc.k.data() + h * dh, Tn, dh,
                                             Stride(D, 1));
      Eigen::Map<const Mat<T>, 0, Stride> vh(bc.v.data() + h * dh, Tn, dh,
                                             Stride(D, 1));
      Eigen::Map<const Mat<T>, 0, Stride> dctx_h(dctx.data() + h * dh, Tn, dh,
                                                 Stride(D, 1));
      CMapM<T> a(bc.attn.data() + static_cast<std::ptrdiff_t>(h) * Tn * Tn, Tn,
                 Tn);

      Mat<T> dA(Tn, Tn);
      dA.noalias() = dctx_h * vh.transpose();
      // Softmax backward per row: dS = A .* (dA - rowsum(dA .* A)).
      Mat<T> dS(Tn, Tn);
      for (int t = 0; t < Tn; ++t) {
        T dot = 0;
        for (int j = 0; j < Tn; ++j) dot += dA(t, j) * a(t, j);
        for (int j = 0; j < Tn; ++j)
          dS(t, j) = a(t, j) * (dA(t, j) - dot);
      }
      Eigen::Map<Mat<T>, 0, Stride> dqh(dq.data() + h * dh, Tn, dh,
                                        Stride(D, 1));
      Eigen::Map<Mat<T>, 0, Stride> dkh(dk.data() + h * dh, Tn, dh,
                                        Stride(D, 1));
      Eigen::Map<Mat<T>, 0, Stride> dvh(dv.data() + h * dh, Tn, dh,
                                        Stride(D, 1));
      dqh.noalias() = dS * kh * scale;
      dkh.noalias() = dS.transpose() * qh * scale;
      dvh.noalias() = a.transpose() * dctx_h;
    }

    std::vector<T> dn1(static_cast<std::size_t>(Tn) * D, T(0));
    linear_backward(bc.n1.data(), dq.data(), Tn, D, D, blk.wq, gblk.wq,
                    gblk.bq, dn1.data());
    linear_backward(bc.n1.data(), dk.data(), Tn, D, D, blk.wk, gblk.wk,
                    gblk.bk, dn1.data());
    linear_backward(bc.n1.data(), dv.data(), Tn, D, D, blk.wv, gblk.wv,
                    gblk.bv, dn1.data());
    // Residual: d(x_in) = d(x_mid) + LN1-path gradient.
    layer_norm_backward(bc.x_in.data(), dn1.data(), Tn, D, blk.ln1_g,
                        bc.n1_mu.data(), bc.n1_rstd.data(), dx.data(),
                        gblk.ln1_g, gblk.ln1_b);
  }

  // Embedding stage: tokens0 = [cls; patches * Wp^T + bp] + pos.
  for (std::size_t i = 0; i < dx.size(); ++i) grads.pos_embed[i] += dx[i];
  for (int i = 0; i < D; ++i)
    grads.cls_token[static_cast<std::size_t>(i)] += dx[static_cast<std::size_t>(i)];
  linear_backward(cache.patches.data(), dx.data() + D, K, pd, D,
                  params.patch_proj_w, grads.patch_proj_w, grads.patch_proj_b,
                  static_cast<T*>(nullptr));
}

template void backward(const DetectorParamsT<float>&,
                       const ForwardCacheT<float>&, const std::array<float, 2>&,
                       const std::vector<float>&, DetectorParamsT<float>&);
template void backward(const DetectorParamsT<double>&,
                       const ForwardCacheT<double>&,
                       const std::array<double, 2>&, const std::vector<double>&,
                       DetectorParamsT<double>&);

Prediction prediction_from_logits(const std::array<float, 2>& logits) {
  Prediction p;
  p.logits = logits;
  p.delta = logits[kLabelSynthetic] - logits[kLabelReal];
  p.label = p.delta > 0.0f ? kLabelSynthetic : kLabelReal;  // tie -> real
  return p;
}

Prediction predict(const DetectorParamsT<float>& params, const Image& image) {
  const DetectorOutputT<float> out = forward(params, image);
  return prediction_from_logits(out.logits);
}

std::vector<float> attention_map(const DetectorParamsT<float>& params,
                                 const Image& image) {
  const DetectorConfig& c = params.cfg;
  if (c.depth < 1)
    throw InvalidArgument("attention_map: requires depth >= 1");
  ForwardCacheT<float> cache;
  forward(params, image, &cache);

  const int K = c.patch_count(), Tn = c.tokens(), H = c.heads;
  const auto& attn = cache.blocks.back().attn;
  std::vector<float> weights(static_cast<std::size_t>(K), 0.0f);
  for (int h = 0; h < H; ++h) {
    const float* row =
        attn.data() + static_cast<std::ptrdiff_t>(h) * Tn * Tn;  // cls row
    for (int k = 0; k < K; ++k)
      weights[static_cast<std::size_t>(k)] += row[k + 1];
  }
  float sum = 0.0f;
  for (float w : weights) sum += w;
  if (sum <= 0.0f) throw NumericalError("attention_map: degenerate weights");
  for (float& w : weights) w /= sum;
  return weights;
}

}  // namespace ppl
