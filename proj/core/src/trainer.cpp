#include "ppl/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "ppl/checkpoint.hpp"
#include "ppl/image_io.hpp"
#include "ppl/parallel.hpp"
#include "ppl/rng.hpp"

namespace ppl {

using nlohmann::json;

namespace {
constexpr std::uint64_t kStreamInit = 0x696e6974ull;
constexpr std::uint64_t kStreamEpoch = 0x65706f63ull;
constexpr std::uint64_t kStreamAug = 0x61756774ull;
constexpr std::uint64_t kStreamPairs = 0x70726173ull;
}  // namespace

TrainMode train_mode_from_string(const std::string& s) {
  if (s == "naive") return TrainMode::kNaive;
  if (s == "ppl") return TrainMode::kPpl;
  if (s == "rpr_only") return TrainMode::kRprOnly;
  if (s == "pcl_only") return TrainMode::kPclOnly;
  throw InvalidArgument("unknown train mode: " + s);
}

std::string to_string(TrainMode mode) {
  switch (mode) {
    case TrainMode::kNaive:
      return "naive";
    case TrainMode::kPpl:
      return "ppl";
    case TrainMode::kRprOnly:
      return "rpr_only";
    case TrainMode::kPclOnly:
      return "pcl_only";
  }
  throw InvalidArgument("unknown TrainMode");
}

OptimizerKind optimizer_kind_from_string(const std::string& s) {
  if (s == "sgd_momentum") return OptimizerKind::kSgdMomentum;
  if (s == "adam") return OptimizerKind::kAdam;
  throw InvalidArgument("unknown optimizer: " + s);
}

std::string to_string(OptimizerKind kind) {
  return kind == OptimizerKind::kSgdMomentum ? "sgd_momentum" : "adam";
}

void TrainConfig::validate() const {
  if (lambda < 0.0 || lambda > 1.0)
    throw InvalidArgument("TrainConfig: lambda must be in [0,1]");
  if (batch_size < 2 || batch_size % 2 != 0)
    throw InvalidArgument("TrainConfig: batch_size must be even and >= 2");
  if (epochs < 1) throw InvalidArgument("TrainConfig: epochs must be >= 1");
  if (learning_rate < 0.0)
    throw InvalidArgument("TrainConfig: negative learning rate");
  if (weight_decay < 0.0)
    throw InvalidArgument("TrainConfig: negative weight decay");
  detector.validate();
  if (rpr_active()) {
    if (!rpr) throw InvalidArgument("TrainConfig: mode requires an rpr config");
    rpr->validate();
    if (rpr->patch_size != detector.patch_size)
      throw InvalidArgument("TrainConfig: rpr/detector patch size mismatch");
  }
  if (contrastive_active()) {
    if (contrastive_kind == ContrastiveKind::kMargin) {
      if (!contrastive)
        throw InvalidArgument("TrainConfig: mode requires a contrastive config");
      contrastive->validate();
    } else {
      if (!infonce)
        throw InvalidArgument("TrainConfig: mode requires an infonce config");
      infonce->validate();
    }
  }
}

namespace {

// Decoupled weight decay, applied to rank-2 tensors only.
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double lr, double wd)
      : kind_(kind), lr_(lr), wd_(wd) {}

  void init(DetectorParams& params) {
    auto refs = tensor_refs(params);
    slot_a_.resize(refs.size());
    slot_b_.resize(refs.size());
    decay_.resize(refs.size());
    for (std::size_t i = 0; i < refs.size(); ++i) {
      slot_a_[i].assign(refs[i].data->size(), 0.0f);
      slot_b_[i].assign(refs[i].data->size(), 0.0f);
      decay_[i] = refs[i].shape.size() == 2;
    }
  }

  void step(std::vector<TensorRef<float>>& params,
            std::vector<TensorRef<float>>& grads) {
    ++t_;
    if (kind_ == OptimizerKind::kSgdMomentum) {
      for (std::size_t i = 0; i < params.size(); ++i) {
        auto& theta = *params[i].data;
        const auto& g = *grads[i].data;
        auto& v = slot_a_[i];
        const float wd = decay_[i] ? static_cast<float>(wd_) : 0.0f;
        for (std::size_t j = 0; j < theta.size(); ++j) {
          v[j] = 0.9f * v[j] + g[j] + wd * theta[j];
          theta[j] -= static_cast<float>(lr_) * v[j];
        }
      }
    } else {
      const double bc1 = 1.0 - std::pow(0.9, t_);
      const double bc2 = 1.0 - std::pow(0.999, t_);
      for (std::size_t i = 0; i < params.size(); ++i) {
        auto& theta = *params[i].data;
        const auto& g = *grads[i].data;
        auto& m = slot_a_[i];
        auto& v = slot_b_[i];
        const float wd = decay_[i] ? static_cast<float>(wd_) : 0.0f;
        for (std::size_t j = 0; j < theta.size(); ++j) {
          m[j] = 0.9f * m[j] + 0.1f * g[j];
          v[j] = 0.999f * v[j] + 0.001f * g[j] * g[j];
          const double mhat = m[j] / bc1;
          const double vhat = v[j] / bc2;
          theta[j] -= static_cast<float>(
              lr_ * (mhat / (std::sqrt(vhat) + 1e-8) + wd * theta[j]));
        }
      }
    }
  }

 private:
  OptimizerKind kind_;
  double lr_, wd_;
  long t_ = 0;
  std::vector<std::vector<float>> slot_a_, slot_b_;
  std::vector<bool> decay_;
};

struct ImageCache {
  std::vector<Image8> images;

  static ImageCache load(const Manifest& man) {
    ImageCache cache;
    cache.images.resize(man.records.size());
    parallel_for(man.records.size(), [&](std::size_t i) {
      cache.images[i] = read_png(man.image_file(man.records[i]));
    });
    return cache;
  }

  Image get(std::size_t i) const { return dequantize_u8(images[i]); }
};

void check_geometry(const TrainConfig& cfg, const Manifest& man,
                    const char* which) {
  const CorpusInfo& info = man.info;
  if (info.height != cfg.detector.image_h ||
      info.width != cfg.detector.image_w ||
      info.channels != cfg.detector.channels ||
      info.patch_size != cfg.detector.patch_size)
    throw InvalidArgument(std::string("train: detector config does not match ") +
                          which + " corpus geometry");
}

double eval_accuracy_cached(const DetectorParams& params, const Manifest& man,
                            const ImageCache& cache) {
  std::vector<int> correct(man.records.size(), 0);
  parallel_for(man.records.size(), [&](std::size_t i) {
    const Prediction p = predict(params, cache.get(i));
    correct[i] = p.label == man.records[i].image_label ? 1 : 0;
  });
  const int total = std::accumulate(correct.begin(), correct.end(), 0);
  return man.records.empty()
             ? 0.0
             : static_cast<double>(total) / static_cast<double>(man.records.size());
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const Manifest& train_manifest,
                  const Manifest& eval_manifest,
                  const std::filesystem::path& out_dir) {
  cfg.validate();
  check_geometry(cfg, train_manifest, "train");
  check_geometry(cfg, eval_manifest, "eval");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("train: cannot create " + out_dir.string());

  const ImageCache train_cache = ImageCache::load(train_manifest);
  const ImageCache eval_cache = ImageCache::load(eval_manifest);

  std::vector<std::size_t> real_idx, fake_idx;
  for (std::size_t i = 0; i < train_manifest.records.size(); ++i) {
    if (train_manifest.records[i].image_label == kLabelSynthetic)
      fake_idx.push_back(i);
    else
      real_idx.push_back(i);
  }
  if (real_idx.empty() || fake_idx.empty())
    throw InvalidArgument("train: corpus must contain both classes");

  const int B = cfg.batch_size;
  const int half = B / 2;
  const int steps_per_epoch = static_cast<int>(
      std::min(real_idx.size(), fake_idx.size()) / static_cast<std::size_t>(half));
  if (steps_per_epoch < 1)
    throw InvalidArgument("train: batch size exceeds the per-class pool");

  const PatchGrid grid(cfg.detector.image_h, cfg.detector.image_w,
                       cfg.detector.patch_size);
  const int K = grid.patch_count();
  const int D = cfg.detector.embed_dim;
  const double lambda_eff = cfg.effective_lambda();

  DetectorParams params =
      init_params<float>(cfg.detector, derive_seed(cfg.seed, kStreamInit));
  Optimizer opt(cfg.optimizer, cfg.learning_rate, cfg.weight_decay);
  opt.init(params);

  DetectorParams grad_total = zero_like(params);
  std::vector<DetectorParams> grad_img(static_cast<std::size_t>(B),
                                       zero_like(params));
  auto params_refs = tensor_refs(params);
  auto grad_total_refs = tensor_refs(grad_total);
  std::vector<std::vector<TensorRef<float>>> grad_img_refs;
  for (auto& g : grad_img) grad_img_refs.push_back(tensor_refs(g));

  std::vector<ForwardCache> caches(static_cast<std::size_t>(B));
  std::vector<DetectorOutput> outputs(static_cast<std::size_t>(B));

  TrainResult result;
  result.log.mode = cfg.mode;
  result.log.lambda = cfg.lambda;
  result.log.seed = cfg.seed;
  result.best_eval_accuracy = -1.0;
  result.final_checkpoint = out_dir / "checkpoint_final.ckpt";
  result.best_checkpoint = out_dir / "checkpoint_best.ckpt";

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t_start = std::chrono::steady_clock::now();
    Rng rng_epoch(derive_seed(cfg.seed, kStreamEpoch,
                              static_cast<std::uint64_t>(epoch)));
    std::vector<std::size_t> reals = real_idx, fakes = fake_idx, donors = real_idx;
    rng_epoch.shuffle(reals);
    rng_epoch.shuffle(fakes);
    rng_epoch.shuffle(donors);  // pairing permutation for RPR replacements

    double sum_ce = 0.0, sum_con = 0.0, sum_total = 0.0;
    long correct = 0, seen = 0;

    for (int step = 0; step < steps_per_epoch; ++step) {
      // Label-balanced batch: half real, half fake.
      std::vector<Image> batch_images(static_cast<std::size_t>(B));
      std::vector<BatchSample> batch(static_cast<std::size_t>(B));
      std::vector<Image> donor_images(static_cast<std::size_t>(B));
      std::vector<const Image*> donor_ptrs(static_cast<std::size_t>(B),
                                           nullptr);
      for (int s = 0; s < half; ++s) {
        batch_images[static_cast<std::size_t>(s)] = train_cache.get(
            reals[static_cast<std::size_t>(step * half + s)]);
        batch[static_cast<std::size_t>(s)] = {
            &batch_images[static_cast<std::size_t>(s)], kLabelReal};
      }
      for (int s = 0; s < half; ++s) {
        const int slot = half + s;
        batch_images[static_cast<std::size_t>(slot)] = train_cache.get(
            fakes[static_cast<std::size_t>(step * half + s)]);
        batch[static_cast<std::size_t>(slot)] = {
            &batch_images[static_cast<std::size_t>(slot)], kLabelSynthetic};
      }

      const std::uint64_t step_tag =
          (static_cast<std::uint64_t>(epoch) << 32) |
          static_cast<std::uint64_t>(step);

      std::vector<AugmentedSample> augmented;
      if (cfg.rpr_active()) {
        for (int slot = 0; slot < B; ++slot) {
          const std::size_t donor = donors[(static_cast<std::size_t>(step) *
                                                static_cast<std::size_t>(half) +
                                            static_cast<std::size_t>(slot)) %
                                           donors.size()];
          donor_images[static_cast<std::size_t>(slot)] =
              train_cache.get(donor);
          donor_ptrs[static_cast<std::size_t>(slot)] =
              &donor_images[static_cast<std::size_t>(slot)];
        }
        augmented = apply_batch(batch, donor_ptrs, *cfg.rpr,
                                derive_seed(cfg.seed, kStreamAug, step_tag));
      } else {
        augmented.resize(static_cast<std::size_t>(B));
        for (int slot = 0; slot < B; ++slot) {
          auto& a = augmented[static_cast<std::size_t>(slot)];
          a.image = batch_images[static_cast<std::size_t>(slot)];
          a.image_label = batch[static_cast<std::size_t>(slot)].image_label;
          a.patch_labels = PatchLabelMap(
              grid, a.image_label == kLabelSynthetic ? std::int8_t{1}
                                                     : std::int8_t{0});
        }
      }

      parallel_for(static_cast<std::size_t>(B), [&](std::size_t i) {
        outputs[i] = forward(params, augmented[i].image, &caches[i]);
      });

      // Image-level cross entropy (mean over the batch).
      double l_ce = 0.0;
      std::vector<std::array<float, 2>> dlogits(static_cast<std::size_t>(B));
      for (int i = 0; i < B; ++i) {
        std::array<float, 2> dl{};
        l_ce += bce(outputs[static_cast<std::size_t>(i)].logits,
                    augmented[static_cast<std::size_t>(i)].image_label, &dl);
        const float scale = static_cast<float>((1.0 - lambda_eff) / B);
        dlogits[static_cast<std::size_t>(i)] = {dl[0] * scale, dl[1] * scale};
      }
      l_ce /= B;

      // Patch-level contrastive loss over the pooled tokens.
      double l_con = 0.0;
      std::vector<float> demb;
      if (cfg.contrastive_active()) {
        std::vector<float> pooled(static_cast<std::size_t>(B) * K * D);
        std::vector<std::int8_t> pooled_labels(
            static_cast<std::size_t>(B) * K);
        for (int i = 0; i < B; ++i) {
          std::copy(outputs[static_cast<std::size_t>(i)].patch_embeddings.begin(),
                    outputs[static_cast<std::size_t>(i)].patch_embeddings.end(),
                    pooled.begin() + static_cast<std::ptrdiff_t>(i) * K * D);
          std::copy(
              augmented[static_cast<std::size_t>(i)].patch_labels.labels.begin(),
              augmented[static_cast<std::size_t>(i)].patch_labels.labels.end(),
              pooled_labels.begin() + static_cast<std::ptrdiff_t>(i) * K);
        }
        const std::uint64_t pair_seed =
            derive_seed(cfg.seed, kStreamPairs, step_tag);
        if (cfg.contrastive_kind == ContrastiveKind::kMargin)
          l_con = margin_contrastive(pooled, B * K, D, pooled_labels,
                                     *cfg.contrastive, pair_seed, &demb);
        else
          l_con = infonce(pooled, B * K, D, pooled_labels, *cfg.infonce,
                          pair_seed, &demb);
      }

      const double l_total = total_loss(l_con, l_ce, lambda_eff);
      // Loss decomposition holds at every step by construction; keep the
      // check hot so a regression cannot slip in.
      if (l_total != lambda_eff * l_con + (1.0 - lambda_eff) * l_ce)
        throw NumericalError("train: loss decomposition violated");
      if (!std::isfinite(l_total))
        throw NumericalError("train: non-finite loss at epoch " +
                             std::to_string(epoch) + " step " +
                             std::to_string(step) + " (seed " +
                             std::to_string(cfg.seed) + ")");

      parallel_for(static_cast<std::size_t>(B), [&](std::size_t i) {
        for (auto& ref : grad_img_refs[i])
          std::fill(ref.data->begin(), ref.data->end(), 0.0f);
        std::vector<float> dpatch;
        if (!demb.empty()) {
          dpatch.assign(demb.begin() + static_cast<std::ptrdiff_t>(i) * K * D,
                        demb.begin() +
                            static_cast<std::ptrdiff_t>(i + 1) * K * D);
          for (auto& v : dpatch) v *= static_cast<float>(lambda_eff);
        }
        backward(params, caches[i], dlogits[i], dpatch, grad_img[i]);
      });

      // Fixed-order reduction keeps results identical for any thread count.
      for (std::size_t r = 0; r < grad_total_refs.size(); ++r) {
        auto& dst = *grad_total_refs[r].data;
        std::fill(dst.begin(), dst.end(), 0.0f);
        for (int i = 0; i < B; ++i) {
          const auto& src = *grad_img_refs[static_cast<std::size_t>(i)][r].data;
          for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
        }
      }
      opt.step(params_refs, grad_total_refs);

      sum_ce += l_ce;
      sum_con += l_con;
      sum_total += l_total;
      for (int i = 0; i < B; ++i) {
        const Prediction p =
            prediction_from_logits(outputs[static_cast<std::size_t>(i)].logits);
        if (p.label == augmented[static_cast<std::size_t>(i)].image_label)
          ++correct;
        ++seen;
      }
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.l_ce = sum_ce / steps_per_epoch;
    rec.l_con = sum_con / steps_per_epoch;
    rec.l_total = sum_total / steps_per_epoch;
    rec.train_accuracy =
        seen > 0 ? static_cast<double>(correct) / static_cast<double>(seen)
                 : 0.0;
    rec.eval_accuracy = eval_accuracy_cached(params, eval_manifest, eval_cache);
    rec.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                      t_start)
            .count();
    result.log.epochs.push_back(rec);

    if (rec.eval_accuracy > result.best_eval_accuracy) {
      result.best_eval_accuracy = rec.eval_accuracy;
      save_checkpoint(params, result.best_checkpoint);
    }
  }

  save_checkpoint(params, result.final_checkpoint);
  result.final_eval_accuracy = result.log.epochs.back().eval_accuracy;
  write_train_log(out_dir / "train_log.jsonl", result.log);
  return result;
}

EvalMetrics evaluate(const Predictor& model, const Manifest& manifest,
                     const std::optional<CorruptionSpec>& corruption) {
  const std::size_t n = manifest.records.size();
  std::vector<int> predicted(n, 0);
  parallel_for(n, [&](std::size_t i) {
    Image img = load_image(manifest, manifest.records[i]);
    if (corruption) img = corrupt(img, corruption->kind, corruption->param);
    predicted[i] = model.predict(img).label;
  });

  EvalMetrics metrics;
  metrics.n = static_cast<int>(n);
  long correct = 0, fake_total = 0, fake_hit = 0, real_total = 0, real_hit = 0;
  std::map<std::string, std::pair<int, int>> tag_counts;  // tag -> {n, correct}
  for (std::size_t i = 0; i < n; ++i) {
    const SampleRecord& rec = manifest.records[i];
    const bool ok = predicted[i] == rec.image_label;
    correct += ok;
    if (rec.image_label == kLabelSynthetic) {
      ++fake_total;
      fake_hit += ok;
    } else {
      ++real_total;
      real_hit += ok;
    }
    auto& tc = tag_counts[rec.generator_tag];
    ++tc.first;
    tc.second += ok;
  }
  metrics.accuracy = n > 0 ? static_cast<double>(correct) / n : 0.0;
  metrics.recall_fake =
      fake_total > 0 ? static_cast<double>(fake_hit) / fake_total : 0.0;
  metrics.recall_real =
      real_total > 0 ? static_cast<double>(real_hit) / real_total : 0.0;
  for (const auto& [tag, tc] : tag_counts) {
    if (tc.first == 0) continue;  // zero-sample tags are omitted
    metrics.per_tag[tag] = {tc.first,
                            static_cast<double>(tc.second) / tc.first};
  }
  return metrics;
}

void write_train_log(const std::filesystem::path& path, const TrainLog& log) {
  std::ofstream out(path);
  if (!out) throw IoError("write_train_log: cannot open " + path.string());
  json run;
  run["type"] = "run";
  run["mode"] = to_string(log.mode);
  run["lambda"] = log.lambda;
  run["seed"] = log.seed;
  out << run.dump() << "\n";
  for (const EpochRecord& rec : log.epochs) {
    json j;
    j["type"] = "epoch";
    j["epoch"] = rec.epoch;
    j["l_ce"] = rec.l_ce;
    j["l_con"] = rec.l_con;
    j["l_total"] = rec.l_total;
    j["train_accuracy"] = rec.train_accuracy;
    j["eval_accuracy"] = rec.eval_accuracy;
    j["wall_time_s"] = rec.wall_time_s;
    out << j.dump() << "\n";
  }
  if (!out) throw IoError("write_train_log: write failed " + path.string());
}

}  // namespace ppl
