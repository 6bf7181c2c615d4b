#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ppl/detector.hpp"
#include "ppl/losses.hpp"
#include "ppl/manifest.hpp"
#include "ppl/predictor.hpp"
#include "ppl/rpr.hpp"
#include "ppl/synth_corpus.hpp"

namespace ppl {

enum class TrainMode { kNaive, kPpl, kRprOnly, kPclOnly };
enum class OptimizerKind { kSgdMomentum, kAdam };
enum class ContrastiveKind { kMargin, kInfoNCE };

TrainMode train_mode_from_string(const std::string& s);
std::string to_string(TrainMode mode);
OptimizerKind optimizer_kind_from_string(const std::string& s);
std::string to_string(OptimizerKind kind);

struct TrainConfig {
  TrainMode mode = TrainMode::kPpl;
  double lambda = 0.3;  // contrastive weight in the total loss
  int batch_size = 16;
  int epochs = 8;
  double learning_rate = 3e-4;
  double weight_decay = 1e-4;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  std::uint64_t seed = 0;

  std::optional<RPRConfig> rpr;
  ContrastiveKind contrastive_kind = ContrastiveKind::kMargin;
  std::optional<ContrastiveConfig> contrastive;
  std::optional<InfoNCEConfig> infonce;

  DetectorConfig detector;

  // The mode gates which components actually run.
  bool rpr_active() const {
    return mode == TrainMode::kPpl || mode == TrainMode::kRprOnly;
  }
  bool contrastive_active() const {
    return mode == TrainMode::kPpl || mode == TrainMode::kPclOnly;
  }
  double effective_lambda() const { return contrastive_active() ? lambda : 0.0; }

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  double l_ce = 0.0;
  double l_con = 0.0;
  double l_total = 0.0;
  double train_accuracy = 0.0;
  double eval_accuracy = 0.0;
  double wall_time_s = 0.0;
};

struct TrainLog {
  TrainMode mode = TrainMode::kNaive;
  double lambda = 0.0;
  std::uint64_t seed = 0;
  std::vector<EpochRecord> epochs;
};

struct TrainResult {
  std::filesystem::path final_checkpoint;
  std::filesystem::path best_checkpoint;
  TrainLog log;
  double final_eval_accuracy = 0.0;
  double best_eval_accuracy = 0.0;
};

// Full training loop: RPR batch assembly where active, forward, loss
// composition, optimizer step, per-epoch evaluation, checkpoints at the
// end and at the best eval accuracy. The trajectory is a pure function of
// the config and manifests regardless of PPL_THREADS. Throws
// NumericalError (with batch index and seed) if the loss diverges.
TrainResult train(const TrainConfig& cfg, const Manifest& train_manifest,
                  const Manifest& eval_manifest,
                  const std::filesystem::path& out_dir);

struct TagMetrics {
  int n = 0;
  double accuracy = 0.0;
};

struct EvalMetrics {
  double accuracy = 0.0;
  double recall_fake = 0.0;
  double recall_real = 0.0;
  int n = 0;
  std::map<std::string, TagMetrics> per_tag;
};

struct CorruptionSpec {
  CorruptionKind kind = CorruptionKind::kGaussianBlur;
  double param = 0.0;
};

// Applies the optional corruption to every image before prediction.
EvalMetrics evaluate(const Predictor& model, const Manifest& manifest,
                     const std::optional<CorruptionSpec>& corruption = {});

void write_train_log(const std::filesystem::path& path, const TrainLog& log);

}  // namespace ppl
