#pragma once

#include <filesystem>
#include <vector>

#include "ppl/synth_corpus.hpp"
#include "ppl/trainer.hpp"

namespace ppl {

struct AttributionOptions {
  std::vector<int> mask_sizes{14, 28, 56};
  int histogram_bins = 20;
  std::uint64_t tile_seed = 0;
};

// One experiment = corpus recipe + training recipe + analysis options.
// Parsed strictly: unknown keys anywhere are rejected before any side
// effect, so typos cannot silently fall back to defaults.
struct ExperimentConfig {
  std::filesystem::path out_dir;
  std::filesystem::path corpus_dir;  // defaults to out_dir / "corpus"
  CorpusConfig corpus;
  TrainConfig train;
  AttributionOptions attribution;
};

ExperimentConfig load_experiment_config(const std::filesystem::path& path);

// TrainConfig round trip (the resolved config is written next to runs).
std::string train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const std::string& text);

}  // namespace ppl
