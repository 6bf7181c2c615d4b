#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ppl/artifact_profile.hpp"
#include "ppl/image.hpp"
#include "ppl/patch_grid.hpp"

namespace ppl {

// One corpus entry. image_path is relative to the manifest's directory.
struct SampleRecord {
  std::string image_path;
  int image_label = 0;  // kLabelReal / kLabelSynthetic
  std::optional<std::vector<std::int8_t>> patch_labels;  // row-major, length K
  std::string generator_tag;
  std::uint64_t seed = 0;
};

// Corpus-wide geometry and provenance, stored in the corpus.json sidecar.
struct CorpusInfo {
  int height = 0;
  int width = 0;
  int channels = 0;
  int patch_size = 0;
  std::uint64_t master_seed = 0;
  std::vector<ArtifactProfile> profiles;
  std::vector<std::pair<std::string, int>> split_sizes;

  PatchGrid grid() const { return PatchGrid(height, width, patch_size); }
};

// One split of a corpus: the records of a manifest.<split>.jsonl plus the
// sidecar info. base_dir anchors the relative image paths.
struct Manifest {
  CorpusInfo info;
  std::string split;
  std::vector<SampleRecord> records;
  std::filesystem::path base_dir;

  std::filesystem::path image_file(const SampleRecord& rec) const {
    return base_dir / rec.image_path;
  }
};

void write_corpus_info(const std::filesystem::path& path,
                       const CorpusInfo& info);
CorpusInfo read_corpus_info(const std::filesystem::path& path);

void write_manifest_records(const std::filesystem::path& path,
                            const std::vector<SampleRecord>& records);
std::vector<SampleRecord> read_manifest_records(
    const std::filesystem::path& path);

// Loads manifest JSONL plus the corpus.json sidecar next to it. The split
// name is recovered from the file name (manifest.<split>.jsonl).
Manifest load_manifest(const std::filesystem::path& manifest_path);

// Loads a record's PNG and converts to unit-interval floats.
Image load_image(const Manifest& manifest, const SampleRecord& rec);

}  // namespace ppl
