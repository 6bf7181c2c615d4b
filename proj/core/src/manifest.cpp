#include "ppl/manifest.hpp"

#include <fstream>

#include <json.hpp>

#include "ppl/image_io.hpp"

namespace ppl {

using nlohmann::json;

namespace {

json profile_to_json(const ArtifactProfile& p) {
  json j;
  j["name"] = p.name;
  j["kind"] = to_string(p.kind);
  j["depth"] = p.depth;
  j["freq_x"] = p.freq_x;
  j["freq_y"] = p.freq_y;
  j["phase"] = p.phase;
  j["levels"] = p.levels;
  if (p.dominant_enabled) {
    json d;
    d["amplitude"] = p.dominant.amplitude;
    d["region_rows"] = p.dominant.region_rows;
    d["region_cols"] = p.dominant.region_cols;
    d["placement"] =
        p.dominant.placement == DominantPlacement::kFixed ? "fixed" : "random";
    d["row"] = p.dominant.row;
    d["col"] = p.dominant.col;
    j["dominant"] = d;
  } else {
    j["dominant"] = nullptr;
  }
  return j;
}

ArtifactProfile profile_from_json(const json& j) {
  ArtifactProfile p;
  p.name = j.at("name").get<std::string>();
  p.kind = fingerprint_kind_from_string(j.at("kind").get<std::string>());
  p.depth = j.value("depth", 1.0);
  p.freq_x = j.value("freq_x", 0.45);
  p.freq_y = j.value("freq_y", 0.38);
  p.phase = j.value("phase", 0.7);
  p.levels = j.value("levels", 12);
  if (j.contains("dominant") && !j.at("dominant").is_null()) {
    const json& d = j.at("dominant");
    p.dominant_enabled = true;
    p.dominant.amplitude = d.value("amplitude", 1.0);
    p.dominant.region_rows = d.value("region_rows", 1);
    p.dominant.region_cols = d.value("region_cols", 1);
    p.dominant.placement = d.value("placement", std::string("fixed")) == "random"
                               ? DominantPlacement::kRandom
                               : DominantPlacement::kFixed;
    p.dominant.row = d.value("row", 0);
    p.dominant.col = d.value("col", 0);
  }
  p.validate();
  return p;
}

}  // namespace

void write_corpus_info(const std::filesystem::path& path,
                       const CorpusInfo& info) {
  json j;
  j["height"] = info.height;
  j["width"] = info.width;
  j["channels"] = info.channels;
  j["patch_size"] = info.patch_size;
  j["master_seed"] = info.master_seed;
  j["profiles"] = json::array();
  for (const auto& p : info.profiles) j["profiles"].push_back(profile_to_json(p));
  json sizes = json::object();
  for (const auto& [split, n] : info.split_sizes) sizes[split] = n;
  j["split_sizes"] = sizes;

  std::ofstream out(path);
  if (!out) throw IoError("write_corpus_info: cannot open " + path.string());
  out << j.dump(2) << "\n";
  if (!out) throw IoError("write_corpus_info: write failed " + path.string());
}

CorpusInfo read_corpus_info(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("read_corpus_info: cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError("read_corpus_info: " + std::string(e.what()));
  }
  try {
    CorpusInfo info;
    info.height = j.at("height").get<int>();
    info.width = j.at("width").get<int>();
    info.channels = j.at("channels").get<int>();
    info.patch_size = j.at("patch_size").get<int>();
    info.master_seed = j.at("master_seed").get<std::uint64_t>();
    for (const auto& p : j.at("profiles"))
      info.profiles.push_back(profile_from_json(p));
    for (const auto& [split, n] : j.at("split_sizes").items())
      info.split_sizes.emplace_back(split, n.get<int>());
    return info;
  } catch (const json::exception& e) {
    throw FormatError("read_corpus_info: " + std::string(e.what()));
  }
}

void write_manifest_records(const std::filesystem::path& path,
                            const std::vector<SampleRecord>& records) {
  std::ofstream out(path);
  if (!out)
    throw IoError("write_manifest_records: cannot open " + path.string());
  for (const auto& rec : records) {
    json j;
    j["image_path"] = rec.image_path;
    j["image_label"] = rec.image_label;
    if (rec.patch_labels) {
      json arr = json::array();
      for (std::int8_t v : *rec.patch_labels) arr.push_back(static_cast<int>(v));
      j["patch_labels"] = arr;
    } else {
      j["patch_labels"] = nullptr;
    }
    j["generator_tag"] = rec.generator_tag;
    j["seed"] = rec.seed;
    out << j.dump() << "\n";
  }
  if (!out)
    throw IoError("write_manifest_records: write failed " + path.string());
}

std::vector<SampleRecord> read_manifest_records(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in)
    throw IoError("read_manifest_records: cannot open " + path.string());
  std::vector<SampleRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw FormatError("manifest line " + std::to_string(line_no) + ": " +
                        e.what());
    }
    try {
      SampleRecord rec;
      rec.image_path = j.at("image_path").get<std::string>();
      rec.image_label = j.at("image_label").get<int>();
      if (j.contains("patch_labels") && !j.at("patch_labels").is_null()) {
        std::vector<std::int8_t> labels;
        for (const auto& v : j.at("patch_labels"))
          labels.push_back(static_cast<std::int8_t>(v.get<int>()));
        rec.patch_labels = std::move(labels);
      }
      rec.generator_tag = j.value("generator_tag", std::string());
      rec.seed = j.value("seed", std::uint64_t{0});
      records.push_back(std::move(rec));
    } catch (const json::exception& e) {
      throw FormatError("manifest line " + std::to_string(line_no) + ": " +
                        e.what());
    }
  }
  return records;
}

Manifest load_manifest(const std::filesystem::path& manifest_path) {
  Manifest man;
  man.base_dir = manifest_path.parent_path();
  man.records = read_manifest_records(manifest_path);
  man.info = read_corpus_info(man.base_dir / "corpus.json");

  // manifest.<split>.jsonl
  const std::string stem = manifest_path.filename().string();
  const auto first = stem.find('.');
  const auto last = stem.rfind('.');
  if (first != std::string::npos && last != std::string::npos && last > first)
    man.split = stem.substr(first + 1, last - first - 1);
  return man;
}

Image load_image(const Manifest& manifest, const SampleRecord& rec) {
  return read_png_unit(manifest.image_file(rec));
}

}  // namespace ppl
