#include "ppl/experiment_config.hpp"

#include <fstream>
#include <set>

#include <json.hpp>

namespace ppl {

using nlohmann::json;

namespace {

void check_keys(const json& obj, const std::set<std::string>& allowed,
                const std::string& context) {
  if (!obj.is_object())
    throw FormatError("config: " + context + " must be a JSON object");
  for (const auto& [key, value] : obj.items())
    if (allowed.find(key) == allowed.end())
      throw FormatError("config: unknown key \"" + key + "\" in " + context);
}

ArtifactProfile parse_profile(const json& j) {
  check_keys(j, {"name", "kind", "depth", "freq_x", "freq_y", "phase",
                 "levels", "dominant"},
             "profile");
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
    check_keys(d, {"amplitude", "region_rows", "region_cols", "placement",
                   "row", "col"},
               "profile.dominant");
    p.dominant_enabled = true;
    p.dominant.amplitude = d.value("amplitude", 1.0);
    p.dominant.region_rows = d.value("region_rows", 1);
    p.dominant.region_cols = d.value("region_cols", 1);
    const std::string placement = d.value("placement", std::string("fixed"));
    if (placement == "fixed")
      p.dominant.placement = DominantPlacement::kFixed;
    else if (placement == "random")
      p.dominant.placement = DominantPlacement::kRandom;
    else
      throw FormatError("config: profile.dominant.placement must be "
                        "\"fixed\" or \"random\"");
    p.dominant.row = d.value("row", 0);
    p.dominant.col = d.value("col", 0);
  }
  p.validate();
  return p;
}

CorpusConfig parse_corpus(const json& j) {
  check_keys(j, {"height", "width", "channels", "patch_size", "master_seed",
                 "profiles", "splits"},
             "corpus");
  CorpusConfig c;
  c.height = j.value("height", 112);
  c.width = j.value("width", 112);
  c.channels = j.value("channels", 3);
  c.patch_size = j.value("patch_size", 14);
  c.master_seed = j.value("master_seed", std::uint64_t{0});
  if (j.contains("profiles"))
    for (const auto& pj : j.at("profiles")) c.profiles.push_back(parse_profile(pj));
  if (!j.contains("splits"))
    throw FormatError("config: corpus.splits is required");
  for (const auto& [split, sj] : j.at("splits").items()) {
    check_keys(sj, {"real", "fake"}, "corpus.splits." + split);
    SplitSpec spec;
    spec.real_count = sj.value("real", 0);
    if (sj.contains("fake")) {
      for (const auto& fj : sj.at("fake")) {
        check_keys(fj, {"profile", "count"}, "corpus.splits." + split + ".fake");
        FakeSpec fs;
        fs.profile = fj.at("profile").get<std::string>();
        fs.count = fj.at("count").get<int>();
        spec.fakes.push_back(fs);
      }
    }
    c.splits[split] = spec;
  }
  c.validate();
  return c;
}

RPRConfig parse_rpr(const json& j, const CorpusConfig& corpus) {
  check_keys(j, {"apply_prob", "ratio", "patch_size", "variant",
                 "dropout_rate", "strength", "profile"},
             "train.rpr");
  RPRConfig r;
  r.apply_prob = j.value("apply_prob", 0.9);
  r.ratio = j.value("ratio", 0.5);
  r.patch_size = j.value("patch_size", corpus.patch_size);
  r.variant = rpr_variant_from_string(j.value("variant", std::string("random")));
  r.dropout_rate = j.value("dropout_rate", 0.15);
  r.strength = j.value("strength", 0.25);
  if (!j.contains("profile"))
    throw FormatError("config: train.rpr.profile is required");
  r.profile = corpus.profile_by_name(j.at("profile").get<std::string>());
  r.validate();
  return r;
}

DetectorConfig parse_detector(const json& j, const CorpusConfig& corpus) {
  check_keys(j, {"embed_dim", "depth", "heads", "mlp_ratio", "pooling"},
             "train.detector");
  DetectorConfig d;
  d.image_h = corpus.height;
  d.image_w = corpus.width;
  d.channels = corpus.channels;
  d.patch_size = corpus.patch_size;
  d.embed_dim = j.value("embed_dim", 64);
  d.depth = j.value("depth", 4);
  d.heads = j.value("heads", 4);
  d.mlp_ratio = j.value("mlp_ratio", 4.0);
  const std::string pooling = j.value("pooling", std::string("cls"));
  if (pooling == "cls")
    d.pooling = Pooling::kClsToken;
  else if (pooling == "mean")
    d.pooling = Pooling::kMeanPatch;
  else
    throw FormatError("config: train.detector.pooling must be \"cls\" or "
                      "\"mean\"");
  d.validate();
  return d;
}

TrainConfig parse_train(const json& j, const CorpusConfig& corpus) {
  check_keys(j, {"mode", "lambda", "batch_size", "epochs", "learning_rate",
                 "weight_decay", "optimizer", "seed", "rpr", "contrastive",
                 "detector"},
             "train");
  TrainConfig t;
  t.mode = train_mode_from_string(j.value("mode", std::string("ppl")));
  t.lambda = j.value("lambda", 0.3);
  t.batch_size = j.value("batch_size", 16);
  t.epochs = j.value("epochs", 8);
  t.learning_rate = j.value("learning_rate", 3e-4);
  t.weight_decay = j.value("weight_decay", 1e-4);
  t.optimizer =
      optimizer_kind_from_string(j.value("optimizer", std::string("adam")));
  t.seed = j.value("seed", std::uint64_t{0});
  if (j.contains("rpr") && !j.at("rpr").is_null())
    t.rpr = parse_rpr(j.at("rpr"), corpus);
  if (j.contains("contrastive") && !j.at("contrastive").is_null()) {
    const json& cj = j.at("contrastive");
    check_keys(cj, {"kind", "margin", "distance", "pair_normalization",
                    "max_pairs", "temperature"},
               "train.contrastive");
    const std::string kind = cj.value("kind", std::string("margin"));
    if (kind == "margin") {
      t.contrastive_kind = ContrastiveKind::kMargin;
      ContrastiveConfig cc;
      cc.margin = cj.value("margin", 1.0);
      cc.distance = pair_distance_from_string(
          cj.value("distance", std::string("euclidean")));
      cc.normalization = pair_normalization_from_string(
          cj.value("pair_normalization", std::string("mean")));
      if (cj.contains("max_pairs")) {
        if (cj.at("max_pairs").is_null())
          cc.max_pairs = std::nullopt;
        else
          cc.max_pairs = cj.at("max_pairs").get<int>();
      }
      cc.validate();
      t.contrastive = cc;
    } else if (kind == "infonce") {
      t.contrastive_kind = ContrastiveKind::kInfoNCE;
      InfoNCEConfig ic;
      ic.temperature = cj.value("temperature", 0.5);
      ic.validate();
      t.infonce = ic;
    } else {
      throw FormatError("config: train.contrastive.kind must be \"margin\" "
                        "or \"infonce\"");
    }
  }
  t.detector = j.contains("detector") ? parse_detector(j.at("detector"), corpus)
                                      : parse_detector(json::object(), corpus);
  t.validate();
  return t;
}

AttributionOptions parse_attribution(const json& j) {
  check_keys(j, {"mask_sizes", "histogram_bins", "tile_seed"}, "attribution");
  AttributionOptions a;
  if (j.contains("mask_sizes"))
    a.mask_sizes = j.at("mask_sizes").get<std::vector<int>>();
  a.histogram_bins = j.value("histogram_bins", 20);
  a.tile_seed = j.value("tile_seed", std::uint64_t{0});
  if (a.histogram_bins < 1)
    throw FormatError("config: attribution.histogram_bins must be >= 1");
  return a;
}

}  // namespace

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in)
    throw IoError("load_experiment_config: cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    // nlohmann reports line/column in the message.
    throw FormatError("config: " + std::string(e.what()));
  }

  check_keys(j, {"out_dir", "corpus_dir", "corpus", "train", "attribution"},
             "config root");
  ExperimentConfig cfg;
  try {
    if (!j.contains("out_dir"))
      throw FormatError("config: out_dir is required");
    cfg.out_dir = j.at("out_dir").get<std::string>();
    if (!j.contains("corpus"))
      throw FormatError("config: corpus section is required");
    cfg.corpus = parse_corpus(j.at("corpus"));
    cfg.corpus_dir = j.contains("corpus_dir")
                         ? std::filesystem::path(
                               j.at("corpus_dir").get<std::string>())
                         : cfg.out_dir / "corpus";
    if (j.contains("train"))
      cfg.train = parse_train(j.at("train"), cfg.corpus);
    else
      cfg.train = parse_train(json::object(), cfg.corpus);
    if (j.contains("attribution"))
      cfg.attribution = parse_attribution(j.at("attribution"));
  } catch (const json::exception& e) {
    throw FormatError("config: " + std::string(e.what()));
  }
  return cfg;
}

std::string train_config_to_json(const TrainConfig& cfg) {
  json j;
  j["mode"] = to_string(cfg.mode);
  j["lambda"] = cfg.lambda;
  j["batch_size"] = cfg.batch_size;
  j["epochs"] = cfg.epochs;
  j["learning_rate"] = cfg.learning_rate;
  j["weight_decay"] = cfg.weight_decay;
  j["optimizer"] = to_string(cfg.optimizer);
  j["seed"] = cfg.seed;
  if (cfg.rpr) {
    json r;
    r["apply_prob"] = cfg.rpr->apply_prob;
    r["ratio"] = cfg.rpr->ratio;
    r["patch_size"] = cfg.rpr->patch_size;
    r["variant"] = to_string(cfg.rpr->variant);
    r["dropout_rate"] = cfg.rpr->dropout_rate;
    r["strength"] = cfg.rpr->strength;
    r["profile"] = cfg.rpr->profile.name;
    j["rpr"] = r;
  } else {
    j["rpr"] = nullptr;
  }
  if (cfg.contrastive_kind == ContrastiveKind::kMargin && cfg.contrastive) {
    json c;
    c["kind"] = "margin";
    c["margin"] = cfg.contrastive->margin;
    c["distance"] = cfg.contrastive->distance == PairDistance::kEuclidean
                        ? "euclidean"
                        : "cosine";
    c["pair_normalization"] =
        cfg.contrastive->normalization == PairNormalization::kMean ? "mean"
                                                                   : "sum";
    if (cfg.contrastive->max_pairs)
      c["max_pairs"] = *cfg.contrastive->max_pairs;
    else
      c["max_pairs"] = nullptr;
    j["contrastive"] = c;
  } else if (cfg.contrastive_kind == ContrastiveKind::kInfoNCE && cfg.infonce) {
    j["contrastive"] = {{"kind", "infonce"},
                        {"temperature", cfg.infonce->temperature}};
  } else {
    j["contrastive"] = nullptr;
  }
  json d;
  d["embed_dim"] = cfg.detector.embed_dim;
  d["depth"] = cfg.detector.depth;
  d["heads"] = cfg.detector.heads;
  d["mlp_ratio"] = cfg.detector.mlp_ratio;
  d["pooling"] = cfg.detector.pooling == Pooling::kClsToken ? "cls" : "mean";
  j["detector"] = d;
  return j.dump(2);
}

TrainConfig train_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError("train config: " + std::string(e.what()));
  }
  // Reuse the experiment parser with a placeholder corpus so rpr profiles
  // resolve; callers that need profiles should go through
  // load_experiment_config instead.
  CorpusConfig corpus;
  corpus.splits["train"] = SplitSpec{1, {}};
  if (j.contains("rpr") && !j.at("rpr").is_null())
    throw FormatError(
        "train config: standalone parsing does not resolve rpr profiles");
  return parse_train(j, corpus);
}

}  // namespace ppl
