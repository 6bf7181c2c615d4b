#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include "ppl/attribution.hpp"
#include "ppl/checkpoint.hpp"
#include "ppl/experiment_config.hpp"
#include "ppl/image_io.hpp"
#include "ppl/manifest.hpp"
#include "ppl/parallel.hpp"
#include "ppl/synth_corpus.hpp"
#include "ppl/trainer.hpp"
#include "svg_plot.hpp"

namespace {

using nlohmann::json;
using namespace ppl;

// Exit codes are a stable contract: 0 success, 2 config/usage, 3 I/O,
// 4 numerical failure.
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitNumeric = 4;

json metrics_to_json(const EvalMetrics& m) {
  json j;
  j["accuracy"] = m.accuracy;
  j["recall_fake"] = m.recall_fake;
  j["recall_real"] = m.recall_real;
  j["n"] = m.n;
  json tags = json::object();
  for (const auto& [tag, tm] : m.per_tag)
    tags[tag] = {{"n", tm.n}, {"accuracy", tm.accuracy}};
  j["per_tag"] = tags;
  return j;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string());
  out << text;
  if (!out) throw IoError("write failed " + path.string());
}

// ---------------------------------------------------------------------
// gen-corpus
// ---------------------------------------------------------------------

int cmd_gen_corpus(const std::string& config_path, const std::string& out_dir) {
  const ExperimentConfig cfg = load_experiment_config(config_path);
  const std::filesystem::path dir =
      out_dir.empty() ? cfg.corpus_dir : std::filesystem::path(out_dir);
  const auto manifests = build_corpus(cfg.corpus, dir);
  std::cout << "corpus written to " << dir.string() << "\n";
  for (const auto& [split, man] : manifests) {
    int fake = 0;
    for (const auto& rec : man.records)
      fake += rec.image_label == kLabelSynthetic;
    std::cout << "  " << split << ": " << man.records.size() << " records ("
              << fake << " synthetic), manifest." << split << ".jsonl\n";
  }
  return 0;
}

// ---------------------------------------------------------------------
// train
// ---------------------------------------------------------------------

int cmd_train(const std::string& config_path, const std::string& mode_override,
              std::int64_t seed_override, const std::string& out_override,
              const std::string& corpus_override,
              const std::string& eval_split) {
  ExperimentConfig cfg = load_experiment_config(config_path);
  if (!mode_override.empty())
    cfg.train.mode = train_mode_from_string(mode_override);
  if (seed_override >= 0)
    cfg.train.seed = static_cast<std::uint64_t>(seed_override);
  if (!corpus_override.empty()) cfg.corpus_dir = corpus_override;
  cfg.train.validate();

  const Manifest train_man =
      load_manifest(cfg.corpus_dir / "manifest.train.jsonl");
  const Manifest eval_man =
      load_manifest(cfg.corpus_dir / ("manifest." + eval_split + ".jsonl"));

  std::filesystem::path run_dir =
      out_override.empty()
          ? cfg.out_dir / ("run_" + to_string(cfg.train.mode) + "_seed" +
                           std::to_string(cfg.train.seed))
          : std::filesystem::path(out_override);
  std::error_code ec;
  std::filesystem::create_directories(run_dir, ec);
  if (ec) throw IoError("cannot create " + run_dir.string());
  write_text(run_dir / "train_config.json",
             train_config_to_json(cfg.train) + "\n");

  const TrainResult result = train(cfg.train, train_man, eval_man, run_dir);
  json summary;
  summary["final_eval_accuracy"] = result.final_eval_accuracy;
  summary["best_eval_accuracy"] = result.best_eval_accuracy;
  summary["checkpoint"] = result.final_checkpoint.string();
  summary["best_checkpoint"] = result.best_checkpoint.string();
  summary["log"] = (run_dir / "train_log.jsonl").string();
  std::cout << summary.dump() << "\n";
  return 0;
}

// ---------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------

json eval_one(const DetectorPredictor& model, const Manifest& man,
              const std::optional<CorruptionSpec>& spec, bool force) {
  json rec;
  if (spec) {
    rec["kind"] = to_string(spec->kind);
    rec["param"] = spec->param;
    if (spec->kind == CorruptionKind::kJpeg && !jpeg_supported()) {
      rec["supported"] = false;  // declared optional without a codec
      return rec;
    }
    rec["supported"] = true;
  } else {
    rec["kind"] = nullptr;
    rec["param"] = nullptr;
    rec["supported"] = true;
  }

  EvalMetrics metrics;
  if (spec && force) {
    // --force bypasses the sweep-range contract of corrupt().
    struct ForcedEval {
      const DetectorPredictor& model;
      CorruptionSpec spec;
    };
    const std::size_t n = man.records.size();
    std::vector<int> predicted(n, 0);
    parallel_for(n, [&](std::size_t i) {
      Image img = load_image(man, man.records[i]);
      switch (spec->kind) {
        case CorruptionKind::kGaussianBlur:
          img = gaussian_blur(img, spec->param);
          break;
        case CorruptionKind::kResize: {
          const int sh = std::max(
              1, static_cast<int>(std::floor(spec->param * img.height)));
          const int sw = std::max(
              1, static_cast<int>(std::floor(spec->param * img.width)));
          const int h = img.height, w = img.width;
          img = resize_bilinear(resize_bilinear(img, sh, sw), h, w);
          break;
        }
        case CorruptionKind::kJpeg:
          img = jpeg_roundtrip(img,
                               static_cast<int>(std::lround(spec->param)));
          break;
      }
      predicted[i] = model.predict(img).label;
    });
    // Aggregate identically to evaluate().
    metrics.n = static_cast<int>(n);
    long correct = 0, ft = 0, fh = 0, rt = 0, rh = 0;
    std::map<std::string, std::pair<int, int>> tags;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& r = man.records[i];
      const bool ok = predicted[i] == r.image_label;
      correct += ok;
      if (r.image_label == kLabelSynthetic) {
        ++ft;
        fh += ok;
      } else {
        ++rt;
        rh += ok;
      }
      auto& t = tags[r.generator_tag];
      ++t.first;
      t.second += ok;
    }
    metrics.accuracy = n ? static_cast<double>(correct) / n : 0.0;
    metrics.recall_fake = ft ? static_cast<double>(fh) / ft : 0.0;
    metrics.recall_real = rt ? static_cast<double>(rh) / rt : 0.0;
    for (auto& [tag, t] : tags)
      metrics.per_tag[tag] = {t.first, static_cast<double>(t.second) / t.first};
  } else {
    metrics = evaluate(model, man, spec);
  }
  rec["metrics"] = metrics_to_json(metrics);
  return rec;
}

int cmd_eval(const std::string& ckpt_path, const std::string& manifest_path,
             double blur, double resize, int jpeg_q, const std::string& sweep,
             bool force, const std::string& out_path) {
  const DetectorPredictor model{std::filesystem::path(ckpt_path)};
  const Manifest man = load_manifest(manifest_path);

  std::ostringstream out;
  if (!sweep.empty()) {
    const CorruptionKind kind = corruption_kind_from_string(sweep);
    std::vector<double> params;
    switch (kind) {
      case CorruptionKind::kGaussianBlur:
        params = {0.0, 1.0, 2.0, 3.0};
        break;
      case CorruptionKind::kResize:
        params = {0.5, 0.75, 1.0, 1.25, 1.5};
        break;
      case CorruptionKind::kJpeg:
        params = {100, 90, 80, 70, 60};
        break;
    }
    for (double p : params)
      out << eval_one(model, man, CorruptionSpec{kind, p}, false).dump()
          << "\n";
  } else {
    int given = (blur >= 0) + (resize >= 0) + (jpeg_q >= 0);
    if (given > 1)
      throw InvalidArgument("eval: give at most one of --blur/--resize/--jpeg");
    std::optional<CorruptionSpec> spec;
    if (blur >= 0) {
      if (!force && blur > 3.0)
        throw InvalidArgument("eval: --blur outside [0,3] (use --force)");
      spec = CorruptionSpec{CorruptionKind::kGaussianBlur, blur};
    } else if (resize >= 0) {
      if (!force && (resize < 0.5 || resize > 1.5))
        throw InvalidArgument("eval: --resize outside [0.5,1.5] (use --force)");
      spec = CorruptionSpec{CorruptionKind::kResize, resize};
    } else if (jpeg_q >= 0) {
      if (!force && (jpeg_q < 60 || jpeg_q > 100))
        throw InvalidArgument("eval: --jpeg outside {60..100} (use --force)");
      spec = CorruptionSpec{CorruptionKind::kJpeg,
                            static_cast<double>(jpeg_q)};
    }
    out << eval_one(model, man, spec, force).dump() << "\n";
  }
  std::cout << out.str();
  if (!out_path.empty()) write_text(out_path, out.str());
  return 0;
}

// ---------------------------------------------------------------------
// cde
// ---------------------------------------------------------------------

int cmd_cde(const std::string& ckpt_path, const std::string& manifest_path,
            const std::string& out_dir, bool per_image, bool aggregate,
            int limit, int bins) {
  const DetectorPredictor model{std::filesystem::path(ckpt_path)};
  const Manifest man = load_manifest(manifest_path);
  const PatchGrid grid = man.info.grid();
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir);
  if (!per_image && !aggregate) aggregate = true;

  if (per_image) {
    int n = static_cast<int>(man.records.size());
    if (limit > 0) n = std::min(n, limit);
    for (int i = 0; i < n; ++i) {
      const Image img = load_image(man, man.records[i]);
      const CDEMap map = cde_map(model, img, grid);
      const auto norm = normalize_cde(map);
      char base[32];
      std::snprintf(base, sizeof(base), "cde_%05d", i);
      write_cde_csv(std::filesystem::path(out_dir) / (std::string(base) + ".csv"),
                    map, norm);
      write_cde_pgm(std::filesystem::path(out_dir) / (std::string(base) + ".pgm"),
                    grid, norm);
    }
    std::cout << "wrote " << n << " per-image CDE map(s) to " << out_dir
              << "\n";
  }
  if (aggregate) {
    const CdeAggregate agg = corpus_cde_report(model, man, grid, bins);
    const auto path = std::filesystem::path(out_dir) / "cde_aggregate.json";
    write_cde_aggregate_json(path, agg);
    std::cout << "aggregate over " << agg.n_images << " fake image(s): "
              << path.string() << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------------
// occlude
// ---------------------------------------------------------------------

int cmd_occlude(const std::string& ckpt_path, const std::string& manifest_path,
                const std::string& out_csv, std::vector<int> sizes) {
  const DetectorPredictor model{std::filesystem::path(ckpt_path)};
  const Manifest man = load_manifest(manifest_path);
  if (sizes.empty()) sizes = {14, 28, 56};

  std::vector<Image> fakes;
  for (const auto& rec : man.records)
    if (rec.image_label == kLabelSynthetic)
      fakes.push_back(load_image(man, rec));
  if (fakes.empty()) throw InvalidArgument("occlude: manifest has no fakes");

  const OcclusionResult res = occlusion_recall_curve(model, fakes, sizes);

  std::ofstream out(out_csv);
  if (!out) throw IoError("cannot open " + out_csv);
  out << "mask_size,row,col,recall,drop\n";
  char buf[128];
  for (const auto& e : res.entries) {
    std::snprintf(buf, sizeof(buf), "%d,%d,%d,%.9g,%.9g\n", e.mask_size, e.row,
                  e.col, e.recall, e.drop);
    out << buf;
  }
  if (!out) throw IoError("write failed " + out_csv);

  json summary;
  summary["baseline_recall"] = res.baseline_recall;
  summary["mean_drop"] = res.mean_drop;
  summary["max_drop"] = res.max_drop;
  summary["n_images"] = fakes.size();
  std::cout << summary.dump() << "\n";
  return 0;
}

// ---------------------------------------------------------------------
// tile
// ---------------------------------------------------------------------

int cmd_tile(const std::string& ckpt_path, const std::string& manifest_path,
             std::uint64_t seed, const std::string& out_path) {
  const DetectorPredictor model{std::filesystem::path(ckpt_path)};
  const Manifest man = load_manifest(manifest_path);
  const TileEvalResult res =
      tile_patch_eval(model, man, man.info.grid(), seed);
  json j;
  j["tiled_accuracy"] = res.accuracy;
  j["n"] = res.n;
  std::cout << j.dump() << "\n";
  if (!out_path.empty()) write_text(out_path, j.dump() + "\n");
  return 0;
}

// ---------------------------------------------------------------------
// plot
// ---------------------------------------------------------------------

enum class PlotInput { kSweep, kCdeAggregate, kOcclusionCsv, kCdeCsv };

PlotInput classify_plot_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("plot: cannot open " + path.string());
  std::string first_line;
  std::getline(in, first_line);
  if (first_line.rfind("mask_size,row,col,recall,drop", 0) == 0)
    return PlotInput::kOcclusionCsv;
  if (first_line.rfind("row,col,cde,normalized", 0) == 0)
    return PlotInput::kCdeCsv;
  try {
    const json j = json::parse(first_line);
    if (j.is_object() && j.contains("histogram"))
      return PlotInput::kCdeAggregate;
    if (j.is_object() && j.contains("kind") && j.contains("metrics"))
      return PlotInput::kSweep;
  } catch (const json::parse_error&) {
    // Multi-line JSON aggregate files fall through to a whole-file parse.
    in.clear();
    in.seekg(0);
    try {
      const json j = json::parse(in);
      if (j.is_object() && j.contains("histogram"))
        return PlotInput::kCdeAggregate;
    } catch (const json::parse_error&) {
    }
  }
  throw FormatError("plot: unrecognized input format: " + path.string());
}

int cmd_plot(const std::vector<std::string>& inputs,
             const std::string& out_dir) {
  if (inputs.empty()) throw InvalidArgument("plot: no inputs given");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir);
  const std::filesystem::path out(out_dir);

  std::map<std::string, std::vector<svg::Series>> sweeps;  // by corruption
  std::vector<svg::Histogram> histograms;
  int written = 0;

  for (const std::string& input : inputs) {
    const std::filesystem::path path(input);
    const std::string stem = path.stem().string();
    switch (classify_plot_input(path)) {
      case PlotInput::kSweep: {
        std::ifstream in(path);
        std::string line;
        std::map<std::string, svg::Series> by_kind;
        while (std::getline(in, line)) {
          if (line.empty()) continue;
          const json j = json::parse(line);
          if (!j.value("supported", true)) continue;
          const std::string kind = j.at("kind").is_null()
                                       ? "none"
                                       : j.at("kind").get<std::string>();
          auto& series = by_kind[kind];
          series.label = stem;
          series.points.emplace_back(
              j.at("param").is_null() ? 0.0 : j.at("param").get<double>(),
              j.at("metrics").at("accuracy").get<double>());
        }
        for (auto& [kind, series] : by_kind)
          sweeps[kind].push_back(std::move(series));
        break;
      }
      case PlotInput::kCdeAggregate: {
        const CdeAggregate agg = read_cde_aggregate_json(path);
        histograms.push_back({stem, agg.histogram});
        break;
      }
      case PlotInput::kOcclusionCsv: {
        std::ifstream in(path);
        std::string line;
        std::getline(in, line);  // header
        std::map<int, svg::Series> by_size;
        int position = 0;
        int last_size = -1;
        while (std::getline(in, line)) {
          if (line.empty()) continue;
          int mask_size = 0, row = 0, col = 0;
          double recall = 0, drop = 0;
          if (std::sscanf(line.c_str(), "%d,%d,%d,%lf,%lf", &mask_size, &row,
                          &col, &recall, &drop) != 5)
            throw FormatError("plot: bad occlusion row in " + path.string());
          if (mask_size != last_size) {
            position = 0;
            last_size = mask_size;
          }
          auto& series = by_size[mask_size];
          series.label = "mask " + std::to_string(mask_size) + "px";
          series.points.emplace_back(position++, drop);
        }
        std::vector<svg::Series> series;
        for (auto& [sz, s] : by_size) series.push_back(std::move(s));
        write_text(out / ("occlusion_" + stem + ".svg"),
                   svg::line_chart("recall drop by masked position",
                                   "position index", "recall drop", series));
        ++written;
        break;
      }
      case PlotInput::kCdeCsv: {
        std::ifstream in(path);
        std::string line;
        std::getline(in, line);  // header
        int max_row = 0, max_col = 0;
        std::vector<std::tuple<int, int, double>> cells;
        while (std::getline(in, line)) {
          if (line.empty()) continue;
          int row = 0, col = 0;
          double cde = 0, norm = 0;
          if (std::sscanf(line.c_str(), "%d,%d,%lf,%lf", &row, &col, &cde,
                          &norm) != 4)
            throw FormatError("plot: bad CDE row in " + path.string());
          cells.emplace_back(row, col, norm);
          max_row = std::max(max_row, row);
          max_col = std::max(max_col, col);
        }
        std::vector<double> values(
            static_cast<std::size_t>(max_row + 1) * (max_col + 1), 0.0);
        for (const auto& [r, c, v] : cells)
          values[static_cast<std::size_t>(r) * (max_col + 1) + c] = v;
        write_text(out / ("heatmap_" + stem + ".svg"),
                   svg::heatmap("normalized CDE per patch", max_row + 1,
                                max_col + 1, values));
        ++written;
        break;
      }
    }
  }

  for (auto& [kind, series] : sweeps) {
    write_text(out / ("robustness_" + kind + ".svg"),
               svg::line_chart("accuracy under " + kind, "parameter",
                               "accuracy", series));
    ++written;
  }
  if (!histograms.empty()) {
    write_text(out / "cde_histograms.svg",
               svg::histogram_overlay("normalized CDE distribution",
                                      histograms));
    ++written;
  }
  std::cout << "wrote " << written << " SVG file(s) to " << out_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"patch-level synthetic-image detection toolkit"};
  app.require_subcommand(1);

  // gen-corpus
  std::string gc_config, gc_out;
  auto* gen = app.add_subcommand("gen-corpus",
                                 "generate the procedural corpus from a "
                                 "config file");
  gen->alias("gen_corpus");
  gen->add_option("--config", gc_config, "experiment config JSON")->required();
  gen->add_option("--out", gc_out, "output directory (default: corpus_dir)");

  // train
  std::string tr_config, tr_mode, tr_out, tr_corpus, tr_eval_split = "test";
  std::int64_t tr_seed = -1;
  auto* tr = app.add_subcommand("train", "train a detector per the config");
  tr->add_option("--config", tr_config, "experiment config JSON")->required();
  tr->add_option("--mode", tr_mode, "override train.mode");
  tr->add_option("--seed", tr_seed, "override train.seed");
  tr->add_option("--out", tr_out, "run output directory");
  tr->add_option("--corpus", tr_corpus, "override corpus directory");
  tr->add_option("--eval-split", tr_eval_split, "eval split name");

  // eval
  std::string ev_ckpt, ev_manifest, ev_sweep, ev_out;
  double ev_blur = -1, ev_resize = -1;
  int ev_jpeg = -1;
  bool ev_force = false;
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a manifest");
  ev->add_option("--checkpoint", ev_ckpt)->required();
  ev->add_option("--manifest", ev_manifest)->required();
  ev->add_option("--blur", ev_blur, "gaussian blur sigma");
  ev->add_option("--resize", ev_resize, "resize scale factor");
  ev->add_option("--jpeg", ev_jpeg, "jpeg quality");
  ev->add_option("--sweep", ev_sweep, "sweep one corruption: blur|resize|jpeg");
  ev->add_flag("--force", ev_force, "allow parameters outside sweep ranges");
  ev->add_option("--out", ev_out, "also write records to this file");

  // cde
  std::string cd_ckpt, cd_manifest, cd_out;
  bool cd_per_image = false, cd_aggregate = false;
  int cd_limit = 0, cd_bins = 20;
  auto* cd = app.add_subcommand("cde", "patch attribution maps and stats");
  cd->add_option("--checkpoint", cd_ckpt)->required();
  cd->add_option("--manifest", cd_manifest)->required();
  cd->add_option("--out", cd_out, "output directory")->required();
  cd->add_flag("--per-image", cd_per_image, "write per-image CSV + PGM");
  cd->add_flag("--aggregate", cd_aggregate, "write the aggregate JSON");
  cd->add_option("--limit", cd_limit, "cap per-image outputs");
  cd->add_option("--bins", cd_bins, "histogram bins");

  // occlude
  std::string oc_ckpt, oc_manifest, oc_out;
  std::vector<int> oc_sizes;
  auto* oc = app.add_subcommand("occlude", "single-region recall-drop table");
  oc->add_option("--checkpoint", oc_ckpt)->required();
  oc->add_option("--manifest", oc_manifest)->required();
  oc->add_option("--out", oc_out, "output CSV path")->required();
  oc->add_option("--sizes", oc_sizes, "mask sizes in pixels")->delimiter(',');

  // tile
  std::string ti_ckpt, ti_manifest, ti_out;
  std::uint64_t ti_seed = 0;
  auto* ti = app.add_subcommand("tile", "single-patch tiling probe");
  ti->add_option("--checkpoint", ti_ckpt)->required();
  ti->add_option("--manifest", ti_manifest)->required();
  ti->add_option("--seed", ti_seed, "patch selection seed");
  ti->add_option("--out", ti_out, "also write the JSON to this file");

  // plot
  std::vector<std::string> pl_inputs;
  std::string pl_out;
  auto* pl = app.add_subcommand("plot", "render analysis files as SVG");
  pl->add_option("--out", pl_out, "output directory")->required();
  pl->add_option("inputs", pl_inputs, "analysis JSON/JSONL/CSV files");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (gen->parsed()) return cmd_gen_corpus(gc_config, gc_out);
    if (tr->parsed())
      return cmd_train(tr_config, tr_mode, tr_seed, tr_out, tr_corpus,
                       tr_eval_split);
    if (ev->parsed())
      return cmd_eval(ev_ckpt, ev_manifest, ev_blur, ev_resize, ev_jpeg,
                      ev_sweep, ev_force, ev_out);
    if (cd->parsed())
      return cmd_cde(cd_ckpt, cd_manifest, cd_out, cd_per_image, cd_aggregate,
                     cd_limit, cd_bins);
    if (oc->parsed()) return cmd_occlude(oc_ckpt, oc_manifest, oc_out, oc_sizes);
    if (ti->parsed()) return cmd_tile(ti_ckpt, ti_manifest, ti_seed, ti_out);
    if (pl->parsed()) return cmd_plot(pl_inputs, pl_out);
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
