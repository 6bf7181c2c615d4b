#include <doctest.h>

#include <json.hpp>

#include "helpers.hpp"
#include "ppl/image_io.hpp"
#include "ppl/synth_corpus.hpp"

using namespace ppl;
using nlohmann::json;

TEST_SUITE_BEGIN("cli");

namespace {

// One shared experiment config on a small corpus, reused across CLI cases.
struct CliFixture {
  test::ScratchDir dir{"cli"};
  std::filesystem::path config_path;
  std::filesystem::path corpus_dir;
  std::filesystem::path test_manifest;
  std::filesystem::path checkpoint;

  CliFixture() {
    config_path = dir.path() / "config.json";
    corpus_dir = dir.path() / "exp" / "corpus";
    test_manifest = corpus_dir / "manifest.test.jsonl";
    json cfg = {
        {"out_dir", (dir.path() / "exp").string()},
        {"corpus",
         {{"height", 56},
          {"width", 56},
          {"channels", 3},
          {"patch_size", 14},
          {"master_seed", 505},
          {"profiles",
           json::array(
               {{{"name", "ckbd"}, {"kind", "checkerboard-modulation"}}})},
          {"splits",
           {{"train",
             {{"real", 12},
              {"fake", json::array({{{"profile", "ckbd"}, {"count", 12}}})}}},
            {"test",
             {{"real", 6},
              {"fake", json::array({{{"profile", "ckbd"}, {"count", 6}}})}}}}}}},
        {"train",
         {{"mode", "ppl"},
          {"batch_size", 4},
          {"epochs", 1},
          {"seed", 3},
          {"rpr", {{"profile", "ckbd"}}},
          {"contrastive", {{"kind", "margin"}, {"max_pairs", 256}}},
          {"detector",
           {{"embed_dim", 16}, {"depth", 1}, {"heads", 4}, {"mlp_ratio", 2.0}}}}}};
    std::ofstream out(config_path);
    out << cfg.dump(2);
  }

  void generate() {
    const auto res = test::run_cli("gen-corpus --config " +
                                       config_path.string(),
                                   dir.path());
    REQUIRE(res.exit_code == 0);
  }

  void train_once() {
    const auto res =
        test::run_cli("train --config " + config_path.string(), dir.path());
    REQUIRE(res.exit_code == 0);
    checkpoint = dir.path() / "exp" / "run_ppl_seed3" / "checkpoint_final.ckpt";
    REQUIRE(std::filesystem::exists(checkpoint));
  }
};

}  // namespace

TEST_CASE("malformed config JSON exits 2 with a location diagnostic") {
  test::ScratchDir dir("cli_badjson");
  const auto bad = dir.path() / "bad.json";
  {
    std::ofstream out(bad);
    out << "{ \"out_dir\": \"x\", }";
  }
  const auto res =
      test::run_cli("gen-corpus --config " + bad.string(), dir.path());
  CHECK(res.exit_code == 2);
  CHECK(res.err.find("line") != std::string::npos);
  CHECK(res.err.find("column") != std::string::npos);
}

TEST_CASE("unknown config keys are rejected before side effects") {
  test::ScratchDir dir("cli_unknown");
  const auto cfg = dir.path() / "cfg.json";
  {
    std::ofstream out(cfg);
    out << R"({"out_dir": ")" << (dir.path() / "exp").string()
        << R"(", "corpus": {"splits": {"train": {"real": 2}}, "typo_key": 1}})";
  }
  const auto res =
      test::run_cli("gen-corpus --config " + cfg.string(), dir.path());
  CHECK(res.exit_code == 2);
  CHECK(res.err.find("typo_key") != std::string::npos);
  CHECK_FALSE(std::filesystem::exists(dir.path() / "exp"));
}

TEST_CASE("missing corpus exits 3") {
  CliFixture fx;
  const auto res =
      test::run_cli("train --config " + fx.config_path.string(), fx.dir.path());
  CHECK(res.exit_code == 3);
}

TEST_CASE("gen-corpus is reproducible byte for byte") {
  CliFixture fx;
  const auto out_a = fx.dir.path() / "corpus_a";
  const auto out_b = fx.dir.path() / "corpus_b";
  REQUIRE(test::run_cli("gen-corpus --config " + fx.config_path.string() +
                            " --out " + out_a.string(),
                        fx.dir.path())
              .exit_code == 0);
  REQUIRE(test::run_cli("gen-corpus --config " + fx.config_path.string() +
                            " --out " + out_b.string(),
                        fx.dir.path())
              .exit_code == 0);
  std::size_t files = 0;
  for (const auto& entry :
       std::filesystem::recursive_directory_iterator(out_a)) {
    if (!entry.is_regular_file()) continue;
    ++files;
    const auto rel = std::filesystem::relative(entry.path(), out_a);
    CHECK(test::read_file(entry.path()) == test::read_file(out_b / rel));
  }
  CHECK(files == 36 + 3);  // images + corpus.json + two manifests
}

TEST_CASE("full train/eval/cde/occlude/tile/plot round trip") {
  CliFixture fx;
  fx.generate();
  fx.train_once();

  // eval: --blur 0 equals the no-flag run.
  const auto base = test::run_cli("eval --checkpoint " + fx.checkpoint.string() +
                                      " --manifest " + fx.test_manifest.string(),
                                  fx.dir.path());
  REQUIRE(base.exit_code == 0);
  const json base_json = json::parse(base.out);
  const auto blur0 = test::run_cli(
      "eval --checkpoint " + fx.checkpoint.string() + " --manifest " +
          fx.test_manifest.string() + " --blur 0",
      fx.dir.path());
  REQUIRE(blur0.exit_code == 0);
  const json blur0_json = json::parse(blur0.out);
  CHECK(blur0_json.at("metrics").at("accuracy") ==
        base_json.at("metrics").at("accuracy"));

  // sweep record counts per the caption sets.
  const auto sweep_blur = test::run_cli(
      "eval --checkpoint " + fx.checkpoint.string() + " --manifest " +
          fx.test_manifest.string() + " --sweep blur --out " +
          (fx.dir.path() / "sweep_blur.jsonl").string(),
      fx.dir.path());
  REQUIRE(sweep_blur.exit_code == 0);
  CHECK(std::count(sweep_blur.out.begin(), sweep_blur.out.end(), '\n') == 4);
  const auto sweep_resize = test::run_cli(
      "eval --checkpoint " + fx.checkpoint.string() + " --manifest " +
          fx.test_manifest.string() + " --sweep resize --out " +
          (fx.dir.path() / "sweep_resize.jsonl").string(),
      fx.dir.path());
  REQUIRE(sweep_resize.exit_code == 0);
  CHECK(std::count(sweep_resize.out.begin(), sweep_resize.out.end(), '\n') ==
        5);

  // out-of-range corruption flags exit 2 unless forced.
  CHECK(test::run_cli("eval --checkpoint " + fx.checkpoint.string() +
                          " --manifest " + fx.test_manifest.string() +
                          " --blur 4.0",
                      fx.dir.path())
            .exit_code == 2);
  CHECK(test::run_cli("eval --checkpoint " + fx.checkpoint.string() +
                          " --manifest " + fx.test_manifest.string() +
                          " --blur 4.0 --force",
                      fx.dir.path())
            .exit_code == 0);

  // jpeg corruption: a record either way (this build carries a codec).
  const auto jpeg = test::run_cli(
      "eval --checkpoint " + fx.checkpoint.string() + " --manifest " +
          fx.test_manifest.string() + " --jpeg 80",
      fx.dir.path());
  REQUIRE(jpeg.exit_code == 0);
  const json jpeg_json = json::parse(jpeg.out);
  CHECK(jpeg_json.at("supported").get<bool>() == jpeg_supported());

  // cde per-image on a limit of 1 -> exactly one CSV and one PGM.
  const auto cde_dir = fx.dir.path() / "cde";
  REQUIRE(test::run_cli("cde --checkpoint " + fx.checkpoint.string() +
                            " --manifest " + fx.test_manifest.string() +
                            " --out " + cde_dir.string() +
                            " --per-image --limit 1 --aggregate",
                        fx.dir.path())
              .exit_code == 0);
  CHECK(std::filesystem::exists(cde_dir / "cde_00000.csv"));
  CHECK(std::filesystem::exists(cde_dir / "cde_00000.pgm"));
  CHECK_FALSE(std::filesystem::exists(cde_dir / "cde_00001.csv"));
  CHECK(std::filesystem::exists(cde_dir / "cde_aggregate.json"));
  {
    std::ifstream in(cde_dir / "cde_aggregate.json");
    json agg = json::parse(in);
    double mass = 0.0;
    for (double b : agg.at("histogram").get<std::vector<double>>()) mass += b;
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-9));
  }

  // occlude: position count = (56/14)^2 rows per size + header.
  const auto occl_csv = fx.dir.path() / "occl.csv";
  const auto occl = test::run_cli(
      "occlude --checkpoint " + fx.checkpoint.string() + " --manifest " +
          fx.test_manifest.string() + " --out " + occl_csv.string() +
          " --sizes 14",
      fx.dir.path());
  REQUIRE(occl.exit_code == 0);
  const std::string csv = test::read_file(occl_csv);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 16);
  const json occl_summary = json::parse(occl.out);
  CHECK(occl_summary.contains("mean_drop"));
  CHECK(occl_summary.contains("max_drop"));

  // tile: reproducible under a fixed seed.
  const auto tile_a = test::run_cli(
      "tile --checkpoint " + fx.checkpoint.string() + " --manifest " +
          fx.test_manifest.string() + " --seed 11",
      fx.dir.path());
  const auto tile_b = test::run_cli(
      "tile --checkpoint " + fx.checkpoint.string() + " --manifest " +
          fx.test_manifest.string() + " --seed 11",
      fx.dir.path());
  REQUIRE(tile_a.exit_code == 0);
  CHECK(tile_a.out == tile_b.out);
  CHECK(json::parse(tile_a.out).at("n") == 12);

  // plot: all four input kinds.
  const auto plots = fx.dir.path() / "plots";
  const auto plot = test::run_cli(
      "plot --out " + plots.string() + " " +
          (fx.dir.path() / "sweep_blur.jsonl").string() + " " +
          (fx.dir.path() / "sweep_resize.jsonl").string() + " " +
          (cde_dir / "cde_aggregate.json").string() + " " +
          occl_csv.string() + " " + (cde_dir / "cde_00000.csv").string(),
      fx.dir.path());
  REQUIRE(plot.exit_code == 0);
  CHECK(std::filesystem::exists(plots / "robustness_gaussian_blur.svg"));
  CHECK(std::filesystem::exists(plots / "robustness_resize.svg"));
  CHECK(std::filesystem::exists(plots / "cde_histograms.svg"));
  CHECK(std::filesystem::exists(plots / "occlusion_occl.svg"));
  CHECK(std::filesystem::exists(plots / "heatmap_cde_00000.svg"));
  const std::string svg = test::read_file(plots / "robustness_gaussian_blur.svg");
  CHECK(svg.find("<svg") != std::string::npos);
  CHECK(svg.find("</svg>") != std::string::npos);

  // plot with no inputs exits 2.
  CHECK(test::run_cli("plot --out " + plots.string(), fx.dir.path())
            .exit_code == 2);
}

TEST_CASE("usage errors exit 2") {
  test::ScratchDir dir("cli_usage");
  CHECK(test::run_cli("eval", dir.path()).exit_code == 2);
  CHECK(test::run_cli("no-such-command", dir.path()).exit_code == 2);
  CHECK(test::run_cli("--help", dir.path()).exit_code == 0);
}

TEST_SUITE_END();
