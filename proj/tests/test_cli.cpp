#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <iostream>

#include <json.hpp>

#include "maskforge/evalmetrics.hpp"
#include "maskforge/pipeline.hpp"
#include "maskforge/synthetic.hpp"
#include "support.hpp"

using namespace maskforge;
using testing::TempDir;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CliResult {
  int code;
  std::string err;
};

CliResult cli(std::vector<std::string> args) {
  args.insert(args.begin(), {"maskforge", "--quiet"});
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream captured;
  std::streambuf* old = std::cerr.rdbuf(captured.rdbuf());
  const int code = run_cli(static_cast<int>(argv.size()), argv.data());
  std::cerr.rdbuf(old);
  return {code, captured.str()};
}

json load(const fs::path& p) {
  std::ifstream in(p);
  return json::parse(in);
}

void write(const fs::path& p, const json& j) {
  std::ofstream out(p);
  out << j.dump(2);
}

// Small synthetic dataset plus a config that refers to it relatively.
fs::path make_dataset(const TempDir& dir, int count = 6) {
  SyntheticOptions opt;
  opt.count = count;
  opt.width = 32;
  opt.height = 32;
  write_synthetic_dataset(generate_synthetic_dataset(opt), dir / "data");
  const fs::path cfg = dir / "data" / "cfg.json";
  write(cfg, {{"manifest", "manifest.json"},
              {"output_dir", "out"},
              {"seed", 3},
              {"refinement", {{"rounds", 2}, {"mode", "binary"}}}});
  return cfg;
}

}  // namespace

TEST_CASE("enhance recovers the square and is repeatable") {
  TempDir dir("cli_enhance");
  const SquareFixture f = make_square_fixture(16, 8, 12, {0.9, 0.1, 0.1}, {0.1, 0.1, 0.9}, 0.05, 4);
  save_image(f.image, dir / "img.png");
  write_binary_mask(f.init, dir / "coarse.png");
  const auto run = [&](const std::string& out) {
    return cli({"enhance", "--image", (dir / "img.png").string(), "--coarse",
                (dir / "coarse.png").string(), "--out", (dir / out).string(), "--seed", "4"});
  };
  REQUIRE(run("a.png").code == 0);
  CHECK(binary_iou(read_binary_mask(dir / "a.png"), f.truth) >= 0.95);
  const std::string first = testing::slurp(dir / "a.png");
  REQUIRE(run("a.png").code == 0);
  CHECK(testing::slurp(dir / "a.png") == first);
}

TEST_CASE("enhance input errors") {
  TempDir dir("cli_enhance_err");
  save_image(RgbImage(6, 6), dir / "img.png");
  write_binary_mask(BinaryMask(6, 6), dir / "empty.png");
  const CliResult missing = cli({"enhance", "--image", (dir / "nothere.png").string(), "--coarse",
                                 (dir / "empty.png").string(), "--out", (dir / "o.png").string()});
  CHECK(missing.code == kExitValidation);
  CHECK(missing.err.find("nothere.png") != std::string::npos);

  const CliResult degenerate = cli({"enhance", "--image", (dir / "img.png").string(), "--coarse",
                                    (dir / "empty.png").string(), "--out", (dir / "o.png").string()});
  CHECK(degenerate.code == kExitValidation);
  CHECK(degenerate.err.find("at least one foreground") != std::string::npos);
  CHECK_FALSE(fs::exists(dir / "o.png"));
}

TEST_CASE("saliency subcommand writes an image-sized mask") {
  TempDir dir("cli_saliency");
  RgbImage img(20, 20, Rgb{0.05, 0.05, 0.05});
  for (int y = 7; y < 13; ++y)
    for (int x = 7; x < 13; ++x) img.at(x, y) = {0.95, 0.95, 0.95};
  save_image(img, dir / "img.png");
  REQUIRE(cli({"saliency", "--image", (dir / "img.png").string(), "--out", (dir / "m.png").string()}).code == 0);
  const BinaryMask m = read_binary_mask(dir / "m.png");
  CHECK(m.same_shape(img));
  CHECK(m.at(10, 10) == 1);
}

TEST_CASE("eval") {
  TempDir dir("cli_eval");
  fs::create_directories(dir / "gt");
  fs::create_directories(dir / "pred");
  // Image a: gt [1 1 0 0], pred [1 0 0 0]; image b: gt [0 2], pred [2 2].
  write_label_mask(LabelMask(4, 1, std::vector<std::uint8_t>{1, 1, 0, 0}), dir / "gt/a.png");
  write_label_mask(LabelMask(4, 1, std::vector<std::uint8_t>{1, 0, 0, 0}), dir / "pred/a.png");
  write_label_mask(LabelMask(2, 1, std::vector<std::uint8_t>{0, 2}), dir / "gt/b.png");
  write_label_mask(LabelMask(2, 1, std::vector<std::uint8_t>{2, 2}), dir / "pred/b.png");
  write_label_mask(LabelMask(2, 1), dir / "pred/extra.png");

  const CliResult same = cli({"eval", "--pred", (dir / "gt").string(), "--gt", (dir / "gt").string(),
                              "--out", (dir / "same.json").string()});
  REQUIRE(same.code == 0);
  CHECK(load(dir / "same.json")["mean_iou"] == 1.0);

  const CliResult r = cli({"eval", "--pred", (dir / "pred").string(), "--gt", (dir / "gt").string(),
                           "--out", (dir / "r.json").string()});
  REQUIRE(r.code == 0);
  // class 0: TP 2, FP 1, FN 1 -> 1/2; class 1: TP 1, FN 1 -> 1/2; class 2: TP 1, FP 1 -> 1/2
  const json report = load(dir / "r.json");
  CHECK(report["mean_iou"].get<double>() == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(report["unmatched_predictions"] == json::array({"extra"}));
  CHECK(r.err.find("extra") != std::string::npos);

  write_label_mask(LabelMask(3, 1), dir / "pred/b.png");
  const CliResult bad = cli({"eval", "--pred", (dir / "pred").string(), "--gt", (dir / "gt").string(),
                             "--out", (dir / "bad.json").string()});
  CHECK(bad.code == kExitValidation);
  CHECK(bad.err.find("b:") != std::string::npos);

  fs::create_directories(dir / "empty");
  CHECK(cli({"eval", "--pred", (dir / "empty").string(), "--gt", (dir / "gt").string(), "--out",
             (dir / "e.json").string()}).code == kExitValidation);
}

TEST_CASE("pipeline writes rounds, summary and effective config") {
  TempDir dir("cli_pipeline");
  const fs::path cfg = make_dataset(dir);
  REQUIRE(cli({"pipeline", "--config", cfg.string()}).code == 0);
  const fs::path out = dir / "data" / "out";
  for (int k = 0; k <= 2; ++k) CHECK(fs::exists(out / ("round_" + std::to_string(k)) / "state.json"));
  CHECK_FALSE(fs::exists(out / "round_3"));
  const json summary = load(out / "summary.json");
  CHECK(summary["rounds"].size() == 3);
  CHECK(summary["rounds"][0]["mean_binary_iou"].is_number());
  const json effective = load(out / "effective_config.json");
  CHECK(effective["seed"] == 3);
  CHECK(effective["refinement"]["rounds"] == 2);
  CHECK(fs::path(effective["manifest"].get<std::string>()).is_absolute());

  const std::string summary_bytes = testing::slurp(out / "summary.json");
  const auto tree = testing::tree_contents(out);
  REQUIRE(cli({"pipeline", "--config", cfg.string()}).code == 0);
  CHECK(testing::slurp(out / "summary.json") == summary_bytes);
  CHECK(testing::tree_contents(out) == tree);

  // Re-running from the echoed config reproduces the run.
  fs::copy_file(out / "effective_config.json", dir / "echo.json");
  REQUIRE(cli({"pipeline", "--config", (dir / "echo.json").string()}).code == 0);
  CHECK(testing::tree_contents(out) == tree);

  // Flags win over the file.
  REQUIRE(cli({"pipeline", "--config", cfg.string(), "--rounds", "1", "--output-dir",
               (dir / "one").string()}).code == 0);
  CHECK(fs::exists(dir / "one/round_1"));
  CHECK_FALSE(fs::exists(dir / "one/round_2"));
  CHECK(load(dir / "one/effective_config.json")["refinement"]["rounds"] == 1);

  // Continue from a snapshot.
  REQUIRE(cli({"refine", "--config", cfg.string(), "--from", (dir / "one/round_1").string(),
               "--rounds", "1", "--output-dir", (dir / "one").string()}).code == 0);
  CHECK(fs::exists(dir / "one/round_2/state.json"));
  CHECK(load(dir / "one/round_2/state.json")["round"] == 2);
}

TEST_CASE("pipeline validation lists every problem") {
  TempDir dir("cli_invalid");
  write(dir / "cfg.json", {{"manifest", "missing.json"},
                           {"backend", "cnn"},
                           {"refinement", {{"rounds", 0}}},
                           {"grabcut", {{"connectivity", 5}}}});
  const CliResult r = cli({"pipeline", "--config", (dir / "cfg.json").string(), "--output-dir",
                           (dir / "out").string()});
  CHECK(r.code == kExitValidation);
  CHECK(r.err.find("missing.json") != std::string::npos);
  CHECK(r.err.find("cnn") != std::string::npos);
  CHECK(r.err.find("rounds") != std::string::npos);
  CHECK(r.err.find("connectivity") != std::string::npos);
  CHECK_FALSE(fs::exists(dir / "out"));

  CHECK(cli({"pipeline", "--config", (dir / "nope.json").string()}).code == kExitValidation);
  CHECK(cli({"pipeline", "--config", (dir / "cfg.json").string(), "--jobs", "x"}).code == kExitValidation);
}

TEST_CASE("seed falls back to the environment") {
  TempDir dir("cli_env");
  const fs::path cfg = make_dataset(dir, 4);
  json doc = load(cfg);
  doc.erase("seed");
  write(cfg, doc);
  ::setenv("MASKFORGE_SEED", "41", 1);
  const CliResult r = cli({"pipeline", "--config", cfg.string(), "--rounds", "1"});
  ::unsetenv("MASKFORGE_SEED");
  REQUIRE(r.code == 0);
  CHECK(load(dir / "data/out/effective_config.json")["seed"] == 41);
}

TEST_CASE("segment with the oracle backend reproduces ground truth") {
  TempDir dir("cli_segment");
  const fs::path cfg = make_dataset(dir, 4);
  REQUIRE(cli({"segment", "--config", cfg.string(), "--backend", "oracle", "--mode", "semantic",
               "--out", (dir / "pred").string()}).code == 0);
  const DatasetManifest m = load_manifest(dir / "data/manifest.json");
  for (const auto& rec : m.records) {
    CHECK(read_label_mask(dir / "pred" / (rec.stem() + ".png")) == read_label_mask(*rec.gt_mask));
  }
  REQUIRE(cli({"segment", "--config", cfg.string(), "--out", (dir / "app").string()}).code == 0);
  CHECK(fs::exists(dir / "app/synth_000.png"));
}

TEST_CASE("synth writes a dataset with a config") {
  TempDir dir("cli_synth");
  REQUIRE(cli({"synth", "--out", (dir / "s").string(), "--count", "5"}).code == 0);
  CHECK(load_manifest(dir / "s/manifest.json").records.size() == 5);
  CHECK(fs::exists(dir / "s/pipeline.json"));
}
