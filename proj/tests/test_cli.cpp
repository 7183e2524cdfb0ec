#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <sys/wait.h>

#include "softmesh/synthetic.hpp"
#include "softmesh/train_config.hpp"
#include "test_support.hpp"

using namespace softmesh;
namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
  const std::string cmd =
      std::string(SOFTMESH_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TrainConfig parse(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

}  // namespace

TEST_CASE("config parsing") {
  SUBCASE("empty file gives defaults") {
    CHECK(config_hash(parse("")) == config_hash(TrainConfig{}));
    CHECK(config_hash(parse("# only a comment\n\n")) == config_hash(TrainConfig{}));
  }
  SUBCASE("one key changes one field") {
    const TrainConfig c = parse("lambda_3d = 0.0\n");
    CHECK(c.weights.l3d == 0);
    TrainConfig expected;
    expected.weights.l3d = 0;
    CHECK(config_hash(c) == config_hash(expected));
  }
  SUBCASE("bad value cites the line") {
    try {
      (void)parse("seed = 3\n# note\nlambda_3d = banana\n");
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
  }
  SUBCASE("unknown key is named") {
    try {
      (void)parse("lambda_4d = 1\n");
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("lambda_4d") != std::string::npos);
    }
  }
  SUBCASE("out of domain values") {
    CHECK_THROWS_AS(parse("batch_size = 0\n"), ConfigError);
    CHECK_THROWS_AS(parse("lambda_img = -1\n"), ConfigError);
  }
  SUBCASE("print then parse round trips the hash") {
    TrainConfig c;
    c.seed = 99;
    c.learning_rate = Real(3.3e-4);
    c.sigma = Real(2.5e-5);
    c.cycle_cross_model = true;
    c.metrics_path = "trace.csv";
    CHECK(config_hash(parse(print_config(c))) == config_hash(c));
    CHECK(config_hash(c) != config_hash(TrainConfig{}));
  }
}

TEST_CASE("help exits 0 for every subcommand") {
  CHECK(run("--help") == 0);
  for (const char* sub : {"gen-data", "train", "render", "eval", "gradcheck"}) {
    CAPTURE(sub);
    CHECK(run(std::string(sub) + " --help") == 0);
  }
}

TEST_CASE("usage errors exit 1") {
  CHECK(run("") == 1);
  CHECK(run("frobnicate") == 1);
  CHECK(run("gen-data --out x --count 2 --seed 1 --bogus") == 1);
  CHECK(run("gradcheck --module nothing") == 1);
}

TEST_CASE("training on one sample with batch 4 is rejected") {
  const test::TempDir dir;
  const auto data = dir.path / "data";
  REQUIRE(run("gen-data --out " + data.string() + " --count 1 --seed 7") == 0);
  test::write_file(dir.path / "cfg.txt", "batch_size = 4\n");
  CHECK(run("train --data " + data.string() + " --config " +
            (dir.path / "cfg.txt").string() + " --out " +
            (dir.path / "run").string()) == 1);
}

TEST_CASE("a bad config file exits 1 and a missing checkpoint exits 3") {
  const test::TempDir dir;
  test::write_file(dir.path / "cfg.txt", "lambda_3d = banana\n");
  CHECK(run("train --data " + dir.path.string() + " --config " +
            (dir.path / "cfg.txt").string() + " --out " +
            (dir.path / "run").string()) == 1);
  CHECK(run("eval --checkpoint " + (dir.path / "none.bin").string() +
            " --data " + dir.path.string() + " --report " +
            (dir.path / "r.csv").string()) == 3);
}

TEST_CASE("gen-data is byte-identical across invocations") {
  const test::TempDir dir;
  const auto a = dir.path / "a", b = dir.path / "b";
  REQUIRE(run("gen-data --out " + a.string() + " --count 16 --seed 7") == 0);
  REQUIRE(run("gen-data --out " + b.string() + " --count 16 --seed 7") == 0);
  int files = 0;
  for (const auto& entry : fs::directory_iterator(a)) {
    ++files;
    CHECK(test::read_file(entry.path()) ==
          test::read_file(b / entry.path().filename()));
  }
  CHECK(files == 16 * 3);
}

TEST_CASE("gradcheck on the renderer exits 0") {
  CHECK(run("gradcheck --module renderer") == 0);
}

TEST_CASE("train, render and eval run end to end") {
  const test::TempDir dir;
  const auto data = dir.path / "data";
  REQUIRE(run("gen-data --out " + data.string() + " --count 4 --seed 3") == 0);
  test::write_file(dir.path / "cfg.txt",
                   "iterations = 3\nbatch_size = 2\nimage_height = 64\n"
                   "metrics_interval = 1\ncheckpoint_interval = 0\n");
  const auto run_dir = dir.path / "run";
  REQUIRE(run("train --data " + data.string() + " --config " +
              (dir.path / "cfg.txt").string() + " --out " + run_dir.string()) == 0);
  CHECK(fs::exists(run_dir / "final.bin"));
  CHECK(fs::exists(run_dir / "metrics.csv"));
  const auto ckpt = (run_dir / "final.bin").string();
  CHECK(run("render --checkpoint " + ckpt + " --input " +
            (data / "0001").string() + " --out " + (dir.path / "render").string() +
            " --azimuth 45") == 0);
  CHECK(fs::exists(dir.path / "render" / "0001_render_img.png"));
  CHECK(fs::exists(dir.path / "render" / "0001_mesh.obj"));
  CHECK(run("eval --checkpoint " + ckpt + " --data " + data.string() +
            " --report " + (dir.path / "report.csv").string()) == 0);
  CHECK(fs::exists(dir.path / "report.csv"));
}
