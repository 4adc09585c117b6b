#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "akl/experiments.hpp"
#include "akl/image_io.hpp"

using namespace akl;
namespace fs = std::filesystem;

namespace {

int run_cli(const std::string& args) {
  const std::string cmd = std::string(AKL_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("akl_test_config_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("defaults fill absent sections") {
  const ExperimentConfig c = parse_config(R"({"experiment": "kernel"})");
  CHECK(c.seed == 0);
  CHECK(c.output_dir == "akl_out");
  CHECK(c.kernel.instances == 1000);
  CHECK(c.patchify.image_side == 224);
  CHECK(c.patchify.per_axis == 14);
  CHECK(c.stability.variant == AttentionVariant::rbf);
  CHECK(c.interpolation.mask_token == "zero");
}

TEST_CASE("section values override defaults") {
  const ExperimentConfig c = parse_config(
      R"({"experiment": "stability", "seed": 9,
          "stability": {"n_values": [2, 3, 5], "variant": "symmetrized", "gamma": 0.5}})");
  CHECK(c.seed == 9);
  CHECK(c.stability.n_values == std::vector<std::size_t>{2, 3, 5});
  CHECK(c.stability.variant == AttentionVariant::symmetrized);
  CHECK(c.stability.gamma == 0.5);
}

TEST_CASE("bad configurations are rejected") {
  const char* cases[] = {
      "{",
      "[]",
      R"({})",
      R"({"experiment": "nope"})",
      R"({"experiment": "bv", "extra": 1})",
      R"({"experiment": "bv", "bv": {"sid": 4}})",
      R"({"experiment": "bv", "seed": -1})",
      R"({"experiment": "bv", "seed": "1"})",
      R"({"experiment": "bv", "bv": {"side": 1}})",
      R"({"experiment": "bv", "bv": {"kind": "stripes"}})",
      R"({"experiment": "bv", "bv": 3})",
      R"({"experiment": "patchify", "patchify": {"per_axis": 15}})",
      R"({"experiment": "patchify", "patchify": {"mask_ratio": 1.0}})",
      R"({"experiment": "lowrank", "lowrank": {"ranks": [0]}})",
      R"({"experiment": "lowrank", "lowrank": {"exact_rank": 16}})",
      R"({"experiment": "stability", "stability": {"n_values": [4, 8]}})",
      R"({"experiment": "stability", "stability": {"n_values": [4, 4, 8]}})",
      R"({"experiment": "stability", "stability": {"variant": "linear"}})",
      R"({"experiment": "fredholm", "fredholm": {"beta": 0}})",
      R"({"experiment": "fredholm", "fredholm": {"betas": [1.0]}})",
      R"({"experiment": "interpolation", "interpolation": {"n_values": [2, 4, 8]}})",
      R"({"experiment": "interpolation", "interpolation": {"mask_token": "learned"}})",
  };
  for (const char* text : cases) {
    CAPTURE(text);
    CHECK_THROWS_AS(parse_config(text), InvalidConfiguration);
  }
}

TEST_CASE("relative image paths resolve against the config directory") {
  const ExperimentConfig c =
      parse_config(R"({"experiment": "bv", "bv": {"image": "../img/a.csv"}})", "/data/configs");
  CHECK(c.bv.image == "/data/img/a.csv");
  const ExperimentConfig abs =
      parse_config(R"({"experiment": "bv", "bv": {"image": "/x/a.csv"}})", "/data/configs");
  CHECK(abs.bv.image == "/x/a.csv");
}

TEST_CASE("config hash ignores the output directory only") {
  const ExperimentConfig a = parse_config(R"({"experiment": "bv", "output_dir": "x"})");
  const ExperimentConfig b = parse_config(R"({"experiment": "bv", "output_dir": "y"})");
  const ExperimentConfig c = parse_config(R"({"experiment": "bv", "seed": 1})");
  const ExperimentConfig d = parse_config(R"({"output_dir": "x", "experiment": "bv", "bv": {}})");
  CHECK(config_hash(a) == config_hash(b));
  CHECK(config_hash(a) == config_hash(d));
  CHECK(config_hash(a) != config_hash(c));
  CHECK(config_hash(a).size() == 16);
  CHECK(parse_config(config_to_json(a).dump()).seed == a.seed);
  CHECK(config_to_json(parse_config(config_to_json(a).dump())) == config_to_json(a));
}

TEST_CASE("AKL_THREADS caps the worker count") {
  ::setenv("AKL_THREADS", "1", 1);
  CHECK(configured_threads() == 1);
  ::setenv("AKL_THREADS", "3", 1);
  CHECK(configured_threads() == 3);
  ::setenv("AKL_THREADS", "zero", 1);
  CHECK(configured_threads() >= 1);
  ::unsetenv("AKL_THREADS");
  CHECK(configured_threads() >= 1);
}

TEST_CASE("cli exit codes") {
  const fs::path dir = scratch("cli");
  CHECK(run_cli("") == 2);
  CHECK(run_cli("run") == 2);
  CHECK(run_cli("frobnicate") == 2);
  CHECK(run_cli("run --config " + (dir / "missing.json").string()) == 2);
  write_text(dir / "bad.json", R"({"experiment": "bv", "typo": 1})");
  CHECK(run_cli("run --config " + (dir / "bad.json").string()) == 2);
  CHECK(run_cli("gen --kind spiral --n 8 --seed 0 --out " + (dir / "x.csv").string()) == 2);
  CHECK(run_cli("gen --kind lowfreq --n 8 --seed 0") == 2);

  const fs::path fixture = fs::path(AKL_SOURCE_DIR) / "configs" / "bv.json";
  const fs::path out = dir / "bv";
  REQUIRE(run_cli("run --config " + fixture.string() + " --output-dir " + out.string()) == 0);
  CHECK(fs::exists(out / "summary.json"));
  CHECK(fs::exists(out / "bv.csv"));
  CHECK(fs::exists(out / "provenance.txt"));
  const auto summary = nlohmann::json::parse(read_text(out / "summary.json"));
  CHECK(summary.at("passed") == true);
  CHECK(summary.at("experiment") == "bv");

  write_text(dir / "fail.json", R"({"experiment": "lowrank", "output_dir": "o",
      "lowrank": {"ranks": [1], "noise_levels": [0.01], "trials": 2, "als_iterations": 5,
                  "exact_trials": 4, "exact_image_side": 16}})");
  CHECK(run_cli("run --config " + (dir / "fail.json").string() + " --output-dir " +
                (dir / "lr").string()) == 1);
  fs::remove_all(dir);
}

TEST_CASE("cli gen writes images and bundles") {
  const fs::path dir = scratch("gen");
  REQUIRE(run_cli("gen --kind lowrank --n 12 --seed 3 --rank 2 --out " + (dir / "u.csv").string()) == 0);
  const ImageGrid u = read_image(dir / "u.csv");
  CHECK(u.side() == 12);
  REQUIRE(run_cli("gen --kind lowrank --n 12 --seed 3 --rank 2 --out " + (dir / "v.csv").string()) == 0);
  CHECK(read_text(dir / "u.csv") == read_text(dir / "v.csv"));
  REQUIRE(run_cli("gen --kind weights --n 2 --d 6 --seed 1 --out " + (dir / "w.json").string()) == 0);
  CHECK(read_text(dir / "w.json").find("akl-bundle") != std::string::npos);
  fs::remove_all(dir);
}
