#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include "akl/bundle.hpp"
#include "akl/experiments.hpp"
#include "akl/fredholm.hpp"
#include "akl/image_io.hpp"
#include "akl/synthetic.hpp"

namespace {

constexpr int kUsage = 2;

int run(const std::string& config_path, const std::optional<std::string>& output_dir,
        const std::optional<std::uint64_t>& seed) {
  akl::ExperimentConfig config = akl::load_config(config_path);
  if (output_dir) config.output_dir = *output_dir;
  if (seed) config.seed = *seed;
  const akl::RunResult result = akl::run_experiments(config);
  for (const auto& e : result.experiments) {
    for (const auto& c : e.checks) {
      std::cout << (c.passed ? "PASS " : "FAIL ") << e.name << '.' << c.name << ' '
                << akl::format_double(c.value) << ' ' << c.relation << ' '
                << akl::format_double(c.lo);
      if (c.relation == "in") std::cout << ' ' << akl::format_double(c.hi);
      std::cout << '\n';
    }
  }
  std::cout << (result.passed() ? "all checks passed" : "some checks failed") << " ("
            << config.output_dir << ")\n";
  return result.exit_code();
}

void gen(const std::string& kind, std::size_t n, std::uint64_t seed, const std::string& out,
         std::size_t channels, std::size_t rank, std::size_t d, double beta) {
  if (kind == "tokens") {
    akl::Rng rng(seed);
    const auto p = static_cast<Eigen::Index>(n * n);
    const akl::Matrix y = akl::gaussian_matrix(rng, p, static_cast<Eigen::Index>(d));
    akl::write_bundle(akl::to_bundle(akl::TokenMatrix::from_content(
                          y, akl::positional_embedding(n, d))),
                      out);
  } else if (kind == "weights") {
    akl::write_bundle(akl::to_bundle(akl::AttentionWeights::random(d, seed)), out);
  } else if (kind == "fredholm") {
    akl::write_bundle(akl::to_bundle(akl::rbf_grid_problem(n, 1.0, d, beta, seed)), out);
  } else {
    akl::SyntheticParams params;
    params.channels = channels;
    params.rank = rank;
    akl::write_image(akl::gen_synthetic(akl::parse_synthetic_kind(kind), n, params, seed), out);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Attention kernel laboratory"};
  app.set_version_flag("--version", std::string(akl::kVersion));
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::string> output_dir;
  std::optional<std::uint64_t> run_seed;
  auto* run_cmd = app.add_subcommand("run", "Run the experiments named in a config file");
  run_cmd->add_option("--config", config_path, "JSON config")->required();
  run_cmd->add_option("--output-dir", output_dir, "Artifact directory");
  run_cmd->add_option("--seed", run_seed, "Base seed");

  std::string kind, out;
  std::size_t n = 0, channels = 1, rank = 1, d = 16;
  std::uint64_t seed = 0;
  double beta = 0.1;
  auto* gen_cmd = app.add_subcommand("gen", "Write a synthetic image or data bundle");
  gen_cmd->add_option("--kind", kind, "lowfreq, lowrank, checkerboard, tokens, weights, fredholm")
      ->required()
      ->check(CLI::IsMember({"lowfreq", "lowrank", "checkerboard", "tokens", "weights", "fredholm"}));
  gen_cmd->add_option("--n", n, "Image side, or patches per axis for bundles")
      ->required()
      ->check(CLI::Range(std::size_t{1}, std::size_t{1} << 14));
  gen_cmd->add_option("--seed", seed, "Seed");
  gen_cmd->add_option("--out", out, "Output path (.csv/.pgm/.ppm, or .json/.csv bundle)")->required();
  gen_cmd->add_option("--channels", channels, "Image channels")->check(CLI::IsMember({1, 3}));
  gen_cmd->add_option("--rank", rank, "Rank for lowrank images");
  gen_cmd->add_option("--d", d, "Token width for bundles");
  gen_cmd->add_option("--beta", beta, "Regularisation for fredholm bundles");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return e.get_exit_code() == 0 ? app.exit(e) : (app.exit(e), kUsage);
  }

  akl::apply_thread_limit();
  try {
    if (*run_cmd) return run(config_path, output_dir, run_seed);
    gen(kind, n, seed, out, channels, rank, d, beta);
    return 0;
  } catch (const akl::InvalidConfiguration& e) {
    std::cerr << "akl: " << e.what() << '\n';
    return kUsage;
  } catch (const akl::InvalidInput& e) {
    std::cerr << "akl: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "akl: " << e.what() << '\n';
    return 1;
  }
}
