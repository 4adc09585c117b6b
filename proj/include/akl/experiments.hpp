#pragma once

// Config-driven experiment runs: each experiment writes CSV data, a JSON
// summary with its checks and a provenance header.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "akl/attention.hpp"

namespace akl {

inline constexpr const char* kVersion = "0.1.0";

struct BvSection {
  std::string image;  // resolved path; empty selects the synthetic image
  std::string kind = "checkerboard";
  std::size_t side = 4;
};

struct PatchifySection {
  std::size_t image_side = 224;
  std::size_t per_axis = 14;
  std::size_t channels = 3;
  std::size_t decoder_d = 512;
  double mask_ratio = 0.75;
  std::size_t selection_seeds = 100;
};

struct LowrankSection {
  std::vector<std::size_t> ranks{1, 2};
  std::vector<std::size_t> patch_sides{8};
  std::vector<std::size_t> per_axis{4};
  std::vector<double> noise_levels{1e-3, 1e-2};
  std::size_t trials = 40;  // the median is compared against the first half
  std::size_t als_iterations = 200;
  std::size_t exact_trials = 100;
  std::size_t exact_rank = 1;
  std::size_t exact_image_side = 64;
  std::size_t exact_per_axis = 4;
};

struct KernelSection {
  std::size_t instances = 1000;
  std::size_t max_p = 64;
  std::size_t max_d = 128;
  double gamma = 1.0;
  std::size_t p = 16;
  std::size_t d = 16;
  std::vector<std::size_t> decay_n{4, 8, 16};
  std::size_t decay_d = 64;
  std::vector<double> spectrum_gammas{0.5, 1.0, 2.0};
};

struct StabilitySection {
  std::vector<std::size_t> n_values{4, 8, 16, 32};
  std::size_t seeds = 20;
  std::size_t layers = 8;
  double gamma = 1.0;
  std::size_t patch_side = 8;
  std::size_t channels = 1;
  AttentionVariant variant = AttentionVariant::rbf;
  std::uint64_t image_seed = 1;
  std::size_t comparison_seeds = 5;  // symmetrized-variant companion scan
  double near_delta = 2.0;
};

struct FredholmSection {
  std::size_t p = 16;
  std::size_t d = 4;
  double beta = 0.1;
  std::size_t grid_n = 8;
  double gamma = 1.0;
  double pinv_tol = 1e-14;
  double noise = 1e-8;
  std::vector<double> betas{0.01, 0.1, 1.0, 10.0};
};

struct InterpolationSection {
  std::vector<std::size_t> n_values{4, 8, 16, 32};
  std::size_t seeds = 10;
  double mask_ratio = 0.75;
  std::size_t patch_side = 8;
  std::size_t channels = 1;
  std::uint64_t image_seed = 1;
  std::string mask_token = "zero";  // zero | mean | random
  std::size_t weight_cases = 100;
};

struct ExperimentConfig {
  std::string experiment;
  std::uint64_t seed = 0;
  std::string output_dir = "akl_out";
  BvSection bv;
  PatchifySection patchify;
  LowrankSection lowrank;
  KernelSection kernel;
  StabilitySection stability;
  FredholmSection fredholm;
  InterpolationSection interpolation;
};

/// Strict parse: unknown keys, wrong types and out-of-range values throw
/// InvalidConfiguration. Relative image paths resolve against base_dir.
ExperimentConfig parse_config(const std::string& text,
                              const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);

/// Normalised echo of the full configuration.
nlohmann::ordered_json config_to_json(const ExperimentConfig& config);

/// FNV-1a 64 of the normalised echo, hex.
std::string config_hash(const ExperimentConfig& config);

struct Check {
  std::string name;
  double value = 0.0;
  std::string relation;  // "<=", ">=", "in"
  double lo = 0.0;       // threshold, or lower end for "in"
  double hi = 0.0;       // upper end for "in"
  bool passed = false;
};

struct ExperimentOutput {
  std::string name;
  std::vector<Check> checks;
  nlohmann::ordered_json summary = nlohmann::ordered_json::object();
  std::vector<std::string> files;

  bool passed() const;
};

struct RunResult {
  std::vector<ExperimentOutput> experiments;
  bool passed() const;
  int exit_code() const { return passed() ? 0 : 1; }
};

/// Runs the configured experiment(s) and writes artifacts into
/// config.output_dir.
RunResult run_experiments(const ExperimentConfig& config);

ExperimentOutput run_bv(const ExperimentConfig& c, const std::filesystem::path& dir);
ExperimentOutput run_patchify(const ExperimentConfig& c, const std::filesystem::path& dir);
ExperimentOutput run_lowrank(const ExperimentConfig& c, const std::filesystem::path& dir);
ExperimentOutput run_kernel(const ExperimentConfig& c, const std::filesystem::path& dir);
ExperimentOutput run_stability(const ExperimentConfig& c, const std::filesystem::path& dir);
ExperimentOutput run_fredholm(const ExperimentConfig& c, const std::filesystem::path& dir);
ExperimentOutput run_interpolation(const ExperimentConfig& c, const std::filesystem::path& dir);

/// Shapes produced by running the encoder/decoder pipeline once at the
/// configured geometry.
struct GeometryReport {
  std::size_t patches = 0;
  std::size_t patch_side = 0;
  std::size_t encoder_d = 0;
  std::size_t decoder_d = 0;
  std::size_t visible = 0;
  std::size_t reconstructed_side = 0;
  std::size_t reconstructed_channels = 0;
  bool consistent = false;  // every stage produced the expected shape
};

GeometryReport geometry_self_test(const PatchifySection& g, std::uint64_t seed);

}  // namespace akl
