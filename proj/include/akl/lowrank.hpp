#pragma once

// Rank-r approximation, selected-patch embeddings and the block-sampled
// reconstruction operator R, realised as alternating least squares over the
// observed patch blocks.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "akl/grid.hpp"

namespace akl {

/// Truncated SVD per channel: channel c ~= left[c] * right[c]^T.
struct LowRankModel {
  std::size_t rank = 0;
  std::vector<Matrix> left;   // N x r, columns scaled by singular values
  std::vector<Matrix> right;  // N x r
  double epsilon = 0.0;       // spectral residual, max over channels
  double epsilon_bv = 0.0;    // |u - u_r|_BV

  ImageGrid approximation(std::size_t side) const;
};

/// Optimal rank-r approximation per channel. 1 <= r <= N.
LowRankModel best_rank_r(const ImageGrid& img, std::size_t r);

/// p x d matrix, one flattened selected patch per row (d = N_c^2 c), rows in
/// selection order.
struct PatchEmbeddingMatrix {
  Matrix y;
  std::size_t patch_side = 0;
  std::size_t channels = 0;
};

PatchEmbeddingMatrix embed_selected(const ImageGrid& img,
                                    const Patchification& sel);

/// Row i of y reshaped back to an N_c x N_c x c patch.
PatchArray unflatten_row(const PatchEmbeddingMatrix& y, Eigen::Index row);

enum class AlsStatus { converged, not_converged };
std::string_view to_string(AlsStatus s);

struct Reconstruction {
  ImageGrid image;
  AlsStatus status = AlsStatus::not_converged;
  double fit_residual = 0.0;  // relative residual on observed entries
  std::size_t iterations = 0;
  std::size_t output_rank = 0;  // numerical rank, max over channels
};

struct AlsOptions {
  std::size_t rank = 1;
  std::size_t iterations = 200;
  std::uint64_t seed = 0;
  double fit_threshold = 1e-6;  // convergence status cut-off
  double stall_tolerance = 1e-14;
};

/// Fits a rank-r image to the observed patch blocks by ALS. Requires
/// r < N_c for partial sampling; with every patch observed 1 <= r <= N.
/// Non-convergence is reported in `status`, not thrown.
Reconstruction reconstruct(const PatchEmbeddingMatrix& y,
                           const Patchification& sel, const AlsOptions& options);

/// Singular values beyond index r below 1e-8 x leading, per channel.
std::size_t numerical_rank(const ImageGrid& img, double rel_tol = 1e-8);

/// Ranges for the Monte Carlo check of the patch-recovery bound.
struct RecoveryScanConfig {
  std::vector<std::size_t> ranks{1, 2};
  std::vector<std::size_t> patch_sides{8};
  std::vector<std::size_t> per_axis{4};
  std::vector<double> noise_levels{0.0, 1e-3, 1e-2};  // eps / |u0|_BV
  std::size_t trials = 20;
  std::size_t als_iterations = 200;
  std::uint64_t seed = 0;
};

struct RecoveryTrial {
  std::size_t rank = 0;
  std::size_t patch_side = 0;
  std::size_t per_axis = 0;
  double noise_level = 0.0;
  std::size_t trial = 0;
  std::uint64_t seed = 0;
  double epsilon = 0.0;           // |noise|_BV
  double epsilon_spectral = 0.0;  // best rank-r spectral residual
  double bv_error = 0.0;          // |u - R(y)|_BV
  double relative_bv_error = 0.0; // bv_error / |u|_BV
  double ratio = 0.0;             // bv_error / epsilon (NaN when epsilon = 0)
  double fit_residual = 0.0;
  AlsStatus status = AlsStatus::not_converged;
};

struct RecoveryCell {
  std::size_t rank = 0;
  std::size_t patch_side = 0;
  std::size_t per_axis = 0;
  double noise_level = 0.0;
  std::size_t trials = 0;
  std::size_t failures = 0;
  double median_ratio = 0.0;
  double p95_ratio = 0.0;
  double median_ratio_half = 0.0;  // first half of the trials
  double median_relative_error = 0.0;
  bool ratio_grows = false;        // median moved > 20% between half and full
};

struct RecoveryReport {
  std::vector<RecoveryTrial> trials;
  std::vector<RecoveryCell> cells;
  std::vector<std::string> rejected;  // configurations with r >= N_c
};

/// One trial: rank-r lowrank image plus BV-scaled noise, random row
/// permutation selection, ALS reconstruction.
RecoveryTrial run_recovery_trial(std::size_t rank, std::size_t patch_side,
                             std::size_t per_axis, double noise_level,
                             std::size_t trial, std::uint64_t seed,
                             std::size_t als_iterations);

RecoveryReport verify_recovery(const RecoveryScanConfig& config);

}  // namespace akl
