#pragma once

// Pixel grids, the graph BV seminorm and non-overlapping patch decomposition.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "akl/common.hpp"

namespace akl {

/// N x N image with c in {1, 3} channels stored row-major with channels
/// interleaved, plus nonnegative weights on the 4-neighbour edges.
///
/// Each undirected edge carries a single weight, so w_ij = w_ji by
/// construction. Weights default to 1.
class ImageGrid {
 public:
  ImageGrid(std::size_t side, std::size_t channels);
  ImageGrid(std::size_t side, std::size_t channels, std::vector<double> pixels);

  std::size_t side() const { return side_; }
  std::size_t channels() const { return channels_; }

  double& at(std::size_t row, std::size_t col, std::size_t ch = 0) {
    return pixels_[(row * side_ + col) * channels_ + ch];
  }
  double at(std::size_t row, std::size_t col, std::size_t ch = 0) const {
    return pixels_[(row * side_ + col) * channels_ + ch];
  }

  std::span<const double> pixels() const { return pixels_; }
  std::span<double> pixels() { return pixels_; }

  /// Weight of the edge (row, col) -- (row, col + 1).
  double right_weight(std::size_t row, std::size_t col) const {
    return right_[row * (side_ - 1) + col];
  }
  /// Weight of the edge (row, col) -- (row + 1, col).
  double down_weight(std::size_t row, std::size_t col) const {
    return down_[row * side_ + col];
  }
  void set_right_weight(std::size_t row, std::size_t col, double w);
  void set_down_weight(std::size_t row, std::size_t col, double w);
  void set_uniform_weights(double w);

  /// Channel `ch` as an N x N matrix.
  Matrix channel(std::size_t ch) const;
  void set_channel(std::size_t ch, const Matrix& values);

  /// Throws InvalidInput on a non-finite pixel.
  void require_finite() const;

  friend bool operator==(const ImageGrid&, const ImageGrid&) = default;

 private:
  std::size_t side_;
  std::size_t channels_;
  std::vector<double> pixels_;
  std::vector<double> right_;
  std::vector<double> down_;
};

/// Sum over pixels of sqrt(sum over neighbours of w_ij (u_i - u_j)^2),
/// evaluated per channel and summed. Boundary pixels have fewer neighbours.
double bv_seminorm(const ImageGrid& img);

/// Same seminorm restricted to the square window [row0, row0+size) x
/// [col0, col0+size); only edges with both ends inside the window count.
double bv_seminorm_window(const ImageGrid& img, std::size_t row0,
                          std::size_t col0, std::size_t size);

struct PatchRange {
  std::size_t row0;
  std::size_t col0;
  std::size_t size;
};

/// Values of one patch: side x side x channels, same layout as ImageGrid.
struct PatchArray {
  std::size_t side = 0;
  std::size_t channels = 0;
  std::vector<double> values;

  double at(std::size_t row, std::size_t col, std::size_t ch = 0) const {
    return values[(row * side + col) * channels + ch];
  }
};

/// Equal-sized n x n decomposition of an N x N grid (N = n * N_c), patches in
/// row-major order, with an optional set of selected patch indices.
class Patchification {
 public:
  Patchification(std::size_t image_side, std::size_t per_axis,
                 std::size_t channels);

  std::size_t image_side() const { return image_side_; }
  std::size_t per_axis() const { return per_axis_; }
  std::size_t patch_side() const { return patch_side_; }
  std::size_t channels() const { return channels_; }
  std::size_t count() const { return per_axis_ * per_axis_; }

  const PatchRange& range(std::size_t index) const { return ranges_.at(index); }
  const std::vector<PatchRange>& ranges() const { return ranges_; }

  std::size_t patch_row(std::size_t index) const { return index / per_axis_; }
  std::size_t patch_col(std::size_t index) const { return index % per_axis_; }
  std::size_t index_of(std::size_t patch_row, std::size_t patch_col) const {
    return patch_row * per_axis_ + patch_col;
  }

  const std::optional<std::vector<std::size_t>>& selection() const {
    return selection_;
  }
  /// Stores a selection; indices must be distinct and in range.
  void set_selection(std::vector<std::size_t> indices);
  void clear_selection() { selection_.reset(); }

  /// True when the selection holds exactly one patch per patch-row and the
  /// patch-columns form a permutation of {0..n-1}.
  bool selection_is_row_permutation() const;

 private:
  std::size_t image_side_;
  std::size_t per_axis_;
  std::size_t patch_side_;
  std::size_t channels_;
  std::vector<PatchRange> ranges_;
  std::optional<std::vector<std::size_t>> selection_;
};

/// Throws InvalidPartition unless n divides N.
Patchification patchify(const ImageGrid& img, std::size_t n);

/// Restriction of img to one patch.
PatchArray restrict_patch(const ImageGrid& img, const Patchification& patches,
                          std::size_t index);
std::vector<PatchArray> restrict_all(const ImageGrid& img,
                                     const Patchification& patches);

/// sum_i E_i u_i: zero-pads each patch into the full grid and sums.
ImageGrid extension_sum(const Patchification& patches,
                        std::span<const PatchArray> patch_values);

/// One patch per patch-row, patch-columns a uniformly random permutation.
/// Throws InvalidInput if `patches` already carries a selection.
Patchification select_patches(const Patchification& patches,
                              std::uint64_t seed);

/// Degenerate complete selection (all n^2 patches).
Patchification select_all(const Patchification& patches);

/// Sum over patches of the intra-patch seminorm (inter-patch edges dropped).
double patchwise_bv(const ImageGrid& img, const Patchification& patches);

}  // namespace akl
