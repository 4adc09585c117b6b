#include "akl/grid.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace akl {

ImageGrid::ImageGrid(std::size_t side, std::size_t channels)
    : ImageGrid(side, channels,
                std::vector<double>(side * side * channels, 0.0)) {}

ImageGrid::ImageGrid(std::size_t side, std::size_t channels,
                     std::vector<double> pixels)
    : side_(side), channels_(channels), pixels_(std::move(pixels)) {
  if (side < 2) throw InvalidInput("ImageGrid: side must be >= 2");
  if (channels != 1 && channels != 3)
    throw InvalidInput("ImageGrid: channels must be 1 or 3");
  if (pixels_.size() != side * side * channels)
    throw InvalidInput("ImageGrid: pixel count does not match shape");
  right_.assign(side * (side - 1), 1.0);
  down_.assign((side - 1) * side, 1.0);
}

void ImageGrid::set_right_weight(std::size_t row, std::size_t col, double w) {
  if (!(w >= 0.0) || !std::isfinite(w))
    throw InvalidInput("edge weight must be finite and nonnegative");
  right_.at(row * (side_ - 1) + col) = w;
}

void ImageGrid::set_down_weight(std::size_t row, std::size_t col, double w) {
  if (!(w >= 0.0) || !std::isfinite(w))
    throw InvalidInput("edge weight must be finite and nonnegative");
  down_.at(row * side_ + col) = w;
}

void ImageGrid::set_uniform_weights(double w) {
  if (!(w >= 0.0) || !std::isfinite(w))
    throw InvalidInput("edge weight must be finite and nonnegative");
  std::fill(right_.begin(), right_.end(), w);
  std::fill(down_.begin(), down_.end(), w);
}

Matrix ImageGrid::channel(std::size_t ch) const {
  Matrix m(side_, side_);
  for (std::size_t r = 0; r < side_; ++r)
    for (std::size_t c = 0; c < side_; ++c) m(r, c) = at(r, c, ch);
  return m;
}

void ImageGrid::set_channel(std::size_t ch, const Matrix& values) {
  if (values.rows() != static_cast<Eigen::Index>(side_) ||
      values.cols() != static_cast<Eigen::Index>(side_))
    throw InvalidInput("set_channel: shape mismatch");
  for (std::size_t r = 0; r < side_; ++r)
    for (std::size_t c = 0; c < side_; ++c) at(r, c, ch) = values(r, c);
}

void ImageGrid::require_finite() const {
  for (double v : pixels_)
    if (!std::isfinite(v)) throw InvalidInput("ImageGrid: non-finite pixel");
}

double bv_seminorm_window(const ImageGrid& img, std::size_t row0,
                          std::size_t col0, std::size_t size) {
  img.require_finite();
  const std::size_t row_end = row0 + size;
  const std::size_t col_end = col0 + size;
  if (row_end > img.side() || col_end > img.side())
    throw InvalidInput("bv window exceeds image");
  const auto c = img.channels();
  // Per-row partial sums, reduced serially: the result does not depend on
  // the thread count.
  std::vector<double> row_sums(size, 0.0);
#pragma omp parallel for schedule(static)
  for (std::size_t r = row0; r < row_end; ++r) {
    double total = 0.0;
    for (std::size_t col = col0; col < col_end; ++col) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double u = img.at(r, col, ch);
        double s = 0.0;
        if (col > col0) {
          const double d = u - img.at(r, col - 1, ch);
          s += img.right_weight(r, col - 1) * d * d;
        }
        if (col + 1 < col_end) {
          const double d = u - img.at(r, col + 1, ch);
          s += img.right_weight(r, col) * d * d;
        }
        if (r > row0) {
          const double d = u - img.at(r - 1, col, ch);
          s += img.down_weight(r - 1, col) * d * d;
        }
        if (r + 1 < row_end) {
          const double d = u - img.at(r + 1, col, ch);
          s += img.down_weight(r, col) * d * d;
        }
        total += std::sqrt(s);
      }
    }
    row_sums[r - row0] = total;
  }
  return std::accumulate(row_sums.begin(), row_sums.end(), 0.0);
}

double bv_seminorm(const ImageGrid& img) {
  return bv_seminorm_window(img, 0, 0, img.side());
}

Patchification::Patchification(std::size_t image_side, std::size_t per_axis,
                               std::size_t channels)
    : image_side_(image_side), per_axis_(per_axis), channels_(channels) {
  if (per_axis == 0 || image_side % per_axis != 0)
    throw InvalidPartition("patch count " + std::to_string(per_axis) +
                           " does not divide image side " +
                           std::to_string(image_side));
  patch_side_ = image_side / per_axis;
  ranges_.reserve(per_axis * per_axis);
  for (std::size_t pr = 0; pr < per_axis; ++pr)
    for (std::size_t pc = 0; pc < per_axis; ++pc)
      ranges_.push_back({pr * patch_side_, pc * patch_side_, patch_side_});
}

void Patchification::set_selection(std::vector<std::size_t> indices) {
  std::vector<bool> seen(count(), false);
  for (auto i : indices) {
    if (i >= count()) throw InvalidInput("selection index out of range");
    if (seen[i]) throw InvalidInput("selection index repeated");
    seen[i] = true;
  }
  selection_ = std::move(indices);
}

bool Patchification::selection_is_row_permutation() const {
  if (!selection_ || selection_->size() != per_axis_) return false;
  std::vector<bool> row_seen(per_axis_, false), col_seen(per_axis_, false);
  for (auto i : *selection_) {
    const auto r = patch_row(i), c = patch_col(i);
    if (row_seen[r] || col_seen[c]) return false;
    row_seen[r] = col_seen[c] = true;
  }
  return true;
}

Patchification patchify(const ImageGrid& img, std::size_t n) {
  return Patchification(img.side(), n, img.channels());
}

PatchArray restrict_patch(const ImageGrid& img, const Patchification& patches,
                          std::size_t index) {
  if (img.side() != patches.image_side() ||
      img.channels() != patches.channels())
    throw InvalidInput("restrict_patch: image does not match patchification");
  const auto& rg = patches.range(index);
  PatchArray out{rg.size, img.channels(), {}};
  out.values.reserve(rg.size * rg.size * img.channels());
  for (std::size_t r = 0; r < rg.size; ++r)
    for (std::size_t c = 0; c < rg.size; ++c)
      for (std::size_t ch = 0; ch < img.channels(); ++ch)
        out.values.push_back(img.at(rg.row0 + r, rg.col0 + c, ch));
  return out;
}

std::vector<PatchArray> restrict_all(const ImageGrid& img,
                                     const Patchification& patches) {
  std::vector<PatchArray> out;
  out.reserve(patches.count());
  for (std::size_t i = 0; i < patches.count(); ++i)
    out.push_back(restrict_patch(img, patches, i));
  return out;
}

ImageGrid extension_sum(const Patchification& patches,
                        std::span<const PatchArray> patch_values) {
  if (patch_values.size() != patches.count())
    throw InvalidInput("extension_sum: expected one array per patch");
  ImageGrid out(patches.image_side(), patches.channels());
  const auto nc = patches.patch_side();
  const auto ch = patches.channels();
  for (std::size_t i = 0; i < patches.count(); ++i) {
    const auto& pv = patch_values[i];
    if (pv.side != nc || pv.channels != ch || pv.values.size() != nc * nc * ch)
      throw InvalidInput("extension_sum: patch " + std::to_string(i) +
                         " has the wrong shape");
    const auto& rg = patches.range(i);
    for (std::size_t r = 0; r < nc; ++r)
      for (std::size_t c = 0; c < nc; ++c)
        for (std::size_t k = 0; k < ch; ++k)
          out.at(rg.row0 + r, rg.col0 + c, k) += pv.at(r, c, k);
  }
  return out;
}

Patchification select_patches(const Patchification& patches,
                              std::uint64_t seed) {
  if (patches.selection())
    throw InvalidInput("select_patches: patchification already has a selection");
  const auto n = patches.per_axis();
  Rng rng(seed);
  const std::vector<std::size_t> cols = random_permutation(n, rng);
  Patchification out = patches;
  std::vector<std::size_t> sel(n);
  for (std::size_t r = 0; r < n; ++r) sel[r] = patches.index_of(r, cols[r]);
  out.set_selection(std::move(sel));
  return out;
}

Patchification select_all(const Patchification& patches) {
  Patchification out = patches;
  std::vector<std::size_t> sel(patches.count());
  std::iota(sel.begin(), sel.end(), 0);
  out.set_selection(std::move(sel));
  return out;
}

double patchwise_bv(const ImageGrid& img, const Patchification& patches) {
  double total = 0.0;
  for (const auto& rg : patches.ranges())
    total += bv_seminorm_window(img, rg.row0, rg.col0, rg.size);
  return total;
}

}  // namespace akl
