#include "akl/lowrank.hpp"

#include <cmath>
#include <limits>

#include "akl/parallel.hpp"
#include "akl/stats.hpp"
#include "akl/synthetic.hpp"

namespace akl {

ImageGrid LowRankModel::approximation(std::size_t side) const {
  ImageGrid out(side, left.size());
  for (std::size_t ch = 0; ch < left.size(); ++ch)
    out.set_channel(ch, left[ch] * right[ch].transpose());
  return out;
}

LowRankModel best_rank_r(const ImageGrid& img, std::size_t r) {
  img.require_finite();
  if (r < 1 || r > img.side())
    throw InvalidInput("best_rank_r: r must be in [1, N]");
  LowRankModel model;
  model.rank = r;
  const auto ri = static_cast<Eigen::Index>(r);
  for (std::size_t ch = 0; ch < img.channels(); ++ch) {
    Eigen::JacobiSVD<Matrix> svd(img.channel(ch),
                                 Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vector& s = svd.singularValues();
    model.left.push_back(svd.matrixU().leftCols(ri) * s.head(ri).asDiagonal());
    model.right.push_back(svd.matrixV().leftCols(ri));
    const double tail = ri < s.size() ? s(ri) : 0.0;
    model.epsilon = std::max(model.epsilon, tail);
  }
  ImageGrid residual = img;
  const ImageGrid approx = model.approximation(img.side());
  for (std::size_t i = 0; i < residual.pixels().size(); ++i)
    residual.pixels()[i] -= approx.pixels()[i];
  model.epsilon_bv = bv_seminorm(residual);
  return model;
}

PatchEmbeddingMatrix embed_selected(const ImageGrid& img,
                                    const Patchification& sel) {
  if (!sel.selection())
    throw InvalidInput("embed_selected: patchification has no selection");
  const auto& idx = *sel.selection();
  const auto nc = sel.patch_side();
  const auto d = static_cast<Eigen::Index>(nc * nc * sel.channels());
  PatchEmbeddingMatrix out{Matrix(static_cast<Eigen::Index>(idx.size()), d), nc,
                           sel.channels()};
  for (std::size_t row = 0; row < idx.size(); ++row) {
    const PatchArray patch = restrict_patch(img, sel, idx[row]);
    for (Eigen::Index k = 0; k < d; ++k)
      out.y(static_cast<Eigen::Index>(row), k) = patch.values[static_cast<std::size_t>(k)];
  }
  return out;
}

PatchArray unflatten_row(const PatchEmbeddingMatrix& y, Eigen::Index row) {
  PatchArray out{y.patch_side, y.channels, {}};
  out.values.resize(static_cast<std::size_t>(y.y.cols()));
  for (Eigen::Index k = 0; k < y.y.cols(); ++k)
    out.values[static_cast<std::size_t>(k)] = y.y(row, k);
  return out;
}

std::string_view to_string(AlsStatus s) {
  return s == AlsStatus::converged ? "converged" : "not_converged";
}

namespace {

// Observed entries of one channel: values and, per row / column, the list of
// observed partner indices.
struct Observed {
  Matrix values;
  std::vector<std::vector<Eigen::Index>> cols_of_row;
  std::vector<std::vector<Eigen::Index>> rows_of_col;
};

Observed scatter_channel(const PatchEmbeddingMatrix& y, const Patchification& sel,
                         std::size_t ch) {
  const auto n = static_cast<Eigen::Index>(sel.image_side());
  Observed obs{Matrix::Zero(n, n), std::vector<std::vector<Eigen::Index>>(n),
               std::vector<std::vector<Eigen::Index>>(n)};
  const auto& idx = *sel.selection();
  const auto nc = sel.patch_side();
  for (std::size_t row = 0; row < idx.size(); ++row) {
    const auto& rg = sel.range(idx[row]);
    for (std::size_t r = 0; r < nc; ++r)
      for (std::size_t c = 0; c < nc; ++c) {
        const auto gr = static_cast<Eigen::Index>(rg.row0 + r);
        const auto gc = static_cast<Eigen::Index>(rg.col0 + c);
        const auto k = static_cast<Eigen::Index>((r * nc + c) * sel.channels() + ch);
        obs.values(gr, gc) = y.y(static_cast<Eigen::Index>(row), k);
        obs.cols_of_row[static_cast<std::size_t>(gr)].push_back(gc);
        obs.rows_of_col[static_cast<std::size_t>(gc)].push_back(gr);
      }
  }
  return obs;
}

// Least-squares update of every row of `target` against the fixed factor.
void als_half_step(const Matrix& values, bool by_row,
                   const std::vector<std::vector<Eigen::Index>>& partners,
                   const Matrix& fixed, Matrix& target) {
  const Eigen::Index r = fixed.cols();
  for (std::size_t i = 0; i < partners.size(); ++i) {
    const auto& js = partners[i];
    const auto ii = static_cast<Eigen::Index>(i);
    if (js.empty()) {
      target.row(ii).setZero();
      continue;
    }
    Matrix a(static_cast<Eigen::Index>(js.size()), r);
    Vector b(static_cast<Eigen::Index>(js.size()));
    for (std::size_t t = 0; t < js.size(); ++t) {
      const auto ti = static_cast<Eigen::Index>(t);
      a.row(ti) = fixed.row(js[t]);
      b(ti) = by_row ? values(ii, js[t]) : values(js[t], ii);
    }
    target.row(ii) = a.colPivHouseholderQr().solve(b).transpose();
  }
}

double observed_residual(const Observed& obs, const Matrix& left,
                         const Matrix& right) {
  double s = 0.0;
  for (std::size_t i = 0; i < obs.cols_of_row.size(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    for (auto j : obs.cols_of_row[i]) {
      const double d = obs.values(ii, j) - left.row(ii).dot(right.row(j));
      s += d * d;
    }
  }
  return s;
}

double observed_energy(const Observed& obs) {
  double s = 0.0;
  for (std::size_t i = 0; i < obs.cols_of_row.size(); ++i)
    for (auto j : obs.cols_of_row[i]) {
      const double v = obs.values(static_cast<Eigen::Index>(i), j);
      s += v * v;
    }
  return s;
}

}  // namespace

Reconstruction reconstruct(const PatchEmbeddingMatrix& y,
                           const Patchification& sel, const AlsOptions& options) {
  if (!sel.selection()) throw InvalidInput("reconstruct: selection required");
  if (y.y.rows() != static_cast<Eigen::Index>(sel.selection()->size()) ||
      y.patch_side != sel.patch_side() || y.channels != sel.channels())
    throw InvalidInput("reconstruct: embedding does not match selection");
  require_finite(y.y, "reconstruct: y");
  if (options.iterations < 1) throw InvalidInput("reconstruct: iters must be >= 1");
  const bool complete = sel.selection()->size() == sel.count();
  if (options.rank < 1 ||
      (complete ? options.rank > sel.image_side() : options.rank >= sel.patch_side()))
    throw InvalidInput("reconstruct: rank must satisfy 1 <= r < N_c "
                       "(r <= N with complete sampling)");

  const auto n = static_cast<Eigen::Index>(sel.image_side());
  const auto r = static_cast<Eigen::Index>(options.rank);
  Reconstruction out{ImageGrid(sel.image_side(), sel.channels()),
                     AlsStatus::converged, 0.0, 0, 0};
  double residual_sq = 0.0, energy = 0.0;
  for (std::size_t ch = 0; ch < sel.channels(); ++ch) {
    const Observed obs = scatter_channel(y, sel, ch);
    Rng rng(derive_seed(options.seed, ch));
    Matrix left = gaussian_matrix(rng, n, r);
    Matrix right = gaussian_matrix(rng, n, r);
    double prev = std::numeric_limits<double>::infinity();
    const double e = observed_energy(obs);
    std::size_t it = 0;
    for (; it < options.iterations; ++it) {
      als_half_step(obs.values, true, obs.cols_of_row, right, left);
      als_half_step(obs.values, false, obs.rows_of_col, left, right);
      const double res = observed_residual(obs, left, right);
      if (prev - res <= options.stall_tolerance * std::max(e, 1e-300)) {
        prev = res;
        ++it;
        break;
      }
      prev = res;
    }
    out.iterations = std::max(out.iterations, it);
    residual_sq += prev;
    energy += e;
    out.image.set_channel(ch, left * right.transpose());
  }
  out.fit_residual = energy > 0.0 ? std::sqrt(residual_sq / energy) : std::sqrt(residual_sq);
  out.status = out.fit_residual <= options.fit_threshold ? AlsStatus::converged
                                                        : AlsStatus::not_converged;
  out.output_rank = numerical_rank(out.image);
  return out;
}

std::size_t numerical_rank(const ImageGrid& img, double rel_tol) {
  std::size_t rank = 0;
  for (std::size_t ch = 0; ch < img.channels(); ++ch) {
    Eigen::JacobiSVD<Matrix> svd(img.channel(ch));
    const Vector& s = svd.singularValues();
    if (s.size() == 0 || s(0) == 0.0) continue;
    std::size_t k = 0;
    for (Eigen::Index i = 0; i < s.size(); ++i)
      if (s(i) > rel_tol * s(0)) ++k;
    rank = std::max(rank, k);
  }
  return rank;
}

RecoveryTrial run_recovery_trial(std::size_t rank, std::size_t patch_side,
                             std::size_t per_axis, double noise_level,
                             std::size_t trial, std::uint64_t seed,
                             std::size_t als_iterations) {
  RecoveryTrial t{rank, patch_side, per_axis, noise_level, trial, seed};
  const std::size_t side = patch_side * per_axis;
  SyntheticParams params;
  params.rank = rank;
  const ImageGrid clean =
      gen_synthetic(SyntheticKind::lowrank, side, params, derive_seed(seed, 0));
  ImageGrid u = clean;
  double noise_frob = 0.0;
  if (noise_level > 0.0) {
    Rng rng(derive_seed(seed, 1));
    const auto si = static_cast<Eigen::Index>(side);
    ImageGrid noise(side, 1);
    noise.set_channel(0, gaussian_matrix(rng, si, si));
    const double scale = noise_level * bv_seminorm(clean) / bv_seminorm(noise);
    for (std::size_t i = 0; i < u.pixels().size(); ++i) {
      const double v = scale * noise.pixels()[i];
      u.pixels()[i] += v;
      noise_frob += v * v;
    }
    t.epsilon = noise_level * bv_seminorm(clean);
  }
  t.epsilon_spectral = best_rank_r(u, rank).epsilon;

  const Patchification sel =
      select_patches(patchify(u, per_axis), derive_seed(seed, 2));
  const PatchEmbeddingMatrix y = embed_selected(u, sel);
  AlsOptions opts;
  opts.rank = rank;
  opts.iterations = als_iterations;
  opts.seed = derive_seed(seed, 3);
  // Cut-off: ten times the relative noise on the observed blocks.
  const double observed_frac =
      static_cast<double>(per_axis) / static_cast<double>(per_axis * per_axis);
  const double u_frob = std::sqrt(u.channel(0).squaredNorm());
  opts.fit_threshold =
      1e-6 + 10.0 * std::sqrt(noise_frob * observed_frac) /
                 std::max(u_frob * std::sqrt(observed_frac), 1e-300);
  const Reconstruction rec = reconstruct(y, sel, opts);

  ImageGrid diff = u;
  for (std::size_t i = 0; i < diff.pixels().size(); ++i)
    diff.pixels()[i] -= rec.image.pixels()[i];
  t.bv_error = bv_seminorm(diff);
  const double u_bv = bv_seminorm(u);
  t.relative_bv_error = u_bv > 0.0 ? t.bv_error / u_bv : t.bv_error;
  t.ratio = t.epsilon > 0.0 ? t.bv_error / t.epsilon
                            : std::numeric_limits<double>::quiet_NaN();
  t.fit_residual = rec.fit_residual;
  t.status = rec.status;
  return t;
}

RecoveryReport verify_recovery(const RecoveryScanConfig& config) {
  RecoveryReport report;
  struct CellKey { std::size_t r, nc, n; double level; std::uint64_t seed; };
  std::vector<CellKey> cells;
  for (auto r : config.ranks)
    for (auto nc : config.patch_sides)
      for (auto n : config.per_axis) {
        if (r >= nc) {
          report.rejected.push_back("r=" + std::to_string(r) + " N_c=" +
                                    std::to_string(nc) + " n=" + std::to_string(n) +
                                    ": requires r < N_c");
          continue;
        }
        for (std::size_t li = 0; li < config.noise_levels.size(); ++li) {
          const std::uint64_t key = ((r * 1000 + nc) * 1000 + n) * 1000 + li;
          cells.push_back({r, nc, n, config.noise_levels[li],
                           derive_seed(config.seed, key)});
        }
      }

  const std::size_t total = cells.size() * config.trials;
  report.trials.resize(total);
  par::for_each_index(total, [&](std::size_t k) {
    const auto& c = cells[k / config.trials];
    const std::size_t t = k % config.trials;
    report.trials[k] = run_recovery_trial(c.r, c.nc, c.n, c.level, t,
                                        derive_seed(c.seed, t),
                                        config.als_iterations);
  });

  for (std::size_t ci = 0; ci < cells.size(); ++ci) {
    const auto& c = cells[ci];
    RecoveryCell cell{c.r, c.nc, c.n, c.level, config.trials};
    std::vector<double> ratios, half, rel;
    for (std::size_t t = 0; t < config.trials; ++t) {
      const auto& tr = report.trials[ci * config.trials + t];
      rel.push_back(tr.relative_bv_error);
      if (tr.status != AlsStatus::converged) {
        ++cell.failures;
        continue;
      }
      if (std::isfinite(tr.ratio)) {
        ratios.push_back(tr.ratio);
        if (t < (config.trials + 1) / 2) half.push_back(tr.ratio);
      }
    }
    cell.median_relative_error = median(rel);
    if (!ratios.empty()) {
      cell.median_ratio = median(ratios);
      cell.p95_ratio = percentile(ratios, 0.95);
      cell.median_ratio_half = half.empty() ? cell.median_ratio : median(half);
      cell.ratio_grows = cell.median_ratio > 1.2 * cell.median_ratio_half;
    } else {
      cell.median_ratio = cell.p95_ratio = cell.median_ratio_half =
          std::numeric_limits<double>::quiet_NaN();
    }
    report.cells.push_back(cell);
  }
  return report;
}

}  // namespace akl
