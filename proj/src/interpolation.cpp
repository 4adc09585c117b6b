#include "akl/interpolation.hpp"

#include <algorithm>
#include <cmath>

#include "akl/parallel.hpp"

namespace akl {

bool MaskedTokenSet::is_masked(std::size_t i) const {
  return std::binary_search(masked.begin(), masked.end(), i);
}

void MaskedTokenSet::validate() const {
  const auto p = static_cast<std::size_t>(y.rows());
  if (masked.size() + unmasked.size() != p)
    throw InvalidInput("MaskedTokenSet: index sets must partition the rows");
  std::vector<std::size_t> all(masked);
  all.insert(all.end(), unmasked.begin(), unmasked.end());
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < p; ++i)
    if (all[i] != i) throw InvalidInput("MaskedTokenSet: index sets must partition the rows");
  if (unmasked.size() < 2)
    throw InvalidConfiguration("MaskedTokenSet: at least 2 unmasked rows required");
  if (m.size() != y.cols()) throw InvalidInput("MaskedTokenSet: mask width mismatch");
  for (auto i : masked)
    if (y.row(static_cast<Eigen::Index>(i)) != m)
      throw InvalidInput("MaskedTokenSet: masked rows must equal m");
  require_finite(y, "MaskedTokenSet.y");
}

MaskedTokenSet build_masked_input(const TokenMatrix& tokens, double mask_ratio,
                                  const RowVector& m, std::uint64_t seed) {
  tokens.validate();
  if (!(mask_ratio >= 0.0 && mask_ratio < 1.0))
    throw InvalidConfiguration("build_masked_input: mask_ratio must be in [0, 1)");
  if (m.size() != tokens.width()) throw InvalidInput("build_masked_input: mask width mismatch");
  require_finite(m, "mask token");
  const auto p = static_cast<std::size_t>(tokens.count());
  const auto k = static_cast<std::size_t>(std::llround(mask_ratio * static_cast<double>(p)));
  if (p - k < 2)
    throw InvalidConfiguration("build_masked_input: fewer than 2 unmasked rows");
  Rng rng(seed);
  const std::vector<std::size_t> perm = random_permutation(p, rng);
  MaskedTokenSet mt{tokens.y, tokens.positions,
                    std::vector<std::size_t>(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(k)),
                    std::vector<std::size_t>(perm.begin() + static_cast<std::ptrdiff_t>(k), perm.end()),
                    m};
  std::sort(mt.masked.begin(), mt.masked.end());
  std::sort(mt.unmasked.begin(), mt.unmasked.end());
  for (auto i : mt.masked) mt.y.row(static_cast<Eigen::Index>(i)) = m;
  return mt;
}

namespace {

struct Projected {
  Matrix a;
  Matrix v;
  RowVector vm;
};

Projected project(const MaskedTokenSet& mt, const AttentionWeights& w,
                  AttentionVariant variant) {
  mt.validate();
  w.validate();
  if (mt.y.cols() != w.width()) throw InvalidInput("masked attention: width mismatch");
  return {attention_matrix(mt.y * w.wq, mt.y * w.wk, variant, w.gamma), mt.y * w.wv,
          mt.m * w.wv};
}

}  // namespace

Absorption mask_absorption_decomposition(const MaskedTokenSet& mt,
                                         const AttentionWeights& w,
                                         AttentionVariant variant) {
  const Projected pr = project(mt, w, variant);
  Absorption out;
  out.z_full = par::apply_rows(pr.a, pr.v);
  out.z_decomposed = Matrix(pr.a.rows(), pr.v.cols());
  for (Eigen::Index i = 0; i < pr.a.rows(); ++i) {
    RowVector acc = pr.vm;
    for (auto j : mt.unmasked) {
      const auto jj = static_cast<Eigen::Index>(j);
      acc += pr.a(i, jj) * (pr.v.row(jj) - pr.vm);
    }
    out.z_decomposed.row(i) = acc;
  }
  out.discrepancy = par::row_norms(out.z_full - out.z_decomposed).maxCoeff();
  return out;
}

RestrictedError restricted_attention_error(const MaskedTokenSet& mt,
                                           const AttentionWeights& w,
                                           AttentionVariant variant) {
  const Projected pr = project(mt, w, variant);
  const auto p = pr.a.rows();
  RestrictedError out;
  out.z_full = par::apply_rows(pr.a, pr.v);
  out.z_restricted = Matrix(p, pr.v.cols());
  out.mass = Vector(p);
  out.hull_norm = Vector(p);
  for (Eigen::Index i = 0; i < p; ++i) {
    double kept = 0.0;
    for (auto j : mt.unmasked) kept += pr.a(i, static_cast<Eigen::Index>(j));
    RowVector hull = RowVector::Zero(pr.v.cols());
    for (auto j : mt.unmasked) {
      const auto jj = static_cast<Eigen::Index>(j);
      hull += (pr.a(i, jj) / kept) * (pr.v.row(jj) - pr.vm);
    }
    out.z_restricted.row(i) = pr.vm + hull;
    out.mass(i) = 1.0 - kept;
    out.hull_norm(i) = hull.norm();
  }
  out.error = par::row_norms(out.z_full - out.z_restricted);
  out.max_error = out.error.maxCoeff(&out.argmax);
  return out;
}

Vector interpolation_weights(const MaskedTokenSet& mt, const AttentionWeights& w,
                             std::size_t i, AttentionVariant variant) {
  if (i >= static_cast<std::size_t>(mt.count()) || !mt.is_masked(i))
    throw InvalidInput("interpolation_weights: index is not masked");
  const Projected pr = project(mt, w, variant);
  Vector out(static_cast<Eigen::Index>(mt.unmasked.size()));
  for (std::size_t t = 0; t < mt.unmasked.size(); ++t)
    out(static_cast<Eigen::Index>(t)) =
        pr.a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(mt.unmasked[t]));
  return out / out.sum();
}

namespace {

double patch_bv(const std::vector<double>& values, std::size_t side,
                std::size_t channels) {
  return bv_seminorm(ImageGrid(side, channels, values));
}

}  // namespace

ReconstructionBound reconstruction_error_bound(const MaskedTokenSet& mt,
                                               const AttentionWeights& w,
                                               const ImageGrid& ground_truth,
                                               const Patchification& patches,
                                               const Matrix& reproj) {
  if (patches.image_side() != ground_truth.side() ||
      patches.channels() != ground_truth.channels() ||
      patches.count() != static_cast<std::size_t>(mt.count()))
    throw InvalidInput("reconstruction_error_bound: patches do not match image or tokens");
  const auto nc = patches.patch_side();
  const auto dp = static_cast<Eigen::Index>(nc * nc * patches.channels());
  if (reproj.size() > 0 ? (reproj.rows() != mt.y.cols() || reproj.cols() != dp)
                        : mt.y.cols() != dp)
    throw InvalidInput("reconstruction_error_bound: embedding does not reshape to a patch");
  const Projected pr = project(mt, w, AttentionVariant::softmax);
  Matrix z = par::apply_rows(pr.a, pr.v);
  if (reproj.size() > 0) z = z * reproj;

  ReconstructionBound out;
  double max_patch_bv = 0.0;
  for (std::size_t i = 0; i < patches.count(); ++i) {
    const PatchArray truth = restrict_patch(ground_truth, patches, i);
    std::vector<double> diff(truth.values.size());
    for (std::size_t k = 0; k < diff.size(); ++k)
      diff[k] = z(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) - truth.values[k];
    PatchErrorRow row{i, mt.is_masked(i), patch_bv(diff, nc, patches.channels())};
    max_patch_bv = std::max(max_patch_bv, patch_bv(truth.values, nc, patches.channels()));
    if (row.masked)
      out.masked_max = std::max(out.masked_max, row.error);
    else
      out.unmasked_sup = std::max(out.unmasked_sup, row.error);
    out.rows.push_back(row);
  }
  out.correction = max_patch_bv / static_cast<double>(patches.per_axis());
  out.bound_rhs = out.unmasked_sup + out.correction;
  out.ratio = out.bound_rhs > 0.0 ? out.masked_max / out.bound_rhs : 0.0;
  out.c_hat = out.correction > 0.0
                  ? std::max(0.0, out.masked_max - out.unmasked_sup) / out.correction
                  : 0.0;
  return out;
}

}  // namespace akl
