#include <doctest.h>

#include <cmath>

#include "akl/interpolation.hpp"
#include "akl/lowrank.hpp"
#include "akl/reference.hpp"
#include "akl/synthetic.hpp"

using namespace akl;

namespace {

TokenMatrix seeded_tokens(std::size_t n, std::size_t d, std::uint64_t seed) {
  Rng rng(seed);
  return TokenMatrix::from_content(gaussian_matrix(rng, static_cast<Eigen::Index>(n * n),
                                                   static_cast<Eigen::Index>(d)),
                                   positional_embedding(n, d));
}

RowVector seeded_row(Eigen::Index d, std::uint64_t seed) {
  Rng rng(seed);
  return gaussian_matrix(rng, 1, d);
}

}  // namespace

TEST_CASE("masking keeps the count, the positions and the unmasked rows") {
  const TokenMatrix t = seeded_tokens(4, 8, 1);
  const RowVector m = seeded_row(8, 2);
  const MaskedTokenSet mt = build_masked_input(t, 0.75, m, 3);
  CHECK(mt.masked.size() == 12);
  CHECK(mt.unmasked.size() == 4);
  CHECK(std::is_sorted(mt.masked.begin(), mt.masked.end()));
  for (auto i : mt.masked) {
    CHECK(mt.is_masked(i));
    CHECK(mt.y.row(static_cast<Eigen::Index>(i)) == m);
  }
  for (auto i : mt.unmasked) CHECK(mt.y.row(static_cast<Eigen::Index>(i)) == t.y.row(static_cast<Eigen::Index>(i)));
  CHECK(mt.positions == t.positions);
  CHECK(build_masked_input(t, 0.75, m, 3).masked == mt.masked);
  CHECK_THROWS_AS(build_masked_input(t, 0.95, m, 3), InvalidConfiguration);
  CHECK(build_masked_input(t, 0.0, m, 3).masked.empty());
}

TEST_CASE("mask rows are absorbed into a shift of the unmasked attention") {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const TokenMatrix t = seeded_tokens(4, 8, 10 + s);
    const AttentionWeights w = AttentionWeights::random(8, 20 + s);
    const MaskedTokenSet mt = build_masked_input(t, 0.75, seeded_row(8, 30 + s), 40 + s);
    Matrix a;
    const Matrix z = ref::dot_product_attention(mt.y, w.wq, w.wk, w.wv, &a);
    const Matrix v = ref::matmul(mt.y, w.wv);
    const RowVector vm = mt.m * w.wv;
    Matrix dec(z.rows(), z.cols());
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
      RowVector row = vm;
      for (auto j : mt.unmasked) row += a(i, static_cast<Eigen::Index>(j)) * (v.row(static_cast<Eigen::Index>(j)) - vm);
      dec.row(i) = row;
    }
    const Absorption ab = mask_absorption_decomposition(mt, w);
    CHECK((ab.z_full - z).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((ab.z_decomposed - dec).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(ab.discrepancy <= 1e-10);
  }
}

TEST_CASE("restricted error equals minus masked mass times the hull term") {
  const TokenMatrix t = seeded_tokens(4, 8, 5);
  const AttentionWeights w = AttentionWeights::random(8, 6);
  const MaskedTokenSet mt = build_masked_input(t, 0.5, seeded_row(8, 7), 8);
  Matrix a;
  ref::dot_product_attention(mt.y, w.wq, w.wk, w.wv, &a);
  const Matrix v = ref::matmul(mt.y, w.wv);
  const RowVector vm = mt.m * w.wv;
  const RestrictedError re = restricted_attention_error(mt, w);
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    double un = 0.0;
    for (auto j : mt.unmasked) un += a(i, static_cast<Eigen::Index>(j));
    RowVector h = RowVector::Zero(v.cols());
    for (auto j : mt.unmasked) h += a(i, static_cast<Eigen::Index>(j)) / un * (v.row(static_cast<Eigen::Index>(j)) - vm);
    CHECK(re.mass(i) == doctest::Approx(1.0 - un).epsilon(1e-12));
    CHECK(re.hull_norm(i) == doctest::Approx(h.norm()).epsilon(1e-10));
    CHECK(re.error(i) == doctest::Approx((1.0 - un) * h.norm()).epsilon(1e-9));
    CHECK((re.z_full.row(i) - re.z_restricted.row(i) + (1.0 - un) * h).norm() <= 1e-10);
  }
  CHECK(re.max_error == re.error.maxCoeff());
  CHECK(re.error(re.argmax) == re.max_error);
}

TEST_CASE("interpolation weights are the renormalised unmasked attention") {
  const TokenMatrix t = seeded_tokens(4, 8, 9);
  const AttentionWeights w = AttentionWeights::random(8, 10);
  const MaskedTokenSet mt = build_masked_input(t, 0.75, seeded_row(8, 11), 12);
  Matrix a;
  ref::dot_product_attention(mt.y, w.wq, w.wk, w.wv, &a);
  for (auto i : mt.masked) {
    const Vector wts = interpolation_weights(mt, w, i);
    REQUIRE(wts.size() == static_cast<Eigen::Index>(mt.unmasked.size()));
    CHECK(std::abs(wts.sum() - 1.0) <= 1e-12);
    CHECK(wts.minCoeff() >= 0.0);
    double un = 0.0;
    for (auto j : mt.unmasked) un += a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    for (std::size_t k = 0; k < mt.unmasked.size(); ++k)
      CHECK(wts(static_cast<Eigen::Index>(k)) ==
            doctest::Approx(a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(mt.unmasked[k])) / un)
                .epsilon(1e-12));
  }
  CHECK_THROWS_AS(interpolation_weights(mt, w, mt.unmasked.front()), InvalidInput);
}

TEST_CASE("patchwise-constant ground truth is reconstructed exactly") {
  // every patch is constant, so any convex combination of patches differs
  // from the truth by a constant and has zero seminorm
  const std::size_t n = 4, nc = 2;
  ImageGrid img(n * nc, 1);
  for (std::size_t r = 0; r < n * nc; ++r)
    for (std::size_t c = 0; c < n * nc; ++c)
      img.at(r, c) = static_cast<double>((r / nc) * 7 + (c / nc) * 3) / 40.0;
  const Patchification pf = patchify(img, n);
  const PatchEmbeddingMatrix emb = embed_selected(img, select_all(pf));
  const TokenMatrix t = TokenMatrix::from_content(emb.y, positional_embedding(n, 4));
  AttentionWeights w = AttentionWeights::random(4, 2);
  w.wv = Matrix::Identity(4, 4);
  const MaskedTokenSet mt = build_masked_input(t, 0.75, RowVector::Zero(4), 3);
  const ReconstructionBound b = reconstruction_error_bound(mt, w, img, pf);
  CHECK(b.rows.size() == 16);
  CHECK(b.masked_max <= 1e-12);
  CHECK(b.unmasked_sup <= 1e-12);
  CHECK(b.correction == 0.0);
  CHECK(b.c_hat == 0.0);
}

TEST_CASE("reconstruction bound bookkeeping") {
  const std::size_t n = 4, nc = 2;
  const ImageGrid img = gen_synthetic(SyntheticKind::lowfreq, n * nc, {}, 4);
  const Patchification pf = patchify(img, n);
  const PatchEmbeddingMatrix emb = embed_selected(img, select_all(pf));
  const TokenMatrix t = TokenMatrix::from_content(emb.y, positional_embedding(n, 4));
  AttentionWeights w = AttentionWeights::random(4, 5);
  w.wv = Matrix::Identity(4, 4);
  const MaskedTokenSet mt = build_masked_input(t, 0.5, RowVector::Zero(4), 6);
  const ReconstructionBound b = reconstruction_error_bound(mt, w, img, pf);
  std::size_t masked = 0;
  double mmax = 0.0, usup = 0.0;
  for (const auto& r : b.rows) {
    CHECK(r.masked == mt.is_masked(r.index));
    if (r.masked) {
      ++masked;
      mmax = std::max(mmax, r.error);
    } else {
      usup = std::max(usup, r.error);
    }
  }
  CHECK(masked == 8);
  CHECK(b.masked_max == mmax);
  CHECK(b.unmasked_sup == usup);
  CHECK(b.bound_rhs == b.unmasked_sup + b.correction);
  CHECK_THROWS_AS(reconstruction_error_bound(mt, w, img, patchify(img, 2)), InvalidInput);
}
