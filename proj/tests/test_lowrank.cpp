#include <doctest.h>

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>

#include "akl/lowrank.hpp"
#include "akl/synthetic.hpp"

using namespace akl;

namespace {

ImageGrid random_image(std::size_t side, std::size_t channels, std::uint64_t seed) {
  Rng rng(seed);
  ImageGrid img(side, channels);
  for (auto& v : img.pixels()) v = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  return img;
}

ImageGrid outer(const Vector& a, const Vector& b) {
  ImageGrid img(static_cast<std::size_t>(a.size()), 1);
  img.set_channel(0, a * b.transpose());
  return img;
}

double rel_bv_error(const ImageGrid& a, const ImageGrid& b) {
  ImageGrid d = a;
  for (std::size_t i = 0; i < d.pixels().size(); ++i) d.pixels()[i] -= b.pixels()[i];
  return bv_seminorm(d) / bv_seminorm(b);
}

}  // namespace

TEST_CASE("best rank-r residual is the (r+1)-th singular value") {
  const ImageGrid img = random_image(12, 3, 1);
  for (std::size_t r : {1, 3, 6}) {
    const LowRankModel m = best_rank_r(img, r);
    double worst = 0.0;
    for (std::size_t ch = 0; ch < 3; ++ch) {
      Eigen::JacobiSVD<Matrix> svd(img.channel(ch));
      const double sigma = svd.singularValues()(static_cast<Eigen::Index>(r));
      worst = std::max(worst, sigma);
      const Matrix resid = img.channel(ch) - m.approximation(12).channel(ch);
      CHECK(spectral_norm(resid) == doctest::Approx(sigma).epsilon(1e-10));
    }
    CHECK(m.epsilon == doctest::Approx(worst).epsilon(1e-12));
  }
  CHECK(best_rank_r(img, 12).epsilon <= 1e-12);
  CHECK_THROWS_AS(best_rank_r(img, 0), InvalidInput);
  CHECK_THROWS_AS(best_rank_r(img, 13), InvalidInput);
}

TEST_CASE("a rank-r image is its own best rank-r approximation") {
  SyntheticParams params;
  params.rank = 2;
  const ImageGrid img = gen_synthetic(SyntheticKind::lowrank, 16, params, 3);
  const LowRankModel m = best_rank_r(img, 2);
  CHECK(m.epsilon <= 1e-12);
  CHECK(m.epsilon_bv <= 1e-10);
  CHECK(numerical_rank(img) == 2);
}

TEST_CASE("selected patches flatten row by row and unflatten back") {
  const ImageGrid img = random_image(8, 3, 2);
  const Patchification sel = select_patches(patchify(img, 4), 5);
  const PatchEmbeddingMatrix emb = embed_selected(img, sel);
  CHECK(emb.y.rows() == 4);
  CHECK(emb.y.cols() == 2 * 2 * 3);
  for (Eigen::Index r = 0; r < 4; ++r) {
    const std::size_t idx = (*sel.selection())[static_cast<std::size_t>(r)];
    const PatchArray truth = restrict_patch(img, sel, idx);
    CHECK(unflatten_row(emb, r).values == truth.values);
    const auto& rg = sel.range(idx);
    CHECK(emb.y(r, 4) == img.at(rg.row0 + 0, rg.col0 + 1, 1));
  }
  CHECK_THROWS_AS(embed_selected(img, patchify(img, 4)), InvalidInput);
}

TEST_CASE("complete sampling recovers a rank-r image") {
  SyntheticParams params;
  params.rank = 2;
  params.channels = 3;
  const ImageGrid img = gen_synthetic(SyntheticKind::lowrank, 16, params, 7);
  const Patchification sel = select_all(patchify(img, 4));
  AlsOptions opts;
  opts.rank = 2;
  opts.seed = 1;
  const Reconstruction rec = reconstruct(embed_selected(img, sel), sel, opts);
  CHECK(rec.status == AlsStatus::converged);
  CHECK(rel_bv_error(rec.image, img) <= 1e-6);
  CHECK(rec.output_rank == 2);
}

TEST_CASE("partial sampling fits the observed blocks with a rank-r image") {
  SyntheticParams params;
  params.rank = 1;
  const ImageGrid img = gen_synthetic(SyntheticKind::lowrank, 16, params, 9);
  const Patchification sel = select_patches(patchify(img, 4), 2);
  AlsOptions opts;
  opts.rank = 1;
  opts.seed = 4;
  const PatchEmbeddingMatrix y = embed_selected(img, sel);
  const Reconstruction rec = reconstruct(y, sel, opts);
  CHECK(rec.fit_residual <= 1e-8);
  CHECK(rec.status == AlsStatus::converged);
  CHECK(rec.output_rank == 1);
  const PatchEmbeddingMatrix again = embed_selected(rec.image, sel);
  CHECK((again.y - y.y).cwiseAbs().maxCoeff() <= 1e-8);
  opts.rank = 4;
  CHECK_THROWS_AS(reconstruct(y, sel, opts), InvalidInput);
  opts.rank = 1;
  opts.iterations = 0;
  CHECK_THROWS_AS(reconstruct(y, sel, opts), InvalidInput);
}

TEST_CASE("one block per patch row and column leaves rank-1 images ambiguous") {
  // Rescaling the factor blocks a -> c_a a, b_pi(a) -> b_pi(a) / c_a keeps
  // every observed block and changes the unobserved ones.
  const std::size_t n = 4, nc = 4, side = n * nc;
  Rng rng(12);
  const Vector a = uniform_matrix(rng, side, 1, 0.5, 1.5);
  const Vector b = uniform_matrix(rng, side, 1, 0.5, 1.5);
  const Patchification sel = select_patches(patchify(outer(a, b), n), 13);
  Vector a2 = a, b2 = b;
  for (std::size_t row = 0; row < n; ++row) {
    const std::size_t col = sel.patch_col((*sel.selection())[row]);
    const double c = std::ldexp(1.0, static_cast<int>(row));
    a2.segment(static_cast<Eigen::Index>(row * nc), nc) *= c;
    b2.segment(static_cast<Eigen::Index>(col * nc), nc) /= c;
  }
  const ImageGrid u1 = outer(a, b), u2 = outer(a2, b2);
  const PatchEmbeddingMatrix y1 = embed_selected(u1, sel), y2 = embed_selected(u2, sel);
  CHECK((y1.y - y2.y).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(rel_bv_error(u1, u2) > 0.1);
  AlsOptions opts;
  opts.seed = 3;
  const Reconstruction r1 = reconstruct(y1, sel, opts), r2 = reconstruct(y2, sel, opts);
  CHECK(r1.image == r2.image);
  CHECK(std::max(rel_bv_error(r1.image, u1), rel_bv_error(r2.image, u2)) > 1e-6);
}

TEST_CASE("trial bookkeeping") {
  const RecoveryTrial clean = run_recovery_trial(1, 8, 4, 0.0, 0, 5, 50);
  CHECK(clean.epsilon == 0.0);
  CHECK(std::isnan(clean.ratio));
  const RecoveryTrial noisy = run_recovery_trial(1, 8, 4, 0.01, 1, 5, 50);
  CHECK(noisy.epsilon > 0.0);
  CHECK(noisy.ratio == doctest::Approx(noisy.bv_error / noisy.epsilon));
  CHECK(noisy.epsilon_spectral > 0.0);
  const RecoveryTrial same = run_recovery_trial(1, 8, 4, 0.01, 1, 5, 50);
  CHECK(same.bv_error == noisy.bv_error);
}

TEST_CASE("scan rejects r >= N_c and summarises cells") {
  RecoveryScanConfig c;
  c.ranks = {1, 4};
  c.patch_sides = {4};
  c.per_axis = {2};
  c.noise_levels = {0.01};
  c.trials = 4;
  c.als_iterations = 30;
  const RecoveryReport r = verify_recovery(c);
  CHECK(r.rejected.size() == 1);
  REQUIRE(r.cells.size() == 1);
  CHECK(r.trials.size() == 4);
  CHECK(r.cells[0].trials == 4);
  std::vector<double> ratios;
  for (const auto& t : r.trials) ratios.push_back(t.ratio);
  std::sort(ratios.begin(), ratios.end());
  CHECK(r.cells[0].median_ratio == doctest::Approx(0.5 * (ratios[1] + ratios[2])));
}
