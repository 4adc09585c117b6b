#include <doctest.h>

#include <cmath>

#include "akl/kernel_analysis.hpp"
#include "akl/reference.hpp"

using namespace akl;

namespace {

Matrix draw(Eigen::Index r, Eigen::Index c, std::uint64_t seed, double s = 1.0) {
  Rng rng(seed);
  return gaussian_matrix(rng, r, c, s);
}

double max_abs(const Matrix& m) { return m.cwiseAbs().maxCoeff(); }

}  // namespace

TEST_CASE("asymmetric kernel normalises to softmax attention") {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Matrix q = draw(12, 6, s), k = draw(12, 6, 50 + s);
    const DiscreteKernel kern = kernel_from_projections(q, k, KernelVariant::asymmetric, 1.0);
    const Matrix oracle = ref::row_softmax(ref::scaled_logits(q, k, 1.0 / std::sqrt(6.0)));
    CHECK(max_abs(kern.normalized() - oracle) <= 1e-12);
    CHECK(check_normalization(kern) <= 1e-12);
    CHECK_FALSE(kern.symmetric);
    CHECK(kern.log_value(2, 5) == doctest::Approx(q.row(2).dot(k.row(5)) / std::sqrt(6.0)));
  }
}

TEST_CASE("bilinear kernel normalises to symmetrized attention") {
  const Matrix q = draw(10, 4, 1, 0.5), k = draw(10, 4, 2, 0.5);
  const Matrix dlt = q - k;
  const DiscreteKernel kern = kernel_from_projections(q, k, KernelVariant::bilinear, 0.8);
  const Matrix oracle = ref::row_softmax(-0.8 * ref::scaled_logits(dlt, dlt, 1.0));
  CHECK(max_abs(kern.normalized() - oracle) <= 1e-12);
  CHECK(kern.k_matrix == kern.k_matrix.transpose());
}

TEST_CASE("rbf kernel values") {
  const Matrix q = draw(7, 3, 3), k = draw(7, 3, 4);
  const DiscreteKernel kern = kernel_from_projections(q, k, KernelVariant::rbf, 0.3);
  const Matrix dlt = q - k;
  for (Eigen::Index i = 0; i < 7; ++i)
    for (Eigen::Index j = 0; j < 7; ++j) {
      const double expect = -0.3 * (dlt.row(i) - dlt.row(j)).squaredNorm();
      CHECK(kern.log_value(i, j) == doctest::Approx(expect).epsilon(1e-12));
    }
  CHECK(kern.symmetric);
  CHECK(kern.k_matrix == kern.k_matrix.transpose());
  CHECK((kern.alpha - kern.k_matrix.rowwise().sum()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("extract_kernel reads the projected tokens") {
  const TokenMatrix t = TokenMatrix::from_content(draw(9, 4, 5), positional_embedding(3, 4));
  const AttentionWeights w = AttentionWeights::random(4, 6);
  const DiscreteKernel kern = extract_kernel(t, w, KernelVariant::asymmetric);
  CHECK(max_abs(kern.normalized() - scaled_dot_product(t, w).attention) <= 1e-12);
}

TEST_CASE("mismatched alpha breaks the normalisation") {
  const Matrix q = draw(8, 3, 7), k = draw(8, 3, 8);
  DiscreteKernel kern = kernel_from_projections(q, k, KernelVariant::rbf, 1.0);
  kern.alpha *= 1.5;
  CHECK(check_normalization(kern) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("all-ones kernel has spectrum {1, 0, ..., 0} under the uniform measure") {
  const DiscreteKernel kern = kernel_from_matrix(Matrix::Ones(6, 6), KernelVariant::rbf);
  const MercerSpectrum s = mercer_spectrum(kern);
  CHECK(s.values(0) == doctest::Approx(1.0));
  for (Eigen::Index i = 1; i < 6; ++i) CHECK(std::abs(s.values(i)) <= 1e-14);
}

TEST_CASE("rbf Gram matrices are PSD and rebuilt from their spectrum") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Matrix x = draw(16, 2, seed);
    DiscreteKernel kern = kernel_from_projections(x, Matrix::Zero(16, 2), KernelVariant::rbf, 1.0);
    Rng rng(seed);
    kern.measure = uniform_matrix(rng, 16, 1, 0.5, 1.5);
    kern.measure /= kern.measure.sum();
    const MercerSpectrum s = mercer_spectrum(kern);
    CHECK(s.values.minCoeff() >= -1e-10 * s.values(0));
    for (Eigen::Index i = 1; i < s.values.size(); ++i) CHECK(s.values(i) <= s.values(i - 1));
    CHECK(max_abs(s.vectors.transpose() * s.vectors - Matrix::Identity(16, 16)) <= 1e-12);
    CHECK(max_abs(mercer_reconstruct(s, kern.measure) - kern.k_matrix) <= 1e-10);
  }
}

TEST_CASE("asymmetric kernels have no Mercer spectrum") {
  const DiscreteKernel kern =
      kernel_from_projections(draw(5, 2, 1), draw(5, 2, 2), KernelVariant::asymmetric, 1.0);
  CHECK_THROWS_AS(mercer_spectrum(kern), UnsupportedVariant);
}

TEST_CASE("decay constant of an exactly exponential kernel is one") {
  const Matrix x = patch_centres(4);
  Matrix k(16, 16);
  for (Eigen::Index i = 0; i < 16; ++i)
    for (Eigen::Index j = 0; j < 16; ++j) k(i, j) = std::exp(-2.0 * (x.row(i) - x.row(j)).norm());
  const DecayFit fit = check_decay(kernel_from_matrix(k, KernelVariant::rbf), x, 2.0);
  CHECK(fit.c_hat == doctest::Approx(1.0).epsilon(1e-12));
  const DecayFit doubled = check_decay(kernel_from_matrix(3.0 * k, KernelVariant::rbf), x, 2.0);
  CHECK(doubled.c_hat == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("patch centres") {
  const Matrix c = patch_centres(2);
  CHECK(c.rows() == 4);
  CHECK(c(3, 0) == 0.75);
  CHECK(c(1, 1) == 0.75);
  CHECK(c(1, 0) == 0.25);
}

TEST_CASE("kernel validation") {
  CHECK_THROWS_AS(kernel_from_matrix(Matrix::Ones(2, 3), KernelVariant::rbf), InvalidInput);
  Matrix neg = Matrix::Ones(3, 3);
  neg(0, 1) = -1.0;
  CHECK_THROWS_AS(kernel_from_matrix(neg, KernelVariant::rbf), InvalidInput);
  CHECK_THROWS_AS(parse_kernel_variant("cosine"), InvalidInput);
  CHECK(to_string(parse_kernel_variant("bilinear")) == "bilinear");
}
