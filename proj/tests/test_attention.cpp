#include <doctest.h>

#include <cmath>
#include <vector>

#include "akl/attention.hpp"
#include "akl/reference.hpp"

using namespace akl;

namespace {

Matrix draw(Eigen::Index r, Eigen::Index c, std::uint64_t seed, double s = 1.0) {
  Rng rng(seed);
  return gaussian_matrix(rng, r, c, s);
}

double max_abs(const Matrix& m) { return m.cwiseAbs().maxCoeff(); }

TokenMatrix tokens(std::size_t n, std::size_t d, std::uint64_t seed) {
  return TokenMatrix::from_content(draw(static_cast<Eigen::Index>(n * n),
                                        static_cast<Eigen::Index>(d), seed),
                                   positional_embedding(n, d));
}

}  // namespace

TEST_CASE("dot-product attention matches the explicit-loop oracle") {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const TokenMatrix t = tokens(4, 8, s);
    const AttentionWeights w = AttentionWeights::random(8, 100 + s);
    Matrix a_ref;
    const Matrix z_ref = ref::dot_product_attention(t.y, w.wq, w.wk, w.wv, &a_ref);
    const AttentionOutput out = scaled_dot_product(t, w);
    CHECK(max_abs(out.z - z_ref) <= 1e-12);
    CHECK(max_abs(out.attention - a_ref) <= 1e-14);
  }
}

TEST_CASE("attention rows are probability vectors for every variant") {
  const TokenMatrix t = tokens(5, 12, 3);
  const AttentionWeights w = AttentionWeights::random(12, 4);
  for (auto v : {AttentionVariant::softmax, AttentionVariant::symmetrized, AttentionVariant::rbf}) {
    const Matrix a = attention(t, w, v).attention;
    CHECK((a.rowwise().sum().array() - 1.0).abs().maxCoeff() <= 1e-12);
    CHECK(a.minCoeff() >= 0.0);
  }
}

TEST_CASE("symmetrized logits are -gamma (Q - K)(Q - K)^T and symmetric") {
  const TokenMatrix t = tokens(3, 8, 5);
  AttentionWeights w = AttentionWeights::random(8, 6);
  w.gamma = 0.7;
  const Matrix l = symmetrized_logits(t, w);
  const Matrix dlt = ref::matmul(t.y, w.wq) - ref::matmul(t.y, w.wk);
  CHECK(max_abs(l + 0.7 * ref::scaled_logits(dlt, dlt, 1.0)) <= 1e-12);
  CHECK(l == l.transpose());
}

TEST_CASE("attention is permutation equivariant") {
  const TokenMatrix t = tokens(3, 8, 7);
  const AttentionWeights w = AttentionWeights::random(8, 8);
  const std::vector<std::size_t> order{4, 0, 8, 2, 6, 1, 3, 7, 5};
  const TokenMatrix tp = t.permuted(order);
  const Matrix z = scaled_dot_product(t, w).z;
  const Matrix zp = scaled_dot_product(tp, w).z;
  for (std::size_t i = 0; i < order.size(); ++i)
    CHECK((zp.row(static_cast<Eigen::Index>(i)) - z.row(static_cast<Eigen::Index>(order[i])))
              .cwiseAbs()
              .maxCoeff() <= 1e-12);
  CHECK(tp.patch_ids == order);
}

TEST_CASE("shift identity holds exactly up to rounding") {
  Rng rng(9);
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const Matrix q = gaussian_matrix(rng, 1, 64), k = gaussian_matrix(rng, 1, 64);
    const auto [lhs, rhs] = dot_product_shift_identity({q.data(), 64}, {k.data(), 64});
    worst = std::max(worst, std::abs(lhs - rhs));
  }
  CHECK(worst <= 1e-12);
  const std::vector<double> a{1.0, 2.0}, b{3.0, -1.0};
  const auto [lhs, rhs] = dot_product_shift_identity(a, b);
  CHECK(lhs == 1.0);
  CHECK(rhs == doctest::Approx(1.0));
  CHECK_THROWS_AS(dot_product_shift_identity(a, std::vector<double>{1.0}), InvalidInput);
}

TEST_CASE("positional embedding is injective with the documented layout") {
  const Matrix x = positional_embedding(4, 8);
  CHECK(x.rows() == 16);
  CHECK(x.cols() == 8);
  CHECK(x(0, 0) == 0.0);        // sin(0)
  CHECK(x(0, 2) == 1.0);        // cos(0)
  CHECK(x(1, 4) == doctest::Approx(std::sin(1.0)));  // column index 1, lowest frequency
  CHECK(x(4, 0) == doctest::Approx(std::sin(1.0)));  // row index 1
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = i + 1; j < x.rows(); ++j) CHECK((x.row(i) - x.row(j)).norm() > 1e-6);
  CHECK_THROWS_AS(positional_embedding(4, 6 + 1), InvalidInput);
  CHECK_THROWS_AS(positional_embedding(4, 2), InvalidInput);
}

TEST_CASE("token validation") {
  Matrix y = draw(4, 4, 1);
  CHECK_THROWS_AS(TokenMatrix::from_content(y, Matrix::Zero(4, 4)), InvalidInput);
  CHECK_THROWS_AS(TokenMatrix::from_content(y, Matrix::Zero(3, 4)), InvalidInput);
  y(0, 0) = std::nan("");
  CHECK_THROWS_AS(TokenMatrix::from_content(y, positional_embedding(2, 4)), InvalidInput);
  const TokenMatrix t = tokens(2, 4, 2);
  AttentionWeights w = AttentionWeights::random(6, 1);
  CHECK_THROWS_AS(scaled_dot_product(t, w), InvalidInput);
  w = AttentionWeights::random(4, 1);
  w.gamma = 0.0;
  CHECK_THROWS_AS(symmetrized_attention(t, w), InvalidInput);
}

TEST_CASE("layer norm standardises each row") {
  const Matrix x = draw(6, 10, 3, 5.0);
  const Matrix y = layer_norm(x, Vector::Ones(10), Vector::Zero(10), 0.0);
  for (Eigen::Index i = 0; i < y.rows(); ++i) {
    CHECK(std::abs(y.row(i).mean()) <= 1e-12);
    CHECK(y.row(i).squaredNorm() / 10.0 == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("gelu reference values") {
  Matrix x(1, 3);
  x << 0.0, 1.0, -1.0;
  const Matrix g = gelu(x);
  CHECK(g(0, 0) == 0.0);
  CHECK(g(0, 1) == doctest::Approx(0.8413447460685429));
  CHECK(g(0, 2) == doctest::Approx(-0.15865525393145707));
}

TEST_CASE("attention block without skip drops the input") {
  const TokenMatrix t = tokens(3, 8, 11);
  const AttentionWeights w = AttentionWeights::random(8, 12);
  const Matrix z = scaled_dot_product(t, w).z;
  const Matrix inner = layer_norm(z, w.ln_scale, w.ln_shift);
  const Matrix expect = layer_norm(z + feed_forward(inner, w.ffn), w.ln_scale, w.ln_shift);
  CHECK(max_abs(attention_block(t, w, AttentionVariant::softmax, false).y - expect) <= 1e-12);
  const Matrix r = t.y + z;
  const Matrix inner2 = layer_norm(r, w.ln_scale, w.ln_shift);
  const Matrix expect2 = layer_norm(r + feed_forward(inner2, w.ffn), w.ln_scale, w.ln_shift);
  CHECK(max_abs(attention_block(t, w, AttentionVariant::softmax, true).y - expect2) <= 1e-12);
}

TEST_CASE("identical tokens give uniform attention and rank-one output") {
  Matrix y = Matrix::Ones(9, 4);
  const TokenMatrix t = TokenMatrix::from_content(y, positional_embedding(3, 4));
  const AttentionWeights w = AttentionWeights::random(4, 2);
  const AttentionOutput out = scaled_dot_product(t, w);
  CHECK(max_abs(out.attention.array() - 1.0 / 9.0) <= 1e-15);
  CHECK(effective_rank(out.z, 1e-10) == 1);
  CHECK(effective_rank(Matrix::Zero(3, 3), 1e-10) == 0);
}
