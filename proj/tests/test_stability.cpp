#include <doctest.h>

#include <cmath>
#include <numbers>

#include "akl/reference.hpp"
#include "akl/stability.hpp"
#include "akl/synthetic.hpp"

using namespace akl;

namespace {

double max_abs(const Matrix& m) { return m.cwiseAbs().maxCoeff(); }

TokenMatrix smooth_tokens(std::size_t n) { return continuum_tokens(n, 2, 1, 3); }

}  // namespace

TEST_CASE("feature BV on the patch grid") {
  Matrix v = Matrix::Zero(4, 1);
  v(0, 0) = 1.0;
  CHECK(feature_bv(v, 2) == doctest::Approx(2.0 + std::numbers::sqrt2).epsilon(1e-15));
  const ImageGrid img = gen_synthetic(SyntheticKind::lowfreq, 6, {}, 2);
  Matrix flat(36, 1);
  for (std::size_t r = 0; r < 6; ++r)
    for (std::size_t c = 0; c < 6; ++c) flat(static_cast<Eigen::Index>(r * 6 + c), 0) = img.at(r, c);
  CHECK(feature_bv(flat, 6) == doctest::Approx(ref::bv_seminorm(img)).epsilon(1e-13));
  CHECK_THROWS_AS(feature_bv(flat, 5), InvalidInput);
  Matrix s(2, 2);
  s << 3.0, 4.0, 1.0, 0.0;
  CHECK(feature_sup(s) == 5.0);
}

TEST_CASE("stability weights") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const AttentionWeights w = stability_weights(16, seed, 0.5);
    CHECK(w.value_is_identity());
    CHECK(w.gamma == 0.5);
    const double gap = spectral_norm(w.wq - w.wk);
    CHECK(gap >= 0.5 - 1e-12);
    CHECK(gap <= 2.0 + 1e-12);
  }
  CHECK(stability_weights(16, 3, 1.0).wq == stability_weights(16, 3, 1.0).wq);
  CHECK_THROWS_AS(stability_weights(4, 0, 1.0, 2.0, 1.0), InvalidInput);
}

TEST_CASE("pure-kernel propagation matches the explicit rbf update") {
  const TokenMatrix t = smooth_tokens(4);
  const AttentionWeights w = stability_weights(4, 5, 1.0);
  const Matrix dq = ref::matmul(t.positions, w.wq) - ref::matmul(t.positions, w.wk);
  const Matrix a = ref::row_softmax(-1.0 * ref::pairwise_sqdist(dq));
  const Matrix next = ref::convex_combination(a, t.y);
  const PropagationTrace tr = propagate(t, {w}, AttentionVariant::rbf, true);
  REQUIRE(tr.layers() == 1);
  CHECK(tr.states.size() == 2);
  CHECK(max_abs(tr.states[1] - next) <= 1e-12);
  double drift = 0.0;
  for (Eigen::Index i = 0; i < next.rows(); ++i) drift = std::max(drift, (next.row(i) - t.y.row(i)).norm());
  CHECK(tr.drift[0] == doctest::Approx(drift).epsilon(1e-12));
  CHECK(tr.bv_values[0] == doctest::Approx(feature_bv(t.y, 4)));
}

TEST_CASE("constant fields are fixed points") {
  TokenMatrix t = smooth_tokens(4);
  t.y.setConstant(0.3);
  std::vector<AttentionWeights> layers;
  for (std::uint64_t s = 0; s < 8; ++s) layers.push_back(stability_weights(4, s, 1.0));
  for (auto v : {AttentionVariant::rbf, AttentionVariant::symmetrized, AttentionVariant::softmax}) {
    const PropagationTrace tr = propagate(t, layers, v, true);
    for (double d : tr.drift) CHECK(d <= 1e-12);
  }
}

TEST_CASE("drift is invariant under a common shift of the features") {
  const TokenMatrix t = smooth_tokens(4);
  TokenMatrix shifted = t;
  shifted.y.rowwise() += RowVector::Constant(4, 2.5);
  const AttentionWeights w = stability_weights(4, 9, 1.0);
  const double a = propagate(t, {w}, AttentionVariant::rbf, true).drift[0];
  const double b = propagate(shifted, {w}, AttentionVariant::rbf, true).drift[0];
  CHECK(b == doctest::Approx(a).epsilon(1e-10));
}

TEST_CASE("pure kernel requires identity values") {
  const TokenMatrix t = smooth_tokens(2);
  const AttentionWeights w = AttentionWeights::random(4, 1);
  CHECK_THROWS_AS(propagate(t, {w}, AttentionVariant::rbf, true), InvalidConfiguration);
  const PropagationTrace tr = propagate(t, {w, w}, AttentionVariant::symmetrized, false);
  CHECK(tr.layers() == 2);
  for (double d : tr.drift) CHECK(std::isfinite(d));
}

TEST_CASE("near and far contributions partition the drift") {
  const TokenMatrix t = smooth_tokens(6);
  const AttentionWeights w = stability_weights(4, 2, 1.0);
  const DiscreteKernel k = kernel_from_projections(t.positions * w.wq, t.positions * w.wk,
                                                   KernelVariant::rbf, 1.0);
  const Matrix total = k.normalized() * t.y - t.y;
  const ModulusSplit split = modulus_decomposition(t.y, k, 6, 2.0);
  CHECK(max_abs(split.near + split.far - total) <= 1e-10);
  const ModulusSplit all = modulus_decomposition(t.y, k, 6, 1e9);
  CHECK(all.far_norm == 0.0);
  CHECK(max_abs(all.near - total) <= 1e-12);
  const ModulusSplit none = modulus_decomposition(t.y, k, 6, 0.0);
  CHECK(none.near_norm == 0.0);
  const DiscreteKernel asym = kernel_from_projections(t.positions, t.positions, KernelVariant::asymmetric, 1.0);
  CHECK_THROWS_AS(modulus_decomposition(t.y, asym, 6, 1.0), UnsupportedVariant);
}

TEST_CASE("continuum tokens sample one image at every n") {
  for (std::size_t n : {2, 4}) {
    const TokenMatrix t = continuum_tokens(n, 2, 3, 1);
    CHECK(t.count() == static_cast<Eigen::Index>(n * n));
    CHECK(t.width() == 12);
  }
  const TokenMatrix a = continuum_tokens(2, 4, 1, 1);
  const ImageGrid img = gen_synthetic(SyntheticKind::lowfreq, 8, {}, 1);
  CHECK(a.y(1, 0) == img.at(0, 4));
  CHECK(a.y(2, 5) == img.at(5, 1));
}

TEST_CASE("small scan: bookkeeping and constant field") {
  StabilityScanConfig c;
  c.n_values = {2, 3, 4};
  c.seeds = 2;
  c.layers = 3;
  c.patch_side = 2;
  const StabilityReport r = verify_bound(c);
  CHECK(r.layerwise.rows.size() == 3 * 2 * 3);
  CHECK(r.composed.rows.size() == 3 * 2 * 3);
  CHECK(r.layerwise.median_drift.size() == 3);
  CHECK(r.constant_drift <= 1e-12);
  for (const auto& row : r.layerwise.rows) {
    CHECK(row.drift >= 0.0);
    CHECK(row.rho == doctest::Approx(row.drift / ((row.sup + row.bv) / static_cast<double>(row.n))));
  }
  // layer 0 of the composed trace is the first layer-wise drift
  CHECK(r.layerwise.rows[0].drift == r.composed.rows[0].drift);
  c.n_values = {2, 3};
  CHECK_THROWS_AS(verify_bound(c), InvalidConfiguration);
}
