#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <limits>

#include "akl/bundle.hpp"

using namespace akl;

namespace {

bool same_bits(const Matrix& a, const Matrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

Bundle awkward() {
  Bundle b;
  Matrix m(2, 3);
  m << 0.1, 1.0 / 3.0, -2.5e-300, std::numeric_limits<double>::denorm_min(),
      std::numeric_limits<double>::max(), -0.0;
  b.put("m", m);
  Rng rng(4);
  b.put("g", gaussian_matrix(rng, 5, 4));
  b.put("empty", Matrix(0, 3));
  b.put_scalar("pi", M_PI);
  b.put_scalar("tiny", 1e-17);
  return b;
}

}  // namespace

TEST_CASE("json and csv round trips are bit exact") {
  const Bundle b = awkward();
  for (const Bundle& back : {bundle_from_json(bundle_to_json(b)), bundle_from_csv(bundle_to_csv(b))}) {
    CHECK(back == b);
    for (const auto& [name, m] : b.matrices) CHECK(same_bits(back.matrix(name), m));
    CHECK(back.scalar("pi") == M_PI);
    CHECK(std::signbit(back.matrix("m")(1, 2)));
  }
}

TEST_CASE("files pick the format from the extension") {
  const auto dir = std::filesystem::temp_directory_path() / "akl_test_bundle";
  std::filesystem::create_directories(dir);
  const Bundle b = awkward();
  for (const char* name : {"b.json", "b.csv"}) {
    write_bundle(b, dir / name);
    CHECK(read_bundle(dir / name) == b);
  }
  CHECK_THROWS_AS(write_bundle(b, dir / "b.txt"), InvalidInput);
  CHECK_THROWS_AS(read_bundle(dir / "missing.json"), InvalidInput);
  std::filesystem::remove_all(dir);
}

TEST_CASE("lookups of absent names throw") {
  const Bundle b = awkward();
  CHECK_THROWS_AS(b.matrix("nope"), InvalidInput);
  CHECK_THROWS_AS(b.scalar("m"), InvalidInput);
}

TEST_CASE("malformed text is rejected") {
  CHECK_THROWS_AS(bundle_from_json("{"), InvalidInput);
  CHECK_THROWS_AS(bundle_from_json(R"({"format":"other","scalars":{},"matrices":{}})"), InvalidInput);
  CHECK_THROWS_AS(
      bundle_from_json(R"({"format":"akl-bundle","scalars":{},"matrices":{"a":{"rows":2,"cols":2,"data":[1,2,3]}}})"),
      InvalidInput);
  CHECK_THROWS_AS(bundle_from_csv("# matrix a 2 2\n1,2\n"), InvalidInput);
  CHECK_THROWS_AS(bundle_from_csv("# matrix a 1 2\n1,2,3\n"), InvalidInput);
  CHECK_THROWS_AS(bundle_from_csv("# tensor a 1\n"), InvalidInput);
  CHECK_THROWS_AS(bundle_from_csv("1,2\n"), InvalidInput);
  CHECK_THROWS_AS(bundle_from_csv("# scalar s 1 2\n"), InvalidInput);
  CHECK_THROWS_AS(bundle_from_csv("# matrix a 1 1 9\n1\n"), InvalidInput);
}

TEST_CASE("attention weights survive a bundle") {
  const AttentionWeights w = AttentionWeights::random(6, 11);
  const AttentionWeights back = weights_from_bundle(bundle_from_csv(bundle_to_csv(to_bundle(w))));
  CHECK(same_bits(back.wq, w.wq));
  CHECK(same_bits(back.wk, w.wk));
  CHECK(same_bits(back.wv, w.wv));
  CHECK(same_bits(back.ffn.w1, w.ffn.w1));
  CHECK(same_bits(back.ffn.w2, w.ffn.w2));
  CHECK(same_bits(back.ffn.b1, w.ffn.b1));
  CHECK(same_bits(back.ln_scale, w.ln_scale));
  CHECK(back.gamma == w.gamma);
  Bundle bad = to_bundle(w);
  bad.matrices[1].second = Matrix::Zero(3, 3);
  CHECK_THROWS(weights_from_bundle(bad));
}

TEST_CASE("tokens survive a bundle") {
  Rng rng(2);
  TokenMatrix t = TokenMatrix::from_content(gaussian_matrix(rng, 4, 3), gaussian_matrix(rng, 4, 3));
  t.patch_ids = {3, 0, 7, 1};
  const TokenMatrix back = tokens_from_bundle(bundle_from_json(bundle_to_json(to_bundle(t))));
  CHECK(same_bits(back.y, t.y));
  CHECK(same_bits(back.positions, t.positions));
  CHECK(back.patch_ids == t.patch_ids);
  Bundle bad = to_bundle(t);
  bad.matrices[2].second(0, 0) = 1.5;
  CHECK_THROWS_AS(tokens_from_bundle(bad), InvalidInput);
}

TEST_CASE("fredholm problems survive a bundle") {
  const FredholmProblem p = pd_problem(9, 2, 0.3, 5);
  const FredholmProblem back = problem_from_bundle(bundle_from_json(bundle_to_json(to_bundle(p))));
  CHECK(same_bits(back.k, p.k));
  CHECK(same_bits(back.alpha, p.alpha));
  CHECK(same_bits(back.mu, p.mu));
  CHECK(same_bits(back.z, p.z));
  CHECK(back.beta == p.beta);
}
