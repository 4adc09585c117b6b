#include <benchmark/benchmark.h>

#include "akl/attention.hpp"
#include "akl/grid.hpp"
#include "akl/parallel.hpp"
#include "akl/reference.hpp"
#include "akl/synthetic.hpp"

namespace {

akl::Matrix tokens(Eigen::Index p, Eigen::Index d, std::uint64_t seed) {
  akl::Rng rng(seed);
  return akl::gaussian_matrix(rng, p, d);
}

void BM_LogitsPar(benchmark::State& st) {
  const auto p = st.range(0);
  const akl::Matrix q = tokens(p, 64, 1), k = tokens(p, 64, 2);
  for (auto _ : st) benchmark::DoNotOptimize(akl::par::scaled_logits(q, k, 0.125));
}

void BM_LogitsRef(benchmark::State& st) {
  const auto p = st.range(0);
  const akl::Matrix q = tokens(p, 64, 1), k = tokens(p, 64, 2);
  for (auto _ : st) benchmark::DoNotOptimize(akl::ref::scaled_logits(q, k, 0.125));
}

void BM_SoftmaxPar(benchmark::State& st) {
  const akl::Matrix l = tokens(st.range(0), st.range(0), 3);
  for (auto _ : st) benchmark::DoNotOptimize(akl::par::row_softmax(l));
}

void BM_SoftmaxRef(benchmark::State& st) {
  const akl::Matrix l = tokens(st.range(0), st.range(0), 3);
  for (auto _ : st) benchmark::DoNotOptimize(akl::ref::row_softmax(l));
}

void BM_SqdistPar(benchmark::State& st) {
  const akl::Matrix x = tokens(st.range(0), 64, 4);
  for (auto _ : st) benchmark::DoNotOptimize(akl::par::pairwise_sqdist(x));
}

void BM_SqdistRef(benchmark::State& st) {
  const akl::Matrix x = tokens(st.range(0), 64, 4);
  for (auto _ : st) benchmark::DoNotOptimize(akl::ref::pairwise_sqdist(x));
}

void BM_AttentionPar(benchmark::State& st) {
  const auto p = st.range(0);
  const akl::Matrix y = tokens(p, 64, 5);
  const akl::AttentionWeights w = akl::AttentionWeights::random(64, 6, 1);
  for (auto _ : st)
    benchmark::DoNotOptimize(akl::attend(y, y, w, akl::AttentionVariant::softmax).z);
}

void BM_AttentionRef(benchmark::State& st) {
  const auto p = st.range(0);
  const akl::Matrix y = tokens(p, 64, 5);
  const akl::AttentionWeights w = akl::AttentionWeights::random(64, 6, 1);
  for (auto _ : st)
    benchmark::DoNotOptimize(akl::ref::dot_product_attention(y, w.wq, w.wk, w.wv, nullptr));
}

void BM_BvPar(benchmark::State& st) {
  akl::SyntheticParams params;
  params.channels = 3;
  const akl::ImageGrid img = akl::gen_synthetic(akl::SyntheticKind::lowfreq,
                                                static_cast<std::size_t>(st.range(0)), params, 7);
  for (auto _ : st) benchmark::DoNotOptimize(akl::bv_seminorm(img));
}

void BM_BvRef(benchmark::State& st) {
  akl::SyntheticParams params;
  params.channels = 3;
  const akl::ImageGrid img = akl::gen_synthetic(akl::SyntheticKind::lowfreq,
                                                static_cast<std::size_t>(st.range(0)), params, 7);
  for (auto _ : st) benchmark::DoNotOptimize(akl::ref::bv_seminorm(img));
}

}  // namespace

BENCHMARK(BM_LogitsPar)->Arg(64)->Arg(196)->Arg(1024);
BENCHMARK(BM_LogitsRef)->Arg(64)->Arg(196)->Arg(1024);
BENCHMARK(BM_SoftmaxPar)->Arg(196)->Arg(1024);
BENCHMARK(BM_SoftmaxRef)->Arg(196)->Arg(1024);
BENCHMARK(BM_SqdistPar)->Arg(196)->Arg(1024);
BENCHMARK(BM_SqdistRef)->Arg(196)->Arg(1024);
BENCHMARK(BM_AttentionPar)->Arg(64)->Arg(196);
BENCHMARK(BM_AttentionRef)->Arg(64)->Arg(196);
BENCHMARK(BM_BvPar)->Arg(224)->Arg(512);
BENCHMARK(BM_BvRef)->Arg(224)->Arg(512);

BENCHMARK_MAIN();
