#include "akl/common.hpp"

#include <cstdlib>
#include <numeric>

#include <omp.h>

namespace akl {

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Matrix gaussian_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols,
                       double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = dist(rng);
  return m;
}

Matrix uniform_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double lo,
                      double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = dist(rng);
  return m;
}

std::vector<std::size_t> random_permutation(std::size_t n, Rng& rng) {
  std::vector<std::size_t> out(n);
  std::iota(out.begin(), out.end(), 0);
  for (std::size_t i = n; i > 1; --i) {
    const std::uint64_t bound = i;
    const std::uint64_t limit = rng.max() - (rng.max() % bound);
    std::uint64_t draw;
    do {
      draw = rng();
    } while (draw >= limit);
    std::swap(out[i - 1], out[draw % bound]);
  }
  return out;
}

bool all_finite(const Matrix& m) { return m.allFinite(); }

void require_finite(const Matrix& m, const std::string& what) {
  if (!m.allFinite()) throw InvalidInput(what + ": non-finite entry");
}

double spectral_norm(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(m);
  return svd.singularValues()(0);
}

int configured_threads() {
  if (const char* env = std::getenv("AKL_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && v > 0) return static_cast<int>(v);
  }
  return omp_get_max_threads();
}

void apply_thread_limit() { omp_set_num_threads(configured_threads()); }

}  // namespace akl
