#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace akl {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

// Error taxonomy shared by every module.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class InvalidPartition : public InvalidInput {
 public:
  using InvalidInput::InvalidInput;
};

class InvalidConfiguration : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class UnsupportedVariant : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class RankZero : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Rng = std::mt19937_64;

/// Sub-seed for trial `index` of a run seeded with `base` (splitmix64 mix).
/// Distinct indices give decorrelated streams and the mapping is fixed, so
/// parallel trial fan-out reproduces the serial result exactly.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index);

/// rows x cols matrix of N(0, stddev^2) draws, filled row by row.
Matrix gaussian_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols,
                       double stddev = 1.0);

/// rows x cols matrix of U(lo, hi) draws, filled row by row.
Matrix uniform_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols,
                      double lo = 0.0, double hi = 1.0);

/// Uniform permutation of {0..n-1} by rejection-sampled Fisher-Yates, so the
/// result depends only on the engine state.
std::vector<std::size_t> random_permutation(std::size_t n, Rng& rng);

bool all_finite(const Matrix& m);

/// Throws InvalidInput naming `what` if any entry is NaN or infinite.
void require_finite(const Matrix& m, const std::string& what);

/// Largest singular value.
double spectral_norm(const Matrix& m);

/// Worker cap: AKL_THREADS if set and positive, otherwise the OpenMP default.
int configured_threads();

/// Applies configured_threads() to the OpenMP runtime.
void apply_thread_limit();

}  // namespace akl
