#pragma once

// OpenMP kernels for the data-parallel inner loops. Every kernel partitions
// work by output row and never reduces across threads, so results are
// bitwise independent of the thread count. Serial explicit-loop counterparts
// live in akl/reference.hpp.

#include <exception>
#include <mutex>

#include "akl/common.hpp"

namespace akl::par {

/// (Q K^T) * scale.
Matrix scaled_logits(const Matrix& q, const Matrix& k, double scale);

/// L_ij = -gamma <x_i, x_j>; the lower triangle mirrors the upper, so the
/// result is exactly symmetric.
Matrix bilinear_logits(const Matrix& x, double gamma);

/// D_ij = ||x_i - x_j||^2, exactly symmetric with a zero diagonal.
Matrix pairwise_sqdist(const Matrix& x);

/// Row-wise softmax with max subtraction.
Matrix row_softmax(const Matrix& logits);

/// A * V.
Matrix apply_rows(const Matrix& a, const Matrix& v);

/// Euclidean norm of each row.
Vector row_norms(const Matrix& m);

/// Runs body(k) for k in [0, n) on a dynamic schedule. The first exception
/// thrown by any iteration is rethrown once the loop has finished.
template <class Body>
void for_each_index(std::size_t n, Body&& body) {
  std::exception_ptr error;
  std::mutex guard;
#pragma omp parallel for schedule(dynamic)
  for (std::size_t k = 0; k < n; ++k) {
    try {
      body(k);
    } catch (...) {
      std::lock_guard<std::mutex> lock(guard);
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
}

}  // namespace akl::par
