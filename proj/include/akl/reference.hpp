#pragma once

// Serial explicit-loop implementations. They share no code with the OpenMP
// kernels or the Eigen expressions in the modules and serve as test oracles
// and benchmark baselines.

#include "akl/common.hpp"
#include "akl/grid.hpp"

namespace akl::ref {

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix scaled_logits(const Matrix& q, const Matrix& k, double scale);
Matrix row_softmax(const Matrix& logits);

/// z_i = sum_j A_ij v_j by explicit summation.
Matrix convex_combination(const Matrix& a, const Matrix& v);

/// softmax(Q K^T / sqrt(d)) V with everything in plain loops; returns z and
/// fills `attention` with A.
Matrix dot_product_attention(const Matrix& y, const Matrix& wq,
                             const Matrix& wk, const Matrix& wv,
                             Matrix* attention = nullptr);

Matrix pairwise_sqdist(const Matrix& x);

/// Graph BV seminorm by enumerating every pixel's neighbour list.
double bv_seminorm(const ImageGrid& img);

}  // namespace akl::ref
