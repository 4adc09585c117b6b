#pragma once

// Single-head attention: token matrices, sinusoidal positions, the scaled
// dot-product and symmetrized attention maps, and the
// LN(y + z + FFN(LN(y + z))) block.

#include <cstdint>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "akl/common.hpp"

namespace akl {

/// softmax: row-softmax(Q K^T / sqrt(d)).
/// symmetrized: row-softmax(-gamma <q_i - k_i, q_j - k_j>).
/// rbf: row-softmax(-gamma ||(q_i - k_i) - (q_j - k_j)||^2), the
///   translation-invariant Gaussian form.
enum class AttentionVariant { softmax, symmetrized, rbf };

AttentionVariant parse_attention_variant(std::string_view name);
std::string_view to_string(AttentionVariant v);

/// p x d patch embeddings y, positional embeddings x_i and the patch id of
/// each row. Attention reads `y` only; callers that want positions in the
/// input use with_positions().
struct TokenMatrix {
  Matrix y;
  Matrix positions;
  std::vector<std::size_t> patch_ids;

  static TokenMatrix from_content(Matrix content, Matrix positions);

  Eigen::Index count() const { return y.rows(); }
  Eigen::Index width() const { return y.cols(); }

  /// y + positions, same positions and ids.
  TokenMatrix with_positions() const;

  /// Rows reordered so that row i of the result is row order[i] of this.
  TokenMatrix permuted(std::span<const std::size_t> order) const;

  /// Shapes, finiteness, pairwise-distinct positions, injective ids.
  void validate() const;
};

/// 2D sinusoidal embedding on the n x n patch grid, p = n^2 rows in
/// row-major patch order. The first d/2 channels encode the patch row and the
/// last d/2 the patch column, each with sin then cos over the frequency
/// ladder 10000^(-k/m). Requires d even and >= 4.
Matrix positional_embedding(std::size_t n, std::size_t d);

struct FeedForward {
  Matrix w1;  // d x h
  Vector b1;  // h
  Matrix w2;  // h x d
  Vector b2;  // d
};

struct AttentionWeights {
  Matrix wq, wk, wv;
  double gamma = 1.0;
  Vector ln_scale, ln_shift;
  FeedForward ffn;

  Eigen::Index width() const { return wq.rows(); }

  /// Gaussian init scaled by 1/sqrt(fan-in); hidden width 4d when 0.
  static AttentionWeights random(std::size_t d, std::uint64_t seed,
                                 std::size_t hidden = 0);

  void validate() const;
  bool value_is_identity() const;
  double qk_gap_norm() const { return spectral_norm(wq - wk); }
};

struct AttentionOutput {
  Matrix z;
  Matrix attention;
};

/// Attention probabilities from projected queries and keys.
Matrix attention_matrix(const Matrix& q, const Matrix& k,
                        AttentionVariant variant, double gamma);

/// Pre-softmax logits for a variant.
Matrix attention_logits(const Matrix& q, const Matrix& k,
                        AttentionVariant variant, double gamma);

/// Q = query_source W^Q, K = query_source W^K, V = value_source W^V.
AttentionOutput attend(const Matrix& query_source, const Matrix& value_source,
                       const AttentionWeights& w, AttentionVariant variant);

AttentionOutput scaled_dot_product(const TokenMatrix& tokens,
                                   const AttentionWeights& w);
AttentionOutput symmetrized_attention(const TokenMatrix& tokens,
                                      const AttentionWeights& w);
AttentionOutput attention(const TokenMatrix& tokens, const AttentionWeights& w,
                          AttentionVariant variant);

/// Logits -gamma (Q - K)(Q - K)^T of the symmetrized map.
Matrix symmetrized_logits(const TokenMatrix& tokens, const AttentionWeights& w);

/// (q k^T, q q^T / 2 + k k^T / 2 - (q - k)(q - k)^T / 2).
std::pair<double, double> dot_product_shift_identity(std::span<const double> q,
                                                     std::span<const double> k);

/// Per-row normalisation over features, then column scale and shift.
Matrix layer_norm(const Matrix& x, const Vector& scale, const Vector& shift,
                  double eps = 1e-6);

Matrix gelu(const Matrix& x);
Matrix feed_forward(const Matrix& x, const FeedForward& ffn);

/// LN(r + FFN(LN(r))) with r = y + z (skip) or r = z (no skip).
TokenMatrix attention_block(const TokenMatrix& tokens, const AttentionWeights& w,
                            AttentionVariant variant, bool skip);

/// Number of singular values above tol * largest; 0 for the zero matrix.
std::size_t effective_rank(const Matrix& m, double tol);

}  // namespace akl
