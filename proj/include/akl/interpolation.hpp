#pragma once

// Shared mask token mechanics: absorption of the mask rows into a shifted
// attention over the unmasked rows, and the interpolation weights of masked
// outputs.

#include <cstdint>
#include <vector>

#include "akl/attention.hpp"
#include "akl/grid.hpp"

namespace akl {

struct MaskedTokenSet {
  Matrix y;                              // masked rows equal m
  Matrix positions;
  std::vector<std::size_t> masked;       // ascending
  std::vector<std::size_t> unmasked;     // ascending
  RowVector m;

  Eigen::Index count() const { return y.rows(); }
  bool is_masked(std::size_t i) const;
  void validate() const;
};

/// Masks round(mask_ratio * p) uniformly chosen rows with m; positions are
/// kept for every row. Throws InvalidConfiguration if fewer than 2 rows stay
/// unmasked.
MaskedTokenSet build_masked_input(const TokenMatrix& tokens, double mask_ratio,
                                  const RowVector& m, std::uint64_t seed);

struct Absorption {
  Matrix z_full;
  Matrix z_decomposed;  // v_m + sum_{j in N} A_ij (v_j - v_m)
  double discrepancy = 0.0;  // max row norm of the difference
};

Absorption mask_absorption_decomposition(
    const MaskedTokenSet& mt, const AttentionWeights& w,
    AttentionVariant variant = AttentionVariant::softmax);

/// Full output against the renormalised unmasked-only attention
/// z^_i = v_m + sum_{j in N} A^_ij (v_j - v_m), A^_ij = A_ij / sum_{l in N} A_il.
/// The difference is exactly -s_i h_i with s_i the masked attention mass and
/// h_i = sum_{j in N} A^_ij (v_j - v_m).
struct RestrictedError {
  Matrix z_full;
  Matrix z_restricted;
  Vector error;      // per row
  Vector mass;       // s_i
  Vector hull_norm;  // ||h_i||
  double max_error = 0.0;
  Eigen::Index argmax = 0;
};

RestrictedError restricted_attention_error(
    const MaskedTokenSet& mt, const AttentionWeights& w,
    AttentionVariant variant = AttentionVariant::softmax);

/// Renormalised attention row of masked token i over mt.unmasked.
Vector interpolation_weights(const MaskedTokenSet& mt, const AttentionWeights& w,
                             std::size_t i,
                             AttentionVariant variant = AttentionVariant::softmax);

struct PatchErrorRow {
  std::size_t index = 0;
  bool masked = false;
  double error = 0.0;  // |R v_i - u_i|_BV(Omega_i)
};

struct ReconstructionBound {
  std::vector<PatchErrorRow> rows;
  double masked_max = 0.0;
  double unmasked_sup = 0.0;
  double correction = 0.0;  // (1/n) max_i |u_i|_BV(Omega_i)
  double bound_rhs = 0.0;   // unmasked_sup + correction
  double ratio = 0.0;       // masked_max / bound_rhs
  double c_hat = 0.0;       // max(0, masked_max - unmasked_sup) / correction
};

/// Decoder outputs z = attention(mt) are reprojected (z * reproj, identity
/// when reproj is empty), reshaped to patches and compared with the ground
/// truth patch by patch.
ReconstructionBound reconstruction_error_bound(const MaskedTokenSet& mt,
                                               const AttentionWeights& w,
                                               const ImageGrid& ground_truth,
                                               const Patchification& patches,
                                               const Matrix& reproj = Matrix());

}  // namespace akl
