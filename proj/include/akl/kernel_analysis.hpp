#pragma once

// Attention read as a discrete integral kernel: extraction, row
// normalisation, Mercer spectra and the exponential decay check.

#include <string_view>
#include <vector>

#include "akl/attention.hpp"

namespace akl {

/// asymmetric: kappa~_ij = exp(<q_i, k_j> / sqrt(d)).
/// bilinear:   kappa_ij = exp(-gamma <d_i, d_j>), d_i = q_i - k_i; its
///             alpha-normalisation is the symmetrized attention matrix.
/// rbf:        kappa_ij = exp(-gamma ||d_i - d_j||^2).
enum class KernelVariant { asymmetric, bilinear, rbf };

KernelVariant parse_kernel_variant(std::string_view name);
std::string_view to_string(KernelVariant v);

/// Stored values are exp(logit - shift_i); the true kernel is
/// k_matrix(i, j) * exp(log_scale(i)). For the asymmetric variant shift_i is
/// the row maximum, for the symmetric variants one global constant, so the
/// stored matrix keeps its symmetry.
struct DiscreteKernel {
  KernelVariant variant = KernelVariant::rbf;
  Matrix k_matrix;
  Vector alpha;      // row sums of k_matrix
  Vector measure;    // quadrature weights, default 1/p
  Vector log_scale;  // per-row log of the factored-out scale
  bool symmetric = false;

  Eigen::Index size() const { return k_matrix.rows(); }
  /// diag(alpha)^{-1} K.
  Matrix normalized() const;
  /// log kappa_ij including the factored-out scale.
  double log_value(Eigen::Index i, Eigen::Index j) const;
  void validate() const;
};

/// Kernel from projected queries and keys.
DiscreteKernel kernel_from_projections(const Matrix& q, const Matrix& k,
                                       KernelVariant variant, double gamma);

/// Kernel of single-head attention on tokens.y with weights w.
DiscreteKernel extract_kernel(const TokenMatrix& tokens, const AttentionWeights& w,
                              KernelVariant variant);

/// Kernel from an explicit symmetric matrix; alpha defaults to row sums.
DiscreteKernel kernel_from_matrix(Matrix k, KernelVariant variant);

/// max_i |alpha_i^{-1} sum_j kappa_ij mu_j p - 1|.
double check_normalization(const DiscreteKernel& k);

struct MercerSpectrum {
  Vector values;   // descending
  Matrix vectors;  // columns, orthonormal
};

/// Eigendecomposition of diag(mu)^{1/2} K diag(mu)^{1/2}. Throws
/// UnsupportedVariant for a non-symmetric kernel.
MercerSpectrum mercer_spectrum(const DiscreteKernel& k);

/// K rebuilt from the spectrum: diag(mu)^{-1/2} Psi diag(a) Psi^T diag(mu)^{-1/2}.
Matrix mercer_reconstruct(const MercerSpectrum& s, const Vector& measure);

struct DecayFit {
  double c_hat = 0.0;      // smallest C with kappa_ij <= C exp(-gamma |x_i - x_j|)
  double log_c_hat = 0.0;
};

/// Fitted constant over all pairs; positions are p x m coordinates.
DecayFit check_decay(const DiscreteKernel& k, const Matrix& positions,
                     double gamma);

/// (r + 0.5) / n, (c + 0.5) / n for each patch of the n x n grid.
Matrix patch_centres(std::size_t n);

}  // namespace akl
