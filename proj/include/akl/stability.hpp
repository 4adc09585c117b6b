#pragma once

// Layer-wise propagation of token features and the drift scan against
// C (1/n) (sup + BV).

#include <cstdint>
#include <vector>

#include "akl/attention.hpp"
#include "akl/kernel_analysis.hpp"

namespace akl {

struct PropagationTrace {
  std::vector<Matrix> states;      // v^(0..T)
  std::vector<double> drift;       // max_i ||v_i^(t+1) - v_i^(t)||
  std::vector<double> drift_l2;    // sqrt(mean_i ||v_i^(t+1) - v_i^(t)||^2)
  std::vector<double> bv_values;   // feature_bv(v^(t))
  std::vector<double> sup_values;  // max_i ||v_i^(t)||

  std::size_t layers() const { return drift.size(); }
};

/// Runs T = layers.size() attention layers on tokens.y.
///
/// pure_kernel: queries and keys come from the positions only
/// (q_i = x_i W^Q, k_i = x_i W^K), values are the current features and the
/// update is the bare v <- A v. Every layer must have W^V = I, otherwise
/// InvalidConfiguration. Without pure_kernel each layer is the full
/// attention block with skip connection.
PropagationTrace propagate(const TokenMatrix& y0,
                           const std::vector<AttentionWeights>& layers,
                           AttentionVariant variant, bool pure_kernel);

/// sum_i (sum_{j in N_i} ||v_i - v_j||^2)^{1/2} on the n x n patch grid.
double feature_bv(const Matrix& v, std::size_t n);

/// max_i ||v_i||.
double feature_sup(const Matrix& v);

/// Weights with W^V = I, W^K Gaussian(1/sqrt d) and W^Q = W^K + D where D is
/// Gaussian(1/sqrt d) rescaled so that ||D||_2 lies in [band_lo, band_hi].
AttentionWeights stability_weights(std::size_t d, std::uint64_t seed, double gamma,
                                   double band_lo = 0.5, double band_hi = 2.0);

struct ModulusSplit {
  Matrix near;  // sum over pairs with grid distance < delta / n
  Matrix far;
  double near_norm = 0.0;   // max row norm
  double far_norm = 0.0;
  double total_norm = 0.0;
};

/// Splits the drift (A - I) v row by row into near and far contributions.
/// Grid distance is measured between patch centres in the unit square.
ModulusSplit modulus_decomposition(const Matrix& v, const DiscreteKernel& k,
                                   std::size_t n, double delta);

struct StabilityScanConfig {
  std::vector<std::size_t> n_values{4, 8, 16, 32};
  std::size_t seeds = 20;
  std::size_t layers = 8;
  double gamma = 1.0;
  std::size_t patch_side = 8;
  std::size_t channels = 1;
  AttentionVariant variant = AttentionVariant::rbf;
  std::uint64_t seed = 0;        // weight seeds
  std::uint64_t image_seed = 1;  // the fixed continuum image
};

struct StabilityRow {
  std::size_t n = 0;
  std::size_t seed = 0;
  std::size_t t = 0;
  double drift = 0.0;
  double sup = 0.0;
  double bv = 0.0;
  double rho = 0.0;
};

/// Per-n medians and the log-log fit of one family of rows.
struct DriftScan {
  std::vector<StabilityRow> rows;
  std::vector<double> median_drift;  // per n
  std::vector<double> max_rho;       // per n
  double slope = 0.0;
  double intercept = 0.0;
  double max_rho_all = 0.0;
  double median_rho_all = 0.0;
  bool degenerate = false;           // some median drift is zero
};

/// `layerwise`: every layer applied to the fixed continuum input, so each
/// drift compares one layer against the same field at every n.
/// `composed`: the T-layer propagation trace, layer t reading the output of
/// layer t - 1.
struct StabilityReport {
  DriftScan layerwise;
  DriftScan composed;
  double constant_drift = 0.0;       // max drift of a constant field
};

/// Token features of the fixed continuum image at patch grid n: rows are
/// flattened patches in row-major order, positions the sinusoidal embedding.
TokenMatrix continuum_tokens(std::size_t n, std::size_t patch_side,
                             std::size_t channels, std::uint64_t image_seed);

StabilityReport verify_bound(const StabilityScanConfig& config);

}  // namespace akl
