#include "akl/kernel_analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "akl/parallel.hpp"

namespace akl {

KernelVariant parse_kernel_variant(std::string_view name) {
  if (name == "asymmetric") return KernelVariant::asymmetric;
  if (name == "bilinear") return KernelVariant::bilinear;
  if (name == "rbf") return KernelVariant::rbf;
  throw InvalidInput("unknown kernel variant '" + std::string(name) + "'");
}

std::string_view to_string(KernelVariant v) {
  switch (v) {
    case KernelVariant::asymmetric: return "asymmetric";
    case KernelVariant::bilinear: return "bilinear";
    case KernelVariant::rbf: return "rbf";
  }
  return "unknown";
}

Matrix DiscreteKernel::normalized() const {
  return alpha.cwiseInverse().asDiagonal() * k_matrix;
}

double DiscreteKernel::log_value(Eigen::Index i, Eigen::Index j) const {
  return std::log(k_matrix(i, j)) + log_scale(i);
}

void DiscreteKernel::validate() const {
  const auto p = k_matrix.rows();
  if (p < 1 || k_matrix.cols() != p || alpha.size() != p || measure.size() != p ||
      log_scale.size() != p)
    throw InvalidInput("DiscreteKernel: inconsistent sizes");
  require_finite(k_matrix, "kernel");
  if ((alpha.array() <= 0.0).any())
    throw InvalidInput("DiscreteKernel: alpha must be positive");
  if (symmetric && (k_matrix - k_matrix.transpose()).cwiseAbs().maxCoeff() > 1e-10)
    throw InvalidInput("DiscreteKernel: symmetric flag set on asymmetric matrix");
}

namespace {

DiscreteKernel finish(Matrix logits, KernelVariant variant) {
  const auto p = logits.rows();
  DiscreteKernel out;
  out.variant = variant;
  out.symmetric = variant != KernelVariant::asymmetric;
  out.log_scale = Vector(p);
  if (out.symmetric) {
    const double shift = logits.maxCoeff();
    out.log_scale.setConstant(shift);
    out.k_matrix = (logits.array() - shift).exp().matrix();
  } else {
    out.k_matrix = Matrix(p, logits.cols());
    for (Eigen::Index i = 0; i < p; ++i) {
      const double shift = logits.row(i).maxCoeff();
      out.log_scale(i) = shift;
      out.k_matrix.row(i) = (logits.row(i).array() - shift).exp();
    }
  }
  out.alpha = out.k_matrix.rowwise().sum();
  out.measure = Vector::Constant(p, 1.0 / static_cast<double>(p));
  return out;
}

}  // namespace

DiscreteKernel kernel_from_projections(const Matrix& q, const Matrix& k,
                                       KernelVariant variant, double gamma) {
  if (q.rows() != k.rows() || q.cols() != k.cols() || q.rows() < 1)
    throw InvalidInput("kernel: q and k must have equal shape");
  if (!(gamma >= 0.0)) throw InvalidInput("kernel: gamma must be >= 0");
  require_finite(q, "kernel q");
  require_finite(k, "kernel k");
  switch (variant) {
    case KernelVariant::asymmetric:
      return finish(par::scaled_logits(q, k, 1.0 / std::sqrt(static_cast<double>(q.cols()))),
                    variant);
    case KernelVariant::bilinear:
      return finish(par::bilinear_logits(q - k, gamma), variant);
    case KernelVariant::rbf:
      return finish(-gamma * par::pairwise_sqdist(q - k), variant);
  }
  throw InvalidInput("unknown kernel variant");
}

DiscreteKernel extract_kernel(const TokenMatrix& tokens, const AttentionWeights& w,
                              KernelVariant variant) {
  w.validate();
  if (tokens.width() != w.width())
    throw InvalidInput("extract_kernel: token width does not match weights");
  return kernel_from_projections(tokens.y * w.wq, tokens.y * w.wk, variant, w.gamma);
}

DiscreteKernel kernel_from_matrix(Matrix k, KernelVariant variant) {
  if (k.rows() < 1 || k.rows() != k.cols())
    throw InvalidInput("kernel_from_matrix: square matrix required");
  require_finite(k, "kernel");
  if ((k.array() < 0.0).any()) throw InvalidInput("kernel_from_matrix: entries must be nonnegative");
  const auto p = k.rows();
  DiscreteKernel out;
  out.variant = variant;
  out.symmetric = variant != KernelVariant::asymmetric;
  out.k_matrix = std::move(k);
  out.alpha = out.k_matrix.rowwise().sum();
  out.measure = Vector::Constant(p, 1.0 / static_cast<double>(p));
  out.log_scale = Vector::Zero(p);
  return out;
}

double check_normalization(const DiscreteKernel& k) {
  const double p = static_cast<double>(k.size());
  const Vector integral = k.k_matrix * k.measure * p;
  return (integral.cwiseQuotient(k.alpha).array() - 1.0).abs().maxCoeff();
}

MercerSpectrum mercer_spectrum(const DiscreteKernel& k) {
  if (!k.symmetric)
    throw UnsupportedVariant(
        "mercer_spectrum: asymmetric kernel, use singular values instead");
  const Vector root = k.measure.cwiseSqrt();
  const Matrix m = root.asDiagonal() * k.k_matrix * root.asDiagonal();
  const Matrix sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym);
  const auto p = sym.rows();
  MercerSpectrum s{Vector(p), Matrix(p, p)};
  for (Eigen::Index i = 0; i < p; ++i) {
    s.values(i) = es.eigenvalues()(p - 1 - i);
    s.vectors.col(i) = es.eigenvectors().col(p - 1 - i);
  }
  return s;
}

Matrix mercer_reconstruct(const MercerSpectrum& s, const Vector& measure) {
  const Vector inv_root = measure.cwiseSqrt().cwiseInverse();
  return inv_root.asDiagonal() * s.vectors * s.values.asDiagonal() *
         s.vectors.transpose() * inv_root.asDiagonal();
}

DecayFit check_decay(const DiscreteKernel& k, const Matrix& positions,
                     double gamma) {
  if (positions.rows() != k.size())
    throw InvalidInput("check_decay: one position per kernel row required");
  double best = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < k.size(); ++i)
    for (Eigen::Index j = 0; j < k.size(); ++j) {
      if (k.k_matrix(i, j) <= 0.0) continue;
      const double dist = (positions.row(i) - positions.row(j)).norm();
      best = std::max(best, k.log_value(i, j) + gamma * dist);
    }
  return {std::exp(best), best};
}

Matrix patch_centres(std::size_t n) {
  Matrix out(static_cast<Eigen::Index>(n * n), 2);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c) {
      const auto i = static_cast<Eigen::Index>(r * n + c);
      out(i, 0) = (static_cast<double>(r) + 0.5) / static_cast<double>(n);
      out(i, 1) = (static_cast<double>(c) + 0.5) / static_cast<double>(n);
    }
  return out;
}

}  // namespace akl
