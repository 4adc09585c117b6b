#include "akl/attention.hpp"

#include <cmath>
#include <numbers>
#include <set>
#include <string>

#include "akl/parallel.hpp"

namespace akl {

AttentionVariant parse_attention_variant(std::string_view name) {
  if (name == "softmax") return AttentionVariant::softmax;
  if (name == "symmetrized") return AttentionVariant::symmetrized;
  if (name == "rbf") return AttentionVariant::rbf;
  throw InvalidInput("unknown attention variant '" + std::string(name) + "'");
}

std::string_view to_string(AttentionVariant v) {
  switch (v) {
    case AttentionVariant::softmax: return "softmax";
    case AttentionVariant::symmetrized: return "symmetrized";
    case AttentionVariant::rbf: return "rbf";
  }
  return "unknown";
}

TokenMatrix TokenMatrix::from_content(Matrix content, Matrix positions) {
  TokenMatrix t{std::move(content), std::move(positions), {}};
  t.patch_ids.resize(static_cast<std::size_t>(t.y.rows()));
  for (std::size_t i = 0; i < t.patch_ids.size(); ++i) t.patch_ids[i] = i;
  t.validate();
  return t;
}

TokenMatrix TokenMatrix::with_positions() const {
  return TokenMatrix{y + positions, positions, patch_ids};
}

TokenMatrix TokenMatrix::permuted(std::span<const std::size_t> order) const {
  if (order.size() != static_cast<std::size_t>(count()))
    throw InvalidInput("permuted: order length mismatch");
  TokenMatrix out{Matrix(y.rows(), y.cols()),
                  Matrix(positions.rows(), positions.cols()),
                  std::vector<std::size_t>(order.size())};
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto src = static_cast<Eigen::Index>(order[i]);
    out.y.row(static_cast<Eigen::Index>(i)) = y.row(src);
    out.positions.row(static_cast<Eigen::Index>(i)) = positions.row(src);
    out.patch_ids[i] = patch_ids.at(order[i]);
  }
  return out;
}

void TokenMatrix::validate() const {
  if (y.rows() < 1 || y.cols() < 1) throw InvalidInput("TokenMatrix: empty");
  if (positions.rows() != y.rows() || positions.cols() != y.cols())
    throw InvalidInput("TokenMatrix: positions shape must match y");
  if (patch_ids.size() != static_cast<std::size_t>(y.rows()))
    throw InvalidInput("TokenMatrix: one patch id per row required");
  require_finite(y, "TokenMatrix.y");
  require_finite(positions, "TokenMatrix.positions");
  if (std::set<std::size_t>(patch_ids.begin(), patch_ids.end()).size() !=
      patch_ids.size())
    throw InvalidInput("TokenMatrix: patch ids must be injective");
  const Matrix dist = par::pairwise_sqdist(positions);
  for (Eigen::Index i = 0; i < dist.rows(); ++i)
    for (Eigen::Index j = i + 1; j < dist.cols(); ++j)
      if (dist(i, j) == 0.0)
        throw InvalidInput("TokenMatrix: positions must be pairwise distinct");
}

Matrix positional_embedding(std::size_t n, std::size_t d) {
  if (d < 4 || d % 2 != 0)
    throw InvalidInput("positional_embedding: d must be even and >= 4");
  if (n == 0) throw InvalidInput("positional_embedding: n must be >= 1");
  const std::size_t half = d / 2;
  const std::size_t m = (half + 1) / 2;  // number of frequencies per axis
  std::vector<double> omega(m);
  for (std::size_t k = 0; k < m; ++k)
    omega[k] = std::pow(10000.0, -static_cast<double>(k) / static_cast<double>(m));
  auto encode = [&](double t, Eigen::Ref<RowVector> out) {
    for (std::size_t k = 0; k < m; ++k)
      out(static_cast<Eigen::Index>(k)) = std::sin(omega[k] * t);
    for (std::size_t k = 0; k + m < half; ++k)
      out(static_cast<Eigen::Index>(m + k)) = std::cos(omega[k] * t);
  };
  const auto hi = static_cast<Eigen::Index>(half);
  Matrix pos(static_cast<Eigen::Index>(n * n), static_cast<Eigen::Index>(d));
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c) {
      const auto row = static_cast<Eigen::Index>(r * n + c);
      RowVector a(hi), b(hi);
      encode(static_cast<double>(r), a);
      encode(static_cast<double>(c), b);
      pos.row(row).head(hi) = a;
      pos.row(row).tail(hi) = b;
    }
  return pos;
}

AttentionWeights AttentionWeights::random(std::size_t d, std::uint64_t seed,
                                          std::size_t hidden) {
  if (d == 0) throw InvalidInput("AttentionWeights::random: d must be >= 1");
  if (hidden == 0) hidden = 4 * d;
  const auto di = static_cast<Eigen::Index>(d);
  const auto hi = static_cast<Eigen::Index>(hidden);
  Rng rng(seed);
  const double s = 1.0 / std::sqrt(static_cast<double>(d));
  AttentionWeights w;
  w.wq = gaussian_matrix(rng, di, di, s);
  w.wk = gaussian_matrix(rng, di, di, s);
  w.wv = gaussian_matrix(rng, di, di, s);
  w.ln_scale = Vector::Ones(di);
  w.ln_shift = Vector::Zero(di);
  w.ffn.w1 = gaussian_matrix(rng, di, hi, s);
  w.ffn.b1 = Vector::Zero(hi);
  w.ffn.w2 = gaussian_matrix(rng, hi, di, 1.0 / std::sqrt(static_cast<double>(hidden)));
  w.ffn.b2 = Vector::Zero(di);
  return w;
}

void AttentionWeights::validate() const {
  const auto d = wq.rows();
  if (d < 1 || wq.cols() != d || wk.rows() != d || wk.cols() != d ||
      wv.rows() != d || wv.cols() != d)
    throw InvalidInput("AttentionWeights: projections must be d x d");
  if (!(gamma > 0.0) || !std::isfinite(gamma))
    throw InvalidInput("AttentionWeights: gamma must be positive");
  require_finite(wq, "W^Q");
  require_finite(wk, "W^K");
  require_finite(wv, "W^V");
}

bool AttentionWeights::value_is_identity() const {
  return wv.rows() == wv.cols() && wv == Matrix::Identity(wv.rows(), wv.cols());
}

Matrix attention_logits(const Matrix& q, const Matrix& k,
                        AttentionVariant variant, double gamma) {
  switch (variant) {
    case AttentionVariant::softmax:
      return par::scaled_logits(q, k, 1.0 / std::sqrt(static_cast<double>(q.cols())));
    case AttentionVariant::symmetrized: {
      if (q.rows() != k.rows()) throw InvalidInput("symmetrized logits need square attention");
      return par::bilinear_logits(q - k, gamma);
    }
    case AttentionVariant::rbf: {
      if (q.rows() != k.rows()) throw InvalidInput("rbf logits need square attention");
      return -gamma * par::pairwise_sqdist(q - k);
    }
  }
  throw InvalidInput("unknown attention variant");
}

Matrix attention_matrix(const Matrix& q, const Matrix& k,
                        AttentionVariant variant, double gamma) {
  return par::row_softmax(attention_logits(q, k, variant, gamma));
}

AttentionOutput attend(const Matrix& query_source, const Matrix& value_source,
                       const AttentionWeights& w, AttentionVariant variant) {
  w.validate();
  require_finite(query_source, "attention input");
  require_finite(value_source, "attention values");
  if (query_source.cols() != w.width() || value_source.cols() != w.width() ||
      query_source.rows() != value_source.rows())
    throw InvalidInput("attention: token width does not match weights");
  const Matrix q = query_source * w.wq;
  const Matrix k = query_source * w.wk;
  const Matrix v = value_source * w.wv;
  AttentionOutput out;
  out.attention = attention_matrix(q, k, variant, w.gamma);
  out.z = par::apply_rows(out.attention, v);
  return out;
}

AttentionOutput scaled_dot_product(const TokenMatrix& tokens,
                                   const AttentionWeights& w) {
  return attend(tokens.y, tokens.y, w, AttentionVariant::softmax);
}

AttentionOutput symmetrized_attention(const TokenMatrix& tokens,
                                      const AttentionWeights& w) {
  return attend(tokens.y, tokens.y, w, AttentionVariant::symmetrized);
}

AttentionOutput attention(const TokenMatrix& tokens, const AttentionWeights& w,
                          AttentionVariant variant) {
  return attend(tokens.y, tokens.y, w, variant);
}

Matrix symmetrized_logits(const TokenMatrix& tokens, const AttentionWeights& w) {
  w.validate();
  require_finite(tokens.y, "attention input");
  return par::bilinear_logits(tokens.y * (w.wq - w.wk), w.gamma);
}

std::pair<double, double> dot_product_shift_identity(std::span<const double> q,
                                                     std::span<const double> k) {
  if (q.size() != k.size()) throw InvalidInput("shift identity: length mismatch");
  double qk = 0.0, qq = 0.0, kk = 0.0, dd = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    qk += q[i] * k[i];
    qq += q[i] * q[i];
    kk += k[i] * k[i];
    dd += (q[i] - k[i]) * (q[i] - k[i]);
  }
  return {qk, 0.5 * qq + 0.5 * kk - 0.5 * dd};
}

Matrix layer_norm(const Matrix& x, const Vector& scale, const Vector& shift,
                  double eps) {
  if (scale.size() != x.cols() || shift.size() != x.cols())
    throw InvalidInput("layer_norm: parameter width mismatch");
  Matrix out(x.rows(), x.cols());
  const double d = static_cast<double>(x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double mean = x.row(i).mean();
    const RowVector centered = x.row(i).array() - mean;
    const double var = centered.squaredNorm() / d;
    out.row(i) = (centered / std::sqrt(var + eps)).cwiseProduct(scale.transpose()) +
                 shift.transpose();
  }
  return out;
}

Matrix gelu(const Matrix& x) {
  return x.unaryExpr([](double t) {
    return 0.5 * t * (1.0 + std::erf(t / std::numbers::sqrt2));
  });
}

Matrix feed_forward(const Matrix& x, const FeedForward& ffn) {
  if (ffn.w1.rows() != x.cols() || ffn.w2.cols() != x.cols() ||
      ffn.w1.cols() != ffn.w2.rows() || ffn.b1.size() != ffn.w1.cols() ||
      ffn.b2.size() != ffn.w2.cols())
    throw InvalidInput("feed_forward: shape mismatch");
  Matrix h = x * ffn.w1;
  h.rowwise() += ffn.b1.transpose();
  Matrix out = gelu(h) * ffn.w2;
  out.rowwise() += ffn.b2.transpose();
  return out;
}

TokenMatrix attention_block(const TokenMatrix& tokens, const AttentionWeights& w,
                            AttentionVariant variant, bool skip) {
  const AttentionOutput att = attention(tokens, w, variant);
  const Matrix r = skip ? Matrix(tokens.y + att.z) : att.z;
  const Matrix inner = layer_norm(r, w.ln_scale, w.ln_shift);
  const Matrix out = layer_norm(r + feed_forward(inner, w.ffn), w.ln_scale, w.ln_shift);
  return TokenMatrix{out, tokens.positions, tokens.patch_ids};
}

std::size_t effective_rank(const Matrix& m, double tol) {
  if (!(tol > 0.0)) throw InvalidInput("effective_rank: tol must be positive");
  require_finite(m, "effective_rank");
  if (m.size() == 0) return 0;
  Eigen::BDCSVD<Matrix> svd(m);
  const Vector& s = svd.singularValues();
  if (s.size() == 0 || s(0) == 0.0) return 0;
  std::size_t r = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (s(i) > tol * s(0)) ++r;
  return r;
}

}  // namespace akl
