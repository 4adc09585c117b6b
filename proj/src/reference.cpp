#include "akl/reference.hpp"

#include <cmath>
#include <utility>
#include <vector>

namespace akl::ref {

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw InvalidInput("ref::matmul: shape mismatch");
  Matrix out(a.rows(), b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (Eigen::Index k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      out(i, j) = s;
    }
  return out;
}

Matrix scaled_logits(const Matrix& q, const Matrix& k, double scale) {
  Matrix out(q.rows(), k.rows());
  for (Eigen::Index i = 0; i < q.rows(); ++i)
    for (Eigen::Index j = 0; j < k.rows(); ++j) {
      double s = 0.0;
      for (Eigen::Index l = 0; l < q.cols(); ++l) s += q(i, l) * k(j, l);
      out(i, j) = s * scale;
    }
  return out;
}

Matrix row_softmax(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    double mx = logits(i, 0);
    for (Eigen::Index j = 1; j < logits.cols(); ++j) mx = std::max(mx, logits(i, j));
    double sum = 0.0;
    for (Eigen::Index j = 0; j < logits.cols(); ++j) {
      out(i, j) = std::exp(logits(i, j) - mx);
      sum += out(i, j);
    }
    for (Eigen::Index j = 0; j < logits.cols(); ++j) out(i, j) /= sum;
  }
  return out;
}

Matrix convex_combination(const Matrix& a, const Matrix& v) {
  Matrix z = Matrix::Zero(a.rows(), v.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      for (Eigen::Index c = 0; c < v.cols(); ++c) z(i, c) += a(i, j) * v(j, c);
  return z;
}

Matrix dot_product_attention(const Matrix& y, const Matrix& wq,
                             const Matrix& wk, const Matrix& wv,
                             Matrix* attention) {
  const Matrix q = matmul(y, wq);
  const Matrix k = matmul(y, wk);
  const Matrix v = matmul(y, wv);
  const double scale = 1.0 / std::sqrt(static_cast<double>(y.cols()));
  Matrix a = row_softmax(scaled_logits(q, k, scale));
  Matrix z = convex_combination(a, v);
  if (attention) *attention = std::move(a);
  return z;
}

Matrix pairwise_sqdist(const Matrix& x) {
  Matrix out(x.rows(), x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < x.rows(); ++j) {
      double s = 0.0;
      for (Eigen::Index c = 0; c < x.cols(); ++c) {
        const double d = x(i, c) - x(j, c);
        s += d * d;
      }
      out(i, j) = s;
    }
  return out;
}

double bv_seminorm(const ImageGrid& img) {
  const auto n = img.side();
  struct Edge { std::size_t r, c; double w; };
  double total = 0.0;
  for (std::size_t ch = 0; ch < img.channels(); ++ch)
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < n; ++c) {
        std::vector<Edge> nbrs;
        if (r > 0) nbrs.push_back({r - 1, c, img.down_weight(r - 1, c)});
        if (r + 1 < n) nbrs.push_back({r + 1, c, img.down_weight(r, c)});
        if (c > 0) nbrs.push_back({r, c - 1, img.right_weight(r, c - 1)});
        if (c + 1 < n) nbrs.push_back({r, c + 1, img.right_weight(r, c)});
        double s = 0.0;
        for (const auto& e : nbrs) {
          const double d = img.at(r, c, ch) - img.at(e.r, e.c, ch);
          s += e.w * d * d;
        }
        total += std::sqrt(s);
      }
  return total;
}

}  // namespace akl::ref
