#include "akl/parallel.hpp"

#include <cmath>

namespace akl::par {

Matrix scaled_logits(const Matrix& q, const Matrix& k, double scale) {
  if (q.cols() != k.cols()) throw InvalidInput("scaled_logits: width mismatch");
  const Eigen::Index p = q.rows(), m = k.rows();
  Matrix out(p, m);
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < p; ++i)
    out.row(i).noalias() = (k * q.row(i).transpose()).transpose() * scale;
  return out;
}

Matrix bilinear_logits(const Matrix& x, double gamma) {
  const Eigen::Index p = x.rows();
  Matrix out(p, p);
#pragma omp parallel for schedule(dynamic)
  for (Eigen::Index i = 0; i < p; ++i)
    for (Eigen::Index j = i; j < p; ++j)
      out(i, j) = -gamma * x.row(i).dot(x.row(j));
  for (Eigen::Index i = 0; i < p; ++i)
    for (Eigen::Index j = 0; j < i; ++j) out(i, j) = out(j, i);
  return out;
}

Matrix pairwise_sqdist(const Matrix& x) {
  const Eigen::Index p = x.rows();
  Matrix out(p, p);
#pragma omp parallel for schedule(dynamic)
  for (Eigen::Index i = 0; i < p; ++i) {
    out(i, i) = 0.0;
    for (Eigen::Index j = i + 1; j < p; ++j)
      out(i, j) = (x.row(i) - x.row(j)).squaredNorm();
  }
  for (Eigen::Index i = 0; i < p; ++i)
    for (Eigen::Index j = 0; j < i; ++j) out(i, j) = out(j, i);
  return out;
}

Matrix row_softmax(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double mx = logits.row(i).maxCoeff();
    out.row(i) = (logits.row(i).array() - mx).exp().matrix();
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

Matrix apply_rows(const Matrix& a, const Matrix& v) {
  if (a.cols() != v.rows()) throw InvalidInput("apply_rows: shape mismatch");
  Matrix out(a.rows(), v.cols());
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    out.row(i).noalias() = a.row(i) * v;
  return out;
}

Vector row_norms(const Matrix& m) {
  Vector out(m.rows());
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < m.rows(); ++i) out(i) = m.row(i).norm();
  return out;
}

}  // namespace akl::par
