#include "akl/fredholm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "akl/parallel.hpp"

namespace akl {

void FredholmProblem::validate() const {
  const auto p = k.rows();
  if (p < 1 || k.cols() != p || alpha.size() != p || mu.size() != p || z.rows() != p ||
      z.cols() < 1)
    throw InvalidInput("FredholmProblem: inconsistent shapes");
  require_finite(k, "K");
  require_finite(z, "z");
  if ((alpha.array() <= 0.0).any() || !alpha.allFinite())
    throw InvalidInput("FredholmProblem: alpha must be positive");
  if ((mu.array() <= 0.0).any() || !mu.allFinite())
    throw InvalidInput("FredholmProblem: mu must be positive");
  if (!(beta >= 0.0) || !std::isfinite(beta))
    throw InvalidInput("FredholmProblem: beta must be >= 0");
  const double scale = std::max(k.cwiseAbs().maxCoeff(), 1e-300);
  if ((k - k.transpose()).cwiseAbs().maxCoeff() > 1e-10 * std::max(scale, 1.0))
    throw InvalidInput("FredholmProblem: K must be symmetric");
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (k + k.transpose()),
                                           Eigen::EigenvaluesOnly);
  const Vector& ev = es.eigenvalues();
  if (ev(0) < -1e-8 * std::max(ev(p - 1), 0.0) - 1e-300)
    throw InvalidInput("FredholmProblem: K must be positive semidefinite");
}

Matrix FredholmProblem::normalized_operator() const {
  return alpha.cwiseInverse().asDiagonal() * k * mu.asDiagonal();
}

Matrix apply_operator(const FredholmProblem& prob, const Matrix& v) {
  if (v.rows() != prob.size()) throw InvalidInput("apply_operator: shape mismatch");
  return prob.k * (prob.mu.asDiagonal() * v);
}

FirstKindSolution solve_first_kind(const FredholmProblem& prob, double pinv_tol) {
  prob.validate();
  if (!(pinv_tol > 0.0)) throw InvalidInput("solve_first_kind: pinv_tol must be > 0");
  const Matrix b = prob.normalized_operator();
  Eigen::JacobiSVD<Matrix> svd(b, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vector& s = svd.singularValues();
  Eigen::Index kept = 0;
  while (kept < s.size() && s(kept) > pinv_tol) ++kept;
  if (kept == 0) throw RankZero("solve_first_kind: all singular values below pinv_tol");
  FirstKindSolution out;
  out.retained = kept;
  const Matrix coef = svd.matrixU().leftCols(kept).transpose() * prob.z;
  out.v = svd.matrixV().leftCols(kept) * s.head(kept).cwiseInverse().asDiagonal() * coef;
  out.condition = s(0) / s(kept - 1);
  out.full_condition = s(s.size() - 1) > 0.0 ? s(0) / s(s.size() - 1)
                                             : std::numeric_limits<double>::infinity();
  const double zn = prob.z.norm();
  out.residual = (b * out.v - prob.z).norm() / (zn > 0.0 ? zn : 1.0);
  return out;
}

SecondKindSolution solve_second_kind(const FredholmProblem& prob,
                                     const Vector& coeff) {
  prob.validate();
  if (coeff.size() != prob.size() || !((coeff.array() > 0.0).all()))
    throw InvalidInput("solve_second_kind: coefficients must be positive");
  const Vector w = (prob.alpha.cwiseProduct(prob.mu)).cwiseSqrt();
  const Vector root_mu = prob.mu.cwiseSqrt();
  const Vector inv_root_alpha = prob.alpha.cwiseSqrt().cwiseInverse();
  const Vector scale = inv_root_alpha.cwiseProduct(root_mu);
  Matrix h = scale.asDiagonal() * prob.k * scale.asDiagonal();
  h = 0.5 * (h + h.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> kes(h, Eigen::EigenvaluesOnly);
  Matrix system = h;
  system.diagonal() += coeff;
  Eigen::SelfAdjointEigenSolver<Matrix> ses(system, Eigen::EigenvaluesOnly);
  SecondKindSolution out;
  const Matrix y = system.ldlt().solve(w.asDiagonal() * prob.z);
  out.v = w.cwiseInverse().asDiagonal() * y;
  const Vector& sv = ses.eigenvalues();
  out.condition = sv(sv.size() - 1) / sv(0);
  out.lambda_max = kes.eigenvalues()(h.rows() - 1);
  const double cmin = coeff.minCoeff();
  out.bound = (cmin + out.lambda_max) / cmin;
  return out;
}

SecondKindSolution solve_second_kind(const FredholmProblem& prob) {
  if (!(prob.beta > 0.0)) throw InvalidInput("solve_second_kind: beta must be > 0");
  return solve_second_kind(prob, Vector::Constant(prob.size(), prob.beta));
}

double tikhonov_functional(const FredholmProblem& prob, const Matrix& v) {
  if (v.rows() != prob.size() || v.cols() != prob.z.cols())
    throw InvalidInput("tikhonov_functional: shape mismatch");
  const Matrix kv = apply_operator(prob, v);
  const Matrix r = prob.alpha.cwiseInverse().asDiagonal() * kv - prob.z;
  const double fit = (prob.mu.asDiagonal() * r.cwiseProduct(r)).sum();
  const double reg = (prob.mu.asDiagonal() * kv.cwiseProduct(v)).sum();
  return 0.5 * fit + prob.beta * reg;
}

Matrix tikhonov_gradient(const FredholmProblem& prob, const Matrix& v) {
  if (v.rows() != prob.size() || v.cols() != prob.z.cols())
    throw InvalidInput("tikhonov_gradient: shape mismatch");
  const auto& mu = prob.mu;
  const Matrix r = prob.alpha.cwiseInverse().asDiagonal() * apply_operator(prob, v) - prob.z;
  const Matrix inner = prob.alpha.cwiseInverse().asDiagonal() * (mu.asDiagonal() * r) +
                       2.0 * prob.beta * (mu.asDiagonal() * v);
  return mu.asDiagonal() * (prob.k * inner);
}

Vector stationarity_coefficients(const FredholmProblem& prob) {
  return 2.0 * prob.beta * prob.alpha;
}

Matrix range_basis(const FredholmProblem& prob, double rel_tol) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (prob.k + prob.k.transpose()));
  const Vector& ev = es.eigenvalues();
  const double top = ev(ev.size() - 1);
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < ev.size(); ++i)
    if (ev(i) > rel_tol * top) keep.push_back(i);
  Matrix cols(prob.size(), static_cast<Eigen::Index>(keep.size()));
  for (std::size_t j = 0; j < keep.size(); ++j)
    cols.col(static_cast<Eigen::Index>(j)) = prob.mu.asDiagonal() * es.eigenvectors().col(keep[j]);
  Eigen::HouseholderQR<Matrix> qr(cols);
  return qr.householderQ() * Matrix::Identity(cols.rows(), cols.cols());
}

DescentResult minimize_tikhonov(const FredholmProblem& prob,
                                const DescentOptions& options) {
  prob.validate();
  const auto& mu = prob.mu;
  const Matrix b = prob.normalized_operator();
  const Matrix hess = b.transpose() * mu.asDiagonal() * b +
                      2.0 * prob.beta * mu.asDiagonal() * prob.k * mu.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (hess + hess.transpose()),
                                           Eigen::EigenvaluesOnly);
  const double lip = es.eigenvalues().maxCoeff();
  DescentResult out{Matrix::Zero(prob.size(), prob.z.cols())};
  const double g0 = tikhonov_gradient(prob, out.v).norm();
  if (!(lip > 0.0) || g0 == 0.0) {
    out.converged = true;
    return out;
  }
  Matrix x = out.v, y = out.v;
  double t = 1.0;
  for (std::size_t it = 1; it <= options.max_iterations; ++it) {
    const Matrix g = tikhonov_gradient(prob, y);
    Matrix next = y - g / lip;
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    // Adaptive restart when momentum points uphill.
    if ((g.cwiseProduct(next - x)).sum() > 0.0) {
      t = 1.0;
      y = x;
      continue;
    }
    y = next + ((t - 1.0) / t_next) * (next - x);
    x = std::move(next);
    t = t_next;
    out.iterations = it;
    if (tikhonov_gradient(prob, x).norm() <= options.gradient_tol * g0) {
      out.converged = true;
      break;
    }
  }
  out.v = x;
  return out;
}

double gradient_check(const FredholmProblem& prob, std::uint64_t seed,
                      std::size_t points, double step) {
  Rng rng(seed);
  double worst = 0.0;
  for (std::size_t k = 0; k < points; ++k) {
    Matrix v = gaussian_matrix(rng, prob.size(), prob.z.cols());
    const Matrix g = tikhonov_gradient(prob, v);
    Matrix fd(g.rows(), g.cols());
    for (Eigen::Index i = 0; i < v.rows(); ++i)
      for (Eigen::Index j = 0; j < v.cols(); ++j) {
        const double keep = v(i, j);
        v(i, j) = keep + step;
        const double up = tikhonov_functional(prob, v);
        v(i, j) = keep - step;
        const double down = tikhonov_functional(prob, v);
        v(i, j) = keep;
        fd(i, j) = (up - down) / (2.0 * step);
      }
    const double gn = g.norm();
    worst = std::max(worst, (fd - g).norm() / (gn > 0.0 ? gn : 1.0));
  }
  return worst;
}

EulerLagrangeReport verify_euler_lagrange(const FredholmProblem& prob,
                                          std::uint64_t seed,
                                          const DescentOptions& options) {
  if (!(prob.beta > 0.0)) throw InvalidInput("verify_euler_lagrange: beta must be > 0");
  EulerLagrangeReport rep;
  rep.gradient_error = gradient_check(prob, seed);
  const DescentResult oracle = minimize_tikhonov(prob, options);
  rep.oracle_iterations = oracle.iterations;
  rep.oracle_converged = oracle.converged;
  const SecondKindSolution solve = solve_second_kind(prob, stationarity_coefficients(prob));
  const Matrix basis = range_basis(prob);
  rep.range_dim = basis.cols();
  const Matrix ps = basis * (basis.transpose() * solve.v);
  const Matrix po = basis * (basis.transpose() * oracle.v);
  const double denom = ps.norm();
  rep.mismatch = (po - ps).norm() / (denom > 0.0 ? denom : 1.0);
  rep.functional_oracle = tikhonov_functional(prob, oracle.v);
  rep.functional_solve = tikhonov_functional(prob, solve.v);
  return rep;
}

namespace {

FredholmProblem rbf_problem(const Matrix& pts, double gamma, std::size_t d,
                            double beta, Rng& rng) {
  const auto p = pts.rows();
  FredholmProblem prob;
  prob.k = (-gamma * par::pairwise_sqdist(pts)).array().exp().matrix();
  prob.alpha = prob.k.rowwise().sum();
  prob.mu = Vector::Constant(p, 1.0 / static_cast<double>(p));
  prob.z = gaussian_matrix(rng, p, static_cast<Eigen::Index>(d));
  prob.beta = beta;
  return prob;
}

}  // namespace

FredholmProblem rbf_grid_problem(std::size_t n, double gamma, std::size_t d,
                                 double beta, std::uint64_t seed) {
  if (n < 1 || d < 1) throw InvalidInput("rbf_grid_problem: n, d must be >= 1");
  Matrix pts(static_cast<Eigen::Index>(n * n), 2);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c) {
      pts(static_cast<Eigen::Index>(r * n + c), 0) = static_cast<double>(r) / static_cast<double>(n);
      pts(static_cast<Eigen::Index>(r * n + c), 1) = static_cast<double>(c) / static_cast<double>(n);
    }
  Rng rng(seed);
  FredholmProblem prob = rbf_problem(pts, gamma, d, beta, rng);
  prob.z = prob.normalized_operator() * prob.z;
  return prob;
}

FredholmProblem pd_problem(std::size_t p, std::size_t d, double beta,
                           std::uint64_t seed, double gamma, double nugget) {
  if (p < 1 || d < 1) throw InvalidInput("pd_problem: p, d must be >= 1");
  Rng rng(seed);
  const Matrix pts = uniform_matrix(rng, static_cast<Eigen::Index>(p), 2);
  FredholmProblem prob = rbf_problem(pts, gamma, d, beta, rng);
  prob.k.diagonal().array() += nugget;
  prob.alpha = prob.k.rowwise().sum();
  return prob;
}

NoiseAmplification noise_amplification(const FredholmProblem& prob, double noise,
                                       double pinv_tol, std::uint64_t seed) {
  Rng rng(seed);
  Matrix dz = gaussian_matrix(rng, prob.z.rows(), prob.z.cols());
  dz *= noise * prob.z.norm() / dz.norm();
  FredholmProblem pert = prob;
  pert.z += dz;
  NoiseAmplification out;
  out.noise = dz.norm() / prob.z.norm();
  const Matrix v1 = solve_first_kind(prob, pinv_tol).v;
  const Matrix v1p = solve_first_kind(pert, pinv_tol).v;
  const Matrix v2 = solve_second_kind(prob).v;
  const Matrix v2p = solve_second_kind(pert).v;
  out.first_kind = (v1p - v1).norm() / v1.norm() / out.noise;
  out.second_kind_shift = (v2p - v2).norm() / v2.norm();
  out.second_kind = out.second_kind_shift / out.noise;
  out.ratio = out.first_kind / out.second_kind;
  return out;
}

}  // namespace akl
