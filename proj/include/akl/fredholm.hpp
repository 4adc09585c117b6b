#pragma once

// Discrete Fredholm equations of the first and second kind and the
// Tikhonov functional whose stationarity condition is a second-kind
// equation.

#include <cstdint>

#include "akl/common.hpp"

namespace akl {

/// K symmetric PSD (p x p), alpha > 0, quadrature weights mu, right-hand
/// side z (p x d), regularisation beta >= 0.
struct FredholmProblem {
  Matrix k;
  Vector alpha;
  Vector mu;
  Matrix z;
  double beta = 0.0;

  Eigen::Index size() const { return k.rows(); }
  void validate() const;
  /// diag(alpha)^{-1} K diag(mu).
  Matrix normalized_operator() const;
};

/// K diag(mu) v.
Matrix apply_operator(const FredholmProblem& prob, const Matrix& v);

struct FirstKindSolution {
  Matrix v;
  double condition = 0.0;       // largest / smallest retained singular value
  double full_condition = 0.0;  // largest / smallest singular value
  Eigen::Index retained = 0;
  double residual = 0.0;        // ||B v - z||_F / ||z||_F
};

/// Truncated pseudo-inverse of diag(alpha)^{-1} K diag(mu); singular values
/// at or below pinv_tol are dropped. Throws RankZero if none survive.
FirstKindSolution solve_first_kind(const FredholmProblem& prob, double pinv_tol);

struct SecondKindSolution {
  Matrix v;
  double condition = 0.0;   // of the symmetrised system matrix
  double lambda_max = 0.0;  // largest eigenvalue of the normalised kernel
  double bound = 0.0;       // (beta + lambda_max) / beta
};

/// (beta I + diag(alpha)^{-1} K diag(mu)) v = z, solved through the
/// symmetric similar matrix beta I + D^{-1/2} M^{1/2} K M^{1/2} D^{-1/2}.
SecondKindSolution solve_second_kind(const FredholmProblem& prob);

/// Same with a per-row coefficient: (diag(coeff) + diag(alpha)^{-1} K M) v = z.
SecondKindSolution solve_second_kind(const FredholmProblem& prob,
                                     const Vector& coeff);

/// 1/2 ||B v - z||_mu^2 + beta <K M v, v>_mu with B = diag(alpha)^{-1} K M.
double tikhonov_functional(const FredholmProblem& prob, const Matrix& v);

/// M K [diag(alpha)^{-1} M (B v - z) + 2 beta M v].
Matrix tikhonov_gradient(const FredholmProblem& prob, const Matrix& v);

/// Coefficient of the second-kind equation satisfied by stationary points
/// of the functional: beta'_i = 2 beta alpha_i.
Vector stationarity_coefficients(const FredholmProblem& prob);

/// Orthonormal basis of range(diag(mu) K), eigenvalues below rel_tol *
/// largest treated as zero.
Matrix range_basis(const FredholmProblem& prob, double rel_tol = 1e-10);

struct DescentOptions {
  std::size_t max_iterations = 200000;
  double gradient_tol = 1e-13;  // relative to the initial gradient norm
};

struct DescentResult {
  Matrix v;
  std::size_t iterations = 0;
  bool converged = false;
};

/// Nesterov-accelerated gradient descent on the functional from v = 0.
DescentResult minimize_tikhonov(const FredholmProblem& prob,
                                const DescentOptions& options = {});

/// Max relative error between the analytic gradient and central finite
/// differences over `points` seeded evaluation points.
double gradient_check(const FredholmProblem& prob, std::uint64_t seed,
                      std::size_t points = 3, double step = 1e-5);

struct EulerLagrangeReport {
  double gradient_error = 0.0;
  std::size_t oracle_iterations = 0;
  bool oracle_converged = false;
  double mismatch = 0.0;  // ||P(v_oracle - v_solve)|| / ||P v_solve||
  double functional_oracle = 0.0;
  double functional_solve = 0.0;
  Eigen::Index range_dim = 0;
};

EulerLagrangeReport verify_euler_lagrange(const FredholmProblem& prob,
                                          std::uint64_t seed,
                                          const DescentOptions& options = {});

/// Gaussian RBF exp(-gamma ||x_i - x_j||^2) on the n x n grid (r/n, c/n),
/// uniform mu, alpha the row sums. Data are consistent: z = B v for a seeded
/// Gaussian v with d columns.
FredholmProblem rbf_grid_problem(std::size_t n, double gamma, std::size_t d,
                                 double beta, std::uint64_t seed);

/// Strictly PD kernel: RBF on p seeded points in the unit square plus
/// nugget * I.
FredholmProblem pd_problem(std::size_t p, std::size_t d, double beta,
                           std::uint64_t seed, double gamma = 1.0,
                           double nugget = 0.1);

struct NoiseAmplification {
  double noise = 0.0;           // ||dz|| / ||z||
  double first_kind = 0.0;      // (||dv|| / ||v||) / noise
  double second_kind = 0.0;
  double ratio = 0.0;           // first_kind / second_kind
  double second_kind_shift = 0.0;  // ||dv|| / ||v|| of the second-kind solve
};

NoiseAmplification noise_amplification(const FredholmProblem& prob, double noise,
                                       double pinv_tol, std::uint64_t seed);

}  // namespace akl
