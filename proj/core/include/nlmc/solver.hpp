#pragma once

#include <memory>

#include <Eigen/Core>

#include "nlmc/fem.hpp"

namespace nlmc {

/// Factorization of the KKT system [A C^T; C 0] for one oversampled region,
/// reused across the right-hand sides (0; e_k) of that region's continua.
///
/// When the restricted operator is positive definite (any artificial
/// Dirichlet boundary present) the solve goes through a Cholesky
/// factorization plus a dense Schur complement on the constraint block;
/// otherwise (whole-domain regions with natural boundary conditions) the
/// assembled KKT matrix is factored directly.
class SaddlePointSolver {
 public:
  struct Result {
    Eigen::VectorXd psi;         // primal part, on the free DOFs
    Eigen::VectorXd mu;          // one multiplier per constraint row
    double residual = 0.0;       // relative residual of the KKT system
    double constraint_residual = 0.0;  // ||C psi - e||_inf
  };

  SaddlePointSolver(SparseMat a, RowSparseMat c, bool positive_definite,
                    double tol);
  ~SaddlePointSolver();
  SaddlePointSolver(SaddlePointSolver&&) noexcept;
  SaddlePointSolver& operator=(SaddlePointSolver&&) noexcept;

  /// Solves with right-hand side (0; e_k), k a constraint row index.
  Result solve_unit(int k) const;
  Result solve(const Eigen::VectorXd& f, const Eigen::VectorXd& e) const;

  int primal_size() const;
  int constraint_count() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace nlmc
