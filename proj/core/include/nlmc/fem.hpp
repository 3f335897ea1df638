#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "nlmc/geometry.hpp"

namespace nlmc {

using SparseMat = Eigen::SparseMatrix<double>;
using RowSparseMat = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// max-norm symmetry check: ||A - A^T||_max <= tol * ||A||_max.
bool is_symmetric(const SparseMat& a, double tol = 1e-12);

/// Bilinear Q1 stiffness over the matrix plus two-point 1D stiffness along
/// every fracture segment (conductivity / segment length), sharing nodal
/// DOFs with the matrix. kappa_cells holds one positive value per fine cell.
SparseMat assemble_stiffness(const FineMesh& mesh, const FractureNetwork& network,
                             const Eigen::VectorXd& kappa_cells);

/// Consistent Q1 mass matrix of the 2D domain. Fracture lines carry no area
/// measure and contribute nothing.
SparseMat assemble_mass(const FineMesh& mesh);

/// Rows are integral functionals over continuum supports in ContinuumIndex
/// order: exact Q1 weights for block areas, trapezoidal weights along
/// fracture components. Applying a row to a nodal field integrates the Q1
/// interpolant over that continuum.
struct ConstraintMatrix {
  RowSparseMat rows;          // count x node_count
  Eigen::VectorXd measures;   // row applied to the constant-1 field

  int count() const { return static_cast<int>(rows.rows()); }
};

ConstraintMatrix averaging_matrix(const FineMesh& mesh, const CoarseGrid& coarse,
                                  const ContinuumIndex& continua);

/// ubar = C * u, in ContinuumIndex order (integral-normalized averages).
Eigen::VectorXd average_fine(const Eigen::VectorXd& u, const ConstraintMatrix& c);

struct SteadyFineSolution {
  Eigen::VectorXd u;
  double residual = 0.0;    // ||A u - g||_2 / ||g||_2
  double multiplier = 0.0;  // scalar enforcing the zero-mean gauge
};

/// Solves the pure-Neumann system A u = g with the zero-mean gauge
/// (M 1)^T u = 0 enforced through one scalar Lagrange multiplier.
/// Rejects sources with |1^T g| > 1e-10 * ||g||_1.
SteadyFineSolution solve_fine_steady(const SparseMat& a, const Eigen::VectorXd& g,
                                     const SparseMat& mass, double tol = 1e-10);

/// Backward Euler trajectory of M du/dt + A u = g from u0: the system
/// (M + dt A) u^n = dt g + M u^{n-1} is factored once and stepped to t_end.
/// Returns the states at the requested report times, which must be integer
/// multiples of dt.
std::vector<Eigen::VectorXd> backward_euler(const SparseMat& mass,
                                            const SparseMat& a,
                                            const Eigen::VectorXd& g, double dt,
                                            double t_end,
                                            const std::vector<double>& report_times,
                                            const Eigen::VectorXd& u0);

}  // namespace nlmc
