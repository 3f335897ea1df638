#pragma once

#include <vector>

#include <Eigen/Core>

#include "nlmc/basis.hpp"
#include "nlmc/fem.hpp"
#include "nlmc/geometry.hpp"

namespace nlmc {

/// Coarse unknowns are mean pressures: the system is assembled from bases
/// rescaled to unit mean over their own continuum (psi_hat = measure * psi).
/// In this frame the transmissibility rows of a whole-domain construction
/// sum to zero, so the finite-volume form and the Galerkin form coincide
/// there. `normalize = false` gives the raw integral-frame pairings.

/// T[(i,m),(j,n)] = a(psi_m^(i), psi_n^(j)); entries of non-overlapping
/// regions are exactly zero and skipped.
Eigen::MatrixXd assemble_transmissibility(const BasisSet& bases,
                                          const SparseMat& a_f,
                                          const Eigen::VectorXd& measures,
                                          bool normalize = true);

/// Non-local coarse mass M_T = Psi^T M_f Psi.
Eigen::MatrixXd assemble_coarse_mass(const BasisSet& bases, const SparseMat& m_f,
                                     const Eigen::VectorXd& measures,
                                     bool normalize = true);

/// Finite-volume form: off-diagonal entries of T kept, diagonal of T
/// discarded and rebuilt as minus the off-diagonal row sum, so A_T 1 = 0
/// holds by construction and the steady system is positive semidefinite
/// with the constants as its null space.
Eigen::MatrixXd finite_volume_correct(const Eigen::MatrixXd& t);

enum class RhsMode {
  kGalerkin,       // g_m^(i) = (g, psi_m^(i))
  kBlockIntegral,  // matrix continua get int_{K_i} g, fracture continua 0
};

struct SourceField {
  Eigen::VectorXd nodal;  // g at fine nodes
  Eigen::VectorXd load;   // M_f * nodal
};

Eigen::VectorXd coarse_rhs(const BasisSet& bases, const ContinuumIndex& continua,
                           const ConstraintMatrix& c, const SourceField& source,
                           RhsMode mode, bool normalize = true);

/// Weights of the discrete domain-integral gauge: block area on matrix
/// continua, zero on fracture continua. Matches the fine solver's zero-mean
/// convention, so coarse solutions compare to averaged fine solutions
/// without shifting.
Eigen::VectorXd gauge_weights(const ContinuumIndex& continua);

struct CoarseSolution {
  Eigen::VectorXd u;
  double residual = 0.0;
  double multiplier = 0.0;
  double imbalance = 0.0;  // |sum g| / ||g||_1
};

/// Solves the singular coarse system with a scalar multiplier on the gauge
/// functional w^T u = 0.
CoarseSolution solve_upscaled_steady(const Eigen::MatrixXd& a_t,
                                     const Eigen::VectorXd& g,
                                     const Eigen::VectorXd& gauge, double tol = 1e-10);

/// Backward Euler on the coarse system: (M_T + dt A_T) u^n = dt g + M_T u^{n-1}.
/// Returns the states at the requested report times, which must be integer
/// multiples of dt.
std::vector<Eigen::VectorXd> solve_transient(const Eigen::MatrixXd& a_t,
                                             const Eigen::MatrixXd& m_t,
                                             const Eigen::VectorXd& g, double dt,
                                             double t_end,
                                             const std::vector<double>& report_times,
                                             const Eigen::VectorXd& u0);

/// u_ms = sum_i u[i] * psi_hat_i (normalize = true, mean-pressure frame).
Eigen::VectorXd downscale(const BasisSet& bases, const Eigen::VectorXd& u,
                          const Eigen::VectorXd& measures, int node_count,
                          bool normalize = true);

struct ErrorBreakdown {
  double total_pct = 0.0;
  double matrix_pct = 0.0;
  double fracture_pct = 0.0;
};

/// Relative percent errors in the discrete l2 norm over continuum DOFs,
/// with matrix-only and fracture-only breakdowns.
ErrorBreakdown error_report(const Eigen::VectorXd& u_t, const Eigen::VectorXd& ubar,
                            const ContinuumIndex& continua);

/// Residual of the Galerkin identity A_G ubar = Psi^T g in the raw integral
/// frame; vanishes (to solver tolerance) for whole-domain regions with the
/// natural boundary condition kept.
double galerkin_residual(const BasisSet& bases, const SparseMat& a_f,
                         const Eigen::VectorXd& ubar_integral,
                         const Eigen::VectorXd& g_load,
                         const Eigen::VectorXd& measures);

/// Same residual recovered from the normalized transmissibility and rhs,
/// using A_G(i,j) = T_hat(i,j) / (m_i m_j) and (Psi^T g)_i = ghat_i / m_i.
double galerkin_residual_normalized(const Eigen::MatrixXd& t_hat,
                                    const Eigen::VectorXd& measures,
                                    const Eigen::VectorXd& ubar_integral,
                                    const Eigen::VectorXd& ghat);

}  // namespace nlmc
