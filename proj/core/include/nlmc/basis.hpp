#pragma once

#include <array>
#include <vector>

#include <Eigen/Core>

#include "nlmc/fem.hpp"
#include "nlmc/geometry.hpp"

namespace nlmc {

/// Treatment of the oversampled-region boundary. Artificial (interior)
/// boundaries always get homogeneous Dirichlet conditions; where the region
/// touches the physical boundary the natural Neumann condition can either be
/// kept (default) or replaced by Dirichlet as well.
enum class BoundaryPolicy {
  kPhysicalOnDomainBoundary,
  kDirichletEverywhere,
};

struct BasisBuildOptions {
  BoundaryPolicy policy = BoundaryPolicy::kPhysicalOnDomainBoundary;
  double tol = 1e-9;
  int threads = 0;  // 0 = hardware concurrency
};

/// A constrained energy-minimizing basis function, stored on the free DOFs
/// of its oversampled region and implicitly zero elsewhere.
struct MultiscaleBasis {
  int continuum = -1;  // flat index of the owning coarse DOF
  int block = -1;
  int m = 0;  // continuum id for the simplified path, aux index for CEM
  Oversampling layers;
  std::array<int, 4> rect{};  // region block rectangle bx0,bx1,by0,by1

  std::vector<int> nodes;   // free DOFs, ascending
  Eigen::VectorXd values;   // psi at those nodes
  double energy = 0.0;      // a(psi, psi)
  double constraint_residual = 0.0;  // ||C_region psi - e||_inf

  /// Full-length nodal field with zeros outside the support.
  Eigen::VectorXd scatter(int node_count) const;

  bool rect_overlaps(const MultiscaleBasis& other) const {
    return rect[0] <= other.rect[1] && other.rect[0] <= rect[1] &&
           rect[2] <= other.rect[3] && other.rect[2] <= rect[3];
  }
};

/// Bases for every continuum of one coarse block: the saddle-point problem
/// [A_r C_r^T; C_r 0][psi; mu] = [0; e] over the oversampled region, where
/// C_r stacks the integral constraints of every continuum whose block lies
/// in the region. Returns 1+L_i bases in continuum order.
std::vector<MultiscaleBasis> build_simplified_basis(
    const FineMesh& mesh, const CoarseGrid& coarse, const ContinuumIndex& continua,
    const SparseMat& a_f, const ConstraintMatrix& c, int block, Oversampling layers,
    const BasisBuildOptions& opt = {});

/// All blocks at once; regions with identical rectangles share one
/// factorization and blocks are distributed over worker threads.
struct BasisSet {
  Oversampling layers;
  BoundaryPolicy policy = BoundaryPolicy::kPhysicalOnDomainBoundary;
  std::vector<MultiscaleBasis> items;  // flat continuum order

  int count() const { return static_cast<int>(items.size()); }
};

BasisSet build_simplified_basis_set(const FineMesh& mesh, const CoarseGrid& coarse,
                                    const ContinuumIndex& continua,
                                    const SparseMat& a_f, const ConstraintMatrix& c,
                                    Oversampling layers,
                                    const BasisBuildOptions& opt = {});

/// Per-layer decay profile: d_k = max |psi| over fine nodes of coarse blocks
/// at Chebyshev distance k from the owning block, k = 0..profile length.
Eigen::VectorXd basis_decay_profile(const FineMesh& mesh, const CoarseGrid& coarse,
                                    const MultiscaleBasis& basis);

/// Leading generalized eigenpairs of the block-restricted energy form
/// against the weighted mass s_i(u,v) = int_{K_i} kappa_tilde u v.
struct AuxiliarySpace {
  int block = -1;
  std::vector<int> nodes;        // block node ids, ascending
  Eigen::VectorXd eigenvalues;   // l_i smallest, ascending
  Eigen::MatrixXd eigenvectors;  // nodes x l_i, s-orthonormal
  Eigen::MatrixXd s_phi;         // S_i * eigenvectors (constraint functionals)
  double lambda_max = 0.0;       // largest eigenvalue of the pencil
  Eigen::VectorXd all_eigenvalues;

  int count() const { return static_cast<int>(eigenvalues.size()); }
};

/// Restriction of the global energy form to one block (matrix cells plus
/// clipped fracture segments), on the block's local node set.
Eigen::MatrixXd assemble_block_aform(const FineMesh& mesh, const CoarseGrid& coarse,
                                     const ContinuumIndex& continua,
                                     const Eigen::VectorXd& kappa_cells, int block);

/// Weighted block mass with kappa_tilde = sum_j kappa |grad chi_j|^2, chi_j
/// the bilinear coarse partition of unity, evaluated at cell centers. The
/// fracture part of the permeability contributes line-mass terms weighted by
/// the effective conductivity, so channel modes carry large s-norm and land
/// at the bottom of the spectrum.
Eigen::MatrixXd assemble_block_sform(const FineMesh& mesh, const CoarseGrid& coarse,
                                     const ContinuumIndex& continua,
                                     const Eigen::VectorXd& kappa_cells, int block);

AuxiliarySpace build_auxiliary_space(const FineMesh& mesh, const CoarseGrid& coarse,
                                     int block, const Eigen::MatrixXd& a_i,
                                     const Eigen::MatrixXd& s_i, int l);

/// Default-size auxiliary spaces (l_i = 1 + fracture continua) for every block.
std::vector<AuxiliarySpace> build_auxiliary_spaces(
    const FineMesh& mesh, const CoarseGrid& coarse, const ContinuumIndex& continua,
    const Eigen::VectorXd& kappa_cells, const std::vector<int>* l_override = nullptr);

/// Constraint energy minimizing basis for auxiliary function (block, j):
/// constraints s_l(psi, phi^{l,k}) = delta_{li} delta_{kj} over all auxiliary
/// functions of blocks in the region.
MultiscaleBasis build_cem_basis(const FineMesh& mesh, const CoarseGrid& coarse,
                                const SparseMat& a_f,
                                const std::vector<AuxiliarySpace>& aux, int block,
                                int j, Oversampling layers,
                                const BasisBuildOptions& opt = {});

BasisSet build_cem_basis_set(const FineMesh& mesh, const CoarseGrid& coarse,
                             const SparseMat& a_f,
                             const std::vector<AuxiliarySpace>& aux,
                             Oversampling layers, const BasisBuildOptions& opt = {});

/// Cosine correlations between the simplified bases of a block (restricted
/// to the block) and the block's eigenfunctions.
struct ModeCorrelation {
  int m = 0;       // simplified basis continuum id
  int k = 0;       // eigenfunction index
  double lambda = 0.0;
  double cosine = 0.0;
};

std::vector<ModeCorrelation> compare_basis_modes(
    const FineMesh& mesh, const AuxiliarySpace& aux,
    const std::vector<MultiscaleBasis>& block_bases);

}  // namespace nlmc
