#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "nlmc/basis.hpp"
#include "nlmc/geometry.hpp"

namespace nlmc {

/// Deterministic shortest-exact formatting used by every text export.
std::string format_double(double v);

/// Legacy ASCII VTK structured-points file with one nodal scalar field.
void write_vtk_structured_points(const std::string& path, const FineMesh& mesh,
                                 const Eigen::VectorXd& nodal,
                                 const std::string& name);

/// Coordinate triplets "i j value" of the nonzero entries.
void export_triplets(const std::string& path, const Eigen::MatrixXd& m,
                     double drop_tol = 0.0);

/// Coarse solution keyed by block id, block coordinates and continuum id;
/// reports both mean and integral normalizations.
void export_solution_csv(const std::string& path, const CoarseGrid& coarse,
                         const ContinuumIndex& continua,
                         const Eigen::VectorXd& u_mean,
                         const Eigen::VectorXd& u_integral);

/// Decay profile rows "layer,max_abs".
void export_decay_csv(const std::string& path, const Eigen::VectorXd& profile);

/// Full coupling map of one source block (block_dx, block_dy, continuum,
/// value) plus a one-dimensional slab extraction along the source block's
/// row (block_dx, continuum, value).
void export_transmissibility_map(const std::string& map_path,
                                 const std::string& slab_path,
                                 const Eigen::MatrixXd& t,
                                 const CoarseGrid& coarse,
                                 const ContinuumIndex& continua, int center_block);

void export_mode_correlations(const std::string& path,
                              const std::vector<ModeCorrelation>& rows);

}  // namespace nlmc
