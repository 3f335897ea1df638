#include "nlmc/fem.hpp"

#include <cmath>
#include <vector>

#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

namespace nlmc {

bool is_symmetric(const SparseMat& a, double tol) {
  SparseMat d = SparseMat(a.transpose()) - a;
  double amax = 0.0;
  for (int k = 0; k < a.outerSize(); ++k)
    for (SparseMat::InnerIterator it(a, k); it; ++it)
      amax = std::max(amax, std::abs(it.value()));
  double dmax = 0.0;
  for (int k = 0; k < d.outerSize(); ++k)
    for (SparseMat::InnerIterator it(d, k); it; ++it)
      dmax = std::max(dmax, std::abs(it.value()));
  return dmax <= tol * std::max(amax, 1e-300);
}

SparseMat assemble_stiffness(const FineMesh& mesh, const FractureNetwork& network,
                             const Eigen::VectorXd& kappa_cells) {
  if (kappa_cells.size() != mesh.cell_count())
    throw Error("assemble_stiffness: kappa field must have one value per cell");

  // Q1 stiffness of a square cell, written as a graph Laplacian over node
  // pairs so that row sums cancel as tightly as floating point allows:
  // weight kappa/6 on the four sides, 2*kappa/6 on the two diagonals.
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<size_t>(mesh.cell_count()) * 24);
  auto add_pair = [&](int a, int b, double w) {
    trip.emplace_back(a, a, w);
    trip.emplace_back(b, b, w);
    trip.emplace_back(a, b, -w);
    trip.emplace_back(b, a, -w);
  };

  for (int cy = 0; cy < mesh.ny; ++cy)
    for (int cx = 0; cx < mesh.nx; ++cx) {
      const double kappa = kappa_cells[mesh.cell_id(cx, cy)];
      if (!(kappa > 0.0))
        throw Error("assemble_stiffness: nonpositive kappa in cell " +
                    std::to_string(mesh.cell_id(cx, cy)));
      const auto n = mesh.cell_nodes(cx, cy);
      const double w = kappa / 6.0;
      add_pair(n[0], n[1], w);
      add_pair(n[1], n[2], w);
      add_pair(n[2], n[3], w);
      add_pair(n[3], n[0], w);
      add_pair(n[0], n[2], 2.0 * w);
      add_pair(n[1], n[3], 2.0 * w);
    }

  const double diag_len = mesh.h * std::sqrt(2.0);
  for (const auto& f : network.fractures) {
    if (!(f.conductivity > 0.0))
      throw Error("assemble_stiffness: nonpositive conductivity on fracture " +
                  std::to_string(f.id));
    for (size_t k = 0; k + 1 < f.nodes.size(); ++k) {
      const int a = f.nodes[k], b = f.nodes[k + 1];
      const bool diag = mesh.node_ix(a) != mesh.node_ix(b) &&
                        mesh.node_iy(a) != mesh.node_iy(b);
      add_pair(a, b, f.conductivity / (diag ? diag_len : mesh.h));
    }
  }

  SparseMat a(mesh.node_count(), mesh.node_count());
  a.setFromTriplets(trip.begin(), trip.end());
  a.makeCompressed();
  return a;
}

SparseMat assemble_mass(const FineMesh& mesh) {
  // Consistent Q1 element mass: h^2/36 * [4 2 1 2; 2 4 2 1; 1 2 4 2; 2 1 2 4].
  const double s = mesh.h * mesh.h / 36.0;
  const double me[4][4] = {{4 * s, 2 * s, 1 * s, 2 * s},
                           {2 * s, 4 * s, 2 * s, 1 * s},
                           {1 * s, 2 * s, 4 * s, 2 * s},
                           {2 * s, 1 * s, 2 * s, 4 * s}};
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<size_t>(mesh.cell_count()) * 16);
  for (int cy = 0; cy < mesh.ny; ++cy)
    for (int cx = 0; cx < mesh.nx; ++cx) {
      const auto n = mesh.cell_nodes(cx, cy);
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) trip.emplace_back(n[i], n[j], me[i][j]);
    }
  SparseMat m(mesh.node_count(), mesh.node_count());
  m.setFromTriplets(trip.begin(), trip.end());
  m.makeCompressed();
  return m;
}

ConstraintMatrix averaging_matrix(const FineMesh& mesh, const CoarseGrid& coarse,
                                  const ContinuumIndex& continua) {
  std::vector<Eigen::Triplet<double>> trip;
  const double cell_quarter = mesh.h * mesh.h / 4.0;
  for (const auto& c : continua.items) {
    if (c.is_matrix()) {
      // h^2 times the share of the node's four adjacent cells inside the block.
      const auto [ix0, ix1, iy0, iy1] = coarse.block_node_range(c.block);
      for (int iy = iy0; iy <= iy1; ++iy)
        for (int ix = ix0; ix <= ix1; ++ix) {
          const int corner_x = (ix == ix0 || ix == ix1) ? 1 : 2;
          const int corner_y = (iy == iy0 || iy == iy1) ? 1 : 2;
          trip.emplace_back(c.flat_index, mesh.node_id(ix, iy),
                            cell_quarter * corner_x * corner_y);
        }
    } else {
      for (size_t e = 0; e < c.edges.size(); ++e) {
        const double w = 0.5 * c.edge_lengths[e];
        trip.emplace_back(c.flat_index, c.edges[e].first, w);
        trip.emplace_back(c.flat_index, c.edges[e].second, w);
      }
    }
  }
  ConstraintMatrix cm;
  cm.rows.resize(continua.count(), mesh.node_count());
  cm.rows.setFromTriplets(trip.begin(), trip.end());
  cm.rows.makeCompressed();
  cm.measures = continua.measures();
  return cm;
}

Eigen::VectorXd average_fine(const Eigen::VectorXd& u, const ConstraintMatrix& c) {
  if (u.size() != c.rows.cols())
    throw Error("average_fine: field length does not match the constraint matrix");
  return c.rows * u;
}

SteadyFineSolution solve_fine_steady(const SparseMat& a, const Eigen::VectorXd& g,
                                     const SparseMat& mass, double tol) {
  const int n = static_cast<int>(a.rows());
  const double imbalance = std::abs(g.sum());
  const double gscale = g.lpNorm<1>();
  if (gscale > 0.0 && imbalance > 1e-10 * gscale)
    throw Error("solve_fine_steady: incompatible source, |sum g| = " +
                std::to_string(imbalance) + " vs ||g||_1 = " + std::to_string(gscale));

  const Eigen::VectorXd w = mass * Eigen::VectorXd::Ones(n);  // nodal measures

  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(a.nonZeros() + 2 * n);
  for (int k = 0; k < a.outerSize(); ++k)
    for (SparseMat::InnerIterator it(a, k); it; ++it)
      trip.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()),
                        it.value());
  for (int i = 0; i < n; ++i) {
    trip.emplace_back(i, n, w[i]);
    trip.emplace_back(n, i, w[i]);
  }
  SparseMat k(n + 1, n + 1);
  k.setFromTriplets(trip.begin(), trip.end());
  k.makeCompressed();

  Eigen::SparseLU<SparseMat> lu(k);
  if (lu.info() != Eigen::Success)
    throw Error("solve_fine_steady: factorization failed");
  Eigen::VectorXd rhs(n + 1);
  rhs.head(n) = g;
  rhs[n] = 0.0;
  const Eigen::VectorXd sol = lu.solve(rhs);

  SteadyFineSolution out;
  out.u = sol.head(n);
  out.multiplier = sol[n];
  const double gnorm = g.norm();
  out.residual = gnorm > 0.0 ? (a * out.u - g).norm() / gnorm : (a * out.u).norm();
  if (out.residual > tol)
    throw Error("solve_fine_steady: residual " + std::to_string(out.residual) +
                " exceeds tolerance");
  return out;
}

std::vector<Eigen::VectorXd> backward_euler(const SparseMat& mass,
                                            const SparseMat& a,
                                            const Eigen::VectorXd& g, double dt,
                                            double t_end,
                                            const std::vector<double>& report_times,
                                            const Eigen::VectorXd& u0) {
  if (dt <= 0.0) throw Error("backward_euler: dt must be positive");
  const int nsteps = static_cast<int>(std::lround(t_end / dt));
  if (std::abs(nsteps * dt - t_end) > 1e-9 * t_end)
    throw Error("backward_euler: t_end must be an integer multiple of dt");
  std::vector<int> report_steps;
  for (double t : report_times) {
    const int s = static_cast<int>(std::lround(t / dt));
    if (std::abs(s * dt - t) > 1e-9 * std::max(t, dt) || s < 0 || s > nsteps)
      throw Error("backward_euler: report time " + std::to_string(t) +
                  " is not a step multiple within [0, t_end]");
    report_steps.push_back(s);
  }

  SparseMat sys = mass + dt * a;
  Eigen::SimplicialLDLT<SparseMat> ldlt(sys);
  if (ldlt.info() != Eigen::Success)
    throw Error("backward_euler: factorization of M + dt A failed");

  std::vector<Eigen::VectorXd> out(report_times.size());
  Eigen::VectorXd u = u0;
  for (size_t r = 0; r < report_steps.size(); ++r)
    if (report_steps[r] == 0) out[r] = u;
  for (int s = 1; s <= nsteps; ++s) {
    u = ldlt.solve(dt * g + mass * u);
    for (size_t r = 0; r < report_steps.size(); ++r)
      if (report_steps[r] == s) out[r] = u;
  }
  return out;
}

}  // namespace nlmc
