#include "nlmc/basis.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <mutex>
#include <thread>

#include <Eigen/Dense>

#include "nlmc/solver.hpp"

namespace nlmc {

namespace {

struct RegionDofs {
  std::vector<int> nodes;            // free global ids, ascending
  std::vector<int> local_of_global;  // -1 where not free
};

RegionDofs region_free_dofs(const FineMesh& mesh, const OversampleRegion& region,
                            BoundaryPolicy policy) {
  RegionDofs d;
  d.local_of_global.assign(mesh.node_count(), -1);
  d.nodes = region.interior_nodes;
  if (policy == BoundaryPolicy::kPhysicalOnDomainBoundary) {
    for (int id : region.boundary_nodes)
      if (!region.is_artificial_boundary(mesh, id)) d.nodes.push_back(id);
  }
  std::sort(d.nodes.begin(), d.nodes.end());
  for (size_t k = 0; k < d.nodes.size(); ++k)
    d.local_of_global[d.nodes[k]] = static_cast<int>(k);
  return d;
}

SparseMat restrict_operator(const SparseMat& a, const RegionDofs& dofs) {
  std::vector<Eigen::Triplet<double>> trip;
  for (int j : dofs.nodes) {
    const int lj = dofs.local_of_global[j];
    for (SparseMat::InnerIterator it(a, j); it; ++it) {
      const int li = dofs.local_of_global[it.row()];
      if (li >= 0) trip.emplace_back(li, lj, it.value());
    }
  }
  SparseMat out(dofs.nodes.size(), dofs.nodes.size());
  out.setFromTriplets(trip.begin(), trip.end());
  out.makeCompressed();
  return out;
}

/// Continua whose block lies inside the region rectangle, ascending flat order.
std::vector<int> region_constraints(const ContinuumIndex& continua,
                                    const OversampleRegion& region) {
  std::vector<int> rows;
  for (int b : region.blocks)
    for (int m = 0; m < continua.block_size[b]; ++m)
      rows.push_back(continua.flat(b, m));
  std::sort(rows.begin(), rows.end());
  return rows;
}

RowSparseMat restrict_constraints(const ConstraintMatrix& c,
                                  const std::vector<int>& rows,
                                  const RegionDofs& dofs) {
  std::vector<Eigen::Triplet<double>> trip;
  for (size_t r = 0; r < rows.size(); ++r)
    for (RowSparseMat::InnerIterator it(c.rows, rows[r]); it; ++it) {
      const int lj = dofs.local_of_global[it.col()];
      if (lj >= 0) trip.emplace_back(static_cast<int>(r), lj, it.value());
    }
  RowSparseMat out(rows.size(), dofs.nodes.size());
  out.setFromTriplets(trip.begin(), trip.end());
  out.makeCompressed();
  return out;
}

void check_region_duplicates(const ContinuumIndex& continua,
                             const std::vector<int>& rows) {
  if (continua.duplicate_supports.empty()) return;
  for (const auto& [a, b] : continua.duplicate_supports) {
    if (std::binary_search(rows.begin(), rows.end(), a) &&
        std::binary_search(rows.begin(), rows.end(), b)) {
      const auto& ca = continua.items[a];
      const auto& cb = continua.items[b];
      throw Error("build_basis: redundant constraint, continua (block " +
                  std::to_string(ca.block) + ", m " + std::to_string(ca.m) +
                  ") and (block " + std::to_string(cb.block) + ", m " +
                  std::to_string(cb.m) + ") have identical supports");
    }
  }
}

struct RegionContext {
  OversampleRegion region;
  RegionDofs dofs;
  std::vector<int> constraint_rows;  // flat continuum indices
  SparseMat a_r;
  SaddlePointSolver solver;
};

RegionContext make_region_context(const FineMesh& mesh, const CoarseGrid& coarse,
                                  const ContinuumIndex& continua,
                                  const SparseMat& a_f, const ConstraintMatrix& c,
                                  int block, Oversampling layers,
                                  const BasisBuildOptions& opt) {
  OversampleRegion region = oversample(mesh, coarse, block, layers);
  RegionDofs dofs = region_free_dofs(mesh, region, opt.policy);
  std::vector<int> rows = region_constraints(continua, region);
  check_region_duplicates(continua, rows);
  SparseMat a_r = restrict_operator(a_f, dofs);
  RowSparseMat c_r = restrict_constraints(c, rows, dofs);
  const bool spd = !(region.covers_domain(coarse) &&
                     opt.policy == BoundaryPolicy::kPhysicalOnDomainBoundary);
  SaddlePointSolver solver(a_r, std::move(c_r), spd, opt.tol);
  return RegionContext{std::move(region), std::move(dofs), std::move(rows),
                       std::move(a_r), std::move(solver)};
}

MultiscaleBasis basis_from_solution(const RegionContext& ctx,
                                    SaddlePointSolver::Result&& res, int flat,
                                    int block, int m, Oversampling layers) {
  MultiscaleBasis b;
  b.continuum = flat;
  b.block = block;
  b.m = m;
  b.layers = layers;
  b.rect = {ctx.region.bx0, ctx.region.bx1, ctx.region.by0, ctx.region.by1};
  b.nodes = ctx.dofs.nodes;
  b.values = std::move(res.psi);
  b.constraint_residual = res.constraint_residual;
  return b;
}

}  // namespace

Eigen::VectorXd MultiscaleBasis::scatter(int node_count) const {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(node_count);
  for (size_t k = 0; k < nodes.size(); ++k) out[nodes[k]] = values[k];
  return out;
}

std::vector<MultiscaleBasis> build_simplified_basis(
    const FineMesh& mesh, const CoarseGrid& coarse, const ContinuumIndex& continua,
    const SparseMat& a_f, const ConstraintMatrix& c, int block, Oversampling layers,
    const BasisBuildOptions& opt) {
  if (!layers.whole_domain && layers.count < 1)
    throw Error("build_simplified_basis: need at least one oversampling layer");
  RegionContext ctx =
      make_region_context(mesh, coarse, continua, a_f, c, block, layers, opt);

  std::vector<MultiscaleBasis> out;
  for (int m = 0; m < continua.block_size[block]; ++m) {
    const int flat = continua.flat(block, m);
    const auto row = std::find(ctx.constraint_rows.begin(),
                               ctx.constraint_rows.end(), flat);
    auto res = ctx.solver.solve_unit(
        static_cast<int>(row - ctx.constraint_rows.begin()));
    MultiscaleBasis b =
        basis_from_solution(ctx, std::move(res), flat, block, m, layers);
    b.energy = b.values.dot(ctx.a_r * b.values);
    out.push_back(std::move(b));
  }
  return out;
}

BasisSet build_simplified_basis_set(const FineMesh& mesh, const CoarseGrid& coarse,
                                    const ContinuumIndex& continua,
                                    const SparseMat& a_f, const ConstraintMatrix& c,
                                    Oversampling layers,
                                    const BasisBuildOptions& opt) {
  if (!layers.whole_domain && layers.count < 1)
    throw Error("build_simplified_basis_set: need at least one oversampling layer");

  BasisSet set;
  set.layers = layers;
  set.policy = opt.policy;
  set.items.resize(continua.count());

  // Blocks whose regions clip to the same rectangle share one factorization.
  std::map<std::array<int, 4>, std::vector<int>> groups;
  for (int b = 0; b < coarse.block_count(); ++b) {
    OversampleRegion r = oversample(mesh, coarse, b, layers);
    groups[{r.bx0, r.bx1, r.by0, r.by1}].push_back(b);
  }
  std::vector<std::vector<int>> group_blocks;
  for (auto& [rect, blocks] : groups) group_blocks.push_back(blocks);

  std::atomic<size_t> next{0};
  std::atomic<bool> failed{false};
  std::string error_message;
  std::mutex error_mutex;

  auto worker = [&]() {
    for (;;) {
      const size_t g = next.fetch_add(1);
      if (g >= group_blocks.size() || failed.load()) return;
      try {
        const auto& blocks = group_blocks[g];
        RegionContext ctx = make_region_context(mesh, coarse, continua, a_f, c,
                                                blocks.front(), layers, opt);
        for (int block : blocks) {
          for (int m = 0; m < continua.block_size[block]; ++m) {
            const int flat = continua.flat(block, m);
            const auto row = std::find(ctx.constraint_rows.begin(),
                                       ctx.constraint_rows.end(), flat);
            auto res = ctx.solver.solve_unit(
                static_cast<int>(row - ctx.constraint_rows.begin()));
            MultiscaleBasis b =
                basis_from_solution(ctx, std::move(res), flat, block, m, layers);
            b.energy = b.values.dot(ctx.a_r * b.values);
            set.items[flat] = std::move(b);
          }
        }
      } catch (const std::exception& ex) {
        std::scoped_lock lock(error_mutex);
        failed.store(true);
        if (error_message.empty()) error_message = ex.what();
      }
    }
  };

  int n_threads = opt.threads > 0
                      ? opt.threads
                      : static_cast<int>(std::thread::hardware_concurrency());
  n_threads = std::max(1, std::min<int>(n_threads, group_blocks.size()));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failed.load()) throw Error(error_message);
  return set;
}

Eigen::VectorXd basis_decay_profile(const FineMesh& mesh, const CoarseGrid& coarse,
                                    const MultiscaleBasis& basis) {
  const int cbx = coarse.block_bx(basis.block), cby = coarse.block_by(basis.block);
  const int max_dist = std::max({cbx, coarse.nx_blocks - 1 - cbx, cby,
                                 coarse.ny_blocks - 1 - cby});
  const int len = basis.layers.whole_domain
                      ? max_dist
                      : std::min(basis.layers.count, max_dist);
  Eigen::VectorXd d = Eigen::VectorXd::Zero(len + 1);

  auto axis_distance = [](int i, int cells, int blocks, int center) {
    // Chebyshev distance contribution of one axis; interface nodes take the
    // nearer block.
    const int hi = std::min(i / cells, blocks - 1);
    int best = std::abs(hi - center);
    if (i % cells == 0 && hi > 0) best = std::min(best, std::abs(hi - 1 - center));
    return best;
  };
  for (size_t k = 0; k < basis.nodes.size(); ++k) {
    const int id = basis.nodes[k];
    const int dx =
        axis_distance(mesh.node_ix(id), coarse.cells_x, coarse.nx_blocks, cbx);
    const int dy =
        axis_distance(mesh.node_iy(id), coarse.cells_y, coarse.ny_blocks, cby);
    const int dist = std::max(dx, dy);
    if (dist <= len) d[dist] = std::max(d[dist], std::abs(basis.values[k]));
  }
  return d;
}

Eigen::MatrixXd assemble_block_aform(const FineMesh& mesh, const CoarseGrid& coarse,
                                     const ContinuumIndex& continua,
                                     const Eigen::VectorXd& kappa_cells, int block) {
  const auto nodes = coarse.block_nodes(mesh, block);
  std::vector<int> local(mesh.node_count(), -1);
  for (size_t k = 0; k < nodes.size(); ++k) local[nodes[k]] = static_cast<int>(k);

  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(nodes.size(), nodes.size());
  auto add_pair = [&](int ga, int gb, double w) {
    const int la = local[ga], lb = local[gb];
    a(la, la) += w;
    a(lb, lb) += w;
    a(la, lb) -= w;
    a(lb, la) -= w;
  };
  for (int cell : coarse.block_cells(mesh, block)) {
    const double w = kappa_cells[cell] / 6.0;
    const auto n = mesh.cell_nodes(mesh.cell_cx(cell), mesh.cell_cy(cell));
    add_pair(n[0], n[1], w);
    add_pair(n[1], n[2], w);
    add_pair(n[2], n[3], w);
    add_pair(n[3], n[0], w);
    add_pair(n[0], n[2], 2.0 * w);
    add_pair(n[1], n[3], 2.0 * w);
  }
  // Fracture continua of this block carry the clipped fracture segments.
  for (int m = 1; m < continua.block_size[block]; ++m) {
    const auto& cont = continua.items[continua.flat(block, m)];
    for (size_t e = 0; e < cont.edges.size(); ++e)
      add_pair(cont.edges[e].first, cont.edges[e].second, cont.edge_weights[e]);
  }
  return a;
}

Eigen::MatrixXd assemble_block_sform(const FineMesh& mesh, const CoarseGrid& coarse,
                                     const ContinuumIndex& continua,
                                     const Eigen::VectorXd& kappa_cells, int block) {
  const auto nodes = coarse.block_nodes(mesh, block);
  std::vector<int> local(mesh.node_count(), -1);
  for (size_t k = 0; k < nodes.size(); ++k) local[nodes[k]] = static_cast<int>(k);

  const int bx = coarse.block_bx(block), by = coarse.block_by(block);
  // sum_j |grad chi_j|^2 of the bilinear coarse partition of unity at a
  // point with block-local coordinates (xi, eta).
  auto pu = [&](double x, double y) {
    const double xi = (x - bx * coarse.hx) / coarse.hx;
    const double eta = (y - by * coarse.hy) / coarse.hy;
    return 2.0 * ((1 - eta) * (1 - eta) + eta * eta) / (coarse.hx * coarse.hx) +
           2.0 * ((1 - xi) * (1 - xi) + xi * xi) / (coarse.hy * coarse.hy);
  };

  const double s36 = mesh.h * mesh.h / 36.0;
  const double me[4][4] = {{4, 2, 1, 2}, {2, 4, 2, 1}, {1, 2, 4, 2}, {2, 1, 2, 4}};
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(nodes.size(), nodes.size());
  for (int cell : coarse.block_cells(mesh, block)) {
    const int cx = mesh.cell_cx(cell), cy = mesh.cell_cy(cell);
    const double kt =
        kappa_cells[cell] * pu((cx + 0.5) * mesh.h, (cy + 0.5) * mesh.h);
    const auto n = mesh.cell_nodes(cx, cy);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) s(local[n[i]], local[n[j]]) += kt * s36 * me[i][j];
  }
  // Fracture part of kappa_tilde: effective conductivity times the partition
  // weight along the line, as a consistent 1D mass on each clipped segment.
  for (int m = 1; m < continua.block_size[block]; ++m) {
    const auto& cont = continua.items[continua.flat(block, m)];
    for (size_t e = 0; e < cont.edges.size(); ++e) {
      const int a = cont.edges[e].first, b = cont.edges[e].second;
      const double len = cont.edge_lengths[e];
      const double cf = cont.edge_weights[e] * len;  // conductivity
      const auto pa = mesh.node_xy(a), pb = mesh.node_xy(b);
      const double w =
          cf * pu(0.5 * (pa.x() + pb.x()), 0.5 * (pa.y() + pb.y())) * len / 6.0;
      s(local[a], local[a]) += 2.0 * w;
      s(local[b], local[b]) += 2.0 * w;
      s(local[a], local[b]) += w;
      s(local[b], local[a]) += w;
    }
  }
  return s;
}

AuxiliarySpace build_auxiliary_space(const FineMesh& mesh, const CoarseGrid& coarse,
                                     int block, const Eigen::MatrixXd& a_i,
                                     const Eigen::MatrixXd& s_i, int l) {
  if (l < 1) throw Error("build_auxiliary_space: need l >= 1");
  if (l > a_i.rows())
    throw Error("build_auxiliary_space: l = " + std::to_string(l) +
                " exceeds the local dimension " + std::to_string(a_i.rows()));
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> eig(a_i, s_i);
  if (eig.info() != Eigen::Success)
    throw Error("build_auxiliary_space: eigensolver failed on block " +
                std::to_string(block));
  AuxiliarySpace aux;
  aux.block = block;
  aux.nodes = coarse.block_nodes(mesh, block);
  aux.all_eigenvalues = eig.eigenvalues();
  aux.eigenvalues = eig.eigenvalues().head(l);
  aux.eigenvectors = eig.eigenvectors().leftCols(l);
  aux.s_phi = s_i * aux.eigenvectors;
  aux.lambda_max = eig.eigenvalues()[eig.eigenvalues().size() - 1];
  return aux;
}

std::vector<AuxiliarySpace> build_auxiliary_spaces(
    const FineMesh& mesh, const CoarseGrid& coarse, const ContinuumIndex& continua,
    const Eigen::VectorXd& kappa_cells, const std::vector<int>* l_override) {
  std::vector<AuxiliarySpace> out;
  out.reserve(coarse.block_count());
  for (int b = 0; b < coarse.block_count(); ++b) {
    const int l = l_override ? (*l_override)[b] : continua.block_size[b];
    out.push_back(build_auxiliary_space(
        mesh, coarse, b, assemble_block_aform(mesh, coarse, continua, kappa_cells, b),
        assemble_block_sform(mesh, coarse, continua, kappa_cells, b), l));
  }
  return out;
}

namespace {

struct CemConstraintLayout {
  std::vector<int> first;  // first row of block b's auxiliary functions
  int total = 0;
};

CemConstraintLayout cem_layout(const std::vector<AuxiliarySpace>& aux) {
  CemConstraintLayout lay;
  lay.first.resize(aux.size());
  for (size_t b = 0; b < aux.size(); ++b) {
    lay.first[b] = lay.total;
    lay.total += aux[b].count();
  }
  return lay;
}

RowSparseMat cem_constraints(const std::vector<AuxiliarySpace>& aux,
                             const OversampleRegion& region, const RegionDofs& dofs,
                             std::vector<std::pair<int, int>>* row_ids) {
  std::vector<Eigen::Triplet<double>> trip;
  int row = 0;
  for (int b : region.blocks)
    for (int k = 0; k < aux[b].count(); ++k) {
      for (size_t p = 0; p < aux[b].nodes.size(); ++p) {
        const int lj = dofs.local_of_global[aux[b].nodes[p]];
        if (lj >= 0) trip.emplace_back(row, lj, aux[b].s_phi(p, k));
      }
      if (row_ids) row_ids->emplace_back(b, k);
      ++row;
    }
  RowSparseMat out(row, dofs.nodes.size());
  out.setFromTriplets(trip.begin(), trip.end());
  out.makeCompressed();
  return out;
}

}  // namespace

MultiscaleBasis build_cem_basis(const FineMesh& mesh, const CoarseGrid& coarse,
                                const SparseMat& a_f,
                                const std::vector<AuxiliarySpace>& aux, int block,
                                int j, Oversampling layers,
                                const BasisBuildOptions& opt) {
  if (j < 0 || j >= aux[block].count())
    throw Error("build_cem_basis: auxiliary index out of range");
  OversampleRegion region = oversample(mesh, coarse, block, layers);
  RegionDofs dofs = region_free_dofs(mesh, region, opt.policy);
  std::vector<std::pair<int, int>> row_ids;
  RowSparseMat c_r = cem_constraints(aux, region, dofs, &row_ids);
  SparseMat a_r = restrict_operator(a_f, dofs);
  const bool spd = !(region.covers_domain(coarse) &&
                     opt.policy == BoundaryPolicy::kPhysicalOnDomainBoundary);
  SaddlePointSolver solver(a_r, std::move(c_r), spd, opt.tol);

  int unit_row = -1;
  for (size_t r = 0; r < row_ids.size(); ++r)
    if (row_ids[r] == std::make_pair(block, j)) unit_row = static_cast<int>(r);
  auto res = solver.solve_unit(unit_row);

  MultiscaleBasis b;
  b.continuum = cem_layout(aux).first[block] + j;
  b.block = block;
  b.m = j;
  b.layers = layers;
  b.rect = {region.bx0, region.bx1, region.by0, region.by1};
  b.nodes = dofs.nodes;
  b.values = std::move(res.psi);
  b.constraint_residual = res.constraint_residual;
  b.energy = b.values.dot(a_r * b.values);
  return b;
}

BasisSet build_cem_basis_set(const FineMesh& mesh, const CoarseGrid& coarse,
                             const SparseMat& a_f,
                             const std::vector<AuxiliarySpace>& aux,
                             Oversampling layers, const BasisBuildOptions& opt) {
  const CemConstraintLayout lay = cem_layout(aux);
  BasisSet set;
  set.layers = layers;
  set.policy = opt.policy;
  set.items.resize(lay.total);

  std::map<std::array<int, 4>, std::vector<int>> groups;
  for (int b = 0; b < coarse.block_count(); ++b) {
    OversampleRegion r = oversample(mesh, coarse, b, layers);
    groups[{r.bx0, r.bx1, r.by0, r.by1}].push_back(b);
  }
  std::vector<std::vector<int>> group_blocks;
  for (auto& [rect, blocks] : groups) group_blocks.push_back(blocks);

  std::atomic<size_t> next{0};
  std::atomic<bool> failed{false};
  std::string error_message;
  std::mutex error_mutex;

  auto worker = [&]() {
    for (;;) {
      const size_t g = next.fetch_add(1);
      if (g >= group_blocks.size() || failed.load()) return;
      try {
        const auto& blocks = group_blocks[g];
        OversampleRegion region =
            oversample(mesh, coarse, blocks.front(), layers);
        RegionDofs dofs = region_free_dofs(mesh, region, opt.policy);
        std::vector<std::pair<int, int>> row_ids;
        RowSparseMat c_r = cem_constraints(aux, region, dofs, &row_ids);
        SparseMat a_r = restrict_operator(a_f, dofs);
        const bool spd =
            !(region.covers_domain(coarse) &&
              opt.policy == BoundaryPolicy::kPhysicalOnDomainBoundary);
        SaddlePointSolver solver(a_r, std::move(c_r), spd, opt.tol);
        for (int block : blocks)
          for (int j = 0; j < aux[block].count(); ++j) {
            int unit_row = -1;
            for (size_t r = 0; r < row_ids.size(); ++r)
              if (row_ids[r] == std::make_pair(block, j))
                unit_row = static_cast<int>(r);
            auto res = solver.solve_unit(unit_row);
            MultiscaleBasis b;
            b.continuum = lay.first[block] + j;
            b.block = block;
            b.m = j;
            b.layers = layers;
            b.rect = {region.bx0, region.bx1, region.by0, region.by1};
            b.nodes = dofs.nodes;
            b.values = std::move(res.psi);
            b.constraint_residual = res.constraint_residual;
            b.energy = b.values.dot(a_r * b.values);
            set.items[b.continuum] = std::move(b);
          }
      } catch (const std::exception& ex) {
        std::scoped_lock lock(error_mutex);
        failed.store(true);
        if (error_message.empty()) error_message = ex.what();
      }
    }
  };

  int n_threads = opt.threads > 0
                      ? opt.threads
                      : static_cast<int>(std::thread::hardware_concurrency());
  n_threads = std::max(1, std::min<int>(n_threads, group_blocks.size()));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failed.load()) throw Error(error_message);
  return set;
}

std::vector<ModeCorrelation> compare_basis_modes(
    const FineMesh& mesh, const AuxiliarySpace& aux,
    const std::vector<MultiscaleBasis>& block_bases) {
  std::vector<int> local(mesh.node_count(), -1);
  for (size_t k = 0; k < aux.nodes.size(); ++k)
    local[aux.nodes[k]] = static_cast<int>(k);

  std::vector<ModeCorrelation> out;
  for (const auto& basis : block_bases) {
    Eigen::VectorXd restricted = Eigen::VectorXd::Zero(aux.nodes.size());
    for (size_t k = 0; k < basis.nodes.size(); ++k) {
      const int l = local[basis.nodes[k]];
      if (l >= 0) restricted[l] = basis.values[k];
    }
    const double rnorm = restricted.norm();
    for (int k = 0; k < aux.count(); ++k) {
      const Eigen::VectorXd phi = aux.eigenvectors.col(k);
      ModeCorrelation mc;
      mc.m = basis.m;
      mc.k = k;
      mc.lambda = aux.eigenvalues[k];
      mc.cosine = rnorm > 0.0 && phi.norm() > 0.0
                      ? std::abs(restricted.dot(phi)) / (rnorm * phi.norm())
                      : 0.0;
      out.push_back(mc);
    }
  }
  return out;
}

}  // namespace nlmc
