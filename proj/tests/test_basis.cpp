#include <doctest.h>

#include <cmath>

#include <Eigen/Dense>

#include "nlmc/basis.hpp"
#include "nlmc/scene.hpp"
#include "test_support.hpp"

using namespace nlmc;

namespace {

struct ToyProblem {
  Scene scene;
  CoarseGrid coarse;
  ContinuumIndex continua;
  ConstraintMatrix constraints;

  static ToyProblem make() {
    ToyProblem t{build_scene(nlmc_test::toy_config()), {}, {}, {}};
    t.coarse = build_coarse_grid(t.scene.mesh, 4, 4);
    t.continua = enumerate_continua(t.scene.mesh, t.coarse, t.scene.network);
    t.constraints = averaging_matrix(t.scene.mesh, t.coarse, t.continua);
    return t;
  }
};

}  // namespace

TEST_CASE("simplified basis: single-block global problem yields the constant") {
  const FineMesh mesh = build_fine_mesh(8, 8, 2.0, 2.0);
  const SparseMat a = assemble_stiffness(mesh, {}, Eigen::VectorXd::Ones(64));
  const CoarseGrid coarse = build_coarse_grid(mesh, 1, 1);
  const ContinuumIndex idx = enumerate_continua(mesh, coarse, {});
  const ConstraintMatrix c = averaging_matrix(mesh, coarse, idx);
  const auto bases =
      build_simplified_basis(mesh, coarse, idx, a, c, 0, Oversampling::global());
  REQUIRE(bases.size() == 1);
  // Unit integral over a 2x2 domain: psi = 1/|D| = 0.25 everywhere.
  for (int k = 0; k < bases[0].values.size(); ++k)
    CHECK(bases[0].values[k] == doctest::Approx(0.25).epsilon(1e-9));
  CHECK(bases[0].energy <= 1e-12);
}

TEST_CASE("simplified basis: Kronecker constraint pattern over the region") {
  const auto t = ToyProblem::make();
  for (int block : {0, t.coarse.block_id(1, 1), t.coarse.block_id(2, 1)}) {
    const auto bases =
        build_simplified_basis(t.scene.mesh, t.coarse, t.continua,
                               t.scene.stiffness, t.constraints, block,
                               Oversampling::layers(2));
    REQUIRE(static_cast<int>(bases.size()) == t.continua.block_size[block]);
    for (const auto& b : bases) {
      CHECK(b.constraint_residual <= 1e-9);
      // The scattered basis integrates to the Kronecker pattern against
      // every continuum in the domain (outside the region the basis is zero).
      const Eigen::VectorXd full =
          average_fine(b.scatter(t.scene.mesh.node_count()), t.constraints);
      for (int i = 0; i < t.continua.count(); ++i)
        CHECK(std::abs(full[i] - (i == b.continuum ? 1.0 : 0.0)) <= 1e-9);
    }
  }
}

TEST_CASE("simplified basis: energy minimality under constraint-zero perturbations") {
  const auto t = ToyProblem::make();
  const int block = t.coarse.block_id(1, 1);
  const auto bases = build_simplified_basis(t.scene.mesh, t.coarse, t.continua,
                                            t.scene.stiffness, t.constraints,
                                            block, Oversampling::layers(1));
  // Dense kernel of the constraint rows on the basis support. Rows of
  // blocks outside the region touch no free node, so using all rows is
  // equivalent to the region restriction.
  const auto& b0 = bases[0];
  std::vector<int> local(t.scene.mesh.node_count(), -1);
  for (size_t k = 0; k < b0.nodes.size(); ++k)
    local[b0.nodes[k]] = static_cast<int>(k);
  Eigen::MatrixXd cr = Eigen::MatrixXd::Zero(t.continua.count(), b0.nodes.size());
  for (int r = 0; r < t.constraints.rows.outerSize(); ++r)
    for (RowSparseMat::InnerIterator it(t.constraints.rows, r); it; ++it)
      if (local[it.col()] >= 0) cr(r, local[it.col()]) = it.value();
  Eigen::FullPivLU<Eigen::MatrixXd> lu(cr);
  const Eigen::MatrixXd kernel = lu.kernel();

  Eigen::MatrixXd a_r(b0.nodes.size(), b0.nodes.size());
  for (size_t i = 0; i < b0.nodes.size(); ++i)
    for (size_t j = 0; j < b0.nodes.size(); ++j)
      a_r(i, j) = t.scene.stiffness.coeff(b0.nodes[i], b0.nodes[j]);

  for (const auto& b : bases) {
    const double e0 = b.values.dot(a_r * b.values);
    CHECK(e0 == doctest::Approx(b.energy).epsilon(1e-10));
    for (unsigned s = 0; s < 100; ++s) {
      const Eigen::VectorXd coef =
          nlmc_test::random_vector(static_cast<int>(kernel.cols()), 7000 + s);
      const Eigen::VectorXd v = kernel * coef;
      const Eigen::VectorXd p = b.values + v;
      CHECK(p.dot(a_r * p) >= e0 * (1.0 - 1e-10));
    }
  }
}

TEST_CASE("simplified basis: vanishes on the artificial region boundary") {
  const auto t = ToyProblem::make();
  const int block = t.coarse.block_id(2, 2);
  const auto bases = build_simplified_basis(t.scene.mesh, t.coarse, t.continua,
                                            t.scene.stiffness, t.constraints,
                                            block, Oversampling::layers(1));
  const auto region =
      oversample(t.scene.mesh, t.coarse, block, Oversampling::layers(1));
  for (const auto& b : bases) {
    const Eigen::VectorXd full = b.scatter(t.scene.mesh.node_count());
    for (int node : region.artificial_boundary_nodes(t.scene.mesh))
      CHECK(full[node] == 0.0);
    // And outside the region closure everything is zero.
    for (int n = 0; n < t.scene.mesh.node_count(); ++n) {
      const int ix = t.scene.mesh.node_ix(n), iy = t.scene.mesh.node_iy(n);
      if (ix < region.ix0 || ix > region.ix1 || iy < region.iy0 || iy > region.iy1)
        CHECK(full[n] == 0.0);
    }
  }
}

TEST_CASE("simplified basis: energy is nonincreasing in the region size") {
  const auto t = ToyProblem::make();
  for (int block : {t.coarse.block_id(1, 1), t.coarse.block_id(2, 1)}) {
    std::vector<double> energies;
    for (int l : {1, 2, 3})
      energies.push_back(
          build_simplified_basis(t.scene.mesh, t.coarse, t.continua,
                                 t.scene.stiffness, t.constraints, block,
                                 Oversampling::layers(l))[0]
              .energy);
    energies.push_back(build_simplified_basis(t.scene.mesh, t.coarse, t.continua,
                                              t.scene.stiffness, t.constraints,
                                              block, Oversampling::global())[0]
                           .energy);
    for (size_t k = 1; k < energies.size(); ++k)
      CHECK(energies[k] <= energies[k - 1] * (1.0 + 1e-9) + 1e-15);
  }
}

TEST_CASE("simplified basis: large layer count equals the global construction") {
  const auto t = ToyProblem::make();
  const int block = t.coarse.block_id(1, 2);
  const auto wide = build_simplified_basis(t.scene.mesh, t.coarse, t.continua,
                                           t.scene.stiffness, t.constraints,
                                           block, Oversampling::layers(4));
  const auto global = build_simplified_basis(t.scene.mesh, t.coarse, t.continua,
                                             t.scene.stiffness, t.constraints,
                                             block, Oversampling::global());
  REQUIRE(wide.size() == global.size());
  for (size_t m = 0; m < wide.size(); ++m) {
    REQUIRE(wide[m].nodes == global[m].nodes);
    CHECK((wide[m].values - global[m].values).lpNorm<Eigen::Infinity>() <= 1e-9);
  }
}

TEST_CASE("simplified basis: stationarity against constraint-free test fields") {
  const auto t = ToyProblem::make();
  const int block = t.coarse.block_id(1, 1);
  const auto bases = build_simplified_basis(t.scene.mesh, t.coarse, t.continua,
                                            t.scene.stiffness, t.constraints,
                                            block, Oversampling::layers(2));
  const auto& b0 = bases[0];
  std::vector<int> local(t.scene.mesh.node_count(), -1);
  for (size_t k = 0; k < b0.nodes.size(); ++k)
    local[b0.nodes[k]] = static_cast<int>(k);
  Eigen::MatrixXd cr = Eigen::MatrixXd::Zero(t.continua.count(), b0.nodes.size());
  for (int r = 0; r < t.constraints.rows.outerSize(); ++r)
    for (RowSparseMat::InnerIterator it(t.constraints.rows, r); it; ++it)
      if (local[it.col()] >= 0) cr(r, local[it.col()]) = it.value();
  Eigen::FullPivLU<Eigen::MatrixXd> lu(cr);
  const Eigen::MatrixXd kernel = lu.kernel();

  for (const auto& b : bases) {
    const Eigen::VectorXd psi = b.scatter(t.scene.mesh.node_count());
    const double pa = std::sqrt(psi.dot(t.scene.stiffness * psi));
    for (unsigned s = 0; s < 20; ++s) {
      Eigen::VectorXd w = Eigen::VectorXd::Zero(t.scene.mesh.node_count());
      const Eigen::VectorXd coef =
          nlmc_test::random_vector(static_cast<int>(kernel.cols()), 9000 + s);
      const Eigen::VectorXd wk = kernel * coef;
      for (size_t k = 0; k < b0.nodes.size(); ++k) w[b0.nodes[k]] = wk[k];
      const double wa = std::sqrt(w.dot(t.scene.stiffness * w));
      CHECK(std::abs(psi.dot(t.scene.stiffness * w)) <= 1e-9 * pa * wa);
    }
  }
}

TEST_CASE("simplified basis: interface fracture duplicates are rejected") {
  const FineMesh mesh = build_fine_mesh(40, 40, 1.0, 1.0);
  FractureNetwork net;
  net.fractures.push_back(snap_fracture(mesh, {0.3, 0.5}, {0.45, 0.5}, 1e2));
  const CoarseGrid coarse = build_coarse_grid(mesh, 4, 4);
  const ContinuumIndex idx = enumerate_continua(mesh, coarse, net);
  REQUIRE(idx.duplicate_supports.size() == 1);
  const ConstraintMatrix c = averaging_matrix(mesh, coarse, idx);
  const SparseMat a = assemble_stiffness(mesh, net, Eigen::VectorXd::Ones(1600));
  CHECK_THROWS_WITH_AS(
      build_simplified_basis(mesh, coarse, idx, a, c, coarse.block_id(1, 1),
                             Oversampling::layers(1)),
      doctest::Contains("identical supports"), Error);
}

TEST_CASE("basis set builder matches the per-block operation") {
  const auto t = ToyProblem::make();
  BasisBuildOptions opt;
  opt.threads = 2;
  const BasisSet set =
      build_simplified_basis_set(t.scene.mesh, t.coarse, t.continua,
                                 t.scene.stiffness, t.constraints,
                                 Oversampling::layers(1), opt);
  REQUIRE(set.count() == t.continua.count());
  const int block = t.coarse.block_id(3, 0);
  const auto direct = build_simplified_basis(t.scene.mesh, t.coarse, t.continua,
                                             t.scene.stiffness, t.constraints,
                                             block, Oversampling::layers(1));
  for (const auto& d : direct) {
    const auto& s = set.items[d.continuum];
    REQUIRE(s.nodes == d.nodes);
    CHECK((s.values - d.values).lpNorm<Eigen::Infinity>() <= 1e-12);
  }
}

TEST_CASE("basis decay profile: flat for the single-block constant") {
  const FineMesh mesh = build_fine_mesh(8, 8, 2.0, 2.0);
  const SparseMat a = assemble_stiffness(mesh, {}, Eigen::VectorXd::Ones(64));
  const CoarseGrid coarse = build_coarse_grid(mesh, 1, 1);
  const ContinuumIndex idx = enumerate_continua(mesh, coarse, {});
  const ConstraintMatrix c = averaging_matrix(mesh, coarse, idx);
  const auto bases =
      build_simplified_basis(mesh, coarse, idx, a, c, 0, Oversampling::global());
  const Eigen::VectorXd d = basis_decay_profile(mesh, coarse, bases[0]);
  REQUIRE(d.size() == 1);
  CHECK(d[0] == doctest::Approx(0.25).epsilon(1e-9));
}

TEST_CASE("basis decay profile: decays away from the owning block") {
  const auto t = ToyProblem::make();
  const auto bases = build_simplified_basis(t.scene.mesh, t.coarse, t.continua,
                                            t.scene.stiffness, t.constraints,
                                            t.coarse.block_id(1, 1),
                                            Oversampling::layers(2));
  const Eigen::VectorXd d = basis_decay_profile(t.scene.mesh, t.coarse, bases[0]);
  REQUIRE(d.size() == 3);
  CHECK(d[2] < d[0]);
}

TEST_CASE("auxiliary space: constants, contrast gap, eigenpair residual") {
  const auto t = ToyProblem::make();
  // Block (1,1) contains a piece of the horizontal fracture.
  const int block = t.coarse.block_id(1, 1);
  REQUIRE(t.continua.block_size[block] == 2);
  const Eigen::MatrixXd a_i = assemble_block_aform(
      t.scene.mesh, t.coarse, t.continua, t.scene.kappa_cells, block);
  const Eigen::MatrixXd s_i = assemble_block_sform(
      t.scene.mesh, t.coarse, t.continua, t.scene.kappa_cells, block);
  const AuxiliarySpace aux =
      build_auxiliary_space(t.scene.mesh, t.coarse, block, a_i, s_i, 2);

  CHECK(std::abs(aux.eigenvalues[0]) <= 1e-10 * aux.lambda_max);
  const Eigen::VectorXd phi1 = aux.eigenvectors.col(0);
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(phi1.size());
  CHECK(std::abs(phi1.dot(ones)) / (phi1.norm() * ones.norm()) >=
        doctest::Approx(1.0).epsilon(1e-6));

  // At contrast 1e2 the channel modes sit well below the bulk spectrum:
  // one matrix mode plus one fracture continuum.
  int below = 0;
  for (int k = 0; k < aux.all_eigenvalues.size(); ++k)
    if (aux.all_eigenvalues[k] < 1e-2 * aux.lambda_max) ++below;
  CHECK(below == 2);

  for (int k = 0; k < aux.count(); ++k) {
    const Eigen::VectorXd r = a_i * aux.eigenvectors.col(k) -
                              aux.eigenvalues[k] * (s_i * aux.eigenvectors.col(k));
    CHECK(r.norm() <= 1e-8 * a_i.norm());
  }
  // s-orthonormality.
  const Eigen::MatrixXd gram =
      aux.eigenvectors.transpose() * s_i * aux.eigenvectors;
  CHECK((gram - Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() <= 1e-9);

  CHECK_THROWS_WITH_AS(build_auxiliary_space(t.scene.mesh, t.coarse, block, a_i,
                                             s_i, static_cast<int>(a_i.rows()) + 1),
                       doctest::Contains("exceeds"), Error);
}

TEST_CASE("CEM basis: constraint pattern and single-block recovery") {
  const auto t = ToyProblem::make();
  const auto aux = build_auxiliary_spaces(t.scene.mesh, t.coarse, t.continua,
                                          t.scene.kappa_cells);
  const int block = t.coarse.block_id(1, 1);
  const MultiscaleBasis cem = build_cem_basis(t.scene.mesh, t.coarse,
                                              t.scene.stiffness, aux, block, 0,
                                              Oversampling::layers(2));
  CHECK(cem.constraint_residual <= 1e-9);

  // s_l(psi, phi^{l,k}) = delta_{l block} delta_{k 0} over the region.
  const Eigen::VectorXd full = cem.scatter(t.scene.mesh.node_count());
  const auto region =
      oversample(t.scene.mesh, t.coarse, block, Oversampling::layers(2));
  for (int b : region.blocks)
    for (int k = 0; k < aux[b].count(); ++k) {
      double v = 0.0;
      for (size_t p = 0; p < aux[b].nodes.size(); ++p)
        v += aux[b].s_phi(p, k) * full[aux[b].nodes[p]];
      const double expected = (b == block && k == 0) ? 1.0 : 0.0;
      CHECK(std::abs(v - expected) <= 1e-9);
    }

  // Single homogeneous block with l = 1 recovers the constant mode.
  const FineMesh mesh = build_fine_mesh(8, 8, 2.0, 2.0);
  const SparseMat a = assemble_stiffness(mesh, {}, Eigen::VectorXd::Ones(64));
  const CoarseGrid coarse1 = build_coarse_grid(mesh, 1, 1);
  const ContinuumIndex idx1 = enumerate_continua(mesh, coarse1, {});
  const Eigen::VectorXd kappa1 = Eigen::VectorXd::Ones(64);
  const auto aux1 = build_auxiliary_spaces(mesh, coarse1, idx1, kappa1);
  const MultiscaleBasis cem1 = build_cem_basis(mesh, coarse1, a, aux1, 0, 0,
                                               Oversampling::global());
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(cem1.values.size());
  CHECK(std::abs(cem1.values.dot(ones)) / (cem1.values.norm() * ones.norm()) >=
        doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("CEM basis: decay comparable to the simplified basis on the toy") {
  const auto t = ToyProblem::make();
  const auto aux = build_auxiliary_spaces(t.scene.mesh, t.coarse, t.continua,
                                          t.scene.kappa_cells);
  const int block = t.coarse.block_id(1, 1);
  const MultiscaleBasis cem = build_cem_basis(t.scene.mesh, t.coarse,
                                              t.scene.stiffness, aux, block, 0,
                                              Oversampling::layers(2));
  const Eigen::VectorXd d = basis_decay_profile(t.scene.mesh, t.coarse, cem);
  REQUIRE(d.size() == 3);
  CHECK(d[2] / d[0] <= 0.2);
}

TEST_CASE("compare_basis_modes: correlations between paths") {
  const auto t = ToyProblem::make();
  const auto aux_spaces = build_auxiliary_spaces(t.scene.mesh, t.coarse,
                                                 t.continua, t.scene.kappa_cells);

  // Homogeneous single-block problem: the basis is the constant, which is
  // also the first eigenmode.
  {
    const FineMesh mesh = build_fine_mesh(8, 8, 2.0, 2.0);
    const SparseMat a = assemble_stiffness(mesh, {}, Eigen::VectorXd::Ones(64));
    const CoarseGrid coarse1 = build_coarse_grid(mesh, 1, 1);
    const ContinuumIndex idx1 = enumerate_continua(mesh, coarse1, {});
    const ConstraintMatrix c1 = averaging_matrix(mesh, coarse1, idx1);
    const auto bases1 = build_simplified_basis(mesh, coarse1, idx1, a, c1, 0,
                                               Oversampling::global());
    const auto aux1 = build_auxiliary_spaces(mesh, coarse1, idx1,
                                             Eigen::VectorXd::Ones(64));
    const auto rows1 = compare_basis_modes(mesh, aux1[0], bases1);
    REQUIRE(!rows1.empty());
    CHECK(rows1[0].cosine >= 0.99);
  }

  // Interior homogeneous block of the toy scene: the constant mode is still
  // the best match for the matrix basis.
  const int clean = t.coarse.block_id(0, 3);
  REQUIRE(t.continua.block_size[clean] == 1);
  const auto clean_bases = build_simplified_basis(
      t.scene.mesh, t.coarse, t.continua, t.scene.stiffness, t.constraints, clean,
      Oversampling::layers(2));
  auto rows = compare_basis_modes(t.scene.mesh, aux_spaces[clean], clean_bases);
  REQUIRE(!rows.empty());
  CHECK(rows[0].cosine >= 0.9);

  // Fractured block: the fracture basis correlates best with the
  // fracture-dominant (second) eigenmode.
  const int fractured = t.coarse.block_id(1, 1);
  const auto frac_bases = build_simplified_basis(
      t.scene.mesh, t.coarse, t.continua, t.scene.stiffness, t.constraints,
      fractured, Oversampling::layers(2));
  rows = compare_basis_modes(t.scene.mesh, aux_spaces[fractured], frac_bases);
  double best = -1.0;
  int best_k = -1;
  for (const auto& r : rows)
    if (r.m == 1 && r.cosine > best) {
      best = r.cosine;
      best_k = r.k;
    }
  CHECK(best_k == 1);

  // Self-comparison of an eigenfunction with itself gives correlation 1.
  MultiscaleBasis self;
  self.block = fractured;
  self.m = 0;
  self.nodes = aux_spaces[fractured].nodes;
  self.values = aux_spaces[fractured].eigenvectors.col(1);
  rows = compare_basis_modes(t.scene.mesh, aux_spaces[fractured], {self});
  bool found = false;
  for (const auto& r : rows)
    if (r.k == 1) {
      CHECK(r.cosine == doctest::Approx(1.0).epsilon(1e-12));
      found = true;
    }
  CHECK(found);
}
