#include <doctest.h>

#include <cmath>

#include <Eigen/Dense>

#include "nlmc/fem.hpp"
#include "nlmc/scene.hpp"
#include "test_support.hpp"

using namespace nlmc;

namespace {

Eigen::VectorXd ones_kappa(const FineMesh& mesh) {
  return Eigen::VectorXd::Ones(mesh.cell_count());
}

}  // namespace

TEST_CASE("stiffness: constants in the null space") {
  const FineMesh mesh = build_fine_mesh(2, 2, 1.0, 1.0);
  const SparseMat a = assemble_stiffness(mesh, {}, ones_kappa(mesh));
  const Eigen::VectorXd r = a * Eigen::VectorXd::Ones(a.rows());
  CHECK(r.lpNorm<Eigen::Infinity>() <= 1e-13 * nlmc_test::max_abs(a));
  CHECK(is_symmetric(a, 1e-14));
}

TEST_CASE("stiffness: fracture two-point stencil") {
  const FineMesh mesh = build_fine_mesh(10, 10, 1.0, 1.0);
  FractureNetwork net;
  net.fractures.push_back(snap_fracture(mesh, {0.2, 0.3}, {0.3, 0.3}, 1e2));
  const SparseMat plain = assemble_stiffness(mesh, {}, ones_kappa(mesh));
  const SparseMat with = assemble_stiffness(mesh, net, ones_kappa(mesh));
  const int a = mesh.node_id(2, 3), b = mesh.node_id(3, 3);
  CHECK(with.coeff(a, b) - plain.coeff(a, b) ==
        doctest::Approx(-1e2 / 0.1).epsilon(1e-12));
  CHECK(with.coeff(a, a) - plain.coeff(a, a) ==
        doctest::Approx(+1e2 / 0.1).epsilon(1e-12));
}

TEST_CASE("stiffness: nonpositive coefficients rejected") {
  const FineMesh mesh = build_fine_mesh(4, 4, 1.0, 1.0);
  Eigen::VectorXd kappa = ones_kappa(mesh);
  kappa[5] = 0.0;
  CHECK_THROWS_WITH_AS(assemble_stiffness(mesh, {}, kappa),
                       doctest::Contains("cell 5"), Error);
  FractureNetwork net;
  net.fractures.push_back(snap_fracture(mesh, {0.25, 0.5}, {0.75, 0.5}, 1e2));
  net.fractures.back().conductivity = -1.0;
  net.fractures.back().id = 0;
  CHECK_THROWS_WITH_AS(assemble_stiffness(mesh, net, ones_kappa(mesh)),
                       doctest::Contains("fracture 0"), Error);
}

TEST_CASE("stiffness: smallest nonzero eigenvalue matches the dense oracle") {
  const FineMesh mesh = build_fine_mesh(10, 10, 1.0, 1.0);
  const SparseMat a = assemble_stiffness(mesh, {}, ones_kappa(mesh));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig{Eigen::MatrixXd(a)};
  // Frozen from an independent quadrature assembly + dense eigensolve.
  CHECK(eig.eigenvalues()[1] == doctest::Approx(0.0730831075237474).epsilon(1e-10));

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> oracle{
      nlmc_test::dense_stiffness_oracle(mesh, ones_kappa(mesh))};
  CHECK(eig.eigenvalues()[1] ==
        doctest::Approx(oracle.eigenvalues()[1]).epsilon(1e-12));

  // Null space is exactly one-dimensional on a connected mesh.
  Eigen::FullPivLU<Eigen::MatrixXd> lu{Eigen::MatrixXd(a)};
  lu.setThreshold(1e-10);
  CHECK(lu.rank() == a.rows() - 1);
}

TEST_CASE("stiffness: symmetry and positive semidefiniteness properties") {
  const auto cfg = nlmc_test::toy_config();
  const Scene sc = build_scene(cfg);
  CHECK(is_symmetric(sc.stiffness, 1e-14));
  for (unsigned seed = 0; seed < 20; ++seed) {
    const Eigen::VectorXd v =
        nlmc_test::random_vector(sc.mesh.node_count(), 100 + seed);
    const Eigen::VectorXd w =
        nlmc_test::random_vector(sc.mesh.node_count(), 200 + seed);
    const double vav = v.dot(sc.stiffness * v);
    CHECK(vav >= -1e-12 * nlmc_test::max_abs(sc.stiffness) * v.squaredNorm());
    const double vaw = v.dot(sc.stiffness * w);
    const double wav = w.dot(sc.stiffness * v);
    CHECK(std::abs(vaw - wav) <= 1e-12 * std::max(std::abs(vaw), 1.0));
  }
  const Eigen::VectorXd r = sc.stiffness * Eigen::VectorXd::Ones(sc.mesh.node_count());
  CHECK(r.lpNorm<Eigen::Infinity>() <= 1e-13 * nlmc_test::max_abs(sc.stiffness));
}

TEST_CASE("mass: partition of unity and element identity") {
  const FineMesh unit = build_fine_mesh(8, 8, 1.0, 1.0);
  const SparseMat m = assemble_mass(unit);
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(m.rows());
  CHECK(ones.dot(m * ones) == doctest::Approx(1.0).epsilon(1e-13));

  const FineMesh cell = build_fine_mesh(1, 1, 1.0, 1.0);
  const SparseMat mc = assemble_mass(cell);
  const Eigen::VectorXd rows = mc * Eigen::VectorXd::Ones(4);
  for (int i = 0; i < 4; ++i) CHECK(rows[i] == doctest::Approx(0.25).epsilon(1e-14));
}

TEST_CASE("mass: agrees with the quadrature oracle") {
  const FineMesh mesh = build_fine_mesh(20, 20, 1.0, 1.0);
  const SparseMat m = assemble_mass(mesh);
  const Eigen::MatrixXd oracle = nlmc_test::dense_mass_oracle(mesh);
  CHECK((Eigen::MatrixXd(m) - oracle).cwiseAbs().maxCoeff() <=
        1e-14 * oracle.cwiseAbs().maxCoeff());
}

TEST_CASE("averaging matrix: measures, polynomials, random-field oracle") {
  const auto cfg = nlmc_test::toy_config();
  const Scene sc = build_scene(cfg);
  const CoarseGrid coarse = build_coarse_grid(sc.mesh, 4, 4);
  const ContinuumIndex idx = enumerate_continua(sc.mesh, coarse, sc.network);
  const ConstraintMatrix c = averaging_matrix(sc.mesh, coarse, idx);

  // Constant field: block rows give |K_j| = H^2, fracture rows give lengths.
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(sc.mesh.node_count());
  const Eigen::VectorXd meas = average_fine(ones, c);
  for (int i = 0; i < idx.count(); ++i)
    CHECK(meas[i] == doctest::Approx(idx.items[i].measure).epsilon(1e-12));

  // Field x over block [0,H]x[0,H]: integral H^3/2, exact for Q1.
  Eigen::VectorXd xf(sc.mesh.node_count());
  for (int n = 0; n < sc.mesh.node_count(); ++n) xf[n] = sc.mesh.node_xy(n).x();
  const double h3 = coarse.hx * coarse.hx * coarse.hx;
  CHECK(average_fine(xf, c)[idx.flat(0, 0)] ==
        doctest::Approx(h3 / 2.0).epsilon(1e-12));

  // Random field: rows equal a direct per-cell / per-edge quadrature loop.
  const Eigen::VectorXd f = nlmc_test::random_vector(sc.mesh.node_count(), 42);
  const Eigen::VectorXd applied = average_fine(f, c);
  for (const auto& cont : idx.items) {
    double oracle = 0.0;
    if (cont.is_matrix()) {
      for (int cell : coarse.block_cells(sc.mesh, cont.block)) {
        const auto n = sc.mesh.cell_nodes(sc.mesh.cell_cx(cell), sc.mesh.cell_cy(cell));
        oracle += sc.mesh.h * sc.mesh.h / 4.0 * (f[n[0]] + f[n[1]] + f[n[2]] + f[n[3]]);
      }
    } else {
      for (size_t e = 0; e < cont.edges.size(); ++e)
        oracle += 0.5 * cont.edge_lengths[e] *
                  (f[cont.edges[e].first] + f[cont.edges[e].second]);
    }
    CHECK(applied[cont.flat_index] == doctest::Approx(oracle).epsilon(1e-12));
  }
}

TEST_CASE("steady solve: zero source gives zero") {
  const FineMesh mesh = build_fine_mesh(8, 8, 1.0, 1.0);
  const SparseMat a = assemble_stiffness(mesh, {}, ones_kappa(mesh));
  const SparseMat m = assemble_mass(mesh);
  const auto sol = solve_fine_steady(a, Eigen::VectorXd::Zero(a.rows()), m);
  CHECK(sol.u.norm() == 0.0);
}

TEST_CASE("steady solve: incompatible source is rejected") {
  const FineMesh mesh = build_fine_mesh(8, 8, 1.0, 1.0);
  const SparseMat a = assemble_stiffness(mesh, {}, ones_kappa(mesh));
  const SparseMat m = assemble_mass(mesh);
  const Eigen::VectorXd g = m * Eigen::VectorXd::Ones(a.rows());
  CHECK_THROWS_WITH_AS(solve_fine_steady(a, g, m), doctest::Contains("incompatible"),
                       Error);
}

TEST_CASE("steady solve: manufactured Neumann solution converges at rate 2") {
  // u* = cos(pi x) cos(pi y), g = 2 pi^2 u*, zero Neumann on the unit square.
  auto l2_error = [](int n) {
    const FineMesh mesh = build_fine_mesh(n, n, 1.0, 1.0);
    const SparseMat a = assemble_stiffness(mesh, {}, Eigen::VectorXd::Ones(n * n));
    const SparseMat m = assemble_mass(mesh);
    Eigen::VectorXd gs(mesh.node_count()), ustar(mesh.node_count());
    for (int k = 0; k < mesh.node_count(); ++k) {
      const auto p = mesh.node_xy(k);
      ustar[k] = std::cos(M_PI * p.x()) * std::cos(M_PI * p.y());
      gs[k] = 2.0 * M_PI * M_PI * ustar[k];
    }
    const auto sol = solve_fine_steady(a, m * gs, m);
    CHECK(sol.residual <= 1e-10);
    CHECK(std::abs((m * Eigen::VectorXd::Ones(mesh.node_count())).dot(sol.u)) <=
          1e-10 * sol.u.norm());
    const Eigen::VectorXd e = sol.u - ustar;
    return std::sqrt(e.dot(m * e));
  };
  const double e32 = l2_error(32), e64 = l2_error(64);
  const double rate = std::log2(e32 / e64);
  CHECK(rate >= 1.9);
}

TEST_CASE("steady solve: benchmark-style source with fractures is compatible") {
  const auto cfg = nlmc_test::toy_config();
  const Scene sc = build_scene(cfg);
  CHECK(std::abs(sc.source.load.sum()) <= 1e-10 * sc.source.load.lpNorm<1>());
  const auto sol = solve_fine_steady(sc.stiffness, sc.source.load, sc.mass);
  CHECK(sol.residual <= 1e-10);
}

TEST_CASE("steady solve: discrete flux balance over a closed box") {
  const auto cfg = nlmc_test::toy_config();
  const Scene sc = build_scene(cfg);
  const auto sol = solve_fine_steady(sc.stiffness, sc.source.load, sc.mass);
  // Indicator of all nodes inside [0, 0.5] x [0, 1]: the pairing of the
  // residual with the indicator equates boundary flux and enclosed source.
  Eigen::VectorXd ind = Eigen::VectorXd::Zero(sc.mesh.node_count());
  for (int n = 0; n < sc.mesh.node_count(); ++n)
    if (sc.mesh.node_xy(n).x() <= 0.5 + 1e-12) ind[n] = 1.0;
  const double flux = ind.dot(sc.stiffness * sol.u);
  const double enclosed = ind.dot(sc.source.load);
  CHECK(std::abs(flux - enclosed) <= 1e-8 * sc.source.load.lpNorm<1>());
}

TEST_CASE("backward Euler: zero data stays zero, report times validated") {
  const FineMesh mesh = build_fine_mesh(8, 8, 1.0, 1.0);
  const SparseMat a = assemble_stiffness(mesh, {}, ones_kappa(mesh));
  const SparseMat m = assemble_mass(mesh);
  const Eigen::VectorXd z = Eigen::VectorXd::Zero(a.rows());
  const auto states = backward_euler(m, a, z, 0.1, 0.5, {0.1, 0.5}, z);
  REQUIRE(states.size() == 2);
  CHECK(states[0].norm() == 0.0);
  CHECK(states[1].norm() == 0.0);
  CHECK_THROWS_AS(backward_euler(m, a, z, 0.1, 0.5, {0.15}, z), Error);
  CHECK_THROWS_AS(backward_euler(m, a, z, -0.1, 0.5, {0.1}, z), Error);
}
