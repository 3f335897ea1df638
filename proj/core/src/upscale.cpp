#include "nlmc/upscale.hpp"

#include <cmath>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

namespace nlmc {

namespace {

/// Gram matrix psi_i^T Op psi_j over bases with overlapping regions.
Eigen::MatrixXd basis_gram(const BasisSet& bases, const SparseMat& op,
                           const Eigen::VectorXd& measures, bool normalize) {
  const int n = bases.count();
  const int nn = static_cast<int>(op.rows());
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd scratch = Eigen::VectorXd::Zero(nn);
  Eigen::VectorXd y(nn);
  for (int q = 0; q < n; ++q) {
    const auto& bq = bases.items[q];
    for (size_t k = 0; k < bq.nodes.size(); ++k) scratch[bq.nodes[k]] = bq.values[k];
    y = op * scratch;
    for (int p = 0; p <= q; ++p) {
      const auto& bp = bases.items[p];
      if (!bp.rect_overlaps(bq)) continue;
      double v = 0.0;
      for (size_t k = 0; k < bp.nodes.size(); ++k)
        v += bp.values[k] * y[bp.nodes[k]];
      if (normalize) v *= measures[p] * measures[q];
      t(p, q) = v;
      t(q, p) = v;
    }
    for (size_t k = 0; k < bq.nodes.size(); ++k) scratch[bq.nodes[k]] = 0.0;
  }
  return t;
}

}  // namespace

Eigen::MatrixXd assemble_transmissibility(const BasisSet& bases,
                                          const SparseMat& a_f,
                                          const Eigen::VectorXd& measures,
                                          bool normalize) {
  if (bases.count() != measures.size())
    throw Error("assemble_transmissibility: basis/measure count mismatch");
  return basis_gram(bases, a_f, measures, normalize);
}

Eigen::MatrixXd assemble_coarse_mass(const BasisSet& bases, const SparseMat& m_f,
                                     const Eigen::VectorXd& measures,
                                     bool normalize) {
  if (bases.count() != measures.size())
    throw Error("assemble_coarse_mass: basis/measure count mismatch");
  return basis_gram(bases, m_f, measures, normalize);
}

Eigen::MatrixXd finite_volume_correct(const Eigen::MatrixXd& t) {
  const int n = static_cast<int>(t.rows());
  Eigen::MatrixXd a = t;
  for (int i = 0; i < n; ++i) {
    double offdiag = 0.0;
    for (int j = 0; j < n; ++j)
      if (j != i) offdiag += t(i, j);
    a(i, i) = -offdiag;
  }
  return a;
}

Eigen::VectorXd coarse_rhs(const BasisSet& bases, const ContinuumIndex& continua,
                           const ConstraintMatrix& c, const SourceField& source,
                           RhsMode mode, bool normalize) {
  const int n = continua.count();
  Eigen::VectorXd g(n);
  if (mode == RhsMode::kGalerkin) {
    for (int i = 0; i < n; ++i) {
      const auto& b = bases.items[i];
      double v = 0.0;
      for (size_t k = 0; k < b.nodes.size(); ++k)
        v += b.values[k] * source.load[b.nodes[k]];
      g[i] = normalize ? v * continua.items[i].measure : v;
    }
  } else {
    for (int i = 0; i < n; ++i) {
      if (continua.items[i].is_matrix())
        g[i] = c.rows.row(i).dot(source.nodal);
      else
        g[i] = 0.0;
    }
  }
  return g;
}

Eigen::VectorXd gauge_weights(const ContinuumIndex& continua) {
  Eigen::VectorXd w = Eigen::VectorXd::Zero(continua.count());
  for (const auto& item : continua.items)
    if (item.is_matrix()) w[item.flat_index] = item.measure;
  return w;
}

CoarseSolution solve_upscaled_steady(const Eigen::MatrixXd& a_t,
                                     const Eigen::VectorXd& g,
                                     const Eigen::VectorXd& gauge, double tol) {
  const int n = static_cast<int>(a_t.rows());
  if (g.size() != n || gauge.size() != n)
    throw Error("solve_upscaled_steady: dimension mismatch");

  CoarseSolution out;
  const double g1 = g.lpNorm<1>();
  out.imbalance = g1 > 0.0 ? std::abs(g.sum()) / g1 : 0.0;
  if (g1 == 0.0) {
    out.u = Eigen::VectorXd::Zero(n);
    return out;
  }

  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(n + 1, n + 1);
  k.topLeftCorner(n, n) = a_t;
  k.topRightCorner(n, 1) = gauge;
  k.bottomLeftCorner(1, n) = gauge.transpose();
  Eigen::VectorXd rhs(n + 1);
  rhs.head(n) = g;
  rhs[n] = 0.0;
  const Eigen::VectorXd sol = Eigen::PartialPivLU<Eigen::MatrixXd>(k).solve(rhs);
  out.u = sol.head(n);
  out.multiplier = sol[n];
  out.residual = (a_t * out.u + out.multiplier * gauge - g).norm() / g.norm();
  if (out.residual > tol)
    throw Error("solve_upscaled_steady: residual " + std::to_string(out.residual) +
                " exceeds tolerance");
  return out;
}

std::vector<Eigen::VectorXd> solve_transient(const Eigen::MatrixXd& a_t,
                                             const Eigen::MatrixXd& m_t,
                                             const Eigen::VectorXd& g, double dt,
                                             double t_end,
                                             const std::vector<double>& report_times,
                                             const Eigen::VectorXd& u0) {
  if (dt <= 0.0) throw Error("solve_transient: dt must be positive");
  const int nsteps = static_cast<int>(std::lround(t_end / dt));
  if (std::abs(nsteps * dt - t_end) > 1e-9 * t_end)
    throw Error("solve_transient: t_end must be an integer multiple of dt");
  std::vector<int> report_steps;
  for (double t : report_times) {
    const int s = static_cast<int>(std::lround(t / dt));
    if (std::abs(s * dt - t) > 1e-9 * std::max(t, dt) || s < 0 || s > nsteps)
      throw Error("solve_transient: report time " + std::to_string(t) +
                  " is not a step multiple within [0, t_end]");
    report_steps.push_back(s);
  }

  Eigen::MatrixXd sys = m_t + dt * a_t;
  Eigen::LLT<Eigen::MatrixXd> llt(sys);
  if (llt.info() != Eigen::Success)
    throw Error("solve_transient: system matrix M_T + dt A_T is not SPD");

  std::vector<Eigen::VectorXd> out(report_times.size());
  Eigen::VectorXd u = u0;
  for (size_t r = 0; r < report_steps.size(); ++r)
    if (report_steps[r] == 0) out[r] = u;
  for (int s = 1; s <= nsteps; ++s) {
    u = llt.solve(dt * g + m_t * u);
    for (size_t r = 0; r < report_steps.size(); ++r)
      if (report_steps[r] == s) out[r] = u;
  }
  return out;
}

Eigen::VectorXd downscale(const BasisSet& bases, const Eigen::VectorXd& u,
                          const Eigen::VectorXd& measures, int node_count,
                          bool normalize) {
  if (u.size() != bases.count())
    throw Error("downscale: coefficient count does not match basis count");
  Eigen::VectorXd field = Eigen::VectorXd::Zero(node_count);
  for (int i = 0; i < bases.count(); ++i) {
    const auto& b = bases.items[i];
    const double scale = normalize ? u[i] * measures[i] : u[i];
    for (size_t k = 0; k < b.nodes.size(); ++k)
      field[b.nodes[k]] += scale * b.values[k];
  }
  return field;
}

ErrorBreakdown error_report(const Eigen::VectorXd& u_t, const Eigen::VectorXd& ubar,
                            const ContinuumIndex& continua) {
  if (u_t.size() != ubar.size() || u_t.size() != continua.count())
    throw Error("error_report: dimension mismatch");
  auto part = [&](auto pred) {
    double num = 0.0, den = 0.0;
    for (int i = 0; i < continua.count(); ++i) {
      if (!pred(continua.items[i])) continue;
      num += (u_t[i] - ubar[i]) * (u_t[i] - ubar[i]);
      den += ubar[i] * ubar[i];
    }
    return std::pair<double, double>{num, den};
  };
  const auto [tn, td] = part([](const Continuum&) { return true; });
  if (td == 0.0) throw Error("error_report: reference vector has zero norm");
  ErrorBreakdown e;
  e.total_pct = 100.0 * std::sqrt(tn / td);
  const auto [mn, md] = part([](const Continuum& c) { return c.is_matrix(); });
  e.matrix_pct = md > 0.0 ? 100.0 * std::sqrt(mn / md) : 0.0;
  const auto [fn, fd] = part([](const Continuum& c) { return !c.is_matrix(); });
  e.fracture_pct = fd > 0.0 ? 100.0 * std::sqrt(fn / fd) : 0.0;
  return e;
}

double galerkin_residual(const BasisSet& bases, const SparseMat& a_f,
                         const Eigen::VectorXd& ubar_integral,
                         const Eigen::VectorXd& g_load,
                         const Eigen::VectorXd& measures) {
  Eigen::MatrixXd a_g = basis_gram(bases, a_f, measures, /*normalize=*/false);
  Eigen::VectorXd rhs(bases.count());
  for (int i = 0; i < bases.count(); ++i) {
    const auto& b = bases.items[i];
    double v = 0.0;
    for (size_t k = 0; k < b.nodes.size(); ++k)
      v += b.values[k] * g_load[b.nodes[k]];
    rhs[i] = v;
  }
  const double scale = rhs.norm();
  if (scale == 0.0) return (a_g * ubar_integral).norm();
  return (a_g * ubar_integral - rhs).norm() / scale;
}

double galerkin_residual_normalized(const Eigen::MatrixXd& t_hat,
                                    const Eigen::VectorXd& measures,
                                    const Eigen::VectorXd& ubar_integral,
                                    const Eigen::VectorXd& ghat) {
  const Eigen::VectorXd inv = measures.cwiseInverse();
  const Eigen::MatrixXd a_g =
      inv.asDiagonal() * t_hat * inv.asDiagonal();
  const Eigen::VectorXd rhs = ghat.cwiseProduct(inv);
  const double scale = rhs.norm();
  if (scale == 0.0) return (a_g * ubar_integral).norm();
  return (a_g * ubar_integral - rhs).norm() / scale;
}

}  // namespace nlmc
