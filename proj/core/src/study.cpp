#include "nlmc/study.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>

#include <Eigen/Dense>

#include "nlmc/io.hpp"

namespace nlmc {

namespace {

namespace fs = std::filesystem;

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("cannot create output directory " + dir + ": " + ec.message());
}

/// Zero-source runs compare zero against zero; report that as zero error
/// instead of tripping the zero-reference guard of error_report.
ErrorBreakdown safe_error(const Eigen::VectorXd& u, const Eigen::VectorXd& ubar,
                          const ContinuumIndex& continua) {
  if (ubar.norm() == 0.0 && u.norm() == 0.0) return {};
  return error_report(u, ubar, continua);
}

}  // namespace

std::string layers_label(Oversampling layers) {
  return layers.whole_domain ? "global" : std::to_string(layers.count);
}

StudyRunner::StudyRunner(const ExperimentConfig& cfg, int threads)
    : scene_(build_scene(cfg)), threads_(threads) {
  for (const auto& spec : cfg.coarse) {
    CoarseContext ctx;
    ctx.grid = build_coarse_grid(scene_.mesh, spec.nx_blocks, spec.ny_blocks);
    ctx.continua = enumerate_continua(scene_.mesh, ctx.grid, scene_.network);
    ctx.constraints = averaging_matrix(scene_.mesh, ctx.grid, ctx.continua);
    ctx.measures = ctx.continua.measures();
    ctx.gauge = gauge_weights(ctx.continua);
    coarse_.push_back(std::move(ctx));
  }
}

const SteadyFineSolution& StudyRunner::fine_solution() {
  if (!fine_) {
    fine_ = std::make_unique<SteadyFineSolution>(solve_fine_steady(
        scene_.stiffness, scene_.source.load, scene_.mass,
        scene_.config.solver_tol));
  }
  return *fine_;
}

const Eigen::VectorXd& StudyRunner::fine_average(int coarse_idx) {
  auto it = fine_avg_.find(coarse_idx);
  if (it == fine_avg_.end()) {
    const auto& u = fine_solution().u;
    it = fine_avg_
             .emplace(coarse_idx, average_fine(u, coarse_[coarse_idx].constraints))
             .first;
  }
  return it->second;
}

const BasisSet& StudyRunner::bases(int coarse_idx, Oversampling layers) {
  const auto key = std::make_pair(coarse_idx, layer_key(layers));
  auto it = basis_cache_.find(key);
  if (it == basis_cache_.end()) {
    BasisBuildOptions opt;
    opt.policy = scene_.config.policy;
    opt.tol = scene_.config.constraint_tol;
    opt.threads = threads_;
    const auto& ctx = coarse_[coarse_idx];
    it = basis_cache_
             .emplace(key, build_simplified_basis_set(
                               scene_.mesh, ctx.grid, ctx.continua,
                               scene_.stiffness, ctx.constraints, layers, opt))
             .first;
  }
  return it->second;
}

const std::vector<AuxiliarySpace>& StudyRunner::auxiliary_spaces(int coarse_idx) {
  auto it = aux_cache_.find(coarse_idx);
  if (it == aux_cache_.end()) {
    const auto& ctx = coarse_[coarse_idx];
    it = aux_cache_
             .emplace(coarse_idx,
                      build_auxiliary_spaces(scene_.mesh, ctx.grid, ctx.continua,
                                             scene_.kappa_cells))
             .first;
  }
  return it->second;
}

const BasisSet& StudyRunner::cem_bases(int coarse_idx, Oversampling layers) {
  const auto key = std::make_pair(coarse_idx, layer_key(layers));
  auto it = cem_cache_.find(key);
  if (it == cem_cache_.end()) {
    BasisBuildOptions opt;
    opt.policy = scene_.config.policy;
    opt.tol = scene_.config.constraint_tol;
    opt.threads = threads_;
    const auto& ctx = coarse_[coarse_idx];
    it = cem_cache_
             .emplace(key, build_cem_basis_set(scene_.mesh, ctx.grid,
                                               scene_.stiffness,
                                               auxiliary_spaces(coarse_idx),
                                               layers, opt))
             .first;
  }
  return it->second;
}

const BasisSet& StudyRunner::active_bases(int coarse_idx, Oversampling layers) {
  return scene_.config.basis == BasisPath::kSpectral
             ? cem_bases(coarse_idx, layers)
             : bases(coarse_idx, layers);
}

const StudyRunner::CoarseOperators& StudyRunner::coarse_operators(
    int coarse_idx, Oversampling layers) {
  const auto key = std::make_pair(coarse_idx, layer_key(layers));
  auto it = op_cache_.find(key);
  if (it == op_cache_.end()) {
    const auto& ctx = coarse_[coarse_idx];
    const BasisSet& set = bases(coarse_idx, layers);
    CoarseOperators ops;
    ops.t_hat = assemble_transmissibility(set, scene_.stiffness, ctx.measures);
    ops.a_t = finite_volume_correct(ops.t_hat);
    ops.ghat = coarse_rhs(set, ctx.continua, ctx.constraints, scene_.source,
                          scene_.config.rhs_mode);
    it = op_cache_.emplace(key, std::move(ops)).first;
  }
  return it->second;
}

RunReport StudyRunner::run_steady(const std::string& out_dir) {
  ensure_dir(out_dir);
  ensure_dir(out_dir + "/fields");
  ensure_dir(out_dir + "/solutions");
  RunReport report;

  auto t0 = std::chrono::steady_clock::now();
  fine_solution();
  report.seconds_fine_solve = seconds_since(t0);

  const bool spectral = scene_.config.basis == BasisPath::kSpectral;

  for (int ci = 0; ci < coarse_count(); ++ci) {
    const auto& ctx = coarse_[ci];
    const Eigen::VectorXd& ubar = fine_average(ci);
    const Eigen::VectorXd ubar_mean = ubar.cwiseQuotient(ctx.measures);

    for (Oversampling layers : scene_.config.oversampling) {
      SteadyRow row;
      row.nx_blocks = ctx.grid.nx_blocks;
      row.ny_blocks = ctx.grid.ny_blocks;
      row.h_coarse = ctx.grid.hx;
      row.layers = layers;

      auto tb = std::chrono::steady_clock::now();
      const BasisSet& set = active_bases(ci, layers);
      row.seconds_basis = seconds_since(tb);
      for (const auto& b : set.items)
        row.max_constraint_residual =
            std::max(row.max_constraint_residual, b.constraint_residual);

      Eigen::VectorXd u_mean;  // mean-pressure coarse solution
      if (!spectral) {
        auto ta = std::chrono::steady_clock::now();
        const CoarseOperators& ops = coarse_operators(ci, layers);
        row.seconds_assembly = seconds_since(ta);

        const double tmax = ops.a_t.cwiseAbs().maxCoeff();
        row.conservation_rowsum_rel =
            tmax > 0 ? (ops.a_t * Eigen::VectorXd::Ones(ops.a_t.cols()))
                               .cwiseAbs()
                               .maxCoeff() /
                           tmax
                     : 0.0;
        row.galerkin_residual =
            galerkin_residual_normalized(ops.t_hat, ctx.measures, ubar, ops.ghat);

        auto ts = std::chrono::steady_clock::now();
        const CoarseSolution sol = solve_upscaled_steady(
            ops.a_t, ops.ghat, ctx.gauge, scene_.config.solver_tol);
        row.seconds_solve = seconds_since(ts);
        u_mean = sol.u;
      } else {
        // Spectral path: Galerkin solve on the CEM coarse space, compared
        // through the continuum averages of the downscaled field.
        auto ta = std::chrono::steady_clock::now();
        Eigen::MatrixXd a_g = assemble_transmissibility(
            set, scene_.stiffness, ctx.measures, /*normalize=*/false);
        Eigen::VectorXd rhs(set.count());
        for (int i = 0; i < set.count(); ++i) {
          const auto& b = set.items[i];
          double v = 0.0;
          for (size_t k = 0; k < b.nodes.size(); ++k)
            v += b.values[k] * scene_.source.load[b.nodes[k]];
          rhs[i] = v;
        }
        row.seconds_assembly = seconds_since(ta);

        auto ts = std::chrono::steady_clock::now();
        Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(a_g);
        Eigen::VectorXd coeff = cod.solve(rhs);
        row.seconds_solve = seconds_since(ts);
        row.galerkin_residual = (a_g * coeff - rhs).norm() / rhs.norm();

        Eigen::VectorXd u_ms = downscale(set, coeff, ctx.measures,
                                         scene_.mesh.node_count(),
                                         /*normalize=*/false);
        Eigen::VectorXd avg = average_fine(u_ms, ctx.constraints)
                                  .cwiseQuotient(ctx.measures);
        // Align the gauge: shift so the represented field integrates to zero
        // over the domain, like the fine reference.
        const double shift = -ctx.gauge.dot(avg) / ctx.gauge.sum();
        u_mean = avg.array() + shift;
      }

      row.err = safe_error(u_mean, ubar_mean, ctx.continua);
      row.err_weighted = safe_error(u_mean.cwiseProduct(ctx.measures), ubar,
                                    ctx.continua);
      report.steady.push_back(row);

      const std::string tag = "H" + std::to_string(ctx.grid.nx_blocks) + "_L" +
                              layers_label(layers);
      export_solution_csv(out_dir + "/solutions/u_T_" + tag + ".csv", ctx.grid,
                          ctx.continua, u_mean, u_mean.cwiseProduct(ctx.measures));
      if (!spectral) {
        Eigen::VectorXd u_ms = downscale(active_bases(ci, layers), u_mean,
                                         ctx.measures, scene_.mesh.node_count());
        write_vtk_structured_points(out_dir + "/fields/u_ms_" + tag + ".vtk",
                                    scene_.mesh, u_ms, "u_ms");
      }
    }
    export_solution_csv(out_dir + "/solutions/u_bar_H" +
                            std::to_string(ctx.grid.nx_blocks) + ".csv",
                        ctx.grid, ctx.continua, ubar_mean, ubar);
  }

  // steady_errors.csv: one row per (H, layers), mean-pressure errors.
  {
    std::ofstream out(out_dir + "/steady_errors.csv");
    out << "H,layers,error_pct,error_matrix_pct,error_fracture_pct\n";
    for (const auto& row : report.steady)
      out << format_double(row.h_coarse) << "," << layers_label(row.layers) << ","
          << format_double(row.err.total_pct) << ","
          << format_double(row.err.matrix_pct) << ","
          << format_double(row.err.fracture_pct) << "\n";
  }
  {
    std::ofstream out(out_dir + "/steady_diagnostics.csv");
    out << "H,layers,error_weighted_pct,galerkin_residual,"
           "max_constraint_residual,conservation_rowsum_rel\n";
    for (const auto& row : report.steady)
      out << format_double(row.h_coarse) << "," << layers_label(row.layers) << ","
          << format_double(row.err_weighted.total_pct) << ","
          << format_double(row.galerkin_residual) << ","
          << format_double(row.max_constraint_residual) << ","
          << format_double(row.conservation_rowsum_rel) << "\n";
  }
  export_fine_fields(out_dir);
  return report;
}

RunReport StudyRunner::run_transient(const std::string& out_dir) {
  if (!scene_.config.transient)
    throw Error("run_transient: the config has no transient section");
  if (scene_.config.basis == BasisPath::kSpectral)
    throw Error("run_transient: transient study supports the simplified basis path");
  ensure_dir(out_dir);
  RunReport report;
  const TransientSpec& ts = *scene_.config.transient;

  for (int ci = 0; ci < coarse_count(); ++ci) {
    const auto& ctx = coarse_[ci];

    auto t0 = std::chrono::steady_clock::now();
    const Eigen::VectorXd u0 = Eigen::VectorXd::Zero(scene_.mesh.node_count());
    const std::vector<Eigen::VectorXd> fine_states =
        backward_euler(scene_.mass, scene_.stiffness, scene_.source.load, ts.dt,
                       ts.t_end, ts.report_times, u0);
    report.seconds_fine_transient += seconds_since(t0);

    std::vector<Eigen::VectorXd> ubar_mean_states;
    for (const auto& u : fine_states)
      ubar_mean_states.push_back(
          average_fine(u, ctx.constraints).cwiseQuotient(ctx.measures));

    for (Oversampling layers : scene_.config.oversampling) {
      const BasisSet& set = bases(ci, layers);
      const CoarseOperators& ops = coarse_operators(ci, layers);
      const Eigen::MatrixXd m_t =
          assemble_coarse_mass(set, scene_.mass, ctx.measures);
      const Eigen::VectorXd uc0 = Eigen::VectorXd::Zero(set.count());
      const std::vector<Eigen::VectorXd> coarse_states = solve_transient(
          ops.a_t, m_t, ops.ghat, ts.dt, ts.t_end, ts.report_times, uc0);

      for (size_t r = 0; r < ts.report_times.size(); ++r) {
        TransientRow row;
        row.nx_blocks = ctx.grid.nx_blocks;
        row.ny_blocks = ctx.grid.ny_blocks;
        row.h_coarse = ctx.grid.hx;
        row.layers = layers;
        row.t = ts.report_times[r];
        row.err = safe_error(coarse_states[r], ubar_mean_states[r], ctx.continua);
        report.transient.push_back(row);
      }
    }
  }

  std::ofstream out(out_dir + "/transient_errors.csv");
  out << "H,layers,t,error_pct,error_matrix_pct,error_fracture_pct\n";
  for (const auto& row : report.transient)
    out << format_double(row.h_coarse) << "," << layers_label(row.layers) << ","
        << format_double(row.t) << "," << format_double(row.err.total_pct) << ","
        << format_double(row.err.matrix_pct) << ","
        << format_double(row.err.fracture_pct) << "\n";
  return report;
}

void StudyRunner::export_fine_fields(const std::string& out_dir) {
  ensure_dir(out_dir + "/fields");
  write_vtk_structured_points(out_dir + "/fields/u_fine.vtk", scene_.mesh,
                              fine_solution().u, "u_fine");
  write_vtk_structured_points(out_dir + "/fields/source.vtk", scene_.mesh,
                              scene_.source.nodal, "source");
}

void StudyRunner::export_basis_fields(const std::string& out_dir,
                                      Oversampling layers, int block) {
  ensure_dir(out_dir + "/basis");
  for (int ci = 0; ci < coarse_count(); ++ci) {
    const auto& ctx = coarse_[ci];
    int b = block;
    if (b < 0)
      b = ctx.grid.block_id(ctx.grid.nx_blocks / 2, ctx.grid.ny_blocks / 2);
    const BasisSet& set = active_bases(ci, layers);
    const std::string tag =
        "H" + std::to_string(ctx.grid.nx_blocks) + "_L" + layers_label(layers);
    for (int m = 0; m < ctx.continua.block_size[b]; ++m) {
      const auto& basis = set.items[ctx.continua.flat(b, m)];
      const std::string stem = out_dir + "/basis/psi_" + tag + "_b" +
                               std::to_string(b) + "_m" + std::to_string(m);
      write_vtk_structured_points(stem + ".vtk", scene_.mesh,
                                  basis.scatter(scene_.mesh.node_count()), "psi");
      export_decay_csv(stem + "_decay.csv",
                       basis_decay_profile(scene_.mesh, ctx.grid, basis));
    }
  }
}

void StudyRunner::export_transmissibility_maps(const std::string& out_dir,
                                               Oversampling layers) {
  ensure_dir(out_dir + "/transmissibility");
  for (int ci = 0; ci < coarse_count(); ++ci) {
    const auto& ctx = coarse_[ci];
    const CoarseOperators& ops = coarse_operators(ci, layers);
    const int center =
        ctx.grid.block_id(ctx.grid.nx_blocks / 2, ctx.grid.ny_blocks / 2);
    const std::string tag =
        "H" + std::to_string(ctx.grid.nx_blocks) + "_L" + layers_label(layers);
    export_transmissibility_map(
        out_dir + "/transmissibility/tmap_" + tag + ".csv",
        out_dir + "/transmissibility/tslab_" + tag + ".csv", ops.t_hat, ctx.grid,
        ctx.continua, center);
    export_triplets(out_dir + "/transmissibility/A_T_" + tag + ".txt", ops.a_t);
  }
}

void StudyRunner::write_timings(const std::string& path, const RunReport& report) {
  std::ofstream out(path);
  out << "{\n  \"fine_solve_seconds\": " << report.seconds_fine_solve << ",\n";
  out << "  \"fine_transient_seconds\": " << report.seconds_fine_transient
      << ",\n  \"steady\": [\n";
  for (size_t i = 0; i < report.steady.size(); ++i) {
    const auto& r = report.steady[i];
    out << "    {\"H_blocks\": " << r.nx_blocks << ", \"layers\": \""
        << layers_label(r.layers) << "\", \"basis_seconds\": " << r.seconds_basis
        << ", \"assembly_seconds\": " << r.seconds_assembly
        << ", \"solve_seconds\": " << r.seconds_solve << "}"
        << (i + 1 < report.steady.size() ? "," : "") << "\n";
  }
  out << "  ]\n}\n";
}

}  // namespace nlmc
