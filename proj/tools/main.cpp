// Command line driver for the NLMC upscaling toolkit.
//
// Subcommands: solve-fine, build-basis, upscale, transient, report.
// Exit code 0 when every configured run completes; on failure a
// machine-readable JSON error goes to stderr and the exit code is 1.

#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "nlmc/io.hpp"
#include "nlmc/study.hpp"

namespace {

struct CliOptions {
  std::string config_path;
  std::string out_dir = "out";
  int threads = 0;
  int layers = 0;
  bool layers_global = false;
  std::string basis = "";
  std::string bc_policy = "";
  std::string rhs = "";
  int block = -1;
};

nlmc::ExperimentConfig load_config(const CliOptions& opt) {
  nlmc::ExperimentConfig cfg = nlmc::parse_config(opt.config_path);
  if (!opt.basis.empty())
    cfg.basis = opt.basis == "spectral" ? nlmc::BasisPath::kSpectral
                                        : nlmc::BasisPath::kSimplified;
  if (!opt.bc_policy.empty())
    cfg.policy = opt.bc_policy == "dirichlet"
                     ? nlmc::BoundaryPolicy::kDirichletEverywhere
                     : nlmc::BoundaryPolicy::kPhysicalOnDomainBoundary;
  if (!opt.rhs.empty())
    cfg.rhs_mode = opt.rhs == "block" ? nlmc::RhsMode::kBlockIntegral
                                      : nlmc::RhsMode::kGalerkin;
  return cfg;
}

std::string resolve_out(const CliOptions& opt, const nlmc::ExperimentConfig& cfg) {
  if (!opt.out_dir.empty()) return opt.out_dir;
  if (!cfg.output_dir.empty()) return cfg.output_dir;
  return "out";
}

void print_steady_summary(const nlmc::RunReport& report) {
  for (const auto& row : report.steady)
    std::printf("steady  H=1/%-3d layers=%-6s  error %% = %-12.6g (matrix %.6g, fracture %.6g)\n",
                row.nx_blocks, nlmc::layers_label(row.layers).c_str(),
                row.err.total_pct, row.err.matrix_pct, row.err.fracture_pct);
}

void print_transient_summary(const nlmc::RunReport& report) {
  for (const auto& row : report.transient)
    std::printf("transient  H=1/%-3d layers=%-6s t=%-5g  error %% = %.6g\n",
                row.nx_blocks, nlmc::layers_label(row.layers).c_str(), row.t,
                row.err.total_pct);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Non-local multi-continua upscaling for fractured porous media"};
  app.require_subcommand(1);

  CliOptions opt;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("config", opt.config_path, "scene/config JSON file")
        ->required()
        ->check(CLI::ExistingFile);
    sub->add_option("--out", opt.out_dir, "output directory")
        ->envname("NLMC_OUT")
        ->capture_default_str();
    sub->add_option("--threads", opt.threads, "worker threads (0 = all cores)");
    sub->add_option("--basis", opt.basis, "basis path: simplified|spectral")
        ->check(CLI::IsMember({"simplified", "spectral"}));
    sub->add_option("--bc-policy", opt.bc_policy,
                    "region boundary policy: physical|dirichlet")
        ->check(CLI::IsMember({"physical", "dirichlet"}));
    sub->add_option("--rhs", opt.rhs, "coarse rhs pairing: galerkin|block")
        ->check(CLI::IsMember({"galerkin", "block"}));
  };

  CLI::App* solve_fine = app.add_subcommand("solve-fine", "fine reference solve");
  add_common(solve_fine);

  CLI::App* build_basis =
      app.add_subcommand("build-basis", "build multiscale bases, export decay");
  add_common(build_basis);
  build_basis->add_option("--layers", opt.layers, "oversampling layers")
      ->required();
  build_basis->add_flag("--global", opt.layers_global,
                        "use the whole domain instead of --layers");
  build_basis->add_option("--block", opt.block,
                          "block id for field exports (default: center)");

  CLI::App* upscale = app.add_subcommand("upscale", "steady upscaling study");
  add_common(upscale);

  CLI::App* transient = app.add_subcommand("transient", "transient study");
  add_common(transient);

  CLI::App* full = app.add_subcommand(
      "report", "full study: steady + transient + transmissibility maps");
  add_common(full);

  CLI11_PARSE(app, argc, argv);

  try {
    nlmc::ExperimentConfig cfg = load_config(opt);
    const std::string out = resolve_out(opt, cfg);
    nlmc::StudyRunner runner(cfg, opt.threads);

    if (solve_fine->parsed()) {
      const auto& sol = runner.fine_solution();
      runner.export_fine_fields(out);
      for (int ci = 0; ci < runner.coarse_count(); ++ci) {
        const auto& ctx = runner.coarse(ci);
        const Eigen::VectorXd& ubar = runner.fine_average(ci);
        nlmc::export_solution_csv(
            out + "/solutions/u_bar_H" + std::to_string(ctx.grid.nx_blocks) +
                ".csv",
            ctx.grid, ctx.continua, ubar.cwiseQuotient(ctx.measures), ubar);
      }
      std::printf("fine solve done: %d DOFs, residual %.3g\n",
                  static_cast<int>(sol.u.size()), sol.residual);
    } else if (build_basis->parsed()) {
      const nlmc::Oversampling layers =
          opt.layers_global ? nlmc::Oversampling::global()
                            : nlmc::Oversampling::layers(opt.layers);
      runner.export_basis_fields(out, layers, opt.block);
      std::printf("bases built at layers=%s\n",
                  nlmc::layers_label(layers).c_str());
    } else if (upscale->parsed()) {
      nlmc::RunReport report = runner.run_steady(out);
      nlmc::StudyRunner::write_timings(out + "/timings.json", report);
      print_steady_summary(report);
    } else if (transient->parsed()) {
      nlmc::RunReport report = runner.run_transient(out);
      nlmc::StudyRunner::write_timings(out + "/timings.json", report);
      print_transient_summary(report);
    } else if (full->parsed()) {
      nlmc::RunReport report = runner.run_steady(out);
      if (cfg.transient) {
        nlmc::RunReport tr = runner.run_transient(out);
        report.transient = tr.transient;
        report.seconds_fine_transient = tr.seconds_fine_transient;
      }
      if (cfg.basis == nlmc::BasisPath::kSimplified)
        runner.export_transmissibility_maps(out, cfg.oversampling.back());
      runner.export_basis_fields(out, cfg.oversampling.back(), opt.block);
      nlmc::StudyRunner::write_timings(out + "/timings.json", report);
      print_steady_summary(report);
      print_transient_summary(report);
    }
    return 0;
  } catch (const std::exception& ex) {
    nlohmann::json err;
    err["error"] = ex.what();
    err["config"] = opt.config_path;
    std::cerr << err.dump() << std::endl;
    return 1;
  }
}
