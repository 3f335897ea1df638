#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "nlmc/scene.hpp"
#include "nlmc/upscale.hpp"

namespace nlmc {

std::string layers_label(Oversampling layers);

struct SteadyRow {
  int nx_blocks = 0, ny_blocks = 0;
  double h_coarse = 0.0;
  Oversampling layers;
  ErrorBreakdown err;           // mean-pressure DOFs, primary report
  ErrorBreakdown err_weighted;  // integral-normalized DOFs
  double galerkin_residual = 0.0;
  double max_constraint_residual = 0.0;
  double conservation_rowsum_rel = 0.0;  // max |A_T 1| / max |A_T|
  double seconds_basis = 0.0, seconds_assembly = 0.0, seconds_solve = 0.0;
};

struct TransientRow {
  int nx_blocks = 0, ny_blocks = 0;
  double h_coarse = 0.0;
  Oversampling layers;
  double t = 0.0;
  ErrorBreakdown err;
};

struct RunReport {
  std::vector<SteadyRow> steady;
  std::vector<TransientRow> transient;
  double seconds_fine_solve = 0.0;
  double seconds_fine_transient = 0.0;
};

/// Drives the full pipeline for one scene: fine reference, basis sets,
/// coarse assembly, steady and transient studies, and file exports. Built
/// basis sets and fine solutions are cached and shared across studies.
class StudyRunner {
 public:
  explicit StudyRunner(const ExperimentConfig& cfg, int threads = 0);

  struct CoarseContext {
    CoarseGrid grid;
    ContinuumIndex continua;
    ConstraintMatrix constraints;
    Eigen::VectorXd measures;
    Eigen::VectorXd gauge;
  };

  const Scene& scene() const { return scene_; }
  int coarse_count() const { return static_cast<int>(coarse_.size()); }
  const CoarseContext& coarse(int idx) const { return coarse_[idx]; }
  int threads() const { return threads_; }

  const SteadyFineSolution& fine_solution();
  /// Integral-normalized averages C u_f of the steady fine solution.
  const Eigen::VectorXd& fine_average(int coarse_idx);

  const BasisSet& bases(int coarse_idx, Oversampling layers);
  const std::vector<AuxiliarySpace>& auxiliary_spaces(int coarse_idx);
  const BasisSet& cem_bases(int coarse_idx, Oversampling layers);

  /// Normalized transmissibility and coarse rhs for one configuration.
  struct CoarseOperators {
    Eigen::MatrixXd t_hat;
    Eigen::MatrixXd a_t;   // finite-volume corrected
    Eigen::VectorXd ghat;
  };
  const CoarseOperators& coarse_operators(int coarse_idx, Oversampling layers);

  RunReport run_steady(const std::string& out_dir);
  RunReport run_transient(const std::string& out_dir);

  void export_fine_fields(const std::string& out_dir);
  /// Decay profiles and basis fields for one block (-1: the center block).
  void export_basis_fields(const std::string& out_dir, Oversampling layers,
                           int block = -1);
  void export_transmissibility_maps(const std::string& out_dir,
                                    Oversampling layers);

  static void write_timings(const std::string& path, const RunReport& report);

 private:
  Scene scene_;
  int threads_ = 0;
  std::vector<CoarseContext> coarse_;
  std::unique_ptr<SteadyFineSolution> fine_;
  std::map<int, Eigen::VectorXd> fine_avg_;
  std::map<std::pair<int, int>, BasisSet> basis_cache_;  // key: (coarse, layer key)
  std::map<int, std::vector<AuxiliarySpace>> aux_cache_;
  std::map<std::pair<int, int>, BasisSet> cem_cache_;
  std::map<std::pair<int, int>, CoarseOperators> op_cache_;

  static int layer_key(Oversampling l) { return l.whole_domain ? -1 : l.count; }
  const BasisSet& active_bases(int coarse_idx, Oversampling layers);
};

}  // namespace nlmc
