#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "nlmc/basis.hpp"
#include "nlmc/fem.hpp"
#include "nlmc/geometry.hpp"
#include "nlmc/upscale.hpp"

namespace nlmc {

struct CoarseSpec {
  int nx_blocks = 0;
  int ny_blocks = 0;
};

struct FractureSpec {
  Eigen::Vector2d p0{0, 0};
  Eigen::Vector2d p1{0, 0};
  double conductivity = 0.0;
};

struct SourceBox {
  double x0 = 0, x1 = 0, y0 = 0, y1 = 0;
  double value = 0.0;
  double area() const { return (x1 - x0) * (y1 - y0); }
};

struct TransientSpec {
  double dt = 0.0;
  double t_end = 0.0;
  std::vector<double> report_times;
};

enum class BasisPath { kSimplified, kSpectral };

struct ExperimentConfig {
  double lx = 1.0, ly = 1.0;
  int nx = 0, ny = 0;
  std::vector<CoarseSpec> coarse;
  double kappa_scalar = 1.0;
  std::string kappa_file;  // empty = uniform kappa_scalar
  std::vector<FractureSpec> fractures;
  std::vector<SourceBox> sources;
  std::vector<Oversampling> oversampling;
  std::optional<TransientSpec> transient;
  double solver_tol = 1e-10;
  double constraint_tol = 1e-9;
  BoundaryPolicy policy = BoundaryPolicy::kPhysicalOnDomainBoundary;
  RhsMode rhs_mode = RhsMode::kGalerkin;
  BasisPath basis = BasisPath::kSimplified;
  std::string output_dir;  // empty: resolved by the caller (NLMC_OUT or ./out)
};

/// Parses and validates a scene/config file. Validation failures carry the
/// JSON pointer of the offending element; source boxes must balance to zero
/// total within 1e-10 relative.
ExperimentConfig parse_config(const std::string& path);
ExperimentConfig parse_config_text(const std::string& json_text);

/// Geometry and fine-scale operators realized from a config.
struct Scene {
  ExperimentConfig config;
  FineMesh mesh;
  FractureNetwork network;
  Eigen::VectorXd kappa_cells;
  SparseMat stiffness;
  SparseMat mass;
  SourceField source;
};

Scene build_scene(const ExperimentConfig& cfg);

}  // namespace nlmc
