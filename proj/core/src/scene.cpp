#include "nlmc/scene.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace nlmc {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& pointer, const std::string& what) {
  throw Error("config error at " + pointer + ": " + what);
}

double require_number(const json& j, const std::string& ptr) {
  if (!j.is_number()) fail(ptr, "expected a number");
  return j.get<double>();
}

int require_int(const json& j, const std::string& ptr) {
  if (!j.is_number_integer()) fail(ptr, "expected an integer");
  return j.get<int>();
}

const json& require_key(const json& j, const std::string& key,
                        const std::string& ptr) {
  if (!j.is_object() || !j.contains(key)) fail(ptr + "/" + key, "missing");
  return j.at(key);
}

Eigen::Vector2d parse_point(const json& j, const std::string& ptr) {
  if (!j.is_array() || j.size() != 2) fail(ptr, "expected [x, y]");
  return {require_number(j[0], ptr + "/0"), require_number(j[1], ptr + "/1")};
}

ExperimentConfig parse_json(const json& root) {
  ExperimentConfig cfg;
  if (!root.is_object()) fail("/", "expected a JSON object");

  const json& dom = require_key(root, "domain", "");
  cfg.lx = require_number(require_key(dom, "Lx", "/domain"), "/domain/Lx");
  cfg.ly = require_number(require_key(dom, "Ly", "/domain"), "/domain/Ly");
  if (cfg.lx <= 0 || cfg.ly <= 0) fail("/domain", "extents must be positive");

  const json& fine = require_key(root, "fine", "");
  cfg.nx = require_int(require_key(fine, "nx", "/fine"), "/fine/nx");
  cfg.ny = require_int(require_key(fine, "ny", "/fine"), "/fine/ny");
  if (cfg.nx < 1 || cfg.ny < 1) fail("/fine", "nx and ny must be >= 1");

  const json& coarse = require_key(root, "coarse", "");
  if (!coarse.is_array() || coarse.empty()) fail("/coarse", "expected a nonempty array");
  for (size_t i = 0; i < coarse.size(); ++i) {
    const std::string ptr = "/coarse/" + std::to_string(i);
    CoarseSpec cs;
    cs.nx_blocks = require_int(require_key(coarse[i], "Nx", ptr), ptr + "/Nx");
    cs.ny_blocks = require_int(require_key(coarse[i], "Ny", ptr), ptr + "/Ny");
    if (cs.nx_blocks < 1 || cs.ny_blocks < 1) fail(ptr, "block counts must be >= 1");
    if (cfg.nx % cs.nx_blocks != 0 || cfg.ny % cs.ny_blocks != 0)
      fail(ptr, "fine mesh is not a conforming refinement of this coarse grid");
    cfg.coarse.push_back(cs);
  }

  if (root.contains("kappa_matrix")) {
    const json& k = root.at("kappa_matrix");
    if (k.is_number()) {
      cfg.kappa_scalar = k.get<double>();
      if (cfg.kappa_scalar <= 0) fail("/kappa_matrix", "must be positive");
    } else if (k.is_object() && k.contains("file")) {
      cfg.kappa_file = k.at("file").get<std::string>();
    } else {
      fail("/kappa_matrix", "expected a number or {\"file\": path}");
    }
  }

  if (root.contains("fractures")) {
    const json& fr = root.at("fractures");
    if (!fr.is_array()) fail("/fractures", "expected an array");
    for (size_t i = 0; i < fr.size(); ++i) {
      const std::string ptr = "/fractures/" + std::to_string(i);
      FractureSpec fs;
      fs.p0 = parse_point(require_key(fr[i], "p0", ptr), ptr + "/p0");
      fs.p1 = parse_point(require_key(fr[i], "p1", ptr), ptr + "/p1");
      fs.conductivity = require_number(require_key(fr[i], "conductivity", ptr),
                                       ptr + "/conductivity");
      if (fs.conductivity <= 0) fail(ptr + "/conductivity", "must be positive");
      cfg.fractures.push_back(fs);
    }
  }

  if (root.contains("sources")) {
    const json& src = root.at("sources");
    if (!src.is_array()) fail("/sources", "expected an array");
    double total = 0.0, scale = 0.0;
    for (size_t i = 0; i < src.size(); ++i) {
      const std::string ptr = "/sources/" + std::to_string(i);
      const json& box = require_key(src[i], "box", ptr);
      if (!box.is_array() || box.size() != 4) fail(ptr + "/box", "expected [x0,x1,y0,y1]");
      SourceBox sb;
      sb.x0 = require_number(box[0], ptr + "/box/0");
      sb.x1 = require_number(box[1], ptr + "/box/1");
      sb.y0 = require_number(box[2], ptr + "/box/2");
      sb.y1 = require_number(box[3], ptr + "/box/3");
      sb.value = require_number(require_key(src[i], "value", ptr), ptr + "/value");
      if (sb.x1 <= sb.x0 || sb.y1 <= sb.y0) fail(ptr + "/box", "box must have positive area");
      total += sb.value * sb.area();
      scale += std::abs(sb.value) * sb.area();
      cfg.sources.push_back(sb);
    }
    if (scale > 0.0 && std::abs(total) > 1e-10 * scale)
      fail("/sources", "source boxes must integrate to zero total (imbalance " +
                           std::to_string(total) + ")");
  }

  const json& os = require_key(root, "oversampling", "");
  if (!os.is_array() || os.empty()) fail("/oversampling", "expected a nonempty array");
  int prev = -1;
  for (size_t i = 0; i < os.size(); ++i) {
    const std::string ptr = "/oversampling/" + std::to_string(i);
    if (os[i].is_string()) {
      if (os[i].get<std::string>() != "global")
        fail(ptr, "expected an integer or \"global\"");
      cfg.oversampling.push_back(Oversampling::global());
    } else {
      const int l = require_int(os[i], ptr);
      if (l < 1) fail(ptr, "layer counts must be >= 1");
      if (l <= prev) fail(ptr, "layer list must be ascending");
      prev = l;
      cfg.oversampling.push_back(Oversampling::layers(l));
    }
  }

  if (root.contains("transient")) {
    const json& tr = root.at("transient");
    TransientSpec ts;
    ts.dt = require_number(require_key(tr, "dt", "/transient"), "/transient/dt");
    ts.t_end = require_number(require_key(tr, "t_end", "/transient"), "/transient/t_end");
    if (ts.dt <= 0 || ts.t_end <= 0) fail("/transient", "dt and t_end must be positive");
    const json& rt = require_key(tr, "report_times", "/transient");
    if (!rt.is_array() || rt.empty())
      fail("/transient/report_times", "expected a nonempty array");
    for (size_t i = 0; i < rt.size(); ++i)
      ts.report_times.push_back(
          require_number(rt[i], "/transient/report_times/" + std::to_string(i)));
    cfg.transient = ts;
  }

  if (root.contains("tolerances")) {
    const json& tol = root.at("tolerances");
    if (tol.contains("solver"))
      cfg.solver_tol = require_number(tol.at("solver"), "/tolerances/solver");
    if (tol.contains("constraint"))
      cfg.constraint_tol = require_number(tol.at("constraint"), "/tolerances/constraint");
  }

  if (root.contains("boundary_policy")) {
    const std::string p = root.at("boundary_policy").get<std::string>();
    if (p == "physical")
      cfg.policy = BoundaryPolicy::kPhysicalOnDomainBoundary;
    else if (p == "dirichlet")
      cfg.policy = BoundaryPolicy::kDirichletEverywhere;
    else
      fail("/boundary_policy", "expected \"physical\" or \"dirichlet\"");
  }
  if (root.contains("rhs_mode")) {
    const std::string p = root.at("rhs_mode").get<std::string>();
    if (p == "galerkin")
      cfg.rhs_mode = RhsMode::kGalerkin;
    else if (p == "block")
      cfg.rhs_mode = RhsMode::kBlockIntegral;
    else
      fail("/rhs_mode", "expected \"galerkin\" or \"block\"");
  }
  if (root.contains("basis")) {
    const std::string p = root.at("basis").get<std::string>();
    if (p == "simplified")
      cfg.basis = BasisPath::kSimplified;
    else if (p == "spectral")
      cfg.basis = BasisPath::kSpectral;
    else
      fail("/basis", "expected \"simplified\" or \"spectral\"");
  }
  if (root.contains("output_dir"))
    cfg.output_dir = root.at("output_dir").get<std::string>();
  return cfg;
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& ex) {
    throw Error(std::string("config parse error: ") + ex.what());
  }
  return parse_json(root);
}

ExperimentConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("config file not found: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

Scene build_scene(const ExperimentConfig& cfg) {
  Scene s;
  s.config = cfg;
  s.mesh = build_fine_mesh(cfg.nx, cfg.ny, cfg.lx, cfg.ly);

  if (cfg.kappa_file.empty()) {
    s.kappa_cells = Eigen::VectorXd::Constant(s.mesh.cell_count(), cfg.kappa_scalar);
  } else {
    std::ifstream in(cfg.kappa_file);
    if (!in) throw Error("kappa field file not found: " + cfg.kappa_file);
    s.kappa_cells.resize(s.mesh.cell_count());
    for (int c = 0; c < s.mesh.cell_count(); ++c)
      if (!(in >> s.kappa_cells[c]))
        throw Error("kappa field file too short: " + cfg.kappa_file + " needs " +
                    std::to_string(s.mesh.cell_count()) + " values");
  }

  int id = 0;
  for (const auto& fs : cfg.fractures) {
    FracturePolyline f = snap_fracture(s.mesh, fs.p0, fs.p1, fs.conductivity);
    f.id = id++;
    s.network.fractures.push_back(std::move(f));
  }

  s.stiffness = assemble_stiffness(s.mesh, s.network, s.kappa_cells);
  s.mass = assemble_mass(s.mesh);

  s.source.nodal = Eigen::VectorXd::Zero(s.mesh.node_count());
  const double tol = 1e-12 * std::max(cfg.lx, cfg.ly);
  for (int n = 0; n < s.mesh.node_count(); ++n) {
    const Eigen::Vector2d p = s.mesh.node_xy(n);
    for (const auto& box : cfg.sources)
      if (p.x() >= box.x0 - tol && p.x() <= box.x1 + tol && p.y() >= box.y0 - tol &&
          p.y() <= box.y1 + tol)
        s.source.nodal[n] += box.value;
  }
  s.source.load = s.mass * s.source.nodal;
  return s;
}

}  // namespace nlmc
