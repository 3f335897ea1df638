#include "nlmc/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

namespace nlmc {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open output file: " + path);
  return out;
}

}  // namespace

void write_vtk_structured_points(const std::string& path, const FineMesh& mesh,
                                 const Eigen::VectorXd& nodal,
                                 const std::string& name) {
  if (nodal.size() != mesh.node_count())
    throw Error("write_vtk_structured_points: field size mismatch");
  auto out = open_out(path);
  out << "# vtk DataFile Version 3.0\n";
  out << name << "\n";
  out << "ASCII\n";
  out << "DATASET STRUCTURED_POINTS\n";
  out << "DIMENSIONS " << mesh.nx + 1 << " " << mesh.ny + 1 << " 1\n";
  out << "ORIGIN 0 0 0\n";
  out << "SPACING " << format_double(mesh.h) << " " << format_double(mesh.h)
      << " 1\n";
  out << "POINT_DATA " << mesh.node_count() << "\n";
  out << "SCALARS " << name << " double 1\n";
  out << "LOOKUP_TABLE default\n";
  for (int i = 0; i < nodal.size(); ++i) out << format_double(nodal[i]) << "\n";
}

void export_triplets(const std::string& path, const Eigen::MatrixXd& m,
                     double drop_tol) {
  auto out = open_out(path);
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j)
      if (std::abs(m(i, j)) > drop_tol)
        out << i << " " << j << " " << format_double(m(i, j)) << "\n";
}

void export_solution_csv(const std::string& path, const CoarseGrid& coarse,
                         const ContinuumIndex& continua,
                         const Eigen::VectorXd& u_mean,
                         const Eigen::VectorXd& u_integral) {
  auto out = open_out(path);
  out << "block,block_x,block_y,continuum,mean_value,integral_value\n";
  for (const auto& c : continua.items)
    out << c.block << "," << coarse.block_bx(c.block) << ","
        << coarse.block_by(c.block) << "," << c.m << ","
        << format_double(u_mean[c.flat_index]) << ","
        << format_double(u_integral[c.flat_index]) << "\n";
}

void export_decay_csv(const std::string& path, const Eigen::VectorXd& profile) {
  auto out = open_out(path);
  out << "layer,max_abs\n";
  for (int k = 0; k < profile.size(); ++k)
    out << k << "," << format_double(profile[k]) << "\n";
}

void export_transmissibility_map(const std::string& map_path,
                                 const std::string& slab_path,
                                 const Eigen::MatrixXd& t,
                                 const CoarseGrid& coarse,
                                 const ContinuumIndex& continua, int center_block) {
  const int row = continua.flat(center_block, 0);
  const int cbx = coarse.block_bx(center_block);
  const int cby = coarse.block_by(center_block);
  {
    auto out = open_out(map_path);
    out << "block_dx,block_dy,continuum,value\n";
    for (const auto& c : continua.items)
      out << coarse.block_bx(c.block) - cbx << "," << coarse.block_by(c.block) - cby
          << "," << c.m << "," << format_double(t(row, c.flat_index)) << "\n";
  }
  {
    auto out = open_out(slab_path);
    out << "block_dx,continuum,value\n";
    for (const auto& c : continua.items) {
      if (coarse.block_by(c.block) != cby) continue;
      out << coarse.block_bx(c.block) - cbx << "," << c.m << ","
          << format_double(t(row, c.flat_index)) << "\n";
    }
  }
}

void export_mode_correlations(const std::string& path,
                              const std::vector<ModeCorrelation>& rows) {
  auto out = open_out(path);
  out << "basis_m,eigen_k,lambda,cosine\n";
  for (const auto& r : rows)
    out << r.m << "," << r.k << "," << format_double(r.lambda) << ","
        << format_double(r.cosine) << "\n";
}

}  // namespace nlmc
