#include "nlmc/solver.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

namespace nlmc {

struct SaddlePointSolver::Impl {
  SparseMat a;
  RowSparseMat c;
  double tol = 1e-9;
  bool use_schur = false;

  // Schur path
  Eigen::SimplicialLDLT<SparseMat> a_ldlt;
  Eigen::MatrixXd ainv_ct;  // A^{-1} C^T
  Eigen::LDLT<Eigen::MatrixXd> schur_ldlt;

  // direct path on the assembled KKT matrix
  Eigen::SparseLU<SparseMat> kkt_lu;

  void build_schur() {
    a_ldlt.compute(a);
    if (a_ldlt.info() != Eigen::Success)
      throw Error("SaddlePointSolver: Cholesky factorization failed");
    Eigen::MatrixXd ct = Eigen::MatrixXd(c.transpose());
    ainv_ct = a_ldlt.solve(ct);
    Eigen::MatrixXd s = c * ainv_ct;
    schur_ldlt.compute(s);
    if (schur_ldlt.info() != Eigen::Success || !schur_ldlt.isPositive())
      throw Error(
          "SaddlePointSolver: rank-deficient constraint block (duplicated "
          "continuum in the region?)");
  }

  void build_kkt() {
    const int n = static_cast<int>(a.rows());
    const int k = static_cast<int>(c.rows());
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(a.nonZeros() + 2 * c.nonZeros());
    for (int j = 0; j < a.outerSize(); ++j)
      for (SparseMat::InnerIterator it(a, j); it; ++it)
        trip.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()),
                          it.value());
    for (int r = 0; r < c.outerSize(); ++r)
      for (RowSparseMat::InnerIterator it(c, r); it; ++it) {
        trip.emplace_back(n + r, static_cast<int>(it.col()), it.value());
        trip.emplace_back(static_cast<int>(it.col()), n + r, it.value());
      }
    SparseMat kkt(n + k, n + k);
    kkt.setFromTriplets(trip.begin(), trip.end());
    kkt.makeCompressed();
    kkt_lu.compute(kkt);
    if (kkt_lu.info() != Eigen::Success)
      throw Error(
          "SaddlePointSolver: singular saddle-point system (rank-deficient "
          "constraints?)");
  }

  Result run(const Eigen::VectorXd& f, const Eigen::VectorXd& e) const {
    const int n = static_cast<int>(a.rows());
    const int k = static_cast<int>(c.rows());
    Result res;
    if (use_schur) {
      // psi = A^{-1}(f - C^T mu),  S mu = C A^{-1} f - e,  S = C A^{-1} C^T.
      Eigen::VectorXd ainv_f =
          f.isZero(0.0) ? Eigen::VectorXd::Zero(n) : a_ldlt.solve(f).eval();
      res.mu = schur_ldlt.solve(c * ainv_f - e);
      res.psi = ainv_f - ainv_ct * res.mu;
    } else {
      Eigen::VectorXd rhs(n + k);
      rhs.head(n) = f;
      rhs.tail(k) = e;
      const Eigen::VectorXd sol = kkt_lu.solve(rhs);
      res.psi = sol.head(n);
      res.mu = sol.tail(k);
    }
    const double scale =
        std::max({f.norm(), e.norm(), 1e-300});
    const double r1 = (a * res.psi + c.transpose() * res.mu - f).norm();
    const double r2 = (c * res.psi - e).norm();
    res.residual = std::sqrt(r1 * r1 + r2 * r2) / scale;
    res.constraint_residual = (c * res.psi - e).lpNorm<Eigen::Infinity>();
    if (res.residual > tol)
      throw Error("SaddlePointSolver: residual " + std::to_string(res.residual) +
                  " exceeds tolerance " + std::to_string(tol));
    return res;
  }
};

SaddlePointSolver::SaddlePointSolver(SparseMat a, RowSparseMat c,
                                     bool positive_definite, double tol)
    : impl_(std::make_unique<Impl>()) {
  if (a.rows() != a.cols() || c.cols() != a.rows())
    throw Error("SaddlePointSolver: dimension mismatch");
  impl_->a = std::move(a);
  impl_->c = std::move(c);
  impl_->tol = tol;
  impl_->use_schur = positive_definite;
  if (positive_definite) {
    try {
      impl_->build_schur();
      return;
    } catch (const Error&) {
      impl_->use_schur = false;  // retry on the assembled system
    }
  }
  impl_->build_kkt();
}

SaddlePointSolver::~SaddlePointSolver() = default;
SaddlePointSolver::SaddlePointSolver(SaddlePointSolver&&) noexcept = default;
SaddlePointSolver& SaddlePointSolver::operator=(SaddlePointSolver&&) noexcept =
    default;

SaddlePointSolver::Result SaddlePointSolver::solve_unit(int k) const {
  Eigen::VectorXd e = Eigen::VectorXd::Zero(impl_->c.rows());
  if (k < 0 || k >= e.size())
    throw Error("SaddlePointSolver: constraint index out of range");
  e[k] = 1.0;
  return impl_->run(Eigen::VectorXd::Zero(impl_->a.rows()), e);
}

SaddlePointSolver::Result SaddlePointSolver::solve(const Eigen::VectorXd& f,
                                                   const Eigen::VectorXd& e) const {
  return impl_->run(f, e);
}

int SaddlePointSolver::primal_size() const {
  return static_cast<int>(impl_->a.rows());
}
int SaddlePointSolver::constraint_count() const {
  return static_cast<int>(impl_->c.rows());
}

}  // namespace nlmc
