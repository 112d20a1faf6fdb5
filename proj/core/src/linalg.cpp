#include "hierlid/linalg.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <cmath>

#include "hierlid/error.hpp"

namespace hierlid::linalg {

namespace {

// LDLT can report Success on rank-deficient input, so also check the
// reconstruction residual of the solve.
bool solve_ok(const Eigen::LDLT<Eigen::MatrixXd>& ldlt, const Eigen::MatrixXd& m,
              const Eigen::MatrixXd& rhs, Eigen::MatrixXd& out) {
  if (ldlt.info() != Eigen::Success) return false;
  out = ldlt.solve(rhs);
  if (!out.allFinite()) return false;
  const double scale = m.norm() * out.norm() + rhs.norm();
  if (scale == 0.0) return true;
  return (m * out - rhs).norm() <= 1e-8 * scale;
}

}  // namespace

Eigen::MatrixXd sym_solve(const Eigen::MatrixXd& m, const Eigen::MatrixXd& rhs,
                          SymSolveReport* report) {
  if (m.rows() != m.cols() || m.rows() != rhs.rows())
    throw Error(ErrorKind::DimensionMismatch, "sym_solve: incompatible shapes");

  Eigen::MatrixXd sym = symmetrize(m);
  Eigen::MatrixXd out;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(sym);
  if (solve_ok(ldlt, sym, rhs, out)) {
    if (report) *report = SymSolveReport{};
    return out;
  }

  const double n = static_cast<double>(sym.rows());
  const double jitter = 1e-10 * std::abs(sym.trace()) / n;
  const double effective = jitter > 0.0 ? jitter : 1e-300;
  Eigen::MatrixXd jittered = sym;
  jittered.diagonal().array() += effective;
  Eigen::LDLT<Eigen::MatrixXd> ldlt2(jittered);
  if (solve_ok(ldlt2, jittered, rhs, out)) {
    if (report) {
      report->jitter_used = true;
      report->jitter = effective;
    }
    return out;
  }
  throw Error(ErrorKind::SingularInformation,
              "matrix singular even after Tikhonov jitter");
}

Eigen::MatrixXd sym_inverse(const Eigen::MatrixXd& m, SymSolveReport* report) {
  const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(m.rows(), m.cols());
  return symmetrize(sym_solve(m, id, report));
}

Eigen::MatrixXd psd_cholesky(const Eigen::MatrixXd& m) {
  Eigen::MatrixXd sym = symmetrize(m);
  Eigen::LLT<Eigen::MatrixXd> llt(sym);
  if (llt.info() == Eigen::Success) return llt.matrixL();

  // Fall back to an eigendecomposition with negative eigenvalues clipped.
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  if (es.info() != Eigen::Success)
    throw Error(ErrorKind::SingularInformation, "eigendecomposition failed");
  Eigen::VectorXd vals = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * vals.asDiagonal();
}

Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& m) {
  return 0.5 * (m + m.transpose());
}

double min_eigenvalue(const Eigen::MatrixXd& m) {
  if (m.rows() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(symmetrize(m),
                                                    Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

bool is_symmetric_psd(const Eigen::MatrixXd& m, double sym_tol, double eig_tol) {
  if (m.rows() != m.cols()) return false;
  if (m.rows() == 0) return true;
  const double scale = m.cwiseAbs().maxCoeff();
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > sym_tol * std::max(1.0, scale))
    return false;
  const double n = static_cast<double>(m.rows());
  const double floor = -eig_tol * std::max(std::abs(m.trace()) / n, 1e-300);
  return min_eigenvalue(m) >= floor;
}

}  // namespace hierlid::linalg
