#pragma once

#include <Eigen/Core>

namespace hierlid::linalg {

/// Result of a symmetric positive-definite solve/inverse. When the matrix is
/// numerically singular a Tikhonov jitter of 1e-10 * trace/n is added and the
/// fact is reported through `jitter_used`; callers surface it, never hide it.
struct SymSolveReport {
  bool jitter_used = false;
  double jitter = 0.0;
};

/// Inverse of a symmetric PSD matrix via LDLT, with the jitter fallback.
/// Throws Error(SingularInformation) if the matrix stays singular after
/// jittering.
Eigen::MatrixXd sym_inverse(const Eigen::MatrixXd& m, SymSolveReport* report = nullptr);

/// Solve m * x = rhs for symmetric PSD m with the same jitter policy.
Eigen::MatrixXd sym_solve(const Eigen::MatrixXd& m, const Eigen::MatrixXd& rhs,
                          SymSolveReport* report = nullptr);

/// Lower Cholesky factor of a symmetric PSD matrix. Slightly negative
/// eigenvalues within the PSD tolerance are flattened to zero.
Eigen::MatrixXd psd_cholesky(const Eigen::MatrixXd& m);

/// 0.5 * (m + m^T).
Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& m);

double min_eigenvalue(const Eigen::MatrixXd& m);

/// Symmetry within `tol` and min eigenvalue >= -tol_eig * trace/n.
bool is_symmetric_psd(const Eigen::MatrixXd& m, double sym_tol = 1e-10,
                      double eig_tol = 1e-8);

}  // namespace hierlid::linalg
