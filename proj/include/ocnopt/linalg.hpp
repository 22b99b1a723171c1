#pragma once

#include <Eigen/Dense>

#include "ocnopt/errors.hpp"

namespace ocnopt {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using Index = Eigen::Index;

/// Eigendecomposition of a symmetric matrix. Columns of `vectors` are
/// orthonormal eigenvectors; `values` is sorted descending. Each eigenvector
/// is normalized so its first component of non-negligible magnitude is
/// positive, which makes the decomposition reproducible.
struct SymEig {
  Mat vectors;
  Vec values;
};

/// Cyclic Jacobi sweeps on 0.5*(a + a^T). Stops once the off-diagonal
/// Frobenius mass falls below off_tol relative to the input norm; throws
/// convergence_error if max_sweeps is exhausted first.
SymEig sym_eig(const Mat& a, int max_sweeps = 100, double off_tol = 1e-12);

/// Moore-Penrose pseudo-inverse of a symmetric PSD matrix. Eigenvalues below
/// tol * lambda_max are treated as zero; an eigenvalue below -tol * lambda_max
/// raises not_psd_error.
Mat pinv_psd(const Mat& a, double tol = 1e-12);

/// y = (a (x) b) v without materializing the mn x mn Kronecker product.
/// a is m x m, b is n x n, v has length m*n and is read in column-major
/// block order: v = vec(C) with C an n x m matrix, so y = vec(b * C * a^T).
Vec kron_apply(const Mat& a, const Mat& b, const Vec& v);

/// Explicit Kronecker product, for oracles and small verification problems.
Mat kron_dense(const Mat& a, const Mat& b);

}  // namespace ocnopt
