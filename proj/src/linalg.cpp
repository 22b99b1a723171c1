#include "ocnopt/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace ocnopt {

namespace {

double offdiag_norm(const Mat& m) {
  double s = 0.0;
  for (Index p = 0; p < m.rows(); ++p)
    for (Index q = 0; q < m.cols(); ++q)
      if (p != q) s += m(p, q) * m(p, q);
  return std::sqrt(s);
}

}  // namespace

SymEig sym_eig(const Mat& a, int max_sweeps, double off_tol) {
  if (a.rows() != a.cols())
    throw dim_error("sym_eig: matrix must be square");
  const Index n = a.rows();
  Mat m = 0.5 * (a + a.transpose());
  Mat v = Mat::Identity(n, n);
  if (n <= 1) return {v, m.diagonal()};

  const double stop = off_tol * std::max(m.norm(), 1e-300);
  bool converged = false;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    if (offdiag_norm(m) <= stop) {
      converged = true;
      break;
    }
    for (Index p = 0; p < n - 1; ++p) {
      for (Index q = p + 1; q < n; ++q) {
        const double apq = m(p, q);
        if (std::abs(apq) <= stop / double(n * n)) continue;
        const double theta = (m(q, q) - m(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (Index k = 0; k < n; ++k) {
          const double mkp = m(k, p), mkq = m(k, q);
          m(k, p) = c * mkp - s * mkq;
          m(k, q) = s * mkp + c * mkq;
        }
        for (Index k = 0; k < n; ++k) {
          const double mpk = m(p, k), mqk = m(q, k);
          m(p, k) = c * mpk - s * mqk;
          m(q, k) = s * mpk + c * mqk;
        }
        m(p, q) = m(q, p) = 0.0;
        for (Index k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  if (!converged && offdiag_norm(m) > stop)
    throw convergence_error("sym_eig: Jacobi sweeps did not converge, residual " +
                            std::to_string(offdiag_norm(m)));

  std::vector<Index> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  Vec diag = m.diagonal();
  std::stable_sort(order.begin(), order.end(),
                   [&](Index i, Index j) { return diag[i] > diag[j]; });

  SymEig out;
  out.values.resize(n);
  out.vectors.resize(n, n);
  for (Index j = 0; j < n; ++j) {
    out.values[j] = diag[order[static_cast<size_t>(j)]];
    out.vectors.col(j) = v.col(order[static_cast<size_t>(j)]);
    for (Index i = 0; i < n; ++i) {
      const double u = out.vectors(i, j);
      if (std::abs(u) > 1e-12) {
        if (u < 0.0) out.vectors.col(j) = -out.vectors.col(j);
        break;
      }
    }
  }
  return out;
}

Mat pinv_psd(const Mat& a, double tol) {
  if (a.rows() != a.cols())
    throw dim_error("pinv_psd: matrix must be square");
  const Index n = a.rows();
  if (n == 0) return a;
  SymEig e = sym_eig(a);
  const double lmax = e.values.maxCoeff();
  const double cut = tol * std::max(lmax, 0.0);
  const double neg_cut = std::max(cut, tol);
  if (e.values.minCoeff() < -neg_cut)
    throw not_psd_error("pinv_psd: eigenvalue " +
                        std::to_string(e.values.minCoeff()) +
                        " below PSD tolerance");
  Vec inv = Vec::Zero(n);
  for (Index i = 0; i < n; ++i)
    if (e.values[i] > cut && e.values[i] > 0.0) inv[i] = 1.0 / e.values[i];
  return e.vectors * inv.asDiagonal() * e.vectors.transpose();
}

Vec kron_apply(const Mat& a, const Mat& b, const Vec& v) {
  if (a.rows() != a.cols() || b.rows() != b.cols())
    throw dim_error("kron_apply: factors must be square");
  const Index m = a.rows(), n = b.rows();
  if (v.size() != m * n)
    throw dim_error("kron_apply: vector length " + std::to_string(v.size()) +
                    " does not match " + std::to_string(m * n));
  if (m == 0 || n == 0) return Vec();
  Eigen::Map<const Mat> c(v.data(), n, m);
  Mat r = b * c * a.transpose();
  return Eigen::Map<const Vec>(r.data(), m * n);
}

Mat kron_dense(const Mat& a, const Mat& b) {
  Mat out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

}  // namespace ocnopt
