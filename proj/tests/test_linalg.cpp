#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "ocnopt/linalg.hpp"
#include "ocnopt/rng.hpp"

using namespace ocnopt;

namespace {

Mat random_symmetric(Index n, Rng& rng) {
  Mat a(n, n);
  for (Index j = 0; j < a.size(); ++j) a.data()[j] = rng.normal();
  return 0.5 * (a + a.transpose()).eval();
}

Mat random_psd(Index n, Index rank, Rng& rng) {
  Mat g(n, rank);
  for (Index j = 0; j < g.size(); ++j) g.data()[j] = rng.normal();
  return g * g.transpose();
}

double rel_err(const Mat& got, const Mat& want) {
  const double scale = std::max(want.norm(), 1e-12);
  return (got - want).norm() / scale;
}

}  // namespace

TEST_CASE("sym_eig: identity matrix") {
  const SymEig e = sym_eig(Mat::Identity(3, 3));
  CHECK(e.values.size() == 3);
  for (Index i = 0; i < 3; ++i) CHECK(e.values[i] == doctest::Approx(1.0));
  CHECK((e.vectors * e.vectors.transpose() - Mat::Identity(3, 3))
            .cwiseAbs()
            .maxCoeff() < 1e-12);
}

TEST_CASE("sym_eig: already-diagonal matrix keeps its entries, sorted") {
  Mat d = Mat::Zero(2, 2);
  d(0, 0) = 3.0;
  d(1, 1) = 1.0;
  const SymEig e = sym_eig(d);
  CHECK(e.values[0] == doctest::Approx(3.0).epsilon(1e-14));
  CHECK(e.values[1] == doctest::Approx(1.0).epsilon(1e-14));
  CHECK((e.vectors - Mat::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("sym_eig: 2x2 analytic eigenvalues") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const double a = rng.normal(), b = rng.normal(), c = rng.normal();
    Mat m(2, 2);
    m << a, b, b, c;
    const SymEig e = sym_eig(m);
    const double mean = 0.5 * (a + c);
    const double disc = std::sqrt(0.25 * (a - c) * (a - c) + b * b);
    CHECK(std::abs(e.values[0] - (mean + disc)) < 1e-12);
    CHECK(std::abs(e.values[1] - (mean - disc)) < 1e-12);
  }
}

TEST_CASE("sym_eig: random 5x5 reconstruction and orthogonality") {
  Rng rng(42);
  for (int trial = 0; trial < 20; ++trial) {
    const Mat a = random_symmetric(5, rng);
    const SymEig e = sym_eig(a);
    CHECK((e.vectors * e.vectors.transpose() - Mat::Identity(5, 5))
              .cwiseAbs()
              .maxCoeff() < 1e-10);
    const Mat rec =
        e.vectors * e.values.asDiagonal() * e.vectors.transpose();
    CHECK(rel_err(rec, a) < 1e-10);
    for (Index i = 0; i + 1 < e.values.size(); ++i)
      CHECK(e.values[i] >= e.values[i + 1]);
  }
}

TEST_CASE("sym_eig: deterministic sign convention") {
  Rng rng(5);
  const Mat a = random_symmetric(4, rng);
  const SymEig e1 = sym_eig(a);
  const SymEig e2 = sym_eig(a);
  CHECK((e1.vectors - e2.vectors).cwiseAbs().maxCoeff() == 0.0);
  // first component of non-negligible magnitude is positive
  for (Index c = 0; c < e1.vectors.cols(); ++c) {
    const Vec col = e1.vectors.col(c);
    for (Index r = 0; r < col.size(); ++r) {
      if (std::abs(col[r]) > 1e-9) {
        CHECK(col[r] > 0.0);
        break;
      }
    }
  }
}

TEST_CASE("sym_eig: error paths") {
  CHECK_THROWS_AS(sym_eig(Mat::Zero(2, 3)), dim_error);
  Mat a(3, 3);
  a << 1, 2, 0, 2, 1, 3, 0, 3, 1;
  CHECK_THROWS_AS(sym_eig(a, /*max_sweeps=*/0), convergence_error);
}

TEST_CASE("pinv_psd: diagonal with a zero eigenvalue") {
  Mat d = Mat::Zero(2, 2);
  d(0, 0) = 2.0;
  const Mat p = pinv_psd(d);
  CHECK(p(0, 0) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(p(1, 1) == doctest::Approx(0.0));
  CHECK(p(0, 1) == doctest::Approx(0.0));
}

TEST_CASE("pinv_psd: identity is its own pseudo-inverse") {
  CHECK(rel_err(pinv_psd(Mat::Identity(4, 4)), Mat::Identity(4, 4)) < 1e-14);
}

TEST_CASE("pinv_psd: Penrose conditions on rank-deficient matrices") {
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const Mat a = random_psd(4, 2, rng);
    const Mat p = pinv_psd(a);
    CHECK(rel_err(a * p * a, a) < 1e-8);
    CHECK(rel_err(p * a * p, p) < 1e-8);
    CHECK((a * p - (a * p).transpose()).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((p * a - (p * a).transpose()).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("pinv_psd: double application reconstructs on the range") {
  Rng rng(23);
  for (int trial = 0; trial < 10; ++trial) {
    const Mat a = random_psd(5, 3, rng);
    CHECK(rel_err(pinv_psd(pinv_psd(a)), a) < 1e-8);
  }
}

TEST_CASE("pinv_psd: rejects indefinite input") {
  Mat d = Mat::Zero(2, 2);
  d(0, 0) = 1.0;
  d(1, 1) = -1.0;
  CHECK_THROWS_AS(pinv_psd(d), not_psd_error);
}

TEST_CASE("kron_apply: identity factors act as identity") {
  Rng rng(3);
  Vec v(6);
  for (Index i = 0; i < 6; ++i) v[i] = rng.normal();
  const Vec y = kron_apply(Mat::Identity(3, 3), Mat::Identity(2, 2), v);
  CHECK((y - v).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("kron_apply: scalar left factor scales") {
  Mat a(1, 1);
  a << 2.0;
  Vec v(2);
  v << 1.0, 3.0;
  const Vec y = kron_apply(a, Mat::Identity(2, 2), v);
  CHECK(y[0] == doctest::Approx(2.0));
  CHECK(y[1] == doctest::Approx(6.0));
}

TEST_CASE("kron_apply: matches the dense Kronecker product") {
  Rng rng(101);
  for (int trial = 0; trial < 100; ++trial) {
    const Index m = 1 + Index(rng.uniform_int(6));
    const Index n = 1 + Index(rng.uniform_int(6));
    Mat a(m, m), b(n, n);
    for (Index j = 0; j < a.size(); ++j) a.data()[j] = rng.normal();
    for (Index j = 0; j < b.size(); ++j) b.data()[j] = rng.normal();
    Vec v(m * n);
    for (Index j = 0; j < v.size(); ++j) v[j] = rng.normal();
    const Vec got = kron_apply(a, b, v);
    const Vec want = kron_dense(a, b) * v;
    CHECK((got - want).cwiseAbs().maxCoeff() < 1e-12 * (1.0 + want.norm()));
  }
}

TEST_CASE("kron_dense: hand-checked 2x2 block layout") {
  Mat a(2, 2), b(2, 2);
  a << 1, 2, 3, 4;
  b << 5, 6, 7, 8;
  const Mat k = kron_dense(a, b);
  REQUIRE(k.rows() == 4);
  REQUIRE(k.cols() == 4);
  CHECK(k(0, 0) == doctest::Approx(5.0));   // a00 * b00
  CHECK(k(0, 2) == doctest::Approx(10.0));  // a01 * b00
  CHECK(k(2, 0) == doctest::Approx(15.0));  // a10 * b00
  CHECK(k(3, 3) == doctest::Approx(32.0));  // a11 * b11
}

TEST_CASE("kron_apply: dimension mismatch raises") {
  Vec v(5);
  v.setZero();
  CHECK_THROWS_AS(kron_apply(Mat::Identity(2, 2), Mat::Identity(2, 2), v),
                  dim_error);
}
