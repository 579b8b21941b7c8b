#pragma once

#include "hdsa/error.hpp"

#include <Eigen/Dense>

#include <stdexcept>

namespace hdsa {

// p x d matrix, p = m(n+1), whose column N is
//   (a u_N ; u_N (x) z0) + (b_N u0 ; u0 (x) z_N).
// a, u0, z0 are shared by all columns. Nothing of length p is ever stored.
template <typename Scalar>
struct Kron2Mat {
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  Scalar a = Scalar(0);
  Vec u0;  // m
  Vec z0;  // n
  Vec b;   // d
  Mat U;   // m x d
  Mat Z;   // n x d

  static constexpr Eigen::Index kDenseCap = 10000;

  static Kron2Mat zeros(Eigen::Index m, Eigen::Index n, Eigen::Index d) {
    Kron2Mat k;
    k.u0 = Vec::Zero(m);
    k.z0 = Vec::Zero(n);
    k.b = Vec::Zero(d);
    k.U = Mat::Zero(m, d);
    k.Z = Mat::Zero(n, d);
    return k;
  }

  Eigen::Index m() const { return u0.size(); }
  Eigen::Index n() const { return z0.size(); }
  Eigen::Index cols() const { return b.size(); }
  Eigen::Index p() const { return m() * (n() + 1); }

  void validate() const {
    if (U.rows() != m() || Z.rows() != n() || U.cols() != cols() || Z.cols() != cols()) {
      throw DimensionMismatch("inconsistent Kron2Mat blocks");
    }
  }

  Kron2Mat column(Eigen::Index j) const {
    Kron2Mat c;
    c.a = a;
    c.u0 = u0;
    c.z0 = z0;
    c.b = b.segment(j, 1);
    c.U = U.col(j);
    c.Z = Z.col(j);
    return c;
  }

  Kron2Mat columns(Eigen::Index first, Eigen::Index count) const {
    Kron2Mat c;
    c.a = a;
    c.u0 = u0;
    c.z0 = z0;
    c.b = b.segment(first, count);
    c.U = U.middleCols(first, count);
    c.Z = Z.middleCols(first, count);
    return c;
  }

  // Test-only: the logical p-vector of column j.
  Vec dense_column(Eigen::Index j) const {
    if (p() > kDenseCap) throw std::length_error("refusing to densify a Kron2Mat with p > 1e4");
    const Eigen::Index mm = m(), nn = n();
    Vec out(p());
    out.head(mm) = a * U.col(j) + b(j) * u0;
    for (Eigen::Index i = 0; i < mm; ++i) {
      out.segment(mm + i * nn, nn) = U(i, j) * z0 + u0(i) * Z.col(j);
    }
    return out;
  }

  Mat dense() const {
    Mat out(p(), cols());
    for (Eigen::Index j = 0; j < cols(); ++j) out.col(j) = dense_column(j);
    return out;
  }
};

using Kron2 = Kron2Mat<double>;

// Gram matrix X'Y of the logical p-vectors, from four m-space and four
// n-space inner products.
template <typename Scalar>
typename Kron2Mat<Scalar>::Mat kron2_gram(const Kron2Mat<Scalar>& x, const Kron2Mat<Scalar>& y) {
  if (x.m() != y.m() || x.n() != y.n()) throw DimensionMismatch("kron2_gram: incompatible shapes");
  using Vec = typename Kron2Mat<Scalar>::Vec;
  using Mat = typename Kron2Mat<Scalar>::Mat;
  const Scalar zz = x.z0.dot(y.z0);
  const Scalar uu = x.u0.dot(y.u0);
  const Vec uv = x.U.transpose() * y.u0;  // u_N . u0'
  const Vec vu = y.U.transpose() * x.u0;  // u0 . u_M'
  const Vec left = x.a * y.b + y.Z.transpose() * x.z0;
  const Vec right = y.a * x.b + x.Z.transpose() * y.z0;
  Mat g = (x.a * y.a + zz) * (x.U.transpose() * y.U);
  g.noalias() += uv * left.transpose();
  g.noalias() += right * vu.transpose();
  g.noalias() += uu * (x.b * y.b.transpose() + x.Z.transpose() * y.Z);
  return g;
}

template <typename Scalar>
Scalar kron2_inner(const Kron2Mat<Scalar>& x, const Kron2Mat<Scalar>& y) {
  if (x.cols() != 1 || y.cols() != 1) throw DimensionMismatch("kron2_inner expects single columns");
  return kron2_gram(x, y)(0, 0);
}

// Columns of the result are x * R; the shared blocks are untouched, so the
// rank-2 form is always closed under column combinations.
template <typename Scalar, typename Derived>
Kron2Mat<Scalar> kron2_combine(const Kron2Mat<Scalar>& x, const Eigen::MatrixBase<Derived>& r) {
  if (r.rows() != x.cols()) throw DimensionMismatch("kron2_combine: R has wrong row count");
  Kron2Mat<Scalar> out;
  out.a = x.a;
  out.u0 = x.u0;
  out.z0 = x.z0;
  out.U = x.U * r;
  out.Z = x.Z * r;
  out.b = r.transpose() * x.b;
  return out;
}

}  // namespace hdsa
