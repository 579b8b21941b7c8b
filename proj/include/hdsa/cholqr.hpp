#pragma once

#include "hdsa/error.hpp"
#include "hdsa/kron2.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <string>

namespace hdsa {

// Columns in R^n are plain dense matrices; columns in R^p are Kron2Mat.
inline Eigen::MatrixXd block_gram(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) { return x.transpose() * y; }
inline Eigen::MatrixXd block_gram(const Kron2& x, const Kron2& y) { return kron2_gram(x, y); }

inline Eigen::MatrixXd block_combine(const Eigen::MatrixXd& x, const Eigen::MatrixXd& r) { return x * r; }
inline Kron2 block_combine(const Kron2& x, const Eigen::MatrixXd& r) { return kron2_combine(x, r); }

// Upper-triangular R with C = R'R; reports the failing pivot.
inline Eigen::MatrixXd cholesky_upper(const Eigen::MatrixXd& c) {
  const Eigen::Index d = c.rows();
  Eigen::MatrixXd r = Eigen::MatrixXd::Zero(d, d);
  for (Eigen::Index j = 0; j < d; ++j) {
    double s = c(j, j) - r.col(j).head(j).squaredNorm();
    if (!(s > 0.0) || !std::isfinite(s)) {
      throw CholeskyFailure("CholQR: Gram matrix not positive definite at pivot " + std::to_string(j),
                            static_cast<std::size_t>(j), s);
    }
    r(j, j) = std::sqrt(s);
    for (Eigen::Index k = j + 1; k < d; ++k) {
      r(j, k) = (c(j, k) - r.col(j).head(j).dot(r.col(k).head(j))) / r(j, j);
    }
  }
  return r;
}

template <typename Block>
struct CholQrResult {
  Block q;
  Block mq;
  Eigen::MatrixXd r;
};

// Cholesky QR in the M inner product given Y and MY:
// Y = QR, MQ = (MY)R^{-1}, Q'MQ = I.
template <typename Block>
CholQrResult<Block> cholqr(const Block& y, const Block& my) {
  Eigen::MatrixXd c = block_gram(y, my);
  c = 0.5 * (c + c.transpose()).eval();
  CholQrResult<Block> out;
  out.r = cholesky_upper(c);
  const Eigen::MatrixXd rinv =
      out.r.template triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(c.rows(), c.cols()));
  out.q = block_combine(y, rinv);
  out.mq = block_combine(my, rinv);
  return out;
}

}  // namespace hdsa
