#pragma once

#include "hdsa/counters.hpp"
#include "hdsa/fem.hpp"
#include "hdsa/kron2.hpp"
#include "hdsa/sparse_operator.hpp"

#include <functional>
#include <memory>
#include <string_view>

namespace hdsa {

// Symmetric positive definite operator given by its action and inverse action.
struct SpdOperator {
  Index dim = 0;
  std::function<Vector(const Vector&)> apply;
  std::function<Vector(const Vector&)> solve;
};

// Factorizes (Cholesky) if needed; the operator is shared with the closures.
SpdOperator spd_from_sparse(std::shared_ptr<SparseOperator> op);
SpdOperator spd_from_dense(const Matrix& a);

// L = eps K + M + tau P'P on the state space.
struct WeightingL {
  double epsilon = 0.0;
  double tau = 0.0;
  std::shared_ptr<SparseOperator> matrix;
  SpdOperator op() const { return spd_from_sparse(matrix); }
};

WeightingL build_L(const fem::Mesh& mesh, double epsilon, double tau, std::string_view boundary);

// Gaussian on the control coordinates with precision
// Gamma^{-1} = alpha^{-2} (beta K_z + M_z).
struct GaussianPrior {
  double alpha = 1.0;
  double beta = 0.0;
  Vector mean;
  std::shared_ptr<SparseOperator> precision;
  // apply: Gamma^{-1} v (matvec); solve: Gamma v (one solve)
  SpdOperator precision_op() const { return spd_from_sparse(precision); }
};

GaussianPrior build_prior(const SparseMatrix& control_mass, const SparseMatrix& control_stiffness, Vector mean,
                          double alpha, double beta);

// delta(z, theta) = (a + z'M_z z0) u + (b + z'M_z z_theta) u0 for every column
// of theta, given mz_z = M_z z. Returns m x d.
Matrix delta_eval(const Vector& mz_z, const Kron2& theta);
Vector delta_eval_column(const Vector& mz_z, const Kron2& theta, Index column);

// delta(z, sum_N c_N theta_N) written around the nominal control:
//   (a + zbar'M_z z0) U c + (c'b + zbar'M_z Z c) u0
//   + (z - zbar)'M_z z0 U c + (z - zbar)'M_z Z c u0
Vector delta_combo(const Vector& mz_z, const Vector& mz_zbar, const Vector& c, const Kron2& modes);

// M_theta = [L, L (x) zbar'M_z ; L (x) M_z zbar, L (x) E], E = M_z (Gamma + zbar zbar') M_z,
// and its closed-form inverse
//   (1 + beta) [L^{-1}, -L^{-1} (x) x' ; -L^{-1} (x) x, L^{-1} (x) N],
// beta = zbar'Gamma^{-1} zbar, x = M_z^{-1}(Gamma^{-1} - G) zbar,
// N = M_z^{-1} Gamma^{-1} M_z^{-1} / (1 + beta), G = Gamma^{-1} zbar zbar' Gamma^{-1} / (1 + beta).
//
// Construction costs one M_z apply, one Gamma^{-1} apply and one M_z solve
// (plus one L solve per call to cache_state_shared).
struct MthetaOptions {
  bool flip_x_sign = false;  // fault injection for the verification suite
};

class MthetaOperator {
 public:
  using Options = MthetaOptions;

  MthetaOperator(SpdOperator l, SpdOperator mz, SpdOperator gamma_inv, Vector zbar, SolveCounters* counters = nullptr,
                 Options options = {});

  Index m() const { return l_.dim; }
  Index n() const { return mz_.dim; }
  const Vector& zbar() const { return zbar_; }
  double beta_hat() const { return beta_hat_; }
  const Vector& x() const { return x_; }
  const Vector& mz_zbar() const { return mz_zbar_; }
  const Vector& gamma_inv_zbar() const { return g_; }

  // Column-parallel block applications; results do not depend on the count.
  void set_threads(int threads) { threads_ = threads; }

  // Precompute L^{-1} u0 for the shared state vector used by B' outputs.
  void cache_state_shared(const Vector& u0);

  Kron2 apply(const Kron2& theta) const;
  Kron2 apply_inverse(const Kron2& theta) const;

  Vector apply_n(const Vector& v) const;  // N v
  Vector apply_e(const Vector& v) const;  // E v (one Gamma solve)

  // Counted building blocks.
  Vector mz_apply(const Vector& v) const;
  Vector mz_solve(const Vector& v) const;
  Vector gamma_inv_apply(const Vector& v) const;
  Vector gamma_solve(const Vector& v) const;
  Vector l_apply(const Vector& v) const;
  Vector l_solve(const Vector& v) const;

 private:
  Vector l_solve_shared(const Vector& u0) const;

  SpdOperator l_, mz_, gamma_inv_;
  Vector zbar_;
  SolveCounters* counters_;
  Options options_;
  Vector mz_zbar_, g_, x_;
  double beta_hat_ = 0.0;
  int threads_ = 1;
  Vector cached_u0_, cached_linv_u0_;
};

}  // namespace hdsa
