#pragma once

#include "hdsa/cholqr.hpp"
#include "hdsa/counters.hpp"
#include "hdsa/discrepancy.hpp"
#include "hdsa/kron2.hpp"
#include "hdsa/optctl.hpp"

#include <cstdint>
#include <memory>
#include <vector>

namespace hdsa {

struct GsvdConfig {
  int k = 5;            // target rank
  int oversampling = 5;  // l
  int q = 1;            // subspace iterations
  std::uint64_t seed = 0;
  int threads = 1;
  // d = min(k + l, n): more sketch columns than controls are rank deficient.
  Index sketch_size(Index n) const { return std::min<Index>(k + oversampling, n); }
  void validate(Index n) const;
};

struct GsvdResult {
  Vector sigma;       // d values, descending
  Matrix w;           // n x d; -H^{-1} B theta_N = sigma_N w_N
  Kron2 theta;        // p x d right vectors, M_theta-orthonormal
  int k = 0;          // requested rank (leading columns)
  Index d = 0;
  int q = 0;
  double left_orthonormality = 0.0;   // max |W'M_zW - I|
  double right_orthonormality = 0.0;  // max |Theta'M_theta Theta - I|
  CounterSnapshot counters;           // initialization + randomized GSVD
  CounterSnapshot init_counters;      // initialization row only
};

// Everything the sensitivity operator -H^{-1}B needs at an optimum zbar. The
// state Jacobian is factorized once; all counted work goes into counters().
class SensitivityContext {
 public:
  struct Options {
    double gradient_tolerance = 1e-6;  // absolute bound on ||grad J(zbar)||
    MthetaOptions mtheta;
    int threads = 1;
  };

  SensitivityContext(const pde::PdeModel& model, const optctl::Objective& objective, const Vector& zbar,
                     SpdOperator l, SpdOperator gamma_inv, const Options& options);
  SensitivityContext(const pde::PdeModel& model, const optctl::Objective& objective, const Vector& zbar,
                     SpdOperator l, SpdOperator gamma_inv)
      : SensitivityContext(model, objective, zbar, std::move(l), std::move(gamma_inv), Options{}) {}

  const pde::PdeModel& model() const { return *model_; }
  const optctl::Objective& objective() const { return *objective_; }
  const optctl::ReducedPoint& point() const { return *point_; }
  const MthetaOperator& mtheta() const { return *mtheta_; }
  const Vector& zbar() const { return point_->control(); }
  const Vector& ubar() const { return point_->state(); }
  const Vector& state_gradient() const { return grad_u_; }  // dJ/du' at (ubar, zbar)
  double gradient_norm() const { return point_->gradient().norm(); }
  SolveCounters& counters() const { return *counters_; }
  const CounterSnapshot& init_counters() const { return init_counters_; }
  int threads() const { return threads_; }
  void set_threads(int threads);

  Index m() const { return model_->state_dim(); }
  Index n() const { return model_->control_dim(); }

  // Counted single applications.
  Vector state_hessian(const Vector& v) const;
  Vector mz_apply(const Vector& v) const { return mtheta_->mz_apply(v); }

  Matrix b_apply(const Kron2& y) const;         // n x d
  Kron2 bt_apply(const Vector& v) const;        // one column
  Kron2 bt_apply(const Matrix& v) const;        // d columns
  Matrix hess_inv(const Matrix& v) const;       // column-parallel CG
  Matrix mz_apply_block(const Matrix& v) const;
  Matrix sample_b_omega(Index d, std::uint64_t seed) const;

  // Uncounted dense-free helpers for diagnostics.
  Vector mz_apply_uncounted(const Vector& v) const { return model_->control_mass().matrix() * v; }

 private:
  const pde::PdeModel* model_;
  const optctl::Objective* objective_;
  std::unique_ptr<SolveCounters> counters_;
  std::unique_ptr<optctl::ReducedProblem> problem_;
  std::unique_ptr<optctl::ReducedPoint> point_;
  std::unique_ptr<MthetaOperator> mtheta_;
  Vector grad_u_;
  CounterSnapshot init_counters_;
  int threads_ = 1;
};

// Correlated Gaussian pair of the structured sampler for B Omega:
// a = M_z zbar, b = dJ/du', a_hat = a/|a|, g ~ N(0, I_m), h ~ N(0, I_n),
//   w_u = |a| g,  w_z = a_hat (b'g) + |b| (I - a_hat a_hat') h.
struct OmegaPair {
  Vector u0;  // N(0, I_m)
  Vector u;
  Vector z;
};
OmegaPair sample_omega_pair(const Vector& mz_zbar, const Vector& grad_u, std::uint64_t seed, Index column);

GsvdResult randomized_gsvd(const SensitivityContext& ctx, const GsvdConfig& cfg);

// Cost-model totals implied by a run with the given per-call CG counts.
struct ExpectedCounts {
  std::uint64_t mz_apply, mz_solve, gamma_inv_apply, l_solve, state_hessian_apply;
  std::uint64_t solution_jacobian_apply, solution_jacobian_t_apply, hess_inv_apply;
  std::uint64_t state_jacobian_solve, state_jacobian_t_solve;
  double cost_state_solve;  // (q+1)d(1+2 L_CG) at the mean L_CG
  double cost_state_t_solve;
};
ExpectedCounts expected_counts(int q, Index d, const std::vector<std::uint32_t>& cg_per_call);

// delta(z) = scale * delta(z, theta) for one Kron2 column; affine in z.
class ThetaDiscrepancy final : public optctl::AffineMap {
 public:
  ThetaDiscrepancy(const SparseMatrix& mz, Kron2 theta, double scale);
  Index state_dim() const override { return theta_.m(); }
  Index control_dim() const override { return theta_.n(); }
  Vector value(const Vector& z) const override;
  Vector apply_linear(const Vector& v) const override;
  Vector apply_linear_transpose(const Vector& w) const override;

 private:
  const SparseMatrix* mz_;
  Kron2 theta_;
  double scale_;
  Vector mz_z0_, mz_z1_;
};

// First-order shift of the optimum for an explicit discrepancy d:
//   dz = -H^{-1} (dS/dz' d2J/du2 d(zbar) + (dd/dz)' dJ/du').
Vector apply_sensitivity_to_discrepancy(const SensitivityContext& ctx, const optctl::AffineMap& d);

}  // namespace hdsa
