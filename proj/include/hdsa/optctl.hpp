#pragma once

#include "hdsa/counters.hpp"
#include "hdsa/pde.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

namespace hdsa::optctl {

// J(u, z) = 1/2 (u - T)' M_u (u - T) + 1/2 z' (beta1 M_z + beta2 K_z) z
class Objective {
 public:
  Objective(const pde::PdeModel& model, Vector target, double beta1, double beta2);

  const Vector& target() const { return target_; }
  double beta1() const { return beta1_; }
  double beta2() const { return beta2_; }
  const SparseMatrix& regularization() const { return reg_; }
  const SparseMatrix& state_mass() const { return *mass_; }

  double value(const Vector& u, const Vector& z) const;
  double misfit(const Vector& u) const;
  Vector state_gradient(const Vector& u) const;         // M_u (u - T)
  Vector state_hessian_apply(const Vector& v) const;    // M_u v
  Vector control_gradient(const Vector& z) const;       // R z
  Vector control_hessian_apply(const Vector& v) const;  // R v

 private:
  Vector target_;
  double beta1_, beta2_;
  const SparseMatrix* mass_;
  SparseMatrix reg_;
};

// z -> delta(z) = value(z), affine with linear part D. Added to the state
// inside the objective: J(S(z) + delta(z), z).
class AffineMap {
 public:
  virtual ~AffineMap() = default;
  virtual Index state_dim() const = 0;
  virtual Index control_dim() const = 0;
  virtual Vector value(const Vector& z) const = 0;
  virtual Vector apply_linear(const Vector& v) const = 0;            // D v
  virtual Vector apply_linear_transpose(const Vector& w) const = 0;  // D' w
};

// delta(z) = scale * (S_hi(z) - S_lo(z)) for two linear models on one mesh.
class ModelDifference final : public AffineMap {
 public:
  ModelDifference(const pde::PdeModel& high, const pde::PdeModel& low, double scale = 1.0);
  Index state_dim() const override { return high_->state_dim(); }
  Index control_dim() const override { return high_->control_dim(); }
  Vector value(const Vector& z) const override;
  Vector apply_linear(const Vector& v) const override;
  Vector apply_linear_transpose(const Vector& w) const override;

 private:
  const pde::PdeModel* high_;
  const pde::PdeModel* low_;
  double scale_;
  std::unique_ptr<pde::Linearization> hi_lin_, lo_lin_;
};

struct CgReport {
  int iterations = 0;
  double relative_residual = 0.0;
};

struct CgOptions {
  double relative_tolerance = 1e-10;
  int max_iterations = 0;  // 0: 10 * dimension
  // Return the smallest-residual iterate instead of throwing when the
  // iteration limit is hit.
  bool accept_partial = false;
};

class ReducedProblem;

// Reduced problem linearized at one control: forward state, adjoint and
// gradient are computed on construction (one adjoint solve).
class ReducedPoint {
 public:
  const Vector& control() const { return z_; }
  const Vector& state() const { return u_; }
  const Vector& adjoint() const { return lambda_; }
  const Vector& gradient() const { return gradient_; }
  double value() const { return value_; }
  const pde::Linearization& linearization() const { return *lin_; }
  const ReducedProblem& problem() const { return *problem_; }

  // Full Newton Hessian action; one dc/du and one dc/du' solve.
  Vector hessvec(const Vector& v) const;
  // Unpreconditioned CG; throws NonPositiveCurvature or NonConvergence.
  Vector hess_inv_apply(const Vector& v, CgReport* report = nullptr, const CgOptions& options = {}) const;

 private:
  friend class ReducedProblem;
  ReducedPoint() = default;

  const ReducedProblem* problem_ = nullptr;
  Vector z_, u_, lambda_, gradient_, residual_;
  double value_ = 0.0;
  std::unique_ptr<pde::Linearization> lin_;
};

class ReducedProblem {
 public:
  ReducedProblem(const pde::PdeModel& model, const Objective& objective, const AffineMap* discrepancy = nullptr,
                 SolveCounters* counters = nullptr);

  const pde::PdeModel& model() const { return *model_; }
  const Objective& objective() const { return *objective_; }
  const AffineMap* discrepancy() const { return delta_; }
  SolveCounters* counters() const { return counters_; }

  double value(const Vector& z) const;
  std::unique_ptr<ReducedPoint> at(const Vector& z, const Vector* state_guess = nullptr) const;
  Vector gradient(const Vector& z) const { return at(z)->gradient(); }

 private:
  const pde::PdeModel* model_;
  const Objective* objective_;
  const AffineMap* delta_;
  SolveCounters* counters_;
};

struct NewtonLogEntry {
  int iteration = 0;
  double objective = 0.0;
  double gradient_norm = 0.0;
  double step_length = 0.0;
  int cg_iterations = 0;
};

struct OptimizerOptions {
  double gradient_tolerance = 1e-8;  // relative to max(1, ||g(z0)||)
  double refine_tolerance = 1e-14;   // extra Newton steps aim here; stop on stagnation
  double newton_cg_tolerance = 1e-14;  // relative CG residual for Newton directions
  int max_iterations = 50;
  int max_refinement_steps = 3;
  int rayleigh_samples = 10;
  std::uint64_t seed = 7;
};

struct OptState {
  Vector z;
  Vector u;
  double objective = 0.0;
  double gradient_norm = 0.0;     // Euclidean, assembled coordinates
  double gradient_norm_mz = 0.0;  // (g' M_z^{-1} g)^{1/2}
  double initial_gradient_norm = 0.0;
  double tolerance = 0.0;
  int iterations = 0;  // Newton steps to meet the tolerance
  int refinement_steps = 0;
  double min_rayleigh_quotient = 0.0;  // min over samples of v'Hv / v'M_z v
  std::vector<NewtonLogEntry> log;
};

// Newton-CG with Armijo backtracking on the reduced objective.
OptState solve_optimum(const ReducedProblem& problem, const Vector& z0, const OptimizerOptions& options = {});

}  // namespace hdsa::optctl
