#pragma once

#include "hdsa/discrepancy.hpp"
#include "hdsa/gsvd.hpp"
#include "hdsa/optctl.hpp"
#include "hdsa/pde.hpp"

#include <memory>
#include <optional>
#include <string>

namespace hdsa {

// The example problems and the weighting/prior choices of the sensitivity study.
//   cdr2d:               target T = (3x^2 - 3x^3)(2y - y^2)
//   diffusion1d:         target T = S_adv(z*), z* = exp(-50 (x - 0.5)^2), S_adv the advection-diffusion model
//   advdiff1d:           target T = S_adv(z*)
struct ProblemSpec {
  pde::ModelKind kind = pde::ModelKind::cdr2d;
  int resolution = 32;
  double nu = 1.0;
  double beta1 = 1e-6;
  double beta2 = 1e-6;
  // L = eps K + M + tau P'P on the Dirichlet boundary
  double weight_epsilon = 1e-3;
  double weight_tau = 50.0;
  // Gamma^{-1} = alpha^{-2} (beta K_z + M_z)
  double prior_alpha = 1.0;
  double prior_beta = 1e-6;
  optctl::OptimizerOptions optimizer;
  // Absolute gradient bound required before sensitivities; <= 0: use the optimizer tolerance.
  double sensitivity_gradient_tolerance = 0.0;
  int threads = 1;
  MthetaOptions mtheta;
};

Vector default_target(const pde::PdeModel& model);
Vector illustrative_source(const pde::PdeModel& model);
std::string_view dirichlet_boundary(pde::ModelKind kind);

// Owns everything for one problem; not movable because of internal references.
class Problem {
 public:
  explicit Problem(const ProblemSpec& spec);
  Problem(const Problem&) = delete;
  Problem& operator=(const Problem&) = delete;

  const ProblemSpec& spec() const { return spec_; }
  const pde::PdeModel& model() const { return model_; }
  const optctl::Objective& objective() const { return *objective_; }
  const optctl::ReducedProblem& reduced() const { return *reduced_; }

  // Newton-CG from zero; throws NonConvergence / NonPositiveCurvature.
  const optctl::OptState& solve();
  bool solved() const { return opt_.has_value(); }
  const optctl::OptState& optimum() const;

  // L, prior (mean zbar) and the sensitivity context; solves first if needed.
  SensitivityContext& sensitivity();
  const WeightingL& weighting() const { return weighting_; }
  const GaussianPrior& prior() const { return prior_; }

 private:
  ProblemSpec spec_;
  pde::PdeModel model_;
  std::unique_ptr<optctl::Objective> objective_;
  std::unique_ptr<optctl::ReducedProblem> reduced_;
  std::optional<optctl::OptState> opt_;
  WeightingL weighting_;
  GaussianPrior prior_;
  std::unique_ptr<SensitivityContext> ctx_;
};

}  // namespace hdsa
