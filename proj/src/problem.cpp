#include "hdsa/problem.hpp"

#include "hdsa/error.hpp"

#include <cmath>

namespace hdsa {

Vector default_target(const pde::PdeModel& model) {
  if (model.kind() == pde::ModelKind::cdr2d)
    return model.interpolate_state([](const Eigen::Vector2d& x) {
      return (3 * x.x() * x.x() - 3 * x.x() * x.x() * x.x()) * (2 * x.y() - x.y() * x.y());
    });
  const auto high = pde::PdeModel::create(pde::ModelKind::advdiff1d, model.resolution(), model.nu());
  return high.solve_forward(illustrative_source(high)).state;
}

Vector illustrative_source(const pde::PdeModel& model) {
  return model.interpolate_control(
      [](const Eigen::Vector2d& x) { return std::exp(-50.0 * (x.x() - 0.5) * (x.x() - 0.5)); });
}

std::string_view dirichlet_boundary(pde::ModelKind kind) {
  return kind == pde::ModelKind::cdr2d ? "bottom" : "left";
}

Problem::Problem(const ProblemSpec& spec) : spec_(spec), model_(pde::PdeModel::create(spec.kind, spec.resolution, spec.nu)) {
  objective_ = std::make_unique<optctl::Objective>(model_, default_target(model_), spec.beta1, spec.beta2);
  reduced_ = std::make_unique<optctl::ReducedProblem>(model_, *objective_);
}

const optctl::OptState& Problem::solve() {
  if (!opt_) opt_ = optctl::solve_optimum(*reduced_, Vector::Zero(model_.control_dim()), spec_.optimizer);
  return *opt_;
}

const optctl::OptState& Problem::optimum() const {
  if (!opt_) throw Error("problem has not been solved");
  return *opt_;
}

SensitivityContext& Problem::sensitivity() {
  if (ctx_) return *ctx_;
  const auto& opt = solve();
  weighting_ = build_L(model_.mesh(), spec_.weight_epsilon, spec_.weight_tau, dirichlet_boundary(spec_.kind));
  prior_ = build_prior(model_.control_mass().matrix(), model_.control_stiffness(), opt.z, spec_.prior_alpha,
                       spec_.prior_beta);
  SensitivityContext::Options o;
  o.gradient_tolerance =
      spec_.sensitivity_gradient_tolerance > 0.0 ? spec_.sensitivity_gradient_tolerance : opt.tolerance;
  o.mtheta = spec_.mtheta;
  o.threads = spec_.threads;
  ctx_ = std::make_unique<SensitivityContext>(model_, *objective_, opt.z, weighting_.op(), prior_.precision_op(), o);
  return *ctx_;
}

}  // namespace hdsa
