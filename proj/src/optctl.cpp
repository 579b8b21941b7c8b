#include "hdsa/optctl.hpp"

#include "hdsa/error.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

namespace hdsa::optctl {

Objective::Objective(const pde::PdeModel& model, Vector target, double beta1, double beta2)
    : target_(std::move(target)), beta1_(beta1), beta2_(beta2), mass_(&model.state_mass().matrix()) {
  require_size(target_.size(), model.state_dim(), "objective target");
  if (beta1 < 0.0 || beta2 < 0.0) throw std::invalid_argument("regularization coefficients must be nonnegative");
  reg_ = beta1 * model.control_mass().matrix() + beta2 * model.control_stiffness();
}

double Objective::misfit(const Vector& u) const {
  const Vector r = u - target_;
  return 0.5 * r.dot(*mass_ * r);
}

double Objective::value(const Vector& u, const Vector& z) const { return misfit(u) + 0.5 * z.dot(reg_ * z); }

Vector Objective::state_gradient(const Vector& u) const { return *mass_ * (u - target_); }
Vector Objective::state_hessian_apply(const Vector& v) const { return *mass_ * v; }
Vector Objective::control_gradient(const Vector& z) const { return reg_ * z; }
Vector Objective::control_hessian_apply(const Vector& v) const { return reg_ * v; }

ModelDifference::ModelDifference(const pde::PdeModel& high, const pde::PdeModel& low, double scale)
    : high_(&high), low_(&low), scale_(scale) {
  if (!high.is_linear() || !low.is_linear()) throw std::invalid_argument("model difference needs linear models");
  if (high.state_dim() != low.state_dim() || high.control_dim() != low.control_dim()) {
    throw DimensionMismatch("model difference needs models on the same mesh");
  }
  const Vector u0 = Vector::Zero(high.state_dim());
  const Vector z0 = Vector::Zero(high.control_dim());
  hi_lin_ = std::make_unique<pde::Linearization>(high, u0, z0);
  lo_lin_ = std::make_unique<pde::Linearization>(low, u0, z0);
}

Vector ModelDifference::value(const Vector& z) const { return apply_linear(z); }

Vector ModelDifference::apply_linear(const Vector& v) const {
  return scale_ * (hi_lin_->apply_solution_jacobian(v) - lo_lin_->apply_solution_jacobian(v));
}

Vector ModelDifference::apply_linear_transpose(const Vector& w) const {
  return scale_ * (hi_lin_->apply_solution_jacobian_transpose(w) - lo_lin_->apply_solution_jacobian_transpose(w));
}

ReducedProblem::ReducedProblem(const pde::PdeModel& model, const Objective& objective, const AffineMap* discrepancy,
                               SolveCounters* counters)
    : model_(&model), objective_(&objective), delta_(discrepancy), counters_(counters) {
  if (delta_) {
    require_size(delta_->state_dim(), model.state_dim(), "discrepancy state dimension");
    require_size(delta_->control_dim(), model.control_dim(), "discrepancy control dimension");
  }
}

double ReducedProblem::value(const Vector& z) const {
  Vector u = model_->solve_forward(z).state;
  if (delta_) u += delta_->value(z);
  return objective_->value(u, z);
}

std::unique_ptr<ReducedPoint> ReducedProblem::at(const Vector& z, const Vector* state_guess) const {
  std::unique_ptr<ReducedPoint> p(new ReducedPoint());
  p->problem_ = this;
  p->z_ = z;
  p->u_ = model_->solve_forward(z, state_guess).state;
  p->lin_ = std::make_unique<pde::Linearization>(*model_, p->u_, z, counters_);
  Vector u = p->u_;
  if (delta_) u += delta_->value(z);
  p->value_ = objective_->value(u, z);
  const Vector mr = objective_->state_gradient(u);
  p->lambda_ = -p->lin_->solve_state_transpose(mr);
  p->gradient_ = p->lin_->jacobian_control().apply_transpose(p->lambda_) + objective_->control_gradient(z);
  if (delta_) p->gradient_ += delta_->apply_linear_transpose(mr);
  return p;
}

Vector ReducedPoint::hessvec(const Vector& v) const {
  const auto& obj = problem_->objective();
  const auto* delta = problem_->discrepancy();
  require_size(v.size(), z_.size(), "hessvec direction");
  if (auto* c = problem_->counters()) c->hessvec.fetch_add(1, std::memory_order_relaxed);
  const Vector du = -lin_->solve_state(lin_->jacobian_control().apply(v));
  Vector dr = du;
  if (delta) dr += delta->apply_linear(v);
  const Vector mdr = obj.state_hessian_apply(dr);
  const Vector dlambda = -lin_->solve_state_transpose(mdr + problem_->model().second_order(u_, lambda_, du));
  Vector hv = lin_->jacobian_control().apply_transpose(dlambda) + obj.control_hessian_apply(v);
  if (delta) hv += delta->apply_linear_transpose(mdr);
  return hv;
}

Vector ReducedPoint::hess_inv_apply(const Vector& b, CgReport* report, const CgOptions& options) const {
  require_size(b.size(), z_.size(), "hess_inv_apply rhs");
  const int max_it = options.max_iterations > 0 ? options.max_iterations : static_cast<int>(10 * b.size());
  Vector x = Vector::Zero(b.size());
  Vector best = x;
  double best_rel = 1.0;
  const double bnorm = b.norm();
  int it = 0;
  double rel = 0.0;
  std::vector<double> trace;
  if (bnorm > 0.0) {
    Vector r = b;
    Vector p = r;
    double rr = r.squaredNorm();
    for (;;) {
      if (it >= max_it) {
        if (options.accept_partial) {
          x = best;
          rel = best_rel;
          break;
        }
        if (auto* c = problem_->counters()) c->record_cg_call(static_cast<std::uint32_t>(it));
        throw NonConvergence("CG on the reduced Hessian did not converge", trace);
      }
      const Vector ap = hessvec(p);
      ++it;
      const double pap = p.dot(ap);
      if (!(pap > 0.0)) {
        if (auto* c = problem_->counters()) c->record_cg_call(static_cast<std::uint32_t>(it));
        throw NonPositiveCurvature("reduced Hessian is not positive definite", pap);
      }
      const double alpha = rr / pap;
      x += alpha * p;
      r -= alpha * ap;
      const double rr_new = r.squaredNorm();
      rel = std::sqrt(rr_new) / bnorm;
      trace.push_back(rel);
      if (rel <= options.relative_tolerance) break;
      if (options.accept_partial && rel < best_rel) {
        best = x;
        best_rel = rel;
      }
      p = r + (rr_new / rr) * p;
      rr = rr_new;
    }
  }
  if (auto* c = problem_->counters()) c->record_cg_call(static_cast<std::uint32_t>(it));
  if (report) {
    report->iterations = it;
    report->relative_residual = rel;
  }
  return x;
}

namespace {

double mz_norm_of_gradient(const pde::PdeModel& model, const Vector& g) {
  return std::sqrt(std::max(0.0, g.dot(model.control_mass().solve(g))));
}

}  // namespace

OptState solve_optimum(const ReducedProblem& problem, const Vector& z0, const OptimizerOptions& options) {
  const auto& model = problem.model();
  require_size(z0.size(), model.control_dim(), "initial control");
  if (!z0.allFinite()) throw std::invalid_argument("initial control has non-finite entries");

  OptState st;
  auto pt = problem.at(z0);
  st.initial_gradient_norm = pt->gradient().norm();
  st.tolerance = options.gradient_tolerance * std::max(1.0, st.initial_gradient_norm);
  std::vector<double> trace{st.initial_gradient_norm};
  st.log.push_back({0, pt->value(), st.initial_gradient_norm, 0.0, 0});

  auto newton_direction = [&](const ReducedPoint& p, int& cg_its) {
    CgReport rep;
    Vector d;
    CgOptions cg;
    cg.relative_tolerance = options.newton_cg_tolerance;
    cg.max_iterations = static_cast<int>(10 * p.gradient().size());
    cg.accept_partial = true;
    try {
      d = p.hess_inv_apply(-p.gradient(), &rep, cg);
    } catch (const NonPositiveCurvature&) {
      d = -p.gradient();
    }
    cg_its = rep.iterations;
    return d;
  };

  while (pt->gradient().norm() > st.tolerance) {
    if (st.iterations >= options.max_iterations) {
      throw NonConvergence("Newton-CG did not reach the gradient tolerance", trace);
    }
    int cg_its = 0;
    const Vector dir = newton_direction(*pt, cg_its);
    const double f0 = pt->value();
    const double slope = pt->gradient().dot(dir);
    double t = 1.0;
    for (;;) {
      const double f = problem.value(pt->control() + t * dir);
      if (f <= f0 + 1e-4 * t * slope + 1e-14 * std::abs(f0)) break;
      t *= 0.5;
      if (t < 1e-10) throw NonConvergence("line search failed in Newton-CG", trace);
    }
    const Vector guess = pt->state();
    pt = problem.at(pt->control() + t * dir, &guess);
    ++st.iterations;
    trace.push_back(pt->gradient().norm());
    st.log.push_back({st.iterations, pt->value(), trace.back(), t, cg_its});
  }

  // A few undamped Newton steps beyond the tolerance; kept only while they
  // reduce the gradient by at least a factor of ten.
  const double refine_target = options.refine_tolerance * std::max(1.0, st.initial_gradient_norm);
  while (st.refinement_steps < options.max_refinement_steps && pt->gradient().norm() > refine_target) {
    int cg_its = 0;
    const Vector dir = newton_direction(*pt, cg_its);
    const Vector guess = pt->state();
    auto next = problem.at(pt->control() + dir, &guess);
    const double before = pt->gradient().norm(), after = next->gradient().norm();
    if (!(after < before)) break;
    pt = std::move(next);
    ++st.refinement_steps;
    st.log.push_back({st.iterations + st.refinement_steps, pt->value(), after, 1.0, cg_its});
    if (after > 0.1 * before) break;
  }

  st.z = pt->control();
  st.u = pt->state();
  st.objective = pt->value();
  st.gradient_norm = pt->gradient().norm();
  st.gradient_norm_mz = mz_norm_of_gradient(model, pt->gradient());

  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> normal;
  st.min_rayleigh_quotient = std::numeric_limits<double>::infinity();
  for (int s = 0; s < options.rayleigh_samples; ++s) {
    Vector v(st.z.size());
    for (auto& x : v) x = normal(rng);
    const double q = v.dot(pt->hessvec(v)) / v.dot(model.control_mass().apply(v));
    st.min_rayleigh_quotient = std::min(st.min_rayleigh_quotient, q);
  }
  return st;
}

}  // namespace hdsa::optctl
