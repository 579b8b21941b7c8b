#include "hdsa/pde.hpp"

#include "hdsa/error.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace hdsa::pde {

namespace {

constexpr int kMaxNewton = 50;
constexpr double kNewtonTol = 1e-10;

}  // namespace

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::diffusion1d: return "diffusion1d";
    case ModelKind::advdiff1d: return "advdiff1d";
    case ModelKind::cdr2d: return "cdr2d";
  }
  return "unknown";
}

ModelKind parse_model(std::string_view name) {
  for (auto k : {ModelKind::diffusion1d, ModelKind::advdiff1d, ModelKind::cdr2d}) {
    if (to_string(k) == name) return k;
  }
  throw std::invalid_argument("unknown model '" + std::string(name) + "'");
}

PdeModel PdeModel::create(ModelKind kind, int resolution, double nu) {
  if (nu <= 0.0) throw std::invalid_argument("diffusion coefficient must be positive");
  PdeModel p;
  p.kind_ = kind;
  p.nu_ = nu;
  p.reaction_ = kind == ModelKind::cdr2d;

  fem::VelocityField velocity;
  if (kind == ModelKind::cdr2d) {
    p.mesh_ = fem::unit_square_mesh(resolution);
    p.dirichlet_ = fem::tagged_nodes(p.mesh_, fem::BoundaryTag::bottom);
    velocity = [](const Eigen::Vector2d& x) {
      const double c = std::cos(2.0 * std::numbers::pi * x.y());
      return Eigen::Vector2d(std::cos(2.0 * std::numbers::pi * x.x()), 1.0 + c * c);
    };
  } else {
    p.mesh_ = fem::interval_mesh(resolution);
    p.dirichlet_ = fem::tagged_nodes(p.mesh_, fem::BoundaryTag::left);
    const double v = kind == ModelKind::advdiff1d ? 1.0 : 0.0;
    velocity = [v](const Eigen::Vector2d&) { return Eigen::Vector2d(v, 0.0); };
  }

  const Index m = p.mesh_.num_nodes();
  p.is_dirichlet_.assign(m, 0);
  for (Index i : p.dirichlet_) p.is_dirichlet_[i] = 1;
  for (Index i = 0; i < m; ++i) {
    if (kind == ModelKind::cdr2d || !p.is_dirichlet_[i]) p.control_nodes_.push_back(i);
  }

  p.mass_ = fem::assemble_mass(p.mesh_);
  p.stiffness_ = fem::assemble_stiffness(p.mesh_, 1.0);
  p.advection_ = fem::assemble_advection(p.mesh_, velocity);

  std::vector<Index> all(m);
  for (Index i = 0; i < m; ++i) all[i] = i;
  p.control_mass_ = SparseOperator(fem::submatrix(p.mass_.matrix(), p.control_nodes_, p.control_nodes_), "M_z");
  p.control_mass_.factorize(Factorization::cholesky);
  p.control_stiffness_ = fem::submatrix(p.stiffness_.matrix(), p.control_nodes_, p.control_nodes_);
  p.coupling_ = fem::submatrix(p.mass_.matrix(), all, p.control_nodes_);

  p.linear_part_ = nu * p.stiffness_.matrix() + p.advection_.matrix();
  p.jac_control_ = -p.coupling_;
  p.jac_control_.prune([&](Index row, Index, double) { return !p.is_dirichlet_[row]; });
  p.jac_control_.makeCompressed();
  return p;
}

Eigen::MatrixX2d PdeModel::control_coordinates() const {
  Eigen::MatrixX2d x(control_dim(), 2);
  for (Index k = 0; k < control_dim(); ++k) x.row(k) = mesh_.nodes.row(control_nodes_[k]);
  return x;
}

void PdeModel::check_state(const Vector& u) const { require_size(u.size(), state_dim(), "state vector"); }
void PdeModel::check_control(const Vector& z) const { require_size(z.size(), control_dim(), "control vector"); }

Vector PdeModel::residual(const Vector& u, const Vector& z) const {
  check_state(u);
  check_control(z);
  Vector r = linear_part_ * u + jac_control_ * z;
  if (reaction_) {
    const std::array<const Vector*, 1> fields{&u};
    r -= fem::integrate_load(mesh_, fields, [](std::span<const double> s) { return s[0] * s[0] * s[0] + s[0]; });
  }
  for (Index i : dirichlet_) r(i) = u(i);
  return r;
}

SparseMatrix PdeModel::jacobian_state_matrix(const Vector& u) const {
  check_state(u);
  SparseMatrix j = linear_part_;
  if (reaction_) {
    const std::array<const Vector*, 1> fields{&u};
    j -= fem::assemble_field_mass(mesh_, fields, [](std::span<const double> s) { return 3.0 * s[0] * s[0] + 1.0; });
  }
  fem::replace_rows_with_identity(j, dirichlet_);
  return j;
}

SparseOperator PdeModel::jacobian_state(const Vector& u, const Vector& z) const {
  check_control(z);
  return SparseOperator(jacobian_state_matrix(u), "dc/du");
}

SparseOperator PdeModel::jacobian_control(const Vector& u, const Vector& z) const {
  check_state(u);
  check_control(z);
  return SparseOperator(jac_control_, "dc/dz");
}

Vector PdeModel::second_order(const Vector& u, const Vector& lambda, const Vector& du) const {
  check_state(u);
  check_state(lambda);
  check_state(du);
  if (!reaction_) return Vector::Zero(state_dim());
  Vector lam = lambda;
  for (Index i : dirichlet_) lam(i) = 0.0;
  const std::array<const Vector*, 3> fields{&u, &du, &lam};
  return -fem::integrate_load(mesh_, fields, [](std::span<const double> s) { return 6.0 * s[0] * s[1] * s[2]; });
}

ForwardSolveResult PdeModel::solve_forward(const Vector& z, const Vector* initial) const {
  check_control(z);
  if (!z.allFinite()) throw std::invalid_argument("control has non-finite entries");
  ForwardSolveResult out;
  out.state = initial ? *initial : Vector::Zero(state_dim());
  check_state(out.state);
  for (Index i : dirichlet_) out.state(i) = 0.0;

  const double tol = kNewtonTol * std::max(1.0, residual(Vector::Zero(state_dim()), z).norm());
  Vector r = residual(out.state, z);
  double norm = r.norm();
  do {
    SparseOperator j(jacobian_state_matrix(out.state), "dc/du");
    j.factorize(Factorization::lu);
    const Vector step = j.solve(-r);
    double t = 1.0;
    Vector trial;
    Vector r_trial;
    for (;;) {
      trial = out.state + t * step;
      for (Index i : dirichlet_) trial(i) = 0.0;
      r_trial = residual(trial, z);
      if (r_trial.norm() <= (1.0 - 1e-4 * t) * norm || t < 1e-4 || is_linear()) break;
      t *= 0.5;
    }
    out.state = std::move(trial);
    r = std::move(r_trial);
    norm = r.norm();
    out.trace.push_back(norm);
    ++out.iterations;
    if (!std::isfinite(norm)) break;
  } while (norm > tol && out.iterations < kMaxNewton);

  out.residual_norm = norm;
  if (!(norm <= tol)) {
    throw NonConvergence("Newton solve for " + name() + " did not converge", out.trace);
  }
  return out;
}

Linearization::Linearization(const PdeModel& model, Vector u, Vector z, SolveCounters* counters)
    : model_(&model),
      u_(std::move(u)),
      z_(std::move(z)),
      ju_(model.jacobian_state(u_, z_)),
      jz_(model.jacobian_control(u_, z_)),
      counters_(counters) {
  ju_.factorize(Factorization::lu);
}

Vector Linearization::solve_state(const Vector& b) const {
  if (counters_) counters_->state_jacobian_solve.fetch_add(1, std::memory_order_relaxed);
  return ju_.solve(b);
}

Vector Linearization::solve_state_transpose(const Vector& b) const {
  if (counters_) counters_->state_jacobian_t_solve.fetch_add(1, std::memory_order_relaxed);
  return ju_.solve_transpose(b);
}

Vector Linearization::apply_solution_jacobian(const Vector& v) const {
  if (counters_) counters_->solution_jacobian_apply.fetch_add(1, std::memory_order_relaxed);
  return -solve_state(jz_.apply(v));
}

Vector Linearization::apply_solution_jacobian_transpose(const Vector& w) const {
  if (counters_) counters_->solution_jacobian_t_apply.fetch_add(1, std::memory_order_relaxed);
  return -jz_.apply_transpose(solve_state_transpose(w));
}

}  // namespace hdsa::pde
