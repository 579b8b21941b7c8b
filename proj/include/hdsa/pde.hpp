#pragma once

#include "hdsa/counters.hpp"
#include "hdsa/fem.hpp"
#include "hdsa/sparse_operator.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace hdsa::pde {

enum class ModelKind { diffusion1d, advdiff1d, cdr2d };

std::string_view to_string(ModelKind kind);
// Throws std::invalid_argument on unknown names.
ModelKind parse_model(std::string_view name);

struct ForwardSolveResult {
  Vector state;
  int iterations = 0;
  double residual_norm = 0.0;
  std::vector<double> trace;  // residual norm after each Newton step
};

// Galerkin P1 discretization of
//   -nu u'' + v u' = z + R(u)
// with u = 0 on the Dirichlet set and natural conditions elsewhere.
//   diffusion1d: v = 0, R = 0, Dirichlet at x = 0
//   advdiff1d:   v = 1, R = 0, Dirichlet at x = 0
//   cdr2d:       v = (cos 2 pi x1, 1 + cos^2 2 pi x2), R(u) = u^3 + u, Dirichlet on x2 = 0
// 1D controls live on the non-Dirichlet nodes; cdr2d controls on every node.
class PdeModel {
 public:
  static PdeModel create(ModelKind kind, int resolution, double nu = 1.0);

  ModelKind kind() const { return kind_; }
  std::string name() const { return std::string(to_string(kind_)); }
  const fem::Mesh& mesh() const { return mesh_; }
  int resolution() const { return mesh_.cells_per_side; }
  double nu() const { return nu_; }
  bool is_linear() const { return !reaction_; }

  Index state_dim() const { return mesh_.num_nodes(); }
  Index control_dim() const { return static_cast<Index>(control_nodes_.size()); }
  const std::vector<Index>& dirichlet_nodes() const { return dirichlet_; }
  const std::vector<Index>& control_nodes() const { return control_nodes_; }
  Eigen::MatrixX2d control_coordinates() const;

  // M_u on the state space; M_z and the control stiffness restricted to control nodes.
  const SparseOperator& state_mass() const { return mass_; }
  const SparseOperator& control_mass() const { return control_mass_; }
  const SparseMatrix& control_stiffness() const { return control_stiffness_; }
  const SparseMatrix& diffusion() const { return stiffness_.matrix(); }
  const SparseMatrix& advection() const { return advection_.matrix(); }
  // Source coupling M_uz (m x n), before Dirichlet rows are cleared.
  const SparseMatrix& control_coupling() const { return coupling_; }

  Vector residual(const Vector& u, const Vector& z) const;
  SparseMatrix jacobian_state_matrix(const Vector& u) const;
  SparseOperator jacobian_state(const Vector& u, const Vector& z) const;
  SparseOperator jacobian_control(const Vector& u, const Vector& z) const;
  // sum_i lambda_i d^2 c_i / du^2 applied to du. Dirichlet rows are linear and
  // drop out, so lambda is read on free nodes only.
  Vector second_order(const Vector& u, const Vector& lambda, const Vector& du) const;

  // Newton with backtracking on ||residual||_2.
  // Tolerance 1e-10 * max(1, ||residual(0, z)||), at most 50 iterations.
  ForwardSolveResult solve_forward(const Vector& z, const Vector* initial = nullptr) const;

  // Nodal interpolant of f at the control nodes.
  template <typename F>
  Vector interpolate_control(F&& f) const {
    Vector z(control_dim());
    for (Index k = 0; k < control_dim(); ++k) z(k) = f(mesh_.nodes.row(control_nodes_[k]).transpose().eval());
    return z;
  }
  template <typename F>
  Vector interpolate_state(F&& f) const {
    Vector u(state_dim());
    for (Index i = 0; i < state_dim(); ++i) u(i) = f(mesh_.nodes.row(i).transpose().eval());
    return u;
  }

 private:
  PdeModel() = default;
  void check_state(const Vector& u) const;
  void check_control(const Vector& z) const;

  ModelKind kind_ = ModelKind::diffusion1d;
  double nu_ = 1.0;
  bool reaction_ = false;
  fem::Mesh mesh_;
  std::vector<Index> dirichlet_;
  std::vector<char> is_dirichlet_;
  std::vector<Index> control_nodes_;
  SparseOperator mass_;
  SparseOperator stiffness_;
  SparseOperator advection_;
  SparseOperator control_mass_;
  SparseMatrix control_stiffness_;
  SparseMatrix coupling_;
  SparseMatrix linear_part_;  // nu K + C
  SparseMatrix jac_control_;  // -M_uz with Dirichlet rows cleared
};

// PDE Jacobians at a fixed (u, z), factorized once. Every solve is tallied in
// `counters` (if given); the solution-Jacobian products additionally count as
// applications of dS/dz or dS/dz^T.
class Linearization {
 public:
  Linearization(const PdeModel& model, Vector u, Vector z, SolveCounters* counters = nullptr);

  const PdeModel& model() const { return *model_; }
  const Vector& state() const { return u_; }
  const Vector& control() const { return z_; }
  const SparseOperator& jacobian_state() const { return ju_; }
  const SparseOperator& jacobian_control() const { return jz_; }
  SolveCounters* counters() const { return counters_; }

  Vector solve_state(const Vector& b) const;            // (dc/du)^{-1} b
  Vector solve_state_transpose(const Vector& b) const;  // (dc/du)^{-T} b

  // dS/dz v = -(dc/du)^{-1} (dc/dz) v
  Vector apply_solution_jacobian(const Vector& v) const;
  // dS/dz^T w = -(dc/dz)^T (dc/du)^{-T} w
  Vector apply_solution_jacobian_transpose(const Vector& w) const;

 private:
  const PdeModel* model_;
  Vector u_;
  Vector z_;
  SparseOperator ju_;
  SparseOperator jz_;
  SolveCounters* counters_;
};

}  // namespace hdsa::pde
