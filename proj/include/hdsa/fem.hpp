#pragma once

#include "hdsa/sparse_operator.hpp"

#include <Eigen/Dense>

#include <array>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace hdsa::fem {

enum class BoundaryTag { interior, left, right, bottom, top };

std::string_view to_string(BoundaryTag tag);

// Linear (P1) mesh on the unit interval or a structured triangulation of the
// unit square. 1D nodes keep a zero second coordinate.
struct Mesh {
  int dimension = 1;
  int cells_per_side = 0;
  Eigen::MatrixX2d nodes;                                      // one row per node
  Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic> elements;  // one row per element, dimension+1 nodes
  std::vector<BoundaryTag> tags;                              // one per node

  Index num_nodes() const { return nodes.rows(); }
  Index num_elements() const { return elements.rows(); }
  void validate() const;
};

// Uniform mesh of (0,1) with `elements` cells. Node 0 is tagged left.
Mesh interval_mesh(int elements);

// (N+1)^2 nodes, node id i + j(N+1) at (i/N, j/N); two triangles per cell.
// Corner nodes belong to bottom/top; left/right hold the remaining side nodes.
Mesh unit_square_mesh(int cells_per_side);

using VelocityField = std::function<Eigen::Vector2d(const Eigen::Vector2d&)>;

SparseOperator assemble_mass(const Mesh& mesh);
// coefficient * \int grad(phi_i) . grad(phi_j); throws on a negative coefficient.
SparseOperator assemble_stiffness(const Mesh& mesh, double coefficient = 1.0);
// \int (v . grad(phi_j)) phi_i
SparseOperator assemble_advection(const Mesh& mesh, const VelocityField& velocity);

// Quadrature over P1 fields. `fields` are nodal vectors; the integrand
// receives their interpolated values at each quadrature point.
using PointFunction = std::function<double(std::span<const double>)>;

// \int f(fields) phi_i
Vector integrate_load(const Mesh& mesh, std::span<const Vector* const> fields, const PointFunction& f);
// \int f(fields) phi_i phi_j
SparseMatrix assemble_field_mass(const Mesh& mesh, std::span<const Vector* const> fields, const PointFunction& f);

struct QuadratureRule {
  std::vector<std::array<double, 3>> barycentric;  // 1D rules use the first two entries
  std::vector<double> weights;                     // sum to 1 (scaled by element measure)
};

// Gauss-Legendre, 3 points (exact to degree 5).
const QuadratureRule& interval_rule();
// Symmetric 6-point triangle rule (exact to degree 4).
const QuadratureRule& triangle_rule();

class BoundaryProjector {
 public:
  BoundaryProjector(std::vector<Index> indices, Index source_dim);

  const std::vector<Index>& indices() const { return indices_; }
  Index source_dim() const { return source_dim_; }
  Index size() const { return static_cast<Index>(indices_.size()); }

  Vector apply(const Eigen::Ref<const Vector>& x) const;
  Vector apply_transpose(const Eigen::Ref<const Vector>& y) const;
  SparseMatrix matrix() const;

 private:
  std::vector<Index> indices_;
  Index source_dim_;
};

// Throws std::invalid_argument for tags that do not exist in the mesh.
BoundaryProjector boundary_projector(const Mesh& mesh, std::string_view tag);
std::vector<Index> tagged_nodes(const Mesh& mesh, BoundaryTag tag);

// Rows listed are cleared and replaced by unit rows.
void replace_rows_with_identity(SparseMatrix& a, std::span<const Index> rows);

// Principal submatrix a(rows, cols) for sorted index lists.
SparseMatrix submatrix(const SparseMatrix& a, std::span<const Index> rows, std::span<const Index> cols);

}  // namespace hdsa::fem
