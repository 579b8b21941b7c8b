#include "hdsa/fem.hpp"

#include "hdsa/error.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace hdsa::fem {

namespace {

using Triplets = std::vector<Eigen::Triplet<double>>;

SparseMatrix from_triplets(Index n, const Triplets& t) {
  SparseMatrix a(n, n);
  a.setFromTriplets(t.begin(), t.end());
  a.makeCompressed();
  return a;
}

// Element geometry for P1: measure and constant basis gradients (rows).
struct ElementGeometry {
  double measure = 0.0;
  Eigen::Matrix<double, 3, 2> grad = Eigen::Matrix<double, 3, 2>::Zero();
  int nodes = 2;
};

ElementGeometry geometry(const Mesh& mesh, Index e) {
  ElementGeometry g;
  if (mesh.dimension == 1) {
    const double x0 = mesh.nodes(mesh.elements(e, 0), 0);
    const double x1 = mesh.nodes(mesh.elements(e, 1), 0);
    const double h = x1 - x0;
    g.measure = std::abs(h);
    g.grad(0, 0) = -1.0 / h;
    g.grad(1, 0) = 1.0 / h;
    g.nodes = 2;
    return g;
  }
  const Eigen::Vector2d p0 = mesh.nodes.row(mesh.elements(e, 0)).transpose();
  const Eigen::Vector2d p1 = mesh.nodes.row(mesh.elements(e, 1)).transpose();
  const Eigen::Vector2d p2 = mesh.nodes.row(mesh.elements(e, 2)).transpose();
  const double det = (p1 - p0).x() * (p2 - p0).y() - (p2 - p0).x() * (p1 - p0).y();
  g.measure = 0.5 * std::abs(det);
  // grad(phi_i) = rot90(opposite edge) / det
  g.grad.row(0) << (p1.y() - p2.y()) / det, (p2.x() - p1.x()) / det;
  g.grad.row(1) << (p2.y() - p0.y()) / det, (p0.x() - p2.x()) / det;
  g.grad.row(2) << (p0.y() - p1.y()) / det, (p1.x() - p0.x()) / det;
  g.nodes = 3;
  return g;
}

const QuadratureRule& rule_for(const Mesh& mesh) {
  return mesh.dimension == 1 ? interval_rule() : triangle_rule();
}

Eigen::Vector2d quadrature_point(const Mesh& mesh, Index e, const std::array<double, 3>& lambda, int nodes) {
  Eigen::Vector2d x = Eigen::Vector2d::Zero();
  for (int a = 0; a < nodes; ++a) x += lambda[a] * mesh.nodes.row(mesh.elements(e, a)).transpose();
  return x;
}

void interpolate(const Mesh& mesh, Index e, const std::array<double, 3>& lambda, int nodes,
                 std::span<const Vector* const> fields, std::vector<double>& out) {
  out.assign(fields.size(), 0.0);
  for (std::size_t f = 0; f < fields.size(); ++f) {
    for (int a = 0; a < nodes; ++a) out[f] += lambda[a] * (*fields[f])(mesh.elements(e, a));
  }
}

void check_fields(const Mesh& mesh, std::span<const Vector* const> fields) {
  for (const auto* f : fields) require_size(f->size(), mesh.num_nodes(), "fem field");
}

}  // namespace

std::string_view to_string(BoundaryTag tag) {
  switch (tag) {
    case BoundaryTag::interior: return "interior";
    case BoundaryTag::left: return "left";
    case BoundaryTag::right: return "right";
    case BoundaryTag::bottom: return "bottom";
    case BoundaryTag::top: return "top";
  }
  return "unknown";
}

void Mesh::validate() const {
  if (dimension != 1 && dimension != 2) throw std::invalid_argument("mesh dimension must be 1 or 2");
  if (num_nodes() < 2) throw std::invalid_argument("mesh needs at least two nodes");
  if (elements.cols() != dimension + 1) throw std::invalid_argument("element arity does not match dimension");
  if (static_cast<Index>(tags.size()) != num_nodes()) throw std::invalid_argument("one boundary tag per node required");
  if (elements.size() > 0 && (elements.minCoeff() < 0 || elements.maxCoeff() >= num_nodes())) {
    throw std::invalid_argument("element references a missing node");
  }
}

Mesh interval_mesh(int elements) {
  if (elements < 1) throw std::invalid_argument("interval mesh needs at least one element");
  Mesh mesh;
  mesh.dimension = 1;
  mesh.cells_per_side = elements;
  mesh.nodes = Eigen::MatrixX2d::Zero(elements + 1, 2);
  for (int i = 0; i <= elements; ++i) mesh.nodes(i, 0) = static_cast<double>(i) / elements;
  mesh.elements.resize(elements, 2);
  for (int e = 0; e < elements; ++e) mesh.elements.row(e) << e, e + 1;
  mesh.tags.assign(elements + 1, BoundaryTag::interior);
  mesh.tags.front() = BoundaryTag::left;
  mesh.tags.back() = BoundaryTag::right;
  return mesh;
}

Mesh unit_square_mesh(int n) {
  if (n < 1) throw std::invalid_argument("square mesh needs at least one cell per side");
  Mesh mesh;
  mesh.dimension = 2;
  mesh.cells_per_side = n;
  const int side = n + 1;
  mesh.nodes.resize(side * side, 2);
  mesh.tags.assign(side * side, BoundaryTag::interior);
  for (int j = 0; j < side; ++j) {
    for (int i = 0; i < side; ++i) {
      const int id = i + j * side;
      mesh.nodes(id, 0) = static_cast<double>(i) / n;
      mesh.nodes(id, 1) = static_cast<double>(j) / n;
      if (j == 0) {
        mesh.tags[id] = BoundaryTag::bottom;
      } else if (j == n) {
        mesh.tags[id] = BoundaryTag::top;
      } else if (i == 0) {
        mesh.tags[id] = BoundaryTag::left;
      } else if (i == n) {
        mesh.tags[id] = BoundaryTag::right;
      }
    }
  }
  mesh.elements.resize(2 * n * n, 3);
  int e = 0;
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      const int n00 = i + j * side, n10 = n00 + 1, n01 = n00 + side, n11 = n01 + 1;
      mesh.elements.row(e++) << n00, n10, n11;
      mesh.elements.row(e++) << n00, n11, n01;
    }
  }
  return mesh;
}

const QuadratureRule& interval_rule() {
  static const QuadratureRule rule = [] {
    const double s = 0.5 * std::sqrt(0.6);
    QuadratureRule r;
    for (double xi : {0.5 - s, 0.5, 0.5 + s}) r.barycentric.push_back({1.0 - xi, xi, 0.0});
    r.weights = {5.0 / 18.0, 4.0 / 9.0, 5.0 / 18.0};
    return r;
  }();
  return rule;
}

const QuadratureRule& triangle_rule() {
  static const QuadratureRule rule = [] {
    QuadratureRule r;
    const double a = 0.445948490915965, wa = 0.223381589678011;
    const double b = 0.091576213509771, wb = 0.109951743655322;
    for (auto [p, w] : {std::pair{a, wa}, std::pair{b, wb}}) {
      const double q = 1.0 - 2.0 * p;
      r.barycentric.push_back({p, p, q});
      r.barycentric.push_back({p, q, p});
      r.barycentric.push_back({q, p, p});
      r.weights.insert(r.weights.end(), 3, w);
    }
    return r;
  }();
  return rule;
}

SparseOperator assemble_mass(const Mesh& mesh) {
  mesh.validate();
  Triplets t;
  for (Index e = 0; e < mesh.num_elements(); ++e) {
    const auto g = geometry(mesh, e);
    // exact P1 mass: measure/((dim+1)(dim+2)) * (1 + delta_ab)
    const double scale = g.measure / ((g.nodes) * (g.nodes + 1));
    for (int a = 0; a < g.nodes; ++a) {
      for (int b = 0; b < g.nodes; ++b) {
        t.emplace_back(mesh.elements(e, a), mesh.elements(e, b), scale * (a == b ? 2.0 : 1.0));
      }
    }
  }
  return SparseOperator(from_triplets(mesh.num_nodes(), t), "mass");
}

SparseOperator assemble_stiffness(const Mesh& mesh, double coefficient) {
  if (coefficient < 0.0) throw std::invalid_argument("stiffness coefficient must be nonnegative");
  mesh.validate();
  Triplets t;
  for (Index e = 0; e < mesh.num_elements(); ++e) {
    const auto g = geometry(mesh, e);
    for (int a = 0; a < g.nodes; ++a) {
      for (int b = 0; b < g.nodes; ++b) {
        t.emplace_back(mesh.elements(e, a), mesh.elements(e, b),
                       coefficient * g.measure * g.grad.row(a).dot(g.grad.row(b)));
      }
    }
  }
  auto k = from_triplets(mesh.num_nodes(), t);
  k.prune(0.0);
  return SparseOperator(std::move(k), "stiffness");
}

SparseOperator assemble_advection(const Mesh& mesh, const VelocityField& velocity) {
  mesh.validate();
  const auto& rule = rule_for(mesh);
  Triplets t;
  for (Index e = 0; e < mesh.num_elements(); ++e) {
    const auto g = geometry(mesh, e);
    for (std::size_t q = 0; q < rule.weights.size(); ++q) {
      const auto& lambda = rule.barycentric[q];
      Eigen::Vector2d v = velocity(quadrature_point(mesh, e, lambda, g.nodes));
      if (mesh.dimension == 1) v.y() = 0.0;
      const double w = rule.weights[q] * g.measure;
      for (int a = 0; a < g.nodes; ++a) {
        for (int b = 0; b < g.nodes; ++b) {
          t.emplace_back(mesh.elements(e, a), mesh.elements(e, b), w * lambda[a] * g.grad.row(b).dot(v));
        }
      }
    }
  }
  auto c = from_triplets(mesh.num_nodes(), t);
  c.prune(0.0);
  return SparseOperator(std::move(c), "advection");
}

Vector integrate_load(const Mesh& mesh, std::span<const Vector* const> fields, const PointFunction& f) {
  check_fields(mesh, fields);
  const auto& rule = rule_for(mesh);
  Vector load = Vector::Zero(mesh.num_nodes());
  std::vector<double> values;
  for (Index e = 0; e < mesh.num_elements(); ++e) {
    const auto g = geometry(mesh, e);
    for (std::size_t q = 0; q < rule.weights.size(); ++q) {
      const auto& lambda = rule.barycentric[q];
      interpolate(mesh, e, lambda, g.nodes, fields, values);
      const double w = rule.weights[q] * g.measure * f(values);
      for (int a = 0; a < g.nodes; ++a) load(mesh.elements(e, a)) += w * lambda[a];
    }
  }
  return load;
}

SparseMatrix assemble_field_mass(const Mesh& mesh, std::span<const Vector* const> fields, const PointFunction& f) {
  check_fields(mesh, fields);
  const auto& rule = rule_for(mesh);
  Triplets t;
  std::vector<double> values;
  for (Index e = 0; e < mesh.num_elements(); ++e) {
    const auto g = geometry(mesh, e);
    Eigen::Matrix3d local = Eigen::Matrix3d::Zero();
    for (std::size_t q = 0; q < rule.weights.size(); ++q) {
      const auto& lambda = rule.barycentric[q];
      interpolate(mesh, e, lambda, g.nodes, fields, values);
      const double w = rule.weights[q] * g.measure * f(values);
      for (int a = 0; a < g.nodes; ++a)
        for (int b = 0; b < g.nodes; ++b) local(a, b) += w * lambda[a] * lambda[b];
    }
    for (int a = 0; a < g.nodes; ++a)
      for (int b = 0; b < g.nodes; ++b) t.emplace_back(mesh.elements(e, a), mesh.elements(e, b), local(a, b));
  }
  return from_triplets(mesh.num_nodes(), t);
}

BoundaryProjector::BoundaryProjector(std::vector<Index> indices, Index source_dim)
    : indices_(std::move(indices)), source_dim_(source_dim) {
  auto sorted = indices_;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw std::invalid_argument("projector indices must be distinct");
  }
  for (Index i : indices_) {
    if (i < 0 || i >= source_dim_) throw std::invalid_argument("projector index out of range");
  }
}

Vector BoundaryProjector::apply(const Eigen::Ref<const Vector>& x) const {
  require_size(x.size(), source_dim_, "BoundaryProjector::apply");
  Vector y(size());
  for (Index k = 0; k < size(); ++k) y(k) = x(indices_[k]);
  return y;
}

Vector BoundaryProjector::apply_transpose(const Eigen::Ref<const Vector>& y) const {
  require_size(y.size(), size(), "BoundaryProjector::apply_transpose");
  Vector x = Vector::Zero(source_dim_);
  for (Index k = 0; k < size(); ++k) x(indices_[k]) = y(k);
  return x;
}

SparseMatrix BoundaryProjector::matrix() const {
  SparseMatrix p(size(), source_dim_);
  Triplets t;
  for (Index k = 0; k < size(); ++k) t.emplace_back(k, indices_[k], 1.0);
  p.setFromTriplets(t.begin(), t.end());
  return p;
}

std::vector<Index> tagged_nodes(const Mesh& mesh, BoundaryTag tag) {
  std::vector<Index> out;
  for (Index i = 0; i < mesh.num_nodes(); ++i)
    if (mesh.tags[i] == tag) out.push_back(i);
  return out;
}

BoundaryProjector boundary_projector(const Mesh& mesh, std::string_view tag) {
  for (auto t : {BoundaryTag::left, BoundaryTag::right, BoundaryTag::bottom, BoundaryTag::top}) {
    if (to_string(t) != tag) continue;
    auto nodes = tagged_nodes(mesh, t);
    if (nodes.empty()) break;
    return BoundaryProjector(std::move(nodes), mesh.num_nodes());
  }
  throw std::invalid_argument("mesh has no boundary tagged '" + std::string(tag) + "'");
}

void replace_rows_with_identity(SparseMatrix& a, std::span<const Index> rows) {
  std::vector<char> hit(a.rows(), 0);
  for (Index r : rows) hit[r] = 1;
  a.prune([&](Index row, Index, double) { return !hit[row]; });
  for (Index r : rows) a.coeffRef(r, r) = 1.0;
  a.makeCompressed();
}

SparseMatrix submatrix(const SparseMatrix& a, std::span<const Index> rows, std::span<const Index> cols) {
  std::vector<Index> row_map(a.rows(), -1), col_map(a.cols(), -1);
  for (std::size_t k = 0; k < rows.size(); ++k) row_map[rows[k]] = static_cast<Index>(k);
  for (std::size_t k = 0; k < cols.size(); ++k) col_map[cols[k]] = static_cast<Index>(k);
  Triplets t;
  for (Index j = 0; j < a.outerSize(); ++j) {
    for (SparseMatrix::InnerIterator it(a, j); it; ++it) {
      const Index r = row_map[it.row()], c = col_map[it.col()];
      if (r >= 0 && c >= 0) t.emplace_back(r, c, it.value());
    }
  }
  SparseMatrix s(static_cast<Index>(rows.size()), static_cast<Index>(cols.size()));
  s.setFromTriplets(t.begin(), t.end());
  return s;
}

}  // namespace hdsa::fem
