#include "hdsa/fem.hpp"

#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

#include <array>
#include <cmath>
#include <numbers>

using namespace hdsa;
using namespace hdsa::fem;

TEST(Mass, TwoElementIntervalMatchesHandIntegration) {
  const auto m = assemble_mass(interval_mesh(2)).matrix().toDense();
  Eigen::Matrix3d expect;
  expect << 1.0 / 6, 1.0 / 12, 0, 1.0 / 12, 1.0 / 3, 1.0 / 12, 0, 1.0 / 12, 1.0 / 6;
  EXPECT_LT((m - expect).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Mass, RowSumsIntegrateBasisAndTotalIsMeasure) {
  for (const auto& mesh : {interval_mesh(7), unit_square_mesh(5)}) {
    const auto m = assemble_mass(mesh).matrix();
    const Vector ones = Vector::Ones(mesh.num_nodes());
    EXPECT_NEAR(ones.dot(m * ones), 1.0, 1e-14);
    // interior hat functions in 1D integrate to h
    if (mesh.dimension == 1) EXPECT_NEAR((m * ones)(3), 1.0 / 7, 1e-15);
  }
}

TEST(Mass, SquareGridIsSymmetricPositiveDefinite) {
  const auto m = assemble_mass(unit_square_mesh(10)).matrix().toDense();
  EXPECT_EQ((m - m.transpose()).cwiseAbs().maxCoeff(), 0.0);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(m);
  EXPECT_GT(eig.eigenvalues().minCoeff(), 0.0);
}

TEST(Mass, BilinearFormMatchesQuadratureOfProduct) {
  const auto mesh = unit_square_mesh(4);
  const auto m = assemble_mass(mesh).matrix();
  const Vector a = Vector::Random(mesh.num_nodes()), b = Vector::Random(mesh.num_nodes());
  const std::array<const Vector*, 2> fields{&a, &b};
  const Vector one = Vector::Ones(mesh.num_nodes());
  const double quad = one.dot(integrate_load(mesh, fields, [](std::span<const double> s) { return s[0] * s[1]; }));
  EXPECT_NEAR(a.dot(m * b), quad, 1e-14);
}

TEST(Stiffness, TwoElementIntervalMatchesHandIntegration) {
  const auto k = assemble_stiffness(interval_mesh(2), 1.0).matrix().toDense();
  Eigen::Matrix3d expect;
  expect << 2, -2, 0, -2, 4, -2, 0, -2, 2;
  EXPECT_LT((k - expect).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Stiffness, AnnihilatesConstantsAndIsSymmetric) {
  for (const auto& mesh : {interval_mesh(9), unit_square_mesh(6)}) {
    const auto k = assemble_stiffness(mesh, 2.5).matrix();
    EXPECT_LT((k * Vector::Ones(mesh.num_nodes())).cwiseAbs().maxCoeff(), 1e-12);
    const Matrix kd = k.toDense();
    EXPECT_EQ((kd - kd.transpose()).cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(Stiffness, ZeroCoefficientGivesZeroOperator) {
  EXPECT_EQ(assemble_stiffness(unit_square_mesh(3), 0.0).matrix().norm(), 0.0);
}

TEST(Stiffness, NegativeCoefficientRejected) {
  EXPECT_THROW(assemble_stiffness(interval_mesh(3), -1.0), std::invalid_argument);
}

TEST(Advection, ZeroVelocityGivesZeroOperator) {
  const auto c = assemble_advection(unit_square_mesh(4), [](const Eigen::Vector2d&) { return Eigen::Vector2d::Zero(); });
  EXPECT_EQ(c.matrix().norm(), 0.0);
}

TEST(Advection, UnitVelocityOnTwoElements) {
  const auto c = assemble_advection(interval_mesh(2), [](const Eigen::Vector2d&) { return Eigen::Vector2d(1, 0); });
  Eigen::Matrix3d expect;
  expect << -0.5, 0.5, 0, -0.5, 0, 0.5, 0, -0.5, 0.5;
  EXPECT_LT((c.matrix().toDense() - expect).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Advection, ReferenceVelocityOnFineGrid) {
  const auto mesh = unit_square_mesh(100);
  const auto c = assemble_advection(mesh, [](const Eigen::Vector2d& x) {
    const double s = std::cos(2 * std::numbers::pi * x.y());
    return Eigen::Vector2d(std::cos(2 * std::numbers::pi * x.x()), 1 + s * s);
  });
  EXPECT_EQ(c.rows(), 101 * 101);
  EXPECT_TRUE(c.matrix().toDense().allFinite());
  // C applied to a constant is zero
  EXPECT_LT((c.matrix() * Vector::Ones(c.cols())).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Boundary, BottomEdgeOfSquareGrid) {
  const auto mesh = unit_square_mesh(6);
  const auto p = boundary_projector(mesh, "bottom");
  ASSERT_EQ(p.size(), 7);
  for (Index i : p.indices()) EXPECT_EQ(mesh.nodes(i, 1), 0.0);
}

TEST(Boundary, LeftEndOfInterval) {
  const auto p = boundary_projector(interval_mesh(4), "left");
  ASSERT_EQ(p.size(), 1);
  EXPECT_EQ(p.indices()[0], 0);
}

TEST(Boundary, ProjectorAlgebra) {
  const auto mesh = unit_square_mesh(4);
  const auto p = boundary_projector(mesh, "top");
  const Vector x = Vector::Random(mesh.num_nodes());
  const Vector y = p.apply_transpose(p.apply(x));
  for (Index i = 0; i < mesh.num_nodes(); ++i) {
    EXPECT_EQ(y(i), mesh.tags[i] == BoundaryTag::top ? x(i) : 0.0);
  }
  const Matrix pm = p.matrix().toDense();
  EXPECT_EQ((pm.transpose() * pm * x - y).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Boundary, UnknownTagRejected) {
  EXPECT_THROW(boundary_projector(interval_mesh(4), "bottom"), std::invalid_argument);
  EXPECT_THROW(boundary_projector(unit_square_mesh(2), "north"), std::invalid_argument);
}

TEST(Mesh, EveryBoundaryNodeHasOneTag) {
  const auto mesh = unit_square_mesh(5);
  int boundary = 0;
  for (auto t : mesh.tags) boundary += t != BoundaryTag::interior;
  EXPECT_EQ(boundary, 4 * 5);
  EXPECT_NO_THROW(mesh.validate());
}

TEST(Quadrature, TriangleRuleIntegratesDegreeFour) {
  const auto& rule = triangle_rule();
  double w = 0, q4 = 0;
  for (std::size_t i = 0; i < rule.weights.size(); ++i) {
    w += rule.weights[i];
    q4 += rule.weights[i] * std::pow(rule.barycentric[i][0], 4);
  }
  EXPECT_NEAR(w, 1.0, 1e-12);
  // average of lambda^4 over a triangle: 2! 4! / 6! = 1/15
  EXPECT_NEAR(q4, 2.0 * 24.0 / 720.0, 1e-12);
}

TEST(Counters, ApplyAndSolveCountersIncrementByOne) {
  auto m = assemble_mass(interval_mesh(5));
  m.factorize(Factorization::cholesky);
  const Vector x = Vector::Ones(m.rows());
  m.apply(x);
  m.apply_transpose(x);
  m.solve(x);
  EXPECT_EQ(m.apply_count(), 2u);
  EXPECT_EQ(m.solve_count(), 1u);
}
