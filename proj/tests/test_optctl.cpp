#include "hdsa/optctl.hpp"

#include "hdsa/error.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace hdsa;
using hdsa::pde::ModelKind;
using hdsa::pde::PdeModel;
using namespace hdsa::optctl;

namespace {

Vector random_vector(Index n, unsigned seed) {
  std::srand(seed);
  return Vector::Random(n);
}

Vector cdr_target(const PdeModel& model) {
  return model.interpolate_state([](const Eigen::Vector2d& x) {
    return (3 * x.x() * x.x() - 3 * x.x() * x.x() * x.x()) * (2 * x.y() - x.y() * x.y());
  });
}

struct Fixture {
  PdeModel model;
  Objective objective;
  Fixture(ModelKind kind, int res, double beta1, double beta2)
      : model(PdeModel::create(kind, res)),
        objective(model,
                  kind == ModelKind::cdr2d ? cdr_target(model)
                                           : model.interpolate_state([](const Eigen::Vector2d& x) {
                                               return std::sin(std::numbers::pi * x.x() / 2);
                                             }),
                  beta1, beta2) {}
};

}  // namespace

TEST(Objective, ZeroAtTarget) {
  Fixture s(ModelKind::cdr2d, 4, 1e-6, 1e-6);
  const Vector& t = s.objective.target();
  EXPECT_EQ(s.objective.state_gradient(t).norm(), 0.0);
  EXPECT_EQ(s.objective.misfit(t), 0.0);
}

TEST(Objective, StateHessianIsMass) {
  Fixture s(ModelKind::cdr2d, 4, 1e-6, 1e-6);
  const Vector ones = Vector::Ones(s.model.state_dim());
  const Vector row_sums = s.model.state_mass().matrix() * ones;
  EXPECT_EQ((s.objective.state_hessian_apply(ones) - row_sums).norm(), 0.0);
}

TEST(ReducedGradient, CentralDifferencesAllModels) {
  for (auto kind : {ModelKind::diffusion1d, ModelKind::advdiff1d, ModelKind::cdr2d}) {
    Fixture s(kind, 8, 1e-3, 1e-4);
    ReducedProblem prob(s.model, s.objective);
    const Vector z = 0.5 * random_vector(s.model.control_dim(), 1);
    const Vector g = prob.gradient(z);
    for (unsigned k = 0; k < 3; ++k) {
      const Vector v = random_vector(s.model.control_dim(), 10 + k);
      const double eps = 1e-5;
      const double fd = (prob.value(z + eps * v) - prob.value(z - eps * v)) / (2 * eps);
      EXPECT_LT(std::abs(fd - g.dot(v)) / std::abs(g.dot(v)), 1e-5) << s.model.name();
    }
  }
}

TEST(ReducedGradient, ZeroMisfitZeroGradient) {
  const auto model = PdeModel::create(ModelKind::cdr2d, 6);
  const Vector z = 0.3 * random_vector(model.control_dim(), 2);
  Objective obj(model, model.solve_forward(z).state, 0.0, 0.0);
  ReducedProblem prob(model, obj);
  EXPECT_LT(prob.gradient(z).norm(), 1e-12);
}

TEST(ReducedGradient, OneTransposeSolve) {
  Fixture s(ModelKind::cdr2d, 6, 1e-6, 1e-6);
  SolveCounters c;
  ReducedProblem prob(s.model, s.objective, nullptr, &c);
  prob.gradient(Vector::Zero(s.model.control_dim()));
  EXPECT_EQ(c.snapshot().state_jacobian_t_solve, 1u);
  EXPECT_EQ(c.snapshot().state_jacobian_solve, 0u);
}

TEST(Hessvec, MatchesGradientDifferencesAllModels) {
  for (auto kind : {ModelKind::diffusion1d, ModelKind::advdiff1d, ModelKind::cdr2d}) {
    Fixture s(kind, 8, 1e-3, 1e-4);
    ReducedProblem prob(s.model, s.objective);
    const Vector z = 0.5 * random_vector(s.model.control_dim(), 3);
    const auto pt = prob.at(z);
    const Vector v = random_vector(s.model.control_dim(), 4);
    const double eps = 1e-4;
    const Vector fd = (prob.gradient(z + eps * v) - prob.gradient(z - eps * v)) / (2 * eps);
    const Vector hv = pt->hessvec(v);
    EXPECT_LT((fd - hv).norm() / hv.norm(), 1e-4) << s.model.name();
  }
}

TEST(Hessvec, SymmetricAndLinear) {
  for (auto kind : {ModelKind::diffusion1d, ModelKind::advdiff1d, ModelKind::cdr2d}) {
    Fixture s(kind, 8, 1e-3, 1e-4);
    ReducedProblem prob(s.model, s.objective);
    const auto pt = prob.at(0.5 * random_vector(s.model.control_dim(), 5));
    const Vector v = random_vector(s.model.control_dim(), 6), w = random_vector(s.model.control_dim(), 7);
    const Vector hv = pt->hessvec(v), hw = pt->hessvec(w);
    EXPECT_LE(std::abs(w.dot(hv) - v.dot(hw)), 1e-10 * std::max(1.0, std::abs(w.dot(hv)))) << s.model.name();
    const Vector lin = pt->hessvec(2.0 * v - 3.0 * w) - (2.0 * hv - 3.0 * hw);
    EXPECT_LE(lin.norm(), 1e-10 * std::max(1.0, hv.norm()));
    EXPECT_EQ(pt->hessvec(Vector::Zero(v.size())).norm(), 0.0);
  }
}

TEST(Hessvec, OneSolveEachWay) {
  Fixture s(ModelKind::cdr2d, 6, 1e-6, 1e-6);
  SolveCounters c;
  ReducedProblem prob(s.model, s.objective, nullptr, &c);
  const auto pt = prob.at(Vector::Zero(s.model.control_dim()));
  const auto before = c.snapshot();
  pt->hessvec(Vector::Ones(s.model.control_dim()));
  const auto d = c.snapshot() - before;
  EXPECT_EQ(d.state_jacobian_solve, 1u);
  EXPECT_EQ(d.state_jacobian_t_solve, 1u);
  EXPECT_EQ(d.hessvec, 1u);
}

TEST(HessInv, InverseConsistencyAndCounters) {
  Fixture s(ModelKind::cdr2d, 8, 1e-3, 1e-4);
  SolveCounters c;
  ReducedProblem prob(s.model, s.objective, nullptr, &c);
  const auto pt = prob.at(Vector::Zero(s.model.control_dim()));
  const Vector v = random_vector(s.model.control_dim(), 8);
  const auto before = c.snapshot();
  CgReport rep;
  const Vector x = pt->hess_inv_apply(v, &rep);
  const auto d = c.snapshot() - before;
  EXPECT_LT((pt->hessvec(x) - v).norm() / v.norm(), 1e-8);
  EXPECT_LE(rep.relative_residual, 1e-10);
  ASSERT_EQ(d.cg_per_call.size(), 1u);
  EXPECT_EQ(d.cg_per_call[0], static_cast<unsigned>(rep.iterations));
  EXPECT_EQ(d.state_jacobian_solve, static_cast<unsigned>(rep.iterations));
  EXPECT_EQ(d.state_jacobian_t_solve, static_cast<unsigned>(rep.iterations));
}

TEST(HessInv, RecoversKnownSolution) {
  Fixture s(ModelKind::advdiff1d, 20, 1e-3, 0.0);
  ReducedProblem prob(s.model, s.objective);
  const auto pt = prob.at(Vector::Zero(s.model.control_dim()));
  const Vector w = random_vector(s.model.control_dim(), 9);
  EXPECT_LT((pt->hess_inv_apply(pt->hessvec(w)) - w).norm() / w.norm(), 1e-6);
}

TEST(Optimum, LinearQuadraticOneNewtonStep) {
  Fixture s(ModelKind::advdiff1d, 40, 1e-4, 0.0);
  ReducedProblem prob(s.model, s.objective);
  const auto st = solve_optimum(prob, Vector::Zero(s.model.control_dim()));
  EXPECT_EQ(st.iterations, 1);
  EXPECT_LE(st.gradient_norm, st.tolerance);
  EXPECT_GT(st.min_rayleigh_quotient, 0.0);
}

TEST(Optimum, IllustrativeExactFit) {
  const auto high = PdeModel::create(ModelKind::advdiff1d, 200);
  const auto low = PdeModel::create(ModelKind::diffusion1d, 200);
  const Vector zstar = high.interpolate_control(
      [](const Eigen::Vector2d& x) { return std::exp(-50.0 * (x.x() - 0.5) * (x.x() - 0.5)); });
  Objective obj(low, high.solve_forward(zstar).state, 0.0, 0.0);
  ReducedProblem prob(low, obj);
  const auto st = solve_optimum(prob, Vector::Zero(low.control_dim()));
  EXPECT_LE(st.gradient_norm, 1e-8 * std::max(1.0, st.initial_gradient_norm));
  EXPECT_LE((st.u - obj.target()).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_GT(st.min_rayleigh_quotient, 0.0);
}

TEST(Optimum, ReactionProblemFromZero) {
  Fixture s(ModelKind::cdr2d, 16, 1e-6, 1e-6);
  ReducedProblem prob(s.model, s.objective);
  const auto st = solve_optimum(prob, Vector::Zero(s.model.control_dim()));
  EXPECT_LE(st.gradient_norm, st.tolerance);
  EXPECT_GT(st.min_rayleigh_quotient, 0.0);
}
