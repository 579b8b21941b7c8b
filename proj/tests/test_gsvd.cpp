#include "hdsa/error.hpp"
#include "hdsa/gsvd.hpp"
#include "hdsa/oracle.hpp"
#include "hdsa/problem.hpp"

#include <gtest/gtest.h>

using namespace hdsa;

namespace {

ProblemSpec small_spec(int resolution) {
  ProblemSpec spec;
  spec.kind = pde::ModelKind::diffusion1d;
  spec.resolution = resolution;
  spec.beta1 = 1e-2;
  spec.beta2 = 1e-3;
  return spec;
}

ProblemSpec cdr_spec(int resolution) {
  ProblemSpec spec;
  spec.resolution = resolution;
  return spec;
}

double rel(const Matrix& a, const Matrix& ref) {
  return (a - ref).cwiseAbs().maxCoeff() / std::max(1e-300, ref.cwiseAbs().maxCoeff());
}

}  // namespace

TEST(Sensitivity, RequiresOptimum) {
  Problem prob(small_spec(3));
  const auto& model = prob.model();
  const auto l = build_L(model.mesh(), 1e-3, 50.0, "left");
  const auto prior = build_prior(model.control_mass().matrix(), model.control_stiffness(),
                                 Vector::Zero(model.control_dim()), 1.0, 1e-6);
  EXPECT_THROW(SensitivityContext(model, prob.objective(), Vector::Ones(model.control_dim()), l.op(),
                                  prior.precision_op()),
               Error);
}

TEST(Sensitivity, InitializationCounts) {
  Problem prob(small_spec(4));
  const auto& c = prob.sensitivity().init_counters();
  EXPECT_EQ(c.mz_apply, 1u);
  EXPECT_EQ(c.mz_solve, 1u);
  EXPECT_EQ(c.gamma_inv_apply, 1u);
  EXPECT_EQ(c.l_solve, 1u);
  EXPECT_EQ(c.state_jacobian_solve, 0u);
}

TEST(BApply, ZeroInputs) {
  Problem prob(small_spec(3));
  auto& ctx = prob.sensitivity();
  EXPECT_EQ(ctx.b_apply(Kron2::zeros(ctx.m(), ctx.n(), 2)).norm(), 0.0);
  EXPECT_EQ(ctx.bt_apply(Vector(Vector::Zero(ctx.n()))).dense().norm(), 0.0);
}

TEST(BApply, MatchesDense) {
  Problem prob(small_spec(3));
  auto& ctx = prob.sensitivity();
  ASSERT_EQ(ctx.m(), 4);
  ASSERT_EQ(ctx.n(), 3);
  const Matrix b = oracle::dense_b(ctx);
  const Kron2 y = oracle::random_kron2(4, 3, 5, 3);
  EXPECT_LE(rel(ctx.b_apply(y), b * y.dense()), 1e-10);
  const Matrix v = Matrix::Random(3, 2);
  EXPECT_LE(rel(ctx.bt_apply(v).dense(), b.transpose() * v), 1e-10);
}

TEST(BApply, AdjointConsistency) {
  Problem prob(cdr_spec(4));
  auto& ctx = prob.sensitivity();
  for (std::uint64_t s = 0; s < 5; ++s) {
    const Kron2 y = oracle::random_kron2(ctx.m(), ctx.n(), 1, s);
    const Vector v = Vector::Random(ctx.n());
    const double lhs = v.dot(ctx.b_apply(y).col(0));
    EXPECT_NEAR(lhs, kron2_inner(ctx.bt_apply(v), y), 1e-10 * std::abs(lhs));
  }
}

TEST(BApply, CountsPerCall) {
  Problem prob(cdr_spec(4));
  auto& ctx = prob.sensitivity();
  const auto before = ctx.counters().snapshot();
  ctx.bt_apply(Vector(Vector::Random(ctx.n())));
  const auto d = ctx.counters().snapshot() - before;
  EXPECT_EQ(d.state_jacobian_solve, 1u);
  EXPECT_EQ(d.state_jacobian_t_solve, 0u);
  EXPECT_EQ(d.state_hessian_apply, 1u);
  EXPECT_EQ(d.mz_apply, 1u);

  const auto before2 = ctx.counters().snapshot();
  ctx.b_apply(oracle::random_kron2(ctx.m(), ctx.n(), 3, 1));
  const auto d2 = ctx.counters().snapshot() - before2;
  EXPECT_EQ(d2.state_jacobian_t_solve, 4u);
  EXPECT_EQ(d2.mz_apply, 4u);
  EXPECT_EQ(d2.state_jacobian_solve, 0u);
}

TEST(Sampler, DegenerateCovariance) {
  const auto w = sample_omega_pair(Vector::Zero(3), Vector::Zero(4), 5, 2);
  EXPECT_EQ(w.u.norm(), 0.0);
  EXPECT_EQ(w.z.norm(), 0.0);
  EXPECT_GT(w.u0.norm(), 0.0);
}

TEST(Sampler, PerColumnDeterminism) {
  Problem prob(cdr_spec(4));
  auto& ctx = prob.sensitivity();
  const Matrix a = ctx.sample_b_omega(5, 42);
  const Matrix b = ctx.sample_b_omega(3, 42);
  EXPECT_EQ(a.leftCols(3), b);
  ctx.set_threads(3);
  EXPECT_EQ(ctx.sample_b_omega(5, 42), a);
  ctx.set_threads(1);
  EXPECT_NE(ctx.sample_b_omega(1, 43), a.leftCols(1));
}

TEST(Gsvd, ConfigValidation) {
  Problem prob(small_spec(3));
  auto& ctx = prob.sensitivity();
  GsvdConfig cfg;
  cfg.k = 4;
  EXPECT_THROW(randomized_gsvd(ctx, cfg), ConfigError);
  cfg.k = 0;
  EXPECT_THROW(randomized_gsvd(ctx, cfg), ConfigError);
  cfg.k = 2;
  cfg.q = -1;
  EXPECT_THROW(randomized_gsvd(ctx, cfg), ConfigError);
  EXPECT_EQ((GsvdConfig{3, 10, 1}.sketch_size(3)), 3);
}

TEST(Gsvd, MatchesDenseOnSmallInstance) {
  Problem prob(small_spec(3));
  auto& ctx = prob.sensitivity();
  const Matrix h = oracle::dense_hessian(ctx);
  const auto inst = oracle::dense_instance(ctx, prob.weighting(), prob.prior());
  const Matrix mt = oracle::dense_mtheta(inst);
  const auto ref = oracle::dense_gsvd(h.llt().solve(oracle::dense_b(ctx)), inst.mz, mt);
  GsvdConfig cfg{3, 2, 2, 11};
  const auto r = randomized_gsvd(ctx, cfg);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(r.sigma(i), ref.sigma(i), 0.01 * ref.sigma(i));
  EXPECT_LE(oracle::max_subspace_angle_deg(r.theta.dense(), ref.theta.leftCols(3), mt), 5.0);
}

TEST(Gsvd, OrthonormalCountedAndDeterministic) {
  Problem prob(cdr_spec(8));
  auto& ctx = prob.sensitivity();
  GsvdConfig cfg{5, 5, 2, 3};
  const auto r = randomized_gsvd(ctx, cfg);
  EXPECT_LE(r.left_orthonormality, 1e-8);
  EXPECT_LE(r.right_orthonormality, 1e-8);
  for (Index i = 1; i < r.sigma.size(); ++i) EXPECT_GE(r.sigma(i - 1), r.sigma(i));
  EXPECT_GE(r.sigma.minCoeff(), 0.0);

  const auto e = expected_counts(cfg.q, r.d, r.counters.cg_per_call);
  EXPECT_EQ(r.counters.mz_solve, e.mz_solve);
  EXPECT_EQ(r.counters.l_solve, e.l_solve);
  EXPECT_EQ(r.counters.mz_apply, e.mz_apply);
  EXPECT_EQ(r.counters.gamma_inv_apply, e.gamma_inv_apply);
  EXPECT_EQ(r.counters.state_hessian_apply, e.state_hessian_apply);
  EXPECT_EQ(r.counters.solution_jacobian_apply, e.solution_jacobian_apply);
  EXPECT_EQ(r.counters.solution_jacobian_t_apply, e.solution_jacobian_t_apply);
  EXPECT_EQ(r.counters.hess_inv_apply, e.hess_inv_apply);
  EXPECT_EQ(r.counters.state_jacobian_solve, e.state_jacobian_solve);
  EXPECT_EQ(r.counters.state_jacobian_t_solve, e.state_jacobian_t_solve);
  EXPECT_EQ(r.counters.cg_per_call.size(), e.hess_inv_apply);

  ctx.set_threads(4);
  const auto r2 = randomized_gsvd(ctx, cfg);
  EXPECT_EQ(r.sigma, r2.sigma);
  EXPECT_EQ(r.w, r2.w);
}

TEST(Gsvd, ReconstructionByAction) {
  Problem prob(cdr_spec(8));
  auto& ctx = prob.sensitivity();
  const auto r = randomized_gsvd(ctx, GsvdConfig{4, 10, 2, 5});
  const auto& mz = prob.model().control_mass().matrix();
  for (Index i = 0; i < 4; ++i) {
    const Vector hb = -ctx.point().hess_inv_apply(ctx.b_apply(r.theta.column(i)).col(0));
    const Vector e = hb - r.sigma(i) * r.w.col(i);
    EXPECT_LE(std::sqrt(e.dot(mz * e)) / r.sigma(i), 0.05) << "mode " << i;
  }
}

TEST(ThetaDiscrepancyMap, AffineAndAdjoint) {
  Problem prob(small_spec(5));
  const auto& mz = prob.model().control_mass().matrix();
  const Kron2 t = oracle::random_kron2(prob.model().state_dim(), prob.model().control_dim(), 1, 4);
  const ThetaDiscrepancy d(mz, t, 0.3);
  const Vector z = Vector::Random(5), v = Vector::Random(5), w = Vector::Random(6);
  EXPECT_LE((d.value(z + v) - d.value(z) - d.apply_linear(v)).norm(), 1e-12);
  EXPECT_NEAR(w.dot(d.apply_linear(v)), v.dot(d.apply_linear_transpose(w)), 1e-12);
  EXPECT_LE((d.value(z) - 0.3 * delta_eval_column(mz * z, t, 0)).norm(), 1e-14);
}

TEST(Prediction, ZeroDiscrepancyGivesZeroShift) {
  Problem prob(small_spec(10));
  auto& ctx = prob.sensitivity();
  const optctl::ModelDifference same(prob.model(), prob.model());
  EXPECT_EQ(apply_sensitivity_to_discrepancy(ctx, same).norm(), 0.0);
}

TEST(Prediction, IllustrativeImprovesOnNominal) {
  ProblemSpec spec = small_spec(200);
  spec.beta1 = spec.beta2 = 0.0;
  Problem prob(spec);
  auto& ctx = prob.sensitivity();
  const auto high = pde::PdeModel::create(pde::ModelKind::advdiff1d, 200);
  const Vector dz = apply_sensitivity_to_discrepancy(ctx, optctl::ModelDifference(high, prob.model()));
  const Vector zs = illustrative_source(high);
  const auto& mz = prob.model().control_mass().matrix();
  const auto norm = [&](const Vector& v) { return std::sqrt(v.dot(mz * v)); };
  EXPECT_LT(norm(ctx.zbar() + dz - zs), 0.5 * norm(ctx.zbar() - zs));
}

TEST(Reopt, ZeroThetaAndSecondOrderRemainder) {
  Problem prob(cdr_spec(8));
  auto& ctx = prob.sensitivity();
  const auto zero = oracle::reopt_check(ctx, Kron2::zeros(ctx.m(), ctx.n(), 1), {1e-2});
  EXPECT_EQ(zero.rows[0].remainder, 0.0);
  const auto r = randomized_gsvd(ctx, GsvdConfig{3, 5, 1, 2});
  const auto rep = oracle::reopt_check(ctx, r.theta.column(0), {1e-2, 5e-3, 2.5e-3});
  for (double x : rep.ratios) {
    EXPECT_GE(x, 1.6);
    EXPECT_LE(x, 2.4);
  }
  EXPECT_GT(rep.rows.back().cosine, 0.99);
}
