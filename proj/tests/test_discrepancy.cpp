#include "hdsa/cholqr.hpp"
#include "hdsa/discrepancy.hpp"
#include "hdsa/error.hpp"
#include "hdsa/oracle.hpp"
#include "hdsa/pde.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace hdsa;

namespace {

double max_abs(const Matrix& a) { return a.cwiseAbs().maxCoeff(); }

Matrix gram_schmidt(const Matrix& y) {
  Matrix q = y;
  for (Index j = 0; j < q.cols(); ++j) {
    for (Index i = 0; i < j; ++i) q.col(j) -= q.col(i).dot(q.col(j)) * q.col(i);
    q.col(j).normalize();
  }
  return q;
}

}  // namespace

TEST(Kron2, DenseColumnLayout) {
  Kron2 k = Kron2::zeros(2, 3, 1);
  k.a = 2.0;
  k.U << 1, 3;
  k.z0 << 1, 0, -1;
  const Vector d = k.dense_column(0);
  ASSERT_EQ(d.size(), 8);
  EXPECT_DOUBLE_EQ(d(0), 2.0);
  EXPECT_DOUBLE_EQ(d(1), 6.0);
  EXPECT_DOUBLE_EQ(d(2), 1.0);
  EXPECT_DOUBLE_EQ(d(4), -1.0);
  EXPECT_DOUBLE_EQ(d(5), 3.0);
  EXPECT_DOUBLE_EQ(d(7), -3.0);
}

TEST(Kron2, GramMatchesDense) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Kron2 x = oracle::random_kron2(4, 3, 3, s), y = oracle::random_kron2(4, 3, 2, 100 + s);
    const Matrix ref = x.dense().transpose() * y.dense();
    EXPECT_LE(max_abs(kron2_gram(x, y) - ref), 1e-13 * std::max(1.0, max_abs(ref)));
  }
}

TEST(Kron2, InnerWithZeroAndSelf) {
  const Kron2 x = oracle::random_kron2(4, 3, 1, 5);
  EXPECT_EQ(kron2_inner(x, Kron2::zeros(4, 3, 1)), 0.0);
  EXPECT_GT(kron2_inner(x, x), 0.0);
  EXPECT_EQ(kron2_inner(Kron2::zeros(4, 3, 1), Kron2::zeros(4, 3, 1)), 0.0);
}

TEST(Kron2, InnerRejectsBlocks) {
  const Kron2 x = oracle::random_kron2(4, 3, 2, 5);
  EXPECT_THROW(kron2_inner(x, x), DimensionMismatch);
  EXPECT_THROW(kron2_gram(x, oracle::random_kron2(3, 3, 1, 1)), DimensionMismatch);
}

TEST(Kron2, CombineIdentityAndTriangularInverse) {
  const Kron2 x = oracle::random_kron2(4, 3, 3, 9);
  const Kron2 same = kron2_combine(x, Matrix::Identity(3, 3));
  EXPECT_EQ(max_abs(same.dense() - x.dense()), 0.0);
  const Matrix r = Matrix::Random(3, 3).triangularView<Eigen::Upper>().toDenseMatrix() + 3 * Matrix::Identity(3, 3);
  const Matrix rinv = r.inverse();
  EXPECT_LE(max_abs(kron2_combine(x, rinv).dense() - x.dense() * rinv), 1e-13);
}

TEST(Kron2, ScaleSingleColumn) {
  const Kron2 x = oracle::random_kron2(4, 3, 1, 2);
  const Kron2 y = kron2_combine(x, Matrix::Constant(1, 1, 2.0));
  EXPECT_EQ(y.U, 2.0 * x.U);
  EXPECT_EQ(y.Z, 2.0 * x.Z);
  EXPECT_EQ(y.b, 2.0 * x.b);
}

TEST(Kron2, DenseCap) {
  const Kron2 big = Kron2::zeros(200, 100, 1);
  EXPECT_THROW(big.dense(), std::length_error);
}

TEST(CholQr, OrthonormalInputGivesIdentityR) {
  const Matrix q = gram_schmidt(Matrix::Random(6, 3));
  const auto f = cholqr(q, q);
  EXPECT_LE(max_abs(f.r - Matrix::Identity(3, 3)), 1e-10);
}

TEST(CholQr, MatchesGramSchmidtUpToSigns) {
  const Matrix y = Matrix::Random(7, 4);
  const auto f = cholqr(y, y);
  const Matrix gs = gram_schmidt(y);
  for (Index j = 0; j < 4; ++j) {
    const double s = f.q.col(j).dot(gs.col(j)) > 0 ? 1.0 : -1.0;
    EXPECT_LE((f.q.col(j) - s * gs.col(j)).cwiseAbs().maxCoeff(), 1e-12);
  }
  EXPECT_LE(max_abs(f.q * f.r - y), 1e-12);
}

TEST(CholQr, WeightedAndKron2) {
  const auto inst = oracle::random_instance(4, 3, 17);
  const auto op = oracle::structured_mtheta(inst);
  const Kron2 y = oracle::random_kron2(4, 3, 3, 23);
  const auto f = cholqr(y, op.apply(y));
  const Matrix mt = oracle::dense_mtheta(inst);
  EXPECT_LE(max_abs(f.q.dense() * f.r - y.dense()), 1e-9);
  EXPECT_LE(max_abs(f.q.dense().transpose() * mt * f.q.dense() - Matrix::Identity(3, 3)), 1e-8);
  EXPECT_LE(max_abs(f.mq.dense() - mt * f.q.dense()), 1e-9 * max_abs(mt));
}

TEST(CholQr, RankDeficiencyReportsPivot) {
  Matrix y(5, 3);
  y << 1, 0, 0, 2, 1, 0, 0, 3, 0, 1, 1, 0, 4, 0, 0;
  try {
    cholqr(y, y);
    FAIL() << "expected CholeskyFailure";
  } catch (const CholeskyFailure& e) {
    EXPECT_EQ(e.pivot, 2u);
  }
}

TEST(DeltaEval, ZeroThetaAndInterceptOnly) {
  const auto inst = oracle::random_instance(4, 3, 1);
  const Vector z = Vector::Random(3);
  EXPECT_EQ(delta_eval(inst.mz * z, Kron2::zeros(4, 3, 2)).norm(), 0.0);
  Kron2 t = Kron2::zeros(4, 3, 1);
  t.a = 1.0;
  t.U.col(0) << 1, 2, 3, 4;
  EXPECT_EQ(delta_eval_column(inst.mz * z, t, 0), t.U.col(0));
}

TEST(DeltaEval, MatchesDenseKronecker) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto inst = oracle::random_instance(4, 3, s);
    const Kron2 t = oracle::random_kron2(4, 3, 2, 50 + s);
    const Vector z = Vector::Random(3);
    const Matrix ref = oracle::dense_delta_matrix(4, inst.mz, z) * t.dense();
    EXPECT_LE(max_abs(delta_eval(inst.mz * z, t) - ref), 1e-12 * std::max(1.0, max_abs(ref)));
  }
}

TEST(DeltaCombo, ZeroUnitAndLinear) {
  const auto inst = oracle::random_instance(4, 3, 3);
  const Kron2 modes = oracle::random_kron2(4, 3, 3, 4);
  const Vector mzb = inst.mz * inst.zbar;
  EXPECT_EQ(delta_combo(mzb, mzb, Vector::Zero(3), modes).norm(), 0.0);
  const Vector e1 = Vector::Unit(3, 1);
  EXPECT_LE((delta_combo(mzb, mzb, e1, modes) - delta_eval_column(mzb, modes, 1)).norm(), 1e-12);
  const Vector c = Vector::Random(3), z = Vector::Random(3);
  const Vector ref = delta_eval(inst.mz * z, modes) * c;
  EXPECT_LE((delta_combo(inst.mz * z, mzb, c, modes) - ref).cwiseAbs().maxCoeff(), 1e-12 * std::max(1.0, ref.norm()));
}

TEST(DeltaInnerProduct, QuadraticFormMatchesDense) {
  const auto inst = oracle::random_instance(3, 2, 8);
  const Kron2 t = oracle::random_kron2(3, 2, 1, 9);
  const Vector z = Vector::Random(2);
  const Vector d = delta_eval_column(inst.mz * z, t, 0);
  const Matrix dm = oracle::dense_delta_matrix(3, inst.mz, z);
  const Vector td = t.dense_column(0);
  const double ref = td.dot(dm.transpose() * inst.l * dm * td);
  EXPECT_NEAR(d.dot(inst.l * d), ref, 1e-12 * std::abs(ref));
}

TEST(DeltaInnerProduct, ExpectationOverPriorIsMtheta) {
  const auto inst = oracle::random_instance(2, 2, 21);
  const Kron2 t = oracle::random_kron2(2, 2, 1, 22);
  const Matrix chol = Eigen::LLT<Matrix>(inst.gamma).matrixL();
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd;
  const int draws = 100000;
  Eigen::ArrayXd vals(draws);
  for (int s = 0; s < draws; ++s) {
    const Vector z = inst.zbar + chol * Vector(Vector::NullaryExpr(2, [&](Index) { return nd(rng); }));
    const Vector d = delta_eval_column(inst.mz * z, t, 0);
    vals(s) = d.dot(inst.l * d);
  }
  const double mean = vals.mean();
  const double se = std::sqrt((vals - mean).square().sum() / (draws - 1) / draws);
  const Vector td = t.dense_column(0);
  const double ref = td.dot(oracle::dense_mtheta(inst) * td);
  EXPECT_LE(std::abs(mean - ref), 3 * se);
}

TEST(Mtheta, ApplyMatchesDense) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto inst = oracle::random_instance(4, 3, s);
    const auto op = oracle::structured_mtheta(inst);
    const Matrix ref = oracle::dense_mtheta(inst);
    const Matrix got = oracle::probe(4, 3, [&](const Kron2& t) { return op.apply(t); });
    EXPECT_LE(max_abs(got - ref), 1e-12 * max_abs(ref));
  }
}

TEST(Mtheta, DenseSymmetricPositiveDefinite) {
  const auto inst = oracle::random_instance(5, 5, 3);
  const Matrix mt = oracle::dense_mtheta(inst);
  EXPECT_LE(max_abs(mt - mt.transpose()), 1e-12 * max_abs(mt));
  EXPECT_EQ(Eigen::LLT<Matrix>(mt).info(), Eigen::Success);
  const auto op = oracle::structured_mtheta(inst);
  const Kron2 t = oracle::random_kron2(5, 5, 1, 4);
  EXPECT_GT(kron2_inner(t, op.apply(t)), 0.0);
}

TEST(Mtheta, ZeroMeanIsBlockDiagonal) {
  const auto inst = oracle::random_instance(3, 2, 5, true);
  const Matrix mt = oracle::dense_mtheta(inst);
  EXPECT_EQ(max_abs(mt.topRightCorner(3, 6)), 0.0);
  const auto op = oracle::structured_mtheta(inst);
  EXPECT_EQ(op.beta_hat(), 0.0);
  EXPECT_EQ(op.x().norm(), 0.0);
  const Matrix inv = oracle::probe(3, 2, [&](const Kron2& t) { return op.apply_inverse(t); });
  EXPECT_LE(max_abs(inv.topRightCorner(3, 6)), 0.0);
  EXPECT_LE(max_abs(mt * inv - Matrix::Identity(9, 9)), 1e-10);
}

TEST(Mtheta, InverseTimesDenseIsIdentity) {
  std::mt19937_64 rng(1);
  for (int r = 0; r < 20; ++r) {
    const Index m = 1 + r % 6, n = 1 + (r / 2) % 5;
    EXPECT_LE(oracle::inverse_residual(oracle::random_instance(m, n, rng())), 1e-10) << m << "x" << n;
  }
}

TEST(Mtheta, RoundTrip) {
  const auto inst = oracle::random_instance(4, 3, 31);
  const auto op = oracle::structured_mtheta(inst);
  const Kron2 t = oracle::random_kron2(4, 3, 3, 32);
  EXPECT_LE(max_abs(op.apply(op.apply_inverse(t)).dense() - t.dense()), 1e-10 * max_abs(t.dense()));
  EXPECT_LE(max_abs(op.apply_inverse(op.apply(t)).dense() - t.dense()), 1e-10 * max_abs(t.dense()));
}

TEST(Mtheta, ClosedFormIdentities) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto res = oracle::identity_residuals(oracle::random_instance(2, 1 + s % 6, 400 + s));
    for (int i = 0; i < 4; ++i) EXPECT_LE(res[i], 1e-12) << "identity " << i + 1;
  }
}

TEST(Mtheta, FlippedSignBreaksIdentities) {
  MthetaOptions bad;
  bad.flip_x_sign = true;
  const auto inst = oracle::random_instance(3, 3, 77);
  const auto res = oracle::identity_residuals(inst, bad);
  EXPECT_GT(res[0], 1e-3);
  EXPECT_GT(res[2], 1e-3);
  EXPECT_GT(oracle::inverse_residual(inst, bad), 1e-3);
}

TEST(Mtheta, ConstructionCounts) {
  const auto inst = oracle::random_instance(3, 2, 2);
  SolveCounters c;
  const auto op = oracle::structured_mtheta(inst, &c);
  const auto s = c.snapshot();
  EXPECT_EQ(s.mz_apply, 1u);
  EXPECT_EQ(s.gamma_inv_apply, 1u);
  EXPECT_EQ(s.mz_solve, 1u);
  EXPECT_EQ(s.l_solve, 0u);
}

TEST(Mtheta, ParallelApplyIsBitwiseSerial) {
  const auto inst = oracle::random_instance(6, 5, 8);
  auto op = oracle::structured_mtheta(inst);
  const Kron2 t = oracle::random_kron2(6, 5, 7, 9);
  const Kron2 a = op.apply_inverse(t);
  op.set_threads(3);
  const Kron2 b = op.apply_inverse(t);
  EXPECT_EQ(a.U, b.U);
  EXPECT_EQ(a.Z, b.Z);
  EXPECT_EQ(a.b, b.b);
}

TEST(Weighting, BuildLAndPrior) {
  const auto model = pde::PdeModel::create(pde::ModelKind::cdr2d, 6);
  const auto l = build_L(model.mesh(), 1e-3, 50.0, "bottom");
  const auto lop = l.op();
  const Vector v = Vector::Random(model.state_dim());
  EXPECT_LE((lop.solve(lop.apply(v)) - v).norm(), 1e-10 * v.norm());
  const Matrix ld(l.matrix->matrix());
  EXPECT_LE(max_abs(ld - ld.transpose()), 0.0);

  const auto l0 = build_L(model.mesh(), 1e-3, 0.0, "bottom");
  const SparseMatrix k = fem::assemble_stiffness(model.mesh(), 1e-3).matrix() + fem::assemble_mass(model.mesh()).matrix();
  EXPECT_LE(max_abs(Matrix(l0.matrix->matrix() - k)), 1e-15);

  const Vector mean = Vector::Zero(model.control_dim());
  const auto prior = build_prior(model.control_mass().matrix(), model.control_stiffness(), mean, 2.0, 0.7);
  const auto pop = prior.precision_op();
  const Vector ones = Vector::Ones(model.control_dim());
  EXPECT_LE((pop.apply(ones) - model.control_mass().matrix() * ones / 4.0).norm(), 1e-12);
  const Vector w = Vector::Random(model.control_dim());
  EXPECT_LE((pop.solve(pop.apply(w)) - w).norm(), 1e-10 * w.norm());

  EXPECT_THROW(build_L(model.mesh(), 0.0, 1.0, "bottom"), std::invalid_argument);
  EXPECT_THROW(build_L(model.mesh(), 1e-3, -1.0, "bottom"), std::invalid_argument);
  EXPECT_THROW(build_prior(model.control_mass().matrix(), model.control_stiffness(), mean, 0.0, 1.0),
               std::invalid_argument);
  EXPECT_NO_THROW(build_prior(model.control_mass().matrix(), model.control_stiffness(), mean, 1.0, 1e-6));
}

TEST(Oracle, SizeCap) {
  EXPECT_THROW(oracle::random_instance(7, 3, 1), std::length_error);
  EXPECT_THROW(oracle::check_size(6, 7), std::length_error);
}

TEST(Oracle, TrivialMthetaInstance) {
  oracle::DenseInstance inst{Matrix::Identity(2, 2), Matrix::Identity(3, 3), Matrix::Identity(3, 3),
                             Matrix::Identity(3, 3), Vector::Zero(3)};
  EXPECT_EQ(oracle::dense_mtheta(inst), Matrix::Identity(8, 8));
}

TEST(Oracle, DenseGsvdRecoversPlainSvd) {
  const Matrix a = Matrix::Random(3, 5);
  const auto g = oracle::dense_gsvd(a, Matrix::Identity(3, 3), Matrix::Identity(5, 5));
  Eigen::JacobiSVD<Matrix> svd(a);
  EXPECT_LE((g.sigma - svd.singularValues()).norm(), 1e-12);
  EXPECT_LE(max_abs(g.w.transpose() * g.w - Matrix::Identity(3, 3)), 1e-12);
}
