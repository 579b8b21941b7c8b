#include "hdsa/oracle.hpp"

#include "hdsa/cholqr.hpp"
#include "hdsa/error.hpp"
#include "hdsa/problem.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <unsupported/Eigen/KroneckerProduct>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>

namespace hdsa::oracle {

namespace {

Matrix gaussian_matrix(Index rows, Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> dist;
  Matrix a(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) a(i, j) = dist(rng);
  return a;
}

double rel_diff(const Matrix& a, const Matrix& ref) {
  const double scale = std::max(1e-300, ref.cwiseAbs().maxCoeff());
  return (a - ref).cwiseAbs().maxCoeff() / scale;
}

double scaled_diff(const Matrix& a, const Matrix& ref) {
  return (a - ref).cwiseAbs().maxCoeff() / std::max(1.0, ref.cwiseAbs().maxCoeff());
}

Matrix dense_of(const SparseMatrix& a) { return Matrix(a); }

}  // namespace

void check_size(Index m, Index n) {
  if (m > max_state_dim || n > max_control_dim || m * (n + 1) > max_theta_dim)
    throw std::length_error("dense oracle refuses m = " + std::to_string(m) + ", n = " + std::to_string(n));
}

Matrix random_spd(Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const Matrix a = gaussian_matrix(n, n, rng);
  return a * a.transpose() + static_cast<double>(n) * Matrix::Identity(n, n);
}

DenseInstance random_instance(Index m, Index n, std::uint64_t seed, bool zero_mean) {
  check_size(m, n);
  std::mt19937_64 rng(seed);
  DenseInstance inst;
  inst.l = random_spd(m, rng());
  inst.mz = random_spd(n, rng());
  inst.precision = random_spd(n, rng());
  inst.gamma = inst.precision.inverse();
  inst.zbar = zero_mean ? Vector::Zero(n) : Vector(gaussian_matrix(n, 1, rng));
  return inst;
}

DenseInstance dense_instance(const Matrix& l, const Matrix& mz, const Matrix& precision, const Vector& zbar) {
  check_size(l.rows(), mz.rows());
  DenseInstance inst{l, mz, precision, precision.inverse(), zbar};
  return inst;
}

DenseInstance dense_instance(const SensitivityContext& ctx, const WeightingL& l, const GaussianPrior& prior) {
  return dense_instance(dense_of(l.matrix->matrix()), dense_of(ctx.model().control_mass().matrix()),
                        dense_of(prior.precision->matrix()), ctx.zbar());
}

MthetaOperator structured_mtheta(const DenseInstance& inst, SolveCounters* counters, MthetaOptions options) {
  return MthetaOperator(spd_from_dense(inst.l), spd_from_dense(inst.mz), spd_from_dense(inst.precision), inst.zbar,
                        counters, options);
}

Kron2 random_kron2(Index m, Index n, Index d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Kron2 k;
  k.a = gaussian_matrix(1, 1, rng)(0, 0);
  k.u0 = gaussian_matrix(m, 1, rng);
  k.z0 = gaussian_matrix(n, 1, rng);
  k.b = gaussian_matrix(d, 1, rng);
  k.U = gaussian_matrix(m, d, rng);
  k.Z = gaussian_matrix(n, d, rng);
  return k;
}

Kron2 unit_theta(Index m, Index n, Index i) {
  Kron2 k = Kron2::zeros(m, n, 1);
  if (i < m) {
    k.a = 1.0;
    k.U(i, 0) = 1.0;
  } else {
    const Index j = i - m;
    k.u0(j / n) = 1.0;
    k.Z(j % n, 0) = 1.0;
  }
  return k;
}

Matrix probe(Index m, Index n, const std::function<Kron2(const Kron2&)>& op) {
  check_size(m, n);
  const Index p = m * (n + 1);
  Matrix out(p, p);
  for (Index i = 0; i < p; ++i) out.col(i) = op(unit_theta(m, n, i)).dense_column(0);
  return out;
}

Matrix dense_delta_matrix(Index m, const Matrix& mz, const Vector& z) {
  check_size(m, mz.rows());
  const Matrix w = (mz * z).transpose();
  Matrix d(m, m * (mz.rows() + 1));
  d << Matrix::Identity(m, m), Matrix(Eigen::kroneckerProduct(Matrix::Identity(m, m), w));
  return d;
}

Matrix dense_mtheta(const DenseInstance& inst) {
  check_size(inst.m(), inst.n());
  const Index m = inst.m(), n = inst.n();
  const Vector mzz = inst.mz * inst.zbar;
  const Matrix e = inst.mz * (inst.gamma + inst.zbar * inst.zbar.transpose()) * inst.mz;
  Matrix out(m * (n + 1), m * (n + 1));
  out.topLeftCorner(m, m) = inst.l;
  out.topRightCorner(m, m * n) = Eigen::kroneckerProduct(inst.l, Matrix(mzz.transpose()));
  out.bottomLeftCorner(m * n, m) = Eigen::kroneckerProduct(inst.l, Matrix(mzz));
  out.bottomRightCorner(m * n, m * n) = Eigen::kroneckerProduct(inst.l, e);
  return out;
}

Matrix dense_solution_jacobian(const pde::Linearization& lin) {
  const Index m = lin.state().size(), n = lin.control().size();
  Matrix s(m, n);
  for (Index j = 0; j < n; ++j)
    s.col(j) = -lin.jacobian_state().solve(lin.jacobian_control().apply(Vector::Unit(n, j)));
  return s;
}

// B = S'H_u (I_m, I_m (x) zbar'M_z) + (0, J_u (x) M_z), J_u = dJ/du
Matrix dense_b(const SensitivityContext& ctx) {
  const Index m = ctx.m(), n = ctx.n();
  check_size(m, n);
  const Matrix s = dense_solution_jacobian(ctx.point().linearization());
  const Matrix hu = dense_of(ctx.objective().state_mass());
  const Matrix mz = dense_of(ctx.model().control_mass().matrix());
  Matrix b = s.transpose() * hu * dense_delta_matrix(m, mz, ctx.zbar());
  b.rightCols(m * n) += Eigen::kroneckerProduct(Matrix(ctx.state_gradient().transpose()), mz);
  return b;
}

Matrix dense_hessian(const SensitivityContext& ctx) {
  const Index n = ctx.n();
  if (n > 64) throw std::length_error("dense Hessian oracle refuses n > 64");
  optctl::ReducedProblem problem(ctx.model(), ctx.objective());
  const auto point = problem.at(ctx.zbar());
  Matrix h(n, n);
  for (Index j = 0; j < n; ++j) h.col(j) = point->hessvec(Vector::Unit(n, j));
  return h;
}

Matrix spd_sqrt(const Matrix& a) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(a);
  return es.operatorSqrt();
}

Matrix spd_inv_sqrt(const Matrix& a) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(a);
  return es.operatorInverseSqrt();
}

DenseGsvd dense_gsvd(const Matrix& a, const Matrix& mz, const Matrix& mtheta) {
  if (a.cols() > max_theta_dim || a.rows() > 64) throw std::length_error("dense GSVD oracle size cap");
  const Matrix mzh = spd_sqrt(mz);
  const Matrix mti = spd_inv_sqrt(mtheta);
  Eigen::JacobiSVD<Matrix> svd(mzh * a * mti, Eigen::ComputeThinU | Eigen::ComputeThinV);
  DenseGsvd out;
  out.sigma = svd.singularValues();
  out.w = spd_inv_sqrt(mz) * svd.matrixU();
  out.theta = mti * svd.matrixV();
  return out;
}

double max_subspace_angle_deg(const Matrix& a, const Matrix& b, const Matrix& weight) {
  const auto orth = [&](const Matrix& x) {
    const Matrix r = cholesky_upper(Matrix(x.transpose() * weight * x));
    return Matrix(r.transpose().triangularView<Eigen::Lower>().solve(x.transpose()).transpose());
  };
  const Matrix qa = orth(a), qb = orth(b);
  Eigen::JacobiSVD<Matrix> svd(qa.transpose() * weight * qb);
  const double smin = std::clamp(svd.singularValues().minCoeff(), -1.0, 1.0);
  return std::acos(smin) * 180.0 / std::numbers::pi;
}

std::array<double, 4> identity_residuals(const DenseInstance& inst, MthetaOptions options) {
  const auto op = structured_mtheta(inst, nullptr, options);
  const double beta = op.beta_hat();
  const Vector& x = op.x();
  const Vector& z = inst.zbar;
  const Vector g = inst.precision * z;
  std::array<double, 4> r{};
  const double s1 = beta / (1.0 + beta);
  r[0] = std::abs(z.dot(inst.mz * x) - s1) / std::max(1.0, std::abs(s1));
  r[1] = scaled_diff(inst.mz * x, g / (1.0 + beta));
  r[2] = scaled_diff(op.apply_e(x), inst.mz * z);
  const Matrix gm = g * g.transpose() / (1.0 + beta);
  const Matrix zz = z * z.transpose();
  r[3] = scaled_diff(zz * (inst.precision - gm), zz * inst.precision / (1.0 + beta));
  return r;
}

double inverse_residual(const DenseInstance& inst, MthetaOptions options) {
  const auto op = structured_mtheta(inst, nullptr, options);
  const Matrix inv = probe(inst.m(), inst.n(), [&](const Kron2& t) { return op.apply_inverse(t); });
  const Matrix prod = dense_mtheta(inst) * inv;
  return (prod - Matrix::Identity(prod.rows(), prod.cols())).cwiseAbs().maxCoeff();
}

CovarianceCheck covariance_check(const Matrix& samples, const Matrix& reference) {
  const Index dim = samples.rows();
  const double count = static_cast<double>(samples.cols());
  CovarianceCheck out;
  out.reference = reference;
  out.estimate = samples * samples.transpose() / count;
  for (Index i = 0; i < dim; ++i) {
    for (Index j = 0; j <= i; ++j) {
      const Eigen::ArrayXd prod = samples.row(i).array() * samples.row(j).array();
      const double mean = out.estimate(i, j);
      const double var = (prod - mean).square().sum() / (count - 1.0);
      const double se = std::sqrt(var / count);
      const double diff = std::abs(mean - reference(i, j));
      double zscore;
      if (se > 0.0)
        zscore = diff / se;
      else
        zscore = diff <= 1e-12 * std::max(1.0, std::abs(reference(i, j))) ? 0.0
                                                                          : std::numeric_limits<double>::infinity();
      out.max_z_score = std::max(out.max_z_score, zscore);
    }
  }
  return out;
}

ReoptReport reopt_check(const SensitivityContext& ctx, const Kron2& theta, const std::vector<double>& epsilons,
                        const optctl::OptimizerOptions& options) {
  if (theta.cols() != 1) throw DimensionMismatch("reopt_check takes a single theta column");
  const auto& mz = ctx.model().control_mass().matrix();
  const Matrix bt = ctx.b_apply(theta);
  optctl::CgOptions cg;
  cg.relative_tolerance = 1e-14;
  cg.accept_partial = true;
  const Vector dz = bt.norm() == 0.0 ? Vector::Zero(ctx.n()) : Vector(-ctx.point().hess_inv_apply(bt.col(0), nullptr, cg));
  const auto norm = [&](const Vector& v) { return std::sqrt(std::max(0.0, v.dot(mz * v))); };
  ReoptReport rep;
  rep.dz_norm = norm(dz);
  for (double eps : epsilons) {
    ThetaDiscrepancy delta(mz, theta, eps);
    optctl::ReducedProblem problem(ctx.model(), ctx.objective(), &delta);
    const auto st = optctl::solve_optimum(problem, ctx.zbar(), options);
    const Vector shift = st.z - ctx.zbar();
    ReoptRow row;
    row.epsilon = eps;
    row.remainder = norm(shift - eps * dz);
    row.scaled = rep.dz_norm > 0.0 ? row.remainder / (eps * rep.dz_norm) : row.remainder;
    const double sn = norm(shift);
    row.cosine = (sn > 0.0 && rep.dz_norm > 0.0) ? shift.dot(mz * dz) / (sn * rep.dz_norm) : 1.0;
    rep.rows.push_back(row);
  }
  double orders = 0.0;
  for (std::size_t i = 0; i + 1 < rep.rows.size(); ++i) {
    const auto& a = rep.rows[i];
    const auto& b = rep.rows[i + 1];
    rep.ratios.push_back(b.scaled > 0.0 ? a.scaled / b.scaled : 0.0);
    orders += std::log(a.remainder / b.remainder) / std::log(a.epsilon / b.epsilon);
  }
  if (!rep.ratios.empty()) rep.order = orders / static_cast<double>(rep.ratios.size());
  return rep;
}

namespace {

struct SuiteBuilder {
  std::vector<Check> checks;
  void add(std::string name, double value, double tolerance) {
    checks.push_back({std::move(name), value <= tolerance, value, tolerance});
  }
};

ProblemSpec small_spec(int resolution) {
  ProblemSpec spec;
  spec.kind = pde::ModelKind::diffusion1d;
  spec.resolution = resolution;
  spec.beta1 = 1e-2;
  spec.beta2 = 1e-3;
  return spec;
}

}  // namespace

std::vector<Check> verify_suite(const VerifyOptions& options) {
  SuiteBuilder out;
  std::mt19937_64 rng(options.seed);
  const auto dims = [&](Index max_m, Index max_n) {
    std::uniform_int_distribution<Index> dm(1, max_m), dn(1, max_n);
    return std::pair<Index, Index>{dm(rng), dn(rng)};
  };

  double inv = 0.0, inv0 = 0.0;
  std::array<double, 4> ids{};
  double mth = 0.0, gram = 0.0, comb = 0.0, delta = 0.0, qr = 0.0;
  for (int r = 0; r < options.repetitions; ++r) {
    const auto [m, n] = dims(6, 5);
    const auto inst = random_instance(m, n, rng());
    inv = std::max(inv, inverse_residual(inst, options.mtheta));
    inv0 = std::max(inv0, inverse_residual(random_instance(m, n, rng(), true), options.mtheta));
    const auto id = identity_residuals(random_instance(2, dims(1, 6).second, rng()), options.mtheta);
    for (int i = 0; i < 4; ++i) ids[i] = std::max(ids[i], id[i]);

    const auto op = structured_mtheta(inst, nullptr, options.mtheta);
    mth = std::max(mth, rel_diff(probe(m, n, [&](const Kron2& t) { return op.apply(t); }), dense_mtheta(inst)));

    const Kron2 x = random_kron2(m, n, 3, rng()), y = random_kron2(m, n, 2, rng());
    gram = std::max(gram, rel_diff(kron2_gram(x, y), x.dense().transpose() * y.dense()));
    const Matrix rr = Matrix::Random(3, 4);
    comb = std::max(comb, rel_diff(kron2_combine(x, rr).dense(), x.dense() * rr));
    const Vector z = Vector::Random(n);
    delta = std::max(delta, rel_diff(delta_eval(inst.mz * z, x), dense_delta_matrix(m, inst.mz, z) * x.dense()));

    const Kron2 yq = random_kron2(m, n, std::min<Index>(3, m * (n + 1)), rng());
    const auto f = cholqr(yq, op.apply(yq));
    const Matrix mt = dense_mtheta(inst);
    const Index d = yq.cols();
    qr = std::max({qr, rel_diff(f.q.dense() * f.r, yq.dense()),
                   (f.q.dense().transpose() * mt * f.q.dense() - Matrix::Identity(d, d)).cwiseAbs().maxCoeff()});
  }
  out.add("mtheta_inverse", inv, 1e-10);
  out.add("mtheta_inverse_zero_mean", inv0, 1e-10);
  for (int i = 0; i < 4; ++i) out.add("identity_" + std::to_string(i + 1), ids[i], 1e-12);
  out.add("mtheta_apply_dense", mth, 1e-12);
  out.add("kron2_gram_dense", gram, 1e-13);
  out.add("kron2_combine_dense", comb, 1e-12);
  out.add("delta_eval_dense", delta, 1e-12);
  out.add("cholqr_mtheta", qr, 1e-9);

  // PDE instance with m = 4, n = 3.
  Problem prob(small_spec(3));
  auto& ctx = prob.sensitivity();
  const Index m = ctx.m(), n = ctx.n(), p = m * (n + 1);
  const Matrix b = dense_b(ctx);
  Matrix bprobe(n, p), btprobe(p, n);
  for (Index i = 0; i < p; ++i) bprobe.col(i) = ctx.b_apply(unit_theta(m, n, i));
  for (Index j = 0; j < n; ++j) btprobe.col(j) = ctx.bt_apply(Vector(Vector::Unit(n, j))).dense_column(0);
  out.add("b_dense", rel_diff(bprobe, b), 1e-10);
  out.add("bt_dense", rel_diff(btprobe, b.transpose()), 1e-10);
  const auto dinst = dense_instance(ctx, prob.weighting(), prob.prior());
  out.add("mtheta_pde_dense",
          rel_diff(probe(m, n, [&](const Kron2& t) { return ctx.mtheta().apply(t); }), dense_mtheta(dinst)), 1e-12);
  double adj = 0.0;
  for (int r = 0; r < 5; ++r) {
    const Kron2 y = random_kron2(m, n, 1, rng());
    const Vector v = Vector::Random(n);
    const double lhs = v.dot(ctx.b_apply(y).col(0));
    const double rhs = kron2_inner(ctx.bt_apply(v), y);
    adj = std::max(adj, std::abs(lhs - rhs) / std::max(1e-300, std::abs(lhs)));
  }
  out.add("b_adjoint", adj, 1e-10);

  // Randomized vs dense GSVD.
  const Matrix h = dense_hessian(ctx);
  const Matrix a = h.llt().solve(b);
  const Matrix mt = dense_mtheta(dinst);
  const auto ref = dense_gsvd(a, dinst.mz, mt);
  double sig = 0.0, ang = 0.0;
  for (int r = 0; r < options.repetitions; ++r) {
    GsvdConfig cfg;
    cfg.k = 3;
    cfg.oversampling = 2;
    cfg.q = 2;
    cfg.seed = options.seed * 1000 + static_cast<std::uint64_t>(r);
    const auto res = randomized_gsvd(ctx, cfg);
    for (int i = 0; i < 3; ++i) sig = std::max(sig, std::abs(res.sigma(i) - ref.sigma(i)) / ref.sigma(i));
    ang = std::max(ang, max_subspace_angle_deg(res.theta.dense().leftCols(3), ref.theta.leftCols(3), mt));
    ang = std::max(ang, max_subspace_angle_deg(res.w.leftCols(3), ref.w.leftCols(3), dinst.mz));
  }
  out.add("gsvd_sigma_vs_dense", sig, 0.01);
  out.add("gsvd_subspace_angle_deg", ang, 5.0);

  // Sampler covariance on m = 3, n = 2.
  Problem tiny(small_spec(2));
  auto& tctx = tiny.sensitivity();
  const Index tm = tctx.m(), tn = tctx.n();
  const int draws = options.sampler_draws;
  Matrix pairs(tm + tn, draws);
  for (int j = 0; j < draws; ++j) {
    const auto w = sample_omega_pair(tctx.mtheta().mz_zbar(), tctx.state_gradient(), options.seed, j);
    pairs.col(j) << w.u, w.z;
  }
  const Vector av = tctx.mtheta().mz_zbar(), bv = tctx.state_gradient();
  Matrix cov(tm + tn, tm + tn);
  cov << av.squaredNorm() * Matrix::Identity(tm, tm), bv * av.transpose(), av * bv.transpose(),
      bv.squaredNorm() * Matrix::Identity(tn, tn);
  out.add("sampler_pair_covariance_z", covariance_check(pairs, cov).max_z_score, 3.0);
  const Matrix cols = tctx.sample_b_omega(draws, options.seed);
  const Matrix tb = dense_b(tctx);
  out.add("sampler_column_covariance_z", covariance_check(cols, tb * tb.transpose()).max_z_score, 3.0);
  return out.checks;
}

}  // namespace hdsa::oracle
