#include "hdsa/gsvd.hpp"

#include "hdsa/error.hpp"
#include "hdsa/parallel.hpp"

#include <Eigen/SVD>

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

namespace hdsa {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Vector gaussian(std::mt19937_64& rng, Index size) {
  std::normal_distribution<double> dist;
  Vector v(size);
  for (Index i = 0; i < size; ++i) v(i) = dist(rng);
  return v;
}

}  // namespace

void GsvdConfig::validate(Index n) const {
  if (k < 1) throw ConfigError("target rank k must be at least 1");
  if (oversampling < 0) throw ConfigError("oversampling must be nonnegative");
  if (q < 0) throw ConfigError("subspace iterations q must be nonnegative");
  if (threads < 1) throw ConfigError("thread count must be at least 1");
  if (k > n) throw ConfigError("target rank k = " + std::to_string(k) + " exceeds control dimension " + std::to_string(n));
}

SensitivityContext::SensitivityContext(const pde::PdeModel& model, const optctl::Objective& objective,
                                       const Vector& zbar, SpdOperator l, SpdOperator gamma_inv,
                                       const Options& options)
    : model_(&model), objective_(&objective), counters_(std::make_unique<SolveCounters>()) {
  if (l.dim != model.state_dim()) throw DimensionMismatch("weighting L has the wrong dimension");
  if (gamma_inv.dim != model.control_dim()) throw DimensionMismatch("prior precision has the wrong dimension");
  require_size(zbar.size(), model.control_dim(), "nominal control");
  problem_ = std::make_unique<optctl::ReducedProblem>(model, objective, nullptr, counters_.get());
  point_ = problem_->at(zbar);
  const double g = point_->gradient().norm();
  if (!(g <= options.gradient_tolerance))
    throw Error("reduced gradient at the nominal control is " + std::to_string(g) + ", above the tolerance " +
                std::to_string(options.gradient_tolerance) + "; the sensitivity operator needs an optimum");
  grad_u_ = objective.state_gradient(point_->state());
  counters_->reset();

  auto mz = std::shared_ptr<const SparseOperator>(&model.control_mass(), [](const SparseOperator*) {});
  SpdOperator mz_op{model.control_dim(), [mz](const Vector& v) { return mz->apply(v); },
                    [mz](const Vector& v) { return mz->solve(v); }};
  mtheta_ = std::make_unique<MthetaOperator>(std::move(l), std::move(mz_op), std::move(gamma_inv), zbar,
                                             counters_.get(), options.mtheta);
  mtheta_->cache_state_shared(grad_u_);
  init_counters_ = counters_->snapshot();
  set_threads(options.threads);
}

void SensitivityContext::set_threads(int threads) {
  threads_ = std::max(1, threads);
  mtheta_->set_threads(threads_);
}

Vector SensitivityContext::state_hessian(const Vector& v) const {
  counters_->state_hessian_apply.fetch_add(1, std::memory_order_relaxed);
  return objective_->state_hessian_apply(v);
}

Matrix SensitivityContext::mz_apply_block(const Matrix& v) const {
  Matrix out(v.rows(), v.cols());
  parallel_for(v.cols(), threads_, [&](Index j) { out.col(j) = mz_apply(v.col(j)); });
  return out;
}

Matrix SensitivityContext::hess_inv(const Matrix& v) const {
  Matrix out(v.rows(), v.cols());
  parallel_for(v.cols(), threads_, [&](Index j) { out.col(j) = point_->hess_inv_apply(v.col(j)); });
  return out;
}

// B y for y = (a u_N ; u_N (x) z0) + (b_N u0 ; u0 (x) z_N):
//   (a + zbar'M_z z0) S'H_u u_N + (J_u u_N) M_z z0 + (b_N + zbar'M_z z_N) S'H_u u0 + (J_u u0) M_z z_N
// where S'H_u = dS/dz' d2J/du2 and J_u = dJ/du. The u0 product is shared by all columns.
Matrix SensitivityContext::b_apply(const Kron2& y) const {
  y.validate();
  require_size(y.m(), m(), "B input state dimension");
  require_size(y.n(), n(), "B input control dimension");
  const auto& lin = point_->linearization();
  const Vector& mzz = mtheta_->mz_zbar();
  const Index d = y.cols();
  Matrix out = Matrix::Zero(n(), d);
  if (d == 0) return out;
  const Vector s0 = lin.apply_solution_jacobian_transpose(state_hessian(y.u0));
  const Vector mz_z0 = mz_apply(y.z0);
  const double alpha = y.a + mzz.dot(y.z0);
  const double gu0 = grad_u_.dot(y.u0);
  parallel_for(d, threads_, [&](Index j) {
    const Vector un = y.U.col(j);
    const Vector w = lin.apply_solution_jacobian_transpose(state_hessian(un));
    const Vector mzn = mz_apply(y.Z.col(j));
    out.col(j) = alpha * w + grad_u_.dot(un) * mz_z0 + (y.b(j) + mzz.dot(y.Z.col(j))) * s0 + gu0 * mzn;
  });
  return out;
}

// B'v = (g ; g (x) M_z zbar) + (0 ; dJ/du' (x) M_z v), g = d2J/du2 dS/dz v.
Kron2 SensitivityContext::bt_apply(const Matrix& v) const {
  require_size(v.rows(), n(), "B' input");
  const Index d = v.cols();
  Kron2 out;
  out.a = 1.0;
  out.u0 = grad_u_;
  out.z0 = mtheta_->mz_zbar();
  out.b = Vector::Zero(d);
  out.U.resize(m(), d);
  out.Z.resize(n(), d);
  const auto& lin = point_->linearization();
  parallel_for(d, threads_, [&](Index j) {
    out.U.col(j) = state_hessian(lin.apply_solution_jacobian(v.col(j)));
    out.Z.col(j) = mz_apply(v.col(j));
  });
  return out;
}

Kron2 SensitivityContext::bt_apply(const Vector& v) const { return bt_apply(Matrix(v)); }

OmegaPair sample_omega_pair(const Vector& mz_zbar, const Vector& grad_u, std::uint64_t seed, Index column) {
  std::mt19937_64 rng(splitmix64(seed ^ static_cast<std::uint64_t>(column)));
  const Index m = grad_u.size();
  const Index n = mz_zbar.size();
  const Vector g = gaussian(rng, m);
  const Vector h = gaussian(rng, n);
  OmegaPair w;
  w.u0 = gaussian(rng, m);
  const double an = mz_zbar.norm();
  const double bn = grad_u.norm();
  w.u = an * g;
  w.z = Vector::Zero(n);
  if (an > 0.0) {
    const Vector ah = mz_zbar / an;
    w.z += grad_u.dot(g) * ah;
    if (bn > 0.0) w.z += bn * (h - ah.dot(h) * ah);
  } else if (bn > 0.0) {
    w.z += bn * h;
  }
  return w;
}

Matrix SensitivityContext::sample_b_omega(Index d, std::uint64_t seed) const {
  Matrix out(n(), d);
  const auto& lin = point_->linearization();
  parallel_for(d, threads_, [&](Index j) {
    const OmegaPair w = sample_omega_pair(mtheta_->mz_zbar(), grad_u_, seed, j);
    out.col(j) = lin.apply_solution_jacobian_transpose(state_hessian(w.u0 + w.u)) + mz_apply(w.z);
  });
  return out;
}

GsvdResult randomized_gsvd(const SensitivityContext& ctx, const GsvdConfig& cfg) {
  const Index n = ctx.n();
  cfg.validate(n);
  const Index d = cfg.sketch_size(n);
  auto& counters = ctx.counters();
  const CounterSnapshot start = counters.snapshot();
  const auto& mth = ctx.mtheta();

  // Range sketch: Y = H^{-1} B Omega, orthonormalize in M_z.
  Matrix y = ctx.hess_inv(ctx.sample_b_omega(d, cfg.seed));
  auto qr = cholqr(y, ctx.mz_apply_block(y));
  for (int it = 0; it < cfg.q; ++it) {
    // Power step: B' H^{-1} M_z Q, orthonormalized in M_theta^{-1}.
    const Kron2 yt = ctx.bt_apply(ctx.hess_inv(qr.mq));
    const Kron2 zt = mth.apply_inverse(yt);
    const auto qt = cholqr(yt, zt);
    // Power step: H^{-1} B M_theta^{-1} Q.
    y = ctx.hess_inv(ctx.b_apply(qt.mq));
    qr = cholqr(y, ctx.mz_apply_block(y));
  }
  // Project onto the left basis and orthonormalize.
  const Kron2 w = ctx.bt_apply(ctx.hess_inv(qr.mq));
  const Kron2 mw = mth.apply_inverse(w);
  const auto qw = cholqr(mw, w);
  // Small SVD: R_W' = U_W S V_W'.
  Eigen::JacobiSVD<Matrix> svd(qw.r.transpose(), Eigen::ComputeFullU | Eigen::ComputeFullV);

  GsvdResult res;
  res.counters = counters.snapshot() - start + ctx.init_counters();
  res.init_counters = ctx.init_counters();
  res.k = cfg.k;
  res.d = d;
  res.q = cfg.q;
  res.sigma = svd.singularValues();
  const double s1 = res.sigma.size() ? res.sigma(0) : 0.0;
  for (Index i = 0; i < res.sigma.size(); ++i)
    if (res.sigma(i) < 1e-14 * s1) res.sigma(i) = 0.0;
  // Modes. H^{-1}B theta_N = sigma_N U_N, so w_N = -U_N.
  res.w = -(qr.q * svd.matrixU());
  res.theta = kron2_combine(qw.q, svd.matrixV());

  // Diagnostics (not part of the counted run).
  const Matrix mzw = [&] {
    Matrix o(n, d);
    for (Index j = 0; j < d; ++j) o.col(j) = ctx.mz_apply_uncounted(res.w.col(j));
    return o;
  }();
  res.left_orthonormality = (res.w.transpose() * mzw - Matrix::Identity(d, d)).cwiseAbs().maxCoeff();
  const Kron2 mt = mth.apply(res.theta);
  res.right_orthonormality = (kron2_gram(res.theta, mt) - Matrix::Identity(d, d)).cwiseAbs().maxCoeff();
  return res;
}

ExpectedCounts expected_counts(int q, Index d_, const std::vector<std::uint32_t>& cg_per_call) {
  const std::uint64_t qq = static_cast<std::uint64_t>(q), d = static_cast<std::uint64_t>(d_);
  std::uint64_t lsum = 0;
  for (auto l : cg_per_call) lsum += l;
  ExpectedCounts e{};
  e.mz_solve = 2 * (qq + 1) * d + 1;
  e.l_solve = (qq + 1) * d + 1;
  e.mz_apply = 1 + 3 * d + qq * (3 * d + 1);
  e.gamma_inv_apply = 1 + (qq + 1) * d;
  e.state_hessian_apply = 2 * d + qq * (2 * d + 1);
  e.solution_jacobian_apply = (qq + 1) * d;
  e.solution_jacobian_t_apply = d + qq * (d + 1);
  e.hess_inv_apply = 2 * (qq + 1) * d;
  e.state_jacobian_solve = e.solution_jacobian_apply + lsum;
  e.state_jacobian_t_solve = e.solution_jacobian_t_apply + lsum;
  const double lcg = cg_per_call.empty() ? 0.0 : static_cast<double>(lsum) / static_cast<double>(cg_per_call.size());
  e.cost_state_solve = static_cast<double>((qq + 1) * d) * (1.0 + 2.0 * lcg);
  e.cost_state_t_solve = e.cost_state_solve;
  return e;
}

ThetaDiscrepancy::ThetaDiscrepancy(const SparseMatrix& mz, Kron2 theta, double scale)
    : mz_(&mz), theta_(std::move(theta)), scale_(scale) {
  theta_.validate();
  if (theta_.cols() != 1) throw DimensionMismatch("ThetaDiscrepancy takes a single theta column");
  require_size(mz.rows(), theta_.n(), "ThetaDiscrepancy mass");
  mz_z0_ = mz * theta_.z0;
  mz_z1_ = mz * theta_.Z.col(0);
}

Vector ThetaDiscrepancy::value(const Vector& z) const {
  return scale_ * delta_eval_column(*mz_ * z, theta_, 0);
}

Vector ThetaDiscrepancy::apply_linear(const Vector& v) const {
  return scale_ * (mz_z0_.dot(v) * theta_.U.col(0) + mz_z1_.dot(v) * theta_.u0);
}

Vector ThetaDiscrepancy::apply_linear_transpose(const Vector& w) const {
  return scale_ * (theta_.U.col(0).dot(w) * mz_z0_ + theta_.u0.dot(w) * mz_z1_);
}

Vector apply_sensitivity_to_discrepancy(const SensitivityContext& ctx, const optctl::AffineMap& d) {
  require_size(d.state_dim(), ctx.m(), "discrepancy state dimension");
  require_size(d.control_dim(), ctx.n(), "discrepancy control dimension");
  const auto& lin = ctx.point().linearization();
  const Vector dv = d.value(ctx.zbar());
  const Vector rhs = lin.apply_solution_jacobian_transpose(ctx.state_hessian(dv)) +
                     d.apply_linear_transpose(ctx.state_gradient());
  if (rhs.norm() == 0.0) return Vector::Zero(ctx.n());
  return -ctx.point().hess_inv_apply(rhs);
}

}  // namespace hdsa
