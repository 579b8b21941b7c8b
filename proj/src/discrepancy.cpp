#include "hdsa/discrepancy.hpp"

#include "hdsa/error.hpp"
#include "hdsa/parallel.hpp"

#include <Eigen/Cholesky>

#include <stdexcept>

namespace hdsa {

namespace {

bool bitwise_equal(const Vector& x, const Vector& y) {
  return x.size() == y.size() && (x.size() == 0 || std::equal(x.data(), x.data() + x.size(), y.data()));
}

void bump(SolveCounters* c, std::atomic<std::uint64_t> SolveCounters::*field) {
  if (c) (c->*field).fetch_add(1, std::memory_order_relaxed);
}

}  // namespace

SpdOperator spd_from_sparse(std::shared_ptr<SparseOperator> op) {
  if (!op->factorized()) op->factorize(Factorization::cholesky);
  SpdOperator s;
  s.dim = op->rows();
  s.apply = [op](const Vector& v) { return op->apply(v); };
  s.solve = [op](const Vector& v) { return op->solve(v); };
  return s;
}

SpdOperator spd_from_dense(const Matrix& a) {
  auto llt = std::make_shared<Eigen::LLT<Matrix>>(a);
  if (llt->info() != Eigen::Success) throw SingularOperator("dense operator is not positive definite");
  auto mat = std::make_shared<Matrix>(a);
  SpdOperator s;
  s.dim = a.rows();
  s.apply = [mat](const Vector& v) -> Vector { return *mat * v; };
  s.solve = [llt](const Vector& v) -> Vector { return llt->solve(v); };
  return s;
}

WeightingL build_L(const fem::Mesh& mesh, double epsilon, double tau, std::string_view boundary) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("weighting epsilon must be positive");
  if (tau < 0.0) throw std::invalid_argument("boundary penalty tau must be nonnegative");
  SparseMatrix l = fem::assemble_stiffness(mesh, epsilon).matrix() + fem::assemble_mass(mesh).matrix();
  if (tau > 0.0) {
    const SparseMatrix p = fem::boundary_projector(mesh, boundary).matrix();
    l += tau * SparseMatrix(p.transpose() * p);
  }
  WeightingL w;
  w.epsilon = epsilon;
  w.tau = tau;
  w.matrix = std::make_shared<SparseOperator>(std::move(l), "L");
  w.matrix->factorize(Factorization::cholesky);
  return w;
}

GaussianPrior build_prior(const SparseMatrix& control_mass, const SparseMatrix& control_stiffness, Vector mean,
                          double alpha, double beta) {
  if (!(alpha > 0.0)) throw std::invalid_argument("prior alpha must be positive");
  if (beta < 0.0) throw std::invalid_argument("prior beta must be nonnegative");
  require_size(mean.size(), control_mass.rows(), "prior mean");
  GaussianPrior g;
  g.alpha = alpha;
  g.beta = beta;
  g.mean = std::move(mean);
  SparseMatrix prec = (beta * control_stiffness + control_mass) / (alpha * alpha);
  g.precision = std::make_shared<SparseOperator>(std::move(prec), "Gamma^-1");
  g.precision->factorize(Factorization::cholesky);
  return g;
}

Vector delta_eval_column(const Vector& mz_z, const Kron2& theta, Index j) {
  require_size(mz_z.size(), theta.n(), "delta_eval control");
  return (theta.a + mz_z.dot(theta.z0)) * theta.U.col(j) + (theta.b(j) + mz_z.dot(theta.Z.col(j))) * theta.u0;
}

Matrix delta_eval(const Vector& mz_z, const Kron2& theta) {
  Matrix out(theta.m(), theta.cols());
  for (Index j = 0; j < theta.cols(); ++j) out.col(j) = delta_eval_column(mz_z, theta, j);
  return out;
}

Vector delta_combo(const Vector& mz_z, const Vector& mz_zbar, const Vector& c, const Kron2& modes) {
  if (c.size() > modes.cols()) throw DimensionMismatch("delta_combo: more coefficients than modes");
  const Index k = c.size();
  const auto U = modes.U.leftCols(k);
  const auto Z = modes.Z.leftCols(k);
  const Vector uc = U * c;
  const Vector zc = Z * c;
  const Vector dz = mz_z - mz_zbar;  // M_z (z - zbar)
  return (modes.a + mz_zbar.dot(modes.z0)) * uc + (c.dot(modes.b.head(k)) + mz_zbar.dot(zc)) * modes.u0 +
         dz.dot(modes.z0) * uc + dz.dot(zc) * modes.u0;
}

MthetaOperator::MthetaOperator(SpdOperator l, SpdOperator mz, SpdOperator gamma_inv, Vector zbar,
                               SolveCounters* counters, Options options)
    : l_(std::move(l)),
      mz_(std::move(mz)),
      gamma_inv_(std::move(gamma_inv)),
      zbar_(std::move(zbar)),
      counters_(counters),
      options_(options) {
  require_size(zbar_.size(), mz_.dim, "M_theta nominal control");
  require_size(gamma_inv_.dim, mz_.dim, "M_theta prior");
  mz_zbar_ = mz_apply(zbar_);
  g_ = gamma_inv_apply(zbar_);
  beta_hat_ = zbar_.dot(g_);
  // x = M_z^{-1} (Gamma^{-1} - G) zbar with G zbar = g beta / (1 + beta)
  x_ = mz_solve(g_ - g_ * (beta_hat_ / (1.0 + beta_hat_)));
  if (options_.flip_x_sign) x_ = -x_;
}

Vector MthetaOperator::mz_apply(const Vector& v) const {
  bump(counters_, &SolveCounters::mz_apply);
  return mz_.apply(v);
}
Vector MthetaOperator::mz_solve(const Vector& v) const {
  bump(counters_, &SolveCounters::mz_solve);
  return mz_.solve(v);
}
Vector MthetaOperator::gamma_inv_apply(const Vector& v) const {
  bump(counters_, &SolveCounters::gamma_inv_apply);
  return gamma_inv_.apply(v);
}
Vector MthetaOperator::gamma_solve(const Vector& v) const {
  bump(counters_, &SolveCounters::gamma_solve);
  return gamma_inv_.solve(v);
}
Vector MthetaOperator::l_apply(const Vector& v) const {
  bump(counters_, &SolveCounters::l_apply);
  return l_.apply(v);
}
Vector MthetaOperator::l_solve(const Vector& v) const {
  bump(counters_, &SolveCounters::l_solve);
  return l_.solve(v);
}

void MthetaOperator::cache_state_shared(const Vector& u0) {
  require_size(u0.size(), m(), "shared state vector");
  cached_linv_u0_ = l_solve(u0);
  cached_u0_ = u0;
}

Vector MthetaOperator::l_solve_shared(const Vector& u0) const {
  if (cached_u0_.size() > 0 && bitwise_equal(u0, cached_u0_)) return cached_linv_u0_;
  return l_solve(u0);
}

Vector MthetaOperator::apply_n(const Vector& v) const {
  require_size(v.size(), n(), "N operand");
  // N M_z zbar = x exactly (in exact arithmetic); reuse it for the shared block.
  if (!options_.flip_x_sign && bitwise_equal(v, mz_zbar_)) return x_;
  if (v.isZero(0.0)) return Vector::Zero(n());
  return mz_solve(gamma_inv_apply(mz_solve(v))) / (1.0 + beta_hat_);
}

Vector MthetaOperator::apply_e(const Vector& v) const {
  const Vector mv = mz_apply(v);
  return mz_apply(gamma_solve(mv) + zbar_ * zbar_.dot(mv));
}

Kron2 MthetaOperator::apply(const Kron2& t) const {
  t.validate();
  require_size(t.m(), m(), "M_theta operand (m)");
  require_size(t.n(), n(), "M_theta operand (n)");
  const Index d = t.cols();
  Kron2 out;
  out.u0 = l_apply(t.u0);
  out.a = t.a + mz_zbar_.dot(t.z0);
  out.z0 = t.a * mz_zbar_ + apply_e(t.z0);
  out.b = t.b + t.Z.transpose() * mz_zbar_;
  out.U.resize(m(), d);
  out.Z.resize(n(), d);
  parallel_for(d, threads_, [&](Index j) {
    out.U.col(j) = l_apply(t.U.col(j));
    out.Z.col(j) = t.b(j) * mz_zbar_ + apply_e(t.Z.col(j));
  });
  return out;
}

Kron2 MthetaOperator::apply_inverse(const Kron2& t) const {
  t.validate();
  require_size(t.m(), m(), "M_theta^{-1} operand (m)");
  require_size(t.n(), n(), "M_theta^{-1} operand (n)");
  const Index d = t.cols();
  const double s = 1.0 + beta_hat_;
  Kron2 out;
  out.u0 = l_solve_shared(t.u0);
  out.a = t.a - x_.dot(t.z0);
  out.z0 = apply_n(t.z0) - t.a * x_;
  out.b = s * (t.b - t.Z.transpose() * x_);
  out.U.resize(m(), d);
  out.Z.resize(n(), d);
  parallel_for(d, threads_, [&](Index j) {
    out.U.col(j) = s * l_solve(t.U.col(j));
    out.Z.col(j) = s * (apply_n(t.Z.col(j)) - t.b(j) * x_);
  });
  return out;
}

}  // namespace hdsa
