#include "hdsa/sparse_operator.hpp"

#include "hdsa/error.hpp"

#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

namespace hdsa {

struct SparseOperator::Factor {
  Factorization kind = Factorization::cholesky;
  Eigen::SimplicialLLT<SparseMatrix> llt;
  // SparseLU::transpose() is non-const although solving through the view
  // only reads the factors.
  mutable Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>> lu;
};

SparseOperator::SparseOperator() : tally_(std::make_unique<Tally>()) {}

SparseOperator::SparseOperator(SparseMatrix a, std::string name)
    : a_(std::move(a)), name_(std::move(name)), tally_(std::make_unique<Tally>()) {
  a_.makeCompressed();
}

SparseOperator::~SparseOperator() = default;
SparseOperator::SparseOperator(SparseOperator&&) noexcept = default;
SparseOperator& SparseOperator::operator=(SparseOperator&&) noexcept = default;

Vector SparseOperator::apply(const Eigen::Ref<const Vector>& x) const {
  require_size(x.size(), a_.cols(), "SparseOperator::apply");
  tally_->applies.fetch_add(1, std::memory_order_relaxed);
  return a_ * x;
}

Vector SparseOperator::apply_transpose(const Eigen::Ref<const Vector>& x) const {
  require_size(x.size(), a_.rows(), "SparseOperator::apply_transpose");
  tally_->applies.fetch_add(1, std::memory_order_relaxed);
  return a_.transpose() * x;
}

void SparseOperator::factorize(Factorization kind) {
  if (a_.rows() != a_.cols()) {
    throw DimensionMismatch("cannot factorize a non-square operator " + name_);
  }
  auto f = std::make_unique<Factor>();
  f->kind = kind;
  if (kind == Factorization::cholesky) {
    f->llt.compute(a_);
    if (f->llt.info() != Eigen::Success) {
      throw SingularOperator("Cholesky factorization failed for " + name_);
    }
  } else {
    f->lu.analyzePattern(a_);
    f->lu.factorize(a_);
    if (f->lu.info() != Eigen::Success) {
      throw SingularOperator("LU factorization failed for " + name_ + ": " + f->lu.lastErrorMessage());
    }
  }
  factor_ = std::move(f);
}

bool SparseOperator::factorized() const { return factor_ != nullptr; }

Vector SparseOperator::solve(const Eigen::Ref<const Vector>& b) const {
  if (!factor_) throw Error("solve requested before factorization of " + name_);
  require_size(b.size(), a_.rows(), "SparseOperator::solve");
  tally_->solves.fetch_add(1, std::memory_order_relaxed);
  if (factor_->kind == Factorization::cholesky) return factor_->llt.solve(b);
  return factor_->lu.solve(b);
}

Vector SparseOperator::solve_transpose(const Eigen::Ref<const Vector>& b) const {
  if (!factor_) throw Error("solve requested before factorization of " + name_);
  require_size(b.size(), a_.cols(), "SparseOperator::solve_transpose");
  tally_->solves.fetch_add(1, std::memory_order_relaxed);
  if (factor_->kind == Factorization::cholesky) return factor_->llt.solve(b);
  Vector x(b.size());
  x = factor_->lu.transpose().solve(b);
  return x;
}

}  // namespace hdsa
