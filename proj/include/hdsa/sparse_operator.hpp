#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <atomic>
#include <cstdint>
#include <memory>
#include <string>

namespace hdsa {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using SparseMatrix = Eigen::SparseMatrix<double>;
using Index = Eigen::Index;

enum class Factorization { cholesky, lu };

// Assembled sparse matrix with apply / apply-transpose / factorize-solve.
// Immutable once factorized; apply and solve are safe to call concurrently.
class SparseOperator {
 public:
  SparseOperator();
  explicit SparseOperator(SparseMatrix a, std::string name = {});
  ~SparseOperator();
  SparseOperator(SparseOperator&&) noexcept;
  SparseOperator& operator=(SparseOperator&&) noexcept;

  Index rows() const { return a_.rows(); }
  Index cols() const { return a_.cols(); }
  const SparseMatrix& matrix() const { return a_; }
  const std::string& name() const { return name_; }

  Vector apply(const Eigen::Ref<const Vector>& x) const;
  Vector apply_transpose(const Eigen::Ref<const Vector>& x) const;

  // Throws SingularOperator when the factorization breaks down.
  void factorize(Factorization kind);
  bool factorized() const;

  Vector solve(const Eigen::Ref<const Vector>& b) const;
  Vector solve_transpose(const Eigen::Ref<const Vector>& b) const;

  std::uint64_t apply_count() const { return tally_->applies.load(); }
  std::uint64_t solve_count() const { return tally_->solves.load(); }

 private:
  struct Tally {
    std::atomic<std::uint64_t> applies{0};
    std::atomic<std::uint64_t> solves{0};
  };
  struct Factor;

  SparseMatrix a_;
  std::string name_;
  std::unique_ptr<Factor> factor_;
  std::unique_ptr<Tally> tally_;
};

}  // namespace hdsa
