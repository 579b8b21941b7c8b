#pragma once

#include <atomic>
#include <cstdint>
#include <mutex>
#include <vector>

namespace hdsa {

// Plain-value copy of the tallies in SolveCounters.
struct CounterSnapshot {
  std::uint64_t mz_apply = 0;         // M_z matvecs
  std::uint64_t mz_solve = 0;         // M_z^{-1} applications
  std::uint64_t gamma_inv_apply = 0;  // prior precision matvecs
  std::uint64_t gamma_solve = 0;      // prior covariance applications (one solve each)
  std::uint64_t l_apply = 0;
  std::uint64_t l_solve = 0;
  std::uint64_t state_hessian_apply = 0;  // d^2J/du^2 applications made by B, B^T and the sampler
  std::uint64_t solution_jacobian_apply = 0;
  std::uint64_t solution_jacobian_t_apply = 0;
  std::uint64_t hessvec = 0;
  std::uint64_t hess_inv_apply = 0;
  std::uint64_t state_jacobian_solve = 0;    // solves with dc/du
  std::uint64_t state_jacobian_t_solve = 0;  // solves with dc/du^T
  std::uint64_t cg_iterations = 0;           // accumulated over all H^{-1} applications
  std::vector<std::uint32_t> cg_per_call;    // one entry per H^{-1} application, in completion order

  double mean_cg_iterations() const {
    return cg_per_call.empty() ? 0.0
                               : static_cast<double>(cg_iterations) / static_cast<double>(cg_per_call.size());
  }

  CounterSnapshot operator-(const CounterSnapshot& base) const;
  CounterSnapshot operator+(const CounterSnapshot& other) const;
};

// Monotone operation tallies shared by every component of one analysis
// session. Increments are atomic so column-parallel stages can share it.
class SolveCounters {
 public:
  std::atomic<std::uint64_t> mz_apply{0};
  std::atomic<std::uint64_t> mz_solve{0};
  std::atomic<std::uint64_t> gamma_inv_apply{0};
  std::atomic<std::uint64_t> gamma_solve{0};
  std::atomic<std::uint64_t> l_apply{0};
  std::atomic<std::uint64_t> l_solve{0};
  std::atomic<std::uint64_t> state_hessian_apply{0};
  std::atomic<std::uint64_t> solution_jacobian_apply{0};
  std::atomic<std::uint64_t> solution_jacobian_t_apply{0};
  std::atomic<std::uint64_t> hessvec{0};
  std::atomic<std::uint64_t> hess_inv_apply{0};
  std::atomic<std::uint64_t> state_jacobian_solve{0};
  std::atomic<std::uint64_t> state_jacobian_t_solve{0};
  std::atomic<std::uint64_t> cg_iterations{0};

  void record_cg_call(std::uint32_t iterations);
  CounterSnapshot snapshot() const;
  // Only call between runs; concurrent increments during a reset are lost.
  void reset();

 private:
  mutable std::mutex cg_mutex_;
  std::vector<std::uint32_t> cg_per_call_;
};

}  // namespace hdsa
