#include "hdsa/counters.hpp"

#include <algorithm>

namespace hdsa {

namespace {

template <typename Op>
CounterSnapshot combine(const CounterSnapshot& x, const CounterSnapshot& y, Op op) {
  CounterSnapshot r;
  r.mz_apply = op(x.mz_apply, y.mz_apply);
  r.mz_solve = op(x.mz_solve, y.mz_solve);
  r.gamma_inv_apply = op(x.gamma_inv_apply, y.gamma_inv_apply);
  r.gamma_solve = op(x.gamma_solve, y.gamma_solve);
  r.l_apply = op(x.l_apply, y.l_apply);
  r.l_solve = op(x.l_solve, y.l_solve);
  r.state_hessian_apply = op(x.state_hessian_apply, y.state_hessian_apply);
  r.solution_jacobian_apply = op(x.solution_jacobian_apply, y.solution_jacobian_apply);
  r.solution_jacobian_t_apply = op(x.solution_jacobian_t_apply, y.solution_jacobian_t_apply);
  r.hessvec = op(x.hessvec, y.hessvec);
  r.hess_inv_apply = op(x.hess_inv_apply, y.hess_inv_apply);
  r.state_jacobian_solve = op(x.state_jacobian_solve, y.state_jacobian_solve);
  r.state_jacobian_t_solve = op(x.state_jacobian_t_solve, y.state_jacobian_t_solve);
  r.cg_iterations = op(x.cg_iterations, y.cg_iterations);
  return r;
}

}  // namespace

CounterSnapshot CounterSnapshot::operator-(const CounterSnapshot& base) const {
  auto r = combine(*this, base, [](std::uint64_t a, std::uint64_t b) { return a - b; });
  // per-call log is append-only, so the difference is the tail
  const auto skip = std::min(base.cg_per_call.size(), cg_per_call.size());
  r.cg_per_call.assign(cg_per_call.begin() + static_cast<std::ptrdiff_t>(skip), cg_per_call.end());
  return r;
}

CounterSnapshot CounterSnapshot::operator+(const CounterSnapshot& other) const {
  auto r = combine(*this, other, [](std::uint64_t a, std::uint64_t b) { return a + b; });
  r.cg_per_call = cg_per_call;
  r.cg_per_call.insert(r.cg_per_call.end(), other.cg_per_call.begin(), other.cg_per_call.end());
  return r;
}

void SolveCounters::record_cg_call(std::uint32_t iterations) {
  cg_iterations.fetch_add(iterations, std::memory_order_relaxed);
  hess_inv_apply.fetch_add(1, std::memory_order_relaxed);
  std::lock_guard lock(cg_mutex_);
  cg_per_call_.push_back(iterations);
}

CounterSnapshot SolveCounters::snapshot() const {
  CounterSnapshot s;
  s.mz_apply = mz_apply.load();
  s.mz_solve = mz_solve.load();
  s.gamma_inv_apply = gamma_inv_apply.load();
  s.gamma_solve = gamma_solve.load();
  s.l_apply = l_apply.load();
  s.l_solve = l_solve.load();
  s.state_hessian_apply = state_hessian_apply.load();
  s.solution_jacobian_apply = solution_jacobian_apply.load();
  s.solution_jacobian_t_apply = solution_jacobian_t_apply.load();
  s.hessvec = hessvec.load();
  s.hess_inv_apply = hess_inv_apply.load();
  s.state_jacobian_solve = state_jacobian_solve.load();
  s.state_jacobian_t_solve = state_jacobian_t_solve.load();
  s.cg_iterations = cg_iterations.load();
  std::lock_guard lock(cg_mutex_);
  s.cg_per_call = cg_per_call_;
  return s;
}

void SolveCounters::reset() {
  for (auto* c : {&mz_apply, &mz_solve, &gamma_inv_apply, &gamma_solve, &l_apply, &l_solve,
                  &state_hessian_apply, &solution_jacobian_apply, &solution_jacobian_t_apply, &hessvec,
                  &hess_inv_apply, &state_jacobian_solve, &state_jacobian_t_solve, &cg_iterations}) {
    c->store(0);
  }
  std::lock_guard lock(cg_mutex_);
  cg_per_call_.clear();
}

}  // namespace hdsa
