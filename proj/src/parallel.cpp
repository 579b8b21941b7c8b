#include "hdsa/parallel.hpp"

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace hdsa {

int default_threads() {
  if (const char* env = std::getenv("HDSA_THREADS")) {
    try {
      return std::max(1, std::stoi(env));
    } catch (const std::exception&) {
      return 1;
    }
  }
  return 1;
}

void parallel_for(Eigen::Index count, int threads, const std::function<void(Eigen::Index)>& body) {
  const int workers = static_cast<int>(std::min<Eigen::Index>(std::max(1, threads), count));
  if (workers <= 1) {
    for (Eigen::Index j = 0; j < count; ++j) body(j);
    return;
  }
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (Eigen::Index j = w; j < count; j += workers) body(j);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace hdsa
