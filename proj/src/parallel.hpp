#pragma once

#include <algorithm>
#include <exception>
#include <thread>
#include <vector>

namespace safehc::detail {

// Runs f(i) for i in [0, count) on `jobs` threads with a fixed
// round-robin split; results must be written to per-index slots.
template <class F>
void parallel_for(int count, int jobs, F&& f) {
  jobs = std::max(1, std::min(jobs, count));
  if (jobs == 1) {
    for (int i = 0; i < count; ++i) f(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(jobs);
  for (int t = 0; t < jobs; ++t)
    pool.emplace_back([&, t] {
      try {
        for (int i = t; i < count; i += jobs) f(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace safehc::detail
