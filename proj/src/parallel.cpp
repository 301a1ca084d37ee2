// SPDX-License-Identifier: Apache-2.0
#include "pgru/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <thread>

namespace pgru {

void run_tasks(std::vector<std::function<void()>>& tasks, std::size_t jobs) {
  std::vector<std::exception_ptr> errors(tasks.size());
  auto run = [&](std::size_t i) {
    try {
      tasks[i]();
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  const std::size_t workers = std::min(std::max<std::size_t>(jobs, 1), tasks.size());
  if (workers <= 1) {
    for (std::size_t i = 0; i < tasks.size(); ++i) run(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < workers; ++t) {
      pool.emplace_back([&] {
        for (std::size_t i; (i = next.fetch_add(1)) < tasks.size();) run(i);
      });
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace pgru
