// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <vector>

namespace pgru {

/// Runs every task on at most `jobs` threads. The first exception (by task
/// index) is rethrown after all workers have joined.
void run_tasks(std::vector<std::function<void()>>& tasks, std::size_t jobs);

}  // namespace pgru
