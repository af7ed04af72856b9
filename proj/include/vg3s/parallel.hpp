// SPDX-FileCopyrightText: 2026 vg3s contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace vg3s {

/// Splits [0, n) into `workers` contiguous chunks and runs `body(begin, end)` on
/// each. Callers must keep write sets disjoint across chunks.
inline void parallel_for(std::size_t n, unsigned workers,
                         const std::function<void(std::size_t, std::size_t)>& body) {
  workers = std::max(1u, workers);
  if (workers == 1 || n < 2) {
    body(0, n);
    return;
  }
  const std::size_t chunks = std::min<std::size_t>(workers, n);
  std::vector<std::exception_ptr> errors(chunks);
  std::vector<std::thread> threads;
  threads.reserve(chunks);
  for (std::size_t t = 0; t < chunks; ++t) {
    const std::size_t begin = n * t / chunks;
    const std::size_t end = n * (t + 1) / chunks;
    threads.emplace_back([&, t, begin, end] {
      try {
        body(begin, end);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : threads) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace vg3s
