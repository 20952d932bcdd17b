// SPDX-License-Identifier: Apache-2.0

// Ordered fan-out: work(i) runs on up to `parallelism` threads, sink(i, result)
// runs on the calling thread strictly in index order.

#pragma once

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <cstddef>
#include <exception>
#include <mutex>
#include <optional>
#include <thread>
#include <type_traits>
#include <vector>

namespace erprm::detail {

template <typename Work, typename Sink>
void ordered_parallel_for(std::size_t count, std::size_t parallelism, Work&& work, Sink&& sink) {
  using Result = std::invoke_result_t<Work&, std::size_t>;
  if (parallelism <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) sink(i, work(i));
    return;
  }

  std::vector<std::optional<Result>> results(count);
  std::mutex mutex;
  std::condition_variable ready;
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  std::exception_ptr failure;

  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count || stop.load()) return;
      try {
        Result r = work(i);
        std::lock_guard lock(mutex);
        results[i].emplace(std::move(r));
      } catch (...) {
        std::lock_guard lock(mutex);
        if (!failure) failure = std::current_exception();
        stop = true;
      }
      ready.notify_all();
    }
  };

  std::vector<std::thread> threads;
  const std::size_t width = std::min(parallelism, count);
  threads.reserve(width);
  for (std::size_t t = 0; t < width; ++t) threads.emplace_back(worker);
  auto join_all = [&] {
    stop = true;
    for (auto& t : threads) t.join();
  };

  try {
    for (std::size_t i = 0; i < count; ++i) {
      std::optional<Result> item;
      {
        std::unique_lock lock(mutex);
        ready.wait(lock, [&] { return results[i].has_value() || failure != nullptr; });
        if (!results[i]) break;
        item.swap(results[i]);
      }
      sink(i, std::move(*item));
    }
  } catch (...) {
    join_all();
    throw;
  }
  join_all();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace erprm::detail
