#include "tailcal/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstdlib>
#include <cstring>
#include <exception>
#include <mutex>
#include <thread>

namespace tailcal {

std::size_t worker_count() {
  if (const char* env = std::getenv("TAILCAL_THREADS")) {
    std::size_t value = 0;
    auto [ptr, ec] = std::from_chars(env, env + std::strlen(env), value);
    if (ec == std::errc{} && value > 0) return value;
  }
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t count, const std::function<void(std::size_t)>& task) {
  const std::size_t workers = std::min(worker_count(), count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) task(i);
    return;
  }

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto run = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        task(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };

  std::vector<std::jthread> pool;
  pool.reserve(workers - 1);
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(run);
  run();
  pool.clear();
  if (failure) std::rethrow_exception(failure);
}

double chunked_sum(std::size_t n, std::size_t chunk_size,
                   const std::function<double(std::size_t, std::size_t)>& chunk_sum) {
  if (n == 0) return 0.0;
  chunk_size = std::max<std::size_t>(1, chunk_size);
  const std::size_t chunks = (n + chunk_size - 1) / chunk_size;
  std::vector<double> partial(chunks, 0.0);
  parallel_for(chunks, [&](std::size_t k) {
    const std::size_t begin = k * chunk_size;
    partial[k] = chunk_sum(begin, std::min(n, begin + chunk_size));
  });
  double total = 0.0;
  for (double p : partial) total += p;
  return total;
}

}  // namespace tailcal
