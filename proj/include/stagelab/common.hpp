// Copyright (c) 2026 Stagelab contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <cstdlib>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace stagelab {

/// Base error for anything that goes wrong at runtime (I/O, shapes, numerics).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid user input: bad config keys, unknown strategy names, malformed
/// CLI arguments. The CLI maps this to exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

template <typename... Args>
std::string concat(Args&&... args) {
  std::ostringstream os;
  (os << ... << std::forward<Args>(args));
  return os.str();
}

[[noreturn]] inline void raise(std::string msg) { throw Error(std::move(msg)); }
[[noreturn]] inline void raise_config(std::string msg) { throw ConfigError(std::move(msg)); }

/// Upper bound on internal parallelism, from STAGELAB_THREADS. Defaults to 1
/// so runs are single-threaded unless the caller opts in.
inline int thread_cap() {
  const char* env = std::getenv("STAGELAB_THREADS");
  if (env == nullptr || *env == '\0') return 1;
  char* end = nullptr;
  long v = std::strtol(env, &end, 10);
  if (end == env || v < 1) return 1;
  long hw = static_cast<long>(std::thread::hardware_concurrency());
  if (hw > 0 && v > hw) v = hw;
  return static_cast<int>(v);
}

/// Runs fn(i) for i in [0, n). Chunked across at most `threads` workers;
/// results must not depend on which worker runs which index.
template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(threads), n);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  std::exception_ptr first_error;
  std::mutex err_mutex;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

/// 23589761 -> "23,589,761". Used by plan tables and reports.
inline std::string with_thousands(std::uint64_t v) {
  std::string digits = std::to_string(v);
  std::string out;
  out.reserve(digits.size() + digits.size() / 3);
  int run = 0;
  for (auto it = digits.rbegin(); it != digits.rend(); ++it) {
    if (run != 0 && run % 3 == 0) out.push_back(',');
    out.push_back(*it);
    ++run;
  }
  return std::string(out.rbegin(), out.rend());
}

}  // namespace stagelab
