#pragma once

#include <rgem/types.hpp>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

namespace rgem {

/// One logged iteration. Gap columns are NaN when the optimum is unknown.
struct TraceRecord {
  std::uint64_t iteration = 0;
  double psi_gap = std::numeric_limits<double>::quiet_NaN();
  double P_to_opt = std::numeric_limits<double>::quiet_NaN();
  double q_gap = std::numeric_limits<double>::quiet_NaN();
  std::uint64_t exact_grads = 0;
  std::uint64_t stochastic_samples = 0;
  std::uint64_t comm_rounds = 0;
  std::uint64_t retries = 0;
  std::int64_t wall_ns = 0;
};

struct RunTrace {
  std::vector<TraceRecord> records;

  bool empty() const { return records.empty(); }
  const TraceRecord& back() const { return records.back(); }
};

/// Trace cadence and prox-optimality spot checks shared by all solvers.
struct RunOptions {
  std::uint64_t cadence = 1;      // log every j-th iteration (plus the last)
  bool record_trace = true;
  double audit_fraction = 0.0;    // fraction of prox calls checked against the normal-cone residual
  std::uint64_t audit_seed = 0;
};

inline bool should_log(const RunOptions& opts, std::uint64_t t, std::uint64_t k) {
  if (!opts.record_trace) return false;
  const std::uint64_t c = opts.cadence == 0 ? 1 : opts.cadence;
  return t == 0 || t == k || t % c == 0;
}

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  std::int64_t elapsed_ns() const {
    return std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

struct NoopObserver {
  template <class... Args>
  void operator()(const Args&...) const {}
};

}  // namespace rgem
