#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ana/soc.hpp"

namespace ana {

struct BenchRecord {
  SocForm form = SocForm::linear;
  std::size_t n = 0;
  double median_ms = 0.0;
  double mean_ms = 0.0;
  double stddev_ms = 0.0;
  std::size_t trials = 0;
};

struct BenchOptions {
  std::vector<SocForm> forms{SocForm::cubic, SocForm::quadratic, SocForm::linear};
  std::vector<std::size_t> sizes{2048, 4096, 8192};
  std::size_t trials = 50;
  std::uint64_t seed = 0;
  bool pin = true;
  // Evict the map from cache before each timed call.
  bool flush_cache = true;
  // Time softmax construction of the map plus the whole form, instead of the
  // SOC step alone. In SOC-only mode the column sums s_i count as part of the
  // shared attention pass and are not timed.
  bool end_to_end = false;
  // Lets the cubic form run above its default size cap.
  bool allow_large_cubic = true;
  std::function<void(const std::string&)> log;
};

/// Restricts the calling thread to one CPU and the kernels to one thread.
/// Returns the CPU index, or -1 when affinity could not be set.
int pin_to_single_cpu();

/// Median/mean/stddev wall time per (form, N). Every form sees the same
/// float32 attention map for a given (N, trial). Sizes must be ascending and
/// trials >= 1; rows with fewer than 30 trials are flagged by the formatter.
std::vector<BenchRecord> bench_forms(const BenchOptions& opts);

/// Growth ratio median(n_hi) / median(n_lo) for one form.
double growth_ratio(const std::vector<BenchRecord>& records, SocForm form, std::size_t n_lo,
                    std::size_t n_hi);

std::string format_bench_table(const std::vector<BenchRecord>& records);
std::string bench_table_csv(const std::vector<BenchRecord>& records);

}  // namespace ana
