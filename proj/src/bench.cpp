#include "ana/bench.hpp"

#include <sched.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

#include "ana/errors.hpp"
#include "ana/kernels.hpp"
#include "ana/random_maps.hpp"
#include "ana/report.hpp"

namespace ana {

int pin_to_single_cpu() {
  set_kernel_threads(1);
  const int cpu = sched_getcpu();
  if (cpu < 0) return -1;
  cpu_set_t set;
  CPU_ZERO(&set);
  CPU_SET(cpu, &set);
  return sched_setaffinity(0, sizeof(set), &set) == 0 ? cpu : -1;
}

namespace {

using Clock = std::chrono::steady_clock;

// Larger than any last-level cache we expect to run on.
constexpr std::size_t kFlushBytes = std::size_t{256} << 20;

void flush_cache(std::vector<unsigned char>& buf) {
  if (buf.empty()) buf.assign(kFlushBytes, 0);
  unsigned acc = 0;
  for (std::size_t i = 0; i < buf.size(); i += 64) {
    buf[i] = static_cast<unsigned char>(buf[i] + 1);
    acc += buf[i];
  }
  volatile unsigned sink = acc;
  (void)sink;
}

std::uint64_t trial_seed(std::uint64_t seed, std::size_t n, std::size_t trial) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(n), static_cast<std::uint32_t>(trial)};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (std::uint64_t{out[0]} << 32) | out[1];
}

BenchRecord summarize(SocForm form, std::size_t n, std::vector<double> ms) {
  BenchRecord r;
  r.form = form;
  r.n = n;
  r.trials = ms.size();
  const double sum = std::accumulate(ms.begin(), ms.end(), 0.0);
  r.mean_ms = sum / static_cast<double>(ms.size());
  double ss = 0.0;
  for (double v : ms) ss += (v - r.mean_ms) * (v - r.mean_ms);
  r.stddev_ms = ms.size() > 1 ? std::sqrt(ss / static_cast<double>(ms.size() - 1)) : 0.0;
  std::sort(ms.begin(), ms.end());
  const std::size_t mid = ms.size() / 2;
  r.median_ms = ms.size() % 2 ? ms[mid] : 0.5 * (ms[mid - 1] + ms[mid]);
  return r;
}

}  // namespace

std::vector<BenchRecord> bench_forms(const BenchOptions& opts) {
  if (opts.trials == 0) throw ArgumentError("bench: trials must be positive");
  if (opts.sizes.empty() || opts.forms.empty()) throw ArgumentError("bench: no forms or sizes");
  if (!std::is_sorted(opts.sizes.begin(), opts.sizes.end()))
    throw ArgumentError("bench: sizes must be ascending");
  for (SocForm f : opts.forms)
    if (f == SocForm::none) throw ArgumentError("bench: form 'none' has nothing to time");

  auto log = [&](const std::string& s) {
    if (opts.log) opts.log(s);
  };
  if (opts.pin) {
    const int cpu = pin_to_single_cpu();
    log(cpu >= 0 ? "pinned to cpu " + std::to_string(cpu) + ", 1 kernel thread"
                 : "could not set cpu affinity; running with 1 kernel thread");
  }
  SocOptions soc;
  if (opts.allow_large_cubic) {
    soc.allow_large = true;
    if (std::find(opts.forms.begin(), opts.forms.end(), SocForm::cubic) != opts.forms.end() &&
        opts.sizes.back() > soc.cubic_cap)
      log("cubic size cap " + std::to_string(soc.cubic_cap) + " overridden for benchmarking (N up to " +
          std::to_string(opts.sizes.back()) + ")");
  }
  log(opts.end_to_end ? "timing: softmax map construction + full SOC form"
                      : "timing: SOC step only (column sums shared with the attention pass)");

  std::vector<unsigned char> flush_buf;
  std::vector<BenchRecord> out;
  volatile float sink = 0.0f;
  for (std::size_t n : opts.sizes) {
    std::vector<std::vector<double>> ms(opts.forms.size());
    for (std::size_t t = 0; t < opts.trials; ++t) {
      std::mt19937_64 rng(trial_seed(opts.seed, n, t));
      const MatrixF logits = random_matrix<float>(n, n, rng);
      const MatrixF a = softmax_rows(logits);
      const std::vector<float> s = column_sums(a);
      for (std::size_t f = 0; f < opts.forms.size(); ++f) {
        const SocForm form = opts.forms[f];
        if (opts.flush_cache) flush_cache(flush_buf);
        std::vector<float> h;
        const auto t0 = Clock::now();
        if (opts.end_to_end) {
          const MatrixF built = softmax_rows(logits);
          switch (form) {
            case SocForm::cubic: h = soc_cubic(built, soc); break;
            case SocForm::quadratic: h = soc_quadratic(built); break;
            default: h = soc_linear(built); break;
          }
        } else {
          switch (form) {
            case SocForm::cubic: h = soc_cubic(a, soc); break;
            case SocForm::quadratic: h = soc_quadratic_from_sums<float>(a, s); break;
            default: h = soc_linear_from_sums<float>(s, n); break;
          }
        }
        const auto t1 = Clock::now();
        sink = sink + h[t % h.size()];
        ms[f].push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
      }
    }
    for (std::size_t f = 0; f < opts.forms.size(); ++f) {
      out.push_back(summarize(opts.forms[f], n, std::move(ms[f])));
      const auto& r = out.back();
      log(std::string(to_string(r.form)) + " N=" + std::to_string(n) + ": median " + fixed(r.median_ms, 4) +
          " ms over " + std::to_string(r.trials) + " trials");
    }
  }
  return out;
}

double growth_ratio(const std::vector<BenchRecord>& records, SocForm form, std::size_t n_lo,
                    std::size_t n_hi) {
  const BenchRecord* lo = nullptr;
  const BenchRecord* hi = nullptr;
  for (const auto& r : records) {
    if (r.form != form) continue;
    if (r.n == n_lo) lo = &r;
    if (r.n == n_hi) hi = &r;
  }
  if (!lo || !hi)
    throw ArgumentError("growth_ratio: no " + std::string(to_string(form)) + " rows for N=" +
                        std::to_string(n_lo) + " and N=" + std::to_string(n_hi));
  return hi->median_ms / lo->median_ms;
}

namespace {

Table bench_table(const std::vector<BenchRecord>& records, bool text) {
  Table t{{"form", "n", "median_ms", "mean_ms", "stddev_ms", "trials"}, {}};
  if (text) t.header.push_back("note");
  for (const auto& r : records) {
    std::vector<std::string> row{std::string(to_string(r.form)), std::to_string(r.n), fixed(r.median_ms, 6),
                                 fixed(r.mean_ms, 6), fixed(r.stddev_ms, 6), std::to_string(r.trials)};
    if (text) row.push_back(r.trials < 30 ? "fewer than 30 trials" : "");
    t.rows.push_back(std::move(row));
  }
  return t;
}

}  // namespace

std::string format_bench_table(const std::vector<BenchRecord>& records) {
  return to_text(bench_table(records, true));
}

std::string bench_table_csv(const std::vector<BenchRecord>& records) {
  return to_csv(bench_table(records, false));
}

}  // namespace ana
