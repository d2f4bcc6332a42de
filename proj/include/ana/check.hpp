#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "ana/matrix.hpp"

namespace ana {

struct CheckLine {
  std::string name;
  bool passed = false;
  double max_violation = 0.0;
  double tolerance = 0.0;
};

/// Single-map SOC kernels under test. Replaceable so the harness can confirm
/// that a broken kernel is caught.
struct SocKernels {
  using Kernel = std::function<std::vector<double>(const MatrixD&)>;
  Kernel cubic;
  Kernel quadratic;
  Kernel linear;

  static SocKernels library();
};

enum class CheckFault { none, quadratic_sign };

/// Accepts "none" and "quadratic-sign"; throws ConfigError otherwise.
CheckFault parse_check_fault(std::string_view name);
SocKernels with_fault(SocKernels k, CheckFault fault);

struct CheckOptions {
  bool fast = false;  // smaller random suites, same tolerances
  std::uint64_t seed = 0;
  SocKernels kernels = SocKernels::library();
};

/// Identity, bound, permutation, gradient and loss properties, one line each.
std::vector<CheckLine> run_checks(const CheckOptions& opts = {});

bool all_passed(const std::vector<CheckLine>& lines);
std::string format_check_report(const std::vector<CheckLine>& lines);

}  // namespace ana
