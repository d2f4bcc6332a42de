#pragma once

#include <functional>
#include <span>

#include "ana/tape.hpp"

namespace ana {

template <typename T>
struct GradCheckResult {
  T max_relative_error = 0;
  std::size_t worst_param = 0;  // index into the checked matrices
  std::size_t worst_entry = 0;
  T analytic = 0;
  T numeric = 0;
};

/// Relative error |a - n| / max(|a|, |n|, floor). Both-tiny pairs are judged
/// against `floor` instead of each other.
template <typename T>
T relative_error(T analytic, T numeric, T floor);

/// Compares the reverse-mode gradient of a scalar function against central
/// differences (f(x+eps) - f(x-eps)) / (2 eps) at every coordinate.
///
/// `f` receives a fresh tape and must bind every checked matrix with
/// Tape::param(); the checker perturbs the matrices in place between calls
/// and restores them before returning. Throws EvaluationError if f is not
/// finite at any probe point.
template <typename T>
GradCheckResult<T> grad_check(const std::function<Var<T>(Tape<T>&)>& f,
                              std::span<Matrix<T>* const> params, T eps, T floor = T(1e-8));

/// Single-input form: f(tape, x) with x bound as a leaf.
template <typename T>
T grad_check(const std::function<Var<T>(Tape<T>&, Var<T>)>& f, const Matrix<T>& x, T eps,
             T floor = T(1e-8));

}  // namespace ana
