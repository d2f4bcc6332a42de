#include "ana/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace ana {

template <typename T>
T relative_error(T analytic, T numeric, T floor) {
  const T denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

namespace {

template <typename T>
T evaluate(const std::function<Var<T>(Tape<T>&)>& f, std::size_t param, std::size_t entry) {
  Tape<T> tape(false);
  const Var<T> out = f(tape);
  const Matrix<T>& v = out.value();
  if (v.rows() != 1 || v.cols() != 1) {
    throw ShapeError("grad_check: function must be scalar-valued, got " +
                     shape_string(v.rows(), v.cols()));
  }
  if (!std::isfinite(v[0])) {
    throw EvaluationError("grad_check: non-finite value probing matrix " + std::to_string(param) +
                          " entry " + std::to_string(entry));
  }
  return v[0];
}

}  // namespace

template <typename T>
GradCheckResult<T> grad_check(const std::function<Var<T>(Tape<T>&)>& f,
                              std::span<Matrix<T>* const> params, T eps, T floor) {
  if (!(eps > T{0})) throw ArgumentError("grad_check: eps must be positive");
  std::vector<Matrix<T>> analytic;
  {
    Tape<T> tape;
    const Var<T> out = f(tape);
    if (!std::isfinite(out.value()[0])) throw EvaluationError("grad_check: non-finite value at x");
    tape.backward(out);
    for (Matrix<T>* p : params) analytic.push_back(tape.gradient(*p));
  }
  GradCheckResult<T> result;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Matrix<T>& p = *params[pi];
    for (std::size_t e = 0; e < p.size(); ++e) {
      const T saved = p[e];
      p[e] = saved + eps;
      T plus;
      T minus;
      try {
        plus = evaluate(f, pi, e);
        p[e] = saved - eps;
        minus = evaluate(f, pi, e);
      } catch (...) {
        p[e] = saved;
        throw;
      }
      p[e] = saved;
      const T numeric = (plus - minus) / (T{2} * eps);
      const T err = relative_error(analytic[pi][e], numeric, floor);
      if (err > result.max_relative_error) {
        result = {err, pi, e, analytic[pi][e], numeric};
      }
    }
  }
  return result;
}

template <typename T>
T grad_check(const std::function<Var<T>(Tape<T>&, Var<T>)>& f, const Matrix<T>& x, T eps, T floor) {
  Matrix<T> probe = x;
  Matrix<T>* params[] = {&probe};
  const std::function<Var<T>(Tape<T>&)> bound = [&](Tape<T>& tape) { return f(tape, tape.param(probe)); };
  return grad_check<T>(bound, std::span<Matrix<T>* const>(params), eps, floor).max_relative_error;
}

#define ANA_INSTANTIATE(T)                                                                  \
  template T relative_error<T>(T, T, T);                                                    \
  template GradCheckResult<T> grad_check<T>(const std::function<Var<T>(Tape<T>&)>&,         \
                                            std::span<Matrix<T>* const>, T, T);             \
  template T grad_check<T>(const std::function<Var<T>(Tape<T>&, Var<T>)>&, const Matrix<T>&, \
                           T, T);
ANA_INSTANTIATE(float)
ANA_INSTANTIATE(double)
#undef ANA_INSTANTIATE

}  // namespace ana
