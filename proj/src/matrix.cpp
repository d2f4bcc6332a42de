#include "ana/matrix.hpp"

#include <cmath>

namespace ana {

std::string shape_string(std::size_t rows, std::size_t cols) {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

void require_shape(bool ok, const char* op, std::size_t ar, std::size_t ac, std::size_t br,
                   std::size_t bc) {
  if (!ok) {
    throw ShapeError(std::string(op) + ": incompatible shapes " + shape_string(ar, ac) + " and " +
                     shape_string(br, bc));
  }
}

template <typename T>
bool all_finite(const Matrix<T>& m) {
  for (T v : m.values()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

template <typename T>
T max_abs_diff(const Matrix<T>& a, const Matrix<T>& b) {
  require_same_shape(a, b, "max_abs_diff");
  T out{0};
  for (std::size_t i = 0; i < a.size(); ++i) out = std::max(out, std::abs(a[i] - b[i]));
  return out;
}

template <typename T>
Matrix<T> permute_rows(const Matrix<T>& m, std::span<const std::size_t> perm) {
  if (perm.size() != m.rows()) {
    throw ShapeError("permute_rows: permutation of length " + std::to_string(perm.size()) +
                     " for " + shape_string(m.rows(), m.cols()));
  }
  Matrix<T> out(m.rows(), m.cols());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    auto src = m.row(perm[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

#define ANA_INSTANTIATE(T)                                              \
  template bool all_finite<T>(const Matrix<T>&);                        \
  template T max_abs_diff<T>(const Matrix<T>&, const Matrix<T>&);       \
  template Matrix<T> permute_rows<T>(const Matrix<T>&, std::span<const std::size_t>);
ANA_INSTANTIATE(float)
ANA_INSTANTIATE(double)
#undef ANA_INSTANTIATE

}  // namespace ana
