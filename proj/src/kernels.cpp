#include "ana/kernels.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace ana {
namespace {

template <typename T>
using RowMajor = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
Eigen::Map<const RowMajor<T>> view(const Matrix<T>& m) {
  return {m.data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols())};
}

template <typename T>
Eigen::Map<RowMajor<T>> view(Matrix<T>& m) {
  return {m.data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols())};
}

// Each thread owns one contiguous chunk of columns and streams every row over
// it, so a single thread reads the matrix sequentially. Per-column summation
// order is row order whatever the thread count.
template <typename T, typename F>
std::vector<T> reduce_columns(const Matrix<T>& a, F term) {
  const std::size_t n_rows = a.rows();
  const std::size_t n_cols = a.cols();
  std::vector<T> out(n_cols, T{0});
#pragma omp parallel
  {
    std::size_t tid = 0;
    std::size_t nt = 1;
#ifdef _OPENMP
    tid = static_cast<std::size_t>(omp_get_thread_num());
    nt = static_cast<std::size_t>(omp_get_num_threads());
#endif
    // Chunks are multiples of 16 columns to keep vector loads aligned.
    const std::size_t chunk = ((n_cols + nt - 1) / nt + 15) / 16 * 16;
    const std::size_t begin = std::min(n_cols, tid * chunk);
    const std::size_t end = std::min(n_cols, begin + chunk);
    T* acc = out.data();
    for (std::size_t k = 0; k < n_rows && begin < end; ++k) {
      const T* row = a.data() + k * n_cols;
#pragma omp simd
      for (std::size_t i = begin; i < end; ++i) acc[i] += term(row[i]);
    }
  }
  return out;
}

}  // namespace

template <typename T>
void gemm_accumulate(T alpha, const Matrix<T>& a, Trans ta, const Matrix<T>& b, Trans tb,
                     Matrix<T>& c) {
  const std::size_t m = ta == Trans::no ? a.rows() : a.cols();
  const std::size_t ka = ta == Trans::no ? a.cols() : a.rows();
  const std::size_t kb = tb == Trans::no ? b.rows() : b.cols();
  const std::size_t n = tb == Trans::no ? b.cols() : b.rows();
  require_shape(ka == kb, "matmul", m, ka, kb, n);
  require_shape(c.rows() == m && c.cols() == n, "matmul output", c.rows(), c.cols(), m, n);
  if (m == 0 || n == 0 || ka == 0) return;
  auto out = view(c);
  const auto av = view(a);
  const auto bv = view(b);
  if (ta == Trans::no && tb == Trans::no) {
    out.noalias() += alpha * av * bv;
  } else if (ta == Trans::no) {
    out.noalias() += alpha * av * bv.transpose();
  } else if (tb == Trans::no) {
    out.noalias() += alpha * av.transpose() * bv;
  } else {
    out.noalias() += alpha * av.transpose() * bv.transpose();
  }
}

template <typename T>
Matrix<T> matmul(const Matrix<T>& a, const Matrix<T>& b) {
  require_shape(a.cols() == b.rows(), "matmul", a.rows(), a.cols(), b.rows(), b.cols());
  Matrix<T> c(a.rows(), b.cols());
  gemm_accumulate(T{1}, a, Trans::no, b, Trans::no, c);
  return c;
}

template <typename T>
Matrix<T> matmul_nt(const Matrix<T>& a, const Matrix<T>& b) {
  require_shape(a.cols() == b.cols(), "matmul_nt", a.rows(), a.cols(), b.rows(), b.cols());
  Matrix<T> c(a.rows(), b.rows());
  gemm_accumulate(T{1}, a, Trans::no, b, Trans::yes, c);
  return c;
}

template <typename T>
Matrix<T> matmul_tn(const Matrix<T>& a, const Matrix<T>& b) {
  require_shape(a.rows() == b.rows(), "matmul_tn", a.rows(), a.cols(), b.rows(), b.cols());
  Matrix<T> c(a.cols(), b.cols());
  gemm_accumulate(T{1}, a, Trans::yes, b, Trans::no, c);
  return c;
}

template <typename T>
Matrix<T> softmax_rows(const Matrix<T>& m) {
  Matrix<T> out(m.rows(), m.cols());
  const auto rows = static_cast<std::ptrdiff_t>(m.rows());
  const std::size_t cols = m.cols();
  // Eigen peels unaligned leading elements onto its scalar exp/sum path, so
  // working in place would make the result depend on the row's address. An
  // aligned scratch row keeps it a function of the values alone.
#pragma omp parallel
  {
    Eigen::Array<T, 1, Eigen::Dynamic> work(static_cast<Eigen::Index>(cols));
#pragma omp for schedule(static)
    for (std::ptrdiff_t r = 0; r < rows; ++r) {
      const auto n = static_cast<Eigen::Index>(cols);
      Eigen::Map<const Eigen::Array<T, 1, Eigen::Dynamic>> in(m.data() + r * cols, n);
      work = (in - in.maxCoeff()).exp();
      work *= T{1} / work.sum();
      std::copy(work.data(), work.data() + n, out.data() + r * cols);
    }
  }
  return out;
}

template <typename T>
std::vector<T> column_sums(const Matrix<T>& a) {
  return reduce_columns(a, [](T v) { return v; });
}

template <typename T>
std::vector<T> column_square_sums(const Matrix<T>& a) {
  return reduce_columns(a, [](T v) { return v * v; });
}

int kernel_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_kernel_threads(int n) {
  n = std::max(1, n);
#ifdef _OPENMP
  omp_set_num_threads(n);
#endif
  Eigen::setNbThreads(n);
}

namespace reference {

template <typename T>
Matrix<T> matmul(const Matrix<T>& a, const Matrix<T>& b) {
  require_shape(a.cols() == b.rows(), "matmul", a.rows(), a.cols(), b.rows(), b.cols());
  Matrix<T> c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.cols(); ++j) {
      T acc{0};
      for (std::size_t k = 0; k < a.cols(); ++k) acc += a(i, k) * b(k, j);
      c(i, j) = acc;
    }
  }
  return c;
}

template <typename T>
Matrix<T> softmax_rows(const Matrix<T>& m) {
  Matrix<T> out(m.rows(), m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t j = 0; j < m.cols(); ++j) mx = std::max(mx, m(r, j));
    T sum{0};
    for (std::size_t j = 0; j < m.cols(); ++j) sum += std::exp(m(r, j) - mx);
    for (std::size_t j = 0; j < m.cols(); ++j) out(r, j) = std::exp(m(r, j) - mx) / sum;
  }
  return out;
}

template <typename T>
std::vector<T> column_sums(const Matrix<T>& a) {
  std::vector<T> out(a.cols(), T{0});
  for (std::size_t i = 0; i < a.cols(); ++i) {
    for (std::size_t k = 0; k < a.rows(); ++k) out[i] += a(k, i);
  }
  return out;
}

template <typename T>
std::vector<T> column_square_sums(const Matrix<T>& a) {
  std::vector<T> out(a.cols(), T{0});
  for (std::size_t i = 0; i < a.cols(); ++i) {
    for (std::size_t k = 0; k < a.rows(); ++k) out[i] += a(k, i) * a(k, i);
  }
  return out;
}

}  // namespace reference

#define ANA_INSTANTIATE(T)                                                                     \
  template void gemm_accumulate<T>(T, const Matrix<T>&, Trans, const Matrix<T>&, Trans,       \
                                   Matrix<T>&);                                               \
  template Matrix<T> matmul<T>(const Matrix<T>&, const Matrix<T>&);                           \
  template Matrix<T> matmul_nt<T>(const Matrix<T>&, const Matrix<T>&);                        \
  template Matrix<T> matmul_tn<T>(const Matrix<T>&, const Matrix<T>&);                        \
  template Matrix<T> softmax_rows<T>(const Matrix<T>&);                                       \
  template std::vector<T> column_sums<T>(const Matrix<T>&);                                   \
  template std::vector<T> column_square_sums<T>(const Matrix<T>&);                            \
  template Matrix<T> reference::matmul<T>(const Matrix<T>&, const Matrix<T>&);                \
  template Matrix<T> reference::softmax_rows<T>(const Matrix<T>&);                            \
  template std::vector<T> reference::column_sums<T>(const Matrix<T>&);                        \
  template std::vector<T> reference::column_square_sums<T>(const Matrix<T>&);
ANA_INSTANTIATE(float)
ANA_INSTANTIATE(double)
#undef ANA_INSTANTIATE

}  // namespace ana
