#pragma once

#include <span>
#include <vector>

#include "ana/matrix.hpp"

// Dense kernels. The default entry points are parallel (OpenMP, and Eigen's
// GEMM for matrix products); `ana::reference` holds plain serial loops used
// as test oracles and as the baseline in the kernel benchmark.

namespace ana {

enum class Trans { no, yes };

/// c += alpha * op(a) * op(b)
template <typename T>
void gemm_accumulate(T alpha, const Matrix<T>& a, Trans ta, const Matrix<T>& b, Trans tb,
                     Matrix<T>& c);

template <typename T>
Matrix<T> matmul(const Matrix<T>& a, const Matrix<T>& b);

/// a * b^T
template <typename T>
Matrix<T> matmul_nt(const Matrix<T>& a, const Matrix<T>& b);

/// a^T * b
template <typename T>
Matrix<T> matmul_tn(const Matrix<T>& a, const Matrix<T>& b);

/// Row-wise softmax with max subtraction.
template <typename T>
Matrix<T> softmax_rows(const Matrix<T>& m);

/// s_i = sum_k a(k, i)
template <typename T>
std::vector<T> column_sums(const Matrix<T>& a);

/// q_i = sum_k a(k, i)^2
template <typename T>
std::vector<T> column_square_sums(const Matrix<T>& a);

/// Number of threads the OpenMP kernels use (1 when built without OpenMP).
int kernel_threads();
/// Sets the OpenMP and Eigen thread counts.
void set_kernel_threads(int n);

namespace reference {

template <typename T>
Matrix<T> matmul(const Matrix<T>& a, const Matrix<T>& b);

template <typename T>
Matrix<T> softmax_rows(const Matrix<T>& m);

template <typename T>
std::vector<T> column_sums(const Matrix<T>& a);

template <typename T>
std::vector<T> column_square_sums(const Matrix<T>& a);

}  // namespace reference
}  // namespace ana
