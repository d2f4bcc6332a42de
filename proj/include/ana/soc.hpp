#pragma once

// Second-order context (SOC): per-correspondence scalars summarizing how much
// attention mass a correspondence shares with the rest of the set, computed
// from a row-stochastic first-order attention map A (N x N).
//
// With w_ij = sum_k a_ki a_kj (W = A^T A) and s_i = sum_k a_ki:
//
//   cubic      h_i = sqrt((sum_{j!=i} w_ij)^2 + sum_{j!=i} w_ij^2)   O(N^3)
//   quadratic  h_i = sqrt(2) * (s_i - sum_k a_ki^2)                  O(N^2)
//   linear     h_i = sqrt(2) * (s_i - s_i^2 / N)                     O(N) given s
//
// The cubic form is the Euclidean norm of column i of the Laplacian D - W.
// The quadratic form equals sqrt(2) * sum_{j!=i} w_ij, the upper bound of the
// cubic form, and the linear form bounds the quadratic one from above.

#include <span>
#include <string_view>
#include <vector>

#include "ana/matrix.hpp"
#include "ana/tape.hpp"

namespace ana {

enum class SocForm { none, cubic, quadratic, linear };

std::string_view to_string(SocForm form);
/// Accepts "none", "cubic", "quadratic", "linear"; throws ConfigError otherwise.
SocForm parse_soc_form(std::string_view name);

/// Per-head first-order attention maps, each N x N and row-stochastic.
template <typename T>
struct AttentionMaps {
  std::vector<Matrix<T>> maps;

  std::size_t heads() const noexcept { return maps.size(); }
  std::size_t n() const noexcept { return maps.empty() ? 0 : maps.front().rows(); }
};

struct SocOptions {
  /// Largest N the cubic form accepts unless allow_large is set.
  std::size_t cubic_cap = 2048;
  bool allow_large = false;
};

inline constexpr std::size_t kOracleCap = 64;

// Single-map kernels (parallel).
template <typename T>
std::vector<T> soc_cubic(const Matrix<T>& a, const SocOptions& opts = {});
template <typename T>
std::vector<T> soc_quadratic(const Matrix<T>& a);
template <typename T>
std::vector<T> soc_linear(const Matrix<T>& a);

// Split forms for callers that share the column-sum pass between forms.
template <typename T>
std::vector<T> soc_quadratic_from_sums(const Matrix<T>& a, std::span<const T> col_sums);
template <typename T>
std::vector<T> soc_linear_from_sums(std::span<const T> col_sums, std::size_t n);

/// Off-diagonal row sums of W = A^T A (sum_{j!=i} w_ij), the quantity bounding
/// the cubic form. Computed from W directly.
template <typename T>
std::vector<T> offdiag_similarity_sums(const Matrix<T>& a, const SocOptions& opts = {});

// Multi-head forms: one column per head, N x heads.
template <typename T>
Matrix<T> soc_cubic(const AttentionMaps<T>& a, const SocOptions& opts = {});
template <typename T>
Matrix<T> soc_quadratic(const AttentionMaps<T>& a);
template <typename T>
Matrix<T> soc_linear(const AttentionMaps<T>& a);
template <typename T>
Matrix<T> soc_context(const AttentionMaps<T>& a, SocForm form, const SocOptions& opts = {});

/// Explicit similarity / degree / Laplacian construction. Test oracle only:
/// refuses N > kOracleCap.
template <typename T>
struct SecondOrderMap {
  Matrix<T> similarity;  // W
  std::vector<T> degree;  // d_i = sum_j w_ij
  Matrix<T> laplacian;   // D - W
};

template <typename T>
SecondOrderMap<T> second_order_map_oracle(const Matrix<T>& a);

/// Column Euclidean norms of a matrix.
template <typename T>
std::vector<T> column_norms(const Matrix<T>& m);

/// True when all entries lie in [0, 1] and every row sums to 1 within tol.
template <typename T>
bool is_row_stochastic(const Matrix<T>& a, T tol);

/// Differentiable SOC layer for one head: N x N map -> N x 1 context.
template <typename T>
Var<T> soc_layer(Var<T> a, SocForm form, const SocOptions& opts = {});

namespace reference {

// Serial, loop-for-loop transcriptions; W entries are formed on the fly.
template <typename T>
std::vector<T> soc_cubic(const Matrix<T>& a);
template <typename T>
std::vector<T> soc_quadratic(const Matrix<T>& a);
template <typename T>
std::vector<T> soc_linear(const Matrix<T>& a);

}  // namespace reference
}  // namespace ana
