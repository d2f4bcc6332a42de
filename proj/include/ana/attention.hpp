#pragma once

#include <utility>
#include <vector>

#include "ana/soc.hpp"
#include "ana/tape.hpp"

namespace ana {

/// How the aggregated context v_i = sum_j a_ij x_j forms its x_j: through a
/// learned value projection, or from the raw input features (identity value
/// projection, head h aggregating columns [h*dh, (h+1)*dh)).
enum class ValueMode { projected, raw };

struct AttentionConfig {
  std::size_t heads = 4;
  ValueMode value_mode = ValueMode::projected;
};

/// Query / key / value projections, each d x d. Head h uses columns
/// [h*dh, (h+1)*dh) of each projection, dh = d / heads.
template <typename T>
struct AttentionParams {
  Matrix<T> query;
  Matrix<T> key;
  Matrix<T> value;
};

template <typename T>
struct AttentionOutput {
  std::vector<Var<T>> maps;  // one N x N row-stochastic map per head
  Var<T> context;            // N x d feature-consistent context
};

/// Multi-head scaled dot-product self-attention:
/// A_h = softmax_rows(Q_h K_h^T / sqrt(dh)), context = [A_1 V_1 | ... | A_H V_H].
/// Throws ConfigError if d is not divisible by heads.
template <typename T>
AttentionOutput<T> first_order_attention(Var<T> f, const AttentionParams<T>& params,
                                         const AttentionConfig& cfg);

/// Evaluation-only convenience wrapper.
template <typename T>
std::pair<AttentionMaps<T>, Matrix<T>> first_order_attention(const Matrix<T>& f,
                                                             const AttentionParams<T>& params,
                                                             const AttentionConfig& cfg);

void validate_attention_config(std::size_t dim, const AttentionConfig& cfg);

}  // namespace ana
