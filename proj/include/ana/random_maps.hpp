#pragma once

#include <random>
#include <vector>

#include "ana/matrix.hpp"

namespace ana {

/// Row-stochastic N x N map: softmax of Gaussian logits whose spread is drawn
/// per call, so the generated maps range from near-uniform to near-one-hot.
template <typename T>
Matrix<T> random_row_stochastic(std::size_t n, std::mt19937_64& rng);

/// Same with a fixed logit spread.
template <typename T>
Matrix<T> random_row_stochastic(std::size_t n, double spread, std::mt19937_64& rng);

template <typename T>
Matrix<T> random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double scale = 1.0);

std::vector<std::size_t> random_permutation(std::size_t n, std::mt19937_64& rng);

}  // namespace ana
