#include "ana/random_maps.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ana/kernels.hpp"

namespace ana {

template <typename T>
Matrix<T> random_row_stochastic(std::size_t n, double spread, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, spread);
  Matrix<T> logits(n, n);
  for (T& v : logits.values()) v = static_cast<T>(g(rng));
  return softmax_rows(logits);
}

template <typename T>
Matrix<T> random_row_stochastic(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> log_spread(-2.0, 2.5);
  return random_row_stochastic<T>(n, std::exp(log_spread(rng)), rng);
}

template <typename T>
Matrix<T> random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double scale) {
  std::normal_distribution<double> g(0.0, scale);
  Matrix<T> m(rows, cols);
  for (T& v : m.values()) v = static_cast<T>(g(rng));
  return m;
}

std::vector<std::size_t> random_permutation(std::size_t n, std::mt19937_64& rng) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), 0);
  std::shuffle(p.begin(), p.end(), rng);
  return p;
}

#define ANA_INSTANTIATE(T)                                                                  \
  template Matrix<T> random_row_stochastic<T>(std::size_t, std::mt19937_64&);              \
  template Matrix<T> random_row_stochastic<T>(std::size_t, double, std::mt19937_64&);      \
  template Matrix<T> random_matrix<T>(std::size_t, std::size_t, std::mt19937_64&, double);
ANA_INSTANTIATE(float)
ANA_INSTANTIATE(double)
#undef ANA_INSTANTIATE

}  // namespace ana
