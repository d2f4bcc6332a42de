#include "ana/soc.hpp"

#include <Eigen/Core>
#include <cmath>
#include <numbers>

#include "ana/kernels.hpp"

namespace ana {

std::string_view to_string(SocForm form) {
  switch (form) {
    case SocForm::none: return "none";
    case SocForm::cubic: return "cubic";
    case SocForm::quadratic: return "quadratic";
    case SocForm::linear: return "linear";
  }
  return "?";
}

SocForm parse_soc_form(std::string_view name) {
  if (name == "none") return SocForm::none;
  if (name == "cubic") return SocForm::cubic;
  if (name == "quadratic") return SocForm::quadratic;
  if (name == "linear") return SocForm::linear;
  throw ConfigError("unknown SOC form '" + std::string(name) + "' (expected none|cubic|quadratic|linear)");
}

namespace {

template <typename T>
constexpr T kSqrt2 = std::numbers::sqrt2_v<T>;

template <typename T>
void require_square(const Matrix<T>& a, const char* op) {
  require_shape(a.rows() == a.cols(), op, a.rows(), a.cols(), a.cols(), a.rows());
}

template <typename T>
void require_cubic_size(std::size_t n, const SocOptions& opts) {
  if (n > opts.cubic_cap && !opts.allow_large) {
    throw ArgumentError("soc_cubic: N=" + std::to_string(n) + " exceeds the cubic-form cap of " +
                        std::to_string(opts.cubic_cap) + " (set allow_large to override)");
  }
}

template <typename T>
using ColMajor = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using RowMajor = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Lower triangle (column-major) of W = A^T A.
template <typename T>
ColMajor<T> similarity_lower(const Matrix<T>& a) {
  const auto n = static_cast<Eigen::Index>(a.rows());
  Eigen::Map<const RowMajor<T>> av(a.data(), n, n);
  ColMajor<T> w = ColMajor<T>::Zero(n, n);
  w.template selfadjointView<Eigen::Lower>().rankUpdate(av.transpose());
  return w;
}

/// Full symmetric W = A^T A.
template <typename T>
Matrix<T> similarity_full(const Matrix<T>& a) {
  const std::size_t n = a.rows();
  const ColMajor<T> lower = similarity_lower(a);
  Matrix<T> w(n, n);
  const auto rows = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const auto r = static_cast<Eigen::Index>(std::max<std::size_t>(i, j));
      const auto c = static_cast<Eigen::Index>(std::min<std::size_t>(i, j));
      w(i, j) = lower(r, c);
    }
  }
  return w;
}

/// S_i = sum_{j!=i} w_ij and Q_i = sum_{j!=i} w_ij^2 read off the lower triangle.
template <typename T>
void offdiag_stats(const Matrix<T>& a, std::vector<T>& s, std::vector<T>& q) {
  const std::size_t n = a.rows();
  const ColMajor<T> w = similarity_lower(a);
  s.assign(n, T{0});
  q.assign(n, T{0});
  T* sp = s.data();
  T* qp = q.data();
  const auto cols = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(dynamic, 16) reduction(+ : sp[:n], qp[:n])
  for (std::ptrdiff_t j = 0; j < cols; ++j) {
    const T* col = w.data() + j * static_cast<std::ptrdiff_t>(n);
    for (std::size_t i = static_cast<std::size_t>(j) + 1; i < n; ++i) {
      const T v = col[i];
      sp[j] += v;
      qp[j] += v * v;
      sp[i] += v;
      qp[i] += v * v;
    }
  }
}

}  // namespace

template <typename T>
std::vector<T> soc_cubic(const Matrix<T>& a, const SocOptions& opts) {
  require_square(a, "soc_cubic");
  require_cubic_size<T>(a.rows(), opts);
  std::vector<T> s;
  std::vector<T> q;
  offdiag_stats(a, s, q);
  std::vector<T> h(a.rows());
  for (std::size_t i = 0; i < h.size(); ++i) h[i] = std::sqrt(s[i] * s[i] + q[i]);
  return h;
}

template <typename T>
std::vector<T> offdiag_similarity_sums(const Matrix<T>& a, const SocOptions& opts) {
  require_square(a, "offdiag_similarity_sums");
  require_cubic_size<T>(a.rows(), opts);
  std::vector<T> s;
  std::vector<T> q;
  offdiag_stats(a, s, q);
  return s;
}

template <typename T>
std::vector<T> soc_quadratic_from_sums(const Matrix<T>& a, std::span<const T> col_sums) {
  require_square(a, "soc_quadratic");
  require_shape(col_sums.size() == a.cols(), "soc_quadratic (column sums)", a.rows(), a.cols(),
                1, col_sums.size());
  std::vector<T> h = column_square_sums(a);
  for (std::size_t i = 0; i < h.size(); ++i) h[i] = kSqrt2<T> * (col_sums[i] - h[i]);
  return h;
}

template <typename T>
std::vector<T> soc_linear_from_sums(std::span<const T> col_sums, std::size_t n) {
  std::vector<T> h(col_sums.size());
  const T inv_n = T{1} / static_cast<T>(n);
  for (std::size_t i = 0; i < h.size(); ++i) {
    const T s = col_sums[i];
    h[i] = kSqrt2<T> * (s - s * s * inv_n);
  }
  return h;
}

template <typename T>
std::vector<T> soc_quadratic(const Matrix<T>& a) {
  require_square(a, "soc_quadratic");
  const std::vector<T> s = column_sums(a);
  return soc_quadratic_from_sums<T>(a, s);
}

template <typename T>
std::vector<T> soc_linear(const Matrix<T>& a) {
  require_square(a, "soc_linear");
  const std::vector<T> s = column_sums(a);
  return soc_linear_from_sums<T>(s, a.rows());
}

namespace {

template <typename T, typename F>
Matrix<T> per_head(const AttentionMaps<T>& a, F form) {
  Matrix<T> out(a.n(), a.heads());
  for (std::size_t h = 0; h < a.heads(); ++h) {
    require_shape(a.maps[h].rows() == a.n(), "soc (head shapes)", a.maps[h].rows(),
                  a.maps[h].cols(), a.n(), a.n());
    const std::vector<T> col = form(a.maps[h]);
    for (std::size_t i = 0; i < col.size(); ++i) out(i, h) = col[i];
  }
  return out;
}

}  // namespace

template <typename T>
Matrix<T> soc_cubic(const AttentionMaps<T>& a, const SocOptions& opts) {
  return per_head(a, [&](const Matrix<T>& m) { return soc_cubic(m, opts); });
}

template <typename T>
Matrix<T> soc_quadratic(const AttentionMaps<T>& a) {
  return per_head(a, [](const Matrix<T>& m) { return soc_quadratic(m); });
}

template <typename T>
Matrix<T> soc_linear(const AttentionMaps<T>& a) {
  return per_head(a, [](const Matrix<T>& m) { return soc_linear(m); });
}

template <typename T>
Matrix<T> soc_context(const AttentionMaps<T>& a, SocForm form, const SocOptions& opts) {
  switch (form) {
    case SocForm::cubic: return soc_cubic(a, opts);
    case SocForm::quadratic: return soc_quadratic(a);
    case SocForm::linear: return soc_linear(a);
    case SocForm::none: break;
  }
  throw ConfigError("soc_context: form 'none' has no context");
}

template <typename T>
SecondOrderMap<T> second_order_map_oracle(const Matrix<T>& a) {
  require_square(a, "second_order_map_oracle");
  const std::size_t n = a.rows();
  if (n > kOracleCap) {
    throw ArgumentError("second_order_map_oracle: N=" + std::to_string(n) +
                        " exceeds the oracle cap of " + std::to_string(kOracleCap));
  }
  SecondOrderMap<T> out{Matrix<T>(n, n), std::vector<T>(n, T{0}), Matrix<T>(n, n)};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      T w{0};
      for (std::size_t k = 0; k < n; ++k) w += a(k, i) * a(k, j);
      out.similarity(i, j) = w;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) out.degree[i] += out.similarity(i, j);
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      out.laplacian(i, j) = (i == j ? out.degree[i] : T{0}) - out.similarity(i, j);
    }
  }
  return out;
}

template <typename T>
std::vector<T> column_norms(const Matrix<T>& m) {
  std::vector<T> out(m.cols(), T{0});
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) out[c] += m(r, c) * m(r, c);
  }
  for (T& v : out) v = std::sqrt(v);
  return out;
}

template <typename T>
bool is_row_stochastic(const Matrix<T>& a, T tol) {
  for (std::size_t r = 0; r < a.rows(); ++r) {
    T total{0};
    for (T v : a.row(r)) {
      if (!(v >= T{0} && v <= T{1})) return false;
      total += v;
    }
    if (std::abs(total - T{1}) > tol) return false;
  }
  return true;
}

template <typename T>
Var<T> soc_layer(Var<T> a, SocForm form, const SocOptions& opts) {
  const Matrix<T>& av = a.value();
  require_square(av, "soc_layer");
  const std::size_t n = av.rows();
  Tape<T>& tape = *a.tape;
  switch (form) {
    case SocForm::linear: {
      std::vector<T> s = column_sums(av);
      std::vector<T> h = soc_linear_from_sums<T>(s, n);
      return tape.push(Matrix<T>(n, 1, std::move(h)), {a.id},
                       [a = a.id, s = std::move(s)](Tape<T>& t, std::size_t self) {
                         const Matrix<T>& g = t.grad(self);
                         Matrix<T>& ga = t.grad(a);
                         const std::size_t n = s.size();
                         std::vector<T> coef(n);
                         for (std::size_t i = 0; i < n; ++i) {
                           coef[i] = g[i] * kSqrt2<T> * (T{1} - T{2} * s[i] / static_cast<T>(n));
                         }
#pragma omp parallel for schedule(static)
                         for (std::size_t k = 0; k < n; ++k) {
                           T* row = ga.data() + k * n;
                           for (std::size_t i = 0; i < n; ++i) row[i] += coef[i];
                         }
                       });
    }
    case SocForm::quadratic: {
      std::vector<T> h = soc_quadratic(av);
      return tape.push(Matrix<T>(n, 1, std::move(h)), {a.id}, [a = a.id](Tape<T>& t, std::size_t self) {
        const Matrix<T>& g = t.grad(self);
        const Matrix<T>& av = t.value(a);
        Matrix<T>& ga = t.grad(a);
        const std::size_t n = av.rows();
#pragma omp parallel for schedule(static)
        for (std::size_t k = 0; k < n; ++k) {
          const T* arow = av.data() + k * n;
          T* grow = ga.data() + k * n;
          for (std::size_t i = 0; i < n; ++i) grow[i] += g[i] * kSqrt2<T> * (T{1} - T{2} * arow[i]);
        }
      });
    }
    case SocForm::cubic: {
      require_cubic_size<T>(n, opts);
      Matrix<T> w = similarity_full(av);
      std::vector<T> s(n, T{0});
      std::vector<T> h(n);
      for (std::size_t i = 0; i < n; ++i) {
        T q{0};
        for (std::size_t j = 0; j < n; ++j) {
          if (j == i) continue;
          s[i] += w(i, j);
          q += w(i, j) * w(i, j);
        }
        h[i] = std::sqrt(s[i] * s[i] + q);
      }
      Matrix<T> hm(n, 1, h);
      return tape.push(std::move(hm), {a.id},
                       [a = a.id, w = std::move(w), s = std::move(s), h = std::move(h)](Tape<T>& t, std::size_t self) {
                         const Matrix<T>& g = t.grad(self);
                         const std::size_t n = h.size();
                         // G = dL/dW, symmetrized; h_i = 0 takes the zero subgradient.
                         Matrix<T> gw(n, n);
                         for (std::size_t i = 0; i < n; ++i) {
                           if (h[i] <= T{0}) continue;
                           const T c = g[i] / h[i];
                           for (std::size_t j = 0; j < n; ++j) {
                             if (j == i) continue;
                             const T v = c * (s[i] + w(i, j));
                             gw(i, j) += v;
                             gw(j, i) += v;
                           }
                         }
                         gemm_accumulate(T{1}, t.value(a), Trans::no, gw, Trans::no, t.grad(a));
                       });
    }
    case SocForm::none: break;
  }
  throw ConfigError("soc_layer: form 'none' has no context");
}

namespace reference {

template <typename T>
std::vector<T> soc_cubic(const Matrix<T>& a) {
  const std::size_t n = a.rows();
  std::vector<T> h(n);
  for (std::size_t i = 0; i < n; ++i) {
    T s{0};
    T q{0};
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      T w{0};
      for (std::size_t k = 0; k < n; ++k) w += a(k, i) * a(k, j);
      s += w;
      q += w * w;
    }
    h[i] = std::sqrt(s * s + q);
  }
  return h;
}

template <typename T>
std::vector<T> soc_quadratic(const Matrix<T>& a) {
  const std::size_t n = a.rows();
  std::vector<T> h(n);
  for (std::size_t i = 0; i < n; ++i) {
    T s{0};
    T q{0};
    for (std::size_t k = 0; k < n; ++k) {
      s += a(k, i);
      q += a(k, i) * a(k, i);
    }
    h[i] = kSqrt2<T> * (s - q);
  }
  return h;
}

template <typename T>
std::vector<T> soc_linear(const Matrix<T>& a) {
  const std::size_t n = a.rows();
  std::vector<T> h(n);
  for (std::size_t i = 0; i < n; ++i) {
    T s{0};
    for (std::size_t k = 0; k < n; ++k) s += a(k, i);
    h[i] = kSqrt2<T> * (s - s * s / static_cast<T>(n));
  }
  return h;
}

}  // namespace reference

#define ANA_INSTANTIATE(T)                                                                    \
  template std::vector<T> soc_cubic<T>(const Matrix<T>&, const SocOptions&);                  \
  template std::vector<T> soc_quadratic<T>(const Matrix<T>&);                                 \
  template std::vector<T> soc_linear<T>(const Matrix<T>&);                                    \
  template std::vector<T> soc_quadratic_from_sums<T>(const Matrix<T>&, std::span<const T>);   \
  template std::vector<T> soc_linear_from_sums<T>(std::span<const T>, std::size_t);           \
  template std::vector<T> offdiag_similarity_sums<T>(const Matrix<T>&, const SocOptions&);    \
  template Matrix<T> soc_cubic<T>(const AttentionMaps<T>&, const SocOptions&);                \
  template Matrix<T> soc_quadratic<T>(const AttentionMaps<T>&);                               \
  template Matrix<T> soc_linear<T>(const AttentionMaps<T>&);                                  \
  template Matrix<T> soc_context<T>(const AttentionMaps<T>&, SocForm, const SocOptions&);     \
  template SecondOrderMap<T> second_order_map_oracle<T>(const Matrix<T>&);                    \
  template std::vector<T> column_norms<T>(const Matrix<T>&);                                  \
  template bool is_row_stochastic<T>(const Matrix<T>&, T);                                    \
  template Var<T> soc_layer<T>(Var<T>, SocForm, const SocOptions&);                           \
  template std::vector<T> reference::soc_cubic<T>(const Matrix<T>&);                          \
  template std::vector<T> reference::soc_quadratic<T>(const Matrix<T>&);                      \
  template std::vector<T> reference::soc_linear<T>(const Matrix<T>&);
ANA_INSTANTIATE(float)
ANA_INSTANTIATE(double)
#undef ANA_INSTANTIATE

}  // namespace ana
