#include "ana/tape.hpp"

#include <algorithm>
#include <cmath>

#include "ana/kernels.hpp"

namespace ana {

template <typename T>
Var<T> Tape<T>::constant(Matrix<T> value) {
  nodes_.push_back(Node{std::move(value), {}, false, false, {}});
  return {this, nodes_.size() - 1};
}

template <typename T>
Var<T> Tape<T>::variable(Matrix<T> value) {
  nodes_.push_back(Node{std::move(value), {}, record_, false, {}});
  return {this, nodes_.size() - 1};
}

template <typename T>
Var<T> Tape<T>::param(const Matrix<T>& m) {
  if (auto it = params_.find(&m); it != params_.end()) return {this, it->second};
  Var<T> v = variable(m);
  params_.emplace(&m, v.id);
  return v;
}

template <typename T>
Var<T> Tape<T>::push(Matrix<T> value, std::initializer_list<std::size_t> inputs, BackwardFn fn) {
  return push(std::move(value), std::span<const std::size_t>(inputs.begin(), inputs.size()),
              std::move(fn));
}

template <typename T>
Var<T> Tape<T>::push(Matrix<T> value, std::span<const std::size_t> inputs, BackwardFn fn) {
  bool needs = false;
  if (record_) {
    for (std::size_t id : inputs) needs = needs || nodes_[id].needs_grad;
  }
  nodes_.push_back(Node{std::move(value), {}, needs, false, needs ? std::move(fn) : BackwardFn{}});
  return {this, nodes_.size() - 1};
}

template <typename T>
Matrix<T>& Tape<T>::grad(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.has_grad) {
    n.grad = Matrix<T>(n.value.rows(), n.value.cols());
    n.has_grad = true;
  }
  return n.grad;
}

template <typename T>
void Tape<T>::backward(Var<T> root) {
  const Matrix<T>& rv = value(root.id);
  require_shape(rv.rows() == 1 && rv.cols() == 1, "backward (scalar root)", rv.rows(), rv.cols(),
                1, 1);
  for (Node& n : nodes_) {
    n.has_grad = false;
    n.grad = Matrix<T>();
  }
  sweep_.clear();
  if (!nodes_[root.id].needs_grad) return;
  grad(root.id)(0, 0) = T{1};
  for (std::size_t id = root.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.has_grad) continue;
    sweep_.push_back(id);
    if (n.backward) n.backward(*this, id);
  }
}

template <typename T>
Matrix<T> Tape<T>::gradient(const Matrix<T>& param) const {
  auto it = params_.find(&param);
  if (it == params_.end()) return Matrix<T>(param.rows(), param.cols());
  return gradient(Var<T>{const_cast<Tape*>(this), it->second});
}

template <typename T>
Matrix<T> Tape<T>::gradient(Var<T> v) const {
  const Node& n = nodes_[v.id];
  if (!n.has_grad) return Matrix<T>(n.value.rows(), n.value.cols());
  return n.grad;
}

// ---------------------------------------------------------------------------

namespace {

template <typename T>
void add_into(Matrix<T>& dst, const Matrix<T>& src) {
  T* d = dst.data();
  const T* s = src.data();
  const std::size_t n = dst.size();
  for (std::size_t i = 0; i < n; ++i) d[i] += s[i];
}

template <typename T>
void require_same_tape(Var<T> a, Var<T> b, const char* op) {
  if (a.tape != b.tape) throw ShapeError(std::string(op) + ": operands live on different tapes");
}

}  // namespace

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  require_same_tape(a, b, "matmul");
  Tape<T>& t = *a.tape;
  return t.push(ana::matmul(a.value(), b.value()), {a.id, b.id},
                [a = a.id, b = b.id](Tape<T>& t, std::size_t self) {
                  const Matrix<T>& g = t.grad(self);
                  if (t.needs_grad(a)) gemm_accumulate(T{1}, g, Trans::no, t.value(b), Trans::yes, t.grad(a));
                  if (t.needs_grad(b)) gemm_accumulate(T{1}, t.value(a), Trans::yes, g, Trans::no, t.grad(b));
                });
}

template <typename T>
Var<T> matmul_nt(Var<T> a, Var<T> b) {
  require_same_tape(a, b, "matmul_nt");
  Tape<T>& t = *a.tape;
  return t.push(ana::matmul_nt(a.value(), b.value()), {a.id, b.id},
                [a = a.id, b = b.id](Tape<T>& t, std::size_t self) {
                  const Matrix<T>& g = t.grad(self);
                  if (t.needs_grad(a)) gemm_accumulate(T{1}, g, Trans::no, t.value(b), Trans::no, t.grad(a));
                  if (t.needs_grad(b)) gemm_accumulate(T{1}, g, Trans::yes, t.value(a), Trans::no, t.grad(b));
                });
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  require_same_tape(a, b, "add");
  require_same_shape(a.value(), b.value(), "add");
  Matrix<T> out = a.value();
  add_into(out, b.value());
  return a.tape->push(std::move(out), {a.id, b.id}, [a = a.id, b = b.id](Tape<T>& t, std::size_t self) {
    const Matrix<T>& g = t.grad(self);
    if (t.needs_grad(a)) add_into(t.grad(a), g);
    if (t.needs_grad(b)) add_into(t.grad(b), g);
  });
}

template <typename T>
Var<T> add_bias(Var<T> x, Var<T> bias) {
  require_same_tape(x, bias, "add_bias");
  const Matrix<T>& xv = x.value();
  const Matrix<T>& bv = bias.value();
  require_shape(bv.rows() == 1 && bv.cols() == xv.cols(), "add_bias", xv.rows(), xv.cols(),
                bv.rows(), bv.cols());
  Matrix<T> out = xv;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += bv[c];
  }
  return x.tape->push(std::move(out), {x.id, bias.id},
                      [x = x.id, b = bias.id](Tape<T>& t, std::size_t self) {
                        const Matrix<T>& g = t.grad(self);
                        if (t.needs_grad(x)) add_into(t.grad(x), g);
                        if (t.needs_grad(b)) {
                          Matrix<T>& gb = t.grad(b);
                          const auto sums = column_sums(g);
                          for (std::size_t c = 0; c < sums.size(); ++c) gb[c] += sums[c];
                        }
                      });
}

template <typename T>
Var<T> mul_cols(Var<T> x, Var<T> gain) {
  require_same_tape(x, gain, "mul_cols");
  const Matrix<T>& xv = x.value();
  const Matrix<T>& gv = gain.value();
  require_shape(gv.rows() == 1 && gv.cols() == xv.cols(), "mul_cols", xv.rows(), xv.cols(),
                gv.rows(), gv.cols());
  Matrix<T> out = xv;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] *= gv[c];
  }
  return x.tape->push(std::move(out), {x.id, gain.id},
                      [x = x.id, k = gain.id](Tape<T>& t, std::size_t self) {
                        const Matrix<T>& g = t.grad(self);
                        const Matrix<T>& xv = t.value(x);
                        const Matrix<T>& kv = t.value(k);
                        if (t.needs_grad(x)) {
                          Matrix<T>& gx = t.grad(x);
                          for (std::size_t r = 0; r < g.rows(); ++r)
                            for (std::size_t c = 0; c < g.cols(); ++c) gx(r, c) += g(r, c) * kv[c];
                        }
                        if (t.needs_grad(k)) {
                          Matrix<T>& gk = t.grad(k);
                          for (std::size_t r = 0; r < g.rows(); ++r)
                            for (std::size_t c = 0; c < g.cols(); ++c) gk[c] += g(r, c) * xv(r, c);
                        }
                      });
}

template <typename T>
Var<T> hadamard(Var<T> a, Var<T> b) {
  require_same_tape(a, b, "hadamard");
  require_same_shape(a.value(), b.value(), "hadamard");
  Matrix<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return a.tape->push(std::move(out), {a.id, b.id}, [a = a.id, b = b.id](Tape<T>& t, std::size_t self) {
    const Matrix<T>& g = t.grad(self);
    if (t.needs_grad(a)) {
      Matrix<T>& ga = t.grad(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * t.value(b)[i];
    }
    if (t.needs_grad(b)) {
      Matrix<T>& gb = t.grad(b);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * t.value(a)[i];
    }
  });
}

template <typename T>
Var<T> scale(Var<T> x, T factor) {
  Matrix<T> out = x.value();
  for (T& v : out.values()) v *= factor;
  return x.tape->push(std::move(out), {x.id}, [x = x.id, factor](Tape<T>& t, std::size_t self) {
    const Matrix<T>& g = t.grad(self);
    Matrix<T>& gx = t.grad(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += factor * g[i];
  });
}

template <typename T>
Var<T> relu(Var<T> x) {
  Matrix<T> out = x.value();
  for (T& v : out.values()) v = v < T{0} ? T{0} : v;  // NaN passes through
  return x.tape->push(std::move(out), {x.id}, [x = x.id](Tape<T>& t, std::size_t self) {
    const Matrix<T>& g = t.grad(self);
    const Matrix<T>& xv = t.value(x);
    Matrix<T>& gx = t.grad(x);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (xv[i] > T{0}) gx[i] += g[i];
    }
  });
}

template <typename T>
Var<T> softmax_rows(Var<T> x) {
  return x.tape->push(ana::softmax_rows(x.value()), {x.id}, [x = x.id](Tape<T>& t, std::size_t self) {
    const Matrix<T>& g = t.grad(self);
    const Matrix<T>& y = t.value(self);
    Matrix<T>& gx = t.grad(x);
    const auto rows = static_cast<std::ptrdiff_t>(y.rows());
    const std::size_t cols = y.cols();
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t r = 0; r < rows; ++r) {
      const T* yr = y.data() + r * cols;
      const T* gr = g.data() + r * cols;
      T* out = gx.data() + r * cols;
      T dot{0};
      for (std::size_t j = 0; j < cols; ++j) dot += gr[j] * yr[j];
      for (std::size_t j = 0; j < cols; ++j) out[j] += yr[j] * (gr[j] - dot);
    }
  });
}

template <typename T>
Var<T> slice_cols(Var<T> x, std::size_t begin, std::size_t count) {
  const Matrix<T>& xv = x.value();
  if (begin + count > xv.cols()) {
    throw ShapeError("slice_cols: columns [" + std::to_string(begin) + ", " +
                     std::to_string(begin + count) + ") out of " + shape_string(xv.rows(), xv.cols()));
  }
  Matrix<T> out(xv.rows(), count);
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    std::copy_n(xv.row(r).begin() + begin, count, out.row(r).begin());
  }
  return x.tape->push(std::move(out), {x.id}, [x = x.id, begin, count](Tape<T>& t, std::size_t self) {
    const Matrix<T>& g = t.grad(self);
    Matrix<T>& gx = t.grad(x);
    for (std::size_t r = 0; r < g.rows(); ++r) {
      for (std::size_t c = 0; c < count; ++c) gx(r, begin + c) += g(r, c);
    }
  });
}

template <typename T>
Var<T> concat_cols(std::span<const Var<T>> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no operands");
  Tape<T>& tape = *parts.front().tape;
  const std::size_t rows = parts.front().rows();
  std::size_t cols = 0;
  std::vector<std::size_t> ids;
  for (const Var<T>& p : parts) {
    require_same_tape(parts.front(), p, "concat_cols");
    require_shape(p.rows() == rows, "concat_cols", rows, cols, p.rows(), p.cols());
    cols += p.cols();
    ids.push_back(p.id);
  }
  Matrix<T> out(rows, cols);
  std::size_t offset = 0;
  for (const Var<T>& p : parts) {
    const Matrix<T>& v = p.value();
    for (std::size_t r = 0; r < rows; ++r) std::copy(v.row(r).begin(), v.row(r).end(), out.row(r).begin() + offset);
    offset += v.cols();
  }
  return tape.push(std::move(out), std::span<const std::size_t>(ids),
                   [ids](Tape<T>& t, std::size_t self) {
                     const Matrix<T>& g = t.grad(self);
                     std::size_t offset = 0;
                     for (std::size_t id : ids) {
                       const std::size_t w = t.value(id).cols();
                       if (t.needs_grad(id)) {
                         Matrix<T>& gi = t.grad(id);
                         for (std::size_t r = 0; r < g.rows(); ++r)
                           for (std::size_t c = 0; c < w; ++c) gi(r, c) += g(r, offset + c);
                       }
                       offset += w;
                     }
                   });
}

template <typename T>
Var<T> context_norm(Var<T> x, T eps) {
  const Matrix<T>& xv = x.value();
  const std::size_t n = xv.rows();
  const std::size_t d = xv.cols();
  Matrix<T> out(n, d);
  Matrix<T> inv_std(1, d);
  const auto mean = column_sums(xv);
  const T inv_n = T{1} / static_cast<T>(std::max<std::size_t>(n, 1));
  std::vector<T> var(d, T{0});
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < d; ++c) {
      const T dev = xv(r, c) - mean[c] * inv_n;
      var[c] += dev * dev;
    }
  }
  for (std::size_t c = 0; c < d; ++c) inv_std[c] = T{1} / std::sqrt(var[c] * inv_n + eps);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < d; ++c) out(r, c) = (xv(r, c) - mean[c] * inv_n) * inv_std[c];
  }
  return x.tape->push(std::move(out), {x.id}, [x = x.id, inv_std](Tape<T>& t, std::size_t self) {
    const Matrix<T>& g = t.grad(self);
    const Matrix<T>& y = t.value(self);
    Matrix<T>& gx = t.grad(x);
    const std::size_t n = g.rows();
    const std::size_t d = g.cols();
    const T inv_n = T{1} / static_cast<T>(n);
    std::vector<T> mean_g(d, T{0});
    std::vector<T> mean_gy(d, T{0});
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = 0; c < d; ++c) {
        mean_g[c] += g(r, c);
        mean_gy[c] += g(r, c) * y(r, c);
      }
    }
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = 0; c < d; ++c) {
        gx(r, c) += inv_std[c] * (g(r, c) - mean_g[c] * inv_n - y(r, c) * mean_gy[c] * inv_n);
      }
    }
  });
}

template <typename T>
Var<T> alpha_sigmoid(Var<T> h, Var<T> log_alpha) {
  require_same_tape(h, log_alpha, "alpha_sigmoid");
  const Matrix<T>& la = log_alpha.value();
  require_shape(la.rows() == 1 && la.cols() == 1, "alpha_sigmoid (log_alpha)", la.rows(), la.cols(), 1, 1);
  const T alpha = std::exp(la[0]);
  Matrix<T> out = h.value();
  for (T& v : out.values()) v = T{1} / (T{1} + std::exp(-alpha * v));
  return h.tape->push(std::move(out), {h.id, log_alpha.id},
                      [h = h.id, la = log_alpha.id, alpha](Tape<T>& t, std::size_t self) {
                        const Matrix<T>& g = t.grad(self);
                        const Matrix<T>& y = t.value(self);
                        const Matrix<T>& hv = t.value(h);
                        T g_alpha{0};
                        const bool want_h = t.needs_grad(h);
                        for (std::size_t i = 0; i < g.size(); ++i) {
                          const T dy = g[i] * y[i] * (T{1} - y[i]);
                          if (want_h) t.grad(h)[i] += dy * alpha;
                          g_alpha += dy * hv[i];
                        }
                        // d alpha / d log_alpha = alpha
                        if (t.needs_grad(la)) t.grad(la)[0] += g_alpha * alpha;
                      });
}

template <typename T>
Var<T> sum(Var<T> x) {
  T acc{0};
  for (T v : x.value().values()) acc += v;
  return x.tape->push(Matrix<T>(1, 1, acc), {x.id}, [x = x.id](Tape<T>& t, std::size_t self) {
    const T g = t.grad(self)[0];
    for (T& v : t.grad(x).values()) v += g;
  });
}

#define ANA_INSTANTIATE(T)                                                   \
  template class Tape<T>;                                                    \
  template Var<T> matmul<T>(Var<T>, Var<T>);                                 \
  template Var<T> matmul_nt<T>(Var<T>, Var<T>);                              \
  template Var<T> add<T>(Var<T>, Var<T>);                                    \
  template Var<T> add_bias<T>(Var<T>, Var<T>);                               \
  template Var<T> mul_cols<T>(Var<T>, Var<T>);                               \
  template Var<T> hadamard<T>(Var<T>, Var<T>);                               \
  template Var<T> scale<T>(Var<T>, T);                                       \
  template Var<T> relu<T>(Var<T>);                                           \
  template Var<T> softmax_rows<T>(Var<T>);                                   \
  template Var<T> slice_cols<T>(Var<T>, std::size_t, std::size_t);           \
  template Var<T> concat_cols<T>(std::span<const Var<T>>);                   \
  template Var<T> context_norm<T>(Var<T>, T);                                \
  template Var<T> alpha_sigmoid<T>(Var<T>, Var<T>);                          \
  template Var<T> sum<T>(Var<T>);
ANA_INSTANTIATE(float)
ANA_INSTANTIATE(double)
#undef ANA_INSTANTIATE

}  // namespace ana
