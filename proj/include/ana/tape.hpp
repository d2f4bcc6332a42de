#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <unordered_map>
#include <vector>

#include "ana/matrix.hpp"

namespace ana {

template <typename T>
class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  std::size_t id = 0;

  const Matrix<T>& value() const { return tape->value(id); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
};

/// Reverse-mode tape over matrix-valued primitives.
///
/// Nodes are appended in evaluation order, so node ids are a topological
/// order and the reverse sweep simply walks ids downward. Nodes that do not
/// depend on any gradient-requiring leaf never store a backward closure and
/// never receive gradient.
///
/// Parameters are bound by address with param(): binding the same Matrix
/// twice returns the same leaf, and gradient(m) retrieves its gradient after
/// backward().
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  /// With record_gradients = false the tape only evaluates (inference).
  explicit Tape(bool record_gradients = true) : record_(record_gradients) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Matrix<T> value);
  Var<T> variable(Matrix<T> value);
  Var<T> param(const Matrix<T>& m);

  /// Appends a computed node. `fn` must accumulate into the gradients of
  /// those inputs for which needs_grad() is true.
  Var<T> push(Matrix<T> value, std::initializer_list<std::size_t> inputs, BackwardFn fn);
  Var<T> push(Matrix<T> value, std::span<const std::size_t> inputs, BackwardFn fn);

  const Matrix<T>& value(std::size_t id) const { return nodes_[id].value; }
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }
  bool recording() const noexcept { return record_; }

  /// Gradient buffer of a node, zero-initialized on first access.
  Matrix<T>& grad(std::size_t id);

  /// Seeds d(root)/d(root) = 1 and sweeps in reverse. Root must be 1x1.
  void backward(Var<T> root);

  /// Gradient of a bound parameter; zeros when it was never bound or not
  /// reached by the sweep.
  Matrix<T> gradient(const Matrix<T>& param) const;

  /// Gradient of any node (zeros when not reached).
  Matrix<T> gradient(Var<T> v) const;

  std::size_t size() const noexcept { return nodes_.size(); }

  /// Ids visited by the last backward() in visiting order.
  const std::vector<std::size_t>& last_sweep() const noexcept { return sweep_; }

 private:
  struct Node {
    Matrix<T> value;
    Matrix<T> grad;
    bool needs_grad = false;
    bool has_grad = false;
    BackwardFn backward;
  };

  std::vector<Node> nodes_;
  std::unordered_map<const Matrix<T>*, std::size_t> params_;
  std::vector<std::size_t> sweep_;
  bool record_;
};

// Differentiable primitives. All operands must live on the same tape.

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b);
/// a * b^T
template <typename T>
Var<T> matmul_nt(Var<T> a, Var<T> b);
template <typename T>
Var<T> add(Var<T> a, Var<T> b);
/// x + bias, bias is 1 x cols broadcast over rows.
template <typename T>
Var<T> add_bias(Var<T> x, Var<T> bias);
/// x scaled column-wise by a 1 x cols gain.
template <typename T>
Var<T> mul_cols(Var<T> x, Var<T> gain);
template <typename T>
Var<T> hadamard(Var<T> a, Var<T> b);
template <typename T>
Var<T> scale(Var<T> x, T factor);
template <typename T>
Var<T> relu(Var<T> x);
template <typename T>
Var<T> softmax_rows(Var<T> x);
template <typename T>
Var<T> slice_cols(Var<T> x, std::size_t begin, std::size_t count);
template <typename T>
Var<T> concat_cols(std::span<const Var<T>> parts);
/// Per-column normalization over the row (set) axis: (x - mean) / sqrt(var + eps).
template <typename T>
Var<T> context_norm(Var<T> x, T eps);
/// 1 / (1 + exp(-exp(log_alpha) * h)), log_alpha is 1x1.
template <typename T>
Var<T> alpha_sigmoid(Var<T> h, Var<T> log_alpha);
/// Sum of all entries as a 1x1 node.
template <typename T>
Var<T> sum(Var<T> x);

}  // namespace ana
