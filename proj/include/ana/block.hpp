#pragma once

#include <random>

#include "ana/attention.hpp"
#include "ana/soc.hpp"
#include "ana/tape.hpp"

namespace ana {

struct BlockConfig {
  AttentionConfig attention;
  /// SocForm::none disables the attention-consistent branch (first-order only).
  SocForm soc_form = SocForm::linear;
  bool context_norm = true;
  double norm_eps = 1e-3;
  SocOptions soc;
};

/// Learnable weights of one block.
///
///   psi(h)  = relu(sigmoid_alpha(h) W1 + b1) W2 + b2      heads -> d -> d
///   f'      = f + psi(h)
///   phi(v)  = relu(v Wf + bf)                             d -> d
///   out     = relu(norm([f' | phi(v)] Wm + bm))           2d -> d
///
/// where norm is per-column normalization over the set followed by a learned
/// gain and shift. alpha = exp(log_alpha) keeps alpha positive.
template <typename T>
struct BlockParams {
  AttentionParams<T> attention;
  Matrix<T> log_alpha;
  Matrix<T> encoder_w1;
  Matrix<T> encoder_b1;
  Matrix<T> encoder_w2;
  Matrix<T> encoder_b2;
  Matrix<T> fusion_w;
  Matrix<T> fusion_b;
  Matrix<T> merge_w;
  Matrix<T> merge_b;
  Matrix<T> norm_gain;
  Matrix<T> norm_bias;

  /// Zero weights with unit normalization gain and alpha = 1.
  static BlockParams zeros(std::size_t dim, std::size_t heads);
  /// Xavier-uniform weights, zero biases.
  static BlockParams random(std::size_t dim, std::size_t heads, std::mt19937_64& rng);

  T alpha() const;

  /// Visits every matrix in declaration order as f(name, matrix).
  template <typename F>
  void for_each(F&& f) {
    visit(*this, f);
  }
  template <typename F>
  void for_each(F&& f) const {
    visit(*this, f);
  }

  template <typename U>
  BlockParams<U> cast() const;

 private:
  template <typename Self, typename F>
  static void visit(Self& p, F& f) {
    f("attention.query", p.attention.query);
    f("attention.key", p.attention.key);
    f("attention.value", p.attention.value);
    f("log_alpha", p.log_alpha);
    f("encoder.w1", p.encoder_w1);
    f("encoder.b1", p.encoder_b1);
    f("encoder.w2", p.encoder_w2);
    f("encoder.b2", p.encoder_b2);
    f("fusion.w", p.fusion_w);
    f("fusion.b", p.fusion_b);
    f("merge.w", p.merge_w);
    f("merge.b", p.merge_b);
    f("norm.gain", p.norm_gain);
    f("norm.bias", p.norm_bias);
  }
};

/// Intermediate values of one block, captured on request.
template <typename T>
struct BlockTrace {
  AttentionMaps<T> attention;
  Matrix<T> context;  // N x heads second-order context (empty when disabled)
  Matrix<T> output;
};

/// 1 / (1 + exp(-alpha h))
template <typename T>
T alpha_sigmoid(T h, T alpha);

/// f + psi(h) with h the N x heads second-order context.
template <typename T>
Var<T> attention_context_enhance(Var<T> f, Var<T> h, const BlockParams<T>& params);

/// relu(norm([f' | phi(v)] Wm + bm)).
template <typename T>
Var<T> feature_context_enhance(Var<T> f_prime, Var<T> v, const BlockParams<T>& params,
                               const BlockConfig& cfg);

/// First-order attention, SOC per head, then both enhancements. N x d -> N x d.
template <typename T>
Var<T> ana_block_forward(Var<T> f, const BlockParams<T>& params, const BlockConfig& cfg,
                         BlockTrace<T>* trace = nullptr);

// Evaluation-only wrappers.
template <typename T>
Matrix<T> attention_context_enhance(const Matrix<T>& f, const Matrix<T>& h,
                                    const BlockParams<T>& params);
template <typename T>
Matrix<T> feature_context_enhance(const Matrix<T>& f_prime, const Matrix<T>& v,
                                  const BlockParams<T>& params, const BlockConfig& cfg);
template <typename T>
Matrix<T> ana_block_forward(const Matrix<T>& f, const BlockParams<T>& params,
                            const BlockConfig& cfg, BlockTrace<T>* trace = nullptr);

}  // namespace ana
