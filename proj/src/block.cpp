#include "ana/block.hpp"

#include <cmath>

namespace ana {
namespace {

template <typename T>
Matrix<T> xavier(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix<T> m(fan_in, fan_out);
  for (T& v : m.values()) v = static_cast<T>(dist(rng));
  return m;
}

}  // namespace

template <typename T>
BlockParams<T> BlockParams<T>::zeros(std::size_t dim, std::size_t heads) {
  BlockParams p;
  p.attention = {Matrix<T>(dim, dim), Matrix<T>(dim, dim), Matrix<T>(dim, dim)};
  p.log_alpha = Matrix<T>(1, 1);
  p.encoder_w1 = Matrix<T>(heads, dim);
  p.encoder_b1 = Matrix<T>(1, dim);
  p.encoder_w2 = Matrix<T>(dim, dim);
  p.encoder_b2 = Matrix<T>(1, dim);
  p.fusion_w = Matrix<T>(dim, dim);
  p.fusion_b = Matrix<T>(1, dim);
  p.merge_w = Matrix<T>(2 * dim, dim);
  p.merge_b = Matrix<T>(1, dim);
  p.norm_gain = Matrix<T>(1, dim, T{1});
  p.norm_bias = Matrix<T>(1, dim);
  return p;
}

template <typename T>
BlockParams<T> BlockParams<T>::random(std::size_t dim, std::size_t heads, std::mt19937_64& rng) {
  BlockParams p = zeros(dim, heads);
  p.attention.query = xavier<T>(dim, dim, rng);
  p.attention.key = xavier<T>(dim, dim, rng);
  p.attention.value = xavier<T>(dim, dim, rng);
  p.encoder_w1 = xavier<T>(heads, dim, rng);
  p.encoder_w2 = xavier<T>(dim, dim, rng);
  p.fusion_w = xavier<T>(dim, dim, rng);
  p.merge_w = xavier<T>(2 * dim, dim, rng);
  return p;
}

template <typename T>
T BlockParams<T>::alpha() const {
  return std::exp(log_alpha[0]);
}

template <typename T>
template <typename U>
BlockParams<U> BlockParams<T>::cast() const {
  BlockParams<U> out;
  out.attention = {attention.query.template cast<U>(), attention.key.template cast<U>(),
                   attention.value.template cast<U>()};
  out.log_alpha = log_alpha.template cast<U>();
  out.encoder_w1 = encoder_w1.template cast<U>();
  out.encoder_b1 = encoder_b1.template cast<U>();
  out.encoder_w2 = encoder_w2.template cast<U>();
  out.encoder_b2 = encoder_b2.template cast<U>();
  out.fusion_w = fusion_w.template cast<U>();
  out.fusion_b = fusion_b.template cast<U>();
  out.merge_w = merge_w.template cast<U>();
  out.merge_b = merge_b.template cast<U>();
  out.norm_gain = norm_gain.template cast<U>();
  out.norm_bias = norm_bias.template cast<U>();
  return out;
}

template <typename T>
T alpha_sigmoid(T h, T alpha) {
  return T{1} / (T{1} + std::exp(-alpha * h));
}

template <typename T>
Var<T> attention_context_enhance(Var<T> f, Var<T> h, const BlockParams<T>& params) {
  Tape<T>& t = *f.tape;
  require_shape(h.rows() == f.rows() && h.cols() == params.encoder_w1.rows(),
                "attention_context_enhance", f.rows(), params.encoder_w1.rows(), h.rows(), h.cols());
  const Var<T> normalized = alpha_sigmoid(h, t.param(params.log_alpha));
  const Var<T> hidden =
      relu(add_bias(matmul(normalized, t.param(params.encoder_w1)), t.param(params.encoder_b1)));
  const Var<T> psi = add_bias(matmul(hidden, t.param(params.encoder_w2)), t.param(params.encoder_b2));
  return add(f, psi);
}

template <typename T>
Var<T> feature_context_enhance(Var<T> f_prime, Var<T> v, const BlockParams<T>& params,
                               const BlockConfig& cfg) {
  Tape<T>& t = *f_prime.tape;
  require_same_shape(f_prime.value(), v.value(), "feature_context_enhance");
  const Var<T> phi = relu(add_bias(matmul(v, t.param(params.fusion_w)), t.param(params.fusion_b)));
  const Var<T> parts[] = {f_prime, phi};
  Var<T> merged = add_bias(matmul(concat_cols<T>(parts), t.param(params.merge_w)), t.param(params.merge_b));
  if (cfg.context_norm) {
    merged = add_bias(mul_cols(context_norm(merged, static_cast<T>(cfg.norm_eps)), t.param(params.norm_gain)),
                      t.param(params.norm_bias));
  }
  return relu(merged);
}

template <typename T>
Var<T> ana_block_forward(Var<T> f, const BlockParams<T>& params, const BlockConfig& cfg,
                         BlockTrace<T>* trace) {
  const AttentionOutput<T> attn = first_order_attention(f, params.attention, cfg.attention);
  Var<T> f_prime = f;
  Matrix<T> context;
  if (cfg.soc_form != SocForm::none) {
    std::vector<Var<T>> cols;
    for (const Var<T>& a : attn.maps) cols.push_back(soc_layer(a, cfg.soc_form, cfg.soc));
    const Var<T> h = concat_cols<T>(cols);
    if (trace) context = h.value();
    f_prime = attention_context_enhance(f, h, params);
  }
  const Var<T> out = feature_context_enhance(f_prime, attn.context, params, cfg);
  if (trace) {
    trace->attention.maps.clear();
    for (const Var<T>& a : attn.maps) trace->attention.maps.push_back(a.value());
    trace->context = std::move(context);
    trace->output = out.value();
  }
  return out;
}

template <typename T>
Matrix<T> attention_context_enhance(const Matrix<T>& f, const Matrix<T>& h,
                                    const BlockParams<T>& params) {
  Tape<T> t(false);
  return attention_context_enhance(t.constant(f), t.constant(h), params).value();
}

template <typename T>
Matrix<T> feature_context_enhance(const Matrix<T>& f_prime, const Matrix<T>& v,
                                  const BlockParams<T>& params, const BlockConfig& cfg) {
  Tape<T> t(false);
  return feature_context_enhance(t.constant(f_prime), t.constant(v), params, cfg).value();
}

template <typename T>
Matrix<T> ana_block_forward(const Matrix<T>& f, const BlockParams<T>& params,
                            const BlockConfig& cfg, BlockTrace<T>* trace) {
  Tape<T> t(false);
  return ana_block_forward(t.constant(f), params, cfg, trace).value();
}

#define ANA_INSTANTIATE(T)                                                                      \
  template struct BlockParams<T>;                                                               \
  template T alpha_sigmoid<T>(T, T);                                                            \
  template Var<T> attention_context_enhance<T>(Var<T>, Var<T>, const BlockParams<T>&);          \
  template Var<T> feature_context_enhance<T>(Var<T>, Var<T>, const BlockParams<T>&,             \
                                             const BlockConfig&);                               \
  template Var<T> ana_block_forward<T>(Var<T>, const BlockParams<T>&, const BlockConfig&,       \
                                       BlockTrace<T>*);                                         \
  template Matrix<T> attention_context_enhance<T>(const Matrix<T>&, const Matrix<T>&,           \
                                                  const BlockParams<T>&);                       \
  template Matrix<T> feature_context_enhance<T>(const Matrix<T>&, const Matrix<T>&,             \
                                                const BlockParams<T>&, const BlockConfig&);     \
  template Matrix<T> ana_block_forward<T>(const Matrix<T>&, const BlockParams<T>&,              \
                                          const BlockConfig&, BlockTrace<T>*);
ANA_INSTANTIATE(float)
ANA_INSTANTIATE(double)
#undef ANA_INSTANTIATE

template BlockParams<double> BlockParams<float>::cast<double>() const;
template BlockParams<float> BlockParams<double>::cast<float>() const;
template BlockParams<float> BlockParams<float>::cast<float>() const;
template BlockParams<double> BlockParams<double>::cast<double>() const;

}  // namespace ana
