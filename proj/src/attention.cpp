#include "ana/attention.hpp"

#include <cmath>

namespace ana {

void validate_attention_config(std::size_t dim, const AttentionConfig& cfg) {
  if (cfg.heads == 0 || dim % cfg.heads != 0) {
    throw ConfigError("feature dimension " + std::to_string(dim) + " is not divisible by " +
                      std::to_string(cfg.heads) + " heads");
  }
}

template <typename T>
AttentionOutput<T> first_order_attention(Var<T> f, const AttentionParams<T>& params,
                                         const AttentionConfig& cfg) {
  const std::size_t d = f.cols();
  validate_attention_config(d, cfg);
  Tape<T>& tape = *f.tape;
  const std::size_t dh = d / cfg.heads;
  const T inv_scale = T{1} / std::sqrt(static_cast<T>(dh));

  const Var<T> q = matmul(f, tape.param(params.query));
  const Var<T> k = matmul(f, tape.param(params.key));
  const Var<T> v = cfg.value_mode == ValueMode::projected ? matmul(f, tape.param(params.value)) : f;

  AttentionOutput<T> out;
  std::vector<Var<T>> parts;
  for (std::size_t h = 0; h < cfg.heads; ++h) {
    const Var<T> qh = slice_cols(q, h * dh, dh);
    const Var<T> kh = slice_cols(k, h * dh, dh);
    const Var<T> a = softmax_rows(scale(matmul_nt(qh, kh), inv_scale));
    out.maps.push_back(a);
    parts.push_back(matmul(a, slice_cols(v, h * dh, dh)));
  }
  out.context = concat_cols<T>(parts);
  return out;
}

template <typename T>
std::pair<AttentionMaps<T>, Matrix<T>> first_order_attention(const Matrix<T>& f,
                                                             const AttentionParams<T>& params,
                                                             const AttentionConfig& cfg) {
  Tape<T> tape(false);
  const AttentionOutput<T> out = first_order_attention(tape.constant(f), params, cfg);
  AttentionMaps<T> maps;
  for (const Var<T>& m : out.maps) maps.maps.push_back(m.value());
  return {std::move(maps), out.context.value()};
}

#define ANA_INSTANTIATE(T)                                                                   \
  template AttentionOutput<T> first_order_attention<T>(Var<T>, const AttentionParams<T>&,    \
                                                       const AttentionConfig&);              \
  template std::pair<AttentionMaps<T>, Matrix<T>> first_order_attention<T>(                  \
      const Matrix<T>&, const AttentionParams<T>&, const AttentionConfig&);
ANA_INSTANTIATE(float)
ANA_INSTANTIATE(double)
#undef ANA_INSTANTIATE

}  // namespace ana
