#include "ana/network.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace ana {

void NetConfig::validate() const {
  if (layers < 1) throw ConfigError("network needs at least one block");
  if (dim < 1) throw ConfigError("feature dimension must be positive");
  validate_attention_config(dim, AttentionConfig{heads, value_mode});
}

BlockConfig NetConfig::block_config() const {
  BlockConfig b;
  b.attention = AttentionConfig{heads, value_mode};
  b.soc_form = soc_form;
  b.context_norm = context_norm;
  return b;
}

template <typename T>
ModelParams<T> ModelParams<T>::init(const NetConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  ModelParams p;
  p.config = cfg;
  const double in_bound = std::sqrt(6.0 / static_cast<double>(4 + cfg.dim));
  std::uniform_real_distribution<double> in_dist(-in_bound, in_bound);
  p.input_w = Matrix<T>(4, cfg.dim);
  for (T& v : p.input_w.values()) v = static_cast<T>(in_dist(rng));
  p.input_b = Matrix<T>(1, cfg.dim);
  for (std::size_t i = 0; i < cfg.layers; ++i) p.blocks.push_back(BlockParams<T>::random(cfg.dim, cfg.heads, rng));
  const double out_bound = std::sqrt(6.0 / static_cast<double>(cfg.dim + 1));
  std::uniform_real_distribution<double> out_dist(-out_bound, out_bound);
  p.classifier_w = Matrix<T>(cfg.dim, 1);
  for (T& v : p.classifier_w.values()) v = static_cast<T>(out_dist(rng));
  p.classifier_b = Matrix<T>(1, 1);
  return p;
}

template <typename T>
std::size_t ModelParams<T>::parameter_count() const {
  std::size_t n = 0;
  for_each([&](const std::string&, const Matrix<T>& m) { n += m.size(); });
  return n;
}

template <typename T>
template <typename U>
ModelParams<U> ModelParams<T>::cast() const {
  ModelParams<U> out;
  out.config = config;
  out.input_w = input_w.template cast<U>();
  out.input_b = input_b.template cast<U>();
  for (const auto& b : blocks) out.blocks.push_back(b.template cast<U>());
  out.classifier_w = classifier_w.template cast<U>();
  out.classifier_b = classifier_b.template cast<U>();
  return out;
}

template <typename T>
Var<T> forward(Var<T> coords, const ModelParams<T>& params, ForwardTrace<T>* trace) {
  Tape<T>& t = *coords.tape;
  require_shape(coords.cols() == 4, "forward (correspondences)", coords.rows(), coords.cols(),
                coords.rows(), 4);
  const BlockConfig bc = params.config.block_config();
  Var<T> f = add_bias(matmul(coords, t.param(params.input_w)), t.param(params.input_b));
  if (trace) {
    trace->input_features = f.value();
    trace->blocks.assign(params.blocks.size(), {});
  }
  for (std::size_t i = 0; i < params.blocks.size(); ++i) {
    f = ana_block_forward(f, params.blocks[i], bc, trace ? &trace->blocks[i] : nullptr);
  }
  return add_bias(matmul(f, t.param(params.classifier_w)), t.param(params.classifier_b));
}

template <typename T>
Matrix<T> forward(const Matrix<T>& coords, const ModelParams<T>& params, ForwardTrace<T>* trace) {
  Tape<T> t(false);
  return forward(t.constant(coords), params, trace).value();
}

template <typename T>
std::vector<T> predict(const Matrix<T>& logits) {
  std::vector<T> w(logits.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    const T o = logits[i];
    // Branches keep exp() from overflowing for large |o|.
    w[i] = o >= T{0} ? T{1} / (T{1} + std::exp(-o)) : std::exp(o) / (T{1} + std::exp(o));
  }
  return w;
}

template <typename T>
std::vector<int> inlier_mask(std::span<const T> weights, T threshold) {
  std::vector<int> mask(weights.size());
  for (std::size_t i = 0; i < weights.size(); ++i) mask[i] = weights[i] >= threshold ? 1 : 0;
  return mask;
}

namespace {

template <typename T>
std::vector<T> class_weights(std::span<const int> labels, LossBalance balance, LossInfo& info) {
  if (labels.empty()) throw ArgumentError("weighted_bce_loss: no samples");
  info = {};
  for (int y : labels) {
    if (y == 1) {
      ++info.positives;
    } else if (y == 0) {
      ++info.negatives;
    } else {
      throw ArgumentError("weighted_bce_loss: labels must be 0 or 1");
    }
  }
  info.single_class = info.positives == 0 || info.negatives == 0;
  const T n = static_cast<T>(labels.size());
  T w_pos{1};
  T w_neg{1};
  if (balance == LossBalance::balanced) {
    w_pos = info.positives ? n / (T{2} * static_cast<T>(info.positives)) : T{0};
    w_neg = info.negatives ? n / (T{2} * static_cast<T>(info.negatives)) : T{0};
  }
  std::vector<T> tau(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) tau[i] = labels[i] == 1 ? w_pos : w_neg;
  return tau;
}

template <typename T>
T stable_bce(T o, int y) {
  return std::max(o, T{0}) - o * static_cast<T>(y) + std::log1p(std::exp(-std::abs(o)));
}

}  // namespace

template <typename T>
Var<T> weighted_bce_loss(Var<T> logits, std::span<const int> labels, LossBalance balance,
                         LossInfo* info) {
  const Matrix<T>& o = logits.value();
  require_shape(o.cols() == 1 && o.rows() == labels.size(), "weighted_bce_loss", o.rows(), o.cols(),
                labels.size(), 1);
  LossInfo local;
  std::vector<T> tau = class_weights<T>(labels, balance, local);
  if (info) *info = local;
  const T inv_n = T{1} / static_cast<T>(labels.size());
  T total{0};
  for (std::size_t i = 0; i < labels.size(); ++i) total += tau[i] * stable_bce(o[i], labels[i]);
  std::vector<int> y(labels.begin(), labels.end());
  return logits.tape->push(
      Matrix<T>(1, 1, total * inv_n), {logits.id},
      [l = logits.id, tau = std::move(tau), y = std::move(y), inv_n](Tape<T>& t, std::size_t self) {
        const T g = t.grad(self)[0];
        const Matrix<T>& o = t.value(l);
        Matrix<T>& go = t.grad(l);
        for (std::size_t i = 0; i < y.size(); ++i) {
          const T p = o[i] >= T{0} ? T{1} / (T{1} + std::exp(-o[i])) : std::exp(o[i]) / (T{1} + std::exp(o[i]));
          go[i] += g * tau[i] * (p - static_cast<T>(y[i])) * inv_n;
        }
      });
}

template <typename T>
T weighted_bce_loss(const Matrix<T>& logits, std::span<const int> labels, LossBalance balance,
                    LossInfo* info) {
  Tape<T> t(false);
  return weighted_bce_loss(t.constant(logits), labels, balance, info).value()[0];
}

namespace {

struct AxisMap {
  double offset;
  double scale;
  double operator()(double v) const { return (v - offset) * scale; }
};

AxisMap axis_map(double lo, double hi, const char* what) {
  if (!(hi > lo) || !std::isfinite(hi - lo)) {
    throw DegenerateInputError(std::string("normalize_input: zero-extent coordinate range on ") + what);
  }
  return {(lo + hi) / 2.0, 2.0 / (hi - lo)};
}

void require_finite_coords(const CorrespondenceSet& c) {
  require_shape(c.coords.cols() == 4, "normalize_input", c.coords.rows(), c.coords.cols(),
                c.coords.rows(), 4);
  if (!all_finite(c.coords)) throw DegenerateInputError("normalize_input: non-finite coordinates");
}

}  // namespace

CorrespondenceSet normalize_input(const CorrespondenceSet& c, const ImageRange& first,
                                  const ImageRange& second) {
  require_finite_coords(c);
  const AxisMap maps[4] = {axis_map(first.x_min, first.x_max, "first image x"),
                           axis_map(first.y_min, first.y_max, "first image y"),
                           axis_map(second.x_min, second.x_max, "second image x"),
                           axis_map(second.y_min, second.y_max, "second image y")};
  CorrespondenceSet out = c;
  for (std::size_t i = 0; i < out.size(); ++i) {
    for (std::size_t k = 0; k < 4; ++k) out.coords(i, k) = maps[k](c.coords(i, k));
  }
  return out;
}

CorrespondenceSet normalize_input(const CorrespondenceSet& c,
                                  const std::optional<IntrinsicsPair>& intrinsics) {
  require_finite_coords(c);
  if (!intrinsics) {
    if (c.size() == 0) throw DegenerateInputError("normalize_input: empty correspondence set");
    double lo[4];
    double hi[4];
    for (std::size_t k = 0; k < 4; ++k) lo[k] = hi[k] = c.coords(0, k);
    for (std::size_t i = 1; i < c.size(); ++i) {
      for (std::size_t k = 0; k < 4; ++k) {
        lo[k] = std::min(lo[k], c.coords(i, k));
        hi[k] = std::max(hi[k], c.coords(i, k));
      }
    }
    return normalize_input(c, ImageRange{lo[0], hi[0], lo[1], hi[1]}, ImageRange{lo[2], hi[2], lo[3], hi[3]});
  }
  const Mat3 inv[2] = {mat3_inverse(intrinsics->first), mat3_inverse(intrinsics->second)};
  CorrespondenceSet out = c;
  for (std::size_t i = 0; i < c.size(); ++i) {
    for (std::size_t v = 0; v < 2; ++v) {
      const Mat3& k = inv[v];
      const double x = c.coords(i, 2 * v);
      const double y = c.coords(i, 2 * v + 1);
      const double hx = k[0] * x + k[1] * y + k[2];
      const double hy = k[3] * x + k[4] * y + k[5];
      const double hz = k[6] * x + k[7] * y + k[8];
      if (hz == 0.0) throw DegenerateInputError("normalize_input: point maps to infinity");
      out.coords(i, 2 * v) = hx / hz;
      out.coords(i, 2 * v + 1) = hy / hz;
    }
  }
  return out;
}

#define ANA_INSTANTIATE(T)                                                                        \
  template struct ModelParams<T>;                                                                 \
  template Var<T> forward<T>(Var<T>, const ModelParams<T>&, ForwardTrace<T>*);                    \
  template Matrix<T> forward<T>(const Matrix<T>&, const ModelParams<T>&, ForwardTrace<T>*);       \
  template std::vector<T> predict<T>(const Matrix<T>&);                                           \
  template std::vector<int> inlier_mask<T>(std::span<const T>, T);                                \
  template Var<T> weighted_bce_loss<T>(Var<T>, std::span<const int>, LossBalance, LossInfo*);     \
  template T weighted_bce_loss<T>(const Matrix<T>&, std::span<const int>, LossBalance, LossInfo*);
ANA_INSTANTIATE(float)
ANA_INSTANTIATE(double)
#undef ANA_INSTANTIATE

template ModelParams<double> ModelParams<float>::cast<double>() const;
template ModelParams<float> ModelParams<double>::cast<float>() const;

}  // namespace ana
