#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ana/block.hpp"
#include "ana/scene.hpp"

namespace ana {

/// Architecture hyperparameters. Defaults: 5 blocks, d = 128, 4 heads,
/// linear SOC form.
struct NetConfig {
  std::size_t layers = 5;
  std::size_t dim = 128;
  std::size_t heads = 4;
  SocForm soc_form = SocForm::linear;
  ValueMode value_mode = ValueMode::projected;
  bool context_norm = true;

  void validate() const;
  BlockConfig block_config() const;
  friend bool operator==(const NetConfig&, const NetConfig&) = default;
};

/// input lift (4 -> d), L blocks, classifier (d -> 1).
template <typename T>
struct ModelParams {
  NetConfig config;
  Matrix<T> input_w;
  Matrix<T> input_b;
  std::vector<BlockParams<T>> blocks;
  Matrix<T> classifier_w;
  Matrix<T> classifier_b;

  static ModelParams init(const NetConfig& cfg, std::uint64_t seed);

  /// Visits every matrix in declaration order as f(name, matrix).
  template <typename F>
  void for_each(F&& f) {
    visit(*this, f);
  }
  template <typename F>
  void for_each(F&& f) const {
    visit(*this, f);
  }

  std::size_t parameter_count() const;

  template <typename U>
  ModelParams<U> cast() const;

 private:
  template <typename Self, typename F>
  static void visit(Self& p, F& f) {
    f(std::string("input.w"), p.input_w);
    f(std::string("input.b"), p.input_b);
    for (std::size_t i = 0; i < p.blocks.size(); ++i) {
      const std::string prefix = "block" + std::to_string(i) + ".";
      p.blocks[i].for_each([&](const char* name, auto& m) { f(prefix + name, m); });
    }
    f(std::string("classifier.w"), p.classifier_w);
    f(std::string("classifier.b"), p.classifier_b);
  }
};

template <typename T>
struct ForwardTrace {
  Matrix<T> input_features;           // after the 4 -> d lift
  std::vector<BlockTrace<T>> blocks;  // per block, in depth order
};

/// Logits (N x 1) for normalized N x 4 correspondences.
template <typename T>
Var<T> forward(Var<T> coords, const ModelParams<T>& params, ForwardTrace<T>* trace = nullptr);

template <typename T>
Matrix<T> forward(const Matrix<T>& coords, const ModelParams<T>& params,
                  ForwardTrace<T>* trace = nullptr);

/// Logistic of each logit.
template <typename T>
std::vector<T> predict(const Matrix<T>& logits);

/// 1 where weight >= threshold.
template <typename T>
std::vector<int> inlier_mask(std::span<const T> weights, T threshold = T(0.5));

enum class LossBalance { balanced, none };

struct LossInfo {
  std::size_t positives = 0;
  std::size_t negatives = 0;
  bool single_class = false;  // one class empty; its weight is 0
};

/// (1/N) sum_i tau_i H(y_i, logistic(o_i)) in the stable form
/// max(o, 0) - o y + log(1 + exp(-|o|)). Balanced weights are
/// tau = N / (2 N_pos) for positives and N / (2 N_neg) for negatives.
template <typename T>
Var<T> weighted_bce_loss(Var<T> logits, std::span<const int> labels,
                         LossBalance balance = LossBalance::balanced, LossInfo* info = nullptr);

template <typename T>
T weighted_bce_loss(const Matrix<T>& logits, std::span<const int> labels,
                    LossBalance balance = LossBalance::balanced, LossInfo* info = nullptr);

/// Axis-aligned coordinate range of one image, mapped onto [-1, 1].
struct ImageRange {
  double x_min = -1.0;
  double x_max = 1.0;
  double y_min = -1.0;
  double y_max = 1.0;

  static ImageRange from_size(double width, double height) { return {0.0, width, 0.0, height}; }
};

struct IntrinsicsPair {
  Mat3 first;
  Mat3 second;
};

/// With intrinsics, pixels go through K^-1; otherwise each image's bounding
/// box of keypoints is mapped onto [-1, 1] per axis.
CorrespondenceSet normalize_input(const CorrespondenceSet& c,
                                  const std::optional<IntrinsicsPair>& intrinsics);

/// Maps each image's given range onto [-1, 1] per axis.
CorrespondenceSet normalize_input(const CorrespondenceSet& c, const ImageRange& first,
                                  const ImageRange& second);

}  // namespace ana
