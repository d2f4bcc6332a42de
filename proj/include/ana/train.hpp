#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "ana/network.hpp"
#include "ana/scene.hpp"

namespace ana {

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t steps = 10000;
  std::uint64_t seed = 0;
  NetConfig net;
  LossBalance balance = LossBalance::balanced;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

/// Scene for a given step. Must be a pure function of the step index for
/// runs to be reproducible.
using SceneSource = std::function<CorrespondenceSet(std::size_t step)>;
using ProgressFn = std::function<void(std::size_t step, double loss)>;

struct TrainResult {
  ModelParams<float> params;
  std::vector<double> losses;          // one per step
  std::size_t single_class_steps = 0;  // steps whose scene had one empty class
};

/// Adaptive-moment gradient descent on the weighted BCE loss, one scene per
/// step. Throws TrainingError naming the step if the loss becomes non-finite.
TrainResult train(const SceneSource& source, const TrainConfig& cfg, const ProgressFn& progress = {});

/// Same, continuing from existing parameters.
TrainResult train(ModelParams<float> initial, const SceneSource& source, const TrainConfig& cfg,
                  const ProgressFn& progress = {});

/// Cycles through a fixed list of labeled scenes.
SceneSource cycle_scenes(std::vector<CorrespondenceSet> scenes);

/// Scene i is generate_scene(base) with seed base.seed + i.
SceneSource synthetic_scenes(const SceneConfig& base);

/// Adam state over a parameter set, kept in for_each order.
class Adam {
 public:
  Adam(const ModelParams<float>& params, double lr, double beta1, double beta2, double eps);
  void step(ModelParams<float>& params, const std::vector<Matrix<float>>& grads);

 private:
  std::vector<Matrix<float>> m_;
  std::vector<Matrix<float>> v_;
  double lr_;
  double beta1_;
  double beta2_;
  double eps_;
  std::size_t t_ = 0;
};

}  // namespace ana
