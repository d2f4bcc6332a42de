#include "ana/train.hpp"

#include <cmath>
#include <memory>

namespace ana {

void TrainConfig::validate() const {
  net.validate();
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning rate must be finite and non-negative");
  }
  if (steps == 0) throw ConfigError("step count must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 && epsilon > 0.0)) {
    throw ConfigError("invalid Adam hyperparameters");
  }
}

Adam::Adam(const ModelParams<float>& params, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  params.for_each([&](const std::string&, const Matrix<float>& p) {
    m_.emplace_back(p.rows(), p.cols());
    v_.emplace_back(p.rows(), p.cols());
  });
}

void Adam::step(ModelParams<float>& params, const std::vector<Matrix<float>>& grads) {
  ++t_;
  const auto b1 = static_cast<float>(beta1_);
  const auto b2 = static_cast<float>(beta2_);
  const auto c1 = static_cast<float>(1.0 - std::pow(beta1_, static_cast<double>(t_)));
  const auto c2 = static_cast<float>(1.0 - std::pow(beta2_, static_cast<double>(t_)));
  const auto lr = static_cast<float>(lr_);
  const auto eps = static_cast<float>(eps_);
  std::size_t k = 0;
  params.for_each([&](const std::string&, Matrix<float>& p) {
    const Matrix<float>& g = grads[k];
    Matrix<float>& m = m_[k];
    Matrix<float>& v = v_[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = b1 * m[i] + (1.0f - b1) * g[i];
      v[i] = b2 * v[i] + (1.0f - b2) * g[i] * g[i];
      const float m_hat = m[i] / c1;
      const float v_hat = v[i] / c2;
      p[i] -= lr * (m_hat / (std::sqrt(v_hat) + eps));
    }
    ++k;
  });
}

TrainResult train(const SceneSource& source, const TrainConfig& cfg, const ProgressFn& progress) {
  cfg.validate();
  return train(ModelParams<float>::init(cfg.net, cfg.seed), source, cfg, progress);
}

TrainResult train(ModelParams<float> initial, const SceneSource& source, const TrainConfig& cfg,
                  const ProgressFn& progress) {
  cfg.validate();
  if (!(initial.config == cfg.net)) throw ConfigError("initial parameters do not match the network config");
  TrainResult result;
  result.params = std::move(initial);
  result.losses.reserve(cfg.steps);
  Adam adam(result.params, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon);
  std::vector<Matrix<float>> grads;
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    const CorrespondenceSet scene = source(step);
    if (!scene.has_labels()) throw TrainingError(step, "training scene has no labels");
    Tape<float> tape;
    const Var<float> coords = tape.constant(scene.coords.cast<float>());
    const Var<float> logits = forward(coords, result.params);
    LossInfo info;
    const Var<float> loss = weighted_bce_loss(logits, scene.labels, cfg.balance, &info);
    const double value = loss.value()[0];
    if (!std::isfinite(value)) throw TrainingError(step, "non-finite loss");
    if (info.single_class) ++result.single_class_steps;
    tape.backward(loss);
    grads.clear();
    result.params.for_each([&](const std::string&, const Matrix<float>& p) { grads.push_back(tape.gradient(p)); });
    adam.step(result.params, grads);
    result.losses.push_back(value);
    if (progress) progress(step, value);
  }
  return result;
}

SceneSource cycle_scenes(std::vector<CorrespondenceSet> scenes) {
  if (scenes.empty()) throw ConfigError("training dataset is empty");
  auto shared = std::make_shared<const std::vector<CorrespondenceSet>>(std::move(scenes));
  return [shared](std::size_t step) { return (*shared)[step % shared->size()]; };
}

SceneSource synthetic_scenes(const SceneConfig& base) {
  base.validate();
  return [base](std::size_t step) {
    SceneConfig cfg = base;
    cfg.seed = base.seed + step;
    return generate_scene(cfg);
  };
}

}  // namespace ana
