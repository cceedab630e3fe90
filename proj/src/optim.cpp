#include <algorithm>
#include <cmath>

#include "qc4qa/error.hpp"
#include "qc4qa/model.hpp"

namespace qc4qa {

double scheduled_lr(const AdamWConfig& config, std::int64_t step) {
  const auto total = std::max<std::int64_t>(1, config.total_steps);
  const auto warmup = static_cast<std::int64_t>(std::floor(config.warmup_fraction * static_cast<double>(total)));
  if (step < warmup) return config.lr * static_cast<double>(step) / static_cast<double>(warmup);
  const auto remaining = std::max<std::int64_t>(0, total - step);
  return config.lr * static_cast<double>(remaining) / static_cast<double>(std::max<std::int64_t>(1, total - warmup));
}

void adamw_update(std::span<double> params, std::span<const double> grads, std::span<double> m,
                  std::span<double> v, const AdamWConfig& config, std::int64_t step) {
  if (params.size() != grads.size() || params.size() != m.size() || params.size() != v.size()) {
    throw ShapeError("adamw_update: size mismatch");
  }
  const double lr = scheduled_lr(config, step);
  const double t = static_cast<double>(step + 1);
  const double bc1 = 1.0 - std::pow(config.beta1, t);
  const double bc2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g;
    v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g * g;
    const double m_hat = m[i] / bc1;
    const double v_hat = v[i] / bc2;
    params[i] -= lr * (m_hat / (std::sqrt(v_hat) + config.epsilon) + config.weight_decay * params[i]);
  }
}

OptimizerState OptimizerState::for_shape(const ModelShape& shape) {
  return {0, SpanParams::zeros(shape), SpanParams::zeros(shape)};
}

void check_finite(const SpanParams& grads) {
  for (const auto& t : grads.tensors()) {
    for (double x : t.values) {
      if (!std::isfinite(x)) throw NumericError("non-finite gradient in tensor '" + std::string(t.name) + "'");
    }
  }
}

void adamw_step(SpanModel& model, const SpanParams& grads, OptimizerState& state,
                const AdamWConfig& config) {
  if (grads.shape() != model.shape() || state.m.shape() != model.shape()) {
    throw ShapeError("adamw_step: gradient or optimizer state shape does not match the model");
  }
  check_finite(grads);
  auto p = model.params().tensors();
  auto g = grads.tensors();
  auto m = state.m.tensors();
  auto v = state.v.tensors();
  for (int i = 0; i < kNumTensors; ++i) {
    adamw_update(p[i].values, g[i].values, m[i].values, v[i].values, config, state.step);
  }
  ++state.step;
}

void sgd_step(SpanModel& model, const SpanParams& grads, double lr) {
  if (grads.shape() != model.shape()) throw ShapeError("sgd_step: gradient shape mismatch");
  check_finite(grads);
  auto p = model.params().tensors();
  auto g = grads.tensors();
  for (int i = 0; i < kNumTensors; ++i) {
    for (std::size_t j = 0; j < p[i].values.size(); ++j) p[i].values[j] -= lr * g[i].values[j];
  }
}

}  // namespace qc4qa
