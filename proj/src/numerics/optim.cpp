#include "avil/numerics/optim.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace avil::nn {

AdamState AdamState::zeros_like(std::span<const Parameter> params) {
  AdamState state;
  for (const auto& p : params) {
    state.first_moment.emplace_back(p.value.shape());
    state.second_moment.emplace_back(p.value.shape());
  }
  return state;
}

void adam_step(std::span<Parameter> params, std::span<const Tensor> grads, AdamState& state, double lr,
               const AdamConfig& config) {
  if (grads.size() != params.size() || state.first_moment.size() != params.size() ||
      state.second_moment.size() != params.size()) {
    throw DimensionError("adam_step: parameter, gradient and state counts differ");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Shape& s = params[i].value.shape();
    if (grads[i].shape() != s || state.first_moment[i].shape() != s || state.second_moment[i].shape() != s) {
      throw DimensionError("adam_step: shape mismatch for parameter '" + params[i].name + "'");
    }
  }

  ++state.step;
  const double bias1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double bias2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  const double b1 = config.beta1;
  const double b2 = config.beta2;

  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].frozen) continue;
    auto& value = params[i].value;
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    const auto& g = grads[i];
    for (std::size_t j = 0; j < value.size(); ++j) {
      const double gj = g[j];
      const double mj = b1 * m[j] + (1.0 - b1) * gj;
      const double vj = b2 * v[j] + (1.0 - b2) * gj * gj;
      m[j] = static_cast<float>(mj);
      v[j] = static_cast<float>(vj);
      const double m_hat = mj / bias1;
      const double v_hat = vj / bias2;
      value[j] -= static_cast<float>(lr * m_hat / (std::sqrt(v_hat) + config.epsilon));
    }
    if (!value.all_finite()) throw NumericError("adam_step produced non-finite values in '" + params[i].name + "'");
  }
}

double cosine_lr(int epoch, const LrSchedule& schedule) {
  if (schedule.total_epochs < 1) throw std::invalid_argument("cosine_lr: total_epochs must be positive");
  if (epoch < 0 || epoch > schedule.total_epochs) {
    throw std::out_of_range("cosine_lr: epoch " + std::to_string(epoch) + " outside [0, " +
                            std::to_string(schedule.total_epochs) + "]");
  }
  const double progress = static_cast<double>(epoch) / schedule.total_epochs;
  return schedule.lr_min +
         0.5 * (schedule.lr_max - schedule.lr_min) * (1.0 + std::cos(std::numbers::pi * progress));
}

}  // namespace avil::nn
