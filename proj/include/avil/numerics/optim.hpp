#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "avil/numerics/tensor.hpp"

namespace avil::nn {

/// A named trainable tensor. Frozen parameters are skipped by the optimizer
/// and must be registered on the tape without requires_grad.
struct Parameter {
  std::string name;
  Tensor value;
  bool frozen = false;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// First/second moment accumulators, one pair per parameter, plus the step count.
struct AdamState {
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
  std::int64_t step = 0;

  static AdamState zeros_like(std::span<const Parameter> params);
};

/// One bias-corrected Adam update. `grads[i]` pairs with `params[i]`; frozen
/// parameters (and their accumulators) are left untouched.
void adam_step(std::span<Parameter> params, std::span<const Tensor> grads, AdamState& state, double lr,
               const AdamConfig& config = {});

/// Cosine annealing without restarts.
struct LrSchedule {
  double lr_max = 1e-4;
  int total_epochs = 200;
  double lr_min = 0.0;
};

double cosine_lr(int epoch, const LrSchedule& schedule);

}  // namespace avil::nn
