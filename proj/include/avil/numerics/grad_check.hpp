#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "avil/numerics/tape.hpp"

namespace avil::nn {

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  /// Elements where the left and right one-sided differences disagree, i.e.
  /// the function has a kink (ReLU at 0, max-pool ties) within the probe step.
  std::size_t skipped_nondifferentiable = 0;
};

/// Builds the op under test on a fresh tape from the given input leaves and returns its output.
using GradCheckFn = std::function<Var(Tape64&, std::span<const Var>)>;

/// Compares reverse-mode gradients of a random projection of `fn`'s output with
/// central finite differences (step `h`) for every element of every input.
/// Relative error is |a - n| / max(|a|, |n|, floor).
GradCheckReport grad_check(const GradCheckFn& fn, const std::vector<Tensor64>& inputs, std::uint64_t seed,
                           double h = 1e-6, double floor = 1e-6);

}  // namespace avil::nn
