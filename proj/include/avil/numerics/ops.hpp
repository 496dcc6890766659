#pragma once

#include <span>
#include <vector>

#include "avil/numerics/tape.hpp"
#include "avil/numerics/tensor.hpp"

namespace avil::nn {

enum class PoolMode { kMax, kAvg };
enum class Activation { kRelu, kSigmoid };

/// Lower clamp applied to BCE predictions (and 1 - eps as the upper clamp).
inline constexpr double kBceEpsilon = 1e-7;

// All operations record onto the tape and check their outputs for NaN/Inf.
// No broadcasting: every shape must match exactly.

/// input C_in x H x W, weight C_out x C_in x k x k, bias C_out -> C_out x H' x W'.
template <typename T>
Var conv2d(Tape<T>& tape, Var input, Var weight, Var bias, int stride, int pad);

/// C x H x W -> 1 x H x W. Max ties resolve to the lowest channel index.
template <typename T>
Var channel_pool(Tape<T>& tape, Var input, PoolMode mode);

/// input n, weight d x n, bias d -> d.
template <typename T>
Var linear(Tape<T>& tape, Var input, Var weight, Var bias);

template <typename T>
Var activation(Tape<T>& tape, Var input, Activation kind);

template <typename T>
Var concat(Tape<T>& tape, std::span<const Var> inputs, std::size_t axis);

template <typename T>
Var add(Tape<T>& tape, Var a, Var b);

template <typename T>
Var reshape(Tape<T>& tape, Var input, Shape shape);

/// Mean binary cross-entropy. `target` must be exactly 0 or 1 everywhere.
template <typename T>
Var bce_loss(Tape<T>& tape, Var pred, const BasicTensor<T>& target);

/// Mean squared error.
template <typename T>
Var mse_loss(Tape<T>& tape, Var pred, const BasicTensor<T>& target);

inline int conv_output_extent(int extent, int kernel, int stride, int pad) {
  return (extent + 2 * pad - kernel) / stride + 1;
}

}  // namespace avil::nn
