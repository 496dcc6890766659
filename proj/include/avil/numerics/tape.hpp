#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "avil/numerics/tensor.hpp"

namespace avil::nn {

/// Handle to a value recorded on a Tape.
struct Var {
  std::uint32_t id = 0;
};

/// Reverse-mode gradient tape. Every operation appends its output value and a
/// closure that maps the output gradient back onto its inputs; backward()
/// replays those closures in exact reverse order. One tape per thread.
template <typename T>
class Tape {
 public:
  using TensorT = BasicTensor<T>;
  using BackwardFn = std::function<void(Tape&, Var output)>;

  /// Registers an input. Leaves with requires_grad == false (frozen weights,
  /// images, targets) never receive a gradient buffer.
  Var leaf(TensorT value, bool requires_grad = false) {
    return add_node(std::move(value), requires_grad, "leaf");
  }

  /// Records the result of an operation. `backward` is only kept when at least
  /// one parent needs a gradient.
  Var push(const char* op_name, TensorT value, const std::vector<Var>& parents, BackwardFn backward) {
    bool needs_grad = false;
    for (Var p : parents) needs_grad = needs_grad || nodes_[p.id].requires_grad;
    Var out = add_node(std::move(value), needs_grad, op_name);
    if (needs_grad) ops_.push_back({out.id, std::move(backward)});
    return out;
  }

  const TensorT& value(Var v) const { return nodes_[v.id].value; }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  bool has_grad(Var v) const { return !nodes_[v.id].grad.empty(); }

  /// Gradient of the last backward() target w.r.t. `v`. Throws if none was produced.
  const TensorT& grad(Var v) const {
    if (!has_grad(v)) throw std::logic_error("no gradient recorded for tape value " + std::to_string(v.id));
    return nodes_[v.id].grad;
  }

  /// Gradient buffer for accumulation inside backward closures (zero-initialised on first use).
  TensorT& grad_accumulator(Var v) {
    auto& node = nodes_[v.id];
    if (node.grad.empty()) node.grad = TensorT(node.value.shape());
    return node.grad;
  }

  void backward(Var output) {
    if (value(output).size() != 1) throw DimensionError("backward() without a seed needs a scalar output");
    backward(output, TensorT(value(output).shape(), T{1}));
  }

  void backward(Var output, const TensorT& seed) {
    if (seed.shape() != value(output).shape()) {
      throw DimensionError("backward seed shape " + shape_string(seed.shape()) + " does not match output " +
                           shape_string(value(output).shape()));
    }
    if (!requires_grad(output)) return;
    grad_accumulator(output) = seed;
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
      if (nodes_[it->output].grad.empty()) continue;
      it->backward(*this, Var{it->output});
    }
  }

  std::size_t size() const { return nodes_.size(); }
  std::size_t op_count() const { return ops_.size(); }

  void clear() {
    nodes_.clear();
    ops_.clear();
  }

 private:
  struct Node {
    TensorT value;
    TensorT grad;
    bool requires_grad = false;
  };
  struct Op {
    std::uint32_t output;
    BackwardFn backward;
  };

  Var add_node(TensorT value, bool requires_grad, const char* op_name) {
    if (!value.all_finite()) throw NumericError(std::string("non-finite values produced by ") + op_name);
    nodes_.push_back({std::move(value), TensorT{}, requires_grad});
    return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
  }

  std::vector<Node> nodes_;
  std::vector<Op> ops_;
};

using Tape32 = Tape<float>;
using Tape64 = Tape<double>;

}  // namespace avil::nn
