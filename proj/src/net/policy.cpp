#include "avil/net/policy.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

namespace avil::net {

using nn::Parameter;
using nn::Tensor;
using nn::Var;

namespace {

// Fusion bias starts strongly negative: the bowl covers a few percent of the
// frame, so an unbiased sigmoid spends the first epochs unlearning 0.5.
constexpr float kFusionBiasInit = -4.0f;

Parameter uniform_param(std::string name, nn::Shape shape, int fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> u(-bound, bound);
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<float>(u(rng));
  return {std::move(name), std::move(t), false};
}

void add_linear(std::vector<Parameter>& group, const std::string& name, int out, int in, std::mt19937_64& rng) {
  group.push_back(uniform_param(name + ".weight", {out, in}, in, rng));
  group.push_back(uniform_param(name + ".bias", {out}, in, rng));
}

void check_config(const NetConfig& c) {
  if (c.k < 1 || c.m < 1 || c.height < 1 || c.width < 1 || c.embed < 1) {
    throw std::invalid_argument("NetConfig: k, m, height, width and embed must be positive");
  }
  if (c.fusion_kernel % 2 == 0) throw std::invalid_argument("NetConfig: fusion kernel must be odd");
  if (!(c.tau > 0.0 && c.tau <= 1.0)) throw std::invalid_argument("NetConfig: tau must lie in (0, 1]");
  for (int j = 0; j < kJoints; ++j) {
    if (!(c.joint_hi[j] > c.joint_lo[j])) throw std::invalid_argument("NetConfig: empty joint range");
  }
}

}  // namespace

std::vector<Parameter*> PolicyParams::policy_parameters() {
  std::vector<Parameter*> out;
  for (auto* group : {&theta2, &theta3, &theta4}) {
    for (auto& p : *group) out.push_back(&p);
  }
  return out;
}

PolicyParams init_params(const NetConfig& config, std::uint64_t seed) {
  check_config(config);
  PolicyParams params;
  params.config = config;
  std::mt19937_64 rng(seed);

  int in_c = 3;
  for (int l = 0; l < 4; ++l) {
    const int out_c = config.widths[l];
    const std::string name = "attn.conv" + std::to_string(l);
    params.theta1.push_back(uniform_param(name + ".weight", {out_c, in_c, 3, 3}, in_c * 9, rng));
    params.theta1.push_back(uniform_param(name + ".bias", {out_c}, in_c * 9, rng));
    in_c = out_c;
  }
  const int fk = config.fusion_kernel;
  params.theta1.push_back(uniform_param("attn.fuse.weight", {1, 2, fk, fk}, 2 * fk * fk, rng));
  params.theta1.push_back({"attn.fuse.bias", Tensor({1}, kFusionBiasInit), false});

  add_linear(params.theta2, "embed_visual", config.embed, 2, rng);
  add_linear(params.theta3, "embed_joints", config.embed, config.k * kJoints, rng);
  int width = 2 * config.embed;
  for (int l = 0; l < 3; ++l) {
    add_linear(params.theta4, "mlp" + std::to_string(l), config.hidden[l], width, rng);
    width = config.hidden[l];
  }
  add_linear(params.theta4, "head", config.m * kJoints, width, rng);
  return params;
}

std::size_t parameter_count(std::span<const Parameter> group) {
  std::size_t n = 0;
  for (const auto& p : group) n += p.value.size();
  return n;
}

template <typename T>
std::vector<Var> bind(nn::Tape<T>& tape, std::span<const Parameter> group, bool requires_grad) {
  std::vector<Var> vars;
  vars.reserve(group.size());
  for (const auto& p : group) {
    if constexpr (std::is_same_v<T, float>) {
      vars.push_back(tape.leaf(p.value, requires_grad));
    } else {
      vars.push_back(tape.leaf(p.value.template cast<T>(), requires_grad));
    }
  }
  return vars;
}

template <typename T>
Var attention_forward(nn::Tape<T>& tape, Var image, std::span<const Var> theta1, const NetConfig& config) {
  if (theta1.size() != 10) throw nn::DimensionError("attention_forward expects 10 parameter tensors");
  const auto& x0 = tape.value(image);
  if (x0.rank() != 3 || x0.dim(0) != 3) throw nn::DimensionError("attention_forward expects a 3xHxW image");
  Var x = image;
  for (int l = 0; l < 4; ++l) {
    x = nn::conv2d(tape, x, theta1[2 * l], theta1[2 * l + 1], 1, 1);
    x = nn::activation(tape, x, nn::Activation::kRelu);
  }
  const Var pooled[2] = {nn::channel_pool(tape, x, nn::PoolMode::kMax), nn::channel_pool(tape, x, nn::PoolMode::kAvg)};
  Var both = nn::concat<T>(tape, pooled, 0);
  Var fused = nn::conv2d(tape, both, theta1[8], theta1[9], 1, config.fusion_kernel / 2);
  return nn::activation(tape, fused, nn::Activation::kSigmoid);
}

Tensor attention_map(const Tensor& image, const PolicyParams& params) {
  nn::Tape32 tape;
  auto theta1 = bind(tape, std::span<const Parameter>(params.theta1), false);
  Var out = attention_forward(tape, tape.leaf(image), theta1, params.config);
  return tape.value(out);
}

Centroid extract_centroid(const Tensor& map, double tau) {
  if (map.rank() != 3 || map.dim(0) != 1) throw nn::DimensionError("extract_centroid expects a 1xHxW map");
  const int h = map.dim(1), w = map.dim(2);
  const float peak = *std::max_element(map.data().begin(), map.data().end());
  const double threshold = tau * peak;
  double sx = 0.0, sy = 0.0;
  std::size_t n = 0;
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      if (map.at(0, i, j) >= threshold) {
        sx += j + 0.5;
        sy += i + 0.5;
        ++n;
      }
    }
  }
  return {sx / static_cast<double>(n) / w, sy / static_cast<double>(n) / h};
}

double normalize_joint(int joint, double value, const NetConfig& config) {
  const double lo = config.joint_lo[joint], hi = config.joint_hi[joint];
  return 2.0 * (value - lo) / (hi - lo) - 1.0;
}

double denormalize_joint(int joint, double value, const NetConfig& config) {
  const double lo = config.joint_lo[joint], hi = config.joint_hi[joint];
  return lo + (value + 1.0) * 0.5 * (hi - lo);
}

template <typename T>
nn::BasicTensor<T> encode_history(std::span<const JointVector> history, const NetConfig& config) {
  if (static_cast<int>(history.size()) != config.k) {
    throw nn::DimensionError("joint history has " + std::to_string(history.size()) + " entries, expected k=" +
                             std::to_string(config.k));
  }
  nn::BasicTensor<T> out({config.k * kJoints});
  for (int s = 0; s < config.k; ++s) {
    for (int j = 0; j < kJoints; ++j) out[s * kJoints + j] = static_cast<T>(normalize_joint(j, history[s][j], config));
  }
  return out;
}

template <typename T>
HeadVars policy_head(nn::Tape<T>& tape, Centroid h, const nn::BasicTensor<T>& history,
                     std::span<const Var> theta2, std::span<const Var> theta3, std::span<const Var> theta4,
                     const NetConfig& config) {
  if (theta2.size() != 2 || theta3.size() != 2 || theta4.size() != 8) {
    throw nn::DimensionError("policy_head: unexpected parameter group sizes");
  }
  nn::BasicTensor<T> centroid({2}, std::vector<T>{static_cast<T>(h.x), static_cast<T>(h.y)});
  HeadVars out;
  out.v = nn::linear(tape, tape.leaf(centroid), theta2[0], theta2[1]);
  out.u = nn::linear(tape, tape.leaf(history), theta3[0], theta3[1]);
  const Var parts[2] = {out.v, out.u};
  Var x = nn::concat<T>(tape, parts, 0);
  for (int l = 0; l < 3; ++l) {
    x = nn::linear(tape, x, theta4[2 * l], theta4[2 * l + 1]);
    x = nn::activation(tape, x, nn::Activation::kRelu);
  }
  Var action = nn::linear(tape, x, theta4[6], theta4[7]);
  if (config.residual) {
    nn::BasicTensor<T> anchor({config.m * kJoints});
    const std::size_t newest = static_cast<std::size_t>(config.k - 1) * kJoints;
    for (int s = 0; s < config.m; ++s) {
      for (int j = 0; j < kJoints; ++j) anchor[s * kJoints + j] = history[newest + j];
    }
    action = nn::add(tape, action, tape.leaf(anchor));
  }
  out.action = action;
  return out;
}

template <typename T>
Var bc_objective(nn::Tape<T>& tape, Var pred, const nn::BasicTensor<T>& expert) {
  if (tape.value(pred).shape() != expert.shape()) {
    throw nn::DimensionError("bc_objective: chunk shapes " + nn::shape_string(tape.value(pred).shape()) + " and " +
                             nn::shape_string(expert.shape()) + " differ");
  }
  return nn::mse_loss(tape, pred, expert);
}

ActionChunk decode_chunk(const Tensor& normalized, const NetConfig& config) {
  ActionChunk chunk(config.m);
  for (int s = 0; s < config.m; ++s) {
    for (int j = 0; j < kJoints; ++j) chunk[s][j] = denormalize_joint(j, normalized[s * kJoints + j], config);
  }
  return chunk;
}

ForwardTrace policy_forward(Centroid h, std::span<const JointVector> history, const PolicyParams& params) {
  nn::Tape32 tape;
  auto theta2 = bind(tape, std::span<const Parameter>(params.theta2), false);
  auto theta3 = bind(tape, std::span<const Parameter>(params.theta3), false);
  auto theta4 = bind(tape, std::span<const Parameter>(params.theta4), false);
  auto vars = policy_head(tape, h, encode_history<float>(history, params.config), theta2, theta3, theta4,
                          params.config);
  ForwardTrace trace;
  trace.attention.centroid = h;
  trace.v = tape.value(vars.v);
  trace.u = tape.value(vars.u);
  trace.action_normalized = tape.value(vars.action);
  trace.action = decode_chunk(trace.action_normalized, params.config);
  return trace;
}

ForwardTrace policy_forward(const StackedState& state, const PolicyParams& params) {
  Tensor map = attention_map(state.image, params);
  const Centroid h = extract_centroid(map, params.config.tau);
  ForwardTrace trace = policy_forward(h, state.joint_history, params);
  trace.attention.map = std::move(map);
  return trace;
}

#define AVIL_NET_INSTANTIATE(T)                                                                              \
  template std::vector<Var> bind<T>(nn::Tape<T>&, std::span<const Parameter>, bool);                       \
  template Var attention_forward<T>(nn::Tape<T>&, Var, std::span<const Var>, const NetConfig&);            \
  template nn::BasicTensor<T> encode_history<T>(std::span<const JointVector>, const NetConfig&);           \
  template HeadVars policy_head<T>(nn::Tape<T>&, Centroid, const nn::BasicTensor<T>&, std::span<const Var>, \
                                   std::span<const Var>, std::span<const Var>, const NetConfig&);          \
  template Var bc_objective<T>(nn::Tape<T>&, Var, const nn::BasicTensor<T>&);

AVIL_NET_INSTANTIATE(float)
AVIL_NET_INSTANTIATE(double)

}  // namespace avil::net
