#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "avil/numerics/ops.hpp"
#include "avil/numerics/optim.hpp"

namespace avil::net {

inline constexpr int kJoints = 6;
using JointVector = std::array<double, kJoints>;

struct NetConfig {
  int k = 4;
  int m = 2;
  int height = 64;
  int width = 64;
  std::array<int, 4> widths{8, 16, 32, 32};
  int fusion_kernel = 7;
  double tau = 0.5;
  int embed = 64;
  std::array<int, 3> hidden{128, 128, 64};
  JointVector joint_lo{-2.6, -2.6, -2.6, -2.6, -2.6, -2.6};
  JointVector joint_hi{2.6, 2.6, 2.6, 2.6, 2.6, 2.6};
  // The head predicts the chunk as an offset from the newest joint vector
  // (still absolute positions after the add).
  bool residual = true;

  friend bool operator==(const NetConfig&, const NetConfig&) = default;
};

/// theta1: attention convs + fusion; theta2: centroid embedding; theta3: joint
/// history embedding; theta4: control MLP.
struct PolicyParams {
  NetConfig config;
  std::vector<nn::Parameter> theta1, theta2, theta3, theta4;
  bool frozen1 = false;

  /// theta2..theta4 in a fixed order (the phase-2 trainable set).
  std::vector<nn::Parameter*> policy_parameters();
};

/// Uniform fan-in initialisation, deterministic in `seed`.
PolicyParams init_params(const NetConfig& config, std::uint64_t seed);

std::size_t parameter_count(std::span<const nn::Parameter> group);

/// Registers a parameter group on a tape (cast to T).
template <typename T>
std::vector<nn::Var> bind(nn::Tape<T>& tape, std::span<const nn::Parameter> group, bool requires_grad);

/// image 3xHxW -> attention map 1xHxW in (0,1).
template <typename T>
nn::Var attention_forward(nn::Tape<T>& tape, nn::Var image, std::span<const nn::Var> theta1,
                          const NetConfig& config);

/// Gradient-free attention map for inference.
nn::Tensor attention_map(const nn::Tensor& image, const PolicyParams& params);

struct Centroid {
  double x = 0.5;
  double y = 0.5;
};

/// Mean pixel centre of {map >= tau * max(map)}, normalised to [0,1]^2.
Centroid extract_centroid(const nn::Tensor& map, double tau);

double normalize_joint(int joint, double value, const NetConfig& config);
double denormalize_joint(int joint, double value, const NetConfig& config);

/// Oldest-to-newest joint history flattened and normalised to [-1,1].
template <typename T>
nn::BasicTensor<T> encode_history(std::span<const JointVector> history, const NetConfig& config);

struct HeadVars {
  nn::Var v;
  nn::Var u;
  nn::Var action;  // m*6, normalised joint space
};

/// f2..f4 on a precomputed centroid and normalised joint history.
template <typename T>
HeadVars policy_head(nn::Tape<T>& tape, Centroid h, const nn::BasicTensor<T>& history,
                     std::span<const nn::Var> theta2, std::span<const nn::Var> theta3,
                     std::span<const nn::Var> theta4, const NetConfig& config);

/// Mean squared error between chunks in normalised joint space.
template <typename T>
nn::Var bc_objective(nn::Tape<T>& tape, nn::Var pred, const nn::BasicTensor<T>& expert);

struct StackedState {
  nn::Tensor image;                      // 3xHxW in [0,1]
  std::vector<JointVector> joint_history;  // k entries, oldest first
};

using ActionChunk = std::vector<JointVector>;

struct AttentionResult {
  nn::Tensor map;
  Centroid centroid;
};

struct ForwardTrace {
  AttentionResult attention;
  nn::Tensor v;
  nn::Tensor u;
  nn::Tensor action_normalized;
  ActionChunk action;
};

ForwardTrace policy_forward(const StackedState& state, const PolicyParams& params);

/// Head only, for callers that already hold the centroid.
ForwardTrace policy_forward(Centroid h, std::span<const JointVector> history, const PolicyParams& params);

ActionChunk decode_chunk(const nn::Tensor& normalized, const NetConfig& config);

}  // namespace avil::net
