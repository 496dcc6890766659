#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "avil/net/policy.hpp"
#include "avil/sim/world.hpp"

namespace avil::rollout {

struct PolicyOutput {
  std::vector<sim::Joints> chunk;  // t+1 .. t+m
  std::optional<net::Centroid> centroid;
};

/// Anything that maps (frame, last-k joint window) to an action chunk.
class ChunkPolicy {
 public:
  virtual ~ChunkPolicy() = default;
  virtual int history_length() const = 0;
  virtual PolicyOutput act(const nn::Tensor& image, std::span<const sim::Joints> history) = 0;
};

class AvilPolicy : public ChunkPolicy {
 public:
  explicit AvilPolicy(net::PolicyParams params) : params_(std::move(params)) {}
  int history_length() const override { return params_.config.k; }
  PolicyOutput act(const nn::Tensor& image, std::span<const sim::Joints> history) override;
  const net::PolicyParams& params() const { return params_; }

 private:
  net::PolicyParams params_;
};

struct TraceStep {
  std::uint32_t state_hash = 0;  // world before the command
  std::vector<sim::Joints> history;
  std::optional<net::Centroid> centroid;
  std::vector<sim::Joints> predicted;
  sim::Joints command{};
};

struct RolloutTrace {
  std::vector<TraceStep> steps;
  sim::TrialScore score;
  int step_count = 0;
  std::string termination;  // lift_complete, max_steps, plan_complete, numeric_error, ik_failure
  bool collision = false;
};

struct RolloutOptions {
  int max_steps = 200;
  int height = 64;
  int width = 64;
};

/// Receding-horizon execution: only element 0 of each predicted chunk is sent
/// to the simulator before re-observing. The window starts as k copies of the
/// initial pose.
RolloutTrace mpc_execute(ChunkPolicy& policy, sim::WorldState& world, const RolloutOptions& options = {});

struct BaselineConfig {
  double approach_height = 0.03;  // above the inner bottom
  double scoop_pitch = 0.9;
  double wrist_delta = -0.6;
  int wrist_joint = 4;
  int wrist_steps = 8;
  double travel_step = 0.008;
  double lift_step = 0.01;
  double lift_margin = 0.06;  // above the rim
};

/// Straight-line approach to the oracle bowl centre at a fixed height and
/// pitch, a fixed wrist rotation, then a vertical lift. Same for every scene.
RolloutTrace baseline_controller(sim::WorldState& world, const BaselineConfig& config = {},
                                 const RolloutOptions& options = {});

}  // namespace avil::rollout
