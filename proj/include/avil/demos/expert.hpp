#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "avil/sim/world.hpp"

namespace avil::demos {

struct ExpertConfig {
  int hold_steps = 3;          // initial stationary steps (fills the k-window)
  int min_length = 40;
  int max_length = 120;
  int extra_steps = 3;         // steps kept after the lift completes
  double travel_step = 0.008;  // max tip displacement per step in free space (m)
  double bowl_step = 0.005;    // inside the bowl
  double pitch_step = 0.05;
  double joint_noise = 0.003;  // std-dev of per-joint execution noise (rad)
  double sweep_height = 0.008; // tip clearance above the inner bottom
  double lift_height = 0.17;   // absolute tip height at the end of the lift
};

struct Waypoint {
  sim::Vec2 position;
  double pitch = 0.0;
  double step = 0.008;
};

/// Approach above the bowl, descend near the centre, sweep along the bottom,
/// tilt the spoon back, and lift straight up.
std::vector<Waypoint> expert_waypoints(const sim::WorldState& world, const ExpertConfig& config = {});

struct ExpertResult {
  bool ok = false;
  std::string failure;
  std::vector<sim::Joints> trajectory;  // joint states, trajectory[0] is the initial pose
};

/// Closed-loop waypoint tracker run on a copy of `world`. The returned joint
/// states replay exactly through sim::step from the same initial world.
ExpertResult scripted_expert(const sim::WorldState& world, std::uint64_t noise_seed, const ExpertConfig& config = {});

}  // namespace avil::demos
