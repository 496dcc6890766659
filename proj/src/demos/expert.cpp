#include "avil/demos/expert.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace avil::demos {

using sim::Vec2;

std::vector<Waypoint> expert_waypoints(const sim::WorldState& world, const ExpertConfig& cfg) {
  const double c = world.bowl.center_x;
  const double bottom = world.bowl.inner_bottom();
  const double rim = world.bowl.rim_height();
  const double sweep_y = bottom + cfg.sweep_height;
  return {
      {{c - 0.025, rim + 0.035}, 0.10, cfg.travel_step},
      {{c - 0.025, sweep_y}, 0.10, cfg.bowl_step},
      {{c + 0.020, sweep_y}, 0.05, cfg.bowl_step},
      {{c + 0.025, bottom + 0.03}, -0.05, cfg.bowl_step},
      {{c + 0.025, cfg.lift_height}, -0.05, cfg.travel_step},
  };
}

ExpertResult scripted_expert(const sim::WorldState& initial, std::uint64_t noise_seed, const ExpertConfig& cfg) {
  ExpertResult result;
  sim::WorldState world = initial;
  std::mt19937_64 rng(noise_seed);
  std::normal_distribution<double> noise(0.0, cfg.joint_noise);

  result.trajectory.push_back(world.joints);
  for (int i = 0; i < cfg.hold_steps; ++i) {
    sim::step(world, world.joints);
    result.trajectory.push_back(world.joints);
  }

  const auto waypoints = expert_waypoints(world, cfg);
  std::size_t current = 0;
  int after_lift = 0;
  while (static_cast<int>(result.trajectory.size()) < cfg.max_length) {
    if (world.lift_complete() && ++after_lift > cfg.extra_steps) break;
    const sim::TipPose tip = world.tip();
    const Waypoint* wp = &waypoints[current];
    while (current + 1 < waypoints.size() && sim::norm(wp->position - tip.position) < 0.002 &&
           std::abs(wp->pitch - tip.pitch) < 0.01) {
      wp = &waypoints[++current];
    }
    const Vec2 delta = wp->position - tip.position;
    const double dist = sim::norm(delta);
    const Vec2 move = dist > wp->step ? (wp->step / dist) * delta : delta;
    const double dpitch = std::clamp(wp->pitch - tip.pitch, -cfg.pitch_step, cfg.pitch_step);

    const sim::IkResult r = sim::ik(world.arm, {tip.position + move, tip.pitch + dpitch}, world.joints);
    if (!r.ok) {
      result.failure = "ik failed at step " + std::to_string(result.trajectory.size());
      return result;
    }
    sim::Joints command = r.joints;
    for (double& q : command) q += noise(rng);
    command = sim::clamp_to_limits(world.arm, command);
    sim::step(world, command);
    result.trajectory.push_back(world.joints);
  }

  const int length = static_cast<int>(result.trajectory.size());
  if (!world.lift_complete()) {
    result.failure = "lift not completed within " + std::to_string(cfg.max_length) + " steps";
  } else if (length < cfg.min_length) {
    result.failure = "trajectory shorter than " + std::to_string(cfg.min_length) + " steps";
  } else {
    result.ok = true;
  }
  return result;
}

}  // namespace avil::demos
