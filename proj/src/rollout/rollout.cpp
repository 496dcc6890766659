#include "avil/rollout/rollout.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

#include "avil/sim/render.hpp"

namespace avil::rollout {

PolicyOutput AvilPolicy::act(const nn::Tensor& image, std::span<const sim::Joints> history) {
  net::StackedState state;
  state.image = image;
  state.joint_history.assign(history.begin(), history.end());
  const net::ForwardTrace trace = net::policy_forward(state, params_);
  PolicyOutput out;
  out.chunk.assign(trace.action.begin(), trace.action.end());
  out.centroid = trace.attention.centroid;
  return out;
}

RolloutTrace mpc_execute(ChunkPolicy& policy, sim::WorldState& world, const RolloutOptions& options) {
  const int k = policy.history_length();
  if (options.max_steps < k) throw std::invalid_argument("mpc_execute: max_steps must be at least k");
  RolloutTrace trace;
  std::deque<sim::Joints> window(static_cast<std::size_t>(k), world.joints);
  trace.termination = "max_steps";
  for (int t = 0; t < options.max_steps; ++t) {
    if (world.lift_complete()) {
      trace.termination = "lift_complete";
      break;
    }
    TraceStep step;
    step.state_hash = sim::state_hash(world);
    step.history.assign(window.begin(), window.end());
    PolicyOutput out;
    try {
      out = policy.act(sim::render(world, options.height, options.width), step.history);
    } catch (const nn::NumericError&) {
      trace.termination = "numeric_error";
      break;
    }
    if (out.chunk.empty()) throw std::logic_error("policy returned an empty chunk");
    step.centroid = out.centroid;
    step.predicted = std::move(out.chunk);
    step.command = step.predicted.front();
    sim::step(world, step.command);
    trace.steps.push_back(std::move(step));
    window.pop_front();
    window.push_back(world.joints);
  }
  if (trace.termination == "max_steps" && world.lift_complete()) trace.termination = "lift_complete";
  trace.step_count = static_cast<int>(trace.steps.size());
  trace.collision = world.collision_flag;
  trace.score = sim::score_trial(world);
  return trace;
}

namespace {

// Executes one command and records it; false once the episode must stop.
bool execute(sim::WorldState& world, RolloutTrace& trace, const sim::Joints& command, const RolloutOptions& options) {
  if (world.lift_complete()) {
    trace.termination = "lift_complete";
    return false;
  }
  if (static_cast<int>(trace.steps.size()) >= options.max_steps) {
    trace.termination = "max_steps";
    return false;
  }
  TraceStep step;
  step.state_hash = sim::state_hash(world);
  step.predicted = {command};
  step.command = command;
  sim::step(world, command);
  trace.steps.push_back(std::move(step));
  return true;
}

RolloutTrace finish(sim::WorldState& world, RolloutTrace trace) {
  if (trace.termination.empty()) trace.termination = world.lift_complete() ? "lift_complete" : "plan_complete";
  trace.step_count = static_cast<int>(trace.steps.size());
  trace.collision = world.collision_flag;
  trace.score = sim::score_trial(world);
  if (trace.termination == "ik_failure") trace.score = sim::score_counts(0, trace.score.spilled_count, true);
  return trace;
}

}  // namespace

RolloutTrace baseline_controller(sim::WorldState& world, const BaselineConfig& cfg, const RolloutOptions& options) {
  RolloutTrace trace;
  const sim::TipPose start = world.tip();
  const sim::Vec2 goal{world.bowl.center_x, world.bowl.inner_bottom() + cfg.approach_height};

  // Straight-line approach with the pitch interpolated toward the fixed scoop pitch.
  const int n = std::max(1, static_cast<int>(std::ceil(sim::norm(goal - start.position) / cfg.travel_step)));
  sim::Joints q = world.joints;
  for (int i = 1; i <= n; ++i) {
    const double f = static_cast<double>(i) / n;
    const sim::TipPose target{start.position + f * (goal - start.position),
                              start.pitch + f * (cfg.scoop_pitch - start.pitch)};
    const sim::IkResult r = sim::ik(world.arm, target, q);
    if (!r.ok) {
      trace.termination = "ik_failure";
      return finish(world, std::move(trace));
    }
    q = r.joints;
    if (!execute(world, trace, q, options)) return finish(world, std::move(trace));
  }

  // Wrist rotation, interpolated; the last command lands exactly on the total delta.
  const double wrist_start = q[cfg.wrist_joint];
  for (int i = 1; i <= cfg.wrist_steps; ++i) {
    q[cfg.wrist_joint] = wrist_start + cfg.wrist_delta * i / cfg.wrist_steps;
    if (!execute(world, trace, q, options)) return finish(world, std::move(trace));
  }

  // Vertical lift holding the post-rotation pitch.
  const double lift_to = world.bowl.rim_height() + cfg.lift_margin;
  while (true) {
    const sim::TipPose tip = sim::tip_pose(world.arm, q);
    if (tip.position.y >= lift_to) break;
    const sim::IkResult r = sim::ik(world.arm, {{tip.position.x, tip.position.y + cfg.lift_step}, tip.pitch}, q);
    if (!r.ok) {
      trace.termination = "ik_failure";
      return finish(world, std::move(trace));
    }
    q = r.joints;
    if (!execute(world, trace, q, options)) return finish(world, std::move(trace));
  }
  return finish(world, std::move(trace));
}

}  // namespace avil::rollout
