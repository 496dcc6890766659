#include "avil/sim/arm.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace avil::sim {

double norm(Vec2 a) { return std::hypot(a.x, a.y); }

double ArmModel::reach_without_spoon() const { return std::accumulate(links.begin(), links.end() - 1, 0.0); }

const ArmModel& default_arm() {
  static const ArmModel arm;
  return arm;
}

Vec2 spoon_axis(double pitch) { return {std::cos(pitch), -std::sin(pitch)}; }
Vec2 spoon_normal(double pitch) { return {std::sin(pitch), std::cos(pitch)}; }

Kinematics fk(const ArmModel& arm, const Joints& q) {
  Kinematics k;
  k.points[0] = arm.base;
  double phi = arm.base_angle;
  for (int i = 0; i < kJoints; ++i) {
    phi += q[i];
    k.points[i + 1] = k.points[i] + arm.links[i] * spoon_axis(phi);
  }
  k.tip = {k.points[kJoints], phi};
  return k;
}

Joints clamp_to_limits(const ArmModel& arm, const Joints& q, bool* clamped) {
  Joints out = q;
  bool any = false;
  for (int i = 0; i < kJoints; ++i) {
    out[i] = std::clamp(q[i], arm.lo[i], arm.hi[i]);
    any = any || out[i] != q[i];
  }
  if (clamped) *clamped = any;
  return out;
}

bool within_limits(const ArmModel& arm, const Joints& q) {
  for (int i = 0; i < kJoints; ++i) {
    if (!(q[i] >= arm.lo[i] && q[i] <= arm.hi[i])) return false;
  }
  return true;
}

namespace {

double wrap_angle(double a) { return std::remainder(a, 2.0 * std::numbers::pi); }

Eigen::Vector3d task_error(const TipPose& target, const TipPose& current) {
  return {target.position.x - current.position.x, target.position.y - current.position.y,
          wrap_angle(target.pitch - current.pitch)};
}

// Rows: tip x, tip y, pitch. Column i moves every point beyond joint i.
Eigen::Matrix<double, 3, kJoints> jacobian(const Kinematics& k) {
  Eigen::Matrix<double, 3, kJoints> j;
  const Vec2 tip = k.tip.position;
  for (int i = 0; i < kJoints; ++i) {
    const Vec2 r = tip - k.points[i];
    // Clockwise rotation by dq maps r to r + dq * (r.y, -r.x).
    j(0, i) = r.y;
    j(1, i) = -r.x;
    j(2, i) = 1.0;
  }
  return j;
}

}  // namespace

IkResult ik(const ArmModel& arm, const TipPose& target, const Joints& q_init, const IkOptions& options) {
  IkResult result;
  result.joints = q_init;
  const Vec2 wrist = target.position - arm.links[kJoints - 1] * spoon_axis(target.pitch);
  if (norm(wrist - arm.base) > arm.reach_without_spoon()) {
    const TipPose now = tip_pose(arm, q_init);
    result.position_error = norm(target.position - now.position);
    result.pitch_error = std::abs(wrap_angle(target.pitch - now.pitch));
    return result;
  }

  Joints q = clamp_to_limits(arm, q_init);
  const double lambda2 = options.damping * options.damping;
  for (int it = 0; it <= options.max_iterations; ++it) {
    const Kinematics k = fk(arm, q);
    const Eigen::Vector3d e = task_error(target, k.tip);
    result.position_error = std::hypot(e(0), e(1));
    result.pitch_error = std::abs(e(2));
    result.iterations = it;
    if (result.position_error < options.position_tolerance && result.pitch_error < options.pitch_tolerance) {
      result.ok = true;
      result.joints = q;
      return result;
    }
    if (it == options.max_iterations) break;
    const auto j = jacobian(k);
    const Eigen::Matrix3d jjt = j * j.transpose() + lambda2 * Eigen::Matrix3d::Identity();
    const Eigen::Matrix<double, kJoints, 1> dq = j.transpose() * jjt.ldlt().solve(e);
    for (int i = 0; i < kJoints; ++i) q[i] += dq(i);
    q = clamp_to_limits(arm, q);
  }
  return result;
}

const Joints& initial_joints() {
  static const Joints q0 = [] {
    const Joints guess{0.35, 0.45, 0.35, 0.0, -0.45, -0.40};
    const IkResult r = ik(default_arm(), {{0.36, 0.106}, 0.3}, guess, {0.05, 2000, 1e-9, 1e-9});
    if (!r.ok) throw std::logic_error("initial arm pose is unreachable");
    return r.joints;
  }();
  return q0;
}

}  // namespace avil::sim
