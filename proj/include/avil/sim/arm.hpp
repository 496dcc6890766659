#pragma once

#include <array>
#include <optional>

namespace avil::sim {

inline constexpr int kJoints = 6;
using Joints = std::array<double, kJoints>;

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
double norm(Vec2 a);

/// Planar 6-link chain. Angles are measured clockwise from the +x axis, so a
/// positive spoon pitch tips the spoon down toward the table.
struct ArmModel {
  Vec2 base{0.0, 0.2};
  Joints links{0.15, 0.12, 0.10, 0.08, 0.06, 0.10};  // last link is the spoon
  Joints lo{-2.6, -2.6, -2.6, -2.6, -2.6, -2.6};
  Joints hi{2.6, 2.6, 2.6, 2.6, 2.6, 2.6};
  double base_angle = 0.0;
  double max_joint_speed = 0.15;  // rad per step

  double reach_without_spoon() const;
};

const ArmModel& default_arm();

struct TipPose {
  Vec2 position;
  double pitch = 0.0;
};

struct Kinematics {
  std::array<Vec2, kJoints + 1> points;  // base, then the end of each link
  TipPose tip;
};

Kinematics fk(const ArmModel& arm, const Joints& q);
inline TipPose tip_pose(const ArmModel& arm, const Joints& q) { return fk(arm, q).tip; }

/// Spoon axis direction and the concave-side normal for a given pitch.
Vec2 spoon_axis(double pitch);
Vec2 spoon_normal(double pitch);

Joints clamp_to_limits(const ArmModel& arm, const Joints& q, bool* clamped = nullptr);
bool within_limits(const ArmModel& arm, const Joints& q);

struct IkOptions {
  double damping = 0.05;
  int max_iterations = 200;
  double position_tolerance = 1e-3;
  double pitch_tolerance = 1e-2;
};

struct IkResult {
  bool ok = false;
  Joints joints{};
  int iterations = 0;
  double position_error = 0.0;
  double pitch_error = 0.0;
};

/// Damped least squares from `q_init`. Unreachable or non-converged targets
/// return ok == false with `joints` set to q_init.
IkResult ik(const ArmModel& arm, const TipPose& target, const Joints& q_init, const IkOptions& options = {});

/// The arm pose every scene starts from.
const Joints& initial_joints();

}  // namespace avil::sim
