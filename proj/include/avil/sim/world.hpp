#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "avil/sim/arm.hpp"

namespace avil::sim {

struct Rgb {
  double r = 0.0, g = 0.0, b = 0.0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

enum class BowlKind { kTG, kPS, kPM, kPL };
enum class FoodKind { kGranular, kSemiSolid, kLiquid };
enum class Position { kP1, kP2, kP3 };

inline constexpr std::array<BowlKind, 4> kAllBowls{BowlKind::kTG, BowlKind::kPS, BowlKind::kPM, BowlKind::kPL};
inline constexpr std::array<FoodKind, 3> kAllFoods{FoodKind::kGranular, FoodKind::kSemiSolid, FoodKind::kLiquid};
inline constexpr std::array<Position, 3> kAllPositions{Position::kP1, Position::kP2, Position::kP3};

std::string to_string(BowlKind kind);
std::string to_string(FoodKind kind);
std::string to_string(Position position);
BowlKind parse_bowl(const std::string& s);
FoodKind parse_food(const std::string& s);
Position parse_position(const std::string& s);

/// Side-view bowl: a trapezoid resting on the table (y = 0). The inner cavity
/// runs from the inner bottom (y = wall_thickness) up to the rim.
struct BowlConfig {
  BowlKind kind = BowlKind::kTG;
  double center_x = 0.3;
  double rim_radius = 0.06;
  double depth = 0.07;
  double wall_thickness = 0.006;
  Rgb material_color;
  bool transparent = false;

  double inner_bottom() const { return wall_thickness; }
  double rim_height() const { return wall_thickness + depth; }
  double bottom_half_width() const { return rim_radius - 0.2 * depth; }
  /// Inner half-width at height y (linear between bottom and rim).
  double inner_half_width(double y) const;
  bool inside_cavity(Vec2 p) const;
  bool inside_solid(Vec2 p) const;
};

BowlConfig make_bowl(BowlKind kind, double center_x);
double nominal_x(Position position);

struct FoodModel {
  FoodKind kind = FoodKind::kGranular;
  double retention_pitch = 0.6;
  double spill_rate = 0.3;
  bool cohesive = false;  // all particles move as one cluster
  double particle_radius = 0.005;
  Rgb color;
};

FoodModel make_food(FoodKind kind);

enum class ParticleStatus { kInBowl, kOnSpoon, kSpilled };

struct Particle {
  Vec2 position;
  ParticleStatus status = ParticleStatus::kInBowl;
  // Offset in the spoon frame (axis, normal) while on the spoon.
  Vec2 spoon_offset;
};

enum class DistractorShape { kBottle, kApple, kJar, kKnife };

struct Distractor {
  DistractorShape shape;
  double x = 0.0;  // footprint centre on the table
  double half_width = 0.0;
};

std::string to_string(DistractorShape shape);

struct SceneConfig {
  BowlKind bowl = BowlKind::kTG;
  FoodKind food = FoodKind::kGranular;
  Position position = Position::kP1;
  bool distractors = false;
  std::uint64_t seed = 0;

  friend bool operator==(const SceneConfig&, const SceneConfig&) = default;
};

nlohmann::json to_json(const SceneConfig& scene);
SceneConfig scene_from_json(const nlohmann::json& j);

struct WorldState {
  SceneConfig scene;
  ArmModel arm;
  Joints joints{};
  BowlConfig bowl;
  FoodModel food;
  std::vector<Particle> particles;
  std::vector<Distractor> distractors;
  std::mt19937_64 rng;  // spill draws only
  std::int64_t step_count = 0;
  bool collision_flag = false;
  bool clamped_flag = false;      // last command had to be clamped
  bool entered_bowl = false;      // tip has been inside the cavity
  double max_height_after_entry = -1.0;

  TipPose tip() const { return tip_pose(arm, joints); }
  int count(ParticleStatus status) const;
  /// Tip has risen to rim + clearance after entering the bowl.
  bool lift_complete() const;
};

inline constexpr double kLiftClearance = 0.05;
inline constexpr double kScoopRadius = 0.025;
inline constexpr double kPositionJitter = 0.02;

WorldState make_scene(const SceneConfig& scene);

/// Empty world (no bowl footprint, no particles, no distractors) used for tests.
WorldState make_empty_world(std::uint64_t seed);

struct StepInfo {
  bool clamped = false;
  int captured = 0;
  int spilled = 0;
  int returned = 0;
};

StepInfo step(WorldState& world, const Joints& command);

struct TrialScore {
  double value = 0.0;
  int scooped_count = 0;
  int spilled_count = 0;
};

inline constexpr int kMinScooped = 3;

/// Score from raw counts. Collision always scores 0.
TrialScore score_counts(int scooped, int spilled, bool collision);
TrialScore score_trial(const WorldState& world);

/// crc32 over every state field (arm, particles, rng, bookkeeping).
std::uint32_t state_hash(const WorldState& world);

}  // namespace avil::sim
