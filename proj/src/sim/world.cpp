#include "avil/sim/world.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace avil::sim {

namespace {

std::mt19937_64 stream(std::uint64_t seed, std::uint32_t id) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), id};
  return std::mt19937_64(seq);
}

enum StreamId : std::uint32_t { kLayoutStream = 1, kDistractorStream = 2, kSpillStream = 3 };

}  // namespace

std::string to_string(BowlKind kind) {
  switch (kind) {
    case BowlKind::kTG: return "TG";
    case BowlKind::kPS: return "PS";
    case BowlKind::kPM: return "PM";
    case BowlKind::kPL: return "PL";
  }
  throw std::invalid_argument("invalid bowl kind");
}

std::string to_string(FoodKind kind) {
  switch (kind) {
    case FoodKind::kGranular: return "granular";
    case FoodKind::kSemiSolid: return "semi_solid";
    case FoodKind::kLiquid: return "liquid";
  }
  throw std::invalid_argument("invalid food kind");
}

std::string to_string(Position position) {
  switch (position) {
    case Position::kP1: return "P1";
    case Position::kP2: return "P2";
    case Position::kP3: return "P3";
  }
  throw std::invalid_argument("invalid position");
}

std::string to_string(DistractorShape shape) {
  switch (shape) {
    case DistractorShape::kBottle: return "bottle";
    case DistractorShape::kApple: return "apple";
    case DistractorShape::kJar: return "jar";
    case DistractorShape::kKnife: return "knife";
  }
  throw std::invalid_argument("invalid distractor shape");
}

BowlKind parse_bowl(const std::string& s) {
  for (auto k : kAllBowls) if (to_string(k) == s) return k;
  throw std::invalid_argument("unknown bowl kind '" + s + "'");
}

FoodKind parse_food(const std::string& s) {
  for (auto k : kAllFoods) if (to_string(k) == s) return k;
  throw std::invalid_argument("unknown food kind '" + s + "'");
}

Position parse_position(const std::string& s) {
  for (auto k : kAllPositions) if (to_string(k) == s) return k;
  throw std::invalid_argument("unknown position '" + s + "'");
}

double BowlConfig::inner_half_width(double y) const {
  const double f = std::clamp((y - inner_bottom()) / depth, 0.0, 1.0);
  return bottom_half_width() + f * (rim_radius - bottom_half_width());
}

bool BowlConfig::inside_cavity(Vec2 p) const {
  if (p.y < inner_bottom() || p.y > rim_height()) return false;
  return std::abs(p.x - center_x) < inner_half_width(p.y);
}

bool BowlConfig::inside_solid(Vec2 p) const {
  if (p.y < 0.0 || p.y > rim_height()) return false;
  // Outer wall is the inner profile pushed out by the wall thickness.
  const double f = p.y / rim_height();
  const double outer = bottom_half_width() + wall_thickness + f * (rim_radius - bottom_half_width());
  return std::abs(p.x - center_x) <= outer && !inside_cavity(p);
}

BowlConfig make_bowl(BowlKind kind, double center_x) {
  BowlConfig b;
  b.kind = kind;
  b.center_x = center_x;
  switch (kind) {
    case BowlKind::kTG:
      b.rim_radius = 0.06, b.depth = 0.07, b.material_color = {0.72, 0.86, 0.94}, b.transparent = true;
      break;
    case BowlKind::kPS:
      b.rim_radius = 0.05, b.depth = 0.06, b.material_color = {0.55, 0.75, 0.98};
      break;
    case BowlKind::kPM:
      b.rim_radius = 0.065, b.depth = 0.07, b.material_color = {0.94, 0.94, 0.94};
      break;
    case BowlKind::kPL:
      b.rim_radius = 0.08, b.depth = 0.08, b.material_color = {0.25, 0.85, 0.85};
      break;
  }
  return b;
}

double nominal_x(Position position) {
  switch (position) {
    case Position::kP1: return 0.30;
    case Position::kP2: return 0.18;
    case Position::kP3: return 0.42;
  }
  throw std::invalid_argument("invalid position");
}

FoodModel make_food(FoodKind kind) {
  FoodModel f;
  f.kind = kind;
  switch (kind) {
    case FoodKind::kGranular:
      f.retention_pitch = 0.6, f.particle_radius = 0.007, f.color = {0.86, 0.70, 0.42};
      break;
    case FoodKind::kSemiSolid:
      f.retention_pitch = 0.9, f.cohesive = true, f.color = {0.90, 0.30, 0.45};
      break;
    case FoodKind::kLiquid:
      f.retention_pitch = 0.15, f.color = {0.25, 0.45, 0.95};
      break;
  }
  return f;
}

nlohmann::json to_json(const SceneConfig& scene) {
  return {{"bowl", to_string(scene.bowl)},
          {"food", to_string(scene.food)},
          {"position", to_string(scene.position)},
          {"distractors", scene.distractors},
          {"seed", scene.seed}};
}

SceneConfig scene_from_json(const nlohmann::json& j) {
  SceneConfig s;
  s.bowl = parse_bowl(j.at("bowl").get<std::string>());
  s.food = parse_food(j.at("food").get<std::string>());
  s.position = parse_position(j.at("position").get<std::string>());
  s.distractors = j.value("distractors", false);
  s.seed = j.value("seed", std::uint64_t{0});
  return s;
}

int WorldState::count(ParticleStatus status) const {
  return static_cast<int>(std::count_if(particles.begin(), particles.end(),
                                        [&](const Particle& p) { return p.status == status; }));
}

bool WorldState::lift_complete() const {
  return entered_bowl && tip().position.y >= bowl.rim_height() + kLiftClearance;
}

namespace {

void seed_particles(WorldState& w, std::mt19937_64& rng) {
  const auto& b = w.bowl;
  const double pr = w.food.particle_radius;
  const double y0 = b.inner_bottom() + pr;
  std::uniform_real_distribution<double> jitter(-0.0015, 0.0015);
  auto add_row = [&](int n, double y, double spacing) {
    for (int i = 0; i < n; ++i) {
      const double x = b.center_x + (i - 0.5 * (n - 1)) * spacing + jitter(rng);
      w.particles.push_back({{x, y + 0.5 * jitter(rng)}, ParticleStatus::kInBowl, {}});
    }
  };
  switch (w.food.kind) {
    case FoodKind::kGranular: {
      // A heap: rows of 6, 4 and 2 grains.
      const double spacing = std::min(2.2 * pr, 2.0 * (b.bottom_half_width() - pr - 0.002) / 5);
      add_row(6, y0, spacing);
      add_row(4, y0 + 1.8 * pr, spacing);
      add_row(2, y0 + 3.6 * pr, spacing);
      break;
    }
    case FoodKind::kLiquid: {
      // A shallow pool.
      const double spacing = std::min(2.2 * pr, 2.0 * (b.bottom_half_width() - pr - 0.002) / 7);
      add_row(8, y0, spacing);
      add_row(7, y0 + 1.8 * pr, spacing);
      break;
    }
    case FoodKind::kSemiSolid: {
      // One jelly block of 3 x 2 cells.
      const double dx = jitter(rng);
      for (int r = 0; r < 2; ++r) {
        for (int c = 0; c < 3; ++c) {
          w.particles.push_back({{b.center_x + dx + (c - 1) * 0.008, y0 + r * 0.008}, ParticleStatus::kInBowl, {}});
        }
      }
      break;
    }
  }
}

struct Interval {
  double lo, hi;
};

double distractor_half_width(DistractorShape s) {
  switch (s) {
    case DistractorShape::kBottle: return 0.02;
    case DistractorShape::kApple: return 0.025;
    case DistractorShape::kJar: return 0.025;
    case DistractorShape::kKnife: return 0.05;
  }
  return 0.0;
}

bool try_place_distractors(WorldState& w, std::mt19937_64& rng) {
  constexpr double kGap = 0.01;
  constexpr double kMinX = 0.03, kMaxX = 0.57;
  w.distractors.clear();
  std::vector<DistractorShape> order{DistractorShape::kBottle, DistractorShape::kApple, DistractorShape::kJar,
                                     DistractorShape::kKnife};
  std::shuffle(order.begin(), order.end(), rng);
  const double bowl_half = w.bowl.rim_radius + w.bowl.wall_thickness;
  std::vector<Interval> taken{{w.bowl.center_x - bowl_half, w.bowl.center_x + bowl_half}};
  // Knife first: it is the widest, so it gets the most freedom.
  std::stable_partition(order.begin(), order.end(), [](DistractorShape s) { return s == DistractorShape::kKnife; });
  for (DistractorShape shape : order) {
    const double hw = distractor_half_width(shape);
    // Free centre positions: [kMinX+hw, kMaxX-hw] minus every taken interval widened by hw + gap.
    std::vector<Interval> free{{kMinX + hw, kMaxX - hw}};
    for (const auto& t : taken) {
      std::vector<Interval> next;
      const Interval cut{t.lo - hw - kGap, t.hi + hw + kGap};
      for (const auto& f : free) {
        if (cut.hi <= f.lo || cut.lo >= f.hi) {
          next.push_back(f);
          continue;
        }
        if (cut.lo > f.lo) next.push_back({f.lo, cut.lo});
        if (cut.hi < f.hi) next.push_back({cut.hi, f.hi});
      }
      free = std::move(next);
    }
    double total = 0.0;
    for (const auto& f : free) total += f.hi - f.lo;
    if (total <= 0.0) return false;
    double u = std::uniform_real_distribution<double>(0.0, total)(rng);
    double x = free.back().hi;
    for (const auto& f : free) {
      if (u <= f.hi - f.lo) {
        x = f.lo + u;
        break;
      }
      u -= f.hi - f.lo;
    }
    w.distractors.push_back({shape, x, hw});
    taken.push_back({x - hw, x + hw});
  }
  return true;
}

void place_distractors(WorldState& w, std::mt19937_64& rng) {
  for (int attempt = 0; attempt < 100; ++attempt) {
    if (try_place_distractors(w, rng)) return;
  }
  throw std::logic_error("no room for the distractor set");
}

}  // namespace

WorldState make_scene(const SceneConfig& scene) {
  WorldState w;
  w.scene = scene;
  w.arm = default_arm();
  w.joints = initial_joints();
  auto layout = stream(scene.seed, kLayoutStream);
  const double jitter = std::uniform_real_distribution<double>(-kPositionJitter, kPositionJitter)(layout);
  w.bowl = make_bowl(scene.bowl, nominal_x(scene.position) + jitter);
  w.food = make_food(scene.food);
  seed_particles(w, layout);
  if (scene.distractors) {
    auto placement = stream(scene.seed, kDistractorStream);
    place_distractors(w, placement);
  }
  w.rng = stream(scene.seed, kSpillStream);
  return w;
}

WorldState make_empty_world(std::uint64_t seed) {
  WorldState w;
  w.scene.seed = seed;
  w.arm = default_arm();
  w.joints = initial_joints();
  w.bowl = make_bowl(BowlKind::kTG, -10.0);  // far outside the workspace
  w.food = make_food(FoodKind::kGranular);
  w.rng = stream(seed, kSpillStream);
  return w;
}

namespace {

constexpr int kSubsteps = 8;

bool in_scoop(Vec2 p, const TipPose& tip, double particle_radius) {
  const Vec2 r = p - tip.position;
  return norm(r) <= kScoopRadius + particle_radius && dot(r, spoon_normal(tip.pitch)) >= -particle_radius;
}

void carry(Particle& p, const TipPose& tip) {
  p.position = tip.position + p.spoon_offset.x * spoon_axis(tip.pitch) + p.spoon_offset.y * spoon_normal(tip.pitch);
}

void attach(Particle& p, const TipPose& tip) {
  const Vec2 r = p.position - tip.position;
  p.status = ParticleStatus::kOnSpoon;
  p.spoon_offset = {dot(r, spoon_axis(tip.pitch)), dot(r, spoon_normal(tip.pitch))};
}

}  // namespace

StepInfo step(WorldState& w, const Joints& command) {
  StepInfo info;
  const Joints target = clamp_to_limits(w.arm, command, &info.clamped);
  w.clamped_flag = info.clamped;

  Joints next = w.joints;
  for (int i = 0; i < kJoints; ++i) {
    // Reachable targets are copied exactly so that replaying recorded states is bit-exact.
    const double delta = target[i] - w.joints[i];
    if (std::abs(delta) > w.arm.max_joint_speed) next[i] = w.joints[i] + std::copysign(w.arm.max_joint_speed, delta);
    else next[i] = target[i];
  }

  const double pr = w.food.particle_radius;
  for (int s = 1; s <= kSubsteps; ++s) {
    const double f = static_cast<double>(s) / kSubsteps;
    Joints q;
    for (int i = 0; i < kJoints; ++i) q[i] = w.joints[i] + f * (next[i] - w.joints[i]);
    const TipPose tip = tip_pose(w.arm, q);
    if (tip.position.y < 0.0 || w.bowl.inside_solid(tip.position)) w.collision_flag = true;
    const bool in_cavity = w.bowl.inside_cavity(tip.position);
    if (in_cavity) w.entered_bowl = true;
    if (w.entered_bowl) w.max_height_after_entry = std::max(w.max_height_after_entry, tip.position.y);

    for (auto& p : w.particles) {
      if (p.status == ParticleStatus::kOnSpoon) carry(p, tip);
    }
    if (!in_cavity) continue;
    bool cluster_hit = false;
    for (auto& p : w.particles) {
      if (p.status != ParticleStatus::kInBowl || !in_scoop(p.position, tip, pr)) continue;
      if (w.food.cohesive) {
        cluster_hit = true;
        break;
      }
      attach(p, tip);
      ++info.captured;
    }
    if (cluster_hit) {
      for (auto& p : w.particles) {
        if (p.status != ParticleStatus::kInBowl) continue;
        attach(p, tip);
        ++info.captured;
      }
    }
  }
  w.joints = next;

  const TipPose tip = w.tip();
  if (std::abs(tip.pitch) > w.food.retention_pitch) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const bool back_in_bowl = w.bowl.inside_cavity(tip.position);
    auto drop = [&](Particle& p) {
      if (back_in_bowl) {
        const double hw = w.bowl.bottom_half_width() - pr;
        p.position = {std::clamp(p.position.x, w.bowl.center_x - hw, w.bowl.center_x + hw),
                      w.bowl.inner_bottom() + pr};
        p.status = ParticleStatus::kInBowl;
        ++info.returned;
      } else {
        p.position = {p.position.x, pr};
        p.status = ParticleStatus::kSpilled;
        ++info.spilled;
      }
    };
    if (w.food.cohesive) {
      if (w.count(ParticleStatus::kOnSpoon) > 0 && u(w.rng) < w.food.spill_rate) {
        for (auto& p : w.particles) {
          if (p.status == ParticleStatus::kOnSpoon) drop(p);
        }
      }
    } else {
      for (auto& p : w.particles) {
        if (p.status == ParticleStatus::kOnSpoon && u(w.rng) < w.food.spill_rate) drop(p);
      }
    }
  }
  ++w.step_count;
  return info;
}

TrialScore score_counts(int scooped, int spilled, bool collision) {
  TrialScore s{0.0, scooped, spilled};
  if (collision || scooped < kMinScooped) return s;
  s.value = spilled == 0 ? 1.0 : 0.7;
  return s;
}

TrialScore score_trial(const WorldState& w) {
  const int scooped = w.lift_complete() ? w.count(ParticleStatus::kOnSpoon) : 0;
  return score_counts(scooped, w.count(ParticleStatus::kSpilled), w.collision_flag);
}

std::uint32_t state_hash(const WorldState& w) {
  std::string bytes;
  auto put = [&](const auto& v) { bytes.append(reinterpret_cast<const char*>(&v), sizeof(v)); };
  put(w.scene.seed);
  for (double q : w.joints) put(q);
  put(w.bowl.center_x);
  for (const auto& p : w.particles) {
    put(p.position.x), put(p.position.y), put(static_cast<int>(p.status));
    put(p.spoon_offset.x), put(p.spoon_offset.y);
  }
  for (const auto& d : w.distractors) put(static_cast<int>(d.shape)), put(d.x);
  put(w.step_count), put(w.collision_flag), put(w.clamped_flag), put(w.entered_bowl), put(w.max_height_after_entry);
  std::ostringstream rng_state;
  rng_state << w.rng;
  bytes += rng_state.str();
  return static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size())));
}

}  // namespace avil::sim
