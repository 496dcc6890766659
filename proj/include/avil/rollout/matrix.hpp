#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "avil/net/policy.hpp"
#include "avil/rollout/rollout.hpp"
#include "avil/sim/world.hpp"

namespace avil::rollout {

enum class Method { kAvil, kBaseline };
std::string to_string(Method method);
Method parse_method(const std::string& s);

struct CellKey {
  Method method = Method::kAvil;
  sim::BowlKind bowl = sim::BowlKind::kTG;
  sim::FoodKind food = sim::FoodKind::kGranular;
  sim::Position position = sim::Position::kP1;
  bool distractors = false;
  int trial = 0;
};

struct Cell {
  CellKey key;
  std::uint64_t seed = 0;
  double score = 0.0;
  int scooped = 0;
  int spilled = 0;
  bool collision = false;
  int steps = 0;
  std::string termination;
};

struct MatrixConfig {
  int trials = 5;
  std::uint64_t seed = 1;
  RolloutOptions rollout;
};

/// Scene seed for one (bowl, food, position, trial). It ignores the method and
/// the distractor flag, so both methods and both scene variants are paired.
std::uint64_t cell_seed(std::uint64_t base, sim::BowlKind bowl, sim::FoodKind food, sim::Position position, int trial);

/// Runs one trial; any exception becomes a 0.0 cell whose termination names it.
/// `policy` may be null for the baseline.
Cell run_cell(const CellKey& key, std::uint64_t seed, const net::PolicyParams* policy, const RolloutOptions& options);

struct ExperimentResult {
  std::vector<Cell> cells;
};

using CellCallback = std::function<void(const Cell&, std::size_t done, std::size_t total)>;

/// Both methods over bowls x foods x positions x {clean, distractors} x trials.
ExperimentResult run_matrix(const net::PolicyParams& policy, const MatrixConfig& config, const CellCallback& on_cell = {});

std::string cells_csv(const ExperimentResult& result);
ExperimentResult parse_cells_csv(const std::string& text);

struct MarginalRow {
  std::string level;
  double avil = 0.0;
  double baseline = 0.0;
  int cells = 0;                 // per method
  std::optional<double> ratio;   // avil / baseline, empty when the baseline mean is 0
};

struct Summary {
  // Clean scenes only; each row averages over the other factors and trials.
  std::vector<MarginalRow> per_bowl, per_food, per_position;
  // TG at P1, clean vs distractors, per method.
  std::vector<MarginalRow> scenes;
  MarginalRow overall;        // every cell, both scene variants
  MarginalRow overall_clean;
  double avil_collision_rate = 0.0;
  double baseline_collision_rate = 0.0;
};

Summary summarize(const ExperimentResult& result);
std::string summary_json(const Summary& summary);
std::string summary_markdown(const Summary& summary);

/// cells.csv, summary.json, summary.md
void write_report(const ExperimentResult& result, const std::filesystem::path& dir);

}  // namespace avil::rollout
