#include "avil/rollout/matrix.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <sstream>
#include <stdexcept>

#include "avil/util/seed.hpp"

namespace avil::rollout {

using nlohmann::json;

std::string to_string(Method method) { return method == Method::kAvil ? "avil" : "baseline"; }

Method parse_method(const std::string& s) {
  if (s == "avil") return Method::kAvil;
  if (s == "baseline") return Method::kBaseline;
  throw std::invalid_argument("unknown method '" + s + "'");
}

std::uint64_t cell_seed(std::uint64_t base, sim::BowlKind bowl, sim::FoodKind food, sim::Position position, int trial) {
  const std::uint64_t tag = ((static_cast<std::uint64_t>(bowl) * 8 + static_cast<std::uint64_t>(food)) * 8 +
                             static_cast<std::uint64_t>(position)) * 1024 + static_cast<std::uint64_t>(trial);
  return util::derive_seed(base, tag);
}

Cell run_cell(const CellKey& key, std::uint64_t seed, const net::PolicyParams* policy, const RolloutOptions& options) {
  Cell cell;
  cell.key = key;
  cell.seed = seed;
  try {
    sim::WorldState world = sim::make_scene({key.bowl, key.food, key.position, key.distractors, seed});
    RolloutTrace trace;
    if (key.method == Method::kAvil) {
      if (!policy) throw std::invalid_argument("run_cell: AVIL cell without a policy");
      AvilPolicy avil(*policy);
      trace = mpc_execute(avil, world, options);
    } else {
      trace = baseline_controller(world, {}, options);
    }
    cell.score = trace.score.value;
    cell.scooped = trace.score.scooped_count;
    cell.spilled = trace.score.spilled_count;
    cell.collision = trace.collision;
    cell.steps = trace.step_count;
    cell.termination = trace.termination;
  } catch (const std::exception& e) {
    cell.score = 0.0;
    cell.termination = std::string("error: ") + e.what();
  }
  return cell;
}

ExperimentResult run_matrix(const net::PolicyParams& policy, const MatrixConfig& config, const CellCallback& on_cell) {
  if (config.trials < 1) throw std::invalid_argument("run_matrix: trials must be at least 1");
  std::vector<CellKey> keys;
  for (Method method : {Method::kAvil, Method::kBaseline}) {
    for (bool distractors : {false, true}) {
      for (auto bowl : sim::kAllBowls) {
        for (auto food : sim::kAllFoods) {
          for (auto position : sim::kAllPositions) {
            for (int trial = 0; trial < config.trials; ++trial) {
              keys.push_back({method, bowl, food, position, distractors, trial});
            }
          }
        }
      }
    }
  }
  ExperimentResult result;
  result.cells.reserve(keys.size());
  for (const auto& key : keys) {
    const std::uint64_t seed = cell_seed(config.seed, key.bowl, key.food, key.position, key.trial);
    result.cells.push_back(run_cell(key, seed, &policy, config.rollout));
    if (on_cell) on_cell(result.cells.back(), result.cells.size(), keys.size());
  }
  return result;
}

namespace {

const char* kCsvHeader = "method,bowl,food,position,scene,trial,seed,score,scooped,spilled,collision,steps,termination";

std::string scene_name(bool distractors) { return distractors ? "distractors" : "clean"; }

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        out.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        out.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.emplace_back();
    } else {
      out.back() += c;
    }
  }
  return out;
}

std::string format_score(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct Acc {
  double avil = 0.0, baseline = 0.0;
  int n_avil = 0, n_baseline = 0;

  void add(const Cell& c) {
    if (c.key.method == Method::kAvil) {
      avil += c.score;
      ++n_avil;
    } else {
      baseline += c.score;
      ++n_baseline;
    }
  }

  MarginalRow row(std::string level) const {
    MarginalRow r;
    r.level = std::move(level);
    r.avil = n_avil ? avil / n_avil : 0.0;
    r.baseline = n_baseline ? baseline / n_baseline : 0.0;
    r.cells = std::max(n_avil, n_baseline);
    if (r.baseline > 0.0) r.ratio = r.avil / r.baseline;
    return r;
  }
};

template <typename Enum, std::size_t N, typename KeyFn>
std::vector<MarginalRow> marginal(const ExperimentResult& result, const std::array<Enum, N>& levels, KeyFn key) {
  std::vector<MarginalRow> rows;
  for (Enum level : levels) {
    Acc acc;
    for (const auto& c : result.cells) {
      if (!c.key.distractors && key(c.key) == level) acc.add(c);
    }
    rows.push_back(acc.row(sim::to_string(level)));
  }
  return rows;
}

json row_json(const MarginalRow& r) {
  return {{"level", r.level},
          {"avil", r.avil},
          {"baseline", r.baseline},
          {"cells", r.cells},
          {"ratio", r.ratio ? json(*r.ratio) : json(nullptr)}};
}

std::string fixed(double v, int digits) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

void table(std::ostringstream& out, const std::string& title, const std::string& column,
           const std::vector<MarginalRow>& rows) {
  out << "## " << title << "\n\n| " << column << " | AVIL | baseline | AVIL/baseline | cells |\n|---|---|---|---|---|\n";
  for (const auto& r : rows) {
    out << "| " << r.level << " | " << fixed(r.avil, 3) << " | " << fixed(r.baseline, 3) << " | "
        << (r.ratio ? fixed(*r.ratio, 2) : std::string("n/a")) << " | " << r.cells << " |\n";
  }
  out << "\n";
}

}  // namespace

std::string cells_csv(const ExperimentResult& result) {
  std::ostringstream out;
  out << kCsvHeader << "\n";
  for (const auto& c : result.cells) {
    out << to_string(c.key.method) << ',' << sim::to_string(c.key.bowl) << ',' << sim::to_string(c.key.food) << ','
        << sim::to_string(c.key.position) << ',' << scene_name(c.key.distractors) << ',' << c.key.trial << ','
        << c.seed << ',' << format_score(c.score) << ',' << c.scooped << ',' << c.spilled << ','
        << (c.collision ? 1 : 0) << ',' << c.steps << ',' << csv_field(c.termination) << "\n";
  }
  return out.str();
}

ExperimentResult parse_cells_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader) throw std::runtime_error("cells.csv: unexpected header");
  ExperimentResult result;
  int n = 1;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 13) throw std::runtime_error("cells.csv line " + std::to_string(n) + ": expected 13 fields");
    Cell c;
    c.key.method = parse_method(f[0]);
    c.key.bowl = sim::parse_bowl(f[1]);
    c.key.food = sim::parse_food(f[2]);
    c.key.position = sim::parse_position(f[3]);
    if (f[4] != "clean" && f[4] != "distractors") throw std::runtime_error("cells.csv: unknown scene " + f[4]);
    c.key.distractors = f[4] == "distractors";
    c.key.trial = std::stoi(f[5]);
    c.seed = std::stoull(f[6]);
    c.score = std::stod(f[7]);
    c.scooped = std::stoi(f[8]);
    c.spilled = std::stoi(f[9]);
    c.collision = f[10] == "1";
    c.steps = std::stoi(f[11]);
    c.termination = f[12];
    result.cells.push_back(std::move(c));
  }
  return result;
}

Summary summarize(const ExperimentResult& result) {
  Summary s;
  s.per_bowl = marginal(result, sim::kAllBowls, [](const CellKey& k) { return k.bowl; });
  s.per_food = marginal(result, sim::kAllFoods, [](const CellKey& k) { return k.food; });
  s.per_position = marginal(result, sim::kAllPositions, [](const CellKey& k) { return k.position; });
  for (bool distractors : {false, true}) {
    Acc acc;
    for (const auto& c : result.cells) {
      if (c.key.bowl == sim::BowlKind::kTG && c.key.position == sim::Position::kP1 && c.key.distractors == distractors) {
        acc.add(c);
      }
    }
    s.scenes.push_back(acc.row(scene_name(distractors)));
  }
  Acc all, clean;
  int collisions[2] = {0, 0}, counts[2] = {0, 0};
  for (const auto& c : result.cells) {
    all.add(c);
    if (!c.key.distractors) clean.add(c);
    const int m = c.key.method == Method::kAvil ? 0 : 1;
    collisions[m] += c.collision;
    ++counts[m];
  }
  s.overall = all.row("overall");
  s.overall_clean = clean.row("overall (clean scenes)");
  s.avil_collision_rate = counts[0] ? static_cast<double>(collisions[0]) / counts[0] : 0.0;
  s.baseline_collision_rate = counts[1] ? static_cast<double>(collisions[1]) / counts[1] : 0.0;
  return s;
}

std::string summary_json(const Summary& s) {
  auto rows = [](const std::vector<MarginalRow>& v) {
    json a = json::array();
    for (const auto& r : v) a.push_back(row_json(r));
    return a;
  };
  const json j = {{"per_bowl", rows(s.per_bowl)},
                  {"per_food", rows(s.per_food)},
                  {"per_position", rows(s.per_position)},
                  {"scenes_tg_p1", rows(s.scenes)},
                  {"overall", row_json(s.overall)},
                  {"overall_clean", row_json(s.overall_clean)},
                  {"collision_rate", {{"avil", s.avil_collision_rate}, {"baseline", s.baseline_collision_rate}}}};
  return j.dump(2) + "\n";
}

std::string summary_markdown(const Summary& s) {
  std::ostringstream out;
  out << "# Evaluation summary\n\n"
      << "Mean success metric (1.0 clean scoop, 0.7 scoop with spillage, 0.0 failure). The bowl, food and "
         "position tables use scenes without distractors.\n\n";
  table(out, "Per bowl", "bowl", s.per_bowl);
  table(out, "Per food", "food", s.per_food);
  table(out, "Per position", "position", s.per_position);
  table(out, "Scene comparison (TG bowl at P1)", "scene", s.scenes);
  table(out, "Overall", "cells", {s.overall_clean, s.overall});
  out << "Collision rate: AVIL " << fixed(s.avil_collision_rate, 3) << ", baseline "
      << fixed(s.baseline_collision_rate, 3) << "\n";
  return out.str();
}

void write_report(const ExperimentResult& result, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const Summary s = summarize(result);
  for (const auto& [name, text] : {std::pair<std::string, std::string>{"cells.csv", cells_csv(result)},
                                   {"summary.json", summary_json(s)},
                                   {"summary.md", summary_markdown(s)}}) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + (dir / name).string());
    out << text;
  }
}

}  // namespace avil::rollout
