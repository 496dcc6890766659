// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit if any fails.
//
//   acceptance [--workdir DIR] [--only SUBSTRING]
//
// The pipeline criteria drive the real `avil` binary twice with the same seeds.

#include <malloc.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "avil/net/policy.hpp"
#include "avil/numerics/grad_check.hpp"
#include "avil/numerics/ops.hpp"
#include "avil/rollout/matrix.hpp"
#include "avil/rollout/rollout.hpp"
#include "avil/sim/render.hpp"
#include "avil/train/checkpoint.hpp"
#include "oracles.hpp"
#include "score_cases.hpp"

#ifndef AVIL_CLI
#error "AVIL_CLI must point at the avil executable"
#endif

using namespace avil;
namespace fs = std::filesystem;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

struct Result {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------- gradients

struct OpCase {
  std::string name;
  std::function<std::pair<nn::GradCheckFn, std::vector<nn::Tensor64>>(std::mt19937_64&)> draw;
};

int uniform_int(std::mt19937_64& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

std::vector<OpCase> op_cases() {
  using nn::Tape64;
  using nn::Tensor64;
  using nn::Var;
  using oracle::random_tensor;
  std::vector<OpCase> ops;
  ops.push_back({"conv2d", [](std::mt19937_64& rng) {
                   const int cin = uniform_int(rng, 1, 3), cout = uniform_int(rng, 1, 3);
                   const int k = 2 * uniform_int(rng, 0, 2) + 1, stride = uniform_int(rng, 1, 2);
                   const int pad = uniform_int(rng, 0, k / 2);
                   const int h = uniform_int(rng, k, 7), w = uniform_int(rng, k, 7);
                   nn::GradCheckFn fn = [stride, pad](Tape64& t, std::span<const Var> in) {
                     return nn::conv2d(t, in[0], in[1], in[2], stride, pad);
                   };
                   return std::pair{fn, std::vector<Tensor64>{random_tensor<double>({cin, h, w}, rng),
                                                              random_tensor<double>({cout, cin, k, k}, rng),
                                                              random_tensor<double>({cout}, rng)}};
                 }});
  for (auto [name, mode] : {std::pair{"channel_pool(max)", nn::PoolMode::kMax}, std::pair{"channel_pool(avg)", nn::PoolMode::kAvg}}) {
    ops.push_back({name, [mode](std::mt19937_64& rng) {
                     nn::GradCheckFn fn = [mode](Tape64& t, std::span<const Var> in) {
                       return nn::channel_pool(t, in[0], mode);
                     };
                     return std::pair{fn, std::vector<Tensor64>{random_tensor<double>(
                                              {uniform_int(rng, 1, 5), uniform_int(rng, 1, 6), uniform_int(rng, 1, 6)}, rng)}};
                   }});
  }
  ops.push_back({"linear", [](std::mt19937_64& rng) {
                   const int n = uniform_int(rng, 1, 10), d = uniform_int(rng, 1, 10);
                   nn::GradCheckFn fn = [](Tape64& t, std::span<const Var> in) { return nn::linear(t, in[0], in[1], in[2]); };
                   return std::pair{fn, std::vector<Tensor64>{random_tensor<double>({n}, rng), random_tensor<double>({d, n}, rng),
                                                              random_tensor<double>({d}, rng)}};
                 }});
  for (auto [name, kind] : {std::pair{"relu", nn::Activation::kRelu}, std::pair{"sigmoid", nn::Activation::kSigmoid}}) {
    ops.push_back({name, [kind](std::mt19937_64& rng) {
                     nn::GradCheckFn fn = [kind](Tape64& t, std::span<const Var> in) { return nn::activation(t, in[0], kind); };
                     return std::pair{fn, std::vector<Tensor64>{random_tensor<double>(
                                              {uniform_int(rng, 1, 4), uniform_int(rng, 1, 5)}, rng, -4.0, 4.0)}};
                   }});
  }
  ops.push_back({"concat", [](std::mt19937_64& rng) {
                   const int parts = uniform_int(rng, 1, 3);
                   const std::size_t axis = static_cast<std::size_t>(uniform_int(rng, 0, 2));
                   const int a = uniform_int(rng, 1, 3), b = uniform_int(rng, 1, 3);
                   std::vector<Tensor64> in;
                   for (int p = 0; p < parts; ++p) {
                     nn::Shape s{a, b, 2};
                     s[axis] = uniform_int(rng, 1, 3);
                     in.push_back(random_tensor<double>(s, rng));
                   }
                   nn::GradCheckFn fn = [axis](Tape64& t, std::span<const Var> v) { return nn::concat(t, v, axis); };
                   return std::pair{fn, in};
                 }});
  ops.push_back({"add", [](std::mt19937_64& rng) {
                   const nn::Shape s{uniform_int(rng, 1, 4), uniform_int(rng, 1, 4)};
                   nn::GradCheckFn fn = [](Tape64& t, std::span<const Var> in) { return nn::add(t, in[0], in[1]); };
                   return std::pair{fn, std::vector<Tensor64>{random_tensor<double>(s, rng), random_tensor<double>(s, rng)}};
                 }});
  ops.push_back({"reshape", [](std::mt19937_64& rng) {
                   const int a = uniform_int(rng, 1, 4), b = uniform_int(rng, 1, 4), c = uniform_int(rng, 1, 4);
                   nn::GradCheckFn fn = [=](Tape64& t, std::span<const Var> in) { return nn::reshape(t, in[0], {a * b * c}); };
                   return std::pair{fn, std::vector<Tensor64>{random_tensor<double>({a, b, c}, rng)}};
                 }});
  ops.push_back({"bce_loss", [](std::mt19937_64& rng) {
                   const int n = uniform_int(rng, 1, 12);
                   Tensor64 target({n});
                   for (auto& v : target.data()) v = static_cast<double>(rng() & 1);
                   nn::GradCheckFn fn = [target](Tape64& t, std::span<const Var> in) { return nn::bce_loss(t, in[0], target); };
                   return std::pair{fn, std::vector<Tensor64>{random_tensor<double>({n}, rng, 0.02, 0.98)}};
                 }});
  ops.push_back({"mse_loss", [](std::mt19937_64& rng) {
                   const int n = uniform_int(rng, 1, 12);
                   const auto target = random_tensor<double>({n}, rng);
                   nn::GradCheckFn fn = [target](Tape64& t, std::span<const Var> in) { return nn::mse_loss(t, in[0], target); };
                   return std::pair{fn, std::vector<Tensor64>{random_tensor<double>({n}, rng)}};
                 }});
  ops.push_back({"bc_objective", [](std::mt19937_64& rng) {
                   const int n = 6 * uniform_int(rng, 1, 3);
                   const auto expert = random_tensor<double>({n}, rng);
                   nn::GradCheckFn fn = [expert](Tape64& t, std::span<const Var> in) {
                     return net::bc_objective(t, in[0], expert);
                   };
                   return std::pair{fn, std::vector<Tensor64>{random_tensor<double>({n}, rng)}};
                 }});
  return ops;
}

Result gradient_suite() {
  const auto t0 = Clock::now();
  constexpr int kDraws = 100;
  std::mt19937_64 rng(20240601);
  std::string worst;
  double worst_err = 0.0;
  bool ok = true;
  std::size_t checked = 0;
  for (const auto& op : op_cases()) {
    double op_max = 0.0;
    std::size_t op_checked = 0;
    for (int d = 0; d < kDraws; ++d) {
      auto [fn, inputs] = op.draw(rng);
      const auto r = nn::grad_check(fn, inputs, rng());
      op_max = std::max(op_max, r.max_relative_error);
      op_checked += r.checked;
    }
    ok = ok && op_max < 1e-4 && op_checked > 0;
    checked += op_checked;
    if (op_max >= worst_err) worst_err = op_max, worst = op.name;
    std::printf("      %-18s %d draws, %6zu elements, max rel err %.2e\n", op.name.c_str(), kDraws, op_checked, op_max);
  }

  // End to end: theta2..theta4 through the policy head and the objective.
  net::NetConfig c;
  c.height = c.width = 16;
  const auto params = net::init_params(c, 21);
  nn::Tape64 att;
  std::mt19937_64 img_rng(6);
  auto image = oracle::random_tensor<double>({3, 16, 16}, img_rng, 0.0, 1.0);
  const auto theta1 = net::bind(att, std::span<const nn::Parameter>(params.theta1), false);
  const auto map = att.value(net::attention_forward(att, att.leaf(image), theta1, c));
  const auto centroid = net::extract_centroid(map.cast<float>(), c.tau);
  std::vector<net::JointVector> hist(4);
  for (auto& q : hist) {
    for (double& v : q) v = std::uniform_real_distribution<double>(-2.0, 2.0)(img_rng);
  }
  const auto history = net::encode_history<double>(hist, c);
  const auto target = oracle::random_tensor<double>({12}, img_rng);
  std::vector<nn::Tensor64> inputs;
  for (const auto* g : {&params.theta2, &params.theta3, &params.theta4}) {
    for (const auto& p : *g) inputs.push_back(p.value.cast<double>());
  }
  const auto e2e = nn::grad_check(
      [&](nn::Tape64& t, std::span<const nn::Var> in) {
        const auto head = net::policy_head(t, centroid, history, in.subspan(0, 2), in.subspan(2, 2), in.subspan(4, 8), c);
        return net::bc_objective(t, head.action, target);
      },
      inputs, 17);
  const double secs = seconds_since(t0);
  ok = ok && e2e.max_relative_error < 1e-3 && secs < 120.0;
  return {ok, fmt("%zu op elements, worst op %s %.2e (< 1e-4); end-to-end theta2-4 %zu elements, %.2e (< 1e-3); %.1f s (< 120)",
                  checked, worst.c_str(), worst_err, e2e.checked, e2e.max_relative_error, secs)};
}

// ---------------------------------------------------------------- oracles

double max_abs_diff(const nn::Tensor& a, const nn::Tensor& b) {
  if (a.shape() != b.shape()) return INFINITY;
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(double(a[i]) - double(b[i])));
  return m;
}

Result oracle_equivalence() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(77);
  double conv = 0.0, pool = 0.0, lin = 0.0;
  for (int n = 0; n < 50; ++n) {
    using oracle::random_tensor;
    const int cin = uniform_int(rng, 1, 4), cout = uniform_int(rng, 1, 4);
    const int k = 2 * uniform_int(rng, 0, 3) + 1, stride = uniform_int(rng, 1, 2), pad = uniform_int(rng, 0, k / 2);
    const int h = uniform_int(rng, k, 12), w = uniform_int(rng, k, 12);
    const auto x = random_tensor<float>({cin, h, w}, rng);
    const auto wt = random_tensor<float>({cout, cin, k, k}, rng);
    const auto b = random_tensor<float>({cout}, rng);
    nn::Tape32 tape;
    conv = std::max(conv, max_abs_diff(tape.value(nn::conv2d(tape, tape.leaf(x), tape.leaf(wt), tape.leaf(b), stride, pad)),
                                       oracle::conv2d_naive(x, wt, b, stride, pad)));

    const auto px = random_tensor<float>({uniform_int(rng, 1, 6), uniform_int(rng, 1, 9), uniform_int(rng, 1, 9)}, rng);
    pool = std::max(pool, max_abs_diff(tape.value(nn::channel_pool(tape, tape.leaf(px), nn::PoolMode::kMax)),
                                       oracle::channel_scan(px, true)));
    pool = std::max(pool, max_abs_diff(tape.value(nn::channel_pool(tape, tape.leaf(px), nn::PoolMode::kAvg)),
                                       oracle::channel_scan(px, false)));

    const int in = uniform_int(rng, 1, 64), out = uniform_int(rng, 1, 64);
    const auto lx = random_tensor<float>({in}, rng);
    const auto lw = random_tensor<float>({out, in}, rng);
    const auto lb = random_tensor<float>({out}, rng);
    lin = std::max(lin, max_abs_diff(tape.value(nn::linear(tape, tape.leaf(lx), tape.leaf(lw), tape.leaf(lb))),
                                     oracle::linear_dot(lx, lw, lb)));
  }
  const double secs = seconds_since(t0);
  const bool ok = conv <= 1e-5 && pool <= 1e-5 && lin <= 1e-5 && secs < 60.0;
  return {ok, fmt("50 random shapes each: conv2d %.1e, channel pool %.1e, linear %.1e (<= 1e-5); %.2f s (< 60)", conv, pool,
                  lin, secs)};
}

// ---------------------------------------------------------------- scoring, MPC

Result scoring_exactness() {
  int right = 0;
  std::string wrong;
  const auto cases = avil::testing::score_cases();
  for (const auto& c : cases) {
    const double got = sim::score_trial(c.world).value;
    if (got == c.expected) ++right;
    else wrong += fmt(" [%s: got %g want %g]", c.name.c_str(), got, c.expected);
  }
  return {right == 12 && cases.size() == 12, fmt("%d/%zu constructed endings scored exactly%s", right, cases.size(), wrong.c_str())};
}

class StubPolicy : public rollout::ChunkPolicy {
 public:
  explicit StubPolicy(int k) : k_(k) {}
  int history_length() const override { return k_; }
  rollout::PolicyOutput act(const nn::Tensor&, std::span<const sim::Joints> history) override {
    windows.emplace_back(history.begin(), history.end());
    sim::Joints p1 = history.back(), p2 = history.back();
    p1[1] += 0.01;
    p1[5] -= 0.02;
    p2[0] += 0.4;  // must never reach the simulator
    return {{p1, p2}, std::nullopt};
  }
  std::vector<std::vector<sim::Joints>> windows;

 private:
  int k_;
};

Result mpc_contract() {
  int steps = 0;
  bool ok = true;
  for (int k : {1, 2, 4, 6}) {
    StubPolicy policy(k);
    sim::WorldState world = sim::make_scene({sim::BowlKind::kPM, sim::FoodKind::kGranular, sim::Position::kP3, false, 3});
    sim::WorldState mirror = world;
    rollout::RolloutOptions opts;
    opts.max_steps = 15;
    const auto trace = rollout::mpc_execute(policy, world, opts);
    std::deque<sim::Joints> window(static_cast<std::size_t>(k), mirror.joints);
    ok = ok && trace.step_count == 15 && policy.windows.size() == 15;
    for (std::size_t t = 0; t < trace.steps.size() && ok; ++t) {
      const auto& s = trace.steps[t];
      ok = ok && std::memcmp(s.command.data(), s.predicted.at(0).data(), sizeof(sim::Joints)) == 0;
      ok = ok && policy.windows[t] == std::vector<sim::Joints>(window.begin(), window.end());
      ok = ok && s.state_hash == sim::state_hash(mirror);
      sim::step(mirror, s.predicted[0]);
      window.pop_front();
      window.push_back(mirror.joints);
      ++steps;
    }
    ok = ok && sim::state_hash(mirror) == sim::state_hash(world);
  }
  return {ok, fmt("%d steps over k in {1,2,4,6}: command == chunk[0] bitwise, simulator state matches element-0 replay, "
                  "window == last k joint vectors",
                  steps)};
}

// ---------------------------------------------------------------- pipeline

struct PipelineRun {
  fs::path dir;
  double seconds = 0.0;
  bool ok = false;
  std::string failure;
};

PipelineRun run_pipeline(const fs::path& dir) {
  PipelineRun run{dir};
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string cli = AVIL_CLI;
  const std::vector<std::pair<std::string, std::string>> steps = {
      {"gen-demos", "gen-demos --out ds --episodes 100 --seed 1 --hw 64x64"},
      {"train-attention", "train-attention --dataset ds --out attention --epochs 200 --lr 1e-4 --batch 8 --seed 1"},
      {"train-policy", "train-policy --dataset ds --attention attention --out policy --epochs 200 --lr 1e-4 --batch 8 --seed 1"},
      {"eval-matrix", "eval-matrix --ckpt policy --trials 5 --seed 1 --out eval"},
  };
  const auto t0 = Clock::now();
  for (const auto& [name, args] : steps) {
    const auto ts = Clock::now();
    const std::string cmd = "cd '" + dir.string() + "' && '" + cli + "' " + args + " > " + name + ".out 2> " + name + ".log";
    const int rc = std::system(cmd.c_str());
    std::printf("      %s: %s in %.0f s\n", dir.filename().c_str(), name.c_str(), seconds_since(ts));
    std::fflush(stdout);
    if (rc != 0) {
      run.failure = name + " exited with " + std::to_string(rc) + " (see " + (dir / (name + ".log")).string() + ")";
      return run;
    }
  }
  run.seconds = seconds_since(t0);
  run.ok = true;
  return run;
}

Result attention_quality(const PipelineRun& run) {
  if (!run.ok) return {false, run.failure};
  const json summary = json::parse(read_file(run.dir / "attention" / "train_summary.json"));
  const double iou = summary.at("holdout_iou").get<double>();
  return {iou >= 0.6, fmt("held-out bowl-mask IoU %.3f over %d held-out frames (>= 0.6), 200 epochs, lr 1e-4, batch 8",
                          iou, summary.at("holdout_items").get<int>())};
}

Result distractor_robustness(const PipelineRun& run, const rollout::Summary& summary) {
  if (!run.ok) return {false, run.failure};
  const auto params = train::load_checkpoint(run.dir / "policy");
  const int h = params.config.height, w = params.config.width;
  int within = 0;
  double worst = 0.0;
  for (int i = 0; i < 50; ++i) {
    const sim::SceneConfig clean{sim::BowlKind::kTG, sim::FoodKind::kGranular, sim::kAllPositions[i % 3], false,
                                 rollout::cell_seed(9001, sim::BowlKind::kTG, sim::FoodKind::kGranular, sim::kAllPositions[i % 3], i)};
    sim::SceneConfig cluttered = clean;
    cluttered.distractors = true;
    const auto a = net::extract_centroid(net::attention_map(sim::render(sim::make_scene(clean), h, w), params), params.config.tau);
    const auto b = net::extract_centroid(net::attention_map(sim::render(sim::make_scene(cluttered), h, w), params), params.config.tau);
    const double shift = std::hypot((a.x - b.x) * w, (a.y - b.y) * h);
    worst = std::max(worst, shift);
    within += shift <= 5.0;
  }
  const auto& scenes = summary.scenes;
  const double delta = scenes.at(1).avil - scenes.at(0).avil;
  const bool ok = within >= 45 && std::abs(delta) <= 0.1;
  return {ok, fmt("centroid shift <= 5 px in %d/50 pairs (>= 45), worst %.1f px; TG-P1 AVIL mean clean %.3f vs "
                  "distractors %.3f, |delta| %.3f (<= 0.1)",
                  within, worst, scenes.at(0).avil, scenes.at(1).avil, std::abs(delta))};
}

Result avil_vs_baseline(const PipelineRun& run, const rollout::Summary& s, const rollout::ExperimentResult& result) {
  if (!run.ok) return {false, run.failure};
  bool ok = true;
  std::string rows;
  int per_method = 0;
  for (const auto& c : result.cells) per_method += c.key.method == rollout::Method::kAvil;
  for (const auto* table : {&s.per_bowl, &s.per_food, &s.per_position}) {
    for (const auto& r : *table) {
      const bool row_ok = r.avil >= r.baseline;
      ok = ok && row_ok;
      rows += fmt(" %s %.2f/%.2f%s", r.level.c_str(), r.avil, r.baseline, row_ok ? "" : "(!)");
    }
  }
  double liquid = -1.0;
  for (const auto& r : s.per_food) {
    if (r.level == "liquid") liquid = r.baseline;
  }
  ok = ok && s.overall.avil > s.overall.baseline && liquid >= 0.0 && liquid <= 0.1 && per_method == 360 &&
       result.cells.size() == 720;
  return {ok, fmt("%d cells per method; overall AVIL %.3f > baseline %.3f; baseline liquid %.3f (<= 0.1); AVIL/baseline "
                  "marginals:%s",
                  per_method, s.overall.avil, s.overall.baseline, liquid, rows.c_str())};
}

Result zero_shot(const PipelineRun& run, const rollout::ExperimentResult& result) {
  if (!run.ok) return {false, run.failure};
  double granular = 0.0, semi = 0.0;
  int ng = 0, ns = 0;
  std::string per_bowl;
  for (auto bowl : {sim::BowlKind::kPS, sim::BowlKind::kPM, sim::BowlKind::kPL}) {
    double sum = 0.0;
    int n = 0;
    for (const auto& c : result.cells) {
      if (c.key.method == rollout::Method::kAvil && !c.key.distractors && c.key.bowl == bowl &&
          c.key.food == sim::FoodKind::kGranular) {
        sum += c.score, ++n;
      }
    }
    granular += sum, ng += n;
    per_bowl += fmt(" %s %.2f", sim::to_string(bowl).c_str(), sum / n);
  }
  for (const auto& c : result.cells) {
    if (c.key.method == rollout::Method::kAvil && !c.key.distractors && c.key.food == sim::FoodKind::kSemiSolid) {
      semi += c.score, ++ns;
    }
  }
  granular /= ng;
  semi /= ns;
  return {granular >= 0.5 && semi >= 0.4,
          fmt("AVIL on PS/PM/PL granular %.3f over %d cells (>= 0.5; per bowl%s); semi-solid %.3f over %d cells (>= 0.4)",
              granular, ng, per_bowl.c_str(), semi, ns)};
}

Result determinism(const PipelineRun& a, const PipelineRun& b) {
  if (!a.ok) return {false, a.failure};
  if (!b.ok) return {false, b.failure};
  std::string diffs;
  for (const char* f : {"attention/params.bin", "attention/manifest.json", "policy/params.bin", "policy/manifest.json",
                        "eval/cells.csv", "ds/dataset.json", "attention/train_log.jsonl", "policy/train_log.jsonl"}) {
    if (read_file(a.dir / f) != read_file(b.dir / f)) diffs += std::string(" ") + f;
  }
  const double worst = std::max(a.seconds, b.seconds);
  const bool ok = diffs.empty() && worst <= 2 * 3600.0;
  return {ok, fmt("checkpoints, cells.csv, manifests and train logs %s across two runs; pipeline wall time %.1f / %.1f min "
                  "(<= 120)%s",
                  diffs.empty() ? "bit-identical" : "DIFFER", a.seconds / 60, b.seconds / 60,
                  diffs.empty() ? "" : (":" + diffs).c_str())};
}

}  // namespace

int main(int argc, char** argv) {
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  fs::path workdir = "acceptance_work";
  std::string only;
  for (int i = 1; i < argc; ++i) {
    if (!std::strcmp(argv[i], "--workdir") && i + 1 < argc) workdir = argv[++i];
    else if (!std::strcmp(argv[i], "--only") && i + 1 < argc) only = argv[++i];
    else {
      std::cerr << "usage: acceptance [--workdir DIR] [--only SUBSTRING]\n";
      return 2;
    }
  }
  workdir = fs::absolute(workdir);

  int failures = 0, ran = 0;
  const auto report = [&](const std::string& name, const std::function<Result()>& fn) {
    if (!only.empty() && name.find(only) == std::string::npos) return;
    Result r;
    try {
      r = fn();
    } catch (const std::exception& e) {
      r = {false, std::string("exception: ") + e.what()};
    }
    ++ran;
    failures += !r.pass;
    std::printf("%s  %s: %s\n", r.pass ? "PASS" : "FAIL", name.c_str(), r.detail.c_str());
    std::fflush(stdout);
  };

  report("gradient suite", gradient_suite);
  report("oracle equivalence", oracle_equivalence);
  report("scoring exactness", scoring_exactness);
  report("MPC contract", mpc_contract);

  const bool need_pipeline = only.empty() || std::string("attention quality distractor robustness AVIL vs baseline zero-shot "
                                                         "determinism").find(only) != std::string::npos;
  if (need_pipeline) {
    std::printf("      running the full pipeline twice under %s\n", workdir.c_str());
    std::fflush(stdout);
    const PipelineRun first = run_pipeline(workdir / "run1");
    const PipelineRun second = run_pipeline(workdir / "run2");
    rollout::ExperimentResult result;
    rollout::Summary summary;
    if (first.ok) {
      result = rollout::parse_cells_csv(read_file(first.dir / "eval" / "cells.csv"));
      summary = rollout::summarize(result);
    }
    report("attention quality", [&] { return attention_quality(first); });
    report("distractor robustness", [&] { return distractor_robustness(first, summary); });
    report("AVIL vs baseline", [&] { return avil_vs_baseline(first, summary, result); });
    report("zero-shot generalization", [&] { return zero_shot(first, result); });
    report("determinism", [&] { return determinism(first, second); });
  }

  std::printf("%d/%d acceptance criteria passed\n", ran - failures, ran);
  return failures == 0 ? 0 : 1;
}
