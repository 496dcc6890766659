#include <malloc.h>

#include <CLI11.hpp>
#include <boost/asio/signal_set.hpp>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "avil/demos/dataset.hpp"
#include "avil/rollout/matrix.hpp"
#include "avil/service/server.hpp"
#include "avil/sim/render.hpp"
#include "avil/train/checkpoint.hpp"
#include "avil/train/train.hpp"

using namespace avil;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::pair<int, int> parse_hw(const std::string& s) {
  int h = 0, w = 0;
  char x = 0, extra = 0;
  if (std::sscanf(s.c_str(), "%d%c%d%c", &h, &x, &w, &extra) != 3 || x != 'x' || h < 8 || w < 8) {
    throw CLI::ValidationError("--hw", "expected HxW with both at least 8, got '" + s + "'");
  }
  return {h, w};
}

// Inline JSON or a path to a JSON file.
sim::SceneConfig parse_scene(const std::string& arg) {
  std::string text = arg;
  if (arg.empty() || arg.front() != '{') {
    std::ifstream in(arg);
    if (!in) throw std::runtime_error("cannot read scene file " + arg);
    std::ostringstream ss;
    ss << in.rdbuf();
    text = ss.str();
  }
  return sim::scene_from_json(json::parse(text));
}

void print_epoch(const train::EpochLog& e) {
  std::fprintf(stderr, "epoch %4d  train %.6f", e.epoch, e.train_loss);
  if (e.holdout_loss) std::fprintf(stderr, "  holdout %.6f", *e.holdout_loss);
  std::fprintf(stderr, "  lr %.3g\n", e.lr);
}

struct TrainArgs {
  std::string dataset, out;
  train::TrainConfig cfg;
};

void add_train_options(CLI::App* cmd, TrainArgs& a) {
  cmd->add_option("--dataset", a.dataset, "dataset directory")->required();
  cmd->add_option("--out", a.out, "checkpoint directory to write")->required();
  cmd->add_option("--epochs", a.cfg.epochs, "training epochs")->capture_default_str();
  cmd->add_option("--lr", a.cfg.lr, "peak learning rate (cosine decay to 0)")->capture_default_str();
  cmd->add_option("--batch", a.cfg.batch_size, "batch size")->capture_default_str();
  cmd->add_option("--seed", a.cfg.seed, "seed for init, holdout split and shuffling")->capture_default_str();
  cmd->add_option("--holdout", a.cfg.holdout_fraction, "fraction of episodes held out")->capture_default_str();
}

void finish_training(const train::TrainLog& log, const net::PolicyParams& params, const fs::path& out) {
  train::save_checkpoint(params, out);
  train::write_train_log(log, out / "train_log.jsonl", out / "train_summary.json");
  std::cout << train::train_summary_json(log);
}

int run_rollout(const std::string& ckpt, const std::string& scene_arg, std::optional<std::uint64_t> seed,
                const std::string& method_name, const std::string& record, int max_steps) {
  sim::SceneConfig scene = parse_scene(scene_arg);
  if (seed) scene.seed = *seed;
  const rollout::Method method = rollout::parse_method(method_name);
  rollout::RolloutOptions opts;
  opts.max_steps = max_steps;
  std::optional<net::PolicyParams> params;
  if (method == rollout::Method::kAvil) {
    if (ckpt.empty()) throw CLI::ValidationError("--ckpt", "required for method avil");
    params = train::load_checkpoint(ckpt);
    opts.height = params->config.height;
    opts.width = params->config.width;
  }
  sim::WorldState world = sim::make_scene(scene);
  const sim::WorldState start = world;
  rollout::RolloutTrace trace;
  if (params) {
    rollout::AvilPolicy policy(*params);
    trace = rollout::mpc_execute(policy, world, opts);
  } else {
    trace = rollout::baseline_controller(world, {}, opts);
  }

  json out = {{"scene", sim::to_json(scene)},
              {"method", rollout::to_string(method)},
              {"score", trace.score.value},
              {"scooped", trace.score.scooped_count},
              {"spilled", trace.score.spilled_count},
              {"collision", trace.collision},
              {"steps", trace.step_count},
              {"termination", trace.termination}};
  if (!record.empty()) {
    // Replay the executed commands to capture the joint states the trace went through.
    sim::WorldState replay = start;
    std::vector<sim::Joints> states{replay.joints};
    for (const auto& s : trace.steps) {
      sim::step(replay, s.command);
      states.push_back(replay.joints);
    }
    demos::Episode ep = demos::record_episode(start, states, opts.height, opts.width);
    ep.meta.source = "rollout-" + rollout::to_string(method);
    ep.meta.score = trace.score;
    demos::save_episode(ep, record);
    out["record"] = record;
  }
  std::cout << out.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  // Training allocates and frees the same large buffers every sample; keep them out of mmap.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);

  CLI::App app{"Adaptive visual imitation learning workbench for spoon scooping"};
  app.require_subcommand(1);

  demos::GenConfig gen;
  std::string gen_out, gen_hw = "64x64";
  auto* gen_cmd = app.add_subcommand("gen-demos", "generate scripted-expert demonstrations");
  gen_cmd->add_option("--out", gen_out, "dataset directory")->required();
  gen_cmd->add_option("--episodes", gen.episodes, "episode count")->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed, "base seed")->capture_default_str();
  gen_cmd->add_option("--hw", gen_hw, "frame size HxW")->capture_default_str();
  gen_cmd->add_option("--k", gen.k, "history length recorded in the manifest")->capture_default_str();
  gen_cmd->add_option("--m", gen.m, "chunk length recorded in the manifest")->capture_default_str();
  gen_cmd->add_option("--distractor-fraction", gen.distractor_fraction, "share of episodes with distractors on the table")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();

  std::string validate_dir;
  auto* validate_cmd = app.add_subcommand("validate", "check a dataset directory");
  validate_cmd->add_option("--dataset", validate_dir, "dataset directory")->required();

  TrainArgs attn;
  attn.cfg.mask_stride = 12;
  std::string attn_hw = "64x64";
  auto* attn_cmd = app.add_subcommand("train-attention", "phase 1: attention map vs bowl mask");
  add_train_options(attn_cmd, attn);
  attn_cmd->add_option("--mask-stride", attn.cfg.mask_stride, "visit every n-th frame per epoch, rotating the offset")
      ->capture_default_str();

  TrainArgs pol;
  std::string pol_attention;
  auto* pol_cmd = app.add_subcommand("train-policy", "phase 2: behaviour cloning with the attention frozen");
  add_train_options(pol_cmd, pol);
  pol_cmd->add_option("--attention", pol_attention, "phase-1 checkpoint directory")->required();

  std::string ro_ckpt, ro_scene, ro_method = "avil", ro_record;
  std::optional<std::uint64_t> ro_seed;
  int ro_max_steps = 200;
  auto* ro_cmd = app.add_subcommand("rollout", "run one trial");
  ro_cmd->add_option("--ckpt", ro_ckpt, "policy checkpoint directory");
  ro_cmd->add_option("--scene", ro_scene, "scene JSON, inline or a file path")->required();
  ro_cmd->add_option("--seed", ro_seed, "overrides the scene seed");
  ro_cmd->add_option("--method", ro_method, "avil or baseline")->capture_default_str();
  ro_cmd->add_option("--record", ro_record, "save the trial as an episode directory");
  ro_cmd->add_option("--max-steps", ro_max_steps, "step limit")->capture_default_str();

  std::string ev_ckpt, ev_out;
  rollout::MatrixConfig ev;
  auto* ev_cmd = app.add_subcommand("eval-matrix", "both methods over the full bowl x food x position x scene matrix");
  ev_cmd->add_option("--ckpt", ev_ckpt, "policy checkpoint directory")->required();
  ev_cmd->add_option("--out", ev_out, "report directory")->required();
  ev_cmd->add_option("--trials", ev.trials, "trials per cell")->capture_default_str();
  ev_cmd->add_option("--seed", ev.seed, "base scene seed")->capture_default_str();

  service::ServiceConfig sv;
  std::string sv_addr = "127.0.0.1:8765", sv_hw = "64x64", sv_demo_dir = "demos";
  int sv_threads = 4;
  auto* sv_cmd = app.add_subcommand("serve", "simulator sessions over WebSocket (see protocol.md)");
  sv_cmd->add_option("--addr", sv_addr, "listen address host:port")->capture_default_str();
  sv_cmd->add_option("--demo-dir", sv_demo_dir, "where recorded episodes go")->capture_default_str();
  sv_cmd->add_option("--hw", sv_hw, "frame size HxW")->capture_default_str();
  sv_cmd->add_option("--threads", sv_threads, "worker threads")->capture_default_str();
  sv_cmd->add_option("--idle-timeout", sv.idle_timeout_seconds, "seconds before an idle session is closed")
      ->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen_cmd) {
      std::tie(gen.height, gen.width) = parse_hw(gen_hw);
      const auto report = demos::generate_demos(gen, gen_out);
      std::cout << json{{"episodes", report.episodes}, {"discarded", report.discarded}, {"frames", report.frames}}.dump()
                << "\n";
    } else if (*validate_cmd) {
      const auto report = demos::validate_dataset(validate_dir);
      for (const auto& v : report.violations) std::cerr << v << "\n";
      std::cout << json{{"ok", report.ok}, {"episodes", report.episodes}, {"samples", report.samples},
                        {"violations", report.violations.size()}}.dump()
                << "\n";
      return report.ok ? 0 : 1;
    } else if (*attn_cmd) {
      const auto dataset = demos::load_dataset(attn.dataset);
      net::NetConfig nc;
      nc.k = dataset.k;
      nc.m = dataset.m;
      nc.height = dataset.episodes.front().meta.height;
      nc.width = dataset.episodes.front().meta.width;
      const auto outcome = train::train_attention(dataset, nc, attn.cfg, print_epoch);
      finish_training(outcome.log, outcome.params, attn.out);
    } else if (*pol_cmd) {
      const auto dataset = demos::load_dataset(pol.dataset);
      auto params = train::load_checkpoint(pol_attention);
      const auto outcome = train::train_policy(dataset, std::move(params), pol.cfg, print_epoch);
      finish_training(outcome.log, outcome.params, pol.out);
    } else if (*ro_cmd) {
      return run_rollout(ro_ckpt, ro_scene, ro_seed, ro_method, ro_record, ro_max_steps);
    } else if (*ev_cmd) {
      const auto params = train::load_checkpoint(ev_ckpt);
      ev.rollout.height = params.config.height;
      ev.rollout.width = params.config.width;
      const auto result = rollout::run_matrix(params, ev, [](const rollout::Cell& c, std::size_t done, std::size_t total) {
        if (done % 20 == 0 || done == total) std::fprintf(stderr, "%zu/%zu cells (last %.1f)\n", done, total, c.score);
      });
      rollout::write_report(result, ev_out);
      std::cout << rollout::summary_markdown(rollout::summarize(result));
    } else if (*sv_cmd) {
      std::tie(sv.height, sv.width) = parse_hw(sv_hw);
      sv.demo_dir = sv_demo_dir;
      const auto [host, port] = service::parse_address(sv_addr);
      service::Server server(sv, host, port, sv_threads);
      boost::asio::io_context signals_ctx;
      boost::asio::signal_set signals(signals_ctx, SIGINT, SIGTERM);
      signals.async_wait([&](const boost::system::error_code&, int) { server.stop(); });
      std::thread signal_thread([&] { signals_ctx.run(); });
      std::cerr << "listening on " << host << ":" << server.port() << "\n";
      server.run();
      signals_ctx.stop();
      signal_thread.join();
    }
  } catch (const CLI::Error& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
