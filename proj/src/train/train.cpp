#include "avil/train/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numeric>
#include <random>

#include "avil/numerics/optim.hpp"
#include "avil/util/seed.hpp"

namespace avil::train {

using nlohmann::json;
using nn::Parameter;
using nn::Tensor;
using nn::Var;

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be at least 1");
  if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be at least 1");
  if (!(lr > 0.0)) throw std::invalid_argument("TrainConfig: lr must be positive");
  if (!(holdout_fraction > 0.0 && holdout_fraction < 0.5)) {
    throw std::invalid_argument("TrainConfig: holdout_fraction must lie in (0, 0.5)");
  }
  if (mask_stride < 1) throw std::invalid_argument("TrainConfig: mask_stride must be at least 1");
}

HoldoutSplit split_holdout(std::span<const std::string> ids, std::uint64_t seed, double fraction) {
  const int n = static_cast<int>(ids.size());
  std::vector<std::pair<std::uint64_t, int>> keyed;
  for (int i = 0; i < n; ++i) keyed.emplace_back(util::derive_seed(seed, util::fnv1a(ids[i])), i);
  // Ties are broken by id so the result never depends on listing order.
  std::sort(keyed.begin(), keyed.end(), [&](const auto& a, const auto& b) {
    return a.first != b.first ? a.first < b.first : ids[a.second] < ids[b.second];
  });
  int n_hold = static_cast<int>(std::lround(fraction * n));
  if (n >= 2) n_hold = std::clamp(n_hold, 1, n - 1);
  else n_hold = 0;
  HoldoutSplit split;
  for (int r = 0; r < n; ++r) (r < n_hold ? split.holdout : split.train).push_back(keyed[r].second);
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.holdout.begin(), split.holdout.end());
  return split;
}

namespace {

using Clock = std::chrono::steady_clock;

struct Frame {
  int episode;
  int t;
};

std::vector<Frame> frames_of(const demos::Dataset& d, std::span<const int> episodes, int stride, int offset) {
  std::vector<Frame> out;
  for (int e : episodes) {
    const int length = static_cast<int>(d.episodes[e].frames.size());
    for (int t = 0; t < length; ++t) {
      if ((t + offset) % stride == 0) out.push_back({e, t});
    }
  }
  return out;
}

std::vector<demos::Sample> samples_of(const demos::Dataset& d, std::span<const int> episodes) {
  std::vector<char> keep(d.episodes.size(), 0);
  for (int e : episodes) keep[e] = 1;
  std::vector<demos::Sample> out;
  for (const auto& s : d.samples) {
    if (keep[s.episode]) out.push_back(s);
  }
  return out;
}

template <typename Item>
void shuffle_epoch(std::vector<Item>& items, std::uint64_t seed, std::uint64_t phase, int epoch) {
  std::mt19937_64 rng(util::derive_seed(util::derive_seed(seed, phase), static_cast<std::uint64_t>(epoch)));
  std::shuffle(items.begin(), items.end(), rng);
}

void add_into(std::vector<Tensor>& acc, const nn::Tape32& tape, std::span<const Var> vars) {
  for (std::size_t i = 0; i < vars.size(); ++i) {
    if (!tape.has_grad(vars[i])) continue;
    const auto g = tape.grad(vars[i]).data();
    auto a = acc[i].data();
    for (std::size_t j = 0; j < a.size(); ++j) a[j] += g[j];
  }
}

std::vector<Tensor> zero_grads(std::span<const Parameter> params) {
  std::vector<Tensor> out;
  for (const auto& p : params) out.emplace_back(p.value.shape());
  return out;
}

void scale(std::vector<Tensor>& grads, float factor) {
  for (auto& g : grads) {
    for (auto& v : g.data()) v *= factor;
  }
}

[[noreturn]] void abort_training(const std::string& phase, int epoch, int batch, const std::string& what) {
  throw TrainingError(phase + " training aborted at epoch " + std::to_string(epoch) + ", batch " +
                      std::to_string(batch) + ": " + what);
}

double attention_bce(const Tensor& image, const Tensor& mask, std::span<const Parameter> theta1,
                     const net::NetConfig& config) {
  nn::Tape32 tape;
  auto vars = net::bind(tape, theta1, false);
  Var map = net::attention_forward(tape, tape.leaf(image), vars, config);
  return tape.value(nn::bce_loss(tape, map, mask))[0];
}

void finish_log(TrainLog& log, Clock::time_point start) {
  log.wall_seconds = std::chrono::duration<double>(Clock::now() - start).count();
}

Tensor normalized_chunk(const demos::Dataset& d, const demos::Sample& s, const net::NetConfig& config) {
  const auto chunk = d.chunk(s);
  Tensor out({config.m * net::kJoints});
  for (int i = 0; i < config.m; ++i) {
    for (int j = 0; j < net::kJoints; ++j) {
      out[i * net::kJoints + j] = static_cast<float>(net::normalize_joint(j, chunk[i][j], config));
    }
  }
  return out;
}

// Precomputed per-sample inputs for phase 2 (theta1 is frozen, so the
// centroid of every frame is fixed for the whole run).
struct PolicyItem {
  net::Centroid centroid;
  Tensor history;
  Tensor target;
};

std::vector<PolicyItem> policy_items(const demos::Dataset& d, std::span<const demos::Sample> samples,
                                     const net::PolicyParams& params) {
  std::vector<PolicyItem> items;
  items.reserve(samples.size());
  for (const auto& s : samples) {
    const auto history = d.history(s);
    items.push_back({net::extract_centroid(net::attention_map(d.frame(s), params), params.config.tau),
                     net::encode_history<float>(history, params.config), normalized_chunk(d, s, params.config)});
  }
  return items;
}

double item_mse(const PolicyItem& item, std::span<const Parameter> trainable, const net::NetConfig& config) {
  nn::Tape32 tape;
  auto vars = net::bind(tape, trainable, false);
  const std::span<const Var> all(vars);
  auto head = net::policy_head(tape, item.centroid, item.history, all.subspan(0, 2), all.subspan(2, 2),
                               all.subspan(4, 8), config);
  return tape.value(net::bc_objective(tape, head.action, item.target))[0];
}

}  // namespace

double mask_iou(const Tensor& map, const Tensor& mask, double threshold) {
  if (map.shape() != mask.shape()) throw nn::DimensionError("mask_iou: shape mismatch");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < map.size(); ++i) {
    const bool a = map[i] >= threshold;
    const bool b = mask[i] >= 0.5f;
    inter += a && b;
    uni += a || b;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

double mean_attention_iou(const demos::Dataset& d, std::span<const int> episodes, const net::PolicyParams& params) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& f : frames_of(d, episodes, 1, 0)) {
    sum += mask_iou(net::attention_map(d.episodes[f.episode].frames[f.t], params), d.episodes[f.episode].masks[f.t]);
    ++n;
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

double mean_chunk_mse(const demos::Dataset& d, std::span<const int> episodes, const net::PolicyParams& params) {
  const auto samples = samples_of(d, episodes);
  if (samples.empty()) return 0.0;
  std::vector<Parameter> trainable;
  for (const auto* g : {&params.theta2, &params.theta3, &params.theta4}) trainable.insert(trainable.end(), g->begin(), g->end());
  double sum = 0.0;
  for (const auto& item : policy_items(d, samples, params)) sum += item_mse(item, trainable, params.config);
  return sum / static_cast<double>(samples.size());
}

AttentionOutcome train_attention(const demos::Dataset& d, const net::NetConfig& net_config, const TrainConfig& cfg,
                                 const EpochCallback& on_epoch) {
  cfg.validate();
  const auto start = Clock::now();
  const HoldoutSplit split = split_holdout(d.episode_ids, cfg.seed, cfg.holdout_fraction);
  AttentionOutcome out{net::init_params(net_config, util::derive_seed(cfg.seed, 0)), {}};
  auto& theta1 = out.params.theta1;
  nn::AdamState adam = nn::AdamState::zeros_like(theta1);
  const nn::LrSchedule schedule{cfg.lr, cfg.epochs, 0.0};

  const auto holdout_frames = frames_of(d, split.holdout, cfg.mask_stride, 0);
  out.log.phase = "attention";
  out.log.metric_name = "holdout_iou";
  out.log.train_items = static_cast<int>(frames_of(d, split.train, 1, 0).size());
  out.log.holdout_items = static_cast<int>(frames_of(d, split.holdout, 1, 0).size());
  if (out.log.train_items == 0) throw std::invalid_argument("train_attention: no training frames");

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = nn::cosine_lr(epoch, schedule);
    auto frames = frames_of(d, split.train, cfg.mask_stride, epoch % cfg.mask_stride);
    shuffle_epoch(frames, cfg.seed, 1, epoch);
    double loss_sum = 0.0;
    int batch_index = 0;
    for (std::size_t b = 0; b < frames.size(); b += cfg.batch_size, ++batch_index) {
      const std::size_t end = std::min(frames.size(), b + cfg.batch_size);
      auto grads = zero_grads(theta1);
      double batch_loss = 0.0;
      try {
        for (std::size_t i = b; i < end; ++i) {
          const auto& ep = d.episodes[frames[i].episode];
          nn::Tape32 tape;
          auto vars = net::bind(tape, std::span<const Parameter>(theta1), true);
          Var map = net::attention_forward(tape, tape.leaf(ep.frames[frames[i].t]), vars, net_config);
          Var loss = nn::bce_loss(tape, map, ep.masks[frames[i].t]);
          tape.backward(loss);
          batch_loss += tape.value(loss)[0];
          add_into(grads, tape, vars);
        }
      } catch (const nn::NumericError& e) {
        abort_training("attention", epoch, batch_index, e.what());
      }
      if (!std::isfinite(batch_loss)) abort_training("attention", epoch, batch_index, "non-finite loss");
      scale(grads, 1.0f / static_cast<float>(end - b));
      nn::adam_step(theta1, grads, adam, lr);
      loss_sum += batch_loss;
    }
    EpochLog entry{epoch, loss_sum / static_cast<double>(frames.size()), std::nullopt, lr};
    if (!holdout_frames.empty()) {
      double h = 0.0;
      for (const auto& f : holdout_frames) {
        h += attention_bce(d.episodes[f.episode].frames[f.t], d.episodes[f.episode].masks[f.t], theta1, net_config);
      }
      entry.holdout_loss = h / static_cast<double>(holdout_frames.size());
    }
    out.log.epochs.push_back(entry);
    if (on_epoch) on_epoch(entry);
  }
  if (!split.holdout.empty()) out.log.final_metric = mean_attention_iou(d, split.holdout, out.params);
  finish_log(out.log, start);
  return out;
}

PolicyOutcome train_policy(const demos::Dataset& d, net::PolicyParams params, const TrainConfig& cfg,
                           const EpochCallback& on_epoch) {
  cfg.validate();
  if (params.config.k != d.k || params.config.m != d.m) {
    throw std::invalid_argument("train_policy: dataset k/m do not match the network configuration");
  }
  const auto start = Clock::now();
  params.frozen1 = true;
  for (auto& p : params.theta1) p.frozen = true;
  const HoldoutSplit split = split_holdout(d.episode_ids, cfg.seed, cfg.holdout_fraction);

  std::vector<Parameter> trainable;
  for (auto* g : {&params.theta2, &params.theta3, &params.theta4}) trainable.insert(trainable.end(), g->begin(), g->end());
  nn::AdamState adam = nn::AdamState::zeros_like(trainable);
  const nn::LrSchedule schedule{cfg.lr, cfg.epochs, 0.0};

  std::vector<PolicyItem> train_items = policy_items(d, samples_of(d, split.train), params);
  const std::vector<PolicyItem> holdout_items = policy_items(d, samples_of(d, split.holdout), params);
  if (train_items.empty()) throw std::invalid_argument("train_policy: no training samples");

  PolicyOutcome out;
  out.log.phase = "policy";
  out.log.metric_name = "holdout_mse";
  out.log.train_items = static_cast<int>(train_items.size());
  out.log.holdout_items = static_cast<int>(holdout_items.size());

  std::vector<int> order(train_items.size());
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = nn::cosine_lr(epoch, schedule);
    std::iota(order.begin(), order.end(), 0);
    shuffle_epoch(order, cfg.seed, 2, epoch);
    double loss_sum = 0.0;
    int batch_index = 0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size, ++batch_index) {
      const std::size_t end = std::min(order.size(), b + cfg.batch_size);
      auto grads = zero_grads(trainable);
      double batch_loss = 0.0;
      try {
        for (std::size_t i = b; i < end; ++i) {
          const PolicyItem& item = train_items[order[i]];
          nn::Tape32 tape;
          auto vars = net::bind(tape, std::span<const Parameter>(trainable), true);
          const std::span<const Var> all(vars);
          auto head = net::policy_head(tape, item.centroid, item.history, all.subspan(0, 2), all.subspan(2, 2),
                                       all.subspan(4, 8), params.config);
          Var loss = net::bc_objective(tape, head.action, item.target);
          tape.backward(loss);
          batch_loss += tape.value(loss)[0];
          add_into(grads, tape, vars);
        }
      } catch (const nn::NumericError& e) {
        abort_training("policy", epoch, batch_index, e.what());
      }
      if (!std::isfinite(batch_loss)) abort_training("policy", epoch, batch_index, "non-finite loss");
      scale(grads, 1.0f / static_cast<float>(end - b));
      nn::adam_step(trainable, grads, adam, lr);
      loss_sum += batch_loss;
    }
    EpochLog entry{epoch, loss_sum / static_cast<double>(order.size()), std::nullopt, lr};
    if (!holdout_items.empty()) {
      double h = 0.0;
      for (const auto& item : holdout_items) h += item_mse(item, trainable, params.config);
      entry.holdout_loss = h / static_cast<double>(holdout_items.size());
    }
    out.log.epochs.push_back(entry);
    if (on_epoch) on_epoch(entry);
  }

  std::size_t offset = 0;
  for (auto* g : {&params.theta2, &params.theta3, &params.theta4}) {
    for (auto& p : *g) p = trainable[offset++];
  }
  out.log.final_metric = out.log.epochs.back().holdout_loss;
  out.params = std::move(params);
  finish_log(out.log, start);
  return out;
}

namespace {

json epoch_json(const EpochLog& e) {
  json j = {{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"lr", e.lr}};
  j["holdout_loss"] = e.holdout_loss ? json(*e.holdout_loss) : json(nullptr);
  return j;
}

}  // namespace

std::string train_log_jsonl(const TrainLog& log) {
  std::string out;
  for (const auto& e : log.epochs) out += epoch_json(e).dump() + "\n";
  return out;
}

std::string train_summary_json(const TrainLog& log) {
  json j = {{"phase", log.phase},
            {"epochs", log.epochs.size()},
            {"train_items", log.train_items},
            {"holdout_items", log.holdout_items},
            {"wall_seconds", log.wall_seconds}};
  j[log.metric_name] = log.final_metric ? json(*log.final_metric) : json(nullptr);
  if (!log.epochs.empty()) {
    j["first_train_loss"] = log.epochs.front().train_loss;
    j["final_train_loss"] = log.epochs.back().train_loss;
  }
  return j.dump(2) + "\n";
}

void write_train_log(const TrainLog& log, const fs::path& jsonl_path, const fs::path& summary_path) {
  for (const auto& [path, text] : {std::pair{jsonl_path, train_log_jsonl(log)}, std::pair{summary_path, train_summary_json(log)}}) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
  }
}

}  // namespace avil::train
