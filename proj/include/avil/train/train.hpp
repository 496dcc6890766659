#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "avil/demos/dataset.hpp"
#include "avil/net/policy.hpp"

namespace avil::train {

namespace fs = std::filesystem;

struct TrainConfig {
  int epochs = 200;
  double lr = 1e-4;
  int batch_size = 8;
  std::uint64_t seed = 1;
  double holdout_fraction = 0.1;
  // Phase 1 only: each epoch visits the frames with (t + epoch) % stride == 0,
  // so consecutive epochs cycle through different frames of every episode.
  int mask_stride = 1;

  void validate() const;
};

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  std::optional<double> holdout_loss;  // empty when there is no holdout set
  double lr = 0.0;
};

struct TrainLog {
  std::string phase;        // "attention" or "policy"
  std::string metric_name;  // "holdout_iou" or "holdout_mse"
  std::vector<EpochLog> epochs;
  std::optional<double> final_metric;
  int train_items = 0;
  int holdout_items = 0;
  double wall_seconds = 0.0;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct HoldoutSplit {
  std::vector<int> train;    // episode indices
  std::vector<int> holdout;
};

/// Episodes ordered by a hash of (seed, episode id); the first
/// round(fraction * N) form the holdout (at least one when N >= 2).
HoldoutSplit split_holdout(std::span<const std::string> episode_ids, std::uint64_t seed, double fraction);

using EpochCallback = std::function<void(const EpochLog&)>;

struct AttentionOutcome {
  net::PolicyParams params;  // theta1 trained; theta2..4 at their initial values
  TrainLog log;
};

/// Phase 1: BCE between the attention map and the bowl mask.
AttentionOutcome train_attention(const demos::Dataset& dataset, const net::NetConfig& net_config,
                                 const TrainConfig& config, const EpochCallback& on_epoch = {});

struct PolicyOutcome {
  net::PolicyParams params;
  TrainLog log;
};

/// Phase 2: theta1 frozen, MSE behaviour cloning of the m-step chunk.
PolicyOutcome train_policy(const demos::Dataset& dataset, net::PolicyParams params, const TrainConfig& config,
                           const EpochCallback& on_epoch = {});

/// Intersection over union of {map >= threshold} and {mask >= 0.5}; 1 when both are empty.
double mask_iou(const nn::Tensor& map, const nn::Tensor& mask, double threshold = 0.5);

/// Mean IoU of the attention map over every frame of the given episodes.
double mean_attention_iou(const demos::Dataset& dataset, std::span<const int> episodes,
                          const net::PolicyParams& params);

/// Mean normalised chunk MSE over every sample of the given episodes.
double mean_chunk_mse(const demos::Dataset& dataset, std::span<const int> episodes, const net::PolicyParams& params);

/// One JSON object per epoch (no timing, so reruns compare byte-equal).
std::string train_log_jsonl(const TrainLog& log);
std::string train_summary_json(const TrainLog& log);
void write_train_log(const TrainLog& log, const fs::path& jsonl_path, const fs::path& summary_path);

}  // namespace avil::train
