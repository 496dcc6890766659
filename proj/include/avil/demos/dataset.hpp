#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "avil/numerics/tensor.hpp"
#include "avil/sim/world.hpp"

namespace avil::demos {

namespace fs = std::filesystem;

inline constexpr int kEpisodeFormatVersion = 1;
inline constexpr int kDatasetFormatVersion = 1;

struct EpisodeMeta {
  sim::SceneConfig scene;
  int length = 0;
  int height = 64;
  int width = 64;
  sim::TrialScore score;
  std::string source = "expert";
};

struct Episode {
  EpisodeMeta meta;
  std::vector<nn::Tensor> frames;  // 3xHxW
  std::vector<sim::Joints> joints;
  std::vector<nn::Tensor> masks;   // 1xHxW, binary
};

/// Replays `trajectory` (trajectory[0] must equal the world's current joints)
/// and captures frame, joints and bowl mask before every command.
Episode record_episode(sim::WorldState world, std::span<const sim::Joints> trajectory, int height, int width);

void save_episode(const Episode& episode, const fs::path& dir);
Episode load_episode(const fs::path& dir);

struct Sample {
  int episode = 0;
  int t = 0;
};

/// Episodes plus the (frame_t, joints_{t-k+1..t}, joints_{t+1..t+m}, mask_t)
/// index. Episodes shorter than k + m contribute nothing.
struct Dataset {
  std::vector<Episode> episodes;
  std::vector<std::string> episode_ids;
  int k = 4;
  int m = 2;
  std::vector<Sample> samples;

  std::vector<sim::Joints> history(const Sample& s) const;
  std::vector<sim::Joints> chunk(const Sample& s) const;
  const nn::Tensor& frame(const Sample& s) const { return episodes[s.episode].frames[s.t]; }
  const nn::Tensor& mask(const Sample& s) const { return episodes[s.episode].masks[s.t]; }
};

Dataset build_dataset(std::vector<Episode> episodes, std::vector<std::string> ids, int k, int m);

/// Sample count for one episode of length T.
inline int samples_per_episode(int length, int k, int m) { return std::max(0, length - k - m + 1); }

struct GenConfig {
  int episodes = 100;
  std::uint64_t seed = 1;
  int height = 64;
  int width = 64;
  int k = 4;
  int m = 2;
  sim::BowlKind bowl = sim::BowlKind::kTG;
  sim::FoodKind food = sim::FoodKind::kGranular;
  // Share of episodes recorded with the distractor set on the table, spread
  // evenly over the position cycle.
  double distractor_fraction = 0.5;
};

struct GenReport {
  int episodes = 0;
  int discarded = 0;
  int frames = 0;
};

/// Scripted-expert demonstrations cycling P1..P3, written as episode
/// directories plus a dataset.json manifest.
GenReport generate_demos(const GenConfig& config, const fs::path& out_dir);

/// Rewrites dataset.json for every episode directory listed (with fresh checksums).
void write_manifest(const fs::path& dataset_dir, std::span<const std::string> episode_dirs, int k, int m);

/// Adds one episode directory to an existing (or new) manifest.
void append_to_manifest(const fs::path& dataset_dir, const std::string& episode_dir, int k, int m);

struct ValidationReport {
  bool ok = true;
  int episodes = 0;
  int samples = 0;
  std::vector<std::string> violations;
};

ValidationReport validate_dataset(const fs::path& dataset_dir);

/// Loads every episode in the manifest and builds the sample index.
Dataset load_dataset(const fs::path& dataset_dir);

std::uint32_t file_crc32(const fs::path& path);

}  // namespace avil::demos
