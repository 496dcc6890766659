#pragma once

#include <filesystem>
#include <mutex>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <string_view>

#include "avil/demos/dataset.hpp"
#include "avil/sim/world.hpp"

namespace avil::service {

inline constexpr int kProtocolVersion = 1;

struct ServiceConfig {
  int height = 64;
  int width = 64;
  std::filesystem::path demo_dir = "demos";
  int k = 4;  // written to dataset.json alongside teleop episodes
  int m = 2;
  int idle_timeout_seconds = 600;
};

/// Writes finished episodes into one dataset directory. Shared by all
/// sessions; numbering and manifest updates are serialised.
class EpisodeStore {
 public:
  EpisodeStore(std::filesystem::path dir, int k, int m) : dir_(std::move(dir)), k_(k), m_(m) {}
  /// Returns the new episode directory.
  std::filesystem::path save(const demos::Episode& episode);
  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
  int k_, m_;
  std::mutex mutex_;
};

/// Protocol state for one connection: one world, an optional recording.
/// Transport-free so it can be driven directly in tests.
class SessionHandler {
 public:
  SessionHandler(const ServiceConfig& config, EpisodeStore& store);

  nlohmann::json hello() const;
  /// One request in, one reply out. Never throws on bad input.
  std::string handle(std::string_view text);
  nlohmann::json handle_request(const nlohmann::json& request);

  bool recording() const { return recording_.has_value(); }
  /// Saves an in-progress recording (used on disconnect and shutdown).
  std::optional<std::filesystem::path> flush();

  const sim::WorldState& world() const { return world_; }

 private:
  nlohmann::json reset(const nlohmann::json& request);
  nlohmann::json step(const nlohmann::json& request);
  nlohmann::json nudge(const nlohmann::json& request);
  nlohmann::json observe() const;
  nlohmann::json record_start();
  nlohmann::json record_stop(const nlohmann::json& request);
  nlohmann::json motion_reply(const char* type, bool clamped) const;
  void capture();

  const ServiceConfig& config_;
  EpisodeStore& store_;
  sim::WorldState world_;
  std::optional<demos::Episode> recording_;
};

}  // namespace avil::service
