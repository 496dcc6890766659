#pragma once

#include <filesystem>
#include <nlohmann/json.hpp>
#include <optional>
#include <stdexcept>

#include "avil/net/policy.hpp"

namespace avil::train {

inline constexpr int kCheckpointFormatVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Directory with manifest.json (config, tensor table, checksum) and
/// params.bin (little-endian float32, tensors back to back).
void save_checkpoint(const net::PolicyParams& params, const std::filesystem::path& dir);

/// Throws CheckpointError on any corruption, or when `expected` is given and
/// the stored network configuration differs from it.
net::PolicyParams load_checkpoint(const std::filesystem::path& dir,
                                  const std::optional<net::NetConfig>& expected = std::nullopt);

nlohmann::json net_config_json(const net::NetConfig& config);
net::NetConfig net_config_from_json(const nlohmann::json& j);

}  // namespace avil::train
