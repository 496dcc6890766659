#include "avil/train/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

namespace avil::train {

using nlohmann::json;
namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

json net_config_json(const net::NetConfig& c) {
  return {{"k", c.k},
          {"m", c.m},
          {"height", c.height},
          {"width", c.width},
          {"widths", c.widths},
          {"fusion_kernel", c.fusion_kernel},
          {"tau", c.tau},
          {"embed", c.embed},
          {"hidden", c.hidden},
          {"joint_lo", c.joint_lo},
          {"joint_hi", c.joint_hi},
          {"residual", c.residual}};
}

net::NetConfig net_config_from_json(const json& j) {
  net::NetConfig c;
  c.k = j.at("k").get<int>();
  c.m = j.at("m").get<int>();
  c.height = j.at("height").get<int>();
  c.width = j.at("width").get<int>();
  c.widths = j.at("widths").get<std::array<int, 4>>();
  c.fusion_kernel = j.at("fusion_kernel").get<int>();
  c.tau = j.at("tau").get<double>();
  c.embed = j.at("embed").get<int>();
  c.hidden = j.at("hidden").get<std::array<int, 3>>();
  c.joint_lo = j.at("joint_lo").get<net::JointVector>();
  c.joint_hi = j.at("joint_hi").get<net::JointVector>();
  c.residual = j.at("residual").get<bool>();
  return c;
}

namespace {

using Groups = std::array<std::vector<nn::Parameter>*, 4>;

Groups groups_of(net::PolicyParams& p) { return {&p.theta1, &p.theta2, &p.theta3, &p.theta4}; }

std::string describe_mismatch(const net::NetConfig& stored, const net::NetConfig& expected) {
  std::ostringstream out;
  out << "checkpoint network configuration does not match the runtime";
  if (stored.k != expected.k) out << " (k=" << stored.k << " stored, k=" << expected.k << " expected)";
  if (stored.m != expected.m) out << " (m=" << stored.m << " stored, m=" << expected.m << " expected)";
  if (stored.height != expected.height || stored.width != expected.width) {
    out << " (" << stored.height << "x" << stored.width << " stored, " << expected.height << "x" << expected.width
        << " expected)";
  }
  return out.str();
}

}  // namespace

void save_checkpoint(const net::PolicyParams& params, const fs::path& dir) {
  fs::create_directories(dir);
  net::PolicyParams copy = params;
  std::string bin;
  json tensors = json::array();
  int g = 1;
  for (auto* group : groups_of(copy)) {
    for (const auto& p : *group) {
      tensors.push_back({{"group", "theta" + std::to_string(g)},
                         {"name", p.name},
                         {"shape", p.value.shape()},
                         {"offset", bin.size()},
                         {"frozen", p.frozen}});
      const auto data = p.value.data();
      bin.append(reinterpret_cast<const char*>(data.data()), data.size() * sizeof(float));
    }
    ++g;
  }
  const auto crc = crc32(crc32(0L, Z_NULL, 0), reinterpret_cast<const Bytef*>(bin.data()), static_cast<uInt>(bin.size()));
  const json manifest = {{"format_version", kCheckpointFormatVersion},
                         {"config", net_config_json(params.config)},
                         {"frozen1", params.frozen1},
                         {"tensors", tensors},
                         {"data_file", "params.bin"},
                         {"data_bytes", bin.size()},
                         {"data_crc32", static_cast<std::uint32_t>(crc)}};
  {
    std::ofstream out(dir / "params.bin", std::ios::binary);
    out.write(bin.data(), static_cast<std::streamsize>(bin.size()));
    if (!out) throw CheckpointError("cannot write " + (dir / "params.bin").string());
  }
  std::ofstream out(dir / "manifest.json");
  out << manifest.dump(2) << "\n";
  if (!out) throw CheckpointError("cannot write " + (dir / "manifest.json").string());
}

net::PolicyParams load_checkpoint(const fs::path& dir, const std::optional<net::NetConfig>& expected) {
  json manifest;
  {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw CheckpointError("cannot open " + (dir / "manifest.json").string());
    try {
      manifest = json::parse(in);
    } catch (const json::exception& e) {
      throw CheckpointError(std::string("corrupt checkpoint manifest: ") + e.what());
    }
  }
  try {
    const int version = manifest.at("format_version").get<int>();
    if (version != kCheckpointFormatVersion) {
      throw CheckpointError("unsupported checkpoint format version " + std::to_string(version));
    }
    const net::NetConfig config = net_config_from_json(manifest.at("config"));
    if (expected && !(config == *expected)) throw CheckpointError(describe_mismatch(config, *expected));

    std::string bin;
    {
      std::ifstream in(dir / manifest.at("data_file").get<std::string>(), std::ios::binary);
      if (!in) throw CheckpointError("cannot open checkpoint data file");
      std::ostringstream ss;
      ss << in.rdbuf();
      bin = ss.str();
    }
    if (bin.size() != manifest.at("data_bytes").get<std::size_t>()) {
      throw CheckpointError("checkpoint data file has " + std::to_string(bin.size()) + " bytes, manifest says " +
                            std::to_string(manifest.at("data_bytes").get<std::size_t>()));
    }
    const auto crc = crc32(crc32(0L, Z_NULL, 0), reinterpret_cast<const Bytef*>(bin.data()), static_cast<uInt>(bin.size()));
    if (static_cast<std::uint32_t>(crc) != manifest.at("data_crc32").get<std::uint32_t>()) {
      throw CheckpointError("checkpoint data checksum mismatch");
    }

    // The layout must be exactly what this build would create for `config`.
    net::PolicyParams params = net::init_params(config, 0);
    params.frozen1 = manifest.at("frozen1").get<bool>();
    const auto& tensors = manifest.at("tensors");
    std::size_t index = 0;
    int g = 1;
    for (auto* group : groups_of(params)) {
      for (auto& p : *group) {
        if (index >= tensors.size()) throw CheckpointError("checkpoint is missing tensor " + p.name);
        const auto& t = tensors[index++];
        if (t.at("group").get<std::string>() != "theta" + std::to_string(g) || t.at("name").get<std::string>() != p.name ||
            t.at("shape").get<nn::Shape>() != p.value.shape()) {
          throw CheckpointError("checkpoint tensor " + t.at("name").get<std::string>() + " does not match layout of " + p.name);
        }
        const std::size_t offset = t.at("offset").get<std::size_t>();
        const std::size_t bytes = p.value.size() * sizeof(float);
        if (offset + bytes > bin.size()) throw CheckpointError("checkpoint tensor " + p.name + " runs past the data file");
        std::memcpy(p.value.data().data(), bin.data() + offset, bytes);
        p.frozen = t.at("frozen").get<bool>();
      }
      ++g;
    }
    if (index != tensors.size()) throw CheckpointError("checkpoint has unexpected extra tensors");
    return params;
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("malformed checkpoint manifest: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(std::string("invalid checkpoint configuration: ") + e.what());
  }
}

}  // namespace avil::train
