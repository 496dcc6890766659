#include "avil/demos/dataset.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <sstream>
#include <stdexcept>

#include "avil/demos/expert.hpp"
#include "avil/sim/render.hpp"
#include "avil/util/seed.hpp"

namespace avil::demos {

using nlohmann::json;

namespace {

std::string frame_name(int t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%05d.ppm", t);
  return buf;
}

std::string mask_name(int t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "mask_%05d.pgm", t);
  return buf;
}

std::string hex32(std::uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%08x", v);
  return buf;
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return json::parse(in);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("short write to " + path.string());
}

json score_json(const sim::TrialScore& s) {
  return {{"value", s.value}, {"scooped", s.scooped_count}, {"spilled", s.spilled_count}};
}

sim::Joints parse_joints(const std::string& line) {
  const json j = json::parse(line);
  if (!j.is_array() || j.size() != 6) throw std::runtime_error("expected an array of 6 numbers");
  sim::Joints q{};
  for (std::size_t i = 0; i < 6; ++i) {
    if (!j[i].is_number()) throw std::runtime_error("non-numeric joint value");
    q[i] = j[i].get<double>();
  }
  return q;
}

std::vector<sim::Joints> read_joints(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<sim::Joints> out;
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      out.push_back(parse_joints(line));
    } catch (const std::exception& e) {
      throw std::runtime_error("joints.jsonl line " + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

EpisodeMeta meta_from_json(const json& j) {
  if (j.at("format_version").get<int>() != kEpisodeFormatVersion) {
    throw std::runtime_error("unsupported episode format version");
  }
  EpisodeMeta m;
  m.scene = sim::scene_from_json(j.at("scene"));
  m.length = j.at("T").get<int>();
  m.height = j.at("H").get<int>();
  m.width = j.at("W").get<int>();
  m.score.value = j.at("score").at("value").get<double>();
  m.score.scooped_count = j.at("score").at("scooped").get<int>();
  m.score.spilled_count = j.at("score").at("spilled").get<int>();
  m.source = j.value("source", "expert");
  return m;
}

}  // namespace

std::uint32_t file_crc32(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  uLong crc = crc32(0L, Z_NULL, 0);
  char buf[1 << 15];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    crc = crc32(crc, reinterpret_cast<const Bytef*>(buf), static_cast<uInt>(in.gcount()));
  }
  return static_cast<std::uint32_t>(crc);
}

Episode record_episode(sim::WorldState world, std::span<const sim::Joints> trajectory, int height, int width) {
  if (trajectory.empty()) throw std::invalid_argument("record_episode: empty trajectory");
  if (trajectory.front() != world.joints) {
    throw std::invalid_argument("record_episode: trajectory must start at the world's joints");
  }
  Episode ep;
  ep.meta.scene = world.scene;
  ep.meta.height = height;
  ep.meta.width = width;
  for (std::size_t t = 0; t < trajectory.size(); ++t) {
    if (t > 0) sim::step(world, trajectory[t]);
    const sim::Raster raster = sim::rasterize(world, height, width);
    ep.frames.push_back(raster.image);
    ep.masks.push_back(sim::bbox_mask(raster, sim::Label::kBowl));
    ep.joints.push_back(world.joints);
  }
  ep.meta.length = static_cast<int>(trajectory.size());
  ep.meta.score = sim::score_trial(world);
  return ep;
}

void save_episode(const Episode& ep, const fs::path& dir) {
  fs::create_directories(dir);
  const json meta = {{"format_version", kEpisodeFormatVersion},
                     {"scene", sim::to_json(ep.meta.scene)},
                     {"seed", ep.meta.scene.seed},
                     {"T", ep.meta.length},
                     {"H", ep.meta.height},
                     {"W", ep.meta.width},
                     {"score", score_json(ep.meta.score)},
                     {"source", ep.meta.source}};
  write_text(dir / "meta.json", meta.dump(2) + "\n");
  std::string lines;
  for (const auto& q : ep.joints) lines += json(q).dump() + "\n";
  write_text(dir / "joints.jsonl", lines);
  for (std::size_t t = 0; t < ep.frames.size(); ++t) {
    sim::write_ppm(dir / frame_name(static_cast<int>(t)), ep.frames[t]);
    sim::write_pgm(dir / mask_name(static_cast<int>(t)), ep.masks[t]);
  }
}

Episode load_episode(const fs::path& dir) {
  Episode ep;
  ep.meta = meta_from_json(read_json(dir / "meta.json"));
  ep.joints = read_joints(dir / "joints.jsonl");
  for (int t = 0; t < ep.meta.length; ++t) {
    ep.frames.push_back(sim::read_ppm(dir / frame_name(t)));
    ep.masks.push_back(sim::read_pgm(dir / mask_name(t)));
  }
  if (static_cast<int>(ep.joints.size()) != ep.meta.length) {
    throw std::runtime_error(dir.filename().string() + ": joints.jsonl has " + std::to_string(ep.joints.size()) +
                             " records, expected " + std::to_string(ep.meta.length));
  }
  return ep;
}

std::vector<sim::Joints> Dataset::history(const Sample& s) const {
  const auto& j = episodes[s.episode].joints;
  return {j.begin() + (s.t - k + 1), j.begin() + s.t + 1};
}

std::vector<sim::Joints> Dataset::chunk(const Sample& s) const {
  const auto& j = episodes[s.episode].joints;
  return {j.begin() + s.t + 1, j.begin() + s.t + 1 + m};
}

Dataset build_dataset(std::vector<Episode> episodes, std::vector<std::string> ids, int k, int m) {
  if (k < 1 || m < 1) throw std::invalid_argument("build_dataset: k and m must be at least 1");
  if (ids.empty()) {
    for (std::size_t i = 0; i < episodes.size(); ++i) ids.push_back("episode_" + std::to_string(i));
  }
  if (ids.size() != episodes.size()) throw std::invalid_argument("build_dataset: one id per episode");
  Dataset d;
  d.k = k;
  d.m = m;
  d.episodes = std::move(episodes);
  d.episode_ids = std::move(ids);
  for (std::size_t e = 0; e < d.episodes.size(); ++e) {
    const auto& ep = d.episodes[e];
    const int length = static_cast<int>(ep.joints.size());
    if (ep.frames.size() != ep.joints.size() || ep.masks.size() != ep.joints.size()) {
      throw std::invalid_argument("build_dataset: episode " + d.episode_ids[e] + " has mismatched lengths");
    }
    for (int t = k - 1; t <= length - m - 1; ++t) d.samples.push_back({static_cast<int>(e), t});
  }
  if (d.samples.empty()) throw std::invalid_argument("build_dataset: no samples (all episodes shorter than k + m)");
  return d;
}

void write_manifest(const fs::path& dataset_dir, std::span<const std::string> episode_dirs, int k, int m) {
  json episodes = json::array();
  for (const auto& name : episode_dirs) {
    const fs::path dir = dataset_dir / name;
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.is_regular_file()) files.push_back(entry.path().filename().string());
    }
    std::sort(files.begin(), files.end());
    json checksums = json::object();
    for (const auto& f : files) checksums[f] = hex32(file_crc32(dir / f));
    episodes.push_back({{"dir", name}, {"files", checksums}});
  }
  const json manifest = {{"format_version", kDatasetFormatVersion}, {"k", k}, {"m", m}, {"episodes", episodes}};
  write_text(dataset_dir / "dataset.json", manifest.dump(2) + "\n");
}

void append_to_manifest(const fs::path& dataset_dir, const std::string& episode_dir, int k, int m) {
  std::vector<std::string> dirs;
  if (fs::exists(dataset_dir / "dataset.json")) {
    const json manifest = read_json(dataset_dir / "dataset.json");
    for (const auto& e : manifest.at("episodes")) dirs.push_back(e.at("dir").get<std::string>());
  }
  if (std::find(dirs.begin(), dirs.end(), episode_dir) == dirs.end()) dirs.push_back(episode_dir);
  write_manifest(dataset_dir, dirs, k, m);
}

GenReport generate_demos(const GenConfig& cfg, const fs::path& out_dir) {
  if (!(cfg.distractor_fraction >= 0.0 && cfg.distractor_fraction <= 1.0)) {
    throw std::invalid_argument("generate_demos: distractor_fraction must be in [0, 1]");
  }
  fs::create_directories(out_dir);
  GenReport report;
  std::vector<std::string> dirs;
  std::uint64_t attempt = 0;
  while (report.episodes < cfg.episodes) {
    if (attempt > static_cast<std::uint64_t>(cfg.episodes) * 10 + 100) {
      throw std::runtime_error("generate_demos: too many expert failures");
    }
    sim::SceneConfig scene;
    scene.bowl = cfg.bowl;
    scene.food = cfg.food;
    scene.position = sim::kAllPositions[report.episodes % sim::kAllPositions.size()];
    const auto round = static_cast<double>(report.episodes / sim::kAllPositions.size());
    scene.distractors = std::floor((round + 1) * cfg.distractor_fraction) > std::floor(round * cfg.distractor_fraction);
    scene.seed = util::derive_seed(cfg.seed, 2 * attempt);
    const std::uint64_t noise_seed = util::derive_seed(cfg.seed, 2 * attempt + 1);
    ++attempt;
    const sim::WorldState world = sim::make_scene(scene);
    const ExpertResult expert = scripted_expert(world, noise_seed);
    if (!expert.ok) {
      ++report.discarded;
      continue;
    }
    const Episode ep = record_episode(world, expert.trajectory, cfg.height, cfg.width);
    char name[32];
    std::snprintf(name, sizeof name, "ep_%05d", report.episodes);
    save_episode(ep, out_dir / name);
    dirs.emplace_back(name);
    report.frames += ep.meta.length;
    ++report.episodes;
  }
  write_manifest(out_dir, dirs, cfg.k, cfg.m);
  return report;
}

ValidationReport validate_dataset(const fs::path& dataset_dir) {
  ValidationReport report;
  auto fail = [&](const std::string& msg) {
    report.ok = false;
    report.violations.push_back(msg);
  };
  json manifest;
  try {
    manifest = read_json(dataset_dir / "dataset.json");
  } catch (const std::exception& e) {
    fail(std::string("dataset.json: ") + e.what());
    return report;
  }
  int k = 0, m = 0;
  try {
    if (manifest.at("format_version").get<int>() != kDatasetFormatVersion) fail("dataset.json: unsupported format version");
    k = manifest.at("k").get<int>();
    m = manifest.at("m").get<int>();
    if (k < 1 || m < 1) fail("dataset.json: k and m must be at least 1");
  } catch (const std::exception& e) {
    fail(std::string("dataset.json: ") + e.what());
    return report;
  }
  const sim::ArmModel arm = sim::default_arm();

  for (const auto& entry : manifest.value("episodes", json::array())) {
    const std::string name = entry.value("dir", std::string("<unnamed>"));
    const fs::path dir = dataset_dir / name;
    const std::size_t before = report.violations.size();
    auto ep_fail = [&](const std::string& msg) { fail(name + ": " + msg); };
    ++report.episodes;

    const json files = entry.value("files", json::object());
    for (const auto& [file, expected] : files.items()) {
      const fs::path path = dir / file;
      if (!fs::exists(path)) {
        ep_fail(file + " missing");
        continue;
      }
      const std::string actual = hex32(file_crc32(path));
      if (actual != expected.get<std::string>()) {
        ep_fail(file + " checksum mismatch (expected " + expected.get<std::string>() + ", got " + actual + ")");
      }
    }

    EpisodeMeta meta;
    try {
      meta = meta_from_json(read_json(dir / "meta.json"));
    } catch (const std::exception& e) {
      ep_fail(std::string("meta.json: ") + e.what());
      continue;
    }
    std::vector<sim::Joints> joints;
    try {
      joints = read_joints(dir / "joints.jsonl");
    } catch (const std::exception& e) {
      ep_fail(e.what());
    }
    if (static_cast<int>(joints.size()) != meta.length) {
      ep_fail("joints.jsonl has " + std::to_string(joints.size()) + " valid records, expected " +
              std::to_string(meta.length));
    }
    for (std::size_t t = 0; t < joints.size(); ++t) {
      if (!sim::within_limits(arm, joints[t])) ep_fail("joints out of limits at step " + std::to_string(t));
    }
    for (int t = 0; t < meta.length; ++t) {
      try {
        const nn::Tensor frame = sim::read_ppm(dir / frame_name(t));
        if (frame.shape() != nn::Shape{3, meta.height, meta.width}) ep_fail(frame_name(t) + " has wrong shape");
      } catch (const std::exception& e) {
        ep_fail(e.what());
      }
      try {
        const nn::Tensor mask = sim::read_pgm(dir / mask_name(t));
        if (mask.shape() != nn::Shape{1, meta.height, meta.width}) ep_fail(mask_name(t) + " has wrong shape");
        bool binary = true, any = false;
        for (float v : mask.data()) {
          binary = binary && (v == 0.0f || v == 1.0f);
          any = any || v == 1.0f;
        }
        if (!binary) ep_fail(mask_name(t) + " is not binary");
        if (!any) ep_fail(mask_name(t) + " is empty");
      } catch (const std::exception& e) {
        ep_fail(e.what());
      }
    }
    if (report.violations.size() == before) report.samples += samples_per_episode(meta.length, k, m);
  }
  if (report.episodes == 0) fail("dataset.json lists no episodes");
  return report;
}

Dataset load_dataset(const fs::path& dataset_dir) {
  const json manifest = read_json(dataset_dir / "dataset.json");
  std::vector<Episode> episodes;
  std::vector<std::string> ids;
  for (const auto& entry : manifest.at("episodes")) {
    const std::string name = entry.at("dir").get<std::string>();
    episodes.push_back(load_episode(dataset_dir / name));
    ids.push_back(name);
  }
  return build_dataset(std::move(episodes), std::move(ids), manifest.at("k").get<int>(), manifest.at("m").get<int>());
}

}  // namespace avil::demos
