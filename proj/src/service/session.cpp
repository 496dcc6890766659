#include "avil/service/session.hpp"

#include <boost/beast/core/detail/base64.hpp>
#include <cmath>
#include <cstdio>

#include "avil/sim/render.hpp"

namespace avil::service {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Request-level failure; becomes an `error` reply.
struct ProtocolError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string base64(const std::string& bytes) {
  namespace b64 = boost::beast::detail::base64;
  std::string out(b64::encoded_size(bytes.size()), '\0');
  out.resize(b64::encode(out.data(), bytes.data(), bytes.size()));
  return out;
}

json joints_json(const sim::Joints& q) { return json(std::vector<double>(q.begin(), q.end())); }

json score_json(const sim::TrialScore& s) {
  return {{"value", s.value}, {"scooped", s.scooped_count}, {"spilled", s.spilled_count}};
}

double number(const json& request, const char* key) {
  if (!request.contains(key)) return 0.0;
  const json& v = request.at(key);
  if (!v.is_number()) throw ProtocolError(std::string("'") + key + "' must be a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) throw ProtocolError(std::string("'") + key + "' must be finite");
  return x;
}

}  // namespace

fs::path EpisodeStore::save(const demos::Episode& episode) {
  std::lock_guard lock(mutex_);
  fs::create_directories(dir_);
  int index = 0;
  char name[32];
  for (;; ++index) {
    std::snprintf(name, sizeof name, "ep_%05d", index);
    if (!fs::exists(dir_ / name)) break;
  }
  demos::save_episode(episode, dir_ / name);
  demos::append_to_manifest(dir_, name, k_, m_);
  return dir_ / name;
}

SessionHandler::SessionHandler(const ServiceConfig& config, EpisodeStore& store)
    : config_(config), store_(store), world_(sim::make_scene({})) {}

json SessionHandler::hello() const {
  return {{"type", "hello"},
          {"protocol_version", kProtocolVersion},
          {"height", config_.height},
          {"width", config_.width},
          {"joints", sim::kJoints},
          {"scene", sim::to_json(world_.scene)}};
}

std::string SessionHandler::handle(std::string_view text) {
  json request;
  try {
    request = json::parse(text);
  } catch (const json::parse_error& e) {
    return json{{"type", "error"}, {"id", nullptr}, {"message", std::string("malformed JSON: ") + e.what()}}.dump();
  }
  return handle_request(request).dump();
}

json SessionHandler::handle_request(const json& request) {
  json id = nullptr;
  try {
    if (!request.is_object()) throw ProtocolError("request must be a JSON object");
    id = request.value("id", json(nullptr));
    if (!request.contains("type") || !request.at("type").is_string()) throw ProtocolError("missing 'type'");
    const std::string type = request.at("type").get<std::string>();
    json reply;
    if (type == "reset") reply = reset(request);
    else if (type == "step") reply = step(request);
    else if (type == "nudge") reply = nudge(request);
    else if (type == "observe") reply = observe();
    else if (type == "record_start") reply = record_start();
    else if (type == "record_stop") reply = record_stop(request);
    else if (type == "hello") reply = hello();
    else throw ProtocolError("unknown message type '" + type + "'");
    reply["id"] = id;
    return reply;
  } catch (const ProtocolError& e) {
    return {{"type", "error"}, {"id", id}, {"message", e.what()}};
  } catch (const std::exception& e) {
    return {{"type", "error"}, {"id", id}, {"message", std::string("internal error: ") + e.what()}};
  }
}

json SessionHandler::reset(const json& request) {
  sim::SceneConfig scene;
  try {
    scene = request.contains("scene") ? sim::scene_from_json(request.at("scene")) : sim::SceneConfig{};
  } catch (const std::exception& e) {
    throw ProtocolError(std::string("bad scene: ") + e.what());
  }
  world_ = sim::make_scene(scene);
  recording_.reset();  // a recording never spans two scenes
  return {{"type", "reset"}, {"scene", sim::to_json(world_.scene)}, {"joints", joints_json(world_.joints)}};
}

json SessionHandler::motion_reply(const char* type, bool clamped) const {
  return {{"type", type},
          {"joints", joints_json(world_.joints)},
          {"clamped", clamped},
          {"collision", world_.collision_flag},
          {"step", world_.step_count},
          {"lift_complete", world_.lift_complete()},
          {"score", score_json(sim::score_trial(world_))}};
}

json SessionHandler::step(const json& request) {
  if (!request.contains("joints") || !request.at("joints").is_array() || request.at("joints").size() != sim::kJoints) {
    throw ProtocolError("'joints' must be an array of " + std::to_string(sim::kJoints) + " numbers");
  }
  sim::Joints q{};
  for (int j = 0; j < sim::kJoints; ++j) {
    const json& v = request.at("joints")[j];
    if (!v.is_number() || !std::isfinite(v.get<double>())) throw ProtocolError("'joints' must hold finite numbers");
    q[j] = v.get<double>();
  }
  const sim::StepInfo info = sim::step(world_, q);
  capture();
  return motion_reply("step", info.clamped);
}

json SessionHandler::nudge(const json& request) {
  const sim::TipPose tip = world_.tip();
  const sim::TipPose target{{tip.position.x + number(request, "dx"), tip.position.y + number(request, "dy")},
                            tip.pitch + number(request, "dpitch")};
  const sim::IkResult r = sim::ik(world_.arm, target, world_.joints);
  if (!r.ok) throw ProtocolError("ik failed for the requested nudge; pose unchanged");
  const sim::StepInfo info = sim::step(world_, r.joints);
  capture();
  return motion_reply("nudge", info.clamped);
}

json SessionHandler::observe() const {
  const nn::Tensor frame = sim::render(world_, config_.height, config_.width);
  json reply = motion_reply("observe", world_.clamped_flag);
  reply["height"] = config_.height;
  reply["width"] = config_.width;
  reply["frame"] = base64(sim::encode_ppm(frame));
  reply["recording"] = recording_.has_value();
  return reply;
}

void SessionHandler::capture() {
  if (!recording_) return;
  const sim::Raster raster = sim::rasterize(world_, config_.height, config_.width);
  recording_->frames.push_back(raster.image);
  recording_->masks.push_back(sim::bbox_mask(raster, sim::Label::kBowl));
  recording_->joints.push_back(world_.joints);
}

json SessionHandler::record_start() {
  if (recording_) throw ProtocolError("already recording");
  recording_.emplace();
  recording_->meta.scene = world_.scene;
  recording_->meta.height = config_.height;
  recording_->meta.width = config_.width;
  recording_->meta.source = "teleop";
  capture();
  return {{"type", "record_start"}, {"step", world_.step_count}};
}

std::optional<fs::path> SessionHandler::flush() {
  if (!recording_) return std::nullopt;
  demos::Episode ep = std::move(*recording_);
  recording_.reset();
  ep.meta.length = static_cast<int>(ep.joints.size());
  ep.meta.score = sim::score_trial(world_);
  return store_.save(ep);
}

json SessionHandler::record_stop(const json& request) {
  if (!recording_) throw ProtocolError("not recording");
  const json& save = request.contains("save") ? request.at("save") : json(true);
  if (!save.is_boolean()) throw ProtocolError("'save' must be a boolean");
  const int length = static_cast<int>(recording_->joints.size());
  if (!save.get<bool>()) {
    recording_.reset();
    return {{"type", "record_stop"}, {"path", nullptr}, {"length", length}};
  }
  const auto path = flush();
  return {{"type", "record_stop"}, {"path", path->string()}, {"length", length}};
}

}  // namespace avil::service
