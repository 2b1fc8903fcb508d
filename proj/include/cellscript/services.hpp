#pragma once

// Simulated cell devices behind an RPC envelope: perception, robot, gripper,
// digital IO, vibration table, pallet pattern and plain delay services.
// Time is a simulated clock advanced by each call's modeled latency.

#include <arpa/inet.h>
#include <netdb.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cstring>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "cellscript/cell.hpp"
#include "cellscript/motion.hpp"
#include "cellscript/pallet.hpp"
#include "cellscript/rng.hpp"

namespace cellscript {

// ---- envelope ---------------------------------------------------------------------

struct RpcEnvelope {
  double ts_ms = 0;
  std::string msg_id;
  std::string srv;
  Json payload = Json::object();
};

inline Json to_json(const RpcEnvelope& e) {
  return Json{{"meta", {{"ts_ms", e.ts_ms}, {"msg_id", e.msg_id}, {"srv", e.srv}}}, {"payload", e.payload}};
}

inline RpcEnvelope envelope_from_json(const Json& j) {
  try {
    const Json& m = j.at("meta");
    return {m.at("ts_ms").get<double>(), m.at("msg_id").get<std::string>(), m.at("srv").get<std::string>(),
            j.value("payload", Json::object())};
  } catch (const Json::exception& e) {
    throw Error("BAD_ENVELOPE", e.what());
  }
}

/// TCP framing: u32 big-endian byte length followed by UTF-8 JSON.
inline std::string encode_frame(const std::string& body) {
  const auto n = static_cast<std::uint32_t>(body.size());
  std::string out(4, '\0');
  out[0] = static_cast<char>((n >> 24) & 0xff);
  out[1] = static_cast<char>((n >> 16) & 0xff);
  out[2] = static_cast<char>((n >> 8) & 0xff);
  out[3] = static_cast<char>(n & 0xff);
  return out + body;
}

/// Pops one complete frame off the front of `buffer`, if present.
inline std::optional<std::string> decode_frame(std::string& buffer) {
  if (buffer.size() < 4) return std::nullopt;
  const auto* b = reinterpret_cast<const unsigned char*>(buffer.data());
  const std::uint32_t n = (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) | b[3];
  if (buffer.size() < 4 + static_cast<std::size_t>(n)) return std::nullopt;
  std::string body = buffer.substr(4, n);
  buffer.erase(0, 4 + static_cast<std::size_t>(n));
  return body;
}

// ---- ground truth ----------------------------------------------------------------

/// Ground-truth cell state owned by the services.
struct World {
  CellModel cell;
  JointConfig q{};
  ObjectSet free;      // world poses
  ObjectSet attached;  // flange-frame poses
  ObjectSet placed;    // world poses, released by the robot
  ObjectSet lost;      // dropped outside the container
  ObjectSet shipped;   // carried away by the conveyor
  std::map<std::string, Pose> pick_origin;
  std::map<int, int> digital_out;
  std::vector<std::string> drop_log;  // ids dropped by injected faults, in order

  Pose flange() const { return fk_unchecked(cell.robot, q); }

  bool in_container(const Pose& p) const {
    return cell.container.empty() || point_in_convex(cell.container, {p.x, p.y});
  }
};

inline Json to_json(const World& w) {
  Json dout = Json::object();
  for (const auto& [k, v] : w.digital_out) dout[std::to_string(k)] = v;
  return Json{{"q", {w.q[0], w.q[1], w.q[2]}}, {"free", objects_to_json(w.free)},
              {"attached", objects_to_json(w.attached)}, {"placed", objects_to_json(w.placed)},
              {"lost", objects_to_json(w.lost)}, {"shipped", objects_to_json(w.shipped)}, {"digital_out", dout}};
}

namespace detail {

inline ObjectSet::iterator find_object(ObjectSet& set, const std::string& id) {
  return std::find_if(set.begin(), set.end(), [&](const WorldObject& o) { return o.id == id; });
}

inline Polygon world_polygon(const WorldObject& o) { return transform(o.polygon, o.pose); }

}  // namespace detail

// ---- pure device models -------------------------------------------------------------

struct PerceptionConfig {
  double sigma = 0.0;        // m, position noise
  double sigma_theta = 0.0;  // rad
};

struct PerceptionResponse {
  ObjectSet objects;
  std::vector<std::string> occluded;
};

/// Free objects in the camera region (the container when set), with Gaussian pose noise.
/// An object is flagged occluded when another free object sits above it with overlapping x extent.
inline PerceptionResponse perception_capture(const World& world, const PerceptionConfig& cfg, std::mt19937_64& rng) {
  PerceptionResponse r;
  std::vector<WorldObject> seen;
  for (const auto& o : world.free) {
    if (world.in_container(o.pose)) seen.push_back(o);
  }
  std::sort(seen.begin(), seen.end(), [](const WorldObject& a, const WorldObject& b) { return a.id < b.id; });
  for (const auto& o : seen) {
    const Aabb b = bounds(detail::world_polygon(o));
    for (const auto& other : seen) {
      if (other.id == o.id) continue;
      const Aabb ob = bounds(detail::world_polygon(other));
      if (ob.lo.x < b.hi.x && ob.hi.x > b.lo.x && ob.lo.y >= b.hi.y - 1e-9) {
        r.occluded.push_back(o.id);
        break;
      }
    }
  }
  std::normal_distribution<double> n01(0.0, 1.0);
  for (auto o : seen) {
    if (cfg.sigma > 0) {
      o.pose.x += cfg.sigma * n01(rng);
      o.pose.y += cfg.sigma * n01(rng);
    }
    if (cfg.sigma_theta > 0) o.pose.theta = normalize_angle(o.pose.theta + cfg.sigma_theta * n01(rng));
    r.objects.push_back(std::move(o));
  }
  return r;
}

struct VibrationConfig {
  double dxy = 0.03;
  double dtheta = 0.3;
  int attempts = 100;
};

/// Random disturbance of the free objects inside the container. Each object is resampled
/// until it stays inside the container and clear of every other object and obstacle.
inline void vibration_disturb(World& world, const VibrationConfig& cfg, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uxy(-cfg.dxy, cfg.dxy), uth(-cfg.dtheta, cfg.dtheta);
  std::vector<std::size_t> movable;
  for (std::size_t i = 0; i < world.free.size(); ++i) {
    if (!world.cell.container.empty() && world.in_container(world.free[i].pose)) movable.push_back(i);
  }
  std::sort(movable.begin(), movable.end(), [&](std::size_t a, std::size_t b) { return world.free[a].id < world.free[b].id; });
  for (std::size_t i : movable) {
    WorldObject& o = world.free[i];
    bool placed = false;
    for (int attempt = 0; attempt < cfg.attempts && !placed; ++attempt) {
      const Pose cand{o.pose.x + uxy(rng), o.pose.y + uxy(rng), normalize_angle(o.pose.theta + uth(rng))};
      const Polygon poly = transform(o.polygon, cand);
      bool ok = std::all_of(poly.begin(), poly.end(), [&](const Vec2& v) { return point_in_convex(world.cell.container, v); });
      for (std::size_t j = 0; ok && j < world.free.size(); ++j) {
        if (j != i && sat_overlap(poly, detail::world_polygon(world.free[j]))) ok = false;
      }
      for (std::size_t j = 0; ok && j < world.cell.obstacles.size(); ++j) {
        if (sat_overlap(poly, world.cell.obstacles[j].polygon)) ok = false;
      }
      if (ok) {
        o.pose = cand;
        placed = true;
      }
    }
    if (!placed) throw Error("PERTURB_FAILED", "could not perturb '" + o.id + "' inside the container");
  }
}

// ---- services ------------------------------------------------------------------------

struct LatencyModel {
  double fixed_ms = 0.0;
  double jitter_ms = 0.0;       // uniform extra in [0, jitter_ms)
  double duration_scale = 1.0;  // robot only: trajectory seconds → ms multiplier / 1000
  double timeout_ms = 30000.0;
};

struct CallInfo {
  std::uint64_t dyn_id = 0;
  std::uint64_t call_index = 0;  // per-service ordinal
  std::uint64_t seed = 0;        // stream seed for this call
  std::set<std::uint64_t>* falling = nullptr;
};

class Service {
 public:
  virtual ~Service() = default;
  virtual std::string kind() const = 0;
  /// Handles one request; returns the response payload and any latency beyond the model.
  virtual Json handle(const Json& payload, World& world, const CallInfo& info, double& extra_ms) = 0;
  LatencyModel latency;
};

class PerceptionService : public Service {
 public:
  explicit PerceptionService(PerceptionConfig cfg = {}) : cfg_(cfg) {}
  std::string kind() const override { return "perception"; }
  Json handle(const Json& payload, World& world, const CallInfo& info, double&) override {
    const std::string op = payload.value("op", "capture");
    if (op != "capture") throw Error("BAD_REQUEST", "perception supports op 'capture'");
    std::mt19937_64 rng(info.seed);
    const auto r = perception_capture(world, cfg_, rng);
    return Json{{"objects", objects_to_json(r.objects)}, {"occluded", r.occluded}};
  }

 private:
  PerceptionConfig cfg_;
};

class RobotService : public Service {
 public:
  std::string kind() const override { return "robot"; }
  Json handle(const Json& payload, World& world, const CallInfo& info, double& extra_ms) override {
    const std::string op = payload.value("op", "execute");
    if (op == "execute") return execute(payload, world, info, extra_ms);
    if (op == "detach") return detach(payload, world);
    throw Error("BAD_REQUEST", "robot supports ops 'execute' and 'detach'");
  }

 private:
  Json execute(const Json& payload, World& world, const CallInfo& info, double& extra_ms) {
    if (!payload.contains("trajectory") || !payload["trajectory"].contains("certificate")) {
      throw Error("REJECTED_UNCERTIFIED", "trajectory carries no safety certificate");
    }
    const Trajectory t = trajectory_from_json(payload["trajectory"]);
    if (!t.certificate.collision_free) throw Error("REJECTED_UNCERTIFIED", "certificate does not assert collision-free");
    const bool carrying = !world.attached.empty();
    world.q = t.back();
    extra_ms = latency.duration_scale * t.duration() * 1000.0;
    const Pose flange = world.flange();
    for (const auto& id : payload.value("attach", std::vector<std::string>{})) {
      auto it = detail::find_object(world.free, id);
      if (it == world.free.end()) continue;  // nothing there: the gripper closes on air
      WorldObject o = *it;
      world.free.erase(it);
      world.pick_origin[o.id] = o.pose;
      o.pose = flange.inverse() * o.pose;
      world.attached.push_back(std::move(o));
    }
    if (carrying && info.falling && info.falling->count(info.dyn_id) && !world.attached.empty()) {
      WorldObject o = world.attached.front();
      world.attached.erase(world.attached.begin());
      const Pose origin = world.pick_origin.count(o.id) ? world.pick_origin[o.id] : flange * o.pose;
      world.drop_log.push_back(o.id);
      if (world.in_container(origin)) {
        o.pose = origin;
        world.free.push_back(std::move(o));
      } else {
        o.pose = flange * o.pose;
        world.lost.push_back(std::move(o));
      }
    }
    return Json{{"ok", true}, {"q", {world.q[0], world.q[1], world.q[2]}}};
  }

  static Json detach(const Json& payload, World& world) {
    const Pose flange = world.flange();
    std::vector<std::string> released;
    for (const auto& id : payload.value("ids", std::vector<std::string>{})) {
      auto it = detail::find_object(world.attached, id);
      if (it == world.attached.end()) continue;
      WorldObject o = *it;
      world.attached.erase(it);
      o.pose = flange * o.pose;
      world.placed.push_back(std::move(o));
      released.push_back(id);
    }
    return Json{{"ok", true}, {"released", released}};
  }
};

/// Reports whether the expected objects are held.
class GripperService : public Service {
 public:
  std::string kind() const override { return "gripper"; }
  Json handle(const Json& payload, World& world, const CallInfo&, double&) override {
    const std::string op = payload.value("op", "check");
    if (op == "check") {
      bool ok = true;
      for (const auto& id : payload.value("expected", std::vector<std::string>{})) {
        ok = ok && detail::find_object(world.attached, id) != world.attached.end();
      }
      return Json{{"ok", ok}};
    }
    if (op == "actuate") return Json{{"ok", true}};
    throw Error("BAD_REQUEST", "gripper supports ops 'check' and 'actuate'");
  }
};

class IoService : public Service {
 public:
  std::string kind() const override { return "io"; }
  Json handle(const Json& payload, World& world, const CallInfo&, double&) override {
    if (payload.value("op", "") != "digital_out") throw Error("BAD_REQUEST", "io supports op 'digital_out'");
    world.digital_out[payload.value("port", 0)] = payload.value("value", 0);
    return Json{{"ok", true}};
  }
};

/// Carries every released object out of the cell.
class ConveyorService : public Service {
 public:
  std::string kind() const override { return "conveyor"; }
  Json handle(const Json& payload, World& world, const CallInfo&, double&) override {
    if (payload.value("op", "advance") != "advance") throw Error("BAD_REQUEST", "conveyor supports op 'advance'");
    std::vector<std::string> ids;
    for (auto& o : world.placed) {
      ids.push_back(o.id);
      world.shipped.push_back(std::move(o));
    }
    world.placed.clear();
    return Json{{"ok", true}, {"shipped", ids}};
  }
};

class VibrationService : public Service {
 public:
  explicit VibrationService(VibrationConfig cfg = {}) : cfg_(cfg) {}
  std::string kind() const override { return "vibration"; }
  Json handle(const Json&, World& world, const CallInfo& info, double&) override {
    std::mt19937_64 rng(info.seed);
    vibration_disturb(world, cfg_, rng);
    return Json{{"ok", true}};
  }

 private:
  VibrationConfig cfg_;
};

class PalletService : public Service {
 public:
  std::string kind() const override { return "pallet"; }
  Json handle(const Json& payload, World&, const CallInfo&, double&) override {
    const PalletState s = pallet_from_json(payload.at("state"));
    std::vector<Footprint> fs;
    for (const auto& f : payload.value("footprints", Json::array())) fs.push_back({f.at(0).get<double>(), f.at(1).get<double>()});
    Json slots = Json::array();
    for (const auto& sl : pallet_next_slots(s, fs)) slots.push_back(Json{{"footprint", sl.footprint}, {"pose", pose_to_json(sl.pose)}});
    return Json{{"slots", slots}};
  }
};

/// Acknowledges every request after its latency.
class DelayService : public Service {
 public:
  std::string kind() const override { return "delay"; }
  Json handle(const Json&, World&, const CallInfo&, double&) override { return Json{{"ok", true}}; }
};

/// Forwards envelopes to a device over TCP using the framed transport.
class RemoteService : public Service {
 public:
  RemoteService(std::string host, int port) : host_(std::move(host)), port_(port) {}
  std::string kind() const override { return "remote"; }
  Json handle(const Json& payload, World&, const CallInfo& info, double&) override {
    const Json env = Json{{"meta", {{"ts_ms", 0}, {"msg_id", "r" + std::to_string(info.call_index)}, {"srv", "remote"}}},
                          {"payload", payload}};
    return envelope_from_json(Json::parse(roundtrip(env.dump()))).payload;
  }

 private:
  std::string roundtrip(const std::string& body) const {
    addrinfo hints{}, *res = nullptr;
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    if (getaddrinfo(host_.c_str(), std::to_string(port_).c_str(), &hints, &res) != 0) {
      throw Error("SERVICE_UNREACHABLE", "cannot resolve " + host_);
    }
    const int fd = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
    if (fd < 0 || ::connect(fd, res->ai_addr, res->ai_addrlen) != 0) {
      freeaddrinfo(res);
      if (fd >= 0) ::close(fd);
      throw Error("SERVICE_UNREACHABLE", "cannot connect to " + host_ + ":" + std::to_string(port_));
    }
    freeaddrinfo(res);
    const std::string frame = encode_frame(body);
    std::size_t sent = 0;
    while (sent < frame.size()) {
      const ssize_t n = ::send(fd, frame.data() + sent, frame.size() - sent, 0);
      if (n <= 0) break;
      sent += static_cast<std::size_t>(n);
    }
    std::string buf;
    char chunk[4096];
    std::optional<std::string> reply;
    while (!(reply = decode_frame(buf))) {
      const ssize_t n = ::recv(fd, chunk, sizeof chunk, 0);
      if (n <= 0) break;
      buf.append(chunk, static_cast<std::size_t>(n));
    }
    ::close(fd);
    if (!reply) throw Error("SERVICE_UNREACHABLE", "connection closed before a full frame");
    return *reply;
  }

  std::string host_;
  int port_;
};

// ---- registry ----------------------------------------------------------------------

/// One completed call, as recorded in the side-effect log.
struct ServiceCall {
  std::uint64_t dyn_id = 0;
  RpcEnvelope request;
  RpcEnvelope response;
  double latency_ms = 0;
};

inline Json to_json(const ServiceCall& c) {
  return Json{{"dyn_id", c.dyn_id}, {"request", to_json(c.request)}, {"response", to_json(c.response)},
              {"latency_ms", c.latency_ms}};
}

class ServiceRegistry {
 public:
  explicit ServiceRegistry(World world, std::uint64_t seed = 0) : world_(std::move(world)), seed_(seed) {}

  void add(const std::string& srv, std::unique_ptr<Service> s) {
    if (srv.empty()) throw Error("BAD_PARAM", "service id must be non-empty");
    if (services_.count(srv)) throw Error("DUPLICATE_SERVICE", "service '" + srv + "' registered twice");
    services_[srv] = std::move(s);
  }

  bool has(const std::string& srv) const { return services_.count(srv) != 0; }
  Service& service(const std::string& srv) {
    auto it = services_.find(srv);
    if (it == services_.end()) throw Error("UNKNOWN_SERVICE", "no service '" + srv + "'");
    return *it->second;
  }
  std::vector<std::string> ids() const {
    std::vector<std::string> out;
    for (const auto& [k, _] : services_) out.push_back(k);
    return out;
  }

  /// Synchronous call: the clock advances by the modeled latency (or the deadline on timeout).
  RpcEnvelope call(const std::string& srv, Json payload, std::uint64_t dyn_id) {
    Service& s = service(srv);
    const std::uint64_t index = call_counts_[srv]++;
    CallInfo info{dyn_id, index, mix_seed(mix_seed(seed_, fnv1a(srv)), index), &falling_};
    RpcEnvelope req{now_ms_, "m" + std::to_string(next_msg_++), srv, std::move(payload)};
    std::mt19937_64 jitter_rng(mix_seed(info.seed, 0x6a177e5ULL));
    double latency = s.latency.fixed_ms;
    if (s.latency.jitter_ms > 0) latency += std::uniform_real_distribution<double>(0.0, s.latency.jitter_ms)(jitter_rng);
    double extra = 0;
    Json out;
    try {
      out = s.handle(req.payload, world_, info, extra);
    } catch (const Error&) {
      advance(latency);
      throw;
    }
    latency += extra;
    if (latency > s.latency.timeout_ms) {
      advance(s.latency.timeout_ms);
      throw Error("SERVICE_TIMEOUT", "'" + srv + "' did not answer within " + std::to_string(s.latency.timeout_ms) + " ms");
    }
    advance(latency);
    RpcEnvelope resp{now_ms_, req.msg_id, srv, std::move(out)};
    log_.push_back({dyn_id, req, resp, latency});
    return resp;
  }

  double now() const { return now_ms_; }
  void advance(double ms) {
    if (ms <= 0) return;
    now_ms_ += ms;
    if (on_advance) on_advance(ms);
  }

  World& world() { return world_; }
  const World& world() const { return world_; }
  std::set<std::uint64_t>& falling() { return falling_; }
  const std::vector<ServiceCall>& log() const { return log_; }
  std::uint64_t seed() const { return seed_; }

  /// Called with every clock advance; used to pace runs against wall time.
  std::function<void(double)> on_advance;

 private:
  World world_;
  std::uint64_t seed_;
  std::map<std::string, std::unique_ptr<Service>> services_;
  std::map<std::string, std::uint64_t> call_counts_;
  std::set<std::uint64_t> falling_;
  std::vector<ServiceCall> log_;
  double now_ms_ = 0;
  std::uint64_t next_msg_ = 1;
};

inline LatencyModel latency_from_json(const Json& j, LatencyModel d = {}) {
  d.fixed_ms = j.value("fixed_ms", d.fixed_ms);
  d.jitter_ms = j.value("jitter_ms", d.jitter_ms);
  d.duration_scale = j.value("duration_scale", d.duration_scale);
  d.timeout_ms = j.value("timeout_ms", d.timeout_ms);
  if (d.fixed_ms < 0 || d.jitter_ms < 0 || d.duration_scale < 0 || !(d.timeout_ms > 0)) {
    throw Error("BAD_PARAM", "latency values must be non-negative");
  }
  return d;
}

/// Builds one service from its scene entry {kind, latency?, ...}.
inline std::unique_ptr<Service> make_service(const Json& j) {
  const std::string kind = j.value("kind", "");
  std::unique_ptr<Service> s;
  if (kind == "perception") {
    s = std::make_unique<PerceptionService>(PerceptionConfig{j.value("sigma", 0.0), j.value("sigma_theta", 0.0)});
  } else if (kind == "robot") {
    s = std::make_unique<RobotService>();
  } else if (kind == "gripper") {
    s = std::make_unique<GripperService>();
  } else if (kind == "io") {
    s = std::make_unique<IoService>();
  } else if (kind == "vibration") {
    VibrationConfig v;
    v.dxy = j.value("dxy", v.dxy);
    v.dtheta = j.value("dtheta", v.dtheta);
    v.attempts = j.value("attempts", v.attempts);
    s = std::make_unique<VibrationService>(v);
  } else if (kind == "pallet") {
    s = std::make_unique<PalletService>();
  } else if (kind == "conveyor") {
    s = std::make_unique<ConveyorService>();
  } else if (kind == "delay") {
    s = std::make_unique<DelayService>();
  } else if (kind == "remote") {
    s = std::make_unique<RemoteService>(j.value("host", "127.0.0.1"), j.value("port", 0));
  } else {
    throw Error("BAD_PARAM", "unknown service kind '" + kind + "'");
  }
  LatencyModel base;
  if (kind == "vibration") base.fixed_ms = 200;
  s->latency = latency_from_json(j.value("latency", Json::object()), base);
  return s;
}

}  // namespace cellscript
