#include <gtest/gtest.h>

#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <thread>

#include "cellscript/scene.hpp"

using namespace cellscript;

namespace {

const std::string kDemo = CELLSCRIPT_DEMO_DIR;

Scene two_objects() { return load_scene(kDemo + "/scenes/two_objects.json"); }

Trajectory certified(std::vector<JointConfig> wps, std::vector<double> durations) {
  Trajectory t;
  t.waypoints = std::move(wps);
  t.durations = std::move(durations);
  t.certificate = {0.01, 0.001, true};
  return t;
}

WorldObject box(const std::string& id, double w, double h, Pose pose) {
  WorldObject o;
  o.id = id;
  o.type = "box";
  o.polygon = rectangle(w, h);
  o.pose = pose;
  return o;
}

}  // namespace

TEST(Envelope, JsonRoundTrip) {
  RpcEnvelope e{125.5, "m3", "cam", Json{{"op", "capture"}}};
  const Json j = to_json(e);
  EXPECT_EQ(j["meta"]["msg_id"], "m3");
  const RpcEnvelope back = envelope_from_json(j);
  EXPECT_EQ(back.ts_ms, 125.5);
  EXPECT_EQ(back.msg_id, "m3");
  EXPECT_EQ(back.srv, "cam");
  EXPECT_EQ(back.payload, e.payload);
  EXPECT_THROW(envelope_from_json(Json{{"payload", 1}}), Error);
}

TEST(Envelope, FramesSplitAcrossReads) {
  const std::string a = R"({"meta":{},"payload":1})", b = "x";
  std::string wire = encode_frame(a) + encode_frame(b);
  ASSERT_EQ(wire.size(), a.size() + b.size() + 8);
  EXPECT_EQ(static_cast<unsigned char>(wire[3]), a.size());
  std::string buf = wire.substr(0, 6);
  EXPECT_FALSE(decode_frame(buf).has_value());
  buf += wire.substr(6);
  EXPECT_EQ(decode_frame(buf), a);
  EXPECT_EQ(decode_frame(buf), b);
  EXPECT_TRUE(buf.empty());
}

TEST(Registry, UnknownAndDuplicate) {
  ServiceRegistry reg(World{}, 1);
  reg.add("d", std::make_unique<DelayService>());
  EXPECT_THROW(reg.add("d", std::make_unique<DelayService>()), Error);
  try {
    reg.call("nope", Json::object(), 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "UNKNOWN_SERVICE");
  }
}

TEST(Registry, VibrationAckAfterDefaultLatency) {
  ServiceRegistry reg(World{}, 1);
  reg.add("vibration", make_service(Json{{"kind", "vibration"}}));
  const RpcEnvelope r = reg.call("vibration", Json{{"op", "trigger"}}, 4);
  EXPECT_EQ(r.payload["ok"], true);
  EXPECT_DOUBLE_EQ(reg.now(), 200.0);
  EXPECT_DOUBLE_EQ(r.ts_ms, 200.0);
  EXPECT_EQ(reg.log().size(), 1u);
  EXPECT_EQ(reg.log()[0].request.msg_id, r.msg_id);
}

TEST(Registry, JitterDeterministicPerSeed) {
  auto latencies = [](std::uint64_t seed) {
    ServiceRegistry reg(World{}, seed);
    reg.add("d", make_service(Json{{"kind", "delay"}, {"latency", {{"fixed_ms", 10}, {"jitter_ms", 40}}}}));
    std::vector<double> out;
    for (int i = 0; i < 20; ++i) out.push_back(reg.call("d", Json::object(), i).ts_ms);
    return out;
  };
  const auto a = latencies(7), b = latencies(7), c = latencies(8);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
  double prev = 0;
  for (double t : a) {
    EXPECT_GE(t - prev, 10.0);
    EXPECT_LT(t - prev, 50.0);
    prev = t;
  }
}

TEST(Registry, MessageIdsUniqueAndCorrelated) {
  ServiceRegistry reg(World{}, 1);
  reg.add("a", std::make_unique<DelayService>());
  reg.add("b", std::make_unique<DelayService>());
  std::set<std::string> ids;
  for (int i = 0; i < 10; ++i) ids.insert(reg.call(i % 2 ? "a" : "b", Json::object(), i).msg_id);
  EXPECT_EQ(ids.size(), 10u);
  for (const auto& c : reg.log()) EXPECT_EQ(c.request.msg_id, c.response.msg_id);
}

TEST(Registry, TimeoutAdvancesToDeadline) {
  ServiceRegistry reg(World{}, 1);
  reg.add("slow", make_service(Json{{"kind", "delay"}, {"latency", {{"fixed_ms", 500}, {"timeout_ms", 100}}}}));
  try {
    reg.call("slow", Json::object(), 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "SERVICE_TIMEOUT");
  }
  EXPECT_DOUBLE_EQ(reg.now(), 100.0);
  EXPECT_TRUE(reg.log().empty());
}

TEST(Perception, TwoObjectSceneExact) {
  const Scene s = two_objects();
  auto reg = make_registry(s, 3);
  const RpcEnvelope r = reg->call("cam", Json{{"op", "capture"}}, 1);
  const ObjectSet objs = objects_from_json(r.payload["objects"]);
  ASSERT_EQ(objs.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(objs[i].id, s.objects[i].id);
    EXPECT_EQ(objs[i].grasps.size(), 2u);
    EXPECT_TRUE(approx_equal(objs[i].pose, s.objects[i].pose, 0.0));
  }
  EXPECT_DOUBLE_EQ(reg->now(), 300.0);
}

TEST(Perception, AllAttachedGivesEmpty) {
  World w;
  w.cell = two_objects().cell;
  w.attached = two_objects().objects;
  std::mt19937_64 rng(1);
  const auto r = perception_capture(w, {}, rng);
  EXPECT_TRUE(r.objects.empty());
  EXPECT_TRUE(r.occluded.empty());
}

TEST(Perception, NoisyCaptureReproducible) {
  Json doc = two_objects().doc;
  doc["services"]["cam"]["sigma"] = 0.001;
  const Scene s = scene_from_json(doc);
  auto capture = [&] { return make_registry(s, 11)->call("cam", Json{{"op", "capture"}}, 1).payload.dump(); };
  const std::string a = capture();
  EXPECT_EQ(a, capture());
  const ObjectSet objs = objects_from_json(Json::parse(a)["objects"]);
  const double dx = objs[0].pose.x - s.objects[0].pose.x;
  EXPECT_NE(dx, 0.0);
  EXPECT_LT(std::abs(dx), 0.006);
}

TEST(Perception, StackedObjectIsOccluded) {
  World w;
  w.free = {box("low", 0.1, 0.05, {0, 0, 0}), box("high", 0.1, 0.05, {0.02, 0.06, 0})};
  std::mt19937_64 rng(1);
  const auto r = perception_capture(w, {}, rng);
  EXPECT_EQ(r.occluded, std::vector<std::string>{"low"});
}

TEST(Robot, ClockAdvancesByTrajectoryDuration) {
  auto reg = make_registry(two_objects(), 1);
  const Trajectory t = certified({{0.0, 0.8, -0.8}, {1.0, 0.8, -0.8}, {2.0, 0.8, -0.8}}, {1.0, 1.0});
  reg->call(kRobotService, Json{{"op", "execute"}, {"trajectory", to_json(t)}}, 5);
  EXPECT_DOUBLE_EQ(reg->now(), 2000.0);
  EXPECT_EQ(reg->world().q, t.back());
}

TEST(Robot, DurationScaleZeroIsImmediate) {
  Json doc = two_objects().doc;
  doc["services"]["robot"]["latency"] = {{"duration_scale", 0.0}};
  auto reg = make_registry(scene_from_json(doc), 1);
  const Trajectory t = certified({{0.0, 0.8, -0.8}, {2.0, 0.8, -0.8}}, {2.0});
  reg->call(kRobotService, Json{{"op", "execute"}, {"trajectory", to_json(t)}}, 5);
  EXPECT_DOUBLE_EQ(reg->now(), 0.0);
}

TEST(Robot, RejectsUncertified) {
  auto reg = make_registry(two_objects(), 1);
  Trajectory t = certified({{0.0, 0.8, -0.8}, {0.1, 0.8, -0.8}}, {0.1});
  t.certificate.collision_free = false;
  for (Json traj : {to_json(t), Json{{"waypoints", {{0, 0, 0}, {0, 0, 0}}}, {"durations", {0}}}}) {
    try {
      reg->call(kRobotService, Json{{"op", "execute"}, {"trajectory", traj}}, 1);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), "REJECTED_UNCERTIFIED");
    }
  }
  EXPECT_EQ(reg->world().q, (JointConfig{0.0, 0.8, -0.8}));
}

TEST(Robot, ScheduledFallReturnsObjectToOrigin) {
  Json doc = two_objects().doc;
  doc["faults"] = {{"falling_schedule", {42}}};
  auto reg = make_registry(scene_from_json(doc), 1);
  const Trajectory pick = certified({{0.0, 0.8, -0.8}, {0.62, -1.95, -0.24}}, {1.0});
  const Trajectory lift = certified({{0.62, -1.95, -0.24}, {0.7, -1.95, -0.3}}, {0.1});
  reg->call(kRobotService, Json{{"op", "execute"}, {"trajectory", to_json(pick)}, {"attach", {"A"}}}, 41);
  ASSERT_EQ(reg->world().attached.size(), 1u);
  reg->call(kRobotService, Json{{"op", "execute"}, {"trajectory", to_json(lift)}}, 42);
  EXPECT_TRUE(reg->world().attached.empty());
  EXPECT_EQ(reg->world().drop_log, std::vector<std::string>{"A"});
  const auto it = std::find_if(reg->world().free.begin(), reg->world().free.end(), [](auto& o) { return o.id == "A"; });
  ASSERT_NE(it, reg->world().free.end());
  EXPECT_TRUE(approx_equal(it->pose, Pose{1.0, -0.47, 0.0}));
  const RpcEnvelope chk = reg->call("gripper", Json{{"op", "check"}, {"expected", {"A"}}}, 43);
  EXPECT_EQ(chk.payload["ok"], false);
}

TEST(Robot, DetachPlacesAtFlangeComposition) {
  World w;
  w.cell = two_objects().cell;
  w.q = {0.3, -0.4, 0.9};
  w.attached = {box("A", 0.06, 0.05, {0.1, 0.02, 0.3})};
  ServiceRegistry reg(w, 1);
  reg.add(kRobotService, std::make_unique<RobotService>());
  reg.call(kRobotService, Json{{"op", "detach"}, {"ids", {"A"}}}, 1);
  ASSERT_EQ(reg.world().placed.size(), 1u);
  EXPECT_TRUE(approx_equal(reg.world().placed[0].pose, fk(w.cell.robot, w.q) * Pose{0.1, 0.02, 0.3}));
}

TEST(Vibration, EmptyContainerIsNoop) {
  World w;
  w.cell.container = rectangle(1.0, 1.0);
  std::mt19937_64 rng(3);
  vibration_disturb(w, {}, rng);
  EXPECT_TRUE(w.free.empty());
}

TEST(Vibration, SingleObjectReproducible) {
  auto run = [] {
    World w;
    w.cell.container = rectangle(1.0, 1.0);
    w.free = {box("a", 0.1, 0.1, {0, 0, 0})};
    std::mt19937_64 rng(99);
    vibration_disturb(w, {}, rng);
    return w.free[0].pose;
  };
  const Pose a = run(), b = run();
  EXPECT_EQ(a, b);
  EXPECT_FALSE(approx_equal(a, Pose{}));
  EXPECT_LE(std::abs(a.x), 0.03);
  EXPECT_LE(std::abs(a.theta), 0.3);
}

TEST(Vibration, PackedContainerFails) {
  // Two boxes cover 99% of the container: no perturbation within the bounds keeps them
  // both inside and disjoint, since any rotation beyond 0.01 rad or shift beyond 1 mm leaves it.
  World w;
  w.cell.container = {{0, 0}, {0.2, 0}, {0.2, 0.1}, {0, 0.1}};
  w.free = {box("a", 0.0995, 0.0995, {0.05, 0.05, 0}), box("b", 0.0995, 0.0995, {0.15, 0.05, 0})};
  const double covered = 2 * 0.0995 * 0.0995 / (0.2 * 0.1);
  ASSERT_GT(covered, 0.95);
  std::mt19937_64 rng(5);
  try {
    vibration_disturb(w, {}, rng);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "PERTURB_FAILED");
  }
}

TEST(Pallet, GridOfSixSlots) {
  PalletState s{{0, 0}, 4, 3, 0, {}};
  auto first = next_slot(s, {2, 1});
  ASSERT_TRUE(first);
  EXPECT_TRUE(approx_equal(*first, Pose{1, 0.5, 0}));
  int n = 0;
  while (auto p = next_slot(s, {2, 1})) {
    s = pack(s, "b" + std::to_string(n), {2, 1});
    ++n;
  }
  EXPECT_EQ(n, 6);
  EXPECT_TRUE(pallet_next_slots(s, {{2, 1}}).empty());
  EXPECT_TRUE(pallet_next_slots(PalletState{{0, 0}, 4, 3, 0, {}}, {{5, 1}}).empty());
}

TEST(Pallet, MixedBoxesShelfRule) {
  // Hand enumeration of the shelf rule on a 4x3 pallet for the sequence 2x1, 1x1, 2x1, 1x1, 1x1:
  // shelf y=0 holds [0,2) and [2,3); the next 2x1 would end at x=5, so a shelf opens at y=1.
  const std::vector<Footprint> seq{{2, 1}, {1, 1}, {2, 1}, {1, 1}, {1, 1}};
  const std::vector<Pose> expected{{1, 0.5, 0}, {2.5, 0.5, 0}, {1, 1.5, 0}, {2.5, 1.5, 0}, {3.5, 1.5, 0}};
  PalletState s{{0, 0}, 4, 3, 0, {}};
  for (std::size_t i = 0; i < seq.size(); ++i) {
    const auto p = next_slot(s, seq[i]);
    ASSERT_TRUE(p) << i;
    EXPECT_TRUE(approx_equal(*p, expected[i])) << i;
    s = pack(s, "b" + std::to_string(i), seq[i]);
  }
  PalletState two{{0, 0}, 4, 3, 0, {{"a", 2, 1}, {"b", 1, 1}}};
  const auto slots = pallet_next_slots(two, {{2, 1}, {1, 1}});
  ASSERT_EQ(slots.size(), 2u);
  EXPECT_TRUE(approx_equal(slots[0].pose, Pose{1, 1.5, 0}));
  EXPECT_TRUE(approx_equal(slots[1].pose, Pose{3.5, 0.5, 0}));
}

TEST(Pallet, ServiceRoundTrip) {
  ServiceRegistry reg(World{}, 1);
  reg.add("pallet", make_service(Json{{"kind", "pallet"}}));
  const Json state = to_json(PalletState{{1, 1}, 4, 3, 0, {}});
  const RpcEnvelope r = reg.call("pallet", Json{{"state", state}, {"footprints", {{2, 1}}}}, 1);
  ASSERT_EQ(r.payload["slots"].size(), 1u);
  EXPECT_EQ(r.payload["slots"][0]["pose"], (Json{2.0, 1.5, 0.0}));
}

TEST(Remote, LoopbackFramedTransport) {
  const int lfd = ::socket(AF_INET, SOCK_STREAM, 0);
  ASSERT_GE(lfd, 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = 0;
  ASSERT_EQ(::bind(lfd, reinterpret_cast<sockaddr*>(&addr), sizeof addr), 0);
  ASSERT_EQ(::listen(lfd, 1), 0);
  socklen_t len = sizeof addr;
  ::getsockname(lfd, reinterpret_cast<sockaddr*>(&addr), &len);
  const int port = ntohs(addr.sin_port);

  std::thread server([lfd] {
    const int fd = ::accept(lfd, nullptr, nullptr);
    std::string buf;
    char chunk[512];
    std::optional<std::string> req;
    while (!(req = decode_frame(buf))) {
      const ssize_t n = ::recv(fd, chunk, sizeof chunk, 0);
      if (n <= 0) break;
      buf.append(chunk, static_cast<std::size_t>(n));
    }
    Json env = Json::parse(*req);
    env["payload"] = Json{{"echo", env["payload"]}};
    const std::string out = encode_frame(env.dump());
    ::send(fd, out.data(), out.size(), 0);
    ::close(fd);
  });

  ServiceRegistry reg(World{}, 1);
  reg.add("dev", make_service(Json{{"kind", "remote"}, {"host", "127.0.0.1"}, {"port", port}, {"latency", {{"fixed_ms", 5}}}}));
  const RpcEnvelope r = reg.call("dev", Json{{"op", "ping"}}, 1);
  server.join();
  ::close(lfd);
  EXPECT_EQ(r.payload["echo"]["op"], "ping");
  EXPECT_DOUBLE_EQ(reg.now(), 5.0);
}
