#include <gtest/gtest.h>

#include <random>

#include "cellscript/scene.hpp"

using namespace cellscript;

namespace {

const std::string kDemo = CELLSCRIPT_DEMO_DIR;
const FunctorRegistry& F = builtin_functors();

Node make_node(const std::string& id, NodeKind kind, Json params = Json::object()) {
  Node n;
  n.id = id;
  n.kind = kind;
  n.params = std::move(params);
  n.ports = default_ports(kind);
  return n;
}

Trajectory certified(std::vector<JointConfig> wps) {
  Trajectory t;
  t.waypoints = std::move(wps);
  t.durations.assign(t.waypoints.size() - 1, 0.5);
  t.certificate = {0.01, 0.001, true};
  return t;
}

struct Cell {
  Scene scene = load_scene(kDemo + "/scenes/two_objects.json");
  std::unique_ptr<ServiceRegistry> services = make_registry(scene, 1);
  VariableMap map = initial_map(scene);

  void capture() {
    const RpcEnvelope r = services->call("cam", Json{{"op", "capture"}}, 1);
    map = map.apply({Mutation::set("cam_perception", response_value(r))});
  }

  // Trajectory from the current jps to the pick configuration of (object, grasp), elbow-up.
  Trajectory pick_trajectory(const std::string& id, int grasp) const {
    const WorldObject& o = *std::find_if(scene.objects.begin(), scene.objects.end(), [&](auto& x) { return x.id == id; });
    const Pose flange = flange_for_tcp(o.pose * o.grasps[static_cast<std::size_t>(grasp)].grasp_pose_in_object, scene.cell.tool(0));
    const auto sols = ik(scene.cell.robot, flange);
    return certified({jps_of(map), sols.back()});
  }
};

OnlineParams online_for(Trajectory t, DecisionRecord d = {}) {
  OnlineParams p;
  p.trajectory = std::move(t);
  p.decisions = std::move(d);
  return p;
}

}  // namespace

TEST(Execute, MoveJointSetsJpsAndCallsRobot) {
  Cell c;
  const Node n = make_node("mj", NodeKind::MoveJoint, {{"target", {0.1, 0.2, 0.0}}});
  const OnlineParams p = online_for(certified({{0.0, 0.8, -0.8}, {0.05, 0.5, -0.4}, {0.1, 0.2, 0.0}}));
  const NodeOutcome out = execute_node(n, c.map, &p, *c.services, 9, F);
  EXPECT_EQ(out.port, "next");
  ASSERT_EQ(out.side_effects.size(), 1u);
  EXPECT_EQ(out.side_effects[0].request.srv, kRobotService);
  EXPECT_EQ(out.side_effects[0].dyn_id, 9u);
  const VariableMap after = c.map.apply(out.mutations);
  EXPECT_EQ(after.at(vars::kJps).as_vector(), (std::vector<double>{0.1, 0.2, 0.0}));
}

TEST(Execute, MissingPlan) {
  Cell c;
  const Node n = make_node("mj", NodeKind::MoveJoint, {{"target", {0.1, 0.2, 0.0}}});
  try {
    execute_node(n, c.map, nullptr, *c.services, 1, F);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "MISSING_PLAN");
  }
}

TEST(Execute, MoveToPickRemovesAndAttaches) {
  Cell c;
  c.capture();
  const Node n = make_node("pick", NodeKind::MoveToPick, {{"srv", "cam"}});
  DecisionRecord d;
  d.objects = {"A"};
  d.grasp = 1;
  d.tool = 0;
  const OnlineParams p = online_for(c.pick_trajectory("A", 1), d);
  const std::size_t before = detail::perception_objects(c.map.at("cam_perception")).size();
  const NodeOutcome out = execute_node(n, c.map, &p, *c.services, 2, F);
  const VariableMap after = c.map.apply(out.mutations);
  const ObjectSet& rest = detail::perception_objects(after.at("cam_perception"));
  const ObjectSet& picked = after.at(vars::kPickedObjects).as_objects();
  ASSERT_EQ(picked.size(), 1u);
  EXPECT_EQ(picked[0].id, "A");
  ASSERT_EQ(rest.size(), 1u);
  EXPECT_EQ(rest[0].id, "B");
  EXPECT_EQ(rest.size() + picked.size(), before);
  // Gripper-frame pose composes back to the object's world pose.
  const Pose flange = fk(c.scene.cell.robot, p.trajectory->back());
  EXPECT_LT(pose_residual(flange * picked[0].pose, c.scene.objects[0].pose), 1e-9);
  // Only the robot motion is a side effect; no gripper actuation.
  ASSERT_EQ(out.side_effects.size(), 1u);
  EXPECT_EQ(out.side_effects[0].request.payload["op"], "execute");
  EXPECT_EQ(c.services->world().attached.size(), 1u);
}

TEST(Execute, PlaceObjectMovesToPlacedWithWorldPoses) {
  Cell c;
  c.capture();
  const Node pick = make_node("pick", NodeKind::MoveToPick, {{"srv", "cam"}});
  DecisionRecord d;
  d.objects = {"B"};
  d.grasp = 0;
  const OnlineParams p = online_for(c.pick_trajectory("B", 0), d);
  c.map = c.map.apply(execute_node(pick, c.map, &p, *c.services, 2, F).mutations);
  const Node lift = make_node("lift", NodeKind::RelativeMove, {{"offset", {-0.1, 0, 0}}});
  const JointConfig q2{p.trajectory->back()[0] + 0.05, p.trajectory->back()[1] - 0.02, p.trajectory->back()[2] - 0.1};
  const OnlineParams p2 = online_for(certified({p.trajectory->back(), q2}));
  c.map = c.map.apply(execute_node(lift, c.map, &p2, *c.services, 3, F).mutations);
  const ObjectSet held = c.map.at(vars::kPickedObjects).as_objects();

  const Node place = make_node("place", NodeKind::PlaceObject);
  const NodeOutcome out = execute_node(place, c.map, nullptr, *c.services, 4, F);
  EXPECT_EQ(out.port, "next");
  const VariableMap after = c.map.apply(out.mutations);
  EXPECT_TRUE(after.at(vars::kPickedObjects).as_objects().empty());
  const ObjectSet& placed = after.at(vars::kPlacedObjects).as_objects();
  ASSERT_EQ(placed.size(), 1u);
  const Pose flange = fk(c.scene.cell.robot, q2);
  EXPECT_LT(pose_residual(placed[0].pose, flange * held[0].pose), 1e-9);
  // Belief matches ground truth.
  ASSERT_EQ(c.services->world().placed.size(), 1u);
  EXPECT_LT(pose_residual(c.services->world().placed[0].pose, placed[0].pose), 1e-9);
}

TEST(Execute, CounterBranchPorts) {
  Cell c;
  const Node n = make_node("br", NodeKind::CounterBranch, {{"var", "i"}, {"threshold", 5}});
  EXPECT_EQ(execute_node(n, c.map.apply({Mutation::set("i", 7)}), nullptr, *c.services, 1, F).port, "ge");
  EXPECT_EQ(execute_node(n, c.map.apply({Mutation::set("i", 4)}), nullptr, *c.services, 1, F).port, "lt");
}

TEST(Execute, CallServiceStoresResponse) {
  Cell c;
  const Node n = make_node("cap", NodeKind::CallService,
                           {{"srv", "cam"}, {"request", {{"op", "capture"}}}, {"response_save_var", "cam_perception"}});
  const NodeOutcome out = execute_node(n, c.map, nullptr, *c.services, 1, F);
  const VariableMap after = c.map.apply(out.mutations);
  EXPECT_EQ(detail::perception_objects(after.at("cam_perception")).size(), 2u);
  EXPECT_EQ(out.side_effects.size(), 1u);
}

TEST(Execute, ExceptionProbeFollowsGripper) {
  Cell c;
  Node probe = make_node("probe", NodeKind::ExceptionProbe, {{"srv", "gripper"}});
  EXPECT_EQ(execute_node(probe, c.map, nullptr, *c.services, 1, F).port, "ok");
  c.capture();
  WorldObject ghost = c.scene.objects[0];
  c.map = c.map.apply({Mutation::set(std::string(vars::kPickedObjects), ObjectSet{ghost})});
  EXPECT_EQ(execute_node(probe, c.map, nullptr, *c.services, 2, F).port, "fail");
}

TEST(Execute, PlannerSelectTakesRecordedPort) {
  Cell c;
  Node n = make_node("sel", NodeKind::PlannerSelect);
  n.ports = {{"suction", false}, {"jaw", false}};
  OnlineParams p;
  p.decisions.port = "jaw";
  EXPECT_EQ(execute_node(n, c.map, &p, *c.services, 1, F).port, "jaw");
}

TEST(Simulate, CallServicePoisonsResponse) {
  Cell c;
  const Node n = make_node("cap", NodeKind::CallService,
                           {{"srv", "cam"}, {"request", {{"op", "capture"}}}, {"response_save_var", "cam_perception"}});
  const SimOutcome s = simulate_node(n, c.map.as_shadow(), nullptr, 17, F);
  ASSERT_TRUE(s.simulated);
  const VariableMap after = c.map.as_shadow().apply(s.mutations);
  ASSERT_TRUE(after.is_poisoned("cam_perception"));
  EXPECT_EQ(after.at("cam_perception").as_poison().origin, 17u);
  EXPECT_TRUE(c.services->log().empty());
}

TEST(Simulate, CounterIncLikeExecute) {
  Cell c;
  const Node n = make_node("inc", NodeKind::FunctorVariableMutation, {{"functor", "counter.inc"}, {"args", {{"var", "i"}}}});
  const VariableMap m = c.map.apply({Mutation::set("i", 2)}).as_shadow();
  const SimOutcome s = simulate_node(n, m, nullptr, 1, F);
  ASSERT_TRUE(s.simulated);
  EXPECT_EQ(m.apply(s.mutations).at("i").as_int(), 3);
}

TEST(Simulate, PoisonedReadIsUnsimulatable) {
  Cell c;
  const Node n = make_node("br", NodeKind::CounterBranch, {{"var", "i"}, {"threshold", 5}});
  const VariableMap m = c.map.as_shadow().poison("i", 3);
  const SimOutcome s = simulate_node(n, m, nullptr, 4, F);
  EXPECT_FALSE(s.simulated);
  EXPECT_EQ(s.blocking_var, "i");
}

TEST(Simulate, ExceptionProbeGuessesFirstRegularPort) {
  Cell c;
  Node n = make_node("probe", NodeKind::ExceptionProbe, {{"srv", "gripper"}});
  n.ports = {{"fail", true}, {"ok", false}};
  const SimOutcome s = simulate_node(n, c.map.as_shadow(), nullptr, 1, F);
  ASSERT_TRUE(s.simulated);
  EXPECT_EQ(s.port, "ok");
}

TEST(Simulate, MovementWithoutPlanIsUnsimulatable) {
  Cell c;
  const Node n = make_node("mj", NodeKind::MoveJoint, {{"target", {0, 0, 0}}});
  EXPECT_FALSE(simulate_node(n, c.map.as_shadow(), nullptr, 1, F).simulated);
}

TEST(Simulate, MoveToPickMatchesExecuteMutations) {
  Cell c;
  c.capture();
  const Node n = make_node("pick", NodeKind::MoveToPick, {{"srv", "cam"}});
  DecisionRecord d;
  d.objects = {"A"};
  d.grasp = 0;
  const OnlineParams p = online_for(c.pick_trajectory("A", 0), d);
  const SimOutcome s = simulate_node(n, c.map.as_shadow(), &p, 2, F);
  ASSERT_TRUE(s.simulated);
  const NodeOutcome e = execute_node(n, c.map, &p, *c.services, 2, F);
  EXPECT_EQ(canonical_dump(c.map.apply(s.mutations)), canonical_dump(c.map.apply(e.mutations)));
}

TEST(SimulateProperty, SameAsExecuteOnRandomMaps) {
  Cell c;
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> val(-10, 10);
  const std::vector<Node> nodes{
      make_node("inc", NodeKind::FunctorVariableMutation, {{"functor", "counter.inc"}, {"args", {{"var", "i"}}}}),
      make_node("dec", NodeKind::FunctorVariableMutation, {{"functor", "counter.dec"}, {"args", {{"var", "j"}}}}),
      make_node("cp", NodeKind::FunctorVariableMutation, {{"functor", "var.copy"}, {"args", {{"from", "i"}, {"to", "k"}}}}),
      make_node("set", NodeKind::SetVariable, {{"var", "j"}, {"value", 4}}),
      make_node("br", NodeKind::CounterBranch, {{"var", "i"}, {"threshold", 0}}),
  };
  for (int trial = 0; trial < 500; ++trial) {
    const VariableMap m = c.map.apply({Mutation::set("i", val(rng)), Mutation::set("j", val(rng))});
    for (const auto& n : nodes) {
      const NodeOutcome e = execute_node(n, m, nullptr, *c.services, 1, F);
      const SimOutcome s = simulate_node(n, m.as_shadow(), nullptr, 1, F);
      ASSERT_TRUE(s.simulated) << n.id;
      EXPECT_EQ(s.port, e.port) << n.id;
      EXPECT_EQ(canonical_dump(m.apply(s.mutations)), canonical_dump(m.apply(e.mutations))) << n.id;
      const auto ws = write_set(n, F);
      for (const auto& mu : e.mutations) EXPECT_NE(std::find(ws.begin(), ws.end(), mu.name), ws.end()) << n.id;
    }
  }
  EXPECT_TRUE(c.services->log().empty());
}

TEST(GraspFilter, TwoObjectsTwoGraspsEach) {
  Cell c;
  c.capture();
  const auto cands = grasp_filter(c.map.at("cam_perception"), {});
  ASSERT_EQ(cands.size(), 4u);
  std::vector<double> scores;
  for (const auto& g : cands) scores.push_back(g.score);
  EXPECT_EQ(scores, (std::vector<double>{0.9, 0.8, 0.6, 0.5}));
}

TEST(GraspFilter, ToolAndScoreFilters) {
  auto obj = [](const std::string& id, std::vector<std::pair<int, double>> gs) {
    WorldObject o;
    o.id = id;
    o.polygon = rectangle(0.05, 0.05);
    for (auto [tool, score] : gs) o.grasps.push_back({tool, Pose{}, score, {}, {}});
    return o;
  };
  const Value mixed(ObjectSet{obj("a", {{0, 0.95}, {1, 0.5}}), obj("b", {{1, 0.8}, {0, 0.99}})});
  FilterSpec tool1;
  tool1.tool_index = 1;
  const auto t1 = grasp_filter(mixed, tool1);
  ASSERT_EQ(t1.size(), 2u);
  for (const auto& g : t1) EXPECT_EQ(g.tool, 1);

  FilterSpec hi;
  hi.min_score = 0.9;
  const auto h = grasp_filter(mixed, hi);
  ASSERT_EQ(h.size(), 2u);
  EXPECT_EQ(h[0].score, 0.99);
  EXPECT_EQ(h[1].score, 0.95);
  EXPECT_THROW(grasp_filter(Value(3), {}), Error);
}

TEST(GraspFilter, MultiPickNeedsCoPicksPresent) {
  WorldObject a;
  a.id = "a";
  a.polygon = rectangle(0.05, 0.05);
  a.grasps.push_back({0, Pose{}, 0.7, {}, {"b"}});
  a.grasps.push_back({0, Pose{}, 0.6, {}, {}});
  WorldObject b = a;
  b.id = "b";
  b.grasps = {{0, Pose{}, 0.5, {}, {}}};
  FilterSpec two;
  two.max_picked = 2;
  EXPECT_EQ(grasp_filter(Value(ObjectSet{a, b}), two).front().objects, (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(grasp_filter(Value(ObjectSet{a}), two).size(), 1u);
  EXPECT_EQ(grasp_filter(Value(ObjectSet{a, b}), {}).size(), 2u);
}
