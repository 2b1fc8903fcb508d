#pragma once

// Execute and simulate semantics of every node kind. Both interfaces share one
// effects function so a simulated step and a real step make the same map update.

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cellscript/functors.hpp"
#include "cellscript/graph.hpp"
#include "cellscript/motion.hpp"
#include "cellscript/pallet.hpp"
#include "cellscript/services.hpp"

namespace cellscript {

inline constexpr const char* kRobotService = "robot";

struct DecisionRecord {
  std::vector<std::string> objects;
  int grasp = -1;
  int ik_branch = -1;
  int symmetry = -1;
  int target = -1;
  int tool = -1;
  std::string port;
  friend bool operator==(const DecisionRecord&, const DecisionRecord&) = default;
};

/// Planner output for one node execution.
struct OnlineParams {
  std::optional<Trajectory> trajectory;
  DecisionRecord decisions;
  friend bool operator==(const OnlineParams&, const OnlineParams&) = default;
};

/// Online parameters of one plan-routine invocation, keyed by node id (a plan-routine is
/// loop-free, so each node runs at most once per invocation).
using PlanParams = std::map<std::string, OnlineParams>;

inline Json to_json(const DecisionRecord& d) {
  Json j = Json::object();
  if (!d.objects.empty()) j["objects"] = d.objects;
  if (d.grasp >= 0) j["grasp"] = d.grasp;
  if (d.ik_branch >= 0) j["ik_branch"] = d.ik_branch;
  if (d.symmetry >= 0) j["symmetry"] = d.symmetry;
  if (d.target >= 0) j["target"] = d.target;
  if (d.tool >= 0) j["tool"] = d.tool;
  if (!d.port.empty()) j["port"] = d.port;
  return j;
}

inline Json to_json(const OnlineParams& p) {
  Json j{{"decisions", to_json(p.decisions)}};
  if (p.trajectory) j["trajectory"] = to_json(*p.trajectory);
  return j;
}

inline Json to_json(const PlanParams& pp) {
  Json j = Json::object();
  for (const auto& [id, p] : pp) j[id] = to_json(p);
  return j;
}

struct NodeOutcome {
  std::string port;
  std::vector<Mutation> mutations;
  std::vector<ServiceCall> side_effects;
};

struct SimOutcome {
  bool simulated = false;
  std::string port;
  std::vector<Mutation> mutations;  // may include poison
  std::string reason;               // when unsimulatable
  std::string blocking_var;

  static SimOutcome ok(std::string port, std::vector<Mutation> muts) { return {true, std::move(port), std::move(muts), {}, {}}; }
  static SimOutcome blocked(std::string reason, std::string var = {}) { return {false, {}, {}, std::move(reason), std::move(var)}; }
};

// ---- grasp candidates ----------------------------------------------------------------

struct FilterSpec {
  std::optional<std::string> object_type;
  std::optional<int> tool_index;  // nothing = any tool
  double min_score = 0.0;
  int max_picked = 1;
};

inline FilterSpec filter_from_json(const Json& f) {
  FilterSpec s;
  if (f.contains("object_type")) s.object_type = f["object_type"].get<std::string>();
  if (f.contains("tool_index") && f["tool_index"].is_number_integer()) s.tool_index = f["tool_index"].get<int>();
  s.min_score = f.value("min_score", 0.0);
  s.max_picked = f.value("max_picked", 1);
  return s;
}

struct GraspCandidate {
  std::vector<std::string> objects;  // primary object first, then co-picks
  int grasp = 0;
  int tool = 0;
  double score = 0.0;
};

/// Candidates over the perception objects, ordered by (score desc, object id, grasp index).
inline std::vector<GraspCandidate> grasp_filter(const Value& perception, const FilterSpec& f) {
  if (perception.kind() != ValueKind::Objects &&
      !(perception.kind() == ValueKind::Compound && perception.as_compound().contains("objects"))) {
    throw Error("BAD_PERCEPTION", "perception value must be an object set or a capture compound");
  }
  const ObjectSet& objs = detail::perception_objects(perception);
  std::set<std::string> present;
  for (const auto& o : objs) present.insert(o.id);
  std::vector<GraspCandidate> out;
  for (const auto& o : objs) {
    if (f.object_type && o.type != *f.object_type) continue;
    for (std::size_t g = 0; g < o.grasps.size(); ++g) {
      const GraspAnnotation& ga = o.grasps[g];
      if (f.tool_index && ga.tool_index != *f.tool_index) continue;
      if (ga.score < f.min_score) continue;
      if (static_cast<int>(1 + ga.co_picks.size()) > f.max_picked) continue;
      if (!std::all_of(ga.co_picks.begin(), ga.co_picks.end(), [&](const std::string& id) { return present.count(id) != 0; })) {
        continue;
      }
      GraspCandidate c;
      c.objects.push_back(o.id);
      c.objects.insert(c.objects.end(), ga.co_picks.begin(), ga.co_picks.end());
      c.grasp = static_cast<int>(g);
      c.tool = ga.tool_index;
      c.score = ga.score;
      out.push_back(std::move(c));
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const GraspCandidate& a, const GraspCandidate& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.objects.front() != b.objects.front()) return a.objects.front() < b.objects.front();
    return a.grasp < b.grasp;
  });
  return out;
}

// ---- read and write sets -----------------------------------------------------------------

inline std::string pick_perception_var(const Node& n) {
  if (n.params.contains("perception_var")) return n.params["perception_var"].get<std::string>();
  return vars::perception_var(n.params.value("srv", ""));
}

inline std::vector<std::string> read_set(const Node& n, const FunctorRegistry& functors) {
  const std::string jps(vars::kJps), env(vars::kStaticEnv), picked(vars::kPickedObjects),
      placed(vars::kPlacedObjects), tool(vars::kActiveTool);
  switch (n.kind) {
    case NodeKind::MoveJoint:
    case NodeKind::RelativeMove:
    case NodeKind::MoveToObjectPose: return {jps, env, picked, placed, tool};
    case NodeKind::MoveToPick: return {jps, env, picked, placed, tool, pick_perception_var(n)};
    case NodeKind::PalletizationMove: return {jps, env, picked, placed, tool, n.params.at("pallet_var").get<std::string>()};
    case NodeKind::MoveTrajectoryByVariable: return {jps, env, picked, placed, n.params.at("var").get<std::string>()};
    case NodeKind::PlaceObject: return {jps, env, picked, placed};
    case NodeKind::CallService:
      if (n.params.contains("request_var")) return {n.params["request_var"].get<std::string>()};
      return {};
    case NodeKind::FunctorVariableMutation:
      return functors.at(n.params.at("functor").get<std::string>()).reads(n.params.value("args", Json::object()));
    case NodeKind::CounterBranch: return {n.params.at("var").get<std::string>()};
    case NodeKind::ExceptionProbe: return {picked};
    default: return {};
  }
}

inline std::vector<std::string> write_set(const Node& n, const FunctorRegistry& functors) {
  const std::string jps(vars::kJps), picked(vars::kPickedObjects), placed(vars::kPlacedObjects), tool(vars::kActiveTool);
  switch (n.kind) {
    case NodeKind::MoveJoint:
    case NodeKind::RelativeMove:
    case NodeKind::MoveToObjectPose:
    case NodeKind::MoveTrajectoryByVariable: return {jps};
    case NodeKind::MoveToPick: return {jps, picked, tool, pick_perception_var(n)};
    case NodeKind::PalletizationMove: return {jps, n.params.at("pallet_var").get<std::string>()};
    case NodeKind::PlaceObject: return {picked, placed};
    case NodeKind::CallService: return {n.params.at("response_save_var").get<std::string>()};
    case NodeKind::SetVariable: return {n.params.at("var").get<std::string>()};
    case NodeKind::FunctorVariableMutation:
      return functors.at(n.params.at("functor").get<std::string>()).writes(n.params.value("args", Json::object()));
    default: return {};
  }
}

// ---- effects ----------------------------------------------------------------------------

inline CellModel cell_of(const VariableMap& map) {
  return cell_from_static_env(map.at(vars::kStaticEnv).as_compound());
}

inline JointConfig jps_of(const VariableMap& map) {
  const auto& v = map.at(vars::kJps).as_vector();
  return {v.at(0), v.at(1), v.at(2)};
}

inline std::vector<double> to_vector(const JointConfig& q) { return {q[0], q[1], q[2]}; }

/// Perception value with the given objects removed (keeps the capture meta).
inline Value without_objects(const Value& perception, const std::set<std::string>& ids) {
  ObjectSet rest;
  for (const auto& o : detail::perception_objects(perception)) {
    if (!ids.count(o.id)) rest.push_back(o);
  }
  if (perception.kind() == ValueKind::Compound) {
    Compound c = perception.as_compound();
    c.fields["objects"] = Value(std::move(rest));
    return Value(std::move(c));
  }
  return Value(std::move(rest));
}

/// Response value stored by CallService: captures become {objects, meta}; anything else {payload, meta}.
inline Value response_value(const RpcEnvelope& env) {
  Json meta{{"ts_ms", env.ts_ms}, {"msg_id", env.msg_id}, {"srv", env.srv}};
  Compound c;
  if (env.payload.contains("objects") && env.payload["objects"].is_array()) {
    meta["occluded"] = env.payload.value("occluded", Json::array());
    c.fields["objects"] = Value(objects_from_json(env.payload["objects"]));
  } else {
    c.fields["payload"] = Value(env.payload);
  }
  c.fields["meta"] = Value(meta);
  return Value(std::move(c));
}

inline const OnlineParams& require_online(const Node& n, const OnlineParams* online) {
  if (!online) throw Error("MISSING_PLAN", "node '" + n.id + "' has no online parameters");
  return *online;
}

inline const Trajectory& require_trajectory(const Node& n, const OnlineParams* online) {
  const OnlineParams& p = require_online(n, online);
  if (!p.trajectory) throw Error("MISSING_PLAN", "node '" + n.id + "' has no planned trajectory");
  return *p.trajectory;
}

/// Map update of a node given its port decision. Shared by execute, simulate and the planner.
/// CallService and ExceptionProbe are handled by their callers (they need a response).
inline std::vector<Mutation> node_effects(const Node& n, const VariableMap& map, const OnlineParams* online,
                                          const FunctorRegistry& functors) {
  const std::string jps(vars::kJps), picked(vars::kPickedObjects), placed(vars::kPlacedObjects);
  switch (n.kind) {
    case NodeKind::MoveJoint:
    case NodeKind::RelativeMove:
    case NodeKind::MoveToObjectPose:
    case NodeKind::MoveTrajectoryByVariable: return {Mutation::set(jps, to_vector(require_trajectory(n, online).back()))};
    case NodeKind::MoveToPick: {
      const Trajectory& t = require_trajectory(n, online);
      const DecisionRecord& d = online->decisions;
      const std::string pvar = pick_perception_var(n);
      const Value& perception = map.at(pvar);
      const Pose flange = fk_unchecked(cell_of(map).robot, t.back());
      ObjectSet held = map.at(picked).as_objects();
      std::set<std::string> ids(d.objects.begin(), d.objects.end());
      for (const auto& id : d.objects) {
        const ObjectSet& objs = detail::perception_objects(perception);
        auto it = std::find_if(objs.begin(), objs.end(), [&](const WorldObject& o) { return o.id == id; });
        if (it == objs.end()) throw Error("UNDEFINED_OBJECT", "object '" + id + "' is not in '" + pvar + "'");
        WorldObject o = *it;
        o.pose = flange.inverse() * o.pose;
        held.push_back(std::move(o));
      }
      std::vector<Mutation> m{Mutation::set(jps, to_vector(t.back())), Mutation::set(pvar, without_objects(perception, ids)),
                              Mutation::set(picked, Value(std::move(held)))};
      if (d.tool >= 0) m.push_back(Mutation::set(std::string(vars::kActiveTool), d.tool));
      return m;
    }
    case NodeKind::PalletizationMove: {
      const Trajectory& t = require_trajectory(n, online);
      const std::string pvar = n.params.at("pallet_var").get<std::string>();
      const ObjectSet& held = map.at(picked).as_objects();
      if (held.empty()) throw Error("NOTHING_HELD", "PalletizationMove '" + n.id + "' without a picked object");
      const PalletState s = pack(pallet_from_json(map.at(pvar).as_tree()), held.front().id, footprint_of(held.front().polygon));
      return {Mutation::set(jps, to_vector(t.back())), Mutation::set(pvar, Value(to_json(s)))};
    }
    case NodeKind::PlaceObject: {
      const Pose flange = fk_unchecked(cell_of(map).robot, jps_of(map));
      ObjectSet out = map.at(placed).as_objects();
      for (auto o : map.at(picked).as_objects()) {
        o.pose = flange * o.pose;
        out.push_back(std::move(o));
      }
      return {Mutation::set(picked, ObjectSet{}), Mutation::set(placed, Value(std::move(out)))};
    }
    case NodeKind::SetVariable:
      return {Mutation::set(n.params.at("var").get<std::string>(), value_from_json(n.params.at("value")))};
    case NodeKind::FunctorVariableMutation:
      return functors.at(n.params.at("functor").get<std::string>()).eval(map, n.params.value("args", Json::object()));
    default: return {};
  }
}

inline std::string counter_port(const Node& n, const VariableMap& map) {
  const Value& v = map.at(n.params.at("var").get<std::string>());
  if (!v.is_numeric()) throw Error("TYPE_MISMATCH", "CounterBranch variable is not numeric");
  return v.as_float() < n.params.at("threshold").get<double>() ? "lt" : "ge";
}

/// First port not flagged as exception (the simulate guess for exception-capable branches).
inline std::string first_regular_port(const Node& n) {
  for (const auto& p : n.ports) {
    if (!p.exception) return p.label;
  }
  return n.ports.empty() ? std::string(kNextPort) : n.ports.front().label;
}

inline std::vector<std::string> object_ids(const ObjectSet& set) {
  std::vector<std::string> out;
  for (const auto& o : set) out.push_back(o.id);
  return out;
}

// ---- execute / simulate ----------------------------------------------------------------

/// Runs one node against the live map. RoutineInvoke is handled by the interpreter.
inline NodeOutcome execute_node(const Node& n, const VariableMap& map, const OnlineParams* online,
                                ServiceRegistry& services, std::uint64_t dyn_id, const FunctorRegistry& functors) {
  NodeOutcome out;
  out.port = n.ports.empty() ? std::string(kNextPort) : n.ports.front().label;
  switch (n.kind) {
    case NodeKind::RoutineEntry:
    case NodeKind::PlanRoutineEntry:
    case NodeKind::RoutineExit:
    case NodeKind::RoutineInvoke: return out;
    case NodeKind::MoveJoint:
    case NodeKind::RelativeMove:
    case NodeKind::MoveToObjectPose:
    case NodeKind::PalletizationMove:
    case NodeKind::MoveTrajectoryByVariable:
    case NodeKind::MoveToPick: {
      const Trajectory& t = require_trajectory(n, online);
      out.mutations = node_effects(n, map, online, functors);
      Json req{{"op", "execute"}, {"trajectory", to_json(t)}};
      if (n.kind == NodeKind::MoveToPick) req["attach"] = online->decisions.objects;
      services.call(kRobotService, std::move(req), dyn_id);
      out.side_effects.push_back(services.log().back());
      return out;
    }
    case NodeKind::PlaceObject: {
      out.mutations = node_effects(n, map, online, functors);
      services.call(kRobotService, Json{{"op", "detach"}, {"ids", object_ids(map.at(vars::kPickedObjects).as_objects())}}, dyn_id);
      out.side_effects.push_back(services.log().back());
      return out;
    }
    case NodeKind::CallService: {
      Json req = n.params.value("request", Json::object());
      if (n.params.contains("request_var")) req = to_json(map.at(n.params["request_var"].get<std::string>()));
      const RpcEnvelope resp = services.call(n.params.at("srv").get<std::string>(), std::move(req), dyn_id);
      out.side_effects.push_back(services.log().back());
      out.mutations.push_back(Mutation::set(n.params.at("response_save_var").get<std::string>(), response_value(resp)));
      return out;
    }
    case NodeKind::SetVariable:
    case NodeKind::FunctorVariableMutation: out.mutations = node_effects(n, map, online, functors); return out;
    case NodeKind::CounterBranch: out.port = counter_port(n, map); return out;
    case NodeKind::ExceptionProbe: {
      const auto expected = object_ids(map.at(vars::kPickedObjects).as_objects());
      const RpcEnvelope resp = services.call(n.params.at("srv").get<std::string>(), Json{{"op", "check"}, {"expected", expected}}, dyn_id);
      out.side_effects.push_back(services.log().back());
      const bool ok = resp.payload.value("ok", false);
      std::string fail;
      for (const auto& p : n.ports) {
        if (p.exception) fail = p.label;
      }
      out.port = ok || fail.empty() ? first_regular_port(n) : fail;
      return out;
    }
    case NodeKind::PlannerSelect: out.port = require_online(n, online).decisions.port; return out;
  }
  return out;
}

/// Side-effect-free counterpart used by pre-planning on the shadow map.
inline SimOutcome simulate_node(const Node& n, const VariableMap& shadow, const OnlineParams* online,
                                std::uint64_t dyn_id, const FunctorRegistry& functors) {
  for (const auto& v : read_set(n, functors)) {
    if (shadow.is_poisoned(v)) return SimOutcome::blocked("reads AvailableUponExecution variable", v);
  }
  const std::string port = n.ports.empty() ? std::string(kNextPort) : n.ports.front().label;
  switch (n.kind) {
    case NodeKind::CallService:
      return SimOutcome::ok(port, {Mutation::set(n.params.at("response_save_var").get<std::string>(), Poison{dyn_id})});
    case NodeKind::ExceptionProbe: return SimOutcome::ok(first_regular_port(n), {});
    case NodeKind::CounterBranch: return SimOutcome::ok(counter_port(n, shadow), {});
    case NodeKind::PlannerSelect:
      if (!online) return SimOutcome::blocked("no planned port");
      return SimOutcome::ok(online->decisions.port, {});
    default: break;
  }
  if ((is_movement(n.kind)) && (!online || !online->trajectory)) return SimOutcome::blocked("no planned trajectory");
  try {
    return SimOutcome::ok(port, node_effects(n, shadow, online, functors));
  } catch (const Error& e) {
    return SimOutcome::blocked(e.what());
  }
}

}  // namespace cellscript
