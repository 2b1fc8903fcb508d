#pragma once

// Scene files: cell geometry, objects, services, initial variables, fault schedule.

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cellscript/planner.hpp"

namespace cellscript {

struct Scene {
  std::string id;
  Json doc;
  CellModel cell;
  JointConfig home{};
  ObjectSet objects;
  Json services = Json::object();
  std::map<std::string, Value> variables;
  std::vector<std::uint64_t> falling;  // dyn-ids of robot executions that drop an object
  std::uint64_t rng_seed = 0;
  PlanningCost cost;
  PlanBudget budget;
};

inline Scene scene_from_json(const Json& j) {
  if (!j.is_object()) throw Error("BAD_SCENE", "scene must be a JSON object");
  try {
    Scene s;
    s.doc = j;
    s.id = j.value("id", "");
    s.cell = cell_from_json(j);
    if (j.contains("home")) {
      const auto h = j["home"].get<std::vector<double>>();
      if (h.size() != 3) throw Error("BAD_SCENE", "home must have 3 joints");
      s.home = {h[0], h[1], h[2]};
    }
    if (!within_limits(s.cell.robot, s.home)) throw Error("JOINT_LIMIT", "home configuration outside joint limits");
    std::set<std::string> ids;
    for (const auto& o : j.value("objects", Json::array())) {
      WorldObject w = object_from_json(o);
      validate_object(w);
      if (!ids.insert(w.id).second) throw Error("BAD_SCENE", "duplicate object id '" + w.id + "'");
      s.objects.push_back(std::move(w));
    }
    s.services = j.value("services", Json::object());
    const Json variables = j.value("variables", Json::object());
    for (const auto& [k, v] : variables.items()) {
      if (vars::is_reserved(k)) throw Error("BAD_SCENE", "scene may not set reserved variable '" + k + "'");
      s.variables[k] = value_from_json(v);
    }
    const Json faults = j.value("faults", Json::object());
    s.falling = faults.value("falling_schedule", std::vector<std::uint64_t>{});
    s.rng_seed = j.value("rng_seed", std::uint64_t{0});
    const Json planning = j.value("planning", Json::object());
    s.cost = planning_cost_from_json(planning);
    s.budget = plan_budget_from_json(planning);
    return s;
  } catch (const Json::exception& e) {
    throw Error("BAD_SCENE", e.what());
  }
}

inline Scene load_scene(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("IO_ERROR", "cannot read scene '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  Json j;
  try {
    j = Json::parse(ss.str());
  } catch (const Json::exception& e) {
    throw Error("BAD_SCENE", e.what());
  }
  Scene s = scene_from_json(j);
  if (s.id.empty()) {
    const auto slash = path.find_last_of('/');
    std::string base = slash == std::string::npos ? path : path.substr(slash + 1);
    if (const auto dot = base.rfind('.'); dot != std::string::npos) base.resize(dot);
    s.id = base;
  }
  return s;
}

/// Fresh ground truth plus devices for one run. A robot service is added when the scene has none.
inline std::unique_ptr<ServiceRegistry> make_registry(const Scene& s, std::uint64_t seed) {
  World w;
  w.cell = s.cell;
  w.q = s.home;
  w.free = s.objects;
  auto reg = std::make_unique<ServiceRegistry>(std::move(w), seed);
  for (const auto& [id, cfg] : s.services.items()) reg->add(id, make_service(cfg));
  if (!reg->has(kRobotService)) reg->add(kRobotService, make_service(Json{{"kind", "robot"}}));
  reg->falling().insert(s.falling.begin(), s.falling.end());
  return reg;
}

inline VariableMap initial_map(const Scene& s) {
  VariableMap m = init_map(to_static_env(s.cell), to_vector(s.home));
  std::vector<Mutation> muts;
  for (const auto& [k, v] : s.variables) muts.push_back(Mutation::set(k, v));
  return m.apply(muts);
}

}  // namespace cellscript
