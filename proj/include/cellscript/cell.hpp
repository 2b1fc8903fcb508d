#pragma once

// Desk-scale robot cell: static environment, scene state, collision checking
// and grasp-target expansion.

#include <optional>
#include <string>
#include <vector>

#include "cellscript/kinematics.hpp"
#include "cellscript/value.hpp"

namespace cellscript {

struct Tool {
  int index = 0;
  std::string name;
  Polygon polygon;  // flange frame; carried for display, not part of the collision model
  Pose tcp_offset;  // TCP pose in the flange frame
  std::vector<int> do_ports;
};

struct Obstacle {
  std::string id;
  Polygon polygon;  // world frame
};

/// Everything in static_env: robot model, tools, fixed obstacles, safety margin.
struct CellModel {
  RobotModel robot;
  std::vector<Tool> tools;
  std::vector<Obstacle> obstacles;
  double margin = 0.001;
  Polygon container;  // world-frame region observed by the camera; empty means unbounded

  const Tool& tool(int index) const {
    for (const auto& t : tools) {
      if (t.index == index) return t;
    }
    throw Error("UNKNOWN_TOOL", "no tool with index " + std::to_string(index));
  }
  bool has_tool(int index) const {
    for (const auto& t : tools) {
      if (t.index == index) return true;
    }
    return false;
  }
};

// ---- static_env (de)serialization ---------------------------------------------

inline Json robot_to_json(const RobotModel& r) {
  Json limits = Json::array();
  for (const auto& l : r.limits) limits.push_back(Json::array({l.low, l.high}));
  return Json{{"links", r.link_lengths}, {"limits", limits}, {"widths", r.link_widths}, {"base", pose_to_json(r.base)}};
}

inline RobotModel robot_from_json(const Json& j) {
  RobotModel r;
  if (j.contains("links")) r.link_lengths = j["links"].get<std::array<double, 3>>();
  if (j.contains("limits")) {
    for (std::size_t i = 0; i < 3; ++i) r.limits[i] = {j["limits"].at(i).at(0).get<double>(), j["limits"].at(i).at(1).get<double>()};
  }
  if (j.contains("widths")) r.link_widths = j["widths"].get<std::array<double, 3>>();
  if (j.contains("base")) r.base = pose_from_json(j["base"]);
  check_model(r);
  return r;
}

inline Json tool_to_json(const Tool& t) {
  return Json{{"index", t.index},
              {"name", t.name},
              {"polygon", polygon_to_json(t.polygon)},
              {"tcp_offset", pose_to_json(t.tcp_offset)},
              {"do_ports", t.do_ports}};
}

inline Tool tool_from_json(const Json& j, int default_index) {
  Tool t;
  t.index = j.value("index", default_index);
  t.name = j.value("name", "tool" + std::to_string(t.index));
  if (j.contains("polygon")) t.polygon = polygon_from_json(j["polygon"]);
  if (j.contains("tcp_offset")) t.tcp_offset = pose_from_json(j["tcp_offset"]);
  t.do_ports = j.value("do_ports", std::vector<int>{});
  return t;
}

/// Obstacles are given as {id, polygon, pose}; stored transformed to world.
inline Obstacle obstacle_from_json(const Json& j, std::size_t ordinal) {
  Obstacle o;
  o.id = j.value("id", "obstacle" + std::to_string(ordinal));
  const Pose pose = j.contains("pose") ? pose_from_json(j["pose"]) : Pose{};
  o.polygon = transform(polygon_from_json(j.at("polygon")), pose);
  if (!is_valid_convex(o.polygon)) throw Error("BAD_PARAM", "obstacle '" + o.id + "' must be convex and CCW");
  return o;
}

inline Compound to_static_env(const CellModel& cell) {
  Json tools = Json::array();
  for (const auto& t : cell.tools) tools.push_back(tool_to_json(t));
  Json obstacles = Json::array();
  for (const auto& o : cell.obstacles) obstacles.push_back(Json{{"id", o.id}, {"polygon", polygon_to_json(o.polygon)}});
  Compound env;
  env.fields["robot"] = Value(robot_to_json(cell.robot));
  env.fields["tools"] = Value(tools);
  env.fields["obstacles"] = Value(obstacles);
  env.fields["margin"] = Value(cell.margin);
  env.fields["container"] = Value(polygon_to_json(cell.container));
  return env;
}

inline CellModel cell_from_json(const Json& j) {
  CellModel cell;
  if (j.contains("robot")) cell.robot = robot_from_json(j["robot"]);
  int ordinal = 0;
  for (const auto& t : j.value("tools", Json::array())) cell.tools.push_back(tool_from_json(t, ordinal++));
  if (cell.tools.empty()) cell.tools.push_back(Tool{0, "default", {}, Pose{}, {}});
  std::size_t ob = 0;
  for (const auto& o : j.value("obstacles", Json::array())) cell.obstacles.push_back(obstacle_from_json(o, ob++));
  cell.margin = j.value("margin", 0.001);
  if (j.contains("container") && !j["container"].empty()) cell.container = polygon_from_json(j["container"]);
  return cell;
}

inline CellModel cell_from_static_env(const Compound& env) {
  Json j = Json::object();
  for (const auto& [k, v] : env.fields) j[k] = to_json(v);
  return cell_from_json(j);
}

// ---- collision ------------------------------------------------------------------

struct SceneState {
  std::vector<Obstacle> obstacles;  // static, world frame
  ObjectSet free_objects;           // world poses
  ObjectSet attached;               // flange-frame poses
};

struct CollisionReport {
  bool hit = false;
  std::string first;   // robot-side body, e.g. "link3" or "attached:A"
  std::string second;  // environment body, e.g. "wall" or "object:B"

  explicit operator bool() const { return hit; }
};

namespace detail {

struct Body {
  std::string name;
  Polygon shape;
  Aabb box;
};

inline Body make_body(std::string name, Polygon shape) {
  Body b{std::move(name), std::move(shape), {}};
  b.box = bounds(b.shape);
  return b;
}

inline std::vector<Body> environment_bodies(const SceneState& scene) {
  std::vector<Body> env;
  env.reserve(scene.obstacles.size() + scene.free_objects.size());
  for (const auto& o : scene.obstacles) env.push_back(make_body(o.id, o.polygon));
  for (const auto& o : scene.free_objects) env.push_back(make_body("object:" + o.id, transform(o.polygon, o.pose)));
  return env;
}

inline bool bodies_overlap(const Body& a, const Body& b) {
  return a.box.overlaps(b.box) && sat_overlap(a.shape, b.shape);
}

}  // namespace detail

/// Robot bodies at q: three link capsules, then attached objects, all inflated by `margin`.
inline std::vector<detail::Body> robot_bodies(const RobotModel& model, const JointConfig& q,
                                              const ObjectSet& attached, double margin) {
  std::vector<detail::Body> bodies;
  const auto pts = joint_points(model, q);
  for (std::size_t i = 0; i < 3; ++i) {
    bodies.push_back(detail::make_body("link" + std::to_string(i + 1),
                                       capsule_polygon(pts[i], pts[i + 1], model.link_widths[i] / 2 + margin)));
  }
  const Pose flange = fk_unchecked(model, q);
  for (const auto& o : attached) {
    bodies.push_back(detail::make_body("attached:" + o.id, inflate(transform(o.polygon, flange * o.pose), margin)));
  }
  return bodies;
}

namespace detail {

inline CollisionReport collide_with(const std::vector<Body>& robot, const std::vector<Body>& env) {
  for (const auto& r : robot) {
    for (const auto& e : env) {
      if (bodies_overlap(r, e)) return {true, r.name, e.name};
    }
  }
  // Self collision: link1 against link3 and held objects against links 1-2.
  for (std::size_t i = 2; i < robot.size(); ++i) {
    for (std::size_t j = 0; j + 1 < std::min<std::size_t>(i, 3); ++j) {
      if (bodies_overlap(robot[i], robot[j])) return {true, robot[i].name, robot[j].name};
    }
  }
  return {};
}

}  // namespace detail

/// Collision check with closed-set semantics; `margin` inflates the robot side.
inline CollisionReport collide(const RobotModel& model, const JointConfig& q, const SceneState& scene,
                               double margin = 0.001) {
  return detail::collide_with(robot_bodies(model, q, scene.attached, margin), detail::environment_bodies(scene));
}

/// Reusable checker that caches the environment bodies for many configurations.
class CollisionChecker {
 public:
  CollisionChecker(const RobotModel& model, SceneState scene, double margin)
      : model_(model), scene_(std::move(scene)), margin_(margin), env_(detail::environment_bodies(scene_)) {
    double tip = std::max(model_.link_widths[0], std::max(model_.link_widths[1], model_.link_widths[2])) / 2;
    for (const auto& o : scene_.attached) {
      for (const auto& v : transform(o.polygon, o.pose)) tip = std::max(tip, std::hypot(v.x, v.y));
    }
    double reach = tip + margin_;
    for (int j = 2; j >= 0; --j) {
      reach += model_.link_lengths[static_cast<std::size_t>(j)];
      reach_[static_cast<std::size_t>(j)] = reach;
    }
  }

  CollisionReport check(const JointConfig& q) const { return check(q, 0.0); }

  /// Check with every robot body grown by `extra` beyond the margin.
  CollisionReport check(const JointConfig& q, double extra) const {
    ++checks_;
    return detail::collide_with(robot_bodies(model_, q, scene_.attached, margin_ + extra), env_);
  }

  /// Upper bound on how far any robot point moves along the joint-space segment a→b.
  double sweep_bound(const JointConfig& a, const JointConfig& b) const {
    double s = 0;
    for (std::size_t j = 0; j < 3; ++j) s += std::abs(b[j] - a[j]) * reach_[j];
    return s;
  }

  const RobotModel& model() const { return model_; }
  const SceneState& scene() const { return scene_; }
  double margin() const { return margin_; }
  std::size_t checks() const { return checks_; }

 private:
  RobotModel model_;
  SceneState scene_;
  double margin_;
  std::vector<detail::Body> env_;
  std::array<double, 3> reach_{};
  mutable std::size_t checks_ = 0;
};

// ---- grasp targets ----------------------------------------------------------------

struct GraspTarget {
  std::vector<std::string> object_ids;
  Pose flange;  // end-effector (flange) pose in world
  int tool_index = 0;
  int symmetry_index = 0;
  int grasp_index = 0;
  double score = 0.0;
};

/// Flange pose realizing `tcp_world` with the given tool.
inline Pose flange_for_tcp(const Pose& tcp_world, const Tool& tool) { return tcp_world * tool.tcp_offset.inverse(); }

/// k-fold symmetry expansion of every grasp of `tool` for an object placed at
/// `object_pose_target`. Duplicates (within 1e-9) are dropped.
inline std::vector<GraspTarget> expand_targets(const Pose& object_pose_target, const WorldObject& object,
                                               const Tool& tool) {
  std::vector<GraspTarget> out;
  const int k = std::max(1, object.symmetry_order);
  for (int i = 0; i < k; ++i) {
    const Pose sym = object_pose_target * rotation(2.0 * kPi * i / k);
    for (std::size_t g = 0; g < object.grasps.size(); ++g) {
      const GraspAnnotation& grasp = object.grasps[g];
      if (grasp.tool_index != tool.index) continue;
      GraspTarget t;
      t.object_ids.push_back(object.id);
      t.object_ids.insert(t.object_ids.end(), grasp.co_picks.begin(), grasp.co_picks.end());
      t.flange = flange_for_tcp(sym * grasp.grasp_pose_in_object, tool);
      t.tool_index = tool.index;
      t.symmetry_index = i;
      t.grasp_index = static_cast<int>(g);
      t.score = grasp.score;
      bool dup = false;
      for (const auto& e : out) dup = dup || approx_equal(e.flange, t.flange);
      if (!dup) out.push_back(std::move(t));
    }
  }
  return out;
}

}  // namespace cellscript
