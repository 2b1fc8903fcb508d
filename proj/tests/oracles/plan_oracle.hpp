#pragma once

// Exhaustive binding enumeration for the pick-then-place routine shape
//   MoveToPick(cam) -> MoveToObjectPose(pose) -> PlaceObject
// with joint_line trajectories from the home configuration. Uses only the cell
// primitives (ik, fk, joint_line, collision), never the planner.

#include <random>

#include "cellscript/scene.hpp"

namespace oracle {

using namespace cellscript;

struct Binding {
  std::string object;
  int grasp = 0;
  int pick_branch = 0;
  int symmetry = 0;
  int place_branch = 0;
  double score = 0;
  friend bool operator==(const Binding&, const Binding&) = default;
};

inline SceneState scene_without(const Scene& s, const std::string& skip) {
  SceneState sc;
  sc.obstacles = s.cell.obstacles;
  for (const auto& o : s.objects) {
    if (o.id != skip) sc.obstacles.push_back({"object:" + o.id, transform(o.polygon, o.pose)});
  }
  return sc;
}

inline std::vector<Binding> enumerate_bindings(const Scene& s, const Pose& place) {
  std::vector<Binding> out;
  const RobotModel& robot = s.cell.robot;
  const Tool& tool = s.cell.tool(0);
  TrajectoryConfig cfg;
  for (const auto& o : s.objects) {
    if (!s.cell.container.empty() && !point_in_convex(s.cell.container, {o.pose.x, o.pose.y})) continue;
    const SceneState others = scene_without(s, o.id);
    const CollisionChecker pick_checker(robot, others, s.cell.margin);
    for (std::size_t g = 0; g < o.grasps.size(); ++g) {
      if (o.grasps[g].tool_index != 0) continue;
      const Pose flange = o.pose * o.grasps[g].grasp_pose_in_object * tool.tcp_offset.inverse();
      const auto picks = ik(robot, flange);
      for (std::size_t b1 = 0; b1 < picks.size(); ++b1) {
        if (!joint_line(s.home, picks[b1], cfg, pick_checker).ok()) continue;
        WorldObject held = o;
        held.pose = fk(robot, picks[b1]).inverse() * o.pose;
        SceneState carry = others;
        carry.attached = {held};
        const CollisionChecker place_checker(robot, carry, s.cell.margin);
        const int k = std::max(1, o.symmetry_order);
        for (int sym = 0; sym < k; ++sym) {
          const Pose target = place * Pose{0, 0, 2.0 * kPi * sym / k} * held.pose.inverse();
          const auto places = ik(robot, target);
          for (std::size_t b2 = 0; b2 < places.size(); ++b2) {
            if (!joint_line(picks[b1], places[b2], cfg, place_checker).ok()) continue;
            out.push_back({o.id, static_cast<int>(g), static_cast<int>(b1), sym, static_cast<int>(b2), o.grasps[g].score});
          }
        }
      }
    }
  }
  return out;
}

/// Best-scored grasp with its first collision-free pick, ignoring what follows.
/// Returns whether any placement works from there.
inline bool greedy_succeeds(const Scene& s, const Pose& place) {
  const auto all = enumerate_bindings(s, place);
  double best = -1;
  const WorldObject* bo = nullptr;
  int bg = -1;
  for (const auto& o : s.objects) {
    for (std::size_t g = 0; g < o.grasps.size(); ++g) {
      const Pose flange = o.pose * o.grasps[g].grasp_pose_in_object * s.cell.tool(0).tcp_offset.inverse();
      const auto picks = ik(s.cell.robot, flange);
      const CollisionChecker c(s.cell.robot, scene_without(s, o.id), s.cell.margin);
      bool reachable = false;
      for (const auto& q : picks) reachable = reachable || joint_line(s.home, q, TrajectoryConfig{}, c).ok();
      if (reachable && o.grasps[g].score > best) {
        best = o.grasps[g].score;
        bo = &o;
        bg = static_cast<int>(g);
      }
    }
  }
  if (!bo) return false;
  return std::any_of(all.begin(), all.end(), [&](const Binding& b) { return b.object == bo->id && b.grasp == bg; });
}

// ---- random small scenes ----------------------------------------------------------------

struct PlanCase {
  Json scene;
  Pose place;
};

inline Json base_cell() {
  return Json::parse(R"({
    "robot": {"links": [1.0, 0.8, 0.2], "widths": [0.04, 0.04, 0.04]},
    "tools": [{"index": 0, "name": "jaw", "tcp_offset": [0.05, 0.0, 0.0]}],
    "obstacles": [{"id": "table", "polygon": [[0.6, -0.55], [1.8, -0.55], [1.8, -0.5], [0.6, -0.5]]}],
    "container": [[0.7, -0.5], [1.7, -0.5], [1.7, -0.3], [0.7, -0.3]],
    "home": [0.0, 0.8, -0.8],
    "services": {"cam": {"kind": "perception"}}
  })");
}

inline double round_to(double v, double q) { return std::round(v / q) * q; }

inline PlanCase random_plan_case(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto uni = [&](double a, double b) { return round_to(a + (b - a) * u(rng), 0.001); };
  PlanCase c;
  c.scene = base_cell();
  const int n = 1 + static_cast<int>(u(rng) * 3) % 3;
  std::vector<std::pair<double, double>> spans;
  Json objects = Json::array();
  for (int i = 0; i < n; ++i) {
    const double w = uni(0.04, 0.12), h = uni(0.04, 0.1);
    double x = 0;
    bool ok = false;
    for (int t = 0; t < 50 && !ok; ++t) {
      x = uni(0.78, 1.62);
      ok = std::all_of(spans.begin(), spans.end(), [&](auto& s) { return x + w / 2 + 0.01 < s.first || x - w / 2 - 0.01 > s.second; });
    }
    if (!ok) break;
    spans.emplace_back(x - w / 2, x + w / 2);
    Json grasps = Json::array();
    const int ng = 1 + static_cast<int>(u(rng) * 4) % 4;
    for (int g = 0; g < ng; ++g) {
      grasps.push_back({{"tool", 0}, {"pose", {uni(-w / 4, w / 4), h / 2, -kPi / 2 + uni(-0.4, 0.4)}}, {"score", round_to(u(rng), 0.01)}});
    }
    const int ks[] = {1, 2, 4};
    objects.push_back({{"id", std::string(1, static_cast<char>('A' + i))},
                       {"type", "box"},
                       {"polygon", {{-w / 2, -h / 2}, {w / 2, -h / 2}, {w / 2, h / 2}, {-w / 2, h / 2}}},
                       {"pose", {x, -0.5 + h / 2 + 0.005, 0.0}},
                       {"k", ks[static_cast<int>(u(rng) * 3) % 3]},
                       {"grasps", grasps}});
  }
  c.scene["objects"] = objects;
  const int nobs = static_cast<int>(u(rng) * 3) % 3;
  for (int i = 0; i < nobs; ++i) {
    const double w = uni(0.05, 0.5), h = uni(0.03, 0.3);
    const double x = uni(-1.2, 1.8), y = uni(-0.25, 1.2);
    c.scene["obstacles"].push_back({{"id", "wall" + std::to_string(i)},
                                    {"polygon", {{x - w / 2, y - h / 2}, {x + w / 2, y - h / 2}, {x + w / 2, y + h / 2}, {x - w / 2, y + h / 2}}}});
  }
  c.place = {uni(-1.3, -0.3), uni(-0.3, 1.0), uni(-kPi, kPi)};
  return c;
}

}  // namespace oracle
