#pragma once

// Task and motion planning for one plan-routine invocation: skeleton expansion,
// choice points, and a depth-first backtracking search with the motion
// generators as the continuous sampler.

#include <chrono>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cellscript/nodes.hpp"

namespace cellscript {

/// Modeled planning cost on the simulated clock.
struct PlanningCost {
  double base_ms = 20.0;
  double per_motion_ms = 2.0;
  double per_rrt_iter_ms = 0.002;
  double inflate_ms = 0.0;
};

struct PlanBudget {
  double time_ms = 2000.0;
  std::size_t max_candidates = 5000;
};

inline PlanningCost planning_cost_from_json(const Json& j, PlanningCost c = {}) {
  c.base_ms = j.value("base_ms", c.base_ms);
  c.per_motion_ms = j.value("per_motion_ms", c.per_motion_ms);
  c.per_rrt_iter_ms = j.value("per_rrt_iter_ms", c.per_rrt_iter_ms);
  c.inflate_ms = j.value("inflate_ms", c.inflate_ms);
  if (c.base_ms < 0 || c.per_motion_ms < 0 || c.per_rrt_iter_ms < 0 || c.inflate_ms < 0) {
    throw Error("BAD_PARAM", "planning costs must be non-negative");
  }
  return c;
}

inline PlanBudget plan_budget_from_json(const Json& j, PlanBudget b = {}) {
  b.time_ms = j.value("budget_ms", b.time_ms);
  b.max_candidates = j.value("max_candidates", b.max_candidates);
  if (!(b.time_ms > 0) || b.max_candidates == 0) throw Error("BAD_PARAM", "planning budget must be positive");
  return b;
}

// ---- skeletons ---------------------------------------------------------------------------

struct Skeleton {
  std::vector<std::string> actions;          // node ids in execution order, entry and exit excluded
  std::map<std::string, std::string> ports;  // port taken at every branch node
  std::vector<std::string> provenance;       // "node:port" per PlannerSelect decision
};

struct ExpandResult {
  std::vector<Skeleton> skeletons;
  std::string blocked_var;  // non-empty: BlockedOnExecution
  std::uint64_t blocked_origin = 0;
  bool blocked() const { return !blocked_var.empty(); }
};

/// Every variable the planner may read for this routine: the nodes' read-sets plus the
/// perception variables (their objects are obstacles).
inline std::vector<std::string> plan_read_set(const Routine& r, const VariableMap& m, const FunctorRegistry& f) {
  std::set<std::string> names;
  for (const auto& n : r.nodes) {
    for (auto& v : read_set(n, f)) names.insert(std::move(v));
  }
  for (const auto& [k, _] : m.entries()) {
    if (k.size() > 11 && k.compare(k.size() - 11, 11, "_perception") == 0) names.insert(k);
  }
  return {names.begin(), names.end()};
}

namespace detail {

inline void expand_from(const Routine& r, const std::string& nid, VariableMap sym, Skeleton sk, const FunctorRegistry& f,
                        ExpandResult& out) {
  const Node& n = r.at(nid);
  auto follow = [&](const std::string& port, VariableMap m, Skeleton s) {
    if (auto to = r.next(nid, port)) expand_from(r, *to, std::move(m), std::move(s), f, out);
  };
  if (out.blocked()) return;
  switch (n.kind) {
    case NodeKind::RoutineExit: out.skeletons.push_back(std::move(sk)); return;
    case NodeKind::PlanRoutineEntry:
    case NodeKind::RoutineEntry: follow(kNextPort, std::move(sym), std::move(sk)); return;
    case NodeKind::PlannerSelect:
      sk.actions.push_back(nid);
      for (const auto& p : n.ports) {
        Skeleton s = sk;
        s.ports[nid] = p.label;
        s.provenance.push_back(nid + ":" + p.label);
        follow(p.label, sym, std::move(s));
      }
      return;
    case NodeKind::CounterBranch: {
      const std::string var = n.params.at("var").get<std::string>();
      if (sym.is_poisoned(var)) {
        out.blocked_var = var;
        out.blocked_origin = sym.at(var).as_poison().origin;
        return;
      }
      const std::string port = counter_port(n, sym);
      sk.actions.push_back(nid);
      sk.ports[nid] = port;
      follow(port, std::move(sym), std::move(sk));
      return;
    }
    case NodeKind::ExceptionProbe: {
      const std::string port = first_regular_port(n);
      sk.actions.push_back(nid);
      sk.ports[nid] = port;
      follow(port, std::move(sym), std::move(sk));
      return;
    }
    case NodeKind::CallService:
      sk.actions.push_back(nid);
      sym = sym.poison(n.params.at("response_save_var").get<std::string>(), 0);
      follow(kNextPort, std::move(sym), std::move(sk));
      return;
    case NodeKind::SetVariable:
    case NodeKind::FunctorVariableMutation:
      for (const auto& v : read_set(n, f)) {
        if (sym.is_poisoned(v)) {
          out.blocked_var = v;
          out.blocked_origin = sym.at(v).as_poison().origin;
          return;
        }
      }
      sk.actions.push_back(nid);
      sym = sym.apply(node_effects(n, sym, nullptr, f));
      follow(kNextPort, std::move(sym), std::move(sk));
      return;
    default:
      sk.actions.push_back(nid);
      follow(kNextPort, std::move(sym), std::move(sk));
      return;
  }
}

}  // namespace detail

/// Skeletons of a plan-routine: dataflow branches resolved on the snapshot, one skeleton per
/// PlannerSelect port combination, exception ports pruned.
inline ExpandResult expand_skeletons(const Routine& r, const VariableMap& snapshot, const FunctorRegistry& f) {
  ExpandResult out;
  for (const auto& v : plan_read_set(r, snapshot, f)) {
    if (snapshot.is_poisoned(v)) {
      out.blocked_var = v;
      out.blocked_origin = snapshot.at(v).as_poison().origin;
      return out;
    }
  }
  detail::expand_from(r, r.entry, snapshot.as_shadow(), Skeleton{}, f, out);
  if (out.blocked()) out.skeletons.clear();
  return out;
}

// ---- planning state helpers -------------------------------------------------------------

/// Objects known to be lying in the cell: union of all perception variables (by id).
inline ObjectSet known_free_objects(const VariableMap& m) {
  ObjectSet out;
  std::set<std::string> seen;
  for (const auto& [k, v] : m.entries()) {
    if (k.size() <= 11 || k.compare(k.size() - 11, 11, "_perception") != 0) continue;
    if (v.kind() != ValueKind::Objects && v.kind() != ValueKind::Compound) continue;
    if (v.kind() == ValueKind::Compound && !v.as_compound().contains("objects")) continue;
    for (const auto& o : detail::perception_objects(v)) {
      if (seen.insert(o.id).second) out.push_back(o);
    }
  }
  return out;
}

/// Collision scene for a planning state: fixed obstacles, placed and free objects, held objects.
inline SceneState planning_scene(const VariableMap& m, const CellModel& cell, const std::set<std::string>& exclude = {}) {
  SceneState s;
  s.obstacles = cell.obstacles;
  for (const auto& o : m.at(vars::kPlacedObjects).as_objects()) s.obstacles.push_back({"placed:" + o.id, transform(o.polygon, o.pose)});
  for (const auto& o : known_free_objects(m)) {
    if (!exclude.count(o.id)) s.obstacles.push_back({"object:" + o.id, transform(o.polygon, o.pose)});
  }
  s.attached = m.at(vars::kPickedObjects).as_objects();
  return s;
}

inline TrajectoryMethod default_method(NodeKind k) {
  return k == NodeKind::RelativeMove ? TrajectoryMethod::EeLine : TrajectoryMethod::JointLine;
}

inline TrajectoryConfig node_trajectory_config(const Node& n) {
  TrajectoryConfig fallback;
  fallback.method = default_method(n.kind);
  if (!n.params.contains("trajectory_config")) return fallback;
  return trajectory_config_from_json(n.params["trajectory_config"], fallback.method);
}

/// One discrete binding of a movement node: decisions plus its pose (or joint) target.
struct Binding {
  DecisionRecord d;
  std::string label;
  bool joint_target = false;
  JointConfig q{};  // when joint_target
  Pose flange;      // otherwise
  std::set<std::string> exclude;
};

struct BindingDomain {
  std::string cls;  // choice-point class of the outer decision
  std::vector<Binding> bindings;
  std::string empty_reason;
};

inline Pose object_frame_center(const Polygon& poly) {
  const Aabb b = bounds(poly);
  return {(b.lo.x + b.hi.x) / 2, (b.lo.y + b.hi.y) / 2, 0.0};
}

namespace detail {

inline void add_symmetric(BindingDomain& dom, const Pose& object_target, const WorldObject& held, DecisionRecord base,
                          const std::string& label) {
  const int k = std::max(1, held.symmetry_order);
  const std::size_t first = dom.bindings.size();
  for (int s = 0; s < k; ++s) {
    Binding b;
    b.d = base;
    b.d.symmetry = s;
    b.label = label + "s" + std::to_string(s);
    b.flange = object_target * rotation(2.0 * kPi * s / k) * held.pose.inverse();
    bool dup = false;
    for (std::size_t i = first; i < dom.bindings.size(); ++i) dup = dup || approx_equal(dom.bindings[i].flange, b.flange);
    if (!dup) dom.bindings.push_back(std::move(b));
  }
}

}  // namespace detail

/// Outer discrete domain of a movement node in the given state, in search order.
inline BindingDomain binding_domain(const Node& n, const VariableMap& m, const CellModel& cell) {
  BindingDomain dom;
  const ObjectSet& held = m.at(vars::kPickedObjects).as_objects();
  switch (n.kind) {
    case NodeKind::MoveJoint: {
      dom.cls = "none";
      Binding b;
      b.joint_target = true;
      const Json& t = n.params.at("target");
      b.q = {t[0].get<double>(), t[1].get<double>(), t[2].get<double>()};
      b.label = "target";
      dom.bindings.push_back(std::move(b));
      return dom;
    }
    case NodeKind::RelativeMove: {
      dom.cls = "none";
      Binding b;
      b.flange = fk_unchecked(cell.robot, jps_of(m)) * pose_from_json(n.params.at("offset"));
      b.label = "offset";
      dom.bindings.push_back(std::move(b));
      return dom;
    }
    case NodeKind::MoveToPick: {
      dom.cls = "grasp_candidate";
      const std::string pvar = pick_perception_var(n);
      const Json filters = n.params.value("filters", Json::object());
      FilterSpec spec = filter_from_json(filters);
      const bool any_tool = filters.contains("tool_index") && filters["tool_index"].is_string();
      const int active = static_cast<int>(m.at(vars::kActiveTool).as_int());
      if (!filters.contains("tool_index")) spec.tool_index = active;
      if (!held.empty()) {
        dom.empty_reason = "gripper already holds objects";
        return dom;
      }
      auto cands = grasp_filter(m.at(pvar), spec);
      std::vector<int> tools;
      for (const auto& c : cands) {
        if (cell.has_tool(c.tool) && std::find(tools.begin(), tools.end(), c.tool) == tools.end()) tools.push_back(c.tool);
      }
      // Tool selection order: active tool first, then ascending index.
      std::sort(tools.begin(), tools.end(), [&](int a, int b) { return (a == active) != (b == active) ? a == active : a < b; });
      if (any_tool && tools.size() > 1) dom.cls = "tool_select";
      const ObjectSet& objs = detail::perception_objects(m.at(pvar));
      for (int tool : tools) {
        for (const auto& c : cands) {
          if (c.tool != tool) continue;
          const WorldObject& o = *std::find_if(objs.begin(), objs.end(), [&](const WorldObject& x) { return x.id == c.objects.front(); });
          Binding b;
          b.d.objects = c.objects;
          b.d.grasp = c.grasp;
          b.d.tool = tool;
          b.flange = flange_for_tcp(o.pose * o.grasps[static_cast<std::size_t>(c.grasp)].grasp_pose_in_object, cell.tool(tool));
          b.exclude.insert(c.objects.begin(), c.objects.end());
          b.label = c.objects.front() + "/g" + std::to_string(c.grasp) + "/t" + std::to_string(tool);
          dom.bindings.push_back(std::move(b));
        }
      }
      if (dom.bindings.empty()) dom.empty_reason = "no grasp candidates after filters";
      return dom;
    }
    case NodeKind::MoveToObjectPose: {
      dom.cls = "symmetry_index";
      if (held.empty()) {
        dom.empty_reason = "no object held";
        return dom;
      }
      Pose target;
      if (n.params.contains("pose")) {
        target = pose_from_json(n.params["pose"]);
      } else if (n.params["by_type"].contains(held.front().type)) {
        target = pose_from_json(n.params["by_type"][held.front().type]);
      } else {
        dom.empty_reason = "no target pose for type '" + held.front().type + "'";
        return dom;
      }
      detail::add_symmetric(dom, target, held.front(), DecisionRecord{}, "");
      return dom;
    }
    case NodeKind::PalletizationMove: {
      dom.cls = "target_set_element";
      if (held.empty()) {
        dom.empty_reason = "no object held";
        return dom;
      }
      const PalletState s = pallet_from_json(m.at(n.params.at("pallet_var").get<std::string>()).as_tree());
      const auto slots = pallet_next_slots(s, {footprint_of(held.front().polygon)});
      const Pose c = object_frame_center(held.front().polygon);
      for (std::size_t i = 0; i < slots.size(); ++i) {
        DecisionRecord d;
        d.target = static_cast<int>(i);
        const Pose obj{slots[i].pose.x - c.x, slots[i].pose.y - c.y, 0.0};
        detail::add_symmetric(dom, obj, held.front(), d, "slot" + std::to_string(i) + "/");
      }
      if (dom.bindings.empty()) dom.empty_reason = "no free pallet slot";
      return dom;
    }
    default: return dom;
  }
}

/// IK candidates for a binding ordered by joint distance to `from` (elbow-down first on ties).
inline std::vector<std::pair<int, JointConfig>> ik_candidates(const RobotModel& model, const Pose& flange, const JointConfig& from) {
  std::vector<std::pair<int, JointConfig>> out;
  const auto sols = ik(model, flange);
  for (std::size_t i = 0; i < sols.size(); ++i) {
    if (within_limits(model, sols[i])) out.emplace_back(static_cast<int>(i), sols[i]);
  }
  std::stable_sort(out.begin(), out.end(), [&](const auto& a, const auto& b) {
    return joint_distance(a.second, from) < joint_distance(b.second, from);
  });
  return out;
}

// ---- choice points -------------------------------------------------------------------------

struct ChoicePoint {
  std::string cls;  // grasp_candidate | ik_branch | symmetry_index | target_set_element | tool_select | planner_select_port
  std::string node;
  std::vector<std::string> domain;
  std::vector<std::size_t> depends_on;  // indices of earlier choice points
};

struct ChoicePointGraph {
  std::vector<ChoicePoint> points;
  bool dead = false;  // some domain was empty on the representative pass
  std::string dead_reason;
};

/// Choice points of a skeleton. Domains downstream of a decision are shown for the first
/// candidate of every earlier point; the search recomputes them per binding.
inline ChoicePointGraph build_choice_points(const Routine& r, const Skeleton& sk, const VariableMap& snapshot,
                                            const FunctorRegistry& f) {
  ChoicePointGraph g;
  VariableMap m = snapshot.as_shadow();
  const CellModel cell = cell_of(snapshot);
  std::optional<std::size_t> last_grasp, last_ik;
  for (const auto& nid : sk.actions) {
    const Node& n = r.at(nid);
    if (n.kind == NodeKind::PlannerSelect) {
      g.points.push_back({"planner_select_port", nid, {sk.ports.at(nid)}, {}});
      continue;
    }
    if (n.kind == NodeKind::CallService) {
      m = m.poison(n.params.at("response_save_var").get<std::string>(), 0);
      continue;
    }
    if (!is_movement(n.kind) || n.kind == NodeKind::MoveTrajectoryByVariable) {
      if (n.kind == NodeKind::SetVariable || n.kind == NodeKind::FunctorVariableMutation || n.kind == NodeKind::PlaceObject) {
        m = m.apply(node_effects(n, m, nullptr, f));
      }
      continue;
    }
    const BindingDomain dom = binding_domain(n, m, cell);
    if (dom.bindings.empty()) {
      g.dead = true;
      g.dead_reason = nid + ": " + dom.empty_reason;
      return g;
    }
    std::vector<std::size_t> deps;
    if (dom.cls != "none") {
      ChoicePoint cp{dom.cls, nid, {}, {}};
      if (dom.cls == "tool_select") {
        std::set<int> seen;
        for (const auto& b : dom.bindings) {
          if (seen.insert(b.d.tool).second) cp.domain.push_back("tool" + std::to_string(b.d.tool));
        }
        g.points.push_back(cp);
        cp = {"grasp_candidate", nid, {}, {g.points.size() - 1}};
      }
      for (const auto& b : dom.bindings) cp.domain.push_back(b.label);
      if (dom.cls == "symmetry_index" || dom.cls == "target_set_element") {
        if (last_grasp) cp.depends_on.push_back(*last_grasp);
      }
      g.points.push_back(cp);
      if (n.kind == NodeKind::MoveToPick) last_grasp = g.points.size() - 1;
      deps.push_back(g.points.size() - 1);
    } else if (n.kind == NodeKind::RelativeMove && last_ik) {
      deps.push_back(*last_ik);
    }
    const Binding& rep = dom.bindings.front();
    std::vector<std::pair<int, JointConfig>> iks;
    if (rep.joint_target) {
      iks.emplace_back(-1, rep.q);
    } else {
      iks = ik_candidates(cell.robot, rep.flange, jps_of(m));
      ChoicePoint cp{"ik_branch", nid, {}, deps};
      for (const auto& [branch, _] : iks) cp.domain.push_back(branch == 0 ? "elbow_down" : "elbow_up");
      if (iks.empty()) {
        g.dead = true;
        g.dead_reason = nid + ": target unreachable";
        return g;
      }
      g.points.push_back(cp);
      last_ik = g.points.size() - 1;
    }
    OnlineParams p;
    p.decisions = rep.d;
    Trajectory t;
    t.waypoints = {jps_of(m), iks.front().second};
    t.durations = {0.0};
    p.trajectory = t;
    m = m.apply(node_effects(n, m, &p, f));
  }
  return g;
}

/// Choice-point graph in DOT format (one cluster per skeleton).
inline std::string choice_points_dot(const Routine& r, const std::vector<Skeleton>& sks, const VariableMap& snapshot,
                                     const FunctorRegistry& f) {
  std::ostringstream os;
  os << "digraph choice_points {\n  rankdir=LR;\n  node [shape=box, fontname=\"monospace\"];\n";
  for (std::size_t s = 0; s < sks.size(); ++s) {
    const auto g = build_choice_points(r, sks[s], snapshot, f);
    os << "  subgraph cluster_" << s << " {\n    label=\"skeleton " << s << ": " << join(sks[s].actions, " ") << "\";\n";
    for (std::size_t i = 0; i < g.points.size(); ++i) {
      const auto& cp = g.points[i];
      os << "    s" << s << "_" << i << " [label=\"" << cp.node << "\\n" << cp.cls << " |" << cp.domain.size() << "|\"];\n";
      if (i > 0) os << "    s" << s << "_" << (i - 1) << " -> s" << s << "_" << i << " [style=dotted];\n";
      for (auto d : cp.depends_on) os << "    s" << s << "_" << d << " -> s" << s << "_" << i << ";\n";
    }
    if (g.dead) os << "    s" << s << "_dead [label=\"dead: " << g.dead_reason << "\", shape=octagon];\n";
    os << "  }\n";
  }
  os << "}\n";
  return os.str();
}

// ---- solve ------------------------------------------------------------------------------

struct NodeFailure {
  std::string node;
  std::string cls;
  std::size_t bindings = 0;                   // outer candidates tried
  std::map<std::string, std::size_t> reasons;  // per-binding outcome counts
  std::string empty_reason;
};

struct PlanFailure {
  std::string kind;  // exhausted | budget_time | budget_candidates | blocked | no_skeleton
  std::vector<NodeFailure> nodes;
  std::string blocked_var;
  double budget_ms = 0;
  std::size_t candidates = 0;
};

struct PlanStats {
  std::size_t candidates = 0;
  std::size_t backtracks = 0;
  std::size_t motions = 0;
  std::size_t rrt_iterations = 0;
  double time_ms = 0;  // modeled
  double wall_ms = 0;
  int skeleton = -1;
};

struct PlanResult {
  std::optional<PlanParams> params;
  PlanStats stats;
  PlanFailure failure;
  bool ok() const { return params.has_value(); }
};

inline Json to_json(const PlanFailure& f) {
  Json nodes = Json::array();
  for (const auto& n : f.nodes) {
    nodes.push_back(Json{{"node", n.node}, {"class", n.cls}, {"tried", n.bindings}, {"reasons", n.reasons},
                         {"empty", n.empty_reason}});
  }
  return Json{{"kind", f.kind}, {"nodes", nodes}, {"blocked_var", f.blocked_var}, {"candidates", f.candidates}};
}

inline Json to_json(const PlanStats& s) {
  return Json{{"candidates", s.candidates}, {"backtracks", s.backtracks}, {"motions", s.motions},
              {"rrt_iterations", s.rrt_iterations}, {"time_ms", s.time_ms}, {"skeleton", s.skeleton}};
}

namespace detail {

inline std::string class_noun(const std::string& cls) {
  if (cls == "grasp_candidate" || cls == "tool_select") return "grasp";
  if (cls == "symmetry_index") return "symmetry";
  if (cls == "target_set_element") return "pallet slot";
  return "target";
}

class Solver {
 public:
  Solver(const Routine& r, const FunctorRegistry& f, PlanBudget budget, PlanningCost cost, std::uint64_t seed)
      : r_(r), f_(f), budget_(budget), cost_(cost), seed_(seed) {}

  PlanResult run(const std::vector<Skeleton>& sks, const VariableMap& snapshot) {
    const auto t0 = std::chrono::steady_clock::now();
    PlanResult res;
    cell_ = cell_of(snapshot);
    for (std::size_t s = 0; s < sks.size() && !out_of_budget_; ++s) {
      PlanParams params;
      if (search(sks[s], 0, snapshot.as_shadow(), params)) {
        res.params = std::move(params);
        stats_.skeleton = static_cast<int>(s);
        break;
      }
    }
    stats_.time_ms = modeled_ms() + cost_.inflate_ms;
    stats_.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    res.stats = stats_;
    if (!res.ok()) {
      res.failure.kind = sks.empty() ? "no_skeleton" : out_of_budget_ ? budget_kind_ : "exhausted";
      res.failure.budget_ms = budget_.time_ms;
      res.failure.candidates = stats_.candidates;
      for (const auto& nid : order_) res.failure.nodes.push_back(failures_[nid]);
    }
    return res;
  }

 private:
  double modeled_ms() const {
    return cost_.base_ms + cost_.per_motion_ms * static_cast<double>(stats_.motions) +
           cost_.per_rrt_iter_ms * static_cast<double>(stats_.rrt_iterations);
  }

  bool spend() {
    if (stats_.candidates >= budget_.max_candidates) {
      out_of_budget_ = true;
      budget_kind_ = "budget_candidates";
    } else if (modeled_ms() > budget_.time_ms) {
      out_of_budget_ = true;
      budget_kind_ = "budget_time";
    }
    if (out_of_budget_) return false;
    ++stats_.candidates;
    return true;
  }

  NodeFailure& failure(const Node& n, const std::string& cls) {
    if (!failures_.count(n.id)) order_.push_back(n.id);
    NodeFailure& nf = failures_[n.id];
    nf.node = n.id;
    nf.cls = cls;
    return nf;
  }

  MotionResult motion(const Node& n, const VariableMap& m, const Binding& b, const JointConfig& q, const TrajectoryConfig& cfg) {
    const CollisionChecker checker(cell_.robot, planning_scene(m, cell_, b.exclude), cell_.margin);
    const JointConfig q0 = jps_of(m);
    ++stats_.motions;
    const std::uint64_t mseed = mix_seed(seed_, stats_.motions);
    MotionResult res;
    if (cfg.method == TrajectoryMethod::EeLine && !b.joint_target) {
      res = ee_line(fk_unchecked(cell_.robot, q0), b.flange, cfg, checker, q0);
      if (res.ok()) {
        if (max_joint_delta(res.trajectory->back(), q) > 1e-6) return MotionResult::fail("branch_jump", 1.0);
        res.trajectory->waypoints.back() = q;
        res.trajectory->durations.back() = segment_duration(res.trajectory->waypoints[res.trajectory->waypoints.size() - 2], q, cfg);
      }
    } else {
      res = plan_joint_motion(q0, q, cfg, checker, mseed);
    }
    stats_.rrt_iterations += res.iterations;
    (void)n;
    return res;
  }

  bool search(const Skeleton& sk, std::size_t i, const VariableMap& m, PlanParams& out) {
    if (i == sk.actions.size()) return true;
    const Node& n = r_.at(sk.actions[i]);
    switch (n.kind) {
      case NodeKind::PlannerSelect: {
        OnlineParams p;
        p.decisions.port = sk.ports.at(n.id);
        out[n.id] = p;
        if (search(sk, i + 1, m, out)) return true;
        out.erase(n.id);
        return false;
      }
      case NodeKind::CallService:
        return search(sk, i + 1, m.poison(n.params.at("response_save_var").get<std::string>(), 0), out);
      case NodeKind::SetVariable:
      case NodeKind::FunctorVariableMutation:
      case NodeKind::PlaceObject: return search(sk, i + 1, m.apply(node_effects(n, m, nullptr, f_)), out);
      case NodeKind::MoveTrajectoryByVariable: return by_variable(sk, i, n, m, out);
      default: break;
    }
    if (!is_movement(n.kind)) return search(sk, i + 1, m, out);

    const TrajectoryConfig cfg = node_trajectory_config(n);
    const BindingDomain dom = binding_domain(n, m, cell_);
    NodeFailure& nf = failure(n, dom.cls);
    if (dom.bindings.empty()) {
      nf.empty_reason = dom.empty_reason;
      return false;
    }
    const JointConfig q0 = jps_of(m);
    for (const Binding& b : dom.bindings) {
      ++failures_[n.id].bindings;
      std::vector<std::pair<int, JointConfig>> iks;
      if (b.joint_target) {
        iks.emplace_back(-1, b.q);
      } else {
        iks = ik_candidates(cell_.robot, b.flange, q0);
      }
      std::string outcome = iks.empty() ? "unreachable" : "";
      for (const auto& [branch, q] : iks) {
        if (!spend()) return false;
        const MotionResult mr = motion(n, m, b, q, cfg);
        if (!mr.ok()) {
          if (outcome != "downstream") outcome = mr.failure.reason;
          continue;
        }
        OnlineParams p;
        p.decisions = b.d;
        p.decisions.ik_branch = branch;
        p.trajectory = *mr.trajectory;
        const VariableMap next = m.apply(node_effects(n, m, &p, f_));
        out[n.id] = p;
        if (search(sk, i + 1, next, out)) return true;
        out.erase(n.id);
        if (out_of_budget_) return false;
        ++stats_.backtracks;
        outcome = "downstream";
      }
      ++failures_[n.id].reasons[outcome];
    }
    return false;
  }

  bool by_variable(const Skeleton& sk, std::size_t i, const Node& n, const VariableMap& m, PlanParams& out) {
    NodeFailure& nf = failure(n, "none");
    ++nf.bindings;
    if (!spend()) return false;
    ++stats_.motions;
    const Value& v = m.at(n.params.at("var").get<std::string>());
    Trajectory t;
    try {
      t = trajectory_from_json(v.kind() == ValueKind::Tree ? v.as_tree() : to_json(v));
    } catch (const std::exception&) {
      ++failures_[n.id].reasons["malformed"];
      return false;
    }
    const TrajectoryConfig cfg = node_trajectory_config(n);
    if (max_joint_delta(t.front(), jps_of(m)) > 1e-9) {
      ++failures_[n.id].reasons["discontinuous"];
      return false;
    }
    const CollisionChecker checker(cell_.robot, planning_scene(m, cell_), cell_.margin);
    if (checker.check(t.front()).hit || !within_limits(cell_.robot, t.back())) {
      ++failures_[n.id].reasons["collision"];
      return false;
    }
    for (std::size_t k = 1; k < t.waypoints.size(); ++k) {
      if (!within_limits(cell_.robot, t.waypoints[k]) || check_segment(checker, t.waypoints[k - 1], t.waypoints[k], cfg.resolution)) {
        ++failures_[n.id].reasons["collision"];
        return false;
      }
    }
    t.waypoints.front() = jps_of(m);
    t.certificate = {cfg.resolution, cell_.margin, true};
    OnlineParams p;
    p.trajectory = t;
    out[n.id] = p;
    if (search(sk, i + 1, m.apply(node_effects(n, m, &p, f_)), out)) return true;
    out.erase(n.id);
    ++failures_[n.id].reasons["downstream"];
    return false;
  }

  const Routine& r_;
  const FunctorRegistry& f_;
  PlanBudget budget_;
  PlanningCost cost_;
  std::uint64_t seed_;
  CellModel cell_;
  PlanStats stats_;
  std::map<std::string, NodeFailure> failures_;
  std::vector<std::string> order_;
  bool out_of_budget_ = false;
  std::string budget_kind_;
};

}  // namespace detail

/// First feasible binding over the skeletons (in order), depth-first with backtracking.
inline PlanResult solve(const Routine& r, const std::vector<Skeleton>& skeletons, const VariableMap& snapshot,
                        const PlanBudget& budget, const PlanningCost& cost, std::uint64_t seed, const FunctorRegistry& f) {
  return detail::Solver(r, f, budget, cost, seed).run(skeletons, snapshot);
}

/// Expansion followed by solve; a blocked expansion is reported as a failure of kind "blocked".
inline PlanResult plan_routine(const Routine& r, const VariableMap& snapshot, const PlanBudget& budget, const PlanningCost& cost,
                               std::uint64_t seed, const FunctorRegistry& f) {
  const ExpandResult ex = expand_skeletons(r, snapshot, f);
  if (ex.blocked()) {
    PlanResult res;
    res.failure.kind = "blocked";
    res.failure.blocked_var = ex.blocked_var;
    res.stats.time_ms = cost.base_ms + cost.inflate_ms;
    return res;
  }
  return solve(r, ex.skeletons, snapshot, budget, cost, seed, f);
}

/// Human-readable summary of a failure reason tree.
inline std::string replan_scope(const PlanFailure& f) {
  auto fmt_ms = [](double v) {
    std::ostringstream os;
    os << v;
    return os.str();
  };
  if (f.kind == "budget_time") {
    return "time budget " + fmt_ms(f.budget_ms) + " ms exhausted after " + std::to_string(f.candidates) + " candidates";
  }
  if (f.kind == "budget_candidates") return "candidate budget exhausted after " + std::to_string(f.candidates) + " candidates";
  if (f.kind == "blocked") return "blocked on AvailableUponExecution variable '" + f.blocked_var + "'";
  if (f.kind == "no_skeleton") return "plan-routine has no path from entry to exit";
  for (const auto& n : f.nodes) {
    if (!n.empty_reason.empty()) return n.empty_reason;
  }
  const NodeFailure* pick = nullptr;
  for (const auto& n : f.nodes) {
    if (n.bindings == 0) continue;
    pick = &n;
    const bool only_downstream = n.reasons.size() == 1 && n.reasons.count("downstream");
    if (!only_downstream) break;
  }
  if (pick) {
    const NodeFailure& n = *pick;
    std::vector<std::pair<std::string, std::size_t>> rs(n.reasons.begin(), n.reasons.end());
    std::stable_sort(rs.begin(), rs.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    std::vector<std::string> parts;
    for (const auto& [k, c] : rs) parts.push_back(std::to_string(c) + " " + k);
    const std::string noun = detail::class_noun(n.cls);
    return "all " + std::to_string(n.bindings) + " " + noun + " candidate" + (n.bindings == 1 ? "" : "s") +
           " infeasible: " + join(parts, ", ");
  }
  return "no feasible binding";
}

}  // namespace cellscript
