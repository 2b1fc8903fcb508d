#pragma once

// Trajectory generators: joint-space line, end-effector line, RRT and shortcut smoothing.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "cellscript/cell.hpp"
#include "cellscript/trajectory_config.hpp"

namespace cellscript {

/// What was checked for a trajectory: sampling resolution (rad), robot-side margin (m), verdict.
struct SafetyCertificate {
  double checked_resolution = 0.0;
  double margin = 0.0;
  bool collision_free = false;
  friend bool operator==(const SafetyCertificate&, const SafetyCertificate&) = default;
};

struct Trajectory {
  std::vector<JointConfig> waypoints;
  std::vector<double> durations;  // seconds, one per segment
  SafetyCertificate certificate;

  const JointConfig& front() const { return waypoints.front(); }
  const JointConfig& back() const { return waypoints.back(); }

  double duration() const {
    double t = 0.0;
    for (double d : durations) t += d;
    return t;
  }
  /// Sum of joint-space L2 segment norms.
  double length() const {
    double s = 0.0;
    for (std::size_t i = 1; i < waypoints.size(); ++i) s += joint_distance(waypoints[i - 1], waypoints[i]);
    return s;
  }
  friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

inline Json to_json(const SafetyCertificate& c) {
  return Json{{"checked_resolution", c.checked_resolution}, {"margin", c.margin}, {"collision_free", c.collision_free}};
}

inline SafetyCertificate certificate_from_json(const Json& j) {
  return {j.at("checked_resolution").get<double>(), j.at("margin").get<double>(), j.at("collision_free").get<bool>()};
}

inline Json to_json(const Trajectory& t) {
  Json wps = Json::array();
  for (const auto& q : t.waypoints) wps.push_back(Json::array({q[0], q[1], q[2]}));
  return Json{{"waypoints", wps}, {"durations", t.durations}, {"certificate", to_json(t.certificate)}};
}

inline Trajectory trajectory_from_json(const Json& j) {
  Trajectory t;
  for (const auto& w : j.at("waypoints")) {
    if (!w.is_array() || w.size() != 3) throw Error("BAD_PARAM", "waypoint must have 3 joints");
    t.waypoints.push_back({w[0].get<double>(), w[1].get<double>(), w[2].get<double>()});
  }
  t.durations = j.value("durations", std::vector<double>{});
  if (j.contains("certificate")) t.certificate = certificate_from_json(j["certificate"]);
  if (t.waypoints.size() < 2) throw Error("BAD_PARAM", "trajectory needs at least 2 waypoints");
  if (t.durations.size() != t.waypoints.size() - 1) throw Error("BAD_PARAM", "one duration per segment required");
  return t;
}

/// Why a generator gave up. `at` is the path parameter in [0, 1] where it happened.
struct Infeasible {
  std::string reason;  // collision | unreachable | branch_jump | singularity | joint_limit | timeout
  double at = 0.0;
  CollisionReport witness;
};

struct MotionResult {
  std::optional<Trajectory> trajectory;
  Infeasible failure;
  std::size_t iterations = 0;  // RRT iterations spent (0 for line generators)

  bool ok() const { return trajectory.has_value(); }
  static MotionResult fail(std::string reason, double at, CollisionReport w = {}) {
    MotionResult r;
    r.failure = {std::move(reason), at, std::move(w)};
    return r;
  }
};

inline constexpr double kNominalJointRate = 1.0;  // rad/s

inline double segment_duration(const JointConfig& a, const JointConfig& b, const TrajectoryConfig& cfg) {
  return max_joint_delta(a, b) / (cfg.speed * kNominalJointRate);
}

namespace detail {

inline bool crosses_singularity(const JointConfig& a, const JointConfig& b) {
  const double sa = std::sin(a[1]), sb = std::sin(b[1]);
  return std::abs(sa) <= kSingularBand || std::abs(sb) <= kSingularBand || (sa > 0) != (sb > 0);
}

}  // namespace detail

/// Dense check of the straight joint segment a→b at `resolution`. Returns the first
/// colliding parameter in [0, 1] with its witness.
namespace detail {

// Between two samples the robot is proven clear when the midpoint is clear with the bodies
// grown by half the sweep. Otherwise split until the sweep drops under half the margin.
inline std::optional<std::pair<double, CollisionReport>> refine_segment(const CollisionChecker& checker,
                                                                        const JointConfig& a, const JointConfig& b,
                                                                        double ta, double tb, double tol) {
  const double pad = checker.sweep_bound(a, b) / 2;
  if (pad <= tol) return std::nullopt;
  const JointConfig mid = lerp(a, b, 0.5);
  if (!checker.check(mid, pad).hit) return std::nullopt;
  const double tm = (ta + tb) / 2;
  if (auto hit = refine_segment(checker, a, mid, ta, tm, tol)) return hit;
  if (auto hit = checker.check(mid); hit.hit) return std::pair{tm, hit};
  return refine_segment(checker, mid, b, tm, tb, tol);
}

}  // namespace detail

/// Collision check of the joint segment a→b: samples every `resolution` rad, then closes
/// the gaps between samples with sweep-padded checks. Returns the first hit parameter.
inline std::optional<std::pair<double, CollisionReport>> check_segment(const CollisionChecker& checker,
                                                                         const JointConfig& a, const JointConfig& b,
                                                                         double resolution) {
  const int n = std::max(1, static_cast<int>(std::ceil(max_joint_delta(a, b) / resolution)));
  const double tol = std::max(checker.margin() / 2, 1e-4);
  JointConfig prev = a;
  if (auto hit = checker.check(a); hit.hit) return std::pair{0.0, hit};
  for (int i = 1; i <= n; ++i) {
    const double t = static_cast<double>(i) / n;
    const JointConfig q = lerp(a, b, t);
    if (auto hit = detail::refine_segment(checker, prev, q, static_cast<double>(i - 1) / n, t, tol)) return hit;
    if (auto hit = checker.check(q); hit.hit) return std::pair{t, hit};
    prev = q;
  }
  return std::nullopt;
}

inline Trajectory make_trajectory(std::vector<JointConfig> wps, const TrajectoryConfig& cfg, double margin) {
  Trajectory t;
  t.waypoints = std::move(wps);
  for (std::size_t i = 1; i < t.waypoints.size(); ++i) {
    t.durations.push_back(segment_duration(t.waypoints[i - 1], t.waypoints[i], cfg));
  }
  t.certificate = {cfg.resolution, margin, true};
  return t;
}

/// Re-checks every segment of `t` at `resolution`.
inline bool verify_trajectory(const Trajectory& t, const CollisionChecker& checker, double resolution) {
  for (std::size_t i = 1; i < t.waypoints.size(); ++i) {
    if (check_segment(checker, t.waypoints[i - 1], t.waypoints[i], resolution)) return false;
  }
  return !t.waypoints.empty() && !checker.check(t.waypoints.front()).hit;
}

inline MotionResult joint_line(const JointConfig& q0, const JointConfig& q1, const TrajectoryConfig& cfg,
                               const CollisionChecker& checker) {
  const RobotModel& model = checker.model();
  if (!within_limits(model, q0)) return MotionResult::fail("joint_limit", 0.0);
  if (!within_limits(model, q1)) return MotionResult::fail("joint_limit", 1.0);
  if (cfg.singularity_reject && detail::crosses_singularity(q0, q1)) return MotionResult::fail("singularity", 0.0);
  if (auto hit = check_segment(checker, q0, q1, cfg.resolution)) {
    return MotionResult::fail("collision", hit->first, hit->second);
  }
  MotionResult r;
  r.trajectory = make_trajectory({q0, q1}, cfg, checker.margin());
  return r;
}

/// IK solution nearest to `prev` (joint-space L2), or nothing when unreachable.
inline std::optional<JointConfig> nearest_ik(const RobotModel& model, const Pose& p, const JointConfig& prev) {
  const auto sols = ik(model, p);
  std::optional<JointConfig> best;
  for (const auto& s : sols) {
    if (!best || joint_distance(s, prev) < joint_distance(*best, prev)) best = s;
  }
  return best;
}

inline Pose interpolate_pose(const Pose& a, const Pose& b, double t) {
  return {a.x + t * (b.x - a.x), a.y + t * (b.y - a.y), a.theta + t * angle_diff(b.theta, a.theta)};
}

/// Straight end-effector (flange) line p0→p1. Starts from `branch_hint` when it realizes p0,
/// and follows the IK branch nearest to the previous sample.
inline MotionResult ee_line(const Pose& p0, const Pose& p1, const TrajectoryConfig& cfg, const CollisionChecker& checker,
                            const JointConfig& branch_hint) {
  const RobotModel& model = checker.model();
  JointConfig start;
  if (within_limits(model, branch_hint) && pose_residual(fk_unchecked(model, branch_hint), p0) < 1e-9) {
    start = branch_hint;
  } else if (auto s = nearest_ik(model, p0, branch_hint)) {
    start = *s;
  } else {
    return MotionResult::fail("unreachable", 0.0);
  }
  const double dist = std::hypot(p1.x - p0.x, p1.y - p0.y);
  const double turn = std::abs(angle_diff(p1.theta, p0.theta));
  if (dist < 1e-12 && turn < 1e-12) {
    if (auto hit = checker.check(start); hit.hit) return MotionResult::fail("collision", 0.0, hit);
    MotionResult r;
    r.trajectory = make_trajectory({start, start}, cfg, checker.margin());
    return r;
  }
  const int n = std::max(1, static_cast<int>(std::ceil(std::max(dist / cfg.ee_step, turn / (5.0 * cfg.ee_step)))));
  std::vector<JointConfig> wps{start};
  for (int i = 1; i <= n; ++i) {
    const double t = static_cast<double>(i) / n;
    const auto q = nearest_ik(model, interpolate_pose(p0, p1, t), wps.back());
    if (!q) return MotionResult::fail("unreachable", t);
    if (max_joint_delta(*q, wps.back()) > cfg.branch_jump) return MotionResult::fail("branch_jump", t);
    if (cfg.singularity_reject && detail::crosses_singularity(wps.back(), *q)) return MotionResult::fail("singularity", t);
    wps.push_back(*q);
  }
  if (checker.check(wps.front()).hit) return MotionResult::fail("collision", 0.0, checker.check(wps.front()));
  for (std::size_t i = 1; i < wps.size(); ++i) {
    if (auto hit = check_segment(checker, wps[i - 1], wps[i], cfg.resolution)) {
      return MotionResult::fail("collision", (static_cast<double>(i - 1) + hit->first) / n, hit->second);
    }
  }
  MotionResult r;
  r.trajectory = make_trajectory(std::move(wps), cfg, checker.margin());
  return r;
}

/// Configuration at arc-length parameter s along the waypoint polyline.
inline JointConfig polyline_at(const std::vector<JointConfig>& wps, double s, std::size_t* segment = nullptr) {
  for (std::size_t i = 1; i < wps.size(); ++i) {
    const double len = joint_distance(wps[i - 1], wps[i]);
    if (s <= len || i + 1 == wps.size()) {
      if (segment) *segment = i - 1;
      return len > 0 ? lerp(wps[i - 1], wps[i], std::clamp(s / len, 0.0, 1.0)) : wps[i];
    }
    s -= len;
  }
  if (segment) *segment = 0;
  return wps.front();
}

/// Random shortcutting: replace the polyline between two random parameters by a straight
/// joint segment whenever that segment is collision-free.
inline Trajectory shortcut(const Trajectory& traj, const CollisionChecker& checker, int iters, std::uint64_t seed,
                           const TrajectoryConfig& cfg) {
  if (iters <= 0 || traj.waypoints.size() < 3) return traj;
  std::mt19937_64 rng(seed);
  std::vector<JointConfig> wps = traj.waypoints;
  for (int it = 0; it < iters && wps.size() >= 3; ++it) {
    double total = 0.0;
    for (std::size_t i = 1; i < wps.size(); ++i) total += joint_distance(wps[i - 1], wps[i]);
    std::uniform_real_distribution<double> u(0.0, total);
    double s1 = u(rng), s2 = u(rng);
    if (s1 > s2) std::swap(s1, s2);
    std::size_t seg1 = 0, seg2 = 0;
    const JointConfig a = polyline_at(wps, s1, &seg1);
    const JointConfig b = polyline_at(wps, s2, &seg2);
    if (seg1 == seg2) continue;  // same segment: already straight
    if (check_segment(checker, a, b, cfg.resolution)) continue;
    std::vector<JointConfig> next(wps.begin(), wps.begin() + static_cast<std::ptrdiff_t>(seg1) + 1);
    next.push_back(a);
    next.push_back(b);
    next.insert(next.end(), wps.begin() + static_cast<std::ptrdiff_t>(seg2) + 1, wps.end());
    // Drop zero-length segments produced when a cut lands on a vertex.
    std::vector<JointConfig> clean{next.front()};
    for (std::size_t i = 1; i < next.size(); ++i) {
      if (max_joint_delta(next[i], clean.back()) > 1e-12) {
        clean.push_back(next[i]);
      } else if (i + 1 == next.size()) {
        clean.back() = next[i];
      }
    }
    wps = std::move(clean);
  }
  // Collinear interior points add nothing; remove vertices where both neighbours line up.
  std::vector<JointConfig> out{wps.front()};
  for (std::size_t i = 1; i + 1 < wps.size(); ++i) {
    const double direct = joint_distance(out.back(), wps[i + 1]);
    const double via = joint_distance(out.back(), wps[i]) + joint_distance(wps[i], wps[i + 1]);
    if (via - direct > 1e-12) out.push_back(wps[i]);
  }
  out.push_back(wps.back());
  Trajectory t = make_trajectory(std::move(out), cfg, traj.certificate.margin);
  t.certificate.checked_resolution = cfg.resolution;
  return t;
}

/// Bidirectional RRT (connect variant) in joint space with goal bias; the path is shortcut
/// when cfg.shortcut_iters > 0.
inline MotionResult rrt(const JointConfig& q0, const JointConfig& q1, const TrajectoryConfig& cfg,
                        const CollisionChecker& checker, std::uint64_t seed) {
  const RobotModel& model = checker.model();
  if (!within_limits(model, q0)) return MotionResult::fail("joint_limit", 0.0);
  if (!within_limits(model, q1)) return MotionResult::fail("joint_limit", 1.0);
  if (auto hit = checker.check(q0); hit.hit) return MotionResult::fail("collision", 0.0, hit);
  if (auto hit = checker.check(q1); hit.hit) return MotionResult::fail("collision", 1.0, hit);

  struct TreeNode {
    JointConfig q;
    int parent;
  };
  using Tree = std::vector<TreeNode>;
  // trees[0] grows from q0, trees[1] from q1; they swap roles every iteration.
  std::array<Tree, 2> trees{Tree{{q0, -1}}, Tree{{q1, -1}}};
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto nearest = [](const Tree& t, const JointConfig& q) {
    std::size_t near = 0;
    double best = joint_distance(t[0].q, q);
    for (std::size_t i = 1; i < t.size(); ++i) {
      const double d = joint_distance(t[i].q, q);
      if (d < best) {
        best = d;
        near = i;
      }
    }
    return std::pair{near, best};
  };
  // One step from the nearest node towards `target`. Returns the new node index, or -1 when blocked.
  auto extend = [&](Tree& t, const JointConfig& target) {
    const auto [near, dist] = nearest(t, target);
    if (dist <= 1e-12) return static_cast<int>(near);
    const JointConfig from = t[near].q;
    const JointConfig to = dist <= cfg.rrt.step ? target : lerp(from, target, cfg.rrt.step / dist);
    if (check_segment(checker, from, to, cfg.resolution)) return -1;
    t.push_back({to, static_cast<int>(near)});
    return static_cast<int>(t.size() - 1);
  };
  auto branch = [](const Tree& t, int leaf) {
    std::vector<JointConfig> out;
    for (int i = leaf; i >= 0; i = t[static_cast<std::size_t>(i)].parent) out.push_back(t[static_cast<std::size_t>(i)].q);
    return out;
  };
  auto finish = [&](std::vector<JointConfig> path, std::size_t iters) {
    std::vector<JointConfig> clean{path.front()};
    for (std::size_t i = 1; i < path.size(); ++i) {
      if (max_joint_delta(path[i], clean.back()) > 1e-12) clean.push_back(path[i]);
    }
    clean.back() = q1;
    if (clean.size() < 2) clean.push_back(q1);
    MotionResult r;
    Trajectory t = make_trajectory(std::move(clean), cfg, checker.margin());
    r.trajectory = shortcut(t, checker, cfg.shortcut_iters, seed ^ 0x9e3779b97f4a7c15ULL, cfg);
    r.iterations = iters;
    return r;
  };

  if (!check_segment(checker, q0, q1, cfg.resolution)) return finish({q0, q1}, 0);
  for (int it = 1; it <= cfg.rrt.max_iters; ++it) {
    const std::size_t side = static_cast<std::size_t>(it - 1) % 2;
    Tree& grow = trees[side];
    Tree& other = trees[1 - side];
    JointConfig target;
    if (unit(rng) < cfg.rrt.goal_bias) {
      target = other[0].q;
    } else {
      for (std::size_t i = 0; i < 3; ++i) target[i] = model.limits[i].low + unit(rng) * (model.limits[i].high - model.limits[i].low);
    }
    const int added = extend(grow, target);
    if (added < 0) continue;
    // Greedy connect: march the other tree towards the new node until blocked or joined.
    const JointConfig reach = grow[static_cast<std::size_t>(added)].q;
    int last = -1;
    for (;;) {
      const int step = extend(other, reach);
      if (step < 0) break;
      last = step;
      if (max_joint_delta(other[static_cast<std::size_t>(step)].q, reach) <= 1e-12) {
        auto a = branch(trees[0], side == 0 ? added : last);
        auto b = branch(trees[1], side == 0 ? last : added);
        std::reverse(a.begin(), a.end());
        a.insert(a.end(), b.begin(), b.end());
        return finish(std::move(a), static_cast<std::size_t>(it));
      }
    }
  }
  MotionResult r = MotionResult::fail("timeout", 0.0);
  r.iterations = static_cast<std::size_t>(cfg.rrt.max_iters);
  return r;
}

/// Dispatch on cfg.method for joint targets. ee_line needs a pose target and is handled by callers.
inline MotionResult plan_joint_motion(const JointConfig& q0, const JointConfig& q1, const TrajectoryConfig& cfg,
                                      const CollisionChecker& checker, std::uint64_t seed) {
  switch (cfg.method) {
    case TrajectoryMethod::Rrt: return rrt(q0, q1, cfg, checker, seed);
    case TrajectoryMethod::EeLine: {
      const RobotModel& m = checker.model();
      MotionResult r = ee_line(fk_unchecked(m, q0), fk_unchecked(m, q1), cfg, checker, q0);
      if (r.ok() && max_joint_delta(r.trajectory->back(), q1) > 1e-6) return MotionResult::fail("branch_jump", 1.0);
      if (r.ok()) r.trajectory->waypoints.back() = q1;
      return r;
    }
    case TrajectoryMethod::JointLine: break;
  }
  return joint_line(q0, q1, cfg, checker);
}

}  // namespace cellscript
