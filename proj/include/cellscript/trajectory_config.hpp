#pragma once

// trajectory_config user parameter shared by movement nodes.

#include <string>

#include "cellscript/error.hpp"
#include "cellscript/value.hpp"

namespace cellscript {

enum class TrajectoryMethod { JointLine, EeLine, Rrt };

inline const char* method_name(TrajectoryMethod m) {
  switch (m) {
    case TrajectoryMethod::JointLine: return "joint_line";
    case TrajectoryMethod::EeLine: return "ee_line";
    case TrajectoryMethod::Rrt: return "rrt";
  }
  return "?";
}

struct RrtConfig {
  int max_iters = 20000;
  double step = 0.15;  // rad
  double goal_bias = 0.1;
};

struct TrajectoryConfig {
  TrajectoryMethod method = TrajectoryMethod::JointLine;
  double speed = 1.0;         // fraction of the nominal 1 rad/s joint rate
  double resolution = 0.01;   // rad between collision samples
  bool singularity_reject = false;
  double branch_jump = 0.5;   // rad, ee_line continuity threshold
  double ee_step = 0.01;      // m between ee_line pose samples
  RrtConfig rrt;
  int shortcut_iters = 0;
};

/// Parses a trajectory_config object; `fallback` supplies the per-node default method.
inline TrajectoryConfig trajectory_config_from_json(const Json& j, TrajectoryMethod fallback) {
  TrajectoryConfig c;
  c.method = fallback;
  if (j.is_null()) return c;
  if (!j.is_object()) throw Error("BAD_PARAM", "trajectory_config must be an object");
  try {
    if (j.contains("method")) {
      const std::string m = j["method"].get<std::string>();
      if (m == "joint_line") {
        c.method = TrajectoryMethod::JointLine;
      } else if (m == "ee_line") {
        c.method = TrajectoryMethod::EeLine;
      } else if (m == "rrt") {
        c.method = TrajectoryMethod::Rrt;
      } else {
        throw Error("BAD_PARAM", "unknown trajectory method '" + m + "'");
      }
    }
    c.speed = j.value("speed", c.speed);
    c.resolution = j.value("resolution", c.resolution);
    c.singularity_reject = j.value("singularity_reject", c.singularity_reject);
    c.branch_jump = j.value("branch_jump", c.branch_jump);
    c.ee_step = j.value("ee_step", c.ee_step);
    c.shortcut_iters = j.value("shortcut_iters", c.shortcut_iters);
    if (j.contains("rrt")) {
      const Json& r = j["rrt"];
      c.rrt.max_iters = r.value("max_iters", c.rrt.max_iters);
      c.rrt.step = r.value("step", c.rrt.step);
      c.rrt.goal_bias = r.value("goal_bias", c.rrt.goal_bias);
    }
  } catch (const Json::exception& e) {
    throw Error("BAD_PARAM", std::string("trajectory_config: ") + e.what());
  }
  if (!(c.speed > 0 && c.speed <= 1)) throw Error("BAD_PARAM", "trajectory_config.speed must be in (0, 1]");
  if (!(c.resolution > 0)) throw Error("BAD_PARAM", "trajectory_config.resolution must be positive");
  if (!(c.ee_step > 0)) throw Error("BAD_PARAM", "trajectory_config.ee_step must be positive");
  if (!(c.branch_jump > 0)) throw Error("BAD_PARAM", "trajectory_config.branch_jump must be positive");
  if (c.shortcut_iters < 0) throw Error("BAD_PARAM", "trajectory_config.shortcut_iters must be >= 0");
  if (c.rrt.max_iters < 1 || !(c.rrt.step > 0) || c.rrt.goal_bias < 0 || c.rrt.goal_bias > 1) {
    throw Error("BAD_PARAM", "trajectory_config.rrt out of range");
  }
  return c;
}

inline Json to_json(const TrajectoryConfig& c) {
  return Json{{"method", method_name(c.method)},
              {"speed", c.speed},
              {"resolution", c.resolution},
              {"singularity_reject", c.singularity_reject},
              {"branch_jump", c.branch_jump},
              {"ee_step", c.ee_step},
              {"rrt", {{"max_iters", c.rrt.max_iters}, {"step", c.rrt.step}, {"goal_bias", c.rrt.goal_bias}}},
              {"shortcut_iters", c.shortcut_iters}};
}

}  // namespace cellscript
