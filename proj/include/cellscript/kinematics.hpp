#pragma once

// Planar 3-link arm: forward kinematics and closed-form inverse kinematics.

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "cellscript/error.hpp"
#include "cellscript/geometry.hpp"

namespace cellscript {

using JointConfig = std::array<double, 3>;

struct JointLimit {
  double low = -kPi;
  double high = kPi;
};

struct RobotModel {
  std::array<double, 3> link_lengths{1.0, 0.8, 0.2};
  std::array<JointLimit, 3> limits{};
  Pose base;
  std::array<double, 3> link_widths{0.04, 0.04, 0.04};
};

/// IK solutions closer than this in |sin q2| are treated as one (the elbow branches coincide).
inline constexpr double kSingularBand = 1e-6;

inline bool within_limits(const RobotModel& model, const JointConfig& q) {
  for (std::size_t i = 0; i < q.size(); ++i) {
    if (!(q[i] >= model.limits[i].low && q[i] <= model.limits[i].high)) return false;
  }
  return true;
}

inline void check_model(const RobotModel& model) {
  for (std::size_t i = 0; i < 3; ++i) {
    if (!(model.link_lengths[i] > 0.0)) throw Error("BAD_MODEL", "link lengths must be positive");
    if (!(model.limits[i].low < model.limits[i].high)) throw Error("BAD_MODEL", "joint limits need low < high");
    if (!(model.link_widths[i] > 0.0)) throw Error("BAD_MODEL", "link widths must be positive");
  }
}

/// Base, elbow, wrist and flange points in world coordinates (no limit check).
inline std::array<Vec2, 4> joint_points(const RobotModel& model, const JointConfig& q) {
  std::array<Vec2, 4> pts;
  pts[0] = model.base.position();
  double angle = model.base.theta;
  for (std::size_t i = 0; i < 3; ++i) {
    angle += q[i];
    pts[i + 1] = pts[i] + Vec2{model.link_lengths[i] * std::cos(angle), model.link_lengths[i] * std::sin(angle)};
  }
  return pts;
}

inline Pose fk_unchecked(const RobotModel& model, const JointConfig& q) {
  const auto pts = joint_points(model, q);
  return {pts[3].x, pts[3].y, model.base.theta + q[0] + q[1] + q[2]};
}

/// Flange pose in the world frame.
inline Pose fk(const RobotModel& model, const JointConfig& q) {
  if (!within_limits(model, q)) throw Error("JOINT_LIMIT", "configuration outside joint limits");
  return fk_unchecked(model, q);
}

namespace detail {

/// Chooses the 2*pi representative of `a` that lies within the limit, if any.
inline bool fit_limit(double a, const JointLimit& lim, double& out) {
  for (double cand : {normalize_angle(a), normalize_angle(a) - 2.0 * kPi, normalize_angle(a) + 2.0 * kPi}) {
    if (cand >= lim.low && cand <= lim.high) {
      out = cand;
      return true;
    }
  }
  return false;
}

}  // namespace detail

/// Closed-form IK. Returns 0-2 configurations, elbow-down (q2 >= 0) first, each
/// within limits and with fk residual below 1e-9.
inline std::vector<JointConfig> ik(const RobotModel& model, const Pose& target) {
  const auto [l1, l2, l3] = model.link_lengths;
  const Pose local = model.base.inverse() * target;
  const double wx = local.x - l3 * std::cos(local.theta);
  const double wy = local.y - l3 * std::sin(local.theta);
  const double d2 = wx * wx + wy * wy;
  double c2 = (d2 - l1 * l1 - l2 * l2) / (2.0 * l1 * l2);
  if (c2 > 1.0 + 1e-12 || c2 < -1.0 - 1e-12) return {};
  c2 = std::clamp(c2, -1.0, 1.0);
  const double s2_abs = std::sqrt(std::max(0.0, 1.0 - c2 * c2));

  std::vector<JointConfig> out;
  const bool singular = s2_abs <= kSingularBand;
  for (double sign : {1.0, -1.0}) {
    const double s2 = singular ? 0.0 : sign * s2_abs;
    const double q2 = std::atan2(s2, c2);
    const double q1 = std::atan2(wy, wx) - std::atan2(l2 * s2, l1 + l2 * c2);
    const double q3 = local.theta - q1 - q2;
    JointConfig q;
    if (detail::fit_limit(q1, model.limits[0], q[0]) && detail::fit_limit(q2, model.limits[1], q[1]) &&
        detail::fit_limit(q3, model.limits[2], q[2]) && pose_residual(fk_unchecked(model, q), target) < 1e-9) {
      out.push_back(q);
    }
    if (singular) break;
  }
  return out;
}

inline double joint_distance(const JointConfig& a, const JointConfig& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

inline double max_joint_delta(const JointConfig& a, const JointConfig& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline JointConfig lerp(const JointConfig& a, const JointConfig& b, double t) {
  return {a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]), a[2] + t * (b[2] - a[2])};
}

}  // namespace cellscript
