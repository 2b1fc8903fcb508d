#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "cellscript/cell.hpp"
#include "oracles/collision_oracle.hpp"
#include "oracles/random_scenes.hpp"

using namespace cellscript;

namespace {

RobotModel default_model() { return RobotModel{}; }

// Term-by-term planar FK in extended precision.
std::array<long double, 3> fk_long_double(const RobotModel& m, const JointConfig& q) {
  long double x = 0, y = 0, a = 0;
  for (int i = 0; i < 3; ++i) {
    a += q[i];
    x += static_cast<long double>(m.link_lengths[i]) * std::cos(a);
    y += static_cast<long double>(m.link_lengths[i]) * std::sin(a);
  }
  return {x, y, a};
}

// Grid search over (q1, q2) for wrist positions, refined by step halving.
std::vector<std::pair<double, double>> wrist_solutions_by_search(const RobotModel& m, Vec2 wrist) {
  const auto err = [&](double a, double b) {
    const double x = m.link_lengths[0] * std::cos(a) + m.link_lengths[1] * std::cos(a + b);
    const double y = m.link_lengths[0] * std::sin(a) + m.link_lengths[1] * std::sin(a + b);
    return std::hypot(x - wrist.x, y - wrist.y);
  };
  const int n = 360;
  const double step = 2 * kPi / n;
  std::vector<std::pair<double, double>> found;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      double a = -kPi + i * step, b = -kPi + j * step;
      if (err(a, b) > 0.05) continue;
      double h = step;
      while (h > 1e-13) {
        bool moved = false;
        for (auto [da, db] : {std::pair{h, 0.0}, {-h, 0.0}, {0.0, h}, {0.0, -h}}) {
          if (err(a + da, b + db) < err(a, b)) {
            a += da;
            b += db;
            moved = true;
          }
        }
        if (!moved) h /= 2;
      }
      if (err(a, b) > 1e-9) continue;
      a = normalize_angle(a);
      b = normalize_angle(b);
      bool dup = false;
      for (auto& [fa, fb] : found) dup = dup || (std::abs(angle_diff(fa, a)) < 1e-6 && std::abs(angle_diff(fb, b)) < 1e-6);
      if (!dup) found.emplace_back(a, b);
    }
  }
  return found;
}

}  // namespace

TEST(Kinematics, FkColinearIsSumOfLinks) {
  const Pose p = fk(default_model(), {0, 0, 0});
  EXPECT_NEAR(p.x, 2.0, 1e-12);
  EXPECT_NEAR(p.y, 0.0, 1e-12);
  EXPECT_NEAR(p.theta, 0.0, 1e-12);
}

TEST(Kinematics, FkQuarterTurn) {
  const Pose p = fk(default_model(), {kPi / 2, 0, 0});
  EXPECT_NEAR(p.x, 0.0, 1e-12);
  EXPECT_NEAR(p.y, 2.0, 1e-12);
  EXPECT_NEAR(p.theta, kPi / 2, 1e-12);
}

TEST(Kinematics, FkMatchesExtendedPrecisionOracle) {
  const JointConfig q{0.3, -0.4, 0.9};
  const auto want = fk_long_double(default_model(), q);
  const Pose p = fk(default_model(), q);
  EXPECT_NEAR(p.x, static_cast<double>(want[0]), 1e-12);
  EXPECT_NEAR(p.y, static_cast<double>(want[1]), 1e-12);
  // Frozen from a 40-digit evaluation.
  EXPECT_NEAR(p.x, 1.8906811632174597, 1e-12);
  EXPECT_NEAR(p.y, 0.3591246915237816, 1e-12);
  EXPECT_NEAR(p.theta, 0.8, 1e-12);
}

TEST(Kinematics, FkRejectsLimitViolation) {
  try {
    fk(default_model(), {kPi + 1, 0, 0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "JOINT_LIMIT");
  }
}

TEST(Kinematics, IkFullExtensionHasOneSolution) {
  const auto sols = ik(default_model(), Pose{2.0, 0, 0});
  ASSERT_EQ(sols.size(), 1u);
  for (double v : sols[0]) EXPECT_NEAR(v, 0.0, 1e-9);
}

TEST(Kinematics, IkUnreachableIsEmpty) { EXPECT_TRUE(ik(default_model(), Pose{5, 0, 0}).empty()); }

TEST(Kinematics, IkTwoSolutionsAgreeWithGridSearch) {
  const RobotModel m = default_model();
  const Pose target{1.2, 0.6, kPi / 2};
  const auto sols = ik(m, target);
  ASSERT_EQ(sols.size(), 2u);
  EXPECT_GE(sols[0][1], 0.0);  // elbow-down first
  EXPECT_LT(sols[1][1], 0.0);
  for (const auto& q : sols) EXPECT_LT(pose_residual(fk(m, q), target), 1e-9);

  const Vec2 wrist{target.x - 0.2 * std::cos(target.theta), target.y - 0.2 * std::sin(target.theta)};
  const auto oracle = wrist_solutions_by_search(m, wrist);
  ASSERT_EQ(oracle.size(), 2u);
  for (const auto& [a, b] : oracle) {
    bool matched = false;
    for (const auto& q : sols) {
      matched = matched || (std::abs(angle_diff(q[0], a)) < 1e-6 && std::abs(angle_diff(q[1], b)) < 1e-6);
    }
    EXPECT_TRUE(matched) << a << " " << b;
  }
}

TEST(Kinematics, IkFkRoundTripProperty) {
  const RobotModel m = default_model();
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> angle(-kPi, kPi);
  for (int i = 0; i < 2000; ++i) {
    const JointConfig q{angle(rng), angle(rng), angle(rng)};
    if (std::abs(std::sin(q[1])) <= 1e-6) continue;
    const auto sols = ik(m, fk(m, q));
    ASSERT_LE(sols.size(), 2u);
    bool found = false;
    for (const auto& s : sols) {
      found = found || (std::abs(angle_diff(s[0], q[0])) < 1e-9 && std::abs(angle_diff(s[1], q[1])) < 1e-9 &&
                        std::abs(angle_diff(s[2], q[2])) < 1e-9);
    }
    EXPECT_TRUE(found);
  }
}

TEST(Collision, EmptySceneNeverCollides) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> angle(-2.5, 2.5);
  for (int i = 0; i < 100; ++i) {
    // q2 bounded away from +-pi so link 3 cannot fold onto link 1.
    EXPECT_FALSE(collide(default_model(), {angle(rng), angle(rng) * 0.5, angle(rng)}, SceneState{}).hit);
  }
}

TEST(Collision, ObstacleAtFlangeHitsLink3) {
  const RobotModel m = default_model();
  const JointConfig q{0.2, 0.3, -0.1};
  const Pose ee = fk(m, q);
  SceneState scene;
  scene.obstacles.push_back({"box", transform(rectangle(1.0, 1.0), Pose{ee.x, ee.y, 0})});
  const auto hit = collide(m, q, scene);
  ASSERT_TRUE(hit.hit);
  EXPECT_EQ(hit.second, "box");
}

TEST(Collision, AttachedObjectClipsWallWhileLinksClear) {
  const RobotModel m = default_model();
  const JointConfig q{0, 0, 0};  // arm along +x, flange at (2, 0)
  SceneState scene;
  WorldObject held;
  held.id = "held";
  held.polygon = rectangle(0.1, 0.1);
  held.pose = Pose{0.15, 0, 0};  // spans x in [2.10, 2.20]
  scene.attached.push_back(held);
  scene.obstacles.push_back({"wall", transform(rectangle(0.1, 1.0), Pose{2.24, 0, 0})});  // x in [2.19, 2.29]
  const auto hit = collide(m, q, scene);
  ASSERT_TRUE(hit.hit);
  EXPECT_EQ(hit.first, "attached:held");
  EXPECT_TRUE(oracle::sampled_collision(m, q, scene, 0.001));
  scene.attached.clear();
  EXPECT_FALSE(collide(m, q, scene).hit);
  EXPECT_FALSE(oracle::sampled_collision(m, q, scene, 0.001));
}

TEST(Collision, TouchingCountsAsCollision) {
  const Polygon a = rectangle(1, 1);
  const Polygon b = transform(rectangle(1, 1), Pose{1.0, 0, 0});
  EXPECT_TRUE(sat_overlap(a, b));
  EXPECT_FALSE(sat_overlap(a, transform(rectangle(1, 1), Pose{1.0 + 1e-9, 0, 0})));
}

TEST(Collision, RigidTransformInvariance) {
  const RobotModel m = default_model();
  std::mt19937_64 rng(5);
  const Pose shift{0.7, -1.3, 0.9};
  for (int i = 0; i < 200; ++i) {
    auto c = oracle::random_collision_case(m, rng);
    RobotModel moved = m;
    moved.base = shift * m.base;
    SceneState s2 = c.scene;
    for (auto& o : s2.obstacles) o.polygon = transform(o.polygon, shift);
    for (auto& o : s2.free_objects) o.pose = shift * o.pose;
    const bool a = collide(m, c.q, c.scene).hit;
    const bool b = collide(moved, c.q, s2).hit;
    // Verdicts may only differ where a robot body grazes an obstacle.
    if (a != b) {
      EXPECT_NE(oracle::sampled_collision(m, c.q, c.scene, 0.003), oracle::sampled_collision(m, c.q, c.scene, -0.001));
    }
  }
}

TEST(Collision, SatAgreesWithPointSamplingOutsideBand) {
  const RobotModel m = default_model();
  std::mt19937_64 rng(17);
  int compared = 0, hits = 0;
  for (int i = 0; i < 150; ++i) {
    const auto c = oracle::random_collision_case(m, rng);
    const bool wide = oracle::sampled_collision(m, c.q, c.scene, 0.001 + 0.002);
    const bool narrow = oracle::sampled_collision(m, c.q, c.scene, 0.001 - 0.002);
    if (wide != narrow) continue;  // inside the 2 mm band
    ++compared;
    hits += wide;
    EXPECT_EQ(collide(m, c.q, c.scene).hit, wide) << "case " << i;
  }
  EXPECT_GT(compared, 100);
  EXPECT_GT(hits, 20);
  EXPECT_LT(hits, compared - 20);
}

TEST(GraspTargets, SquareWithOneGraspExpandsFourWays) {
  WorldObject sq;
  sq.id = "A";
  sq.polygon = rectangle(0.1, 0.1);
  sq.symmetry_order = 4;
  sq.grasps.push_back({0, Pose{0, 0.05, -kPi / 2}, 0.9, {}, {}});
  Tool tool{0, "suction", {}, Pose{0.1, 0, 0}, {}};
  EXPECT_EQ(expand_targets(Pose{1, 0, 0}, sq, tool).size(), 4u);
}

TEST(GraspTargets, NoSymmetryTwoGrasps) {
  WorldObject o;
  o.id = "A";
  o.polygon = rectangle(0.2, 0.1);
  o.grasps.push_back({0, Pose{0, 0.05, -kPi / 2}, 0.9, {}, {}});
  o.grasps.push_back({0, Pose{0.05, 0.05, -kPi / 2}, 0.8, {}, {}});
  Tool tool{0, "suction", {}, Pose{}, {}};
  EXPECT_EQ(expand_targets(Pose{}, o, tool).size(), 2u);
  Tool other{1, "jaw", {}, Pose{}, {}};
  EXPECT_TRUE(expand_targets(Pose{}, o, other).empty());
}

TEST(GraspTargets, SymmetricGraspIsDeduplicated) {
  // A centered grasp on a k=2 object: the half-turn maps grasp 0 onto grasp 1.
  WorldObject o;
  o.id = "A";
  o.polygon = rectangle(0.2, 0.1);
  o.symmetry_order = 2;
  o.grasps.push_back({0, Pose{0, 0, 0}, 0.9, {}, {}});
  o.grasps.push_back({0, Pose{0, 0, kPi}, 0.9, {}, {}});
  Tool tool{0, "t", {}, Pose{}, {}};
  const Pose target{0.5, 0.5, 0.3};
  const auto got = expand_targets(target, o, tool);

  // Oracle: expand everything, then count pairwise-distinct poses.
  std::vector<Pose> raw;
  for (int i = 0; i < 2; ++i) {
    for (const auto& g : o.grasps) raw.push_back(target * rotation(kPi * i) * g.grasp_pose_in_object);
  }
  std::size_t distinct = 0;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    bool seen = false;
    for (std::size_t j = 0; j < i; ++j) seen = seen || approx_equal(raw[i], raw[j]);
    distinct += !seen;
  }
  EXPECT_EQ(distinct, 2u);
  EXPECT_EQ(got.size(), distinct);
}

TEST(GraspTargets, SingleSelfSymmetricGrasp) {
  WorldObject o;
  o.id = "A";
  o.polygon = rectangle(0.1, 0.1);
  o.symmetry_order = 2;
  o.grasps.push_back({0, Pose{0, 0, 0}, 0.9, {}, {}});
  Tool tool{0, "t", {}, Pose{}, {}};
  // rot(pi) * (0,0,0) differs in heading, so two targets remain; a grasp whose
  // heading is irrelevant is not modeled, which matches the closed-form oracle.
  EXPECT_EQ(expand_targets(Pose{}, o, tool).size(), 2u);
}

TEST(Geometry, NormalizeAngleRange) {
  EXPECT_DOUBLE_EQ(normalize_angle(kPi), kPi);
  EXPECT_DOUBLE_EQ(normalize_angle(-kPi), kPi);
  EXPECT_NEAR(normalize_angle(3 * kPi + 0.1), -kPi + 0.1, 1e-12);
}

TEST(Geometry, PoseComposeInverse) {
  const Pose a{0.3, -1.2, 2.5};
  EXPECT_TRUE(approx_equal(a * a.inverse(), Pose{}));
  EXPECT_TRUE(approx_equal(a.inverse() * a, Pose{}));
}
