#include <gtest/gtest.h>

#include <random>

#include "cellscript/cell.hpp"
#include "cellscript/variable_map.hpp"

using namespace cellscript;

namespace {

Compound two_tool_env() {
  CellModel cell;
  cell.tools.push_back({0, "suction", {}, Pose{0.1, 0, 0}, {1}});
  cell.tools.push_back({1, "jaw", {}, Pose{0.12, 0, 0}, {2, 3}});
  return to_static_env(cell);
}

WorldObject obj(std::string id) {
  WorldObject o;
  o.id = std::move(id);
  o.type = "box";
  o.polygon = rectangle(0.1, 0.1);
  return o;
}

template <class F>
std::string error_code(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return "";
}

}  // namespace

TEST(InitMap, ReservedVariablesPresent) {
  const VariableMap m = init_map(two_tool_env(), {0, 0.5, -0.5});
  for (auto r : vars::kReserved) EXPECT_TRUE(m.contains(r)) << r;
  EXPECT_EQ(m.at(vars::kActiveTool).as_int(), 0);
  EXPECT_TRUE(m.at(vars::kPickedObjects).as_objects().empty());
  EXPECT_TRUE(m.at(vars::kPlacedObjects).as_objects().empty());
  EXPECT_EQ(m.at(vars::kJps).as_vector(), (std::vector<double>{0, 0.5, -0.5}));
  const CellModel back = cell_from_static_env(m.at(vars::kStaticEnv).as_compound());
  ASSERT_EQ(back.tools.size(), 2u);
  EXPECT_EQ(back.tools[1].name, "jaw");
}

TEST(InitMap, HomeOutsideLimitsRejected) {
  EXPECT_EQ(error_code([] { init_map(two_tool_env(), {0, 4.0, 0}); }), "JOINT_LIMIT");
  EXPECT_EQ(error_code([] { init_map(two_tool_env(), {0, 0}); }), "JOINT_LIMIT");
}

TEST(Apply, SetAndRevision) {
  const VariableMap m0 = init_map(two_tool_env(), {0, 0, 0});
  const VariableMap m1 = m0.apply({Mutation::set("counter", 1)});
  EXPECT_EQ(m1.revision(), m0.revision() + 1);
  EXPECT_FALSE(m0.contains("counter"));
  EXPECT_EQ(m1.at("counter").as_int(), 1);
}

TEST(Apply, EmptyBatchKeepsRevision) {
  const VariableMap m0 = init_map(two_tool_env(), {0, 0, 0});
  const VariableMap m1 = m0.apply(std::span<const Mutation>{});
  EXPECT_EQ(m1.revision(), m0.revision());
  EXPECT_EQ(m0, m1);
}

TEST(Apply, BatchIsAtomic) {
  const VariableMap m0 = init_map(two_tool_env(), {0, 0, 0}).apply({Mutation::set("a", 1)});
  const std::string code = error_code([&] {
    (void)m0.apply({Mutation::set("a", 2), Mutation::set("b", 3), Mutation::remove(std::string(vars::kJps))});
  });
  EXPECT_EQ(code, "RESERVED_MUTATION");
  EXPECT_EQ(m0.at("a").as_int(), 1);
  EXPECT_FALSE(m0.contains("b"));
}

TEST(Apply, ReservedTypeEnforced) {
  const VariableMap m0 = init_map(two_tool_env(), {0, 0, 0});
  EXPECT_EQ(error_code([&] { (void)m0.apply({Mutation::set(std::string(vars::kActiveTool), "jaw")}); }),
            "TYPE_MISMATCH");
  EXPECT_EQ(m0.apply({Mutation::set(std::string(vars::kActiveTool), 1)}).at(vars::kActiveTool).as_int(), 1);
}

TEST(Apply, ListRemoveByKey) {
  const VariableMap m0 = init_map(two_tool_env(), {0, 0, 0});
  const VariableMap m1 = m0.apply({Mutation::list_append(std::string(vars::kPickedObjects), ObjectSet{obj("A"), obj("B")})});
  const VariableMap m2 = m1.apply({Mutation::list_remove_by_key(std::string(vars::kPickedObjects), "A")});
  ASSERT_EQ(m2.at(vars::kPickedObjects).as_objects().size(), 1u);
  EXPECT_EQ(m2.at(vars::kPickedObjects).as_objects()[0].id, "B");
  // Missing key is a no-op on content.
  const VariableMap m3 = m2.apply({Mutation::list_remove_by_key(std::string(vars::kPickedObjects), "Z")});
  EXPECT_EQ(m3.at(vars::kPickedObjects).as_objects().size(), 1u);
}

TEST(Apply, UndefinedAndBadName) {
  const VariableMap m0;
  EXPECT_EQ(error_code([&] { (void)m0.apply({Mutation::list_append("nope", 1)}); }), "UNDEFINED_VARIABLE");
  EXPECT_EQ(error_code([&] { (void)m0.apply({Mutation::set("", 1)}); }), "BAD_NAME");
  EXPECT_EQ(error_code([&] { (void)m0.at("nope"); }), "UNDEFINED_VARIABLE");
}

TEST(Snapshot, IsolatedFromLaterMutation) {
  const VariableMap m0 = init_map(two_tool_env(), {0, 0, 0}).apply({Mutation::set("x", 1)});
  const VariableMap snap = m0.snapshot();
  const VariableMap m1 = m0.apply({Mutation::set("x", 2)});
  EXPECT_EQ(snap.at("x").as_int(), 1);
  EXPECT_EQ(m1.at("x").as_int(), 2);
}

TEST(Poison, OnlyInShadow) {
  const VariableMap m0 = init_map(two_tool_env(), {0, 0, 0});
  EXPECT_EQ(error_code([&] { (void)m0.poison("resp", 7); }), "CONTRACT_VIOLATION");
  EXPECT_EQ(error_code([&] { (void)m0.apply({Mutation::set("resp", Poison{7})}); }), "CONTRACT_VIOLATION");
  const VariableMap s = m0.as_shadow().poison("resp", 7);
  EXPECT_TRUE(s.is_poisoned("resp"));
  EXPECT_EQ(s.at("resp").as_poison().origin, 7u);
  EXPECT_EQ(to_json(s.at("resp")), (Json{{"$poison", 7}}));
  // Overwriting a poisoned name with a real value clears it.
  EXPECT_FALSE(s.apply({Mutation::set("resp", 3)}).is_poisoned("resp"));
}

TEST(CanonicalDump, StripsVolatileMeta) {
  const VariableMap a = VariableMap{}.apply({Mutation::set("r", Json{{"ok", true}, {"ts_ms", 10}, {"msg_id", 1}})});
  const VariableMap b = VariableMap{}.apply({Mutation::set("r", Json{{"ok", true}, {"ts_ms", 99}, {"msg_id", 5}})});
  EXPECT_EQ(canonical_dump(a), canonical_dump(b));
}

TEST(ValueJson, RoundTrip) {
  const std::vector<Value> values{Value(3), Value(2.5), Value(true), Value("s"), Value(std::vector<double>{1, 2}),
                                  Value(Pose{1, 2, 0.5}), Value(ObjectSet{obj("A")})};
  for (const auto& v : values) {
    const Json j = to_json(v);
    const Value back = value_from_json(j);
    EXPECT_EQ(to_json(back), j) << j.dump();
  }
}

// Applying batch A then B equals applying their concatenation.
TEST(ApplyProperty, BatchConcatenation) {
  std::mt19937_64 rng(23);
  std::uniform_int_distribution<int> pick(0, 5), name(0, 3), val(0, 9);
  const auto random_batch = [&](std::size_t n) {
    std::vector<Mutation> b;
    for (std::size_t i = 0; i < n; ++i) {
      const std::string v = "v" + std::to_string(name(rng));
      switch (pick(rng)) {
        case 0: b.push_back(Mutation::remove(v)); break;
        case 1: b.push_back(Mutation::list_append("list", val(rng))); break;
        default: b.push_back(Mutation::set(v, val(rng))); break;
      }
    }
    return b;
  };
  const VariableMap base = init_map(two_tool_env(), {0, 0, 0}).apply({Mutation::set("list", std::vector<double>{})});
  for (int trial = 0; trial < 300; ++trial) {
    const auto a = random_batch(1 + trial % 5);
    const auto b = random_batch(1 + trial % 3);
    std::vector<Mutation> ab = a;
    ab.insert(ab.end(), b.begin(), b.end());
    const VariableMap seq = base.apply(a).apply(b);
    const VariableMap joint = base.apply(ab);
    EXPECT_EQ(seq, joint);
    EXPECT_EQ(canonical_dump(seq), canonical_dump(joint));
    EXPECT_EQ(seq.revision(), base.revision() + 2);
    EXPECT_EQ(joint.revision(), base.revision() + 1);
  }
}
