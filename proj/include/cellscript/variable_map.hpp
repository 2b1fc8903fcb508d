#pragma once

// Global variable map with atomic mutation batches, cheap snapshots and the
// AvailableUponExecution (poison) marker used by shadow maps.

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cellscript/error.hpp"
#include "cellscript/value.hpp"

namespace cellscript {

namespace vars {
inline constexpr std::string_view kJps = "jps";
inline constexpr std::string_view kActiveTool = "active_tool";
inline constexpr std::string_view kStaticEnv = "static_env";
inline constexpr std::string_view kPickedObjects = "picked_objects";
inline constexpr std::string_view kPlacedObjects = "placed_objects";

inline constexpr std::array<std::string_view, 5> kReserved{kJps, kActiveTool, kStaticEnv, kPickedObjects,
                                                          kPlacedObjects};

inline bool is_reserved(std::string_view name) {
  for (auto r : kReserved) {
    if (r == name) return true;
  }
  return false;
}

inline std::string perception_var(std::string_view srv) { return std::string(srv) + "_perception"; }
}  // namespace vars

struct Mutation {
  enum class Op { Set, Remove, ListAppend, ListRemoveByKey };

  Op op = Op::Set;
  std::string name;
  Value value;
  std::string key;

  static Mutation set(std::string name, Value v) { return {Op::Set, std::move(name), std::move(v), {}}; }
  static Mutation remove(std::string name) { return {Op::Remove, std::move(name), {}, {}}; }
  static Mutation list_append(std::string name, Value v) {
    return {Op::ListAppend, std::move(name), std::move(v), {}};
  }
  static Mutation list_remove_by_key(std::string name, std::string key) {
    return {Op::ListRemoveByKey, std::move(name), {}, std::move(key)};
  }

  friend bool operator==(const Mutation&, const Mutation&) = default;
};

inline Json to_json(const Mutation& m) {
  switch (m.op) {
    case Mutation::Op::Set: return Json{{"set", m.name}, {"value", to_json(m.value)}};
    case Mutation::Op::Remove: return Json{{"remove", m.name}};
    case Mutation::Op::ListAppend: return Json{{"append", m.name}, {"value", to_json(m.value)}};
    case Mutation::Op::ListRemoveByKey: return Json{{"remove_key", m.name}, {"key", m.key}};
  }
  return {};
}

/// Immutable-by-value variable map. Copies share structure; every successful
/// non-empty mutation batch produces a new map with revision + 1.
class VariableMap {
 public:
  using Entries = std::map<std::string, Value, std::less<>>;

  VariableMap() : entries_(std::make_shared<const Entries>()) {}

  /// A copy flagged as a shadow map, the only kind allowed to carry poison.
  VariableMap as_shadow() const {
    VariableMap m = *this;
    m.shadow_ = true;
    return m;
  }

  bool is_shadow() const { return shadow_; }
  std::uint64_t revision() const { return revision_; }
  const Entries& entries() const { return *entries_; }

  bool contains(std::string_view name) const { return entries_->find(name) != entries_->end(); }

  const Value* find(std::string_view name) const {
    auto it = entries_->find(name);
    return it == entries_->end() ? nullptr : &it->second;
  }

  const Value& at(std::string_view name) const {
    if (const Value* v = find(name)) return *v;
    throw Error("UNDEFINED_VARIABLE", "variable '" + std::string(name) + "' is not defined");
  }

  bool is_poisoned(std::string_view name) const {
    const Value* v = find(name);
    return v != nullptr && v->is_poison();
  }

  VariableMap snapshot() const { return *this; }

  VariableMap apply(std::span<const Mutation> muts) const {
    if (muts.empty()) return *this;
    Entries next = *entries_;
    for (const Mutation& m : muts) apply_one(next, m);
    VariableMap out;
    out.entries_ = std::make_shared<const Entries>(std::move(next));
    out.revision_ = revision_ + 1;
    out.shadow_ = shadow_;
    return out;
  }

  VariableMap apply(std::initializer_list<Mutation> muts) const {
    return apply(std::span<const Mutation>(muts.begin(), muts.size()));
  }

  VariableMap poison(const std::string& name, std::uint64_t origin_dyn_id) const {
    if (!shadow_) throw Error("CONTRACT_VIOLATION", "poison is only legal in shadow maps");
    return apply({Mutation::set(name, Poison{origin_dyn_id})});
  }

  friend bool operator==(const VariableMap& a, const VariableMap& b) {
    return a.entries_ == b.entries_ || *a.entries_ == *b.entries_;
  }

 private:
  void apply_one(Entries& e, const Mutation& m) const {
    if (m.name.empty()) throw Error("BAD_NAME", "variable name must be non-empty");
    switch (m.op) {
      case Mutation::Op::Set: {
        if (m.value.is_poison() && !shadow_) {
          throw Error("CONTRACT_VIOLATION", "poison written to execution map ('" + m.name + "')");
        }
        if (!m.value.is_poison()) check_reserved_type(m.name, m.value);
        e.insert_or_assign(m.name, m.value);
        return;
      }
      case Mutation::Op::Remove: {
        if (vars::is_reserved(m.name)) {
          throw Error("RESERVED_MUTATION", "reserved variable '" + m.name + "' cannot be removed");
        }
        e.erase(m.name);
        return;
      }
      case Mutation::Op::ListAppend: {
        auto it = e.find(m.name);
        if (it == e.end()) throw Error("UNDEFINED_VARIABLE", "variable '" + m.name + "' is not defined");
        it->second = appended(it->second, m.value, m.name);
        return;
      }
      case Mutation::Op::ListRemoveByKey: {
        auto it = e.find(m.name);
        if (it == e.end()) throw Error("UNDEFINED_VARIABLE", "variable '" + m.name + "' is not defined");
        it->second = removed(it->second, m.key, m.name);
        return;
      }
    }
  }

  static void check_reserved_type(std::string_view name, const Value& v) {
    ValueKind want;
    if (name == vars::kJps) {
      want = ValueKind::Vector;
    } else if (name == vars::kActiveTool) {
      want = ValueKind::Int;
    } else if (name == vars::kStaticEnv) {
      want = ValueKind::Compound;
    } else if (name == vars::kPickedObjects || name == vars::kPlacedObjects) {
      want = ValueKind::Objects;
    } else {
      return;
    }
    if (v.kind() != want) {
      throw Error("TYPE_MISMATCH", "reserved variable '" + std::string(name) + "' must hold " + kind_name(want));
    }
  }

  static Value appended(const Value& target, const Value& item, const std::string& name) {
    switch (target.kind()) {
      case ValueKind::Objects: {
        ObjectSet set = target.as_objects();
        if (item.kind() != ValueKind::Objects) {
          throw Error("TYPE_MISMATCH", "ListAppend to '" + name + "' needs ObjectSet items");
        }
        for (const auto& o : item.as_objects()) set.push_back(o);
        return set;
      }
      case ValueKind::Vector: {
        std::vector<double> v = target.as_vector();
        if (item.is_numeric()) {
          v.push_back(item.as_float());
        } else if (item.kind() == ValueKind::Vector) {
          v.insert(v.end(), item.as_vector().begin(), item.as_vector().end());
        } else {
          throw Error("TYPE_MISMATCH", "ListAppend to '" + name + "' needs numeric items");
        }
        return v;
      }
      case ValueKind::Tree:
        if (target.as_tree().is_array()) {
          Json arr = target.as_tree();
          arr.push_back(to_json(item));
          return arr;
        }
        break;
      default: break;
    }
    throw Error("TYPE_MISMATCH", "ListAppend on non-list variable '" + name + "'");
  }

  static Value removed(const Value& target, const std::string& key, const std::string& name) {
    if (target.kind() == ValueKind::Objects) {
      ObjectSet set;
      for (const auto& o : target.as_objects()) {
        if (o.id != key) set.push_back(o);
      }
      return set;
    }
    if (target.kind() == ValueKind::Tree && target.as_tree().is_array()) {
      Json arr = Json::array();
      for (const auto& e : target.as_tree()) {
        if (!(e.is_object() && e.contains("id") && e["id"] == key)) arr.push_back(e);
      }
      return arr;
    }
    throw Error("TYPE_MISMATCH", "ListRemoveByKey on non-list variable '" + name + "'");
  }

  std::shared_ptr<const Entries> entries_;
  std::uint64_t revision_ = 0;
  bool shadow_ = false;
};

/// Builds the initial execution map: reserved variables present, no picked or
/// placed objects, tool 0 active. Joint limits are read from static_env.robot.limits.
inline VariableMap init_map(const Compound& static_env, const std::vector<double>& home_jps) {
  std::vector<std::array<double, 2>> limits(home_jps.size(), {-kPi, kPi});
  if (static_env.contains("robot")) {
    const Value& robot = static_env.at("robot");
    if (robot.kind() == ValueKind::Tree && robot.as_tree().contains("limits")) {
      const Json& l = robot.as_tree()["limits"];
      if (l.size() != home_jps.size()) {
        throw Error("JOINT_LIMIT", "home configuration has " + std::to_string(home_jps.size()) +
                                       " joints, robot model has " + std::to_string(l.size()));
      }
      for (std::size_t i = 0; i < l.size(); ++i) limits[i] = {l[i][0].get<double>(), l[i][1].get<double>()};
    }
  }
  for (std::size_t i = 0; i < home_jps.size(); ++i) {
    if (home_jps[i] < limits[i][0] || home_jps[i] > limits[i][1]) {
      throw Error("JOINT_LIMIT", "home joint " + std::to_string(i) + " outside limits");
    }
  }
  return VariableMap{}.apply({Mutation::set(std::string(vars::kJps), home_jps),
                              Mutation::set(std::string(vars::kActiveTool), 0),
                              Mutation::set(std::string(vars::kStaticEnv), static_env),
                              Mutation::set(std::string(vars::kPickedObjects), ObjectSet{}),
                              Mutation::set(std::string(vars::kPlacedObjects), ObjectSet{})});
}

namespace detail {
inline Json strip_volatile(const Json& j) {
  if (j.is_object()) {
    Json out = Json::object();
    for (const auto& [k, v] : j.items()) {
      if (k == "ts_ms" || k == "msg_id") continue;
      out[k] = strip_volatile(v);
    }
    return out;
  }
  if (j.is_array()) {
    Json out = Json::array();
    for (const auto& v : j) out.push_back(strip_volatile(v));
    return out;
  }
  return j;
}
}  // namespace detail

/// Canonical (sorted-key) serialization with volatile message meta removed.
inline std::string canonical_dump(const VariableMap& map) {
  Json out = Json::object();
  for (const auto& [k, v] : map.entries()) out[k] = detail::strip_volatile(to_json(v));
  return out.dump();
}

}  // namespace cellscript
