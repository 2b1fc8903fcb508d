#pragma once

// Value taxonomy stored in the variable map.

#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "cellscript/error.hpp"
#include "cellscript/geometry.hpp"

namespace cellscript {

using Json = nlohmann::json;

struct GraspAnnotation {
  int tool_index = 0;
  Pose grasp_pose_in_object;  // TCP pose in the object frame
  double score = 0.0;
  std::vector<int> digital_out_ports;
  // Additional objects carried by the same grasp (multi-pick).
  std::vector<std::string> co_picks;
};

struct WorldObject {
  std::string id;
  std::string type;
  Polygon polygon;  // object frame, CCW
  Pose pose;        // world frame, or flange frame while attached
  int symmetry_order = 1;
  std::vector<GraspAnnotation> grasps;
  Json meta = Json::object();
};

using ObjectSet = std::vector<WorldObject>;

/// AvailableUponExecution marker; only legal in shadow maps.
struct Poison {
  std::uint64_t origin = 0;  // dyn-id of the node whose execution produces the value
};

struct Compound;

enum class ValueKind { Int, Float, Bool, String, Vector, Pose, Tree, Compound, Objects, Poison };

class Value {
 public:
  using Storage = std::variant<std::int64_t, double, bool, std::string, std::vector<double>, Pose, Json,
                               std::shared_ptr<const Compound>, ObjectSet, Poison>;

  Value() : data_(std::int64_t{0}) {}
  Value(std::int64_t v) : data_(v) {}
  Value(int v) : data_(std::int64_t{v}) {}
  Value(double v) : data_(v) {}
  Value(bool v) : data_(v) {}
  Value(std::string v) : data_(std::move(v)) {}
  Value(const char* v) : data_(std::string(v)) {}
  Value(std::vector<double> v) : data_(std::move(v)) {}
  Value(Pose v) : data_(v) {}
  Value(Json v) : data_(std::move(v)) {}
  Value(Compound v);
  Value(ObjectSet v) : data_(std::move(v)) {}
  Value(Poison v) : data_(v) {}

  ValueKind kind() const { return static_cast<ValueKind>(data_.index()); }
  bool is_poison() const { return kind() == ValueKind::Poison; }

  std::int64_t as_int() const { return get<std::int64_t>("Int"); }
  double as_float() const {
    if (kind() == ValueKind::Int) return static_cast<double>(std::get<std::int64_t>(data_));
    return get<double>("Float");
  }
  bool as_bool() const { return get<bool>("Bool"); }
  const std::string& as_string() const { return get<std::string>("String"); }
  const std::vector<double>& as_vector() const { return get<std::vector<double>>("Vector"); }
  const Pose& as_pose() const { return get<Pose>("Pose"); }
  const Json& as_tree() const { return get<Json>("Tree"); }
  const Compound& as_compound() const { return *get<std::shared_ptr<const Compound>>("Compound"); }
  const ObjectSet& as_objects() const { return get<ObjectSet>("ObjectSet"); }
  const Poison& as_poison() const { return get<Poison>("Poison"); }

  bool is_numeric() const { return kind() == ValueKind::Int || kind() == ValueKind::Float; }

  const Storage& storage() const { return data_; }

  friend bool operator==(const Value& a, const Value& b);

 private:
  template <typename T>
  const T& get(const char* expected) const {
    if (const T* p = std::get_if<T>(&data_)) return *p;
    throw Error("TYPE_MISMATCH", std::string("expected ") + expected + " value");
  }

  Storage data_;
};

struct Compound {
  std::map<std::string, Value> fields;

  const Value& at(const std::string& key) const {
    auto it = fields.find(key);
    if (it == fields.end()) throw Error("UNDEFINED_VARIABLE", "compound has no field '" + key + "'");
    return it->second;
  }
  bool contains(const std::string& key) const { return fields.count(key) != 0; }
  friend bool operator==(const Compound&, const Compound&) = default;
};

inline Value::Value(Compound v) : data_(std::make_shared<const Compound>(std::move(v))) {}

inline const char* kind_name(ValueKind k) {
  switch (k) {
    case ValueKind::Int: return "Int";
    case ValueKind::Float: return "Float";
    case ValueKind::Bool: return "Bool";
    case ValueKind::String: return "String";
    case ValueKind::Vector: return "Vector";
    case ValueKind::Pose: return "Pose";
    case ValueKind::Tree: return "Tree";
    case ValueKind::Compound: return "Compound";
    case ValueKind::Objects: return "ObjectSet";
    case ValueKind::Poison: return "Poison";
  }
  return "?";
}

// ---- JSON encoding ---------------------------------------------------------

inline Json pose_to_json(const Pose& p) { return Json::array({p.x, p.y, p.theta}); }

inline Pose pose_from_json(const Json& j) {
  if (!j.is_array() || j.size() != 3) throw Error("BAD_PARAM", "pose must be [x, y, theta]");
  for (const auto& e : j) {
    if (!e.is_number()) throw Error("BAD_PARAM", "pose components must be numbers");
  }
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

inline Json polygon_to_json(const Polygon& poly) {
  Json out = Json::array();
  for (const Vec2& v : poly) out.push_back(Json::array({v.x, v.y}));
  return out;
}

inline Polygon polygon_from_json(const Json& j) {
  if (!j.is_array()) throw Error("BAD_PARAM", "polygon must be a list of [x, y]");
  Polygon poly;
  for (const auto& v : j) {
    if (!v.is_array() || v.size() != 2) throw Error("BAD_PARAM", "polygon vertex must be [x, y]");
    poly.push_back({v[0].get<double>(), v[1].get<double>()});
  }
  return poly;
}

inline Json to_json(const GraspAnnotation& g) {
  Json j{{"tool", g.tool_index}, {"pose", pose_to_json(g.grasp_pose_in_object)}, {"score", g.score},
         {"do_ports", g.digital_out_ports}};
  if (!g.co_picks.empty()) j["co_picks"] = g.co_picks;
  return j;
}

inline GraspAnnotation grasp_from_json(const Json& j) {
  GraspAnnotation g;
  g.tool_index = j.value("tool", 0);
  g.grasp_pose_in_object = pose_from_json(j.at("pose"));
  g.score = j.value("score", 0.0);
  g.digital_out_ports = j.value("do_ports", std::vector<int>{});
  g.co_picks = j.value("co_picks", std::vector<std::string>{});
  if (!std::isfinite(g.score) || g.score < 0.0 || g.score > 1.0) {
    throw Error("BAD_PARAM", "grasp score must be finite and within [0, 1]");
  }
  return g;
}

inline void validate_object(const WorldObject& o) {
  if (o.id.empty()) throw Error("BAD_PARAM", "object id must be non-empty");
  if (!is_valid_convex(o.polygon)) {
    throw Error("BAD_PARAM", "object '" + o.id + "' polygon must be convex, CCW and non-degenerate");
  }
  if (o.symmetry_order < 1) throw Error("BAD_PARAM", "object '" + o.id + "' symmetry order must be >= 1");
}

inline Json to_json(const WorldObject& o) {
  Json grasps = Json::array();
  for (const auto& g : o.grasps) grasps.push_back(to_json(g));
  return Json{{"id", o.id},
              {"type", o.type},
              {"polygon", polygon_to_json(o.polygon)},
              {"pose", pose_to_json(o.pose)},
              {"k", o.symmetry_order},
              {"grasps", grasps},
              {"meta", o.meta}};
}

inline WorldObject object_from_json(const Json& j) {
  WorldObject o;
  o.id = j.at("id").get<std::string>();
  o.type = j.value("type", std::string{});
  o.polygon = polygon_from_json(j.at("polygon"));
  o.pose = pose_from_json(j.at("pose"));
  o.symmetry_order = j.value("k", 1);
  for (const auto& g : j.value("grasps", Json::array())) o.grasps.push_back(grasp_from_json(g));
  o.meta = j.value("meta", Json::object());
  validate_object(o);
  return o;
}

inline Json objects_to_json(const ObjectSet& set) {
  Json out = Json::array();
  for (const auto& o : set) out.push_back(to_json(o));
  return out;
}

inline ObjectSet objects_from_json(const Json& j) {
  ObjectSet out;
  for (const auto& o : j) out.push_back(object_from_json(o));
  return out;
}

/// Plain JSON rendering. Pose is [x, y, theta]; poison renders as {"$poison": origin}.
inline Json to_json(const Value& v) {
  return std::visit(
      [](const auto& x) -> Json {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, Pose>) {
          return pose_to_json(x);
        } else if constexpr (std::is_same_v<T, std::shared_ptr<const Compound>>) {
          Json out = Json::object();
          for (const auto& [k, f] : x->fields) out[k] = to_json(f);
          return out;
        } else if constexpr (std::is_same_v<T, ObjectSet>) {
          return objects_to_json(x);
        } else if constexpr (std::is_same_v<T, Poison>) {
          return Json{{"$poison", x.origin}};
        } else {
          return Json(x);
        }
      },
      v.storage());
}

/// Decodes a document value. Scalars map to Int/Float/Bool/String, numeric arrays to Vector,
/// {"$pose": [...]}, {"$compound": {...}} and {"$objects": [...]} select the typed variants;
/// anything else becomes a Tree.
inline Value value_from_json(const Json& j) {
  if (j.is_boolean()) return Value(j.get<bool>());
  if (j.is_number_integer()) return Value(j.get<std::int64_t>());
  if (j.is_number()) return Value(j.get<double>());
  if (j.is_string()) return Value(j.get<std::string>());
  if (j.is_array() && !j.empty() &&
      std::all_of(j.begin(), j.end(), [](const Json& e) { return e.is_number(); })) {
    return Value(j.get<std::vector<double>>());
  }
  if (j.is_object() && j.size() == 1) {
    if (j.contains("$pose")) return Value(pose_from_json(j["$pose"]));
    if (j.contains("$objects")) return Value(objects_from_json(j["$objects"]));
    if (j.contains("$compound")) {
      Compound c;
      for (const auto& [k, f] : j["$compound"].items()) c.fields[k] = value_from_json(f);
      return Value(std::move(c));
    }
  }
  return Value(j);
}

inline bool operator==(const Value& a, const Value& b) {
  if (a.kind() != b.kind()) return false;
  switch (a.kind()) {
    case ValueKind::Pose: return approx_equal(a.as_pose(), b.as_pose());
    case ValueKind::Compound: return a.as_compound() == b.as_compound();
    case ValueKind::Objects: return objects_to_json(a.as_objects()) == objects_to_json(b.as_objects());
    case ValueKind::Poison: return a.as_poison().origin == b.as_poison().origin;
    default:
      return std::visit(
          [&](const auto& x) {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, std::int64_t> || std::is_same_v<T, double> ||
                          std::is_same_v<T, bool> || std::is_same_v<T, std::string> ||
                          std::is_same_v<T, std::vector<double>> || std::is_same_v<T, Json>) {
              return x == std::get<T>(b.storage());
            } else {
              return false;
            }
          },
          a.storage());
  }
}

}  // namespace cellscript
