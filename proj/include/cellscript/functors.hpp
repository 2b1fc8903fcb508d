#pragma once

// FunctorVariableMutation registry. A functor maps (variable map, args) to a
// mutation list and declares which variable names it reads and writes.

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "cellscript/variable_map.hpp"

namespace cellscript {

struct Functor {
  std::function<void(const Json& args)> check;  // throws BAD_PARAM / EMPTY_VAR_NAME
  std::function<std::vector<std::string>(const Json& args)> reads;
  std::function<std::vector<std::string>(const Json& args)> writes;
  std::function<std::vector<Mutation>(const VariableMap&, const Json& args)> eval;
};

namespace detail {

inline std::string var_arg(const Json& args, const char* key) {
  if (!args.is_object() || !args.contains(key) || !args[key].is_string()) {
    throw Error("BAD_PARAM", std::string("functor argument '") + key + "' must be a string");
  }
  std::string v = args[key].get<std::string>();
  if (v.empty()) throw Error("EMPTY_VAR_NAME", std::string("functor argument '") + key + "' is empty");
  return v;
}

inline Value numeric_add(const Value& v, const Json& delta, const std::string& name) {
  if (!v.is_numeric()) throw Error("TYPE_MISMATCH", "counter '" + name + "' is not numeric");
  if (v.kind() == ValueKind::Int && delta.is_number_integer()) return Value(v.as_int() + delta.get<std::int64_t>());
  return Value(v.as_float() + delta.get<double>());
}

inline Functor counter_step(int sign) {
  Functor f;
  f.check = [](const Json& a) {
    var_arg(a, "var");
    if (a.contains("by") && !a["by"].is_number()) throw Error("BAD_PARAM", "'by' must be a number");
  };
  f.reads = [](const Json& a) { return std::vector<std::string>{var_arg(a, "var")}; };
  f.writes = f.reads;
  f.eval = [sign](const VariableMap& m, const Json& a) {
    const std::string var = var_arg(a, "var");
    Json by = a.value("by", Json(1));
    by = by.is_number_integer() ? Json(sign * by.get<std::int64_t>()) : Json(sign * by.get<double>());
    return std::vector<Mutation>{Mutation::set(var, numeric_add(m.at(var), by, var))};
  };
  return f;
}

inline Value empty_like(const Value& v, const std::string& name) {
  switch (v.kind()) {
    case ValueKind::Objects: return ObjectSet{};
    case ValueKind::Vector: return std::vector<double>{};
    case ValueKind::Tree:
      if (v.as_tree().is_array()) return Json::array();
      break;
    default: break;
  }
  throw Error("TYPE_MISMATCH", "'" + name + "' is not a list");
}

/// Objects held by a perception variable: either an ObjectSet or a Compound with an `objects` field.
inline const ObjectSet& perception_objects(const Value& v) {
  if (v.kind() == ValueKind::Compound) return v.as_compound().at("objects").as_objects();
  return v.as_objects();
}

}  // namespace detail

class FunctorRegistry {
 public:
  void add(std::string name, Functor f) { table_[std::move(name)] = std::move(f); }

  const Functor* find(const std::string& name) const {
    auto it = table_.find(name);
    return it == table_.end() ? nullptr : &it->second;
  }

  const Functor& at(const std::string& name) const {
    if (const Functor* f = find(name)) return *f;
    throw Error("UNKNOWN_FUNCTOR", "functor '" + name + "' is not registered");
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& [k, _] : table_) out.push_back(k);
    return out;
  }

  static FunctorRegistry with_builtins();

 private:
  std::map<std::string, Functor> table_;
};

inline FunctorRegistry FunctorRegistry::with_builtins() {
  using detail::var_arg;
  FunctorRegistry r;
  r.add("counter.inc", detail::counter_step(1));
  r.add("counter.dec", detail::counter_step(-1));

  Functor set;
  set.check = [](const Json& a) {
    var_arg(a, "var");
    if (a.contains("value") && !a["value"].is_number()) throw Error("BAD_PARAM", "'value' must be a number");
  };
  set.reads = [](const Json&) { return std::vector<std::string>{}; };
  set.writes = [](const Json& a) { return std::vector<std::string>{var_arg(a, "var")}; };
  set.eval = [](const VariableMap&, const Json& a) {
    return std::vector<Mutation>{Mutation::set(var_arg(a, "var"), value_from_json(a.value("value", Json(0))))};
  };
  r.add("counter.set", set);

  Functor clear;
  clear.check = [](const Json& a) { var_arg(a, "var"); };
  clear.reads = [](const Json& a) { return std::vector<std::string>{var_arg(a, "var")}; };
  clear.writes = clear.reads;
  clear.eval = [](const VariableMap& m, const Json& a) {
    const std::string var = var_arg(a, "var");
    return std::vector<Mutation>{Mutation::set(var, detail::empty_like(m.at(var), var))};
  };
  r.add("list.clear", clear);

  Functor copy;
  copy.check = [](const Json& a) {
    var_arg(a, "from");
    var_arg(a, "to");
  };
  copy.reads = [](const Json& a) { return std::vector<std::string>{var_arg(a, "from")}; };
  copy.writes = [](const Json& a) { return std::vector<std::string>{var_arg(a, "to")}; };
  copy.eval = [](const VariableMap& m, const Json& a) {
    return std::vector<Mutation>{Mutation::set(var_arg(a, "to"), m.at(var_arg(a, "from")))};
  };
  r.add("var.copy", copy);

  // Number of objects left in a perception variable.
  Functor count;
  count.check = [](const Json& a) {
    var_arg(a, "var");
    var_arg(a, "to");
  };
  count.reads = [](const Json& a) { return std::vector<std::string>{var_arg(a, "var")}; };
  count.writes = [](const Json& a) { return std::vector<std::string>{var_arg(a, "to")}; };
  count.eval = [](const VariableMap& m, const Json& a) {
    const auto n = static_cast<std::int64_t>(detail::perception_objects(m.at(var_arg(a, "var"))).size());
    return std::vector<Mutation>{Mutation::set(var_arg(a, "to"), Value(n))};
  };
  r.add("perception.count", count);
  return r;
}

inline const FunctorRegistry& builtin_functors() {
  static const FunctorRegistry r = FunctorRegistry::with_builtins();
  return r;
}

}  // namespace cellscript
