#pragma once

// Control-flow-graph programs: document parsing, canonical serialization,
// static validation, plan-routine ordering and frontend lowering.

#include <algorithm>
#include <map>
#include <optional>
#include <ostream>
#include <queue>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cellscript/functors.hpp"
#include "cellscript/trajectory_config.hpp"

namespace cellscript {

inline constexpr const char* kProgramVersion = "cellscript/1";
inline constexpr const char* kFrontendVersion = "cellscript-frontend/1";

enum class NodeKind {
  RoutineEntry,
  PlanRoutineEntry,
  RoutineExit,
  RoutineInvoke,
  MoveJoint,
  MoveToPick,
  RelativeMove,
  MoveToObjectPose,
  PalletizationMove,
  MoveTrajectoryByVariable,
  PlaceObject,
  CallService,
  SetVariable,
  FunctorVariableMutation,
  CounterBranch,
  ExceptionProbe,
  PlannerSelect,
};

inline constexpr std::pair<NodeKind, const char*> kKindNames[] = {
    {NodeKind::RoutineEntry, "RoutineEntry"},
    {NodeKind::PlanRoutineEntry, "PlanRoutineEntry"},
    {NodeKind::RoutineExit, "RoutineExit"},
    {NodeKind::RoutineInvoke, "RoutineInvoke"},
    {NodeKind::MoveJoint, "MoveJoint"},
    {NodeKind::MoveToPick, "MoveToPick"},
    {NodeKind::RelativeMove, "RelativeMove"},
    {NodeKind::MoveToObjectPose, "MoveToObjectPose"},
    {NodeKind::PalletizationMove, "PalletizationMove"},
    {NodeKind::MoveTrajectoryByVariable, "MoveTrajectoryByVariable"},
    {NodeKind::PlaceObject, "PlaceObject"},
    {NodeKind::CallService, "CallService"},
    {NodeKind::SetVariable, "SetVariable"},
    {NodeKind::FunctorVariableMutation, "FunctorVariableMutation"},
    {NodeKind::CounterBranch, "CounterBranch"},
    {NodeKind::ExceptionProbe, "ExceptionProbe"},
    {NodeKind::PlannerSelect, "PlannerSelect"},
};

inline const char* kind_name(NodeKind k) {
  for (const auto& [kind, name] : kKindNames) {
    if (kind == k) return name;
  }
  return "?";
}

inline std::optional<NodeKind> kind_from_name(const std::string& s) {
  for (const auto& [kind, name] : kKindNames) {
    if (s == name) return kind;
  }
  return std::nullopt;
}

inline bool is_movement(NodeKind k) {
  switch (k) {
    case NodeKind::MoveJoint:
    case NodeKind::MoveToPick:
    case NodeKind::RelativeMove:
    case NodeKind::MoveToObjectPose:
    case NodeKind::PalletizationMove:
    case NodeKind::MoveTrajectoryByVariable: return true;
    default: return false;
  }
}

inline bool needs_online_params(NodeKind k) { return is_movement(k) || k == NodeKind::PlannerSelect; }

/// Kinds that only make sense inside a plan-routine.
inline bool plan_only(NodeKind k) {
  return is_movement(k) || k == NodeKind::PlaceObject || k == NodeKind::PlannerSelect;
}

inline bool is_entry(NodeKind k) { return k == NodeKind::RoutineEntry || k == NodeKind::PlanRoutineEntry; }

inline constexpr const char* kNextPort = "next";
inline constexpr const char* kPlanFailurePort = "plan_failure";

struct Port {
  std::string label;
  bool exception = false;
  friend bool operator==(const Port&, const Port&) = default;
};

inline std::vector<Port> default_ports(NodeKind k) {
  switch (k) {
    case NodeKind::RoutineExit: return {};
    case NodeKind::CounterBranch: return {{"lt", false}, {"ge", false}};
    case NodeKind::ExceptionProbe: return {{"ok", false}, {"fail", true}};
    case NodeKind::PlannerSelect: return {};
    default: return {{kNextPort, false}};
  }
}

struct Node {
  std::string id;
  NodeKind kind = NodeKind::RoutineExit;
  Json params = Json::object();
  std::vector<Port> ports;
  bool ports_declared = false;  // ports came from the document, not defaults
  Json layout;                  // opaque, preserved for the studio

  const Port* port(const std::string& label) const {
    for (const auto& p : ports) {
      if (p.label == label) return &p;
    }
    return nullptr;
  }
  bool is_branch() const { return ports.size() >= 2; }
};

struct Edge {
  std::string from;
  std::string port;
  std::string to;
  friend bool operator==(const Edge&, const Edge&) = default;
};

enum class RoutineKind { Plain, Plan };

struct Routine {
  std::string id;
  RoutineKind kind = RoutineKind::Plain;
  std::vector<Node> nodes;  // document order
  std::vector<Edge> edges;
  std::string entry;
  Json layout;

  const Node* node(const std::string& nid) const {
    auto it = index_.find(nid);
    return it == index_.end() ? nullptr : &nodes[it->second];
  }
  const Node& at(const std::string& nid) const {
    if (const Node* n = node(nid)) return *n;
    throw Error("UNKNOWN_NODE", "routine '" + id + "' has no node '" + nid + "'");
  }
  /// Target of (node, port), if wired. The first edge wins when duplicated.
  std::optional<std::string> next(const std::string& nid, const std::string& port) const {
    auto it = next_.find({nid, port});
    if (it == next_.end()) return std::nullopt;
    return it->second;
  }
  bool is_plan() const { return kind == RoutineKind::Plan; }

  void reindex() {
    index_.clear();
    next_.clear();
    for (std::size_t i = 0; i < nodes.size(); ++i) index_.emplace(nodes[i].id, i);
    for (const auto& e : edges) next_.emplace(std::pair{e.from, e.port}, e.to);
  }

 private:
  std::map<std::string, std::size_t> index_;
  std::map<std::pair<std::string, std::string>, std::string> next_;
};

struct Program {
  std::string version = kProgramVersion;
  std::string main;
  std::map<std::string, Routine> routines;
  Json layout;

  const Routine& routine(const std::string& rid) const {
    auto it = routines.find(rid);
    if (it == routines.end()) throw Error("UNKNOWN_ROUTINE", "no routine '" + rid + "'");
    return it->second;
  }
};

enum class Severity { Error, Warning };

struct Diagnostic {
  std::string code;
  Severity severity = Severity::Error;
  std::string routine;
  std::string node;
  std::string message;
  std::vector<std::string> witness;  // cycle node-ids for loop diagnostics

  friend bool operator==(const Diagnostic&, const Diagnostic&) = default;
};

inline std::string format(const Diagnostic& d) {
  std::string loc = d.routine.empty() ? "-" : d.routine;
  if (!d.node.empty()) loc += "/" + d.node;
  return d.code + " " + loc + ": " + d.message;
}

inline std::ostream& operator<<(std::ostream& os, const Diagnostic& d) { return os << format(d); }

inline Json to_json(const Diagnostic& d) {
  Json j{{"code", d.code},
         {"severity", d.severity == Severity::Error ? "error" : "warning"},
         {"routine", d.routine},
         {"node", d.node},
         {"message", d.message}};
  if (!d.witness.empty()) j["witness"] = d.witness;
  return j;
}

inline bool has_errors(const std::vector<Diagnostic>& ds) {
  return std::any_of(ds.begin(), ds.end(), [](const Diagnostic& d) { return d.severity == Severity::Error; });
}

struct ParseResult {
  std::optional<Program> program;
  std::vector<Diagnostic> diagnostics;
  bool ok() const { return program.has_value() && !has_errors(diagnostics); }
};

// ---- parsing ------------------------------------------------------------------------

namespace detail {

inline Diagnostic diag(std::string code, std::string routine, std::string node, std::string message) {
  return {std::move(code), Severity::Error, std::move(routine), std::move(node), std::move(message), {}};
}

inline std::vector<Port> parse_ports(const Json& j) {
  if (!j.is_array()) throw Error("PARSE_ERROR", "ports must be a list");
  std::vector<Port> out;
  for (const auto& p : j) {
    if (p.is_string()) {
      out.push_back({p.get<std::string>(), false});
    } else if (p.is_object() && p.contains("label") && p["label"].is_string()) {
      out.push_back({p["label"].get<std::string>(), p.value("exception", false)});
    } else {
      throw Error("PARSE_ERROR", "port must be a label or {label, exception}");
    }
  }
  return out;
}

inline Routine parse_routine(const std::string& rid, const Json& j, std::vector<Diagnostic>& diags) {
  Routine r;
  r.id = rid;
  if (!j.is_object()) throw Error("PARSE_ERROR", "routine must be an object");
  const std::string kind = j.value("kind", std::string("plain"));
  if (kind == "plain") {
    r.kind = RoutineKind::Plain;
  } else if (kind == "plan") {
    r.kind = RoutineKind::Plan;
  } else {
    throw Error("PARSE_ERROR", "routine kind must be 'plain' or 'plan'");
  }
  r.entry = j.value("entry", std::string{});
  if (j.contains("layout")) r.layout = j["layout"];

  std::set<std::string> seen;
  for (const auto& jn : j.value("nodes", Json::array())) {
    if (!jn.is_object() || !jn.contains("id") || !jn["id"].is_string() || !jn.contains("kind") ||
        !jn["kind"].is_string()) {
      throw Error("PARSE_ERROR", "node must be an object with string id and kind");
    }
    Node n;
    n.id = jn["id"].get<std::string>();
    if (n.id.empty()) throw Error("PARSE_ERROR", "node id must be non-empty");
    const auto kind_opt = kind_from_name(jn["kind"].get<std::string>());
    if (!kind_opt) {
      diags.push_back(diag("UNKNOWN_KIND", rid, n.id, "unknown node kind '" + jn["kind"].get<std::string>() + "'"));
      continue;
    }
    n.kind = *kind_opt;
    n.params = jn.value("params", Json::object());
    if (!n.params.is_object()) {
      diags.push_back(diag("BAD_PARAM", rid, n.id, "params must be an object"));
      n.params = Json::object();
    }
    if (jn.contains("ports")) {
      n.ports = parse_ports(jn["ports"]);
      n.ports_declared = true;
    } else {
      n.ports = default_ports(n.kind);
    }
    if (jn.contains("layout")) n.layout = jn["layout"];
    if (!seen.insert(n.id).second) {
      diags.push_back(diag("DUPLICATE_ID", rid, n.id, "node id used twice"));
      continue;
    }
    r.nodes.push_back(std::move(n));
  }
  for (const auto& je : j.value("edges", Json::array())) {
    if (!je.is_object() || !je.contains("from") || !je["from"].is_array() || je["from"].size() != 2 ||
        !je["from"][0].is_string() || !je["from"][1].is_string() || !je.contains("to") || !je["to"].is_string()) {
      throw Error("PARSE_ERROR", "edge must be {from: [node, port], to: node}");
    }
    r.edges.push_back({je["from"][0].get<std::string>(), je["from"][1].get<std::string>(), je["to"].get<std::string>()});
  }
  r.reindex();
  return r;
}

}  // namespace detail

inline ParseResult parse_program_json(const Json& doc) {
  ParseResult res;
  try {
    if (!doc.is_object()) throw Error("PARSE_ERROR", "program document must be an object");
    if (!doc.contains("version") || !doc["version"].is_string()) {
      throw Error("BAD_VERSION", "missing version field");
    }
    if (doc["version"].get<std::string>() != kProgramVersion) {
      throw Error("BAD_VERSION", "unsupported version '" + doc["version"].get<std::string>() + "'");
    }
    Program p;
    p.version = kProgramVersion;
    if (!doc.contains("main") || !doc["main"].is_string()) throw Error("PARSE_ERROR", "main must be a string");
    p.main = doc["main"].get<std::string>();
    if (!doc.contains("routines") || !doc["routines"].is_object()) {
      throw Error("PARSE_ERROR", "routines must be an object");
    }
    if (doc.contains("layout")) p.layout = doc["layout"];
    for (const auto& [rid, jr] : doc["routines"].items()) {
      try {
        p.routines.emplace(rid, detail::parse_routine(rid, jr, res.diagnostics));
      } catch (const Error& e) {
        res.diagnostics.push_back(detail::diag(e.code(), rid, "", e.what()));
      } catch (const Json::exception& e) {
        res.diagnostics.push_back(detail::diag("PARSE_ERROR", rid, "", e.what()));
      }
    }
    if (!has_errors(res.diagnostics)) res.program = std::move(p);
  } catch (const Error& e) {
    res.diagnostics.push_back(detail::diag(e.code(), "", "", e.what()));
  } catch (const Json::exception& e) {
    res.diagnostics.push_back(detail::diag("PARSE_ERROR", "", "", e.what()));
  }
  return res;
}

inline ParseResult parse_program(const std::string& text) {
  Json doc;
  try {
    doc = Json::parse(text);
  } catch (const Json::parse_error& e) {
    ParseResult res;
    res.diagnostics.push_back(detail::diag("PARSE_ERROR", "", "", e.what()));
    return res;
  }
  return parse_program_json(doc);
}

// ---- serialization --------------------------------------------------------------------

inline Json to_json(const Routine& r) {
  Json nodes = Json::array();
  for (const auto& n : r.nodes) {
    Json jn{{"id", n.id}, {"kind", kind_name(n.kind)}, {"params", n.params}};
    if (n.ports_declared) {
      Json ports = Json::array();
      for (const auto& p : n.ports) {
        ports.push_back(p.exception ? Json{{"label", p.label}, {"exception", true}} : Json(p.label));
      }
      jn["ports"] = ports;
    }
    if (!n.layout.is_null()) jn["layout"] = n.layout;
    nodes.push_back(jn);
  }
  Json edges = Json::array();
  for (const auto& e : r.edges) edges.push_back(Json{{"from", {e.from, e.port}}, {"to", e.to}});
  Json j{{"kind", r.is_plan() ? "plan" : "plain"}, {"entry", r.entry}, {"nodes", nodes}, {"edges", edges}};
  if (!r.layout.is_null()) j["layout"] = r.layout;
  return j;
}

inline Json to_json(const Program& p) {
  Json routines = Json::object();
  for (const auto& [rid, r] : p.routines) routines[rid] = to_json(r);
  Json j{{"version", p.version}, {"main", p.main}, {"routines", routines}};
  if (!p.layout.is_null()) j["layout"] = p.layout;
  return j;
}

/// Canonical text: sorted keys, compact.
inline std::string serialize(const Program& p) { return to_json(p).dump(); }

// ---- graph algorithms --------------------------------------------------------------------

/// First directed cycle among nodes accepted by `keep`, as node-ids in traversal order.
/// Nodes are visited in id order and edges in document order, so the witness is stable.
template <class Keep>
std::vector<std::string> find_cycle(const Routine& r, Keep keep) {
  std::map<std::string, std::vector<std::string>> adj;
  std::vector<std::string> ids;
  for (const auto& n : r.nodes) {
    if (keep(n)) ids.push_back(n.id);
  }
  std::sort(ids.begin(), ids.end());
  for (const auto& e : r.edges) {
    const Node* a = r.node(e.from);
    const Node* b = r.node(e.to);
    if (a && b && keep(*a) && keep(*b)) adj[e.from].push_back(e.to);
  }
  std::map<std::string, int> color;  // 0 white, 1 on stack, 2 done
  std::vector<std::string> stack;
  std::vector<std::string> cycle;
  std::function<bool(const std::string&)> dfs = [&](const std::string& u) {
    color[u] = 1;
    stack.push_back(u);
    for (const auto& v : adj[u]) {
      if (color[v] == 1) {
        auto it = std::find(stack.begin(), stack.end(), v);
        cycle.assign(it, stack.end());
        return true;
      }
      if (color[v] == 0 && dfs(v)) return true;
    }
    stack.pop_back();
    color[u] = 2;
    return false;
  };
  for (const auto& id : ids) {
    if (color[id] == 0 && dfs(id)) return cycle;
  }
  return {};
}

inline std::string join(const std::vector<std::string>& xs, const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? sep : "") + xs[i];
  return out;
}

struct OrderResult {
  std::vector<std::string> order;
  std::vector<std::string> cycle;  // non-empty iff PR_LOOP
  bool ok() const { return cycle.empty(); }
};

/// Topological order of a plan-routine, ties broken by node-id.
inline OrderResult plan_routine_order(const Routine& r) {
  std::map<std::string, int> indeg;
  std::map<std::string, std::vector<std::string>> adj;
  for (const auto& n : r.nodes) indeg[n.id] = 0;
  for (const auto& e : r.edges) {
    if (!indeg.count(e.from) || !indeg.count(e.to)) continue;
    adj[e.from].push_back(e.to);
    ++indeg[e.to];
  }
  std::priority_queue<std::string, std::vector<std::string>, std::greater<>> ready;
  for (const auto& [id, d] : indeg) {
    if (d == 0) ready.push(id);
  }
  OrderResult res;
  while (!ready.empty()) {
    const std::string u = ready.top();
    ready.pop();
    res.order.push_back(u);
    for (const auto& v : adj[u]) {
      if (--indeg[v] == 0) ready.push(v);
    }
  }
  if (res.order.size() != r.nodes.size()) res.cycle = find_cycle(r, [](const Node&) { return true; });
  return res;
}

// ---- parameter schemas -------------------------------------------------------------------

namespace detail {

inline void allowed_keys(const Json& params, std::initializer_list<const char*> keys) {
  for (const auto& [k, _] : params.items()) {
    if (std::none_of(keys.begin(), keys.end(), [&](const char* a) { return k == a; })) {
      throw Error("BAD_PARAM", "unexpected parameter '" + k + "'");
    }
  }
}

inline void var_name(const Json& params, const char* key, bool required = true) {
  if (!params.contains(key)) {
    if (required) throw Error("BAD_PARAM", std::string("missing parameter '") + key + "'");
    return;
  }
  if (!params[key].is_string()) throw Error("BAD_PARAM", std::string("'") + key + "' must be a string");
  if (params[key].get<std::string>().empty()) throw Error("EMPTY_VAR_NAME", std::string("'") + key + "' is empty");
}

inline void service_name(const Json& params, const char* key) {
  if (!params.contains(key) || !params[key].is_string() || params[key].get<std::string>().empty()) {
    throw Error("BAD_PARAM", std::string("'") + key + "' must be a non-empty service id");
  }
}

inline void triple(const Json& params, const char* key) {
  if (!params.contains(key)) throw Error("BAD_PARAM", std::string("missing parameter '") + key + "'");
  const Json& v = params[key];
  if (!v.is_array() || v.size() != 3 || !std::all_of(v.begin(), v.end(), [](const Json& e) { return e.is_number(); })) {
    throw Error("BAD_PARAM", std::string("'") + key + "' must be three numbers");
  }
}

inline void trajectory_config(const Json& params) {
  if (params.contains("trajectory_config")) trajectory_config_from_json(params["trajectory_config"], TrajectoryMethod::JointLine);
}

inline void pick_filters(const Json& params) {
  if (!params.contains("filters")) return;
  const Json& f = params["filters"];
  if (!f.is_object()) throw Error("BAD_PARAM", "filters must be an object");
  allowed_keys(f, {"object_type", "tool_index", "min_score", "max_picked"});
  if (f.contains("object_type") && !f["object_type"].is_string()) throw Error("BAD_PARAM", "object_type must be a string");
  if (f.contains("tool_index")) {
    const Json& t = f["tool_index"];
    const bool ok = (t.is_number_integer() && t.get<int>() >= 0) || (t.is_string() && t.get<std::string>() == "any");
    if (!ok) throw Error("BAD_PARAM", "tool_index must be a non-negative integer or \"any\"");
  }
  if (f.contains("min_score") && (!f["min_score"].is_number() || f["min_score"].get<double>() < 0 ||
                                  f["min_score"].get<double>() > 1)) {
    throw Error("BAD_PARAM", "min_score must be within [0, 1]");
  }
  if (f.contains("max_picked") && (!f["max_picked"].is_number_integer() || f["max_picked"].get<int>() < 1)) {
    throw Error("BAD_PARAM", "max_picked must be an integer >= 1");
  }
}

}  // namespace detail

/// Per-kind user_params schema; throws BAD_PARAM or EMPTY_VAR_NAME.
inline void check_params(const Node& n, const FunctorRegistry& functors) {
  using namespace detail;
  const Json& p = n.params;
  switch (n.kind) {
    case NodeKind::RoutineEntry:
    case NodeKind::PlanRoutineEntry:
    case NodeKind::RoutineExit:
    case NodeKind::PlaceObject:
    case NodeKind::PlannerSelect: allowed_keys(p, {}); return;
    case NodeKind::RoutineInvoke:
      allowed_keys(p, {"routine"});
      if (!p.contains("routine") || !p["routine"].is_string() || p["routine"].get<std::string>().empty()) {
        throw Error("BAD_PARAM", "'routine' must be a non-empty routine id");
      }
      return;
    case NodeKind::MoveJoint:
      allowed_keys(p, {"target", "trajectory_config"});
      triple(p, "target");
      trajectory_config(p);
      return;
    case NodeKind::MoveToPick:
      allowed_keys(p, {"srv", "perception_var", "filters", "trajectory_config"});
      if (p.contains("srv") == p.contains("perception_var")) {
        throw Error("BAD_PARAM", "exactly one of 'srv' or 'perception_var' is required");
      }
      if (p.contains("srv")) service_name(p, "srv");
      var_name(p, "perception_var", false);
      pick_filters(p);
      trajectory_config(p);
      return;
    case NodeKind::RelativeMove:
      allowed_keys(p, {"offset", "relative_to", "trajectory_config"});
      triple(p, "offset");
      trajectory_config(p);
      if (p.contains("relative_to")) {
        const Json& rt = p["relative_to"];
        if (rt == "next") throw Error("TARGET_BACKWARD_DEP", "targets relative to a later movement are not supported");
        if (rt != "previous") throw Error("BAD_PARAM", "'relative_to' must be \"previous\"");
      }
      return;
    case NodeKind::MoveToObjectPose:
      allowed_keys(p, {"pose", "by_type", "trajectory_config"});
      if (p.contains("pose") == p.contains("by_type")) {
        throw Error("BAD_PARAM", "exactly one of 'pose' or 'by_type' is required");
      }
      if (p.contains("pose")) triple(p, "pose");
      if (p.contains("by_type")) {
        if (!p["by_type"].is_object() || p["by_type"].empty()) throw Error("BAD_PARAM", "'by_type' must be a non-empty map");
        for (const auto& [type, _] : p["by_type"].items()) triple(p["by_type"], type.c_str());
      }
      trajectory_config(p);
      return;
    case NodeKind::PalletizationMove:
      allowed_keys(p, {"pallet_var", "trajectory_config"});
      var_name(p, "pallet_var");
      trajectory_config(p);
      return;
    case NodeKind::MoveTrajectoryByVariable:
      allowed_keys(p, {"var"});
      var_name(p, "var");
      return;
    case NodeKind::CallService:
      allowed_keys(p, {"srv", "request", "request_var", "response_save_var"});
      service_name(p, "srv");
      var_name(p, "request_var", false);
      var_name(p, "response_save_var");
      return;
    case NodeKind::SetVariable:
      allowed_keys(p, {"var", "value"});
      var_name(p, "var");
      if (!p.contains("value")) throw Error("BAD_PARAM", "missing parameter 'value'");
      return;
    case NodeKind::FunctorVariableMutation: {
      allowed_keys(p, {"functor", "args"});
      if (!p.contains("functor") || !p["functor"].is_string()) throw Error("BAD_PARAM", "'functor' must be a string");
      const Functor* f = functors.find(p["functor"].get<std::string>());
      if (!f) throw Error("BAD_PARAM", "unknown functor '" + p["functor"].get<std::string>() + "'");
      f->check(p.value("args", Json::object()));
      return;
    }
    case NodeKind::CounterBranch:
      allowed_keys(p, {"var", "threshold"});
      var_name(p, "var");
      if (!p.contains("threshold") || !p["threshold"].is_number()) throw Error("BAD_PARAM", "'threshold' must be a number");
      return;
    case NodeKind::ExceptionProbe:
      allowed_keys(p, {"srv"});
      service_name(p, "srv");
      return;
  }
}

/// Port declaration against the kind's signature; returns an error message or "".
inline std::string check_ports(const Node& n) {
  std::set<std::string> labels;
  for (const auto& p : n.ports) {
    if (p.label.empty()) return "port label must be non-empty";
    if (!labels.insert(p.label).second) return "port '" + p.label + "' declared twice";
  }
  switch (n.kind) {
    case NodeKind::PlannerSelect:
      if (n.ports.size() < 2) return "PlannerSelect needs at least 2 ports";
      for (const auto& p : n.ports) {
        if (p.exception) return "PlannerSelect ports cannot be exceptions";
      }
      return "";
    case NodeKind::RoutineInvoke: {
      const Port* next = n.port(kNextPort);
      if (!next || next->exception) return "RoutineInvoke needs a non-exception 'next' port";
      for (const auto& p : n.ports) {
        if (p.label != kNextPort && !(p.label == kPlanFailurePort && p.exception)) {
          return "RoutineInvoke ports are 'next' and an optional exception 'plan_failure'";
        }
      }
      return "";
    }
    default: {
      const auto want = default_ports(n.kind);
      if (n.ports.size() != want.size()) return std::string(kind_name(n.kind)) + " has a fixed port signature";
      for (const auto& w : want) {
        const Port* got = n.port(w.label);
        if (!got || got->exception != w.exception) {
          return std::string(kind_name(n.kind)) + " has a fixed port signature";
        }
      }
      return "";
    }
  }
}

// ---- validation ------------------------------------------------------------------------------

inline std::vector<Diagnostic> validate(const Program& p, const FunctorRegistry& functors = builtin_functors()) {
  using detail::diag;
  std::vector<Diagnostic> out;
  auto main_it = p.routines.find(p.main);
  if (main_it == p.routines.end()) {
    out.push_back(diag("MISSING_MAIN", "", "", "main routine '" + p.main + "' does not exist"));
  } else if (main_it->second.is_plan()) {
    out.push_back(diag("MAIN_NOT_PLAIN", p.main, "", "main routine must be a plain routine"));
  }

  for (const auto& [rid, r] : p.routines) {
    // Entry and exits.
    const NodeKind want_entry = r.is_plan() ? NodeKind::PlanRoutineEntry : NodeKind::RoutineEntry;
    const Node* entry = r.entry.empty() ? nullptr : r.node(r.entry);
    if (!entry) {
      out.push_back(diag("MISSING_ENTRY", rid, r.entry, "entry node missing"));
    } else if (entry->kind != want_entry) {
      out.push_back(diag("BAD_ENTRY", rid, r.entry, std::string("entry must be a ") + kind_name(want_entry)));
    }
    bool has_exit = false;
    for (const auto& n : r.nodes) {
      has_exit = has_exit || n.kind == NodeKind::RoutineExit;
      if (is_entry(n.kind) && n.id != r.entry) {
        out.push_back(diag("BAD_ENTRY", rid, n.id, "only the routine entry may be an entry node"));
      }
    }
    if (!has_exit) out.push_back(diag("NO_EXIT", rid, "", "routine has no RoutineExit"));

    // Per-node rules.
    for (const auto& n : r.nodes) {
      if (auto msg = check_ports(n); !msg.empty()) out.push_back(diag("BAD_PORTS", rid, n.id, msg));
      try {
        check_params(n, functors);
      } catch (const Error& e) {
        out.push_back(diag(e.code(), rid, n.id, e.what()));
      }
      if (!r.is_plan() && n.kind == NodeKind::PlannerSelect) {
        out.push_back(diag("PLANNER_SELECT_OUTSIDE_PLAN", rid, n.id, "PlannerSelect is only allowed in plan-routines"));
      } else if (!r.is_plan() && plan_only(n.kind)) {
        out.push_back(diag("MOVE_OUTSIDE_PLAN", rid, n.id,
                           std::string(kind_name(n.kind)) + " needs planning and must live in a plan-routine"));
      }
      if (n.kind == NodeKind::RoutineInvoke && n.params.contains("routine") && n.params["routine"].is_string()) {
        const std::string target = n.params["routine"].get<std::string>();
        auto t = p.routines.find(target);
        if (r.is_plan()) {
          out.push_back(diag("INVOKE_IN_PLAN_ROUTINE", rid, n.id, "plan-routines cannot invoke routines"));
        }
        if (t == p.routines.end()) {
          if (!target.empty()) out.push_back(diag("UNKNOWN_ROUTINE", rid, n.id, "no routine '" + target + "'"));
        } else if (!t->second.is_plan() && n.port(kPlanFailurePort)) {
          out.push_back(diag("BAD_PORTS", rid, n.id, "plan_failure port on an invoke of plain routine '" + target + "'"));
        }
      }
    }

    // Edges.
    std::set<std::pair<std::string, std::string>> wired;
    std::set<std::string> has_incoming;
    for (const auto& e : r.edges) {
      const Node* a = r.node(e.from);
      const Node* b = r.node(e.to);
      if (!a) {
        out.push_back(diag("DANGLING_PORT", rid, e.from, "edge from missing node '" + e.from + "'"));
        continue;
      }
      if (!a->port(e.port)) {
        out.push_back(diag("DANGLING_PORT", rid, e.from, "edge from undeclared port '" + e.port + "'"));
        continue;
      }
      if (!b) {
        out.push_back(diag("DANGLING_PORT", rid, e.from, "port '" + e.port + "' wired to missing node '" + e.to + "'"));
        continue;
      }
      if (!wired.insert({e.from, e.port}).second) {
        out.push_back(diag("DUPLICATE_EDGE", rid, e.from, "port '" + e.port + "' wired twice"));
      }
      has_incoming.insert(e.to);
    }
    for (const auto& n : r.nodes) {
      for (const auto& port : n.ports) {
        if (!port.exception && !wired.count({n.id, port.label})) {
          out.push_back(diag("UNWIRED_PORT", rid, n.id, "port '" + port.label + "' is not wired"));
        }
      }
      if (n.id == r.entry) {
        if (has_incoming.count(n.id)) out.push_back(diag("ENTRY_HAS_INCOMING", rid, n.id, "entry node has incoming edges"));
      } else if (!has_incoming.count(n.id)) {
        out.push_back(diag("NO_INCOMING", rid, n.id, "node is never reached"));
      }
    }

    // Loops.
    if (r.is_plan()) {
      const auto cyc = find_cycle(r, [](const Node&) { return true; });
      if (!cyc.empty()) {
        Diagnostic d = diag("PR_LOOP", rid, cyc.front(), "plan-routine contains a loop: " + join(cyc, " -> "));
        d.witness = cyc;
        out.push_back(d);
      }
    } else {
      const auto cyc = find_cycle(r, [](const Node& n) { return !n.is_branch(); });
      if (!cyc.empty()) {
        Diagnostic d = diag("LOOP_WITHOUT_BRANCH", rid, cyc.front(), "loop has no branch node: " + join(cyc, " -> "));
        d.witness = cyc;
        out.push_back(d);
      }
    }
  }
  return out;
}

/// Parse then validate; the program is only returned when both are clean.
inline ParseResult load_program(const std::string& text, const FunctorRegistry& functors = builtin_functors()) {
  ParseResult res = parse_program(text);
  if (!res.program) return res;
  auto diags = validate(*res.program, functors);
  res.diagnostics.insert(res.diagnostics.end(), diags.begin(), diags.end());
  if (has_errors(res.diagnostics)) res.program.reset();
  return res;
}

// ---- frontend lowering --------------------------------------------------------------------

namespace detail {

inline std::string str_param(const Json& p, const char* key, const std::string& fallback = {}) {
  if (p.contains(key) && p[key].is_string()) return p[key].get<std::string>();
  return fallback;
}

/// Rewrites one frontend node in place; returns false for unknown kinds.
inline bool lower_node(Json& n) {
  const std::string kind = n.value("kind", std::string{});
  if (kind_from_name(kind)) return true;
  const Json p = n.value("params", Json::object());
  Json out;
  auto counter = [&](const char* functor) {
    Json args{{"var", p.value("counter_var", Json(""))}};
    if (p.contains("by")) args["by"] = p["by"];
    if (p.contains("value")) args["value"] = p["value"];
    n["kind"] = "FunctorVariableMutation";
    n["params"] = Json{{"functor", functor}, {"args", args}};
  };
  if (kind == "IncreaseCounter") {
    counter("counter.inc");
  } else if (kind == "DecreaseCounter") {
    counter("counter.dec");
  } else if (kind == "ResetCounter") {
    counter("counter.set");
  } else if (kind == "ClearList") {
    n["kind"] = "FunctorVariableMutation";
    n["params"] = Json{{"functor", "list.clear"}, {"args", {{"var", p.value("var", Json(""))}}}};
  } else if (kind == "CountObjects") {
    const std::string var = p.contains("srv") ? vars::perception_var(str_param(p, "srv")) : str_param(p, "var");
    n["kind"] = "FunctorVariableMutation";
    n["params"] = Json{{"functor", "perception.count"}, {"args", {{"var", var}, {"to", p.value("to", Json(""))}}}};
  } else if (kind == "Capture") {
    const std::string srv = str_param(p, "srv");
    n["kind"] = "CallService";
    n["params"] = Json{{"srv", srv}, {"request", {{"op", "capture"}}}, {"response_save_var", vars::perception_var(srv)}};
  } else if (kind == "DigitalOut") {
    const std::string srv = str_param(p, "srv", "robot_io");
    n["kind"] = "CallService";
    n["params"] = Json{{"srv", srv},
                       {"request", {{"op", "digital_out"}, {"port", p.value("port", 0)}, {"value", p.value("value", true)}}},
                       {"response_save_var", srv + "_ack"}};
  } else if (kind == "Vibrate") {
    const std::string srv = str_param(p, "srv", "vibration");
    n["kind"] = "CallService";
    n["params"] = Json{{"srv", srv}, {"request", {{"op", "vibrate"}}}, {"response_save_var", srv + "_ack"}};
  } else if (kind == "DetectObjectFalling") {
    n["kind"] = "ExceptionProbe";
    n["params"] = Json{{"srv", str_param(p, "srv", "gripper")}};
  } else {
    return false;
  }
  return true;
}

}  // namespace detail

inline std::vector<std::string> sugar_aliases() {
  return {"IncreaseCounter", "DecreaseCounter", "ResetCounter", "ClearList", "CountObjects",
          "Capture",         "DigitalOut",      "Vibrate",      "DetectObjectFalling"};
}

/// Lowers a frontend document (backend kinds plus sugar aliases) to a backend Program.
inline ParseResult lower_frontend_json(Json doc) {
  ParseResult res;
  if (!doc.is_object() || doc.value("version", std::string{}) != kFrontendVersion) {
    res.diagnostics.push_back(detail::diag("BAD_VERSION", "", "", std::string("frontend documents need version '") +
                                                                      kFrontendVersion + "'"));
    return res;
  }
  if (doc.contains("routines") && doc["routines"].is_object()) {
    for (auto& [rid, r] : doc["routines"].items()) {
      if (!r.is_object() || !r.contains("nodes") || !r["nodes"].is_array()) continue;
      for (auto& n : r["nodes"]) {
        if (!n.is_object()) continue;
        if (!detail::lower_node(n)) {
          res.diagnostics.push_back(detail::diag("UNKNOWN_KIND", rid, n.value("id", std::string{}),
                                                 "unknown frontend alias '" + n.value("kind", std::string{}) + "'"));
        }
      }
    }
  }
  if (!res.diagnostics.empty()) return res;
  doc["version"] = kProgramVersion;
  return parse_program_json(doc);
}

inline ParseResult lower_frontend(const std::string& text) {
  Json doc;
  try {
    doc = Json::parse(text);
  } catch (const Json::parse_error& e) {
    ParseResult res;
    res.diagnostics.push_back(detail::diag("PARSE_ERROR", "", "", e.what()));
    return res;
  }
  return lower_frontend_json(std::move(doc));
}

/// Accepts either document flavour, dispatching on the version field.
inline ParseResult load_any(const std::string& text, const FunctorRegistry& functors = builtin_functors()) {
  ParseResult res;
  try {
    const Json doc = Json::parse(text);
    if (doc.is_object() && doc.value("version", std::string{}) == kFrontendVersion) {
      res = lower_frontend_json(doc);
      if (res.program) {
        auto diags = validate(*res.program, functors);
        res.diagnostics.insert(res.diagnostics.end(), diags.begin(), diags.end());
        if (has_errors(res.diagnostics)) res.program.reset();
      }
      return res;
    }
  } catch (const Json::parse_error&) {
  }
  return load_program(text, functors);
}

/// Graphviz rendering of every routine's control flow, one cluster per routine.
inline std::string program_dot(const Program& p) {
  auto q = [](const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
      if (c == '\n') {
        out += "\\n";
        continue;
      }
      if (c == '"' || c == '\\') out += '\\';
      out += c;
    }
    return out + "\"";
  };
  std::ostringstream os;
  os << "digraph program {\n  node [shape=box, fontname=\"monospace\"];\n";
  int ci = 0;
  for (const auto& [rid, r] : p.routines) {
    os << "  subgraph cluster_" << ci++ << " {\n    label=" << q(rid + (r.kind == RoutineKind::Plan ? " (plan)" : ""))
       << ";\n";
    if (rid == p.main) os << "    style=bold;\n";
    for (const auto& n : r.nodes) {
      std::string label = n.id + "\n" + kind_name(n.kind);
      if (n.kind == NodeKind::RoutineInvoke) label += " " + n.params.value("routine", std::string{});
      os << "    " << q(rid + "/" + n.id) << " [label=" << q(label);
      if (is_entry(n.kind) || n.kind == NodeKind::RoutineExit) os << ", shape=ellipse";
      os << "];\n";
    }
    for (const auto& e : r.edges) {
      os << "    " << q(rid + "/" + e.from) << " -> " << q(rid + "/" + e.to);
      const Node* from = r.node(e.from);
      const Port* port = from ? from->port(e.port) : nullptr;
      if (e.port != kNextPort) os << " [label=" << q(e.port) << (port && port->exception ? ", style=dashed" : "") << "]";
      os << ";\n";
    }
    os << "  }\n";
  }
  os << "}\n";
  return os.str();
}

}  // namespace cellscript
