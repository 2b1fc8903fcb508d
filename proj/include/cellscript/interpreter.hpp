#pragma once

// Program execution. With pre-planning on, a shadow program counter runs ahead of
// execution on simulate semantics and feeds plan jobs to one serial worker. Time is the
// registry's simulated clock; plan jobs occupy the worker for their modeled planning time.

#include <chrono>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "cellscript/digest.hpp"
#include "cellscript/scene.hpp"

namespace cellscript {

struct TraceEvent {
  std::uint64_t seq = 0;
  double t_ms = 0;
  std::uint64_t dyn_id = 0;
  std::string node;  // "routine/node"
  std::string event;
  Json data = Json::object();
};

inline Json to_json(const TraceEvent& e) {
  return Json{{"seq", e.seq}, {"t_ms", e.t_ms}, {"dyn_id", e.dyn_id}, {"node", e.node}, {"event", e.event}, {"data", e.data}};
}

inline const std::vector<std::string>& trace_event_kinds() {
  static const std::vector<std::string> k{"enter",    "exit",     "side_effect", "plan_dispatch", "plan_done",
                                          "plan_adopt", "wait_begin", "wait_end",  "flush",         "poison_stop"};
  return k;
}

struct RunOptions {
  bool preplanning = false;
  std::uint64_t seed = 0;
  std::size_t lookahead = 2;
  std::size_t max_depth = 64;
  std::uint64_t max_steps = 1'000'000;
  std::uint64_t max_lead = 100'000;  // shadow may not run further ahead than this many dyn-ids
  std::optional<PlanBudget> budget;
  std::optional<PlanningCost> cost;
  std::vector<std::uint64_t> falling;  // added to the scene's schedule
  double realtime_scale = 0;           // wall ms slept per simulated ms
  std::function<void(const TraceEvent&, const World&)> on_event;
  /// Called before every executed node; returning false aborts the run.
  std::function<bool(std::uint64_t dyn_id, const std::string& node)> gate;
};

struct PlanRecord {
  std::string routine;
  std::uint64_t dyn_id = 0;
  double planning_ms = 0;
  double waiting_ms = 0;
  double wall_ms = 0;
  bool preplanned = false;
  bool ok = false;
  std::size_t candidates = 0;
};

struct GuessRecord {
  std::uint64_t dyn_id = 0;
  std::string node;
  std::string port;
};

struct RunReport {
  std::string status;  // finished | failed | aborted
  std::string error_code;
  std::string error_message;
  std::string digest;
  VariableMap final_map;
  World world;
  std::vector<ServiceCall> side_effects;
  std::vector<PlanRecord> plans;
  std::vector<GuessRecord> guesses;
  std::vector<std::uint64_t> executed;  // dyn-ids in execution order
  std::map<std::string, std::size_t> event_counts;
  double sim_ms = 0;

  bool ok() const { return status == "finished"; }
};

inline Json to_json(const PlanRecord& r) {
  return Json{{"routine", r.routine},       {"dyn_id", r.dyn_id},         {"planning_ms", r.planning_ms},
              {"waiting_ms", r.waiting_ms}, {"wall_ms", r.wall_ms},       {"preplanned", r.preplanned},
              {"ok", r.ok},                 {"candidates", r.candidates}};
}

/// Per plan-routine means, in first-invocation order.
inline Json metrics_json(const std::vector<PlanRecord>& plans) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<const PlanRecord*>> by;
  for (const auto& p : plans) {
    if (!by.count(p.routine)) order.push_back(p.routine);
    by[p.routine].push_back(&p);
  }
  Json out = Json::array();
  for (const auto& rid : order) {
    double plan = 0, wait = 0;
    for (const auto* p : by[rid]) {
      plan += p->planning_ms;
      wait += p->waiting_ms;
    }
    const double n = static_cast<double>(by[rid].size());
    out.push_back(Json{{"routine", rid}, {"invocations", by[rid].size()}, {"mean_planning_ms", plan / n}, {"mean_waiting_ms", wait / n}});
  }
  Json records = Json::array();
  for (const auto& p : plans) records.push_back(to_json(p));
  return Json{{"plans", out}, {"records", records}};
}

/// Ordered side effects with volatile meta removed, for cross-run comparison.
inline Json side_effect_signature(const std::vector<ServiceCall>& calls) {
  Json out = Json::array();
  for (const auto& c : calls) {
    out.push_back(Json{{"dyn_id", c.dyn_id},
                       {"srv", c.request.srv},
                       {"request", detail::strip_volatile(c.request.payload)},
                       {"response", detail::strip_volatile(c.response.payload)}});
  }
  return out;
}

inline std::string map_digest(const VariableMap& m) { return sha256_hex(canonical_dump(m)); }

inline Json to_json(const RunReport& r) {
  Json j{{"status", r.status},
         {"digest", r.digest},
         {"sim_ms", r.sim_ms},
         {"dyn_ids", r.executed.size()},
         {"side_effects", r.side_effects.size()},
         {"events", r.event_counts},
         {"metrics", metrics_json(r.plans)["plans"]}};
  if (!r.error_code.empty()) j["error"] = Json{{"code", r.error_code}, {"message", r.error_message}};
  return j;
}

namespace detail {

struct Frame {
  const Routine* routine = nullptr;
  std::string node;
  PlanParams params;
};

struct Context {
  std::vector<Frame> stack;
  VariableMap map;
  std::uint64_t next_dyn = 1;
};

struct PlanJob {
  std::uint64_t dyn = 0;
  std::string routine;
  VariableMap snapshot;
  std::vector<std::string> read_set;
  PlanResult result;
  double wall_ms = 0;
  double start_ms = 0;
  double done_ms = 0;
  bool reported = false;
};

struct ShadowStop {
  enum Kind { None, Lookahead, Poison, Unsimulatable, Finished } kind = None;
  std::uint64_t dyn = 0;
  std::string var;
  std::uint64_t origin = 0;
};

inline std::string node_ref(const Frame& f) { return f.routine->id + "/" + f.node; }

inline std::string exception_port(const Node& n) {
  for (const auto& p : n.ports) {
    if (p.exception) return p.label;
  }
  return {};
}

}  // namespace detail

class Interpreter {
 public:
  Interpreter(Program program, Scene scene, RunOptions opts = {}, const FunctorRegistry& f = builtin_functors())
      : program_(std::move(program)), scene_(std::move(scene)), opts_(std::move(opts)), f_(f) {
    scene_.falling.insert(scene_.falling.end(), opts_.falling.begin(), opts_.falling.end());
    budget_ = opts_.budget.value_or(scene_.budget);
    cost_ = opts_.cost.value_or(scene_.cost);
    if (opts_.preplanning && opts_.lookahead < 1) throw Error("BAD_PARAM", "lookahead must be at least 1");
    services_ = make_registry(scene_, mix_seed(scene_.rng_seed, opts_.seed));
    if (opts_.realtime_scale > 0) {
      const double scale = opts_.realtime_scale;
      services_->on_advance = [scale](double ms) {
        std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(ms * scale));
      };
    }
    exec_.map = initial_map(scene_);
    const Routine& main = program_.routine(program_.main);
    exec_.stack.push_back({&main, main.entry, {}});
    reset_shadow();
  }

  RunReport run() {
    RunReport rep;
    try {
      tick();
      std::uint64_t steps = 0;
      while (!exec_.stack.empty()) {
        if (++steps > opts_.max_steps) throw Error("STEP_LIMIT", "run exceeded " + std::to_string(opts_.max_steps) + " node executions");
        if (opts_.gate && !opts_.gate(exec_.next_dyn, detail::node_ref(exec_.stack.back()))) {
          rep.status = "aborted";
          break;
        }
        exec_step(rep);
        tick();
      }
      if (rep.status.empty()) rep.status = "finished";
    } catch (const Error& e) {
      rep.status = "failed";
      rep.error_code = e.code();
      rep.error_message = e.what();
    }
    rep.final_map = exec_.map;
    rep.digest = map_digest(exec_.map);
    rep.world = services_->world();
    rep.side_effects = services_->log();
    rep.plans = plans_;
    rep.guesses = guesses_;
    rep.sim_ms = services_->now();
    for (const auto& e : trace_) ++rep.event_counts[e.event];
    return rep;
  }

  const std::vector<TraceEvent>& trace() const { return trace_; }
  const World& world() const { return services_->world(); }
  const VariableMap& map() const { return exec_.map; }

 private:
  // ---- execution context --------------------------------------------------------------

  void exec_step(RunReport& rep) {
    detail::Frame& fr = exec_.stack.back();
    const Node& n = fr.routine->at(fr.node);
    const std::uint64_t dyn = exec_.next_dyn++;
    const std::string ref = detail::node_ref(fr);
    rep.executed.push_back(dyn);
    emit(dyn, ref, "enter", Json{{"kind", kind_name(n.kind)}});

    if (n.kind == NodeKind::RoutineInvoke) {
      invoke(n, dyn, ref);
      return;
    }
    if (n.kind == NodeKind::RoutineExit) {
      emit(dyn, ref, "exit", Json::object());
      exec_.stack.pop_back();
      if (!exec_.stack.empty()) move_on(exec_.stack.back(), kNextPort);
      return;
    }
    const OnlineParams* p = fr.params.count(n.id) ? &fr.params.at(n.id) : nullptr;
    const NodeOutcome out = execute_node(n, exec_.map, p, *services_, dyn, f_);
    for (const auto& c : out.side_effects) {
      emit(dyn, ref, "side_effect",
           Json{{"srv", c.request.srv}, {"msg_id", c.request.msg_id}, {"request", c.request.payload}, {"response", c.response.payload},
                {"latency_ms", c.latency_ms}});
    }
    exec_.map = exec_.map.apply(out.mutations);
    if (auto it = journal_.find(dyn); it != journal_.end()) {
      if (it->second != out.port) pending_flush_ = {"wrong_guess", dyn, Json{{"guessed", it->second}, {"actual", out.port}}};
      journal_.erase(it);
    }
    emit(dyn, ref, "exit", Json{{"port", out.port}});
    move_on(fr, out.port);
  }

  void invoke(const Node& n, std::uint64_t dyn, const std::string& ref) {
    const Routine& target = program_.routine(n.params.at("routine").get<std::string>());
    if (exec_.stack.size() >= opts_.max_depth) throw Error("STACK_OVERFLOW", "call stack exceeds " + std::to_string(opts_.max_depth));
    PlanParams params;
    if (target.is_plan()) {
      const PlanResult res = obtain_plan(target, dyn, ref);
      if (!res.ok()) {
        const std::string reason = replan_scope(res.failure);
        if (!exec_.stack.back().routine->next(n.id, kPlanFailurePort)) {
          throw Error("MISSING_PLAN", "planning '" + target.id + "' failed (" + reason + ") and no plan_failure edge is wired");
        }
        emit(dyn, ref, "exit", Json{{"port", kPlanFailurePort}, {"reason", reason}});
        move_on(exec_.stack.back(), kPlanFailurePort);
        return;
      }
      params = *res.params;
    }
    emit(dyn, ref, "exit", Json{{"port", kNextPort}});
    exec_.stack.push_back({&target, target.entry, std::move(params)});
  }

  PlanResult obtain_plan(const Routine& target, std::uint64_t dyn, const std::string& ref) {
    PlanRecord rec;
    rec.routine = target.id;
    rec.dyn_id = dyn;
    PlanResult res;
    auto it = jobs_.find(dyn);
    if (it != jobs_.end() && !read_set_matches(it->second, exec_.map)) {
      jobs_.erase(it);
      it = jobs_.end();
      pending_flush_ = {"stale_snapshot", dyn, Json{{"routine", target.id}}};
    }
    if (it != jobs_.end()) {
      detail::PlanJob& job = it->second;
      const double wait = std::max(0.0, job.done_ms - services_->now());
      if (wait > 0) emit(dyn, ref, "wait_begin", Json{{"routine", target.id}});
      services_->advance(wait);
      report_done_jobs();
      if (wait > 0) emit(dyn, ref, "wait_end", Json{{"waited_ms", wait}});
      res = job.result;
      rec.preplanned = true;
      rec.waiting_ms = wait;
      rec.wall_ms = job.wall_ms;
      emit(dyn, ref, "plan_adopt", Json{{"routine", target.id}, {"planning_ms", res.stats.time_ms}, {"waiting_ms", wait}});
      jobs_.erase(it);
    } else {
      emit(dyn, ref, "plan_dispatch", Json{{"routine", target.id}, {"inline", true}});
      emit(dyn, ref, "wait_begin", Json{{"routine", target.id}});
      const auto t0 = std::chrono::steady_clock::now();
      res = plan_routine(target, exec_.map.as_shadow(), budget_, cost_, mix_seed(opts_.seed, dyn), f_);
      rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      services_->advance(res.stats.time_ms);
      report_done_jobs();
      emit(dyn, ref, "plan_done", done_data(target.id, res, true));
      emit(dyn, ref, "wait_end", Json{{"waited_ms", res.stats.time_ms}});
      rec.waiting_ms = res.stats.time_ms;
    }
    rec.planning_ms = res.stats.time_ms;
    rec.ok = res.ok();
    rec.candidates = res.stats.candidates;
    plans_.push_back(rec);
    return res;
  }

  static Json done_data(const std::string& routine, const PlanResult& res, bool inline_plan) {
    Json d{{"routine", routine}, {"ok", res.ok()}, {"planning_ms", res.stats.time_ms}, {"inline", inline_plan}, {"stats", to_json(res.stats)}};
    if (!res.ok()) {
      d["reason"] = replan_scope(res.failure);
      d["failure"] = to_json(res.failure);
    }
    return d;
  }

  static bool read_set_matches(const detail::PlanJob& job, const VariableMap& live) {
    for (const auto& v : job.read_set) {
      const Value* a = job.snapshot.find(v);
      const Value* b = live.find(v);
      if ((a == nullptr) != (b == nullptr)) return false;
      if (a && !(*a == *b)) return false;
    }
    return true;
  }

  void move_on(detail::Frame& fr, const std::string& port) {
    if (auto to = fr.routine->next(fr.node, port)) {
      fr.node = *to;
      return;
    }
    const Node& n = fr.routine->at(fr.node);
    const Port* p = n.port(port);
    if (port == kPlanFailurePort) throw Error("MISSING_PLAN", "no plan_failure edge at '" + detail::node_ref(fr) + "'");
    if (p && p->exception) {
      throw Error("UNHANDLED_EXCEPTION", "exception port '" + port + "' of '" + detail::node_ref(fr) + "' is not wired");
    }
    throw Error("DANGLING_PORT", "port '" + port + "' of '" + detail::node_ref(fr) + "' leads nowhere");
  }

  // ---- pre-planning -------------------------------------------------------------------

  void tick() {
    report_done_jobs();
    if (!opts_.preplanning) return;
    if (pending_flush_) {
      const auto [cause, at, data] = *pending_flush_;
      pending_flush_.reset();
      flush(cause, at, data);
    } else if (stop_.kind == detail::ShadowStop::Poison && exec_.next_dyn > stop_.origin) {
      flush("poison_restart", stop_.origin, Json{{"var", stop_.var}, {"blocked_at", stop_.dyn}});
    } else if (stop_.kind == detail::ShadowStop::Unsimulatable && exec_.next_dyn > stop_.dyn) {
      flush("unsimulatable", stop_.dyn, Json::object());
    }
    if (stop_.kind == detail::ShadowStop::Lookahead) stop_ = {};
    if (stop_.kind == detail::ShadowStop::None && !shadow_.stack.empty() && shadow_.next_dyn < exec_.next_dyn) {
      throw Error("CONTRACT_VIOLATION", "shadow program counter fell behind execution");
    }
    while (stop_.kind == detail::ShadowStop::None) {
      if (shadow_.stack.empty()) {
        stop_.kind = detail::ShadowStop::Finished;
        break;
      }
      if (shadow_.next_dyn - exec_.next_dyn > opts_.max_lead) {
        stop_ = {detail::ShadowStop::Lookahead, shadow_.next_dyn, {}, 0};
        break;
      }
      shadow_step();
    }
  }

  void reset_shadow() {
    shadow_ = exec_;
    shadow_.map = exec_.map.as_shadow();
    stop_ = {};
    journal_.clear();
  }

  void flush(const std::string& cause, std::uint64_t at, Json data) {
    std::vector<std::uint64_t> cancelled;
    for (auto it = jobs_.begin(); it != jobs_.end();) {
      if (it->first > at) {
        cancelled.push_back(it->first);
        it = jobs_.erase(it);
      } else {
        ++it;
      }
    }
    worker_free_ = 0;
    for (const auto& [_, j] : jobs_) worker_free_ = std::max(worker_free_, j.done_ms);
    data["cause"] = cause;
    data["cancelled"] = cancelled;
    const std::string ref = exec_.stack.empty() ? program_.main + "/" : detail::node_ref(exec_.stack.back());
    emit(at, ref, "flush", std::move(data));
    reset_shadow();
  }

  void stop(detail::ShadowStop::Kind kind, std::uint64_t dyn) { stop_ = {kind, dyn, {}, 0}; }

  void shadow_step() {
    detail::Frame& fr = shadow_.stack.back();
    const Node& n = fr.routine->at(fr.node);
    const std::uint64_t dyn = shadow_.next_dyn;
    const std::string ref = detail::node_ref(fr);
    switch (n.kind) {
      case NodeKind::RoutineInvoke: {
        const Routine* target = program_.routines.count(n.params.value("routine", "")) ? &program_.routine(n.params["routine"]) : nullptr;
        if (!target || shadow_.stack.size() >= opts_.max_depth) return stop(detail::ShadowStop::Unsimulatable, dyn);
        PlanParams params;
        if (target->is_plan()) {
          auto it = jobs_.find(dyn);
          if (it == jobs_.end()) {
            if (jobs_.size() >= opts_.lookahead) return stop(detail::ShadowStop::Lookahead, dyn);
            try {
              const ExpandResult ex = expand_skeletons(*target, shadow_.map, f_);
              if (ex.blocked()) {
                stop_ = {detail::ShadowStop::Poison, dyn, ex.blocked_var, ex.blocked_origin};
                emit(dyn, ref, "poison_stop", Json{{"var", ex.blocked_var}, {"origin", ex.blocked_origin}, {"routine", target->id}});
                return;
              }
              it = dispatch(*target, ex, dyn, ref);
            } catch (const Error&) {
              return stop(detail::ShadowStop::Unsimulatable, dyn);
            }
          }
          ++shadow_.next_dyn;
          if (!it->second.result.ok()) {
            if (auto to = fr.routine->next(fr.node, kPlanFailurePort)) {
              fr.node = *to;
            } else {
              stop(detail::ShadowStop::Unsimulatable, dyn);
            }
            return;
          }
          params = *it->second.result.params;
        } else {
          ++shadow_.next_dyn;
        }
        shadow_.stack.push_back({target, target->entry, std::move(params)});
        return;
      }
      case NodeKind::RoutineExit:
        ++shadow_.next_dyn;
        shadow_.stack.pop_back();
        if (!shadow_.stack.empty()) shadow_move(kNextPort, dyn);
        return;
      default: break;
    }
    const OnlineParams* p = fr.params.count(n.id) ? &fr.params.at(n.id) : nullptr;
    SimOutcome s;
    try {
      s = simulate_node(n, shadow_.map, p, dyn, f_);
    } catch (const Error& e) {
      s = SimOutcome::blocked(e.what());
    }
    if (!s.simulated) {
      if (!s.blocking_var.empty() && shadow_.map.is_poisoned(s.blocking_var)) {
        const std::uint64_t origin = shadow_.map.at(s.blocking_var).as_poison().origin;
        stop_ = {detail::ShadowStop::Poison, dyn, s.blocking_var, origin};
        emit(dyn, ref, "poison_stop", Json{{"var", s.blocking_var}, {"origin", origin}});
      } else {
        stop(detail::ShadowStop::Unsimulatable, dyn);
      }
      return;
    }
    ++shadow_.next_dyn;
    try {
      shadow_.map = shadow_.map.apply(s.mutations);
    } catch (const Error&) {
      return stop(detail::ShadowStop::Unsimulatable, dyn);
    }
    if (!detail::exception_port(n).empty()) {
      journal_[dyn] = s.port;
      guesses_.push_back({dyn, ref, s.port});
    }
    shadow_move(s.port, dyn);
  }

  void shadow_move(const std::string& port, std::uint64_t dyn) {
    detail::Frame& fr = shadow_.stack.back();
    if (auto to = fr.routine->next(fr.node, port)) {
      fr.node = *to;
    } else {
      stop(detail::ShadowStop::Unsimulatable, dyn);
    }
  }

  std::map<std::uint64_t, detail::PlanJob>::iterator dispatch(const Routine& target, const ExpandResult& ex, std::uint64_t dyn,
                                                              const std::string& ref) {
    detail::PlanJob job;
    job.dyn = dyn;
    job.routine = target.id;
    job.snapshot = shadow_.map;
    job.read_set = plan_read_set(target, shadow_.map, f_);
    const auto t0 = std::chrono::steady_clock::now();
    job.result = solve(target, ex.skeletons, shadow_.map, budget_, cost_, mix_seed(opts_.seed, dyn), f_);
    job.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    job.start_ms = std::max(services_->now(), worker_free_);
    job.done_ms = job.start_ms + job.result.stats.time_ms;
    worker_free_ = job.done_ms;
    emit(dyn, ref, "plan_dispatch", Json{{"routine", target.id}, {"inline", false}, {"start_ms", job.start_ms}});
    return jobs_.emplace(dyn, std::move(job)).first;
  }

  void report_done_jobs() {
    for (auto& [dyn, job] : jobs_) {
      if (job.reported || job.done_ms > services_->now()) continue;
      job.reported = true;
      emit_at(job.done_ms, dyn, job.routine + "/", "plan_done", done_data(job.routine, job.result, false));
    }
  }

  // ---- trace --------------------------------------------------------------------------

  void emit(std::uint64_t dyn, const std::string& node, const std::string& event, Json data) {
    emit_at(services_->now(), dyn, node, event, std::move(data));
  }

  void emit_at(double t, std::uint64_t dyn, const std::string& node, const std::string& event, Json data) {
    TraceEvent e{trace_.size(), t, dyn, node, event, std::move(data)};
    if (opts_.on_event) opts_.on_event(e, services_->world());
    trace_.push_back(std::move(e));
  }

  Program program_;
  Scene scene_;
  RunOptions opts_;
  const FunctorRegistry& f_;
  PlanBudget budget_;
  PlanningCost cost_;
  std::unique_ptr<ServiceRegistry> services_;

  detail::Context exec_;
  detail::Context shadow_;
  detail::ShadowStop stop_;
  std::map<std::uint64_t, std::string> journal_;
  std::map<std::uint64_t, detail::PlanJob> jobs_;
  double worker_free_ = 0;
  struct PendingFlush {
    std::string cause;
    std::uint64_t at;
    Json data;
  };
  std::optional<PendingFlush> pending_flush_;

  std::vector<TraceEvent> trace_;
  std::vector<PlanRecord> plans_;
  std::vector<GuessRecord> guesses_;
};

inline RunReport run_program(const Program& program, const Scene& scene, RunOptions opts = {},
                             const FunctorRegistry& f = builtin_functors()) {
  return Interpreter(program, scene, std::move(opts), f).run();
}

/// Dyn-ids of robot executions made while holding an object, in order, from a fault-free
/// run without pre-planning. The fault "fall@N" drops at element N-1.
inline std::vector<std::uint64_t> carrying_executions(const Program& program, Scene scene, std::uint64_t seed,
                                                      const FunctorRegistry& f = builtin_functors()) {
  scene.falling.clear();
  std::set<std::string> robots;
  for (const auto& [name, cfg] : scene.services.items()) {
    if (cfg.value("kind", "") == "robot") robots.insert(name);
  }
  RunOptions o;
  o.seed = seed;
  bool held = false;
  std::vector<std::uint64_t> out;
  o.on_event = [&](const TraceEvent& e, const World& w) {
    if (e.event == "enter") held = !w.attached.empty();
    if (e.event == "side_effect" && held && robots.count(e.data.value("srv", "")) && e.data["request"].value("op", "") == "execute" &&
        (out.empty() || out.back() != e.dyn_id)) {
      out.push_back(e.dyn_id);
    }
  };
  Interpreter(program, std::move(scene), std::move(o), f).run();
  return out;
}

/// Maps 1-based fall indices onto dyn-ids; indices past the end are dropped.
inline std::vector<std::uint64_t> fall_schedule(const std::vector<std::uint64_t>& carrying, const std::vector<std::size_t>& nth) {
  std::vector<std::uint64_t> out;
  for (std::size_t n : nth) {
    if (n >= 1 && n <= carrying.size()) out.push_back(carrying[n - 1]);
  }
  return out;
}

/// Trace as JSON Lines.
inline std::string trace_jsonl(const std::vector<TraceEvent>& trace) {
  std::string out;
  for (const auto& e : trace) {
    out += to_json(e).dump();
    out += '\n';
  }
  return out;
}

}  // namespace cellscript
