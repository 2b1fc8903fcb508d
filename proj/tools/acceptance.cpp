// Acceptance report: one PASS/FAIL line per primary criterion. Exit status 0 iff all pass.
//
//   cellscript_acceptance [demo-dir]

#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "cellscript/interpreter.hpp"
#include "oracles/collision_oracle.hpp"
#include "oracles/plan_oracle.hpp"
#include "oracles/random_scenes.hpp"

using namespace cellscript;

namespace {

std::string demo_dir = CELLSCRIPT_DEMO_DIR;

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Json manifest() { return Json::parse(slurp(demo_dir + "/manifest.json")); }

Json entry(const std::string& name) {
  const Json m = manifest();
  for (const auto& e : m) {
    if (e["name"] == name) return e;
  }
  throw std::runtime_error("no demo " + name);
}

Program program_text(const std::string& text) {
  auto res = load_program(text);
  if (!res.ok()) throw std::runtime_error(format(res.diagnostics.front()));
  return *res.program;
}

Program demo_program(const std::string& name) { return program_text(slurp(demo_dir + "/" + entry(name)["program"].get<std::string>())); }
Scene demo_scene(const std::string& name) { return load_scene(demo_dir + "/" + entry(name)["scene"].get<std::string>()); }

RunOptions opts(bool pre, std::uint64_t seed = 1) {
  RunOptions o;
  o.preplanning = pre;
  o.seed = seed;
  return o;
}

Json routine_metrics(const RunReport& r, const std::string& routine) {
  const Json all = metrics_json(r.plans);
  for (const auto& m : all["plans"]) {
    if (m["routine"] == routine) return m;
  }
  return Json::object();
}

struct Outcome {
  bool pass = true;
  std::ostringstream detail;
  void require(bool cond, const std::string& what) {
    if (!cond && pass) detail << "[" << what << "] ";
    pass = pass && cond;
  }
};

std::string fmt(double v, int prec = 3) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(prec);
  os << v;
  return os.str();
}

double elapsed_ms(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

bool has_code(const std::vector<Diagnostic>& ds, const std::string& code) {
  for (const auto& d : ds) {
    if (d.code == code) return true;
  }
  return false;
}

// ---- criteria ------------------------------------------------------------------------------

void static_checking(Outcome& o) {
  const Json expected = Json::parse(slurp(demo_dir + "/malformed/expected.json"));
  const Json m = manifest();
  std::vector<std::pair<std::string, std::string>> bad;
  for (const auto& [file, code] : expected.items()) bad.emplace_back(slurp(demo_dir + "/malformed/" + file), code.get<std::string>());
  std::vector<std::string> good;
  for (const auto& e : m) good.push_back(slurp(demo_dir + "/" + e["program"].get<std::string>()));

  const auto t0 = std::chrono::steady_clock::now();
  std::size_t rejected = 0, clean = 0;
  std::set<std::string> codes;
  for (const auto& [text, code] : bad) {
    const auto res = load_any(text);
    if (!res.ok() && has_code(res.diagnostics, code)) ++rejected;
    codes.insert(code);
  }
  for (const auto& text : good) {
    const auto res = load_any(text);
    clean += res.ok() && res.diagnostics.empty();
  }
  const double ms = elapsed_ms(t0);
  o.require(bad.size() >= 20, "corpus >= 20");
  for (const char* c : {"PR_LOOP", "DANGLING_PORT", "PLANNER_SELECT_OUTSIDE_PLAN"}) o.require(codes.count(c) > 0, std::string("covers ") + c);
  o.require(rejected == bad.size(), "all malformed rejected with expected code");
  o.require(good.size() >= 10 && clean == good.size(), "all demos clean");
  o.require(ms < 1000, "runtime < 1 s");
  o.detail << rejected << "/" << bad.size() << " malformed rejected (" << codes.size() << " codes), " << clean << "/" << good.size()
           << " demos clean, " << fmt(ms, 1) << " ms";
}

void ik_fk(Outcome& o) {
  const RobotModel m;
  std::mt19937_64 rng(20240601);
  std::uniform_real_distribution<double> angle(-kPi, kPi);
  std::size_t tested = 0, skipped = 0, max_solutions = 0, roundtrip_fail = 0;
  double worst = 0;
  for (int i = 0; i < 10000; ++i) {
    const JointConfig q{angle(rng), angle(rng), angle(rng)};
    if (std::abs(std::sin(q[1])) <= kSingularBand * 10) {
      ++skipped;
      continue;
    }
    ++tested;
    const auto sols = ik(m, fk(m, q));
    max_solutions = std::max(max_solutions, sols.size());
    double best = 1e9;
    for (const auto& s : sols) {
      double r = 0;
      for (int k = 0; k < 3; ++k) r = std::max(r, std::abs(angle_diff(s[k], q[k])));
      best = std::min(best, r);
    }
    worst = std::max(worst, best);
    roundtrip_fail += best >= 1e-9;
  }
  // Poses whose wrist lies outside the reachable annulus.
  const double outer = m.link_lengths[0] + m.link_lengths[1], inner = std::abs(m.link_lengths[0] - m.link_lengths[1]);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::size_t unreachable = 0, nonempty = 0;
  for (int i = 0; i < 10000; ++i) {
    const double th = angle(rng), phi = angle(rng);
    const double r = unit(rng) < 0.5 ? outer + 1e-6 + 2.0 * unit(rng) : inner * unit(rng) * 0.999;
    const Vec2 wrist{r * std::cos(phi), r * std::sin(phi)};
    const Pose target{wrist.x + m.link_lengths[2] * std::cos(th), wrist.y + m.link_lengths[2] * std::sin(th), th};
    ++unreachable;
    const auto sols = ik(m, target);
    nonempty += !sols.empty();
    max_solutions = std::max(max_solutions, sols.size());
  }
  o.require(roundtrip_fail == 0, "round trip < 1e-9");
  o.require(max_solutions <= 2, "<= 2 solutions");
  o.require(nonempty == 0, "unreachable -> empty");
  o.detail << tested << " configs (" << skipped << " in singular band), worst residual " << worst << " rad, max " << max_solutions
           << " solutions, " << nonempty << "/" << unreachable << " unreachable poses answered";
}

void collision(Outcome& o) {
  const RobotModel m;
  std::mt19937_64 rng(4242);
  std::size_t compared = 0, banded = 0, disagree = 0, hits = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto c = oracle::random_collision_case(m, rng);
    const bool wide = oracle::sampled_collision(m, c.q, c.scene, 0.001 + 0.002);
    const bool narrow = oracle::sampled_collision(m, c.q, c.scene, 0.001 - 0.002);
    if (wide != narrow) {
      ++banded;
      continue;
    }
    ++compared;
    hits += wide;
    disagree += collide(m, c.q, c.scene).hit != wide;
  }
  o.require(disagree == 0, "0 disagreements");
  o.require(compared >= 500, "enough scenes outside the band");
  o.detail << compared << " scenes compared (" << hits << " colliding), " << banded << " within 2 mm band, " << disagree
           << " disagreements";
}

Json pick_place_doc(const Pose& place) {
  return Json{{"version", kProgramVersion},
              {"main", "main"},
              {"routines",
               {{"main",
                 {{"kind", "plain"},
                  {"entry", "e"},
                  {"nodes", {{{"id", "e"}, {"kind", "RoutineEntry"}}, {{"id", "x"}, {"kind", "RoutineExit"}}}},
                  {"edges", {{{"from", {"e", "next"}}, {"to", "x"}}}}}},
                {"pp",
                 {{"kind", "plan"},
                  {"entry", "in"},
                  {"nodes",
                   {{{"id", "in"}, {"kind", "PlanRoutineEntry"}},
                    {{"id", "pick"}, {"kind", "MoveToPick"}, {"params", {{"srv", "cam"}}}},
                    {{"id", "put"}, {"kind", "MoveToObjectPose"}, {"params", {{"pose", {place.x, place.y, place.theta}}}}},
                    {{"id", "release"}, {"kind", "PlaceObject"}},
                    {{"id", "out"}, {"kind", "RoutineExit"}}}},
                  {"edges",
                   {{{"from", {"in", "next"}}, {"to", "pick"}},
                    {{"from", {"pick", "next"}}, {"to", "put"}},
                    {{"from", {"put", "next"}}, {"to", "release"}},
                    {{"from", {"release", "next"}}, {"to", "out"}}}}}}}}};
}

VariableMap captured(const Scene& s) {
  auto reg = make_registry(s, 1);
  return initial_map(s).apply({Mutation::set("cam_perception", response_value(reg->call("cam", Json{{"op", "capture"}}, 1)))});
}

oracle::Binding binding_of(const PlanResult& pr) {
  const DecisionRecord& pick = pr.params->at("pick").decisions;
  const DecisionRecord& put = pr.params->at("put").decisions;
  return {pick.objects.at(0), pick.grasp, pick.ik_branch, put.symmetry, put.ik_branch, 0};
}

void planner_oracle(Outcome& o) {
  std::mt19937_64 rng(7);
  std::size_t disagree = 0, feasible = 0, bad_binding = 0;
  double solve_ms = 0;
  const int n = 200;
  for (int i = 0; i < n; ++i) {
    const auto c = oracle::random_plan_case(rng);
    const Scene s = scene_from_json(c.scene);
    const auto all = oracle::enumerate_bindings(s, c.place);
    const Program p = program_text(pick_place_doc(c.place).dump());
    const VariableMap m = captured(s);
    const auto t0 = std::chrono::steady_clock::now();
    const PlanResult pr = plan_routine(p.routine("pp"), m, {}, {}, 1, builtin_functors());
    solve_ms += elapsed_ms(t0);
    if (pr.ok() != !all.empty()) {
      ++disagree;
      continue;
    }
    if (!pr.ok()) continue;
    ++feasible;
    const oracle::Binding got = binding_of(pr);
    bool known = false;
    for (auto b : all) {
      b.score = 0;
      known = known || b == got;
    }
    bad_binding += !known;
  }
  const double mean = solve_ms / n;
  o.require(disagree == 0, "0 disagreements");
  o.require(bad_binding == 0, "bindings are oracle-feasible");
  o.require(mean < 50, "mean solve < 50 ms");
  o.detail << n << " scenes (" << feasible << " feasible), " << disagree << " disagreements, mean solve " << fmt(mean, 2) << " ms";
}

void joint_decision(Outcome& o) {
  const Scene s = demo_scene("coupling");
  const Program p = demo_program("coupling");
  const Pose place = pose_from_json(p.routine("pp").at("put").params["pose"]);
  const auto all = oracle::enumerate_bindings(s, place);
  o.require(all.size() == 1, "oracle-unique binding");
  const PlanResult pr = plan_routine(p.routine("pp"), captured(s), {}, {}, 1, builtin_functors());
  o.require(pr.ok(), "solved");
  if (all.size() != 1 || !pr.ok()) {
    o.detail << all.size() << " oracle bindings";
    return;
  }
  oracle::Binding want = all[0];
  want.score = 0;
  const oracle::Binding got = binding_of(pr);
  o.require(got == want, "binding matches oracle");
  o.detail << "object " << got.object << ", grasp " << got.grasp << ", pick branch " << got.pick_branch << ", symmetry "
           << got.symmetry << ", place branch " << got.place_branch << ", greedy first choice "
           << (oracle::greedy_succeeds(s, place) ? "succeeds" : "fails") << ", " << pr.stats.backtracks << " backtracks";
}

void pipelined(Outcome& o) {
  const std::vector<std::vector<std::size_t>> faults{{}, {3}, {2, 7}};
  std::size_t cases = 0, differ = 0, drops = 0;
  const Json m = manifest();
  for (const auto& e : m) {
    const std::string name = e["name"];
    const Program p = demo_program(name);
    const Scene s = demo_scene(name);
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      const auto carrying = carrying_executions(p, s, seed);
      for (const auto& nth : faults) {
        RunOptions off = opts(false, seed), on = opts(true, seed);
        off.falling = on.falling = fall_schedule(carrying, nth);
        const RunReport a = run_program(p, s, off);
        const RunReport b = run_program(p, s, on);
        ++cases;
        drops += b.world.drop_log.size();
        const bool same = a.status == b.status && a.digest == b.digest &&
                          side_effect_signature(a.side_effects) == side_effect_signature(b.side_effects);
        if (!same) {
          if (differ == 0) o.detail << "first difference: " << name << " seed " << seed << " faults " << Json(nth).dump() << "; ";
          ++differ;
        }
      }
    }
  }
  o.require(differ == 0, "identical digests and side effects");
  o.detail << m.size() << " demos x 5 seeds x 3 fault schedules = " << cases << " pairs, " << differ << " differ, " << drops
           << " objects dropped";
}

void figure7(Outcome& o) {
  const auto t0 = std::chrono::steady_clock::now();
  const Scene s = demo_scene("fig7_loop");
  const RunReport on = run_program(demo_program("fig7_loop"), s, opts(true));
  const RunReport off = run_program(demo_program("fig7_loop"), s, opts(false));
  const RunReport same = run_program(demo_program("fig7_capture_each"), demo_scene("fig7_capture_each"), opts(true));
  RunOptions inflated = opts(true);
  PlanningCost c = s.cost;
  c.inflate_ms = 5000;
  inflated.cost = c;
  const RunReport big = run_program(demo_program("fig7_loop"), s, inflated);
  const double ms = elapsed_ms(t0);

  const Json a = routine_metrics(on, "pp"), b = routine_metrics(same, "pp"), d = routine_metrics(big, "pp"),
             f = routine_metrics(off, "pp");
  const double p1 = a.value("mean_planning_ms", 0.0), w1 = a.value("mean_waiting_ms", 0.0);
  const double p2 = b.value("mean_planning_ms", 0.0), w2 = b.value("mean_waiting_ms", 0.0);
  const double p3 = d.value("mean_planning_ms", 0.0), w3 = d.value("mean_waiting_ms", 0.0);
  const double wf = f.value("mean_waiting_ms", 0.0);
  o.require(on.ok() && same.ok() && big.ok() && off.ok(), "runs finish");
  o.require(a.value("invocations", 0) == 20 && b.value("invocations", 0) == 20, "20 iterations");
  o.require(p1 >= 100 && p1 <= 400, "P in [100, 400] ms");
  o.require(w1 <= 0.05 * p1, "preplanned wait <= 0.05 P");
  o.require(std::abs(w2 - p2) <= 0.1 * p2, "same-iteration wait ~ P within 10%");
  o.require(w3 > 0 && w3 < p3, "inflated 0 < wait < plan");
  o.require(ms < 120000, "runtime < 2 min");
  o.detail << "loop P=" << fmt(p1, 1) << " wait=" << fmt(w1, 1) << " (off wait=" << fmt(wf, 1) << "); same-iteration P=" << fmt(p2, 1)
           << " wait=" << fmt(w2, 1) << "; inflated P=" << fmt(p3, 1) << " wait=" << fmt(w3, 1) << "; cycle time on/off "
           << fmt(on.sim_ms / 1000, 1) << "/" << fmt(off.sim_ms / 1000, 1) << " s; " << fmt(ms / 1000, 1) << " s wall";
}

double path_length(const Json& waypoints) {
  double len = 0;
  for (std::size_t i = 1; i < waypoints.size(); ++i) {
    double dd = 0;
    for (std::size_t k = 0; k < waypoints[i].size(); ++k) {
      const double x = waypoints[i][k].get<double>() - waypoints[i - 1][k].get<double>();
      dd += x * x;
    }
    len += std::sqrt(dd);
  }
  return len;
}

void demo_coverage(Outcome& o) {
  // Palletization.
  const RunReport pal = run_program(demo_program("palletize"), demo_scene("palletize"), opts(true));
  std::size_t packed = 0;
  bool full = false;
  if (pal.ok()) {
    const PalletState ps = pallet_from_json(pal.final_map.at("pallet").as_tree());
    packed = ps.packed.size();
    full = !next_slot(ps, {0.06, 0.05}).has_value();
  }
  o.require(pal.ok() && pal.world.placed.size() == 6 && packed == 6 && full, "pallet 6/6");

  // Multi-pick.
  const RunReport mp = run_program(demo_program("multi_pick"), demo_scene("multi_pick"), opts(true));
  std::vector<std::size_t> per_cycle;
  for (const auto& c : mp.side_effects) {
    if (c.request.payload.contains("attach")) per_cycle.push_back(c.request.payload["attach"].size());
  }
  o.require(mp.ok() && per_cycle == std::vector<std::size_t>{2, 2, 1}, "multi-pick 2 per cycle");

  // Vibration retry.
  const RunReport vib = run_program(demo_program("vibration_retry"), demo_scene("vibration_retry"), opts(true));
  const std::int64_t retries = vib.ok() ? vib.final_map.at("retries").as_int() : -1;
  o.require(vib.ok() && vib.world.shipped.size() == 1 && retries >= 1 && retries <= 3, "vibration recovers within 3 retries");

  // Dual tool against the per-object tool oracle.
  const Scene ds = demo_scene("dual_tool");
  std::map<std::string, int> tool_for;
  bool unique_tool = true;
  for (const auto& obj : ds.objects) {
    std::set<int> tools;
    for (const auto& g : obj.grasps) tools.insert(g.tool_index);
    unique_tool = unique_tool && tools.size() == 1;
    tool_for[obj.id] = tools.empty() ? -1 : *tools.begin();
  }
  const Program dp = demo_program("dual_tool");
  Interpreter dual_run(dp, ds, opts(true));
  const RunReport dual = dual_run.run();
  std::size_t picks = 0, right_tool = 0;
  for (const auto& e : dual_run.trace()) {
    if (e.event != "side_effect" || !e.data["request"].contains("attach")) continue;
    // Tool used: the tool filter of the executing pick node.
    const std::size_t slash = e.node.find('/');
    const Node& pick = dp.routine(e.node.substr(0, slash)).at(e.node.substr(slash + 1));
    const int tool = pick.params.value("filters", Json::object()).value("tool_index", -1);
    for (const auto& id : e.data["request"]["attach"]) {
      ++picks;
      right_tool += tool_for.count(id) && tool_for.at(id) == tool;
    }
  }
  o.require(dual.ok() && unique_tool && picks == 4 && right_tool == picks, "dual tool matches oracle");

  // RRT + shortcut.
  const RunReport rrt = run_program(demo_program("rrt_move"), demo_scene("rrt_move"), opts(true));
  double ratio = 0;
  if (rrt.ok() && !rrt.side_effects.empty()) {
    const Json& wp = rrt.side_effects.front().request.payload["trajectory"]["waypoints"];
    ratio = path_length(wp) / path_length(Json::array({wp.front(), wp.back()}));
  }
  o.require(rrt.ok() && ratio > 0 && ratio <= 1.1, "rrt path within 10%");

  o.detail << "pallet " << packed << "/6; multi-pick " << Json(per_cycle).dump() << "; vibration " << retries << " retries; dual tool "
           << right_tool << "/" << picks << "; rrt length ratio " << fmt(ratio, 4);
}

}  // namespace

int main(int argc, char** argv) {
  if (argc > 1) demo_dir = argv[1];
  const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria{
      {"static-checking", static_checking},   {"ik-fk-soundness", ik_fk},      {"collision-oracle", collision},
      {"planner-oracle", planner_oracle},     {"joint-decision", joint_decision}, {"pipelined-equivalence", pipelined},
      {"figure7-scaled", figure7},            {"demo-coverage", demo_coverage}};
  bool all = true;
  for (const auto& [name, fn] : criteria) {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      fn(o);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << "exception: " << e.what();
    }
    all = all && o.pass;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail.str() << " [" << fmt(elapsed_ms(t0) / 1000, 2) << " s]"
              << std::endl;
  }
  return all ? 0 : 1;
}
