// cellscript command line: validate, run, lower, dot, serve.
//
// Exit codes: 0 ok, 1 run or validation failure, 2 usage or IO error.

#include <csignal>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "cellscript/gateway.hpp"
#include "cellscript/interpreter.hpp"
#include "cellscript/storage.hpp"

using namespace cellscript;

namespace {

constexpr int kOk = 0;
constexpr int kFailed = 1;
constexpr int kUsage = 2;

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string must_read(const std::string& path) {
  auto text = read_file(path);
  if (!text || !fs::is_regular_file(path)) throw IoError("cannot read '" + path + "'");
  return *text;
}

void must_write(const std::string& path, const std::string& text) {
  if (path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << text;
}

void print_diagnostics(const std::vector<Diagnostic>& ds, bool as_json) {
  if (as_json) {
    Json a = Json::array();
    for (const auto& d : ds) a.push_back(to_json(d));
    std::cout << a.dump(2) << "\n";
    return;
  }
  for (const auto& d : ds) std::cout << format(d) << "\n";
}

int cmd_validate(const std::string& path, bool as_json) {
  const ParseResult res = load_any(must_read(path));
  print_diagnostics(res.diagnostics, as_json);
  return res.ok() ? kOk : kFailed;
}

struct RunArgs {
  std::string program;
  std::string scene;
  std::string preplanning = "on";
  std::uint64_t seed = 0;
  std::size_t lookahead = 2;
  double realtime_scale = 0;
  double inflate_ms = 0;
  std::vector<std::size_t> fall;
  std::vector<std::uint64_t> fall_dyn;
  std::string trace;
  std::string metrics;
  std::string report;
};

int cmd_run(const RunArgs& a) {
  const ParseResult res = load_any(must_read(a.program));
  if (!res.ok()) {
    print_diagnostics(res.diagnostics, false);
    return kFailed;
  }
  if (!fs::is_regular_file(a.scene)) throw IoError("cannot read '" + a.scene + "'");
  const Scene scene = load_scene(a.scene);

  RunOptions o;
  o.preplanning = a.preplanning == "on";
  o.seed = a.seed;
  o.lookahead = a.lookahead;
  o.realtime_scale = a.realtime_scale;
  if (a.inflate_ms > 0) {
    PlanningCost c;
    c.inflate_ms = a.inflate_ms;
    o.cost = c;
  }
  o.falling = a.fall_dyn;
  if (!a.fall.empty()) {
    const auto extra = fall_schedule(carrying_executions(*res.program, scene, a.seed), a.fall);
    o.falling.insert(o.falling.end(), extra.begin(), extra.end());
  }

  Interpreter it(*res.program, scene, o);
  const RunReport rep = it.run();
  if (!a.trace.empty()) must_write(a.trace, trace_jsonl(it.trace()));
  if (!a.metrics.empty()) must_write(a.metrics, metrics_json(rep.plans).dump(2) + "\n");
  const Json summary = to_json(rep);
  if (!a.report.empty()) must_write(a.report, summary.dump(2) + "\n");
  if (a.trace != "-" && a.metrics != "-" && a.report != "-") std::cout << summary.dump() << "\n";
  if (rep.status != "finished") {
    std::cerr << "run " << rep.status << ": " << rep.error_code << " " << rep.error_message << "\n";
    return kFailed;
  }
  return kOk;
}

int cmd_lower(const std::string& path, const std::string& out) {
  const ParseResult res = load_any(must_read(path));
  if (!res.ok()) {
    print_diagnostics(res.diagnostics, false);
    return kFailed;
  }
  must_write(out, to_json(*res.program).dump(2) + "\n");
  return kOk;
}

int cmd_dot(const std::string& path, const std::string& out) {
  const ParseResult res = load_any(must_read(path));
  if (!res.program) {
    print_diagnostics(res.diagnostics, false);
    return kFailed;
  }
  must_write(out, program_dot(*res.program));
  return kOk;
}

struct ServeArgs {
  unsigned short port = 8080;
  std::string host = "127.0.0.1";
  std::string data;
  std::string demos;
  std::string static_dir;
};

/// Registers demo scenes and, where absent, the demo programs under their demo names.
void import_demos(Store& store, const fs::path& dir) {
  store.add_scene_dir(dir / "scenes");
  const auto text = read_file(dir / "manifest.json");
  if (!text) return;
  const Json manifest = Json::parse(*text);
  for (const auto& m : manifest) {
    const std::string name = m.at("name");
    if (store.has_program(name)) continue;
    if (auto prog = read_file(dir / m.at("program").get<std::string>())) store.put_program(name, *prog);
  }
}

int cmd_serve(const ServeArgs& a) {
  Store store(a.data.empty() ? Store::default_root() : fs::path(a.data));
  if (!a.demos.empty()) import_demos(store, a.demos);

  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);  // before any thread starts

  Gateway gateway(store, GatewayConfig{a.static_dir});
  const unsigned short port = gateway.start(a.port, a.host);
  std::cout << "listening on http://" << a.host << ":" << port << "\n" << std::flush;
  int sig = 0;
  sigwait(&set, &sig);
  gateway.stop();
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cellscript: pick-and-place program runtime"};
  app.require_subcommand(1);

  std::string path;
  std::string out = "-";
  bool as_json = false;

  auto* validate = app.add_subcommand("validate", "check a program document and print diagnostics");
  validate->add_option("program", path, "program JSON")->required();
  validate->add_flag("--json", as_json, "print diagnostics as JSON");

  RunArgs ra;
  auto* run = app.add_subcommand("run", "execute a program against a scene");
  run->add_option("program", ra.program, "program JSON")->required();
  run->add_option("scene", ra.scene, "scene JSON")->required();
  run->add_option("--preplanning", ra.preplanning, "on|off")->check(CLI::IsMember({"on", "off"}))->capture_default_str();
  run->add_option("--seed", ra.seed, "run seed")->capture_default_str();
  run->add_option("--lookahead", ra.lookahead, "outstanding plan-routine jobs")->check(CLI::PositiveNumber)->capture_default_str();
  run->add_option("--realtime-scale", ra.realtime_scale, "wall-clock ms per simulated ms (0 = fast-forward)")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  run->add_option("--inflate-ms", ra.inflate_ms, "extra modeled planning time per plan")->check(CLI::NonNegativeNumber);
  run->add_option("--fall", ra.fall, "drop the object during the Nth carrying robot execution (1-based, repeatable)");
  run->add_option("--fall-dyn", ra.fall_dyn, "drop the object during the robot execution with this dyn-id (repeatable)");
  run->add_option("--trace", ra.trace, "write the JSONL trace (- for stdout)");
  run->add_option("--metrics", ra.metrics, "write per-routine planning/waiting metrics");
  run->add_option("--report", ra.report, "write the run summary");

  auto* lower = app.add_subcommand("lower", "translate a frontend document to the backend form");
  lower->add_option("program", path, "program JSON")->required();
  lower->add_option("-o,--out", out, "output path (- for stdout)");

  auto* dot = app.add_subcommand("dot", "render the control-flow graph as Graphviz");
  dot->add_option("program", path, "program JSON")->required();
  dot->add_option("-o,--out", out, "output path (- for stdout)");

  ServeArgs sa;
  auto* serve = app.add_subcommand("serve", "run the HTTP/WebSocket gateway");
  serve->add_option("--port", sa.port, "TCP port (0 = any free port)")->capture_default_str();
  serve->add_option("--host", sa.host, "bind address")->capture_default_str();
  serve->add_option("--data", sa.data, "storage root (default $CELLSCRIPT_DATA_DIR or ./cellscript-data)");
  serve->add_option("--demos", sa.demos, "demo directory with manifest.json; scenes and programs are imported");
  serve->add_option("--static", sa.static_dir, "directory of the studio bundle");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*validate) return cmd_validate(path, as_json);
    if (*run) return cmd_run(ra);
    if (*lower) return cmd_lower(path, out);
    if (*dot) return cmd_dot(path, out);
    if (*serve) return cmd_serve(sa);
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.code() << ": " << e.what() << "\n";
    return e.code() == "IO_ERROR" ? kUsage : kFailed;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}
