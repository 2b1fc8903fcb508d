#pragma once

// HTTP/WebSocket gateway for the operator studio. Synchronous Beast, one thread per
// connection and one interpreter thread per run.
//
//   GET    /programs                 list
//   POST   /programs                 create (validated), 201 {id, hash}
//   GET    /programs/{id}            stored document, verbatim
//   PUT    /programs/{id}            create or replace (validated)
//   DELETE /programs/{id}
//   GET    /scenes, /scenes/{id}
//   POST   /runs                     {program_id, scene_id, options}
//   GET    /runs, /runs/{id}
//   POST   /runs/{id}/control        {action: pause|resume|step|abort}
//   GET    /runs/{id}/metrics, /runs/{id}/trace
//   WS     /runs/{id}/events[?from=N]
//   GET    anything else             static files

#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include <atomic>
#include <condition_variable>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "cellscript/interpreter.hpp"
#include "cellscript/storage.hpp"

namespace cellscript {

namespace gw {

namespace beast = boost::beast;
namespace http = boost::beast::http;
namespace websocket = boost::beast::websocket;
namespace net = boost::asio;
using tcp = boost::asio::ip::tcp;

/// Scene snapshot for the 2D view: robot configuration and object poses.
inline Json keyframe(const World& w) {
  auto brief = [](const ObjectSet& os) {
    Json a = Json::array();
    for (const auto& o : os) a.push_back(Json{{"id", o.id}, {"type", o.type}, {"pose", pose_to_json(o.pose)}, {"polygon", polygon_to_json(o.polygon)}});
    return a;
  };
  return Json{{"q", {w.q[0], w.q[1], w.q[2]}},
              {"free", brief(w.free)},
              {"attached", brief(w.attached)},
              {"placed", brief(w.placed)},
              {"shipped", brief(w.shipped)}};
}

inline RunOptions run_options_from_json(const Json& o) {
  RunOptions r;
  if (!o.is_object()) throw Error("BAD_OPTIONS", "options must be an object");
  if (o.contains("preplanning")) {
    const Json& p = o["preplanning"];
    if (p.is_boolean()) {
      r.preplanning = p.get<bool>();
    } else if (p == "on" || p == "off") {
      r.preplanning = p == "on";
    } else {
      throw Error("BAD_OPTIONS", "preplanning must be a boolean or on|off");
    }
  }
  try {
    r.seed = o.value("seed", std::uint64_t{0});
    r.lookahead = o.value("lookahead", r.lookahead);
    r.realtime_scale = o.value("realtime_scale", 0.0);
    r.falling = o.value("falling", std::vector<std::uint64_t>{});
    if (o.contains("inflate_ms")) {
      PlanningCost c;
      c.inflate_ms = o["inflate_ms"].get<double>();
      r.cost = c;
    }
  } catch (const Json::exception& e) {
    throw Error("BAD_OPTIONS", e.what());
  }
  if (r.realtime_scale < 0) throw Error("BAD_OPTIONS", "realtime_scale must be non-negative");
  if (r.preplanning && r.lookahead < 1) throw Error("BAD_OPTIONS", "lookahead must be at least 1");
  return r;
}

struct RunSession {
  std::string id;
  std::string program_id;
  std::string scene_id;
  Json options;

  std::mutex mu;
  std::condition_variable cv;
  std::string status = "idle";  // idle | running | paused | finished | failed
  std::string error_code;
  std::string error_message;
  std::size_t step_tokens = 0;
  bool abort_requested = false;
  bool at_gate = false;  // worker is blocked at a node boundary
  bool done = false;
  std::vector<std::string> frames;  // serialized gateway events, in sequence order
  std::vector<PlanRecord> plans;    // live, from plan_adopt / inline plan_done
  std::uint64_t executed = 0;
  std::thread worker;

  Json handle_json() const {
    Json j{{"id", id},
           {"program_id", program_id},
           {"scene_id", scene_id},
           {"status", status},
           {"options", options},
           {"events", frames.size()},
           {"executed", executed},
           {"links", {{"events", "/runs/" + id + "/events"}, {"metrics", "/runs/" + id + "/metrics"}, {"trace", "/runs/" + id + "/trace"}}}};
    if (!error_code.empty()) j["error"] = Json{{"code", error_code}, {"message", error_message}};
    return j;
  }
};

struct Reply {
  unsigned status = 200;
  std::string body;
  std::string content_type = "application/json";
};

inline Reply json_reply(unsigned status, const Json& j) { return {status, j.dump(), "application/json"}; }
inline Reply error_reply(unsigned status, const std::string& code, const std::string& message) {
  return json_reply(status, Json{{"error", {{"code", code}, {"message", message}}}});
}

inline std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : path) {
    if (c == '/') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

inline std::map<std::string, std::string> parse_query(const std::string& q) {
  std::map<std::string, std::string> out;
  std::size_t i = 0;
  while (i < q.size()) {
    std::size_t amp = q.find('&', i);
    if (amp == std::string::npos) amp = q.size();
    const std::string kv = q.substr(i, amp - i);
    const std::size_t eq = kv.find('=');
    if (eq == std::string::npos) {
      out[kv] = "";
    } else {
      out[kv.substr(0, eq)] = kv.substr(eq + 1);
    }
    i = amp + 1;
  }
  return out;
}

inline std::string mime_type(const fs::path& p) {
  const std::string ext = p.extension().string();
  if (ext == ".html") return "text/html";
  if (ext == ".js" || ext == ".mjs") return "application/javascript";
  if (ext == ".css") return "text/css";
  if (ext == ".json") return "application/json";
  if (ext == ".svg") return "image/svg+xml";
  if (ext == ".png") return "image/png";
  if (ext == ".map") return "application/json";
  return "application/octet-stream";
}

}  // namespace gw

struct GatewayConfig {
  fs::path static_dir;  // studio bundle; empty disables static hosting
  std::size_t body_limit = 8 * 1024 * 1024;
};

class Gateway {
 public:
  explicit Gateway(Store& store, GatewayConfig cfg = {}) : store_(store), cfg_(std::move(cfg)) {}
  Gateway(const Gateway&) = delete;
  Gateway& operator=(const Gateway&) = delete;
  ~Gateway() { stop(); }

  /// Binds and starts accepting in the background. Port 0 picks a free port; returns the bound port.
  unsigned short start(unsigned short port, const std::string& address = "127.0.0.1") {
    gw::tcp::endpoint ep(gw::net::ip::make_address(address), port);
    acceptor_ = std::make_unique<gw::tcp::acceptor>(ioc_);
    acceptor_->open(ep.protocol());
    acceptor_->set_option(gw::net::socket_base::reuse_address(true));
    acceptor_->bind(ep);
    acceptor_->listen();
    running_ = true;
    accept_thread_ = std::thread([this] { accept_loop(); });
    return acceptor_->local_endpoint().port();
  }

  /// Blocks until stop() is called from another thread.
  void wait() {
    if (accept_thread_.joinable()) accept_thread_.join();
  }

  void stop() {
    if (!running_.exchange(false)) return;
    boost::system::error_code ec;
    {
      // A blocking accept() is not interrupted by close(); wake it with a dummy connection.
      gw::net::io_context wake_ioc;
      gw::tcp::socket wake(wake_ioc);
      auto ep = acceptor_->local_endpoint(ec);
      if (!ec) wake.connect(ep, ec);
    }
    if (accept_thread_.joinable()) accept_thread_.join();
    acceptor_->close(ec);
    {
      std::lock_guard lk(conn_mu_);
      for (auto* s : sockets_) s->shutdown(gw::tcp::socket::shutdown_both, ec);
    }
    for (auto& c : conns_) {
      if (c.thread.joinable()) c.thread.join();
    }
    std::vector<std::shared_ptr<gw::RunSession>> runs;
    {
      std::lock_guard lk(runs_mu_);
      for (auto& [_, r] : runs_) runs.push_back(r);
    }
    for (auto& r : runs) {
      {
        std::lock_guard lk(r->mu);
        r->abort_requested = true;
      }
      r->cv.notify_all();
      if (r->worker.joinable()) r->worker.join();
    }
  }

  /// Route one request; exposed for in-process use.
  gw::Reply handle(const std::string& method, const std::string& target, const std::string& body) {
    try {
      return route(method, target, body);
    } catch (const Error& e) {
      return gw::error_reply(400, e.code(), e.what());
    } catch (const Json::exception& e) {
      return gw::error_reply(400, "BAD_REQUEST", e.what());
    } catch (const std::exception& e) {
      return gw::error_reply(500, "INTERNAL", e.what());
    }
  }

  std::shared_ptr<gw::RunSession> run(const std::string& id) const {
    std::lock_guard lk(runs_mu_);
    auto it = runs_.find(id);
    return it == runs_.end() ? nullptr : it->second;
  }

 private:
  // ---- connections --------------------------------------------------------------------

  void accept_loop() {
    while (running_) {
      gw::tcp::socket sock(ioc_);
      boost::system::error_code ec;
      acceptor_->accept(sock, ec);
      if (ec) {
        if (!running_) return;
        continue;
      }
      std::lock_guard lk(conn_mu_);
      for (auto it = conns_.begin(); it != conns_.end();) {
        if (it->done) {
          it->thread.join();
          it = conns_.erase(it);
        } else {
          ++it;
        }
      }
      Connection& c = conns_.emplace_back();
      c.thread = std::thread([this, &c, s = std::move(sock)]() mutable {
        serve_connection(std::move(s));
        c.done = true;
      });
    }
  }

  void serve_connection(gw::tcp::socket sock) {
    {
      std::lock_guard lk(conn_mu_);
      sockets_.insert(&sock);
    }
    try {
      gw::beast::flat_buffer buf;
      for (;;) {
        gw::http::request_parser<gw::http::string_body> parser;
        parser.body_limit(cfg_.body_limit);
        boost::system::error_code ec;
        gw::http::read(sock, buf, parser, ec);
        if (ec) break;
        auto req = parser.release();
        if (gw::websocket::is_upgrade(req)) {
          serve_websocket(sock, std::move(req));
          break;
        }
        const std::string target(req.target());
        const gw::Reply rep = handle(std::string(req.method_string()), target, req.body());
        gw::http::response<gw::http::string_body> res{static_cast<gw::http::status>(rep.status), req.version()};
        res.set(gw::http::field::content_type, rep.content_type);
        res.set(gw::http::field::access_control_allow_origin, "*");
        res.keep_alive(req.keep_alive());
        res.body() = rep.body;
        res.prepare_payload();
        gw::http::write(sock, res, ec);
        if (ec || !res.keep_alive()) break;
      }
    } catch (const std::exception&) {
    }
    boost::system::error_code ec;
    sock.shutdown(gw::tcp::socket::shutdown_both, ec);
    std::lock_guard lk(conn_mu_);
    sockets_.erase(&sock);
  }

  void serve_websocket(gw::tcp::socket& sock, gw::http::request<gw::http::string_body> req) {
    const std::string target(req.target());
    const std::size_t qpos = target.find('?');
    const auto parts = gw::split_path(target.substr(0, qpos));
    const auto query = qpos == std::string::npos ? std::map<std::string, std::string>{} : gw::parse_query(target.substr(qpos + 1));
    std::shared_ptr<gw::RunSession> s;
    if (parts.size() == 3 && parts[0] == "runs" && parts[2] == "events") s = run(parts[1]);
    if (!s) {
      gw::http::response<gw::http::string_body> res{gw::http::status::not_found, req.version()};
      res.set(gw::http::field::content_type, "application/json");
      res.body() = gw::error_reply(404, "NOT_FOUND", "no such run").body;
      res.prepare_payload();
      boost::system::error_code ec;
      gw::http::write(sock, res, ec);
      return;
    }
    std::size_t cursor = 0;
    if (auto it = query.find("from"); it != query.end()) cursor = std::stoul(it->second);
    gw::websocket::stream<gw::tcp::socket&> ws(sock);
    ws.accept(req);
    ws.text(true);
    for (;;) {
      std::vector<std::string> batch;
      bool finished = false;
      {
        std::unique_lock lk(s->mu);
        s->cv.wait_for(lk, std::chrono::milliseconds(200), [&] { return s->frames.size() > cursor || s->done || !running_; });
        for (; cursor < s->frames.size(); ++cursor) batch.push_back(s->frames[cursor]);
        finished = (s->done && cursor >= s->frames.size()) || !running_;
      }
      for (const auto& f : batch) ws.write(gw::net::buffer(f));
      if (finished) break;
    }
    boost::system::error_code ec;
    ws.close(gw::websocket::close_code::normal, ec);
  }

  // ---- routing ------------------------------------------------------------------------

  gw::Reply route(const std::string& method, const std::string& target, const std::string& body) {
    const std::size_t qpos = target.find('?');
    const std::string path = target.substr(0, qpos);
    const auto p = gw::split_path(path);
    if (!p.empty() && p[0] == "programs") return programs(method, p, body);
    if (!p.empty() && p[0] == "scenes") return scenes(method, p);
    if (!p.empty() && p[0] == "runs") return runs(method, p, body);
    if (p.size() == 1 && p[0] == "health") return gw::json_reply(200, Json{{"ok", true}});
    if (method == "GET") return static_file(path);
    return gw::error_reply(404, "NOT_FOUND", "no route for " + method + " " + path);
  }

  static gw::Reply invalid_document(const std::vector<Diagnostic>& ds) {
    Json d = Json::array();
    for (const auto& x : ds) d.push_back(to_json(x));
    return gw::json_reply(400, Json{{"error", {{"code", "INVALID_PROGRAM"}, {"message", "program failed validation"}}}, {"diagnostics", d}});
  }

  gw::Reply programs(const std::string& method, const std::vector<std::string>& p, const std::string& body) {
    if (p.size() == 1 && method == "GET") {
      Json out = Json::array();
      for (const auto& e : store_.programs()) out.push_back(Json{{"id", e.id}, {"hash", e.hash}, {"name", e.name}});
      return gw::json_reply(200, out);
    }
    if (p.size() == 1 && method == "POST") {
      const ParseResult res = load_any(body);
      if (!res.ok()) return invalid_document(res.diagnostics);
      const std::string id = store_.new_program_id(body);
      const std::string hash = store_.put_program(id, body);
      return gw::json_reply(201, Json{{"id", id}, {"hash", hash}});
    }
    if (p.size() != 2) return gw::error_reply(404, "NOT_FOUND", "no such resource");
    const std::string& id = p[1];
    if (method == "GET") {
      auto text = store_.program_text(id);
      if (!text) return gw::error_reply(404, "NOT_FOUND", "no program '" + id + "'");
      return {200, *text, "application/json"};
    }
    if (method == "PUT") {
      if (!valid_id(id)) return gw::error_reply(400, "BAD_ID", "invalid program id '" + id + "'");
      const ParseResult res = load_any(body);
      if (!res.ok()) return invalid_document(res.diagnostics);
      const bool existed = store_.has_program(id);
      const std::string hash = store_.put_program(id, body);
      return gw::json_reply(existed ? 200 : 201, Json{{"id", id}, {"hash", hash}});
    }
    if (method == "DELETE") {
      if (!store_.remove_program(id)) return gw::error_reply(404, "NOT_FOUND", "no program '" + id + "'");
      return {204, "", "application/json"};
    }
    return gw::error_reply(405, "METHOD_NOT_ALLOWED", method + " not allowed here");
  }

  gw::Reply scenes(const std::string& method, const std::vector<std::string>& p) {
    if (method != "GET") return gw::error_reply(405, "METHOD_NOT_ALLOWED", method + " not allowed here");
    if (p.size() == 1) {
      Json out = Json::array();
      for (const auto& id : store_.scene_ids()) out.push_back(Json{{"id", id}});
      return gw::json_reply(200, out);
    }
    if (p.size() == 2) {
      auto path = store_.scene_path(p[1]);
      if (!path) return gw::error_reply(404, "NOT_FOUND", "no scene '" + p[1] + "'");
      auto text = read_file(*path);
      if (!text) return gw::error_reply(404, "NOT_FOUND", "no scene '" + p[1] + "'");
      return {200, *text, "application/json"};
    }
    return gw::error_reply(404, "NOT_FOUND", "no such resource");
  }

  gw::Reply runs(const std::string& method, const std::vector<std::string>& p, const std::string& body) {
    if (p.size() == 1 && method == "GET") {
      Json out = Json::array();
      std::lock_guard lk(runs_mu_);
      for (const auto& [_, s] : runs_) {
        std::lock_guard sl(s->mu);
        out.push_back(s->handle_json());
      }
      return gw::json_reply(200, out);
    }
    if (p.size() == 1 && method == "POST") return create_run(body.empty() ? Json::object() : Json::parse(body));
    if (p.size() < 2) return gw::error_reply(404, "NOT_FOUND", "no such resource");
    auto s = run(p[1]);
    if (!s) return gw::error_reply(404, "NOT_FOUND", "no run '" + p[1] + "'");
    if (p.size() == 2 && method == "GET") {
      std::lock_guard lk(s->mu);
      return gw::json_reply(200, s->handle_json());
    }
    if (p.size() == 3 && p[2] == "control" && method == "POST") {
      const Json req = body.empty() ? Json::object() : Json::parse(body);
      return control(*s, req.value("action", req.value("command", std::string{})));
    }
    if (p.size() == 3 && p[2] == "metrics" && method == "GET") {
      std::lock_guard lk(s->mu);
      Json m = metrics_json(s->plans);
      m["status"] = s->status;
      return gw::json_reply(200, m);
    }
    if (p.size() == 3 && p[2] == "trace" && method == "GET") {
      if (auto t = store_.run_artifact(s->id, "trace.jsonl")) return {200, *t, "application/x-ndjson"};
      std::string out;
      std::lock_guard lk(s->mu);
      for (const auto& f : s->frames) {
        Json e = Json::parse(f);
        if (e.value("event", "") == "end") continue;
        e.erase("run_id");
        e.erase("keyframe");
        out += e.dump() + "\n";
      }
      return {200, out, "application/x-ndjson"};
    }
    return gw::error_reply(404, "NOT_FOUND", "no such resource");
  }

  gw::Reply create_run(const Json& req) {
    const std::string pid = req.value("program_id", std::string{});
    const std::string sid = req.value("scene_id", std::string{});
    const Json options = req.value("options", Json::object());
    auto text = store_.program_text(pid);
    if (!text) return gw::error_reply(404, "NOT_FOUND", "no program '" + pid + "'");
    auto spath = store_.scene_path(sid);
    if (!spath) return gw::error_reply(404, "NOT_FOUND", "no scene '" + sid + "'");
    // Copy-on-run: the session owns its parsed program and scene.
    ParseResult pr = load_any(*text);
    if (!pr.ok()) return invalid_document(pr.diagnostics);
    Scene scene = load_scene(spath->string());
    RunOptions opts = gw::run_options_from_json(options);

    auto s = std::make_shared<gw::RunSession>();
    {
      std::lock_guard lk(runs_mu_);
      s->id = "r" + std::to_string(++run_counter_);
      runs_[s->id] = s;
    }
    s->program_id = pid;
    s->scene_id = sid;
    s->options = options;
    const bool start_paused = options.value("paused", false);
    opts.on_event = [this, s, first = true](const TraceEvent& e, const World& w) mutable {
      Json j = to_json(e);
      j["run_id"] = s->id;
      if (first || e.event == "side_effect") j["keyframe"] = gw::keyframe(w);
      first = false;
      std::lock_guard lk(s->mu);
      if (e.event == "plan_adopt") {
        s->plans.push_back({e.data.value("routine", ""), e.dyn_id, e.data.value("planning_ms", 0.0), e.data.value("waiting_ms", 0.0)});
      } else if (e.event == "plan_done" && e.data.value("inline", false)) {
        const double ms = e.data.value("planning_ms", 0.0);
        s->plans.push_back({e.data.value("routine", ""), e.dyn_id, ms, ms});
      }
      s->frames.push_back(j.dump());
      s->cv.notify_all();
    };
    opts.gate = [s](std::uint64_t, const std::string&) {
      std::unique_lock lk(s->mu);
      s->at_gate = true;
      s->cv.notify_all();
      s->cv.wait(lk, [&] { return s->abort_requested || s->status == "running" || s->step_tokens > 0; });
      s->at_gate = false;
      if (s->abort_requested) return false;
      if (s->status == "paused") --s->step_tokens;
      ++s->executed;
      return true;
    };
    {
      std::lock_guard lk(s->mu);
      s->status = start_paused ? "paused" : "running";
    }
    s->worker = std::thread([this, s, program = std::move(*pr.program), scene = std::move(scene), opts = std::move(opts)]() mutable {
      execute(s, std::move(program), std::move(scene), std::move(opts));
    });
    std::lock_guard lk(s->mu);
    return gw::json_reply(201, s->handle_json());
  }

  void execute(const std::shared_ptr<gw::RunSession>& s, Program program, Scene scene, RunOptions opts) {
    RunReport rep;
    std::vector<TraceEvent> trace;
    try {
      Interpreter it(std::move(program), std::move(scene), std::move(opts));
      rep = it.run();
      trace = it.trace();
    } catch (const Error& e) {
      rep.status = "failed";
      rep.error_code = e.code();
      rep.error_message = e.what();
    }
    const Json metrics = metrics_json(rep.plans);
    Json report = to_json(rep);
    try {
      store_.save_run_artifact(s->id, "trace.jsonl", trace_jsonl(trace));
      store_.save_run_artifact(s->id, "metrics.json", metrics.dump(2) + "\n");
      store_.save_run_artifact(s->id, "report.json", report.dump(2) + "\n");
    } catch (const std::exception&) {
    }
    std::lock_guard lk(s->mu);
    if (rep.status == "aborted") {
      s->status = "failed";
      s->error_code = "ABORTED";
      s->error_message = "run aborted by operator";
    } else {
      s->status = rep.status;
      s->error_code = rep.error_code;
      s->error_message = rep.error_message;
    }
    s->plans = rep.plans;
    Json end{{"run_id", s->id}, {"seq", s->frames.size()}, {"event", "end"}, {"status", s->status}, {"report", report}};
    if (!s->error_code.empty()) end["error"] = Json{{"code", s->error_code}, {"message", s->error_message}};
    s->frames.push_back(end.dump());
    s->done = true;
    s->cv.notify_all();
  }

  gw::Reply control(gw::RunSession& s, const std::string& action) {
    std::unique_lock lk(s.mu);
    auto illegal = [&] { return gw::error_reply(409, "ILLEGAL_TRANSITION", "cannot " + action + " a run that is " + s.status); };
    // Waits until the worker parks at a node boundary or the run ends.
    auto settle = [&] { s.cv.wait_for(lk, std::chrono::seconds(30), [&] { return s.done || (s.at_gate && s.step_tokens == 0); }); };
    if (action == "pause") {
      if (s.status != "running") return illegal();
      s.status = "paused";
      s.cv.notify_all();
      settle();
    } else if (action == "resume") {
      if (s.status != "paused") return illegal();
      s.status = "running";
      s.cv.notify_all();
    } else if (action == "step") {
      if (s.status != "paused") return illegal();
      settle();
      if (s.done) return illegal();
      ++s.step_tokens;
      s.at_gate = false;
      s.cv.notify_all();
      settle();
    } else if (action == "abort") {
      if (s.status != "running" && s.status != "paused" && s.status != "idle") return illegal();
      s.abort_requested = true;
      s.cv.notify_all();
      s.cv.wait_for(lk, std::chrono::seconds(30), [&] { return s.done; });
    } else {
      return gw::error_reply(400, "BAD_ACTION", "unknown control action '" + action + "'");
    }
    return gw::json_reply(200, s.handle_json());
  }

  gw::Reply static_file(const std::string& path) {
    if (cfg_.static_dir.empty()) return gw::error_reply(404, "NOT_FOUND", "no route for GET " + path);
    fs::path rel = path == "/" ? fs::path("index.html") : fs::path(path.substr(1));
    for (const auto& part : rel) {
      if (part == "..") return gw::error_reply(404, "NOT_FOUND", "bad path");
    }
    const fs::path full = cfg_.static_dir / rel;
    auto text = fs::is_regular_file(full) ? read_file(full) : std::nullopt;
    if (!text) return gw::error_reply(404, "NOT_FOUND", "no file " + path);
    return {200, *text, gw::mime_type(full)};
  }

  Store& store_;
  GatewayConfig cfg_;
  gw::net::io_context ioc_;
  std::unique_ptr<gw::tcp::acceptor> acceptor_;
  std::atomic<bool> running_{false};
  std::thread accept_thread_;

  std::mutex conn_mu_;
  struct Connection {
    std::thread thread;
    std::atomic<bool> done{false};
  };
  std::list<Connection> conns_;
  std::set<gw::tcp::socket*> sockets_;

  mutable std::mutex runs_mu_;
  std::map<std::string, std::shared_ptr<gw::RunSession>> runs_;
  std::uint64_t run_counter_ = 0;
};

}  // namespace cellscript
