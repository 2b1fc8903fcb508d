#pragma once

// Flat-directory persistence. Documents are stored verbatim under objects/<sha256>.json;
// index.json maps program ids to content hashes. Run artifacts live in runs/<id>/.
//
//   <root>/index.json
//   <root>/objects/<hash>.json
//   <root>/scenes/<id>.json
//   <root>/runs/<id>/{trace.jsonl,metrics.json,report.json}

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cellscript/digest.hpp"
#include "cellscript/error.hpp"
#include "cellscript/value.hpp"

namespace cellscript {

namespace fs = std::filesystem;

struct ProgramEntry {
  std::string id;
  std::string hash;
  std::string name;  // display name, defaults to the id
};

inline std::optional<std::string> read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Write-then-rename so readers never see a partial file.
inline void write_file_atomic(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  const fs::path tmp = p.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("IO_ERROR", "cannot write " + tmp.string());
    out << text;
    out.flush();
    if (!out) throw Error("IO_ERROR", "short write to " + tmp.string());
  }
  fs::rename(tmp, p);
}

inline bool valid_id(const std::string& id) {
  if (id.empty() || id.size() > 64) return false;
  return std::all_of(id.begin(), id.end(), [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-'; });
}

class Store {
 public:
  explicit Store(fs::path root) : root_(std::move(root)) {
    fs::create_directories(root_ / "objects");
    fs::create_directories(root_ / "scenes");
    fs::create_directories(root_ / "runs");
    load_index();
  }

  /// CELLSCRIPT_DATA_DIR, else ./cellscript-data.
  static fs::path default_root() {
    if (const char* d = std::getenv("CELLSCRIPT_DATA_DIR"); d && *d) return d;
    return fs::current_path() / "cellscript-data";
  }

  const fs::path& root() const { return root_; }

  // ---- programs -----------------------------------------------------------------------

  std::vector<ProgramEntry> programs() const {
    std::lock_guard lk(mu_);
    std::vector<ProgramEntry> out;
    for (const auto& [id, e] : index_.items()) out.push_back({id, e.at("hash"), e.value("name", id)});
    return out;
  }

  std::optional<std::string> program_text(const std::string& id) const {
    std::lock_guard lk(mu_);
    if (!index_.contains(id)) return std::nullopt;
    return read_file(object_path(index_[id].at("hash")));
  }

  bool has_program(const std::string& id) const {
    std::lock_guard lk(mu_);
    return index_.contains(id);
  }

  /// Stores `text` under `id`, replacing any previous version. Returns the content hash.
  std::string put_program(const std::string& id, const std::string& text, const std::string& name = {}) {
    if (!valid_id(id)) throw Error("BAD_ID", "invalid program id '" + id + "'");
    const std::string hash = sha256_hex(text);
    std::lock_guard lk(mu_);
    const fs::path obj = object_path(hash);
    if (!fs::exists(obj)) write_file_atomic(obj, text);
    index_[id] = Json{{"hash", hash}, {"name", name.empty() ? id : name}};
    save_index();
    return hash;
  }

  /// Fresh id derived from the content hash ("p" + 10 hex digits, suffixed on collision).
  std::string new_program_id(const std::string& text) const {
    std::lock_guard lk(mu_);
    const std::string base = "p" + sha256_hex(text).substr(0, 10);
    std::string id = base;
    for (int i = 2; index_.contains(id); ++i) id = base + "-" + std::to_string(i);
    return id;
  }

  bool remove_program(const std::string& id) {
    std::lock_guard lk(mu_);
    if (!index_.contains(id)) return false;
    index_.erase(id);
    save_index();
    return true;
  }

  // ---- scenes -------------------------------------------------------------------------

  /// Extra read-only scene directory (e.g. shipped demos); the store's own scenes win.
  void add_scene_dir(fs::path dir) {
    std::lock_guard lk(mu_);
    scene_dirs_.push_back(std::move(dir));
  }

  std::vector<std::string> scene_ids() const {
    std::lock_guard lk(mu_);
    std::set<std::string> ids;
    for (const auto& d : all_scene_dirs()) {
      if (!fs::is_directory(d)) continue;
      for (const auto& e : fs::directory_iterator(d)) {
        if (e.path().extension() == ".json") ids.insert(e.path().stem().string());
      }
    }
    return {ids.begin(), ids.end()};
  }

  std::optional<fs::path> scene_path(const std::string& id) const {
    if (!valid_id(id)) return std::nullopt;
    std::lock_guard lk(mu_);
    for (const auto& d : all_scene_dirs()) {
      const fs::path p = d / (id + ".json");
      if (fs::exists(p)) return p;
    }
    return std::nullopt;
  }

  // ---- run artifacts ------------------------------------------------------------------

  fs::path run_dir(const std::string& run_id) const { return root_ / "runs" / run_id; }

  void save_run_artifact(const std::string& run_id, const std::string& file, const std::string& text) {
    write_file_atomic(run_dir(run_id) / file, text);
  }

  std::optional<std::string> run_artifact(const std::string& run_id, const std::string& file) const {
    if (!valid_id(run_id)) return std::nullopt;
    return read_file(run_dir(run_id) / file);
  }

 private:
  fs::path object_path(const std::string& hash) const { return root_ / "objects" / (hash + ".json"); }

  std::vector<fs::path> all_scene_dirs() const {
    std::vector<fs::path> out{root_ / "scenes"};
    out.insert(out.end(), scene_dirs_.begin(), scene_dirs_.end());
    return out;
  }

  void load_index() {
    index_ = Json::object();
    if (auto text = read_file(root_ / "index.json")) {
      try {
        const Json j = Json::parse(*text);
        if (j.contains("programs") && j["programs"].is_object()) index_ = j["programs"];
      } catch (const Json::exception& e) {
        throw Error("BAD_INDEX", std::string("corrupt index.json: ") + e.what());
      }
    }
  }

  void save_index() const { write_file_atomic(root_ / "index.json", Json{{"programs", index_}}.dump(2) + "\n"); }

  fs::path root_;
  std::vector<fs::path> scene_dirs_;
  Json index_;
  mutable std::mutex mu_;
};

}  // namespace cellscript
