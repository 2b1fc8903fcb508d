#pragma once

// Palletization pattern: greedy shelf packing, bottom shelf first, left to right.
// For a single box type this is the row-major grid.

#include <optional>
#include <string>
#include <vector>

#include "cellscript/geometry.hpp"
#include "cellscript/value.hpp"

namespace cellscript {

struct PackedBox {
  std::string id;
  double w = 0;
  double h = 0;
};

struct PalletState {
  Vec2 origin;        // lower-left corner of the usable area, world frame
  double width = 0;
  double height = 0;
  double gap = 0;     // clearance left of and below every box
  std::vector<PackedBox> packed;
};

struct Footprint {
  double w = 0;
  double h = 0;
};

struct Slot {
  std::size_t footprint = 0;  // index into the queried footprints
  Pose pose;                  // box center, axis aligned
};

inline Json to_json(const PalletState& s) {
  Json packed = Json::array();
  for (const auto& b : s.packed) packed.push_back(Json{{"id", b.id}, {"w", b.w}, {"h", b.h}});
  return Json{{"origin", {s.origin.x, s.origin.y}}, {"size", {s.width, s.height}}, {"gap", s.gap}, {"packed", packed}};
}

inline PalletState pallet_from_json(const Json& j) {
  try {
    PalletState s;
    s.origin = {j.at("origin").at(0).get<double>(), j.at("origin").at(1).get<double>()};
    s.width = j.at("size").at(0).get<double>();
    s.height = j.at("size").at(1).get<double>();
    s.gap = j.value("gap", 0.0);
    for (const auto& b : j.value("packed", Json::array())) {
      s.packed.push_back({b.value("id", ""), b.at("w").get<double>(), b.at("h").get<double>()});
    }
    if (!(s.width > 0) || !(s.height > 0) || s.gap < 0) throw Error("BAD_PARAM", "pallet size must be positive");
    return s;
  } catch (const Json::exception& e) {
    throw Error("BAD_PARAM", std::string("malformed pallet state: ") + e.what());
  }
}

namespace detail {

struct ShelfCursor {
  double y0 = 0;       // bottom of the current shelf (relative to origin)
  double height = 0;   // 0 while no shelf is open
  double x = 0;        // next free x on the current shelf
};

// Position (relative lower-left of the box body) of the next box, advancing the cursor.
inline std::optional<Vec2> shelf_place(ShelfCursor& c, const PalletState& s, double w, double h) {
  const double bw = w + s.gap, bh = h + s.gap;
  if (!(w > 0) || !(h > 0)) return std::nullopt;
  if (c.height > 0 && c.x + bw <= s.width + 1e-12 && bh <= c.height + 1e-12) {
    const Vec2 at{c.x + s.gap, c.y0 + s.gap};
    c.x += bw;
    return at;
  }
  const double y0 = c.height > 0 ? c.y0 + c.height : 0.0;
  if (bw > s.width + 1e-12 || y0 + bh > s.height + 1e-12) return std::nullopt;
  c = {y0, bh, bw};
  return Vec2{s.gap, y0 + s.gap};
}

inline std::optional<ShelfCursor> replay(const PalletState& s) {
  ShelfCursor c;
  for (const auto& b : s.packed) {
    if (!shelf_place(c, s, b.w, b.h)) return std::nullopt;
  }
  return c;
}

}  // namespace detail

/// Center pose of the next slot for a w×h box, or nothing when it does not fit.
inline std::optional<Pose> next_slot(const PalletState& s, const Footprint& f) {
  auto c = detail::replay(s);
  if (!c) return std::nullopt;
  const auto at = detail::shelf_place(*c, s, f.w, f.h);
  if (!at) return std::nullopt;
  return Pose{s.origin.x + at->x + f.w / 2, s.origin.y + at->y + f.h / 2, 0.0};
}

/// Next unfilled slot for each queried footprint; footprints that do not fit are omitted.
inline std::vector<Slot> pallet_next_slots(const PalletState& s, const std::vector<Footprint>& footprints) {
  std::vector<Slot> out;
  for (std::size_t i = 0; i < footprints.size(); ++i) {
    if (auto p = next_slot(s, footprints[i])) out.push_back({i, *p});
  }
  return out;
}

inline PalletState pack(PalletState s, const std::string& id, const Footprint& f) {
  s.packed.push_back({id, f.w, f.h});
  return s;
}

/// Axis-aligned footprint of an object polygon in its own frame.
inline Footprint footprint_of(const Polygon& poly) {
  const Vec2 e = extents(poly);
  return {e.x, e.y};
}

}  // namespace cellscript
