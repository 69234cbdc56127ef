#pragma once

// Seeded procedural scene generation and validation.
//
// Determinism contract: generate_scene is a pure function of GenConfig. The
// random stream is std::mt19937_64 seeded with GenConfig::seed and consumed
// through pts::Rng (53-bit uniform doubles, rejection-sampled integers), so
// any conforming implementation reproduces the same scenes. This is what
// schema_version 1 of the scene file refers to.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "pts/error.hpp"
#include "pts/geometry.hpp"
#include "pts/rng.hpp"

namespace pts {

struct PaletteColor {
  const char* name;
  std::uint8_t r, g, b;
};

inline constexpr std::array<PaletteColor, 8> kPalette = {{
    {"red", 220, 30, 30},
    {"blue", 30, 80, 220},
    {"green", 40, 160, 60},
    {"orange", 245, 140, 20},
    {"purple", 140, 60, 180},
    {"yellow", 235, 200, 20},
    {"cyan", 20, 190, 210},
    {"magenta", 220, 40, 170},
}};

inline const PaletteColor* find_palette_color(const std::string& name) {
  for (const auto& c : kPalette) {
    if (name == c.name) return &c;
  }
  return nullptr;
}

struct GenConfig {
  std::uint64_t seed = 0;
  std::vector<ShapeKind> shape_pool = {ShapeKind::circle, ShapeKind::triangle,
                                       ShapeKind::rectangle};
  int min_canvas = 600;
  int max_canvas = 1200;
  int min_shapes = 3;
  int max_shapes = 7;
  // Shape extent as a fraction of the smaller canvas dimension.
  double min_extent = 0.08;
  double max_extent = 0.35;
  std::vector<std::string> palette = {"red",    "blue",   "green", "orange",
                                      "purple", "yellow", "cyan",  "magenta"};
  int max_attempts = 2000;
  double margin = 2.0;
  // Minimum boundary-to-boundary clearance between generated shapes.
  double min_gap = 6.0;
  // Minimum relative separation between the shortest (longest) side and the
  // runner-up, so rank selectors name a unique edge.
  double min_side_separation = 0.02;
};

inline void check_config(const GenConfig& cfg) {
  auto fail = [](const std::string& m) { throw Error(Errc::invalid_config, m); };
  if (cfg.shape_pool.empty()) fail("shape pool is empty");
  if (!(cfg.min_extent > 0.0 && cfg.min_extent <= cfg.max_extent && cfg.max_extent <= 0.5)) {
    fail("extent fractions must satisfy 0 < min <= max <= 0.5");
  }
  if (cfg.min_shapes < 1 || cfg.min_shapes > cfg.max_shapes) fail("bad shape count range");
  if (static_cast<int>(cfg.palette.size()) < cfg.max_shapes) {
    fail("palette smaller than the maximum shape count");
  }
  std::set<std::string> seen;
  for (const auto& c : cfg.palette) {
    if (find_palette_color(c) == nullptr) fail("unknown palette color '" + c + "'");
    if (!seen.insert(c).second) fail("duplicate palette color '" + c + "'");
  }
  if (cfg.min_canvas < 1 || cfg.min_canvas > cfg.max_canvas) fail("bad canvas range");
  if (cfg.max_attempts < 1) fail("max_attempts must be positive");
}

namespace detail {

inline double point_segment_distance(Vec2 p, Vec2 a, Vec2 b) {
  const Vec2 ab = b - a;
  const double len2 = dot(ab, ab);
  double t = len2 > 0 ? dot(p - a, ab) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return distance(p, a + t * ab);
}

inline double segment_distance(Vec2 a, Vec2 b, Vec2 c, Vec2 d) {
  if (segments_intersect(a, b, c, d)) return 0.0;
  return std::min({point_segment_distance(a, c, d), point_segment_distance(b, c, d),
                   point_segment_distance(c, a, b), point_segment_distance(d, a, b)});
}

inline double polygon_boundary_distance(const std::vector<Vec2>& pa,
                                        const std::vector<Vec2>& pb) {
  double best = INFINITY;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    for (std::size_t j = 0; j < pb.size(); ++j) {
      best = std::min(best, segment_distance(pa[i], pa[(i + 1) % pa.size()], pb[j],
                                             pb[(j + 1) % pb.size()]));
    }
  }
  return best;
}

// Boundary clearance between two shapes; <= 0 when their interiors meet.
inline double clearance(const Shape& a, const Shape& b) {
  const auto* ca = std::get_if<Circle>(&a.geometry);
  const auto* cb = std::get_if<Circle>(&b.geometry);
  if (ca && cb) return distance(ca->center, cb->center) - ca->radius - cb->radius;
  if (ca || cb) {
    const Circle& c = ca ? *ca : *cb;
    const auto poly = vertices(ca ? b : a);
    if (point_in_polygon(poly, c.center)) return -1.0;
    double d = INFINITY;
    for (std::size_t i = 0; i < poly.size(); ++i) {
      d = std::min(d, point_segment_distance(c.center, poly[i], poly[(i + 1) % poly.size()]));
    }
    return d - c.radius;
  }
  const auto pa = vertices(a);
  const auto pb = vertices(b);
  if (point_in_polygon(pb, pa[0]) || point_in_polygon(pa, pb[0])) return -1.0;
  const double d = polygon_boundary_distance(pa, pb);
  return d > 0.0 ? d : -1.0;
}

inline bool sides_separated(const std::vector<double>& sides, double separation) {
  std::vector<double> s = sides;
  std::sort(s.begin(), s.end());
  const std::size_t n = s.size();
  return s[1] >= s[0] * (1.0 + separation) && s[n - 1] >= s[n - 2] * (1.0 + separation);
}

inline double min_interior_angle(const std::vector<Vec2>& vs) {
  double best = INFINITY;
  for (std::size_t i = 0; i < vs.size(); ++i) {
    const Vec2 prev = vs[(i + vs.size() - 1) % vs.size()] - vs[i];
    const Vec2 next = vs[(i + 1) % vs.size()] - vs[i];
    best = std::min(best, std::acos(std::clamp(dot(prev, next) / (norm(prev) * norm(next)),
                                               -1.0, 1.0)));
  }
  return best;
}

template <std::size_t N>
std::array<Vec2, N> to_array(const std::vector<Vec2>& vs) {
  std::array<Vec2, N> out{};
  std::copy_n(vs.begin(), N, out.begin());
  return out;
}

// Draws a shape of the given extent centered on the origin. Returns nullopt
// when the draw fails a quality check (degenerate or tied sides).
inline std::optional<ShapeGeometry> draw_local_shape(ShapeKind kind, double extent,
                                                     double separation, Rng& rng) {
  constexpr double kMinAngle = 25.0 * std::numbers::pi / 180.0;
  switch (kind) {
    case ShapeKind::circle:
      return Circle{{0, 0}, extent / 2};
    case ShapeKind::rectangle: {
      const double long_side = extent;
      const double short_side = extent * rng.uniform(0.35, 0.9);
      const bool wide = rng.uniform() < 0.5;
      const double rotation = rng.uniform(0.0, std::numbers::pi);
      return Rectangle{{0, 0},
                       (wide ? long_side : short_side) / 2,
                       (wide ? short_side : long_side) / 2,
                       rotation};
    }
    case ShapeKind::triangle: {
      const double radius = extent / 2;
      std::vector<Vec2> vs;
      std::array<double, 3> angles{};
      for (auto& a : angles) a = rng.uniform(0.0, 2 * std::numbers::pi);
      std::sort(angles.begin(), angles.end());
      for (double a : angles) vs.push_back({radius * std::cos(a), radius * std::sin(a)});
      if (min_interior_angle(vs) < kMinAngle) return std::nullopt;
      Shape s{Triangle{to_array<3>(vs)}, ""};
      if (!sides_separated(side_lengths(s), separation)) return std::nullopt;
      return s.geometry;
    }
    case ShapeKind::trapezoid: {
      const double base = extent;
      const double top = extent * rng.uniform(0.3, 0.8);
      const double height = extent * rng.uniform(0.4, 0.9);
      const double max_shift = 0.8 * (base - top) / 2;
      const double shift = rng.uniform(-max_shift, max_shift);
      const double rotation = rng.uniform(0.0, 2 * std::numbers::pi);
      std::vector<Vec2> vs = {{-base / 2, -height / 2},
                              {base / 2, -height / 2},
                              {top / 2 + shift, height / 2},
                              {-top / 2 + shift, height / 2}};
      for (auto& p : vs) p = rotate(p, rotation);
      Shape s{Trapezoid{to_array<4>(vs)}, ""};
      if (min_interior_angle(vs) < kMinAngle) return std::nullopt;
      if (!sides_separated(side_lengths(s), separation)) return std::nullopt;
      return s.geometry;
    }
    case ShapeKind::pentagon: {
      const double step = 2 * std::numbers::pi / 5;
      const double base = rng.uniform(0.0, step);
      std::vector<Vec2> vs;
      for (int k = 0; k < 5; ++k) {
        const double a = base + k * step + rng.uniform(-0.3, 0.3) * step;
        const double r = extent / 2 * rng.uniform(0.7, 1.0);
        vs.push_back({r * std::cos(a), r * std::sin(a)});
      }
      Shape s{Pentagon{to_array<5>(vs)}, ""};
      if (shape_defect(s)) return std::nullopt;
      if (min_interior_angle(vs) < kMinAngle) return std::nullopt;
      if (!sides_separated(side_lengths(s), separation)) return std::nullopt;
      return s.geometry;
    }
  }
  return std::nullopt;
}

inline ShapeGeometry translated(const ShapeGeometry& g, Vec2 offset) {
  return std::visit(
      [&](auto copy) -> ShapeGeometry {
        using G = decltype(copy);
        if constexpr (std::is_same_v<G, Circle> || std::is_same_v<G, Rectangle>) {
          copy.center = copy.center + offset;
        } else {
          for (auto& p : copy.v) p = p + offset;
        }
        return copy;
      },
      g);
}

}  // namespace detail

inline Scene generate_scene(const GenConfig& cfg) {
  check_config(cfg);
  Rng rng(cfg.seed);
  Scene scene;
  scene.seed = cfg.seed;
  scene.width = static_cast<int>(rng.uniform_int(cfg.min_canvas, cfg.max_canvas));
  scene.height = static_cast<int>(rng.uniform_int(cfg.min_canvas, cfg.max_canvas));
  const int count = static_cast<int>(rng.uniform_int(cfg.min_shapes, cfg.max_shapes));

  std::vector<std::string> colors = cfg.palette;
  rng.shuffle(colors);

  const double min_dim = std::min(scene.width, scene.height);
  for (int i = 0; i < count; ++i) {
    const ShapeKind kind = cfg.shape_pool[rng.index(cfg.shape_pool.size())];
    bool placed = false;
    for (int attempt = 0; attempt < cfg.max_attempts && !placed; ++attempt) {
      const double extent = min_dim * rng.uniform(cfg.min_extent, cfg.max_extent);
      auto local = detail::draw_local_shape(kind, extent, cfg.min_side_separation, rng);
      if (!local) continue;
      const Bounds b = bounds(Shape{*local, ""});
      const double lo_x = cfg.margin - b.min_x, hi_x = scene.width - cfg.margin - b.max_x;
      const double lo_y = cfg.margin - b.min_y, hi_y = scene.height - cfg.margin - b.max_y;
      if (lo_x >= hi_x || lo_y >= hi_y) continue;
      Shape candidate{detail::translated(*local, {rng.uniform(lo_x, hi_x), rng.uniform(lo_y, hi_y)}),
                      colors[static_cast<std::size_t>(i)]};
      bool clear = true;
      for (const auto& other : scene.shapes) {
        if (detail::clearance(candidate, other) < cfg.min_gap) {
          clear = false;
          break;
        }
      }
      if (!clear) continue;
      scene.shapes.push_back(std::move(candidate));
      placed = true;
    }
    if (!placed) {
      throw Error(Errc::placement_exhausted,
                  "could not place shape " + std::to_string(i) + " (" + kind_name(kind) +
                      ") after " + std::to_string(cfg.max_attempts) + " attempts");
    }
  }
  return scene;
}

struct Violation {
  std::string invariant;
  std::vector<std::size_t> shapes;
  std::string detail;

  friend bool operator==(const Violation&, const Violation&) = default;
};

// Canvas and count limits default to the benchmark construction ranges.
struct SceneLimits {
  int min_canvas = 600;
  int max_canvas = 1200;
  int min_shapes = 3;
  int max_shapes = 7;
  double margin = 2.0;
};

inline std::vector<Violation> validate_scene(const Scene& scene, const SceneLimits& limits = {}) {
  std::vector<Violation> out;
  if (scene.width < limits.min_canvas || scene.width > limits.max_canvas ||
      scene.height < limits.min_canvas || scene.height > limits.max_canvas) {
    out.push_back({"canvas-size", {},
                   fmt::format("{}x{} outside [{}, {}]", scene.width, scene.height,
                               limits.min_canvas, limits.max_canvas)});
  }
  const int n = static_cast<int>(scene.shapes.size());
  if (n < limits.min_shapes || n > limits.max_shapes) {
    out.push_back({"shape-count", {},
                   fmt::format("{} shapes outside [{}, {}]", n, limits.min_shapes, limits.max_shapes)});
  }
  std::vector<bool> valid(scene.shapes.size(), true);
  for (std::size_t i = 0; i < scene.shapes.size(); ++i) {
    const Shape& s = scene.shapes[i];
    if (find_palette_color(s.color) == nullptr) {
      out.push_back({"unknown-color", {i}, s.color});
    }
    if (auto defect = shape_defect(s)) {
      out.push_back({"invalid-shape", {i}, *defect});
      valid[i] = false;
      continue;
    }
    const Bounds b = bounds(s);
    if (b.min_x < limits.margin || b.min_y < limits.margin ||
        b.max_x > scene.width - limits.margin || b.max_y > scene.height - limits.margin) {
      out.push_back({"out-of-bounds", {i}, "shape not inside the canvas margin"});
    }
  }
  for (std::size_t i = 0; i < scene.shapes.size(); ++i) {
    for (std::size_t j = i + 1; j < scene.shapes.size(); ++j) {
      if (scene.shapes[i].color == scene.shapes[j].color) {
        out.push_back({"duplicate-color", {i, j}, scene.shapes[i].color});
      }
      if (valid[i] && valid[j] && detail::clearance(scene.shapes[i], scene.shapes[j]) <= 0.0) {
        out.push_back({"overlap", {i, j}, "shape interiors intersect"});
      }
    }
  }
  return out;
}

inline std::string format_violation(const Violation& v) {
  std::string s = v.invariant + "(";
  for (std::size_t i = 0; i < v.shapes.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(v.shapes[i]);
  }
  return s + ")" + (v.detail.empty() ? "" : ": " + v.detail);
}

// ---------------------------------------------------------------------------
// Scene file (schema_version 1). Field order is fixed and every float is
// written with 17 significant digits so the file round-trips bit-exactly.

namespace detail {
inline std::string num17(double v) { return fmt::format("{:.17g}", v); }
inline std::string point17(Vec2 p) { return "[" + num17(p.x) + "," + num17(p.y) + "]"; }
}  // namespace detail

inline std::string scene_to_json(const Scene& scene) {
  using detail::num17;
  using detail::point17;
  std::string out = fmt::format(R"({{"schema_version":{},"seed":{},"width":{},"height":{},"shapes":[)",
                                scene.schema_version, scene.seed, scene.width, scene.height);
  for (std::size_t i = 0; i < scene.shapes.size(); ++i) {
    const Shape& s = scene.shapes[i];
    if (i) out += ",";
    out += fmt::format(R"({{"kind":"{}","color":{})", kind_name(s.kind()),
                       nlohmann::json(s.color).dump());
    std::visit(
        [&](const auto& g) {
          using G = std::decay_t<decltype(g)>;
          if constexpr (std::is_same_v<G, Circle>) {
            out += ",\"center\":" + point17(g.center) + ",\"radius\":" + num17(g.radius);
          } else if constexpr (std::is_same_v<G, Rectangle>) {
            out += ",\"center\":" + point17(g.center) + ",\"half_w\":" + num17(g.half_w) +
                   ",\"half_h\":" + num17(g.half_h) + ",\"rotation\":" + num17(g.rotation);
          } else {
            out += ",\"vertices\":[";
            for (std::size_t k = 0; k < g.v.size(); ++k) {
              if (k) out += ",";
              out += point17(g.v[k]);
            }
            out += "]";
          }
        },
        s.geometry);
    out += "}";
  }
  out += "]}";
  return out;
}

inline Scene scene_from_json(const nlohmann::json& j) {
  auto point = [](const nlohmann::json& p) { return Vec2{p.at(0).get<double>(), p.at(1).get<double>()}; };
  Scene scene;
  scene.schema_version = j.at("schema_version").get<int>();
  if (scene.schema_version != 1) {
    throw Error(Errc::invalid_scene, "unsupported schema_version " + std::to_string(scene.schema_version));
  }
  scene.seed = j.at("seed").get<std::uint64_t>();
  scene.width = j.at("width").get<int>();
  scene.height = j.at("height").get<int>();
  for (const auto& js : j.at("shapes")) {
    const ShapeKind kind = kind_from_name(js.at("kind").get<std::string>());
    Shape s;
    s.color = js.at("color").get<std::string>();
    auto verts = [&]() {
      std::vector<Vec2> vs;
      for (const auto& p : js.at("vertices")) vs.push_back(point(p));
      return vs;
    };
    auto expect = [&](std::size_t n, const std::vector<Vec2>& vs) {
      if (vs.size() != n) {
        throw Error(Errc::invalid_scene, fmt::format("{} needs {} vertices", kind_name(kind), n));
      }
      return vs;
    };
    switch (kind) {
      case ShapeKind::circle:
        s.geometry = Circle{point(js.at("center")), js.at("radius").get<double>()};
        break;
      case ShapeKind::rectangle:
        s.geometry = Rectangle{point(js.at("center")), js.at("half_w").get<double>(),
                               js.at("half_h").get<double>(), js.at("rotation").get<double>()};
        break;
      case ShapeKind::triangle: s.geometry = Triangle{detail::to_array<3>(expect(3, verts()))}; break;
      case ShapeKind::trapezoid: s.geometry = Trapezoid{detail::to_array<4>(expect(4, verts()))}; break;
      case ShapeKind::pentagon: s.geometry = Pentagon{detail::to_array<5>(expect(5, verts()))}; break;
    }
    scene.shapes.push_back(std::move(s));
  }
  return scene;
}

inline Scene scene_from_json(const std::string& text) {
  return scene_from_json(nlohmann::json::parse(text));
}

}  // namespace pts
