#pragma once

// Exact analytic measurements for the benchmark shapes. Everything here is a
// pure function of immutable values.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "pts/error.hpp"

namespace pts {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend bool operator==(Vec2, Vec2) = default;
};

inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }
inline double distance(Vec2 a, Vec2 b) { return norm(a - b); }

inline Vec2 rotate(Vec2 p, double angle) {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  return {c * p.x - s * p.y, s * p.x + c * p.y};
}

enum class ShapeKind { circle, rectangle, triangle, trapezoid, pentagon };

inline const char* kind_name(ShapeKind k) {
  switch (k) {
    case ShapeKind::circle: return "circle";
    case ShapeKind::rectangle: return "rectangle";
    case ShapeKind::triangle: return "triangle";
    case ShapeKind::trapezoid: return "trapezoid";
    case ShapeKind::pentagon: return "pentagon";
  }
  return "?";
}

inline ShapeKind kind_from_name(const std::string& s) {
  for (auto k : {ShapeKind::circle, ShapeKind::rectangle, ShapeKind::triangle,
                 ShapeKind::trapezoid, ShapeKind::pentagon}) {
    if (s == kind_name(k)) return k;
  }
  throw Error(Errc::invalid_shape, "unknown shape kind '" + s + "'");
}

struct Circle {
  Vec2 center;
  double radius = 0.0;
};

// Axis half-extents before rotation; rotation is counter-clockwise in
// radians about the center.
struct Rectangle {
  Vec2 center;
  double half_w = 0.0;
  double half_h = 0.0;
  double rotation = 0.0;
};

struct Triangle {
  std::array<Vec2, 3> v;
};
struct Trapezoid {
  std::array<Vec2, 4> v;
};
struct Pentagon {
  std::array<Vec2, 5> v;
};

using ShapeGeometry = std::variant<Circle, Rectangle, Triangle, Trapezoid, Pentagon>;

struct Shape {
  ShapeGeometry geometry;
  std::string color;

  ShapeKind kind() const { return static_cast<ShapeKind>(geometry.index()); }
  bool is_polygon() const { return kind() != ShapeKind::circle; }
};

struct Scene {
  int width = 0;
  int height = 0;
  std::vector<Shape> shapes;
  std::uint64_t seed = 0;
  int schema_version = 1;
};

// Rectangle corners are emitted in the order (-w,-h), (w,-h), (w,h), (-w,h)
// so edge i alternates width, height, width, height.
inline std::vector<Vec2> vertices(const Shape& shape) {
  return std::visit(
      [](const auto& g) -> std::vector<Vec2> {
        using G = std::decay_t<decltype(g)>;
        if constexpr (std::is_same_v<G, Circle>) {
          throw Error(Errc::unsupported_attribute, "a circle has no vertices");
        } else if constexpr (std::is_same_v<G, Rectangle>) {
          const std::array<Vec2, 4> local = {Vec2{-g.half_w, -g.half_h},
                                             Vec2{g.half_w, -g.half_h},
                                             Vec2{g.half_w, g.half_h},
                                             Vec2{-g.half_w, g.half_h}};
          std::vector<Vec2> out;
          for (const auto& p : local) out.push_back(g.center + rotate(p, g.rotation));
          return out;
        } else {
          return {g.v.begin(), g.v.end()};
        }
      },
      shape.geometry);
}

// Edge i joins vertex i and vertex i+1 (wrapping).
inline std::vector<double> side_lengths(const Shape& shape) {
  if (shape.kind() == ShapeKind::circle) {
    throw Error(Errc::unsupported_attribute, "side lengths of a circle");
  }
  if (const auto* r = std::get_if<Rectangle>(&shape.geometry)) {
    return {2 * r->half_w, 2 * r->half_h, 2 * r->half_w, 2 * r->half_h};
  }
  const auto vs = vertices(shape);
  std::vector<double> out;
  out.reserve(vs.size());
  for (std::size_t i = 0; i < vs.size(); ++i) {
    out.push_back(distance(vs[i], vs[(i + 1) % vs.size()]));
  }
  return out;
}

inline double perimeter(const Shape& shape) {
  if (const auto* c = std::get_if<Circle>(&shape.geometry)) {
    return 2.0 * std::numbers::pi * c->radius;
  }
  const auto sides = side_lengths(shape);
  double sum = 0.0;
  for (double s : sides) sum += s;
  return sum;
}

inline double signed_area(const std::vector<Vec2>& vs) {
  double acc = 0.0;
  for (std::size_t i = 0; i < vs.size(); ++i) {
    acc += cross(vs[i], vs[(i + 1) % vs.size()]);
  }
  return 0.5 * acc;
}

inline double area(const Shape& shape) {
  if (const auto* c = std::get_if<Circle>(&shape.geometry)) {
    return std::numbers::pi * c->radius * c->radius;
  }
  if (const auto* r = std::get_if<Rectangle>(&shape.geometry)) {
    return 4.0 * r->half_w * r->half_h;
  }
  return std::abs(signed_area(vertices(shape)));
}

inline bool segments_intersect(Vec2 a, Vec2 b, Vec2 c, Vec2 d) {
  auto orient = [](Vec2 p, Vec2 q, Vec2 r) {
    const double v = cross(q - p, r - p);
    return (v > 0) - (v < 0);
  };
  auto on_segment = [](Vec2 p, Vec2 q, Vec2 r) {
    return std::min(p.x, q.x) <= r.x && r.x <= std::max(p.x, q.x) &&
           std::min(p.y, q.y) <= r.y && r.y <= std::max(p.y, q.y);
  };
  const int o1 = orient(a, b, c), o2 = orient(a, b, d);
  const int o3 = orient(c, d, a), o4 = orient(c, d, b);
  if (o1 != o2 && o3 != o4) return true;
  if (o1 == 0 && on_segment(a, b, c)) return true;
  if (o2 == 0 && on_segment(a, b, d)) return true;
  if (o3 == 0 && on_segment(c, d, a)) return true;
  if (o4 == 0 && on_segment(c, d, b)) return true;
  return false;
}

inline bool is_simple_polygon(const std::vector<Vec2>& vs) {
  const std::size_t n = vs.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      // Adjacent edges share a vertex by construction.
      if (j == i + 1 || (i == 0 && j == n - 1)) continue;
      if (segments_intersect(vs[i], vs[(i + 1) % n], vs[j], vs[(j + 1) % n])) {
        return false;
      }
    }
  }
  return true;
}

// Returns a description of the first broken shape invariant, if any.
inline std::optional<std::string> shape_defect(const Shape& shape) {
  if (const auto* c = std::get_if<Circle>(&shape.geometry)) {
    if (!(c->radius > 0.0)) return "radius must be positive";
    return std::nullopt;
  }
  if (const auto* r = std::get_if<Rectangle>(&shape.geometry)) {
    if (!(r->half_w > 0.0) || !(r->half_h > 0.0)) return "half extents must be positive";
    return std::nullopt;
  }
  const auto vs = vertices(shape);
  if (!(std::abs(signed_area(vs)) > 1e-9)) return "degenerate polygon";
  for (std::size_t i = 0; i < vs.size(); ++i) {
    const Vec2 a = vs[(i + vs.size() - 1) % vs.size()];
    const Vec2 b = vs[i];
    const Vec2 c = vs[(i + 1) % vs.size()];
    if (std::abs(cross(b - a, c - b)) <= 1e-9 * norm(b - a) * norm(c - b)) {
      return "collinear vertices";
    }
  }
  if (!is_simple_polygon(vs)) return "self-intersecting polygon";
  return std::nullopt;
}

inline bool point_in_polygon(const std::vector<Vec2>& vs, Vec2 p) {
  bool inside = false;
  for (std::size_t i = 0, j = vs.size() - 1; i < vs.size(); j = i++) {
    const Vec2 a = vs[i], b = vs[j];
    if ((a.y > p.y) != (b.y > p.y)) {
      const double x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
      if (p.x < x) inside = !inside;
    }
  }
  return inside;
}

inline bool contains(const Shape& shape, Vec2 p) {
  if (const auto* c = std::get_if<Circle>(&shape.geometry)) {
    const double dx = p.x - c->center.x, dy = p.y - c->center.y;
    return dx * dx + dy * dy <= c->radius * c->radius;
  }
  if (const auto* r = std::get_if<Rectangle>(&shape.geometry)) {
    const Vec2 local = rotate(p - r->center, -r->rotation);
    return std::abs(local.x) <= r->half_w && std::abs(local.y) <= r->half_h;
  }
  return point_in_polygon(vertices(shape), p);
}

struct Bounds {
  double min_x, min_y, max_x, max_y;
};

inline Bounds bounds(const Shape& shape) {
  if (const auto* c = std::get_if<Circle>(&shape.geometry)) {
    return {c->center.x - c->radius, c->center.y - c->radius,
            c->center.x + c->radius, c->center.y + c->radius};
  }
  const auto vs = vertices(shape);
  Bounds b{vs[0].x, vs[0].y, vs[0].x, vs[0].y};
  for (const auto& p : vs) {
    b.min_x = std::min(b.min_x, p.x);
    b.min_y = std::min(b.min_y, p.y);
    b.max_x = std::max(b.max_x, p.x);
    b.max_y = std::max(b.max_y, p.y);
  }
  return b;
}

// ---------------------------------------------------------------------------
// Attribute selectors

enum class Attribute { width, height, radius, side, perimeter, area, diagonal };
enum class SideRank { shortest, longest, index };

inline const char* attribute_name(Attribute a) {
  switch (a) {
    case Attribute::width: return "width";
    case Attribute::height: return "height";
    case Attribute::radius: return "radius";
    case Attribute::side: return "side";
    case Attribute::perimeter: return "perimeter";
    case Attribute::area: return "area";
    case Attribute::diagonal: return "diagonal";
  }
  return "?";
}

// `color` empty means the image canvas itself.
struct AttributeSelector {
  Attribute attr = Attribute::width;
  std::optional<std::string> color;
  SideRank rank = SideRank::shortest;
  int side_index = 0;

  static AttributeSelector image_width() { return {Attribute::width, std::nullopt}; }
  static AttributeSelector image_height() { return {Attribute::height, std::nullopt}; }
  static AttributeSelector image_perimeter() { return {Attribute::perimeter, std::nullopt}; }
  static AttributeSelector image_area() { return {Attribute::area, std::nullopt}; }
  static AttributeSelector radius_of(std::string c) { return {Attribute::radius, std::move(c)}; }
  static AttributeSelector side_of(std::string c, SideRank rank, int index = 0) {
    return {Attribute::side, std::move(c), rank, index};
  }
  static AttributeSelector perimeter_of(std::string c) { return {Attribute::perimeter, std::move(c)}; }
  static AttributeSelector area_of(std::string c) { return {Attribute::area, std::move(c)}; }
  static AttributeSelector diagonal_of(std::string c) { return {Attribute::diagonal, std::move(c)}; }

  bool of_image() const { return !color.has_value(); }
  // A single straight segment: radius, one side, or an image dimension.
  bool is_segment() const {
    return attr == Attribute::width || attr == Attribute::height ||
           attr == Attribute::radius || attr == Attribute::side ||
           attr == Attribute::diagonal;
  }
  bool is_primitive_segment() const {
    return attr == Attribute::radius || attr == Attribute::side;
  }

  friend bool operator==(const AttributeSelector&, const AttributeSelector&) = default;
};

inline const Shape& find_shape(const Scene& scene, const std::string& color) {
  const Shape* found = nullptr;
  for (const auto& s : scene.shapes) {
    if (s.color == color) {
      if (found != nullptr) {
        throw Error(Errc::ambiguous_selector, "more than one " + color + " shape");
      }
      found = &s;
    }
  }
  if (found == nullptr) throw Error(Errc::no_such_color, "no " + color + " shape in scene");
  return *found;
}

// Index of the edge a side selector names. Ties resolve to the lowest index.
inline std::size_t selected_side(const Shape& shape, const AttributeSelector& sel) {
  const auto sides = side_lengths(shape);
  switch (sel.rank) {
    case SideRank::shortest:
      return static_cast<std::size_t>(std::min_element(sides.begin(), sides.end()) - sides.begin());
    case SideRank::longest:
      return static_cast<std::size_t>(std::max_element(sides.begin(), sides.end()) - sides.begin());
    case SideRank::index:
      if (sel.side_index < 0 || static_cast<std::size_t>(sel.side_index) >= sides.size()) {
        throw Error(Errc::attribute_kind_mismatch,
                    "side index " + std::to_string(sel.side_index) + " out of range");
      }
      return static_cast<std::size_t>(sel.side_index);
  }
  return 0;
}

inline double resolve_attribute(const Scene& scene, const AttributeSelector& sel) {
  if (sel.of_image()) {
    const double w = scene.width, h = scene.height;
    switch (sel.attr) {
      case Attribute::width: return w;
      case Attribute::height: return h;
      case Attribute::perimeter: return 2.0 * (w + h);
      case Attribute::area: return w * h;
      case Attribute::diagonal: return std::hypot(w, h);
      default:
        throw Error(Errc::attribute_kind_mismatch,
                    std::string("the image has no ") + attribute_name(sel.attr));
    }
  }
  const Shape& shape = find_shape(scene, *sel.color);
  switch (sel.attr) {
    case Attribute::radius:
      if (const auto* c = std::get_if<Circle>(&shape.geometry)) return c->radius;
      break;
    case Attribute::side:
      if (shape.is_polygon()) return side_lengths(shape)[selected_side(shape, sel)];
      break;
    case Attribute::perimeter: return perimeter(shape);
    case Attribute::area: return area(shape);
    case Attribute::diagonal:
      if (const auto* r = std::get_if<Rectangle>(&shape.geometry)) {
        return 2.0 * std::hypot(r->half_w, r->half_h);
      }
      break;
    default: break;
  }
  throw Error(Errc::attribute_kind_mismatch,
              std::string(attribute_name(sel.attr)) + " of a " + kind_name(shape.kind()));
}

inline std::string shape_phrase(const Shape& shape) {
  return "the " + shape.color + " " + kind_name(shape.kind());
}

inline std::string object_phrase(const Scene& scene, const AttributeSelector& sel) {
  return sel.of_image() ? std::string("the image") : shape_phrase(find_shape(scene, *sel.color));
}

// Noun phrase without a leading article, e.g. "radius of the red circle".
inline std::string selector_phrase(const Scene& scene, const AttributeSelector& sel) {
  const std::string of = object_phrase(scene, sel);
  if (sel.attr != Attribute::side) return std::string(attribute_name(sel.attr)) + " of " + of;
  const Shape& shape = find_shape(scene, *sel.color);
  const bool rect = shape.kind() == ShapeKind::rectangle;
  switch (sel.rank) {
    case SideRank::shortest: return std::string(rect ? "shorter" : "shortest") + " side of " + of;
    case SideRank::longest: return std::string(rect ? "longer" : "longest") + " side of " + of;
    case SideRank::index: return "side " + std::to_string(sel.side_index + 1) + " of " + of;
  }
  return of;
}

inline nlohmann::ordered_json to_json(const AttributeSelector& sel) {
  nlohmann::ordered_json j;
  j["attr"] = attribute_name(sel.attr);
  j["of"] = sel.of_image() ? std::string("image") : *sel.color;
  if (sel.attr == Attribute::side) {
    j["which"] = sel.rank == SideRank::shortest  ? "shortest"
                 : sel.rank == SideRank::longest ? "longest"
                                                 : "index";
    if (sel.rank == SideRank::index) j["index"] = sel.side_index;
  }
  return j;
}

inline AttributeSelector selector_from_json(const nlohmann::json& j) {
  AttributeSelector sel;
  const std::string attr = j.at("attr").get<std::string>();
  bool known = false;
  for (auto a : {Attribute::width, Attribute::height, Attribute::radius, Attribute::side,
                 Attribute::perimeter, Attribute::area, Attribute::diagonal}) {
    if (attr == attribute_name(a)) {
      sel.attr = a;
      known = true;
    }
  }
  if (!known) throw Error(Errc::attribute_kind_mismatch, "unknown attribute '" + attr + "'");
  const std::string of = j.at("of").get<std::string>();
  if (of != "image") sel.color = of;
  if (sel.attr == Attribute::side) {
    const std::string which = j.value("which", "shortest");
    if (which == "shortest") {
      sel.rank = SideRank::shortest;
    } else if (which == "longest") {
      sel.rank = SideRank::longest;
    } else {
      sel.rank = SideRank::index;
      sel.side_index = j.at("index").get<int>();
    }
  }
  return sel;
}

}  // namespace pts
