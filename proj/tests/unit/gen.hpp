#pragma once

// Hand-rolled generators for the property tests.

#include <cmath>
#include <numbers>
#include <vector>

#include "pts/geometry.hpp"
#include "pts/rng.hpp"

namespace gen {

using namespace pts;

inline Vec2 point(Rng& rng, double lo = -50.0, double hi = 50.0) { return {rng.uniform(lo, hi), rng.uniform(lo, hi)}; }

// Convex polygon with n vertices: sorted angles on a jittered circle, CCW.
inline std::vector<Vec2> convex_polygon(Rng& rng, std::size_t n) {
  std::vector<double> angles;
  for (std::size_t i = 0; i < n; ++i) {
    angles.push_back(2.0 * std::numbers::pi * (static_cast<double>(i) + rng.uniform(0.1, 0.9)) / n);
  }
  const Vec2 c = point(rng);
  const double r = rng.uniform(1.0, 40.0);
  std::vector<Vec2> out;
  for (double a : angles) out.push_back({c.x + r * std::cos(a), c.y + r * std::sin(a)});
  return out;
}

inline Shape shape(Rng& rng) {
  Shape s;
  s.color = "red";
  switch (rng.uniform_int(0, 4)) {
    case 0: s.geometry = Circle{point(rng), rng.uniform(0.5, 40.0)}; break;
    case 1: s.geometry = Rectangle{point(rng), rng.uniform(0.5, 30.0), rng.uniform(0.5, 30.0), rng.uniform(-3.0, 3.0)}; break;
    case 2: {
      const auto v = convex_polygon(rng, 3);
      s.geometry = Triangle{{v[0], v[1], v[2]}};
      break;
    }
    case 3: {
      const auto v = convex_polygon(rng, 4);
      s.geometry = Trapezoid{{v[0], v[1], v[2], v[3]}};
      break;
    }
    default: {
      const auto v = convex_polygon(rng, 5);
      s.geometry = Pentagon{{v[0], v[1], v[2], v[3], v[4]}};
      break;
    }
  }
  return s;
}

// Applies p -> s * R(angle) p + t to every point of the shape.
inline Shape transformed(const Shape& in, double s, double angle, Vec2 t) {
  auto f = [&](Vec2 p) { return s * rotate(p, angle) + t; };
  Shape out = in;
  std::visit(
      [&](auto& g) {
        using G = std::decay_t<decltype(g)>;
        if constexpr (std::is_same_v<G, Circle>) {
          g.center = f(g.center);
          g.radius *= s;
        } else if constexpr (std::is_same_v<G, Rectangle>) {
          g.center = f(g.center);
          g.half_w *= s;
          g.half_h *= s;
          g.rotation += angle;
        } else {
          for (auto& v : g.v) v = f(v);
        }
      },
      out.geometry);
  return out;
}

inline bool close_rel(double a, double b, double tol) { return std::abs(a - b) <= tol * std::max(std::abs(a), std::abs(b)); }

}  // namespace gen
