#pragma once

#include <cmath>
#include <compare>
#include <cstdint>

#include "fraclab/box.hpp"
#include "fraclab/core.hpp"

namespace fraclab {

/// Closed dyadic cube prod [k_i 2^-j, (k_i+1) 2^-j].
struct DyadicCube {
  int n = 2;
  int generation = 0;
  IPoint corner{};

  double side() const { return std::ldexp(1.0, -generation); }
  double diam() const { return std::sqrt(double(n)) * side(); }
  double volume() const { return std::ldexp(1.0, -generation * n); }

  Point midpoint() const {
    Point c{};
    for (int i = 0; i < n; ++i) c[i] = (double(corner[i]) + 0.5) * side();
    return c;
  }

  Box box() const {
    Box b{n, {}, {}};
    for (int i = 0; i < n; ++i) {
      b.lo[i] = double(corner[i]) * side();
      b.hi[i] = double(corner[i] + 1) * side();
    }
    return b;
  }

  DyadicCube parent() const {
    DyadicCube p{n, generation - 1, {}};
    for (int i = 0; i < n; ++i) p.corner[i] = corner[i] >> 1;  // floor division
    return p;
  }

  DyadicCube child(int which) const {
    DyadicCube c{n, generation + 1, {}};
    for (int i = 0; i < n; ++i) c.corner[i] = 2 * corner[i] + ((which >> i) & 1);
    return c;
  }

  static DyadicCube containing(const Point& x, int generation, int n) {
    DyadicCube c{n, generation, {}};
    for (int i = 0; i < n; ++i) c.corner[i] = std::int64_t(std::floor(std::ldexp(x[i], generation)));
    return c;
  }

  auto operator<=>(const DyadicCube& o) const {
    if (auto c = generation <=> o.generation; c != 0) return c;
    for (int i = 0; i < n; ++i)
      if (auto c = corner[i] <=> o.corner[i]; c != 0) return c;
    return std::strong_ordering::equal;
  }
  bool operator==(const DyadicCube& o) const { return (*this <=> o) == 0; }
};

/// Star cube Q* = (9/8)Q.
inline Box expand_star(const DyadicCube& q) { return q.box().dilated(9.0 / 8.0); }

}  // namespace fraclab
