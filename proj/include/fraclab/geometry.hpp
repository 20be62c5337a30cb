#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "fraclab/box.hpp"
#include "fraclab/core.hpp"
#include "fraclab/domain.hpp"

namespace fraclab {

// ---------------------------------------------------------------------------
// Presets

enum class Preset { UnitCube, LShape, KochSnowflake, CustomBitmap };

inline Preset parse_preset(const std::string& s) {
  if (s == "unit-cube" || s == "square" || s == "cube") return Preset::UnitCube;
  if (s == "l-shape") return Preset::LShape;
  if (s == "koch-snowflake" || s == "koch") return Preset::KochSnowflake;
  if (s == "custom-bitmap") return Preset::CustomBitmap;
  fail("bad-preset", "unknown domain preset '", s, "'");
}

// Standard Koch snowflake on a unit-side equilateral triangle, centroid at
// (1/2, 1/2), counter-clockwise. `depth` refinement steps give 3 * 4^depth
// vertices.
inline std::vector<Point> koch_snowflake_polygon(int depth) {
  const double s3 = std::sqrt(3.0);
  const double dy = 0.5 - s3 / 6.0;
  std::vector<Point> poly{{0.0, dy, 0.0}, {1.0, dy, 0.0}, {0.5, s3 / 2.0 + dy, 0.0}};
  for (int d = 0; d < depth; ++d) {
    std::vector<Point> next;
    next.reserve(poly.size() * 4);
    for (std::size_t i = 0; i < poly.size(); ++i) {
      const Point& p = poly[i];
      const Point& q = poly[(i + 1) % poly.size()];
      const double ex = q[0] - p[0], ey = q[1] - p[1];
      // Outward normal of a CCW polygon edge is the edge rotated by -90 deg.
      const double k = s3 / 6.0;
      next.push_back(p);
      next.push_back({p[0] + ex / 3.0, p[1] + ey / 3.0, 0.0});
      next.push_back({p[0] + ex / 2.0 + k * ey, p[1] + ey / 2.0 - k * ex, 0.0});
      next.push_back({p[0] + 2.0 * ex / 3.0, p[1] + 2.0 * ey / 3.0, 0.0});
    }
    poly = std::move(next);
  }
  return poly;
}

inline double koch_snowflake_area(double side = 1.0) { return 2.0 * std::sqrt(3.0) / 5.0 * side * side; }

// Rasterize a simple polygon: voxel occupied iff its center is inside
// (even-odd rule, scanline crossings).
inline VoxelDomain rasterize_polygon(const std::vector<Point>& poly, int J) {
  const double h = std::ldexp(1.0, -J);
  double xlo = poly[0][0], xhi = xlo, ylo = poly[0][1], yhi = ylo;
  for (const auto& p : poly) {
    xlo = std::min(xlo, p[0]);
    xhi = std::max(xhi, p[0]);
    ylo = std::min(ylo, p[1]);
    yhi = std::max(yhi, p[1]);
  }
  const IPoint org{std::int64_t(std::floor(xlo / h)), std::int64_t(std::floor(ylo / h)), 0};
  const IPoint dims{std::int64_t(std::floor(xhi / h)) - org[0] + 1,
                    std::int64_t(std::floor(yhi / h)) - org[1] + 1, 1};
  std::vector<std::uint8_t> occ(std::size_t(dims[0] * dims[1]), 0);
  std::vector<double> xs;
  for (std::int64_t r = 0; r < dims[1]; ++r) {
    const double y = (double(org[1] + r) + 0.5) * h;
    xs.clear();
    for (std::size_t i = 0; i < poly.size(); ++i) {
      const Point& p = poly[i];
      const Point& q = poly[(i + 1) % poly.size()];
      if ((p[1] <= y) != (q[1] <= y)) xs.push_back(p[0] + (y - p[1]) / (q[1] - p[1]) * (q[0] - p[0]));
    }
    std::sort(xs.begin(), xs.end());
    for (std::size_t k = 0; k + 1 < xs.size(); k += 2) {
      // centers (c + 0.5) h strictly inside (xs[k], xs[k+1])
      const std::int64_t c0 = std::int64_t(std::ceil(xs[k] / h - 0.5));
      const std::int64_t c1 = std::int64_t(std::floor(xs[k + 1] / h - 0.5));
      for (std::int64_t c = c0; c <= c1; ++c) {
        const double xc = (double(c) + 0.5) * h;
        if (xc <= xs[k] || xc >= xs[k + 1]) continue;
        const std::int64_t lc = c - org[0];
        if (lc >= 0 && lc < dims[0]) occ[std::size_t(lc + dims[0] * r)] = 1;
      }
    }
  }
  return VoxelDomain(2, J, org, dims, occ);
}

// Reads a plain (P1) or raw (P4) PBM. Black pixels (1) are occupied; image
// row 0 is the top, so pixel (row, col) maps to voxel (col, rows-1-row).
inline VoxelDomain read_pbm(const std::string& path, int J) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("io", "cannot open PBM file '", path, "'");
  auto token = [&]() {
    std::string t;
    char c;
    while (in.get(c)) {
      if (c == '#') {
        std::string rest;
        std::getline(in, rest);
        continue;
      }
      if (std::isspace(static_cast<unsigned char>(c))) {
        if (!t.empty()) break;
        continue;
      }
      t.push_back(c);
    }
    return t;
  };
  const std::string magic = token();
  if (magic != "P1" && magic != "P4") fail("bad-pbm", "unsupported PBM magic '", magic, "'");
  const std::int64_t w = std::stoll(token());
  const std::int64_t hgt = std::stoll(token());
  if (w <= 0 || hgt <= 0) fail("bad-pbm", "PBM dimensions must be positive");
  std::vector<std::uint8_t> occ(std::size_t(w * hgt), 0);
  for (std::int64_t r = 0; r < hgt; ++r) {
    if (magic == "P1") {
      for (std::int64_t c = 0; c < w; ++c) {
        char ch;
        do {
          if (!in.get(ch)) fail("bad-pbm", "truncated P1 data");
        } while (std::isspace(static_cast<unsigned char>(ch)));
        occ[std::size_t(c + w * (hgt - 1 - r))] = ch == '1';
      }
    } else {
      const std::int64_t bytes = (w + 7) / 8;
      std::vector<unsigned char> row(static_cast<std::size_t>(bytes));
      if (!in.read(reinterpret_cast<char*>(row.data()), bytes)) fail("bad-pbm", "truncated P4 data");
      for (std::int64_t c = 0; c < w; ++c)
        occ[std::size_t(c + w * (hgt - 1 - r))] = (row[std::size_t(c / 8)] >> (7 - c % 8)) & 1;
    }
  }
  return VoxelDomain(2, J, IPoint{0, 0, 0}, IPoint{w, hgt, 1}, occ);
}

/// Builds one of the preset domains at voxel side 2^-J.
inline VoxelDomain make_domain(Preset preset, int J, int n = 2, const std::string& bitmap_path = {}) {
  if (J < 2 || J > 12) fail("bad-resolution", "resolution J must lie in [2, 12], got ", J);
  const std::int64_t N = std::int64_t(1) << J;
  switch (preset) {
    case Preset::UnitCube: {
      IPoint dims{N, N, n == 3 ? N : 1};
      std::size_t total = std::size_t(N * N * (n == 3 ? N : 1));
      return VoxelDomain(n, J, IPoint{0, 0, 0}, dims, std::vector<std::uint8_t>(total, 1));
    }
    case Preset::LShape: {
      if (n != 2) fail("bad-dimension", "l-shape is two-dimensional");
      std::vector<std::uint8_t> occ(std::size_t(N * N), 1);
      for (std::int64_t y = N / 2; y < N; ++y)
        for (std::int64_t x = N / 2; x < N; ++x) occ[std::size_t(x + N * y)] = 0;
      return VoxelDomain(2, J, IPoint{0, 0, 0}, IPoint{N, N, 1}, occ);
    }
    case Preset::KochSnowflake: {
      if (n != 2) fail("bad-dimension", "koch-snowflake is two-dimensional");
      // Refine until edges are below a quarter voxel.
      const int depth = int(std::ceil((J + 2) * std::log(2.0) / std::log(3.0)));
      return rasterize_polygon(koch_snowflake_polygon(depth), J);
    }
    case Preset::CustomBitmap:
      return read_pbm(bitmap_path, J);
  }
  fail("bad-preset", "unhandled preset");
}

// ---------------------------------------------------------------------------
// Exact Euclidean distance transform

namespace detail {
// Squared distance from a voxel center to a voxel at index offset d along
// one axis, in units of (h/2)^2: 0 for d = 0, (2|d|-1)^2 otherwise.
inline std::int64_t edt_axis_cost(std::int64_t d) {
  if (d == 0) return 0;
  const std::int64_t t = 2 * (d < 0 ? -d : d) - 1;
  return t * t;
}
}  // namespace detail

// Squared distance, in units of (h/2)^2, from every voxel center to the
// closed union of unoccupied voxels. Separable: the cost is a sum of
// per-axis terms, so successive 1-D minimizations are exact.
inline std::vector<std::int64_t> distance_transform_quarter_units(const VoxelDomain& d) {
  constexpr std::int64_t inf = std::numeric_limits<std::int64_t>::max() / 4;
  const int n = d.dim();
  const IPoint dims = d.grid_dims();
  std::vector<std::int64_t> g(d.grid_size(), inf);
  for (std::size_t f = 0; f < g.size(); ++f)
    if (!d.occupied_local(f)) g[f] = 0;
  std::vector<std::int64_t> line, out;
  for (int axis = 0; axis < n; ++axis) {
    std::size_t stride = 1;
    for (int i = 0; i < axis; ++i) stride *= std::size_t(dims[i]);
    const std::size_t len = std::size_t(dims[axis]);
    line.resize(len);
    out.resize(len);
    for (std::size_t f = 0; f < g.size(); ++f) {
      if ((f / stride) % len != 0) continue;  // start of a line along `axis`
      for (std::size_t i = 0; i < len; ++i) line[i] = g[f + i * stride];
      for (std::size_t i = 0; i < len; ++i) {
        std::int64_t best = line[i];
        for (std::size_t delta = 1; delta < len; ++delta) {
          const std::int64_t c = detail::edt_axis_cost(std::int64_t(delta));
          if (c >= best) break;
          if (i >= delta) best = std::min(best, line[i - delta] + c);
          if (i + delta < len) best = std::min(best, line[i + delta] + c);
        }
        out[i] = best;
      }
      for (std::size_t i = 0; i < len; ++i) g[f + i * stride] = out[i];
    }
  }
  return g;
}

/// Returns a copy of `d` with the exact center-to-boundary distance field.
inline VoxelDomain distance_transform(const VoxelDomain& d) {
  const auto q = distance_transform_quarter_units(d);
  std::vector<double> dist(q.size(), 0.0);
  const double half = 0.5 * d.pitch();
  for (std::size_t f : d.occupied()) dist[f] = half * std::sqrt(double(q[f]));
  return d.with_distance(std::move(dist));
}

// ---------------------------------------------------------------------------
// Point sets: finite unions of closed boxes and segments

struct Segment {
  Point a{};
  Point b{};
};

inline double point_segment_dist2(const Point& p, const Segment& s, int n) {
  double dd = 0, t = 0;
  for (int i = 0; i < n; ++i) {
    const double e = s.b[i] - s.a[i];
    dd += e * e;
    t += (p[i] - s.a[i]) * e;
  }
  t = dd > 0 ? std::clamp(t / dd, 0.0, 1.0) : 0.0;
  double r = 0;
  for (int i = 0; i < n; ++i) {
    const double c = s.a[i] + t * (s.b[i] - s.a[i]) - p[i];
    r += c * c;
  }
  return r;
}

struct PointSet {
  int n = 2;
  std::vector<Box> boxes;  // points, axis-aligned segments, faces
  std::vector<Segment> segments;

  bool empty() const { return boxes.empty() && segments.empty(); }

  Box bounds() const {
    Box bb{n, {}, {}};
    bool first = true;
    auto grow = [&](const Point& lo, const Point& hi) {
      for (int i = 0; i < n; ++i) {
        bb.lo[i] = first ? lo[i] : std::min(bb.lo[i], lo[i]);
        bb.hi[i] = first ? hi[i] : std::max(bb.hi[i], hi[i]);
      }
      first = false;
    };
    for (const auto& b : boxes) grow(b.lo, b.hi);
    for (const auto& s : segments) {
      Point lo{}, hi{};
      for (int i = 0; i < n; ++i) {
        lo[i] = std::min(s.a[i], s.b[i]);
        hi[i] = std::max(s.a[i], s.b[i]);
      }
      grow(lo, hi);
    }
    return bb;
  }

  static PointSet points(const std::vector<Point>& pts, int n) {
    PointSet s{n, {}, {}};
    for (const auto& p : pts) s.boxes.push_back(Box::point(p, n));
    return s;
  }
  static PointSet polyline(const std::vector<Point>& pts, int n, bool closed) {
    PointSet s{n, {}, {}};
    const std::size_t m = pts.size();
    for (std::size_t i = 0; i + (closed ? 0 : 1) < m; ++i) s.segments.push_back({pts[i], pts[(i + 1) % m]});
    return s;
  }
  // Boundary of the axis box [lo, hi] (2-D: four edges, 3-D: six faces).
  static PointSet box_boundary(const Box& b) {
    PointSet s{b.n, {}, {}};
    for (int a = 0; a < b.n; ++a)
      for (int side = 0; side < 2; ++side) {
        Box f = b;
        if (side == 0)
          f.hi[a] = f.lo[a];
        else
          f.lo[a] = f.hi[a];
        s.boxes.push_back(f);
      }
    return s;
  }
};

// Distance queries against a PointSet; segments are bucketed through their
// bounding boxes and resolved exactly.
class PointSetIndex {
 public:
  explicit PointSetIndex(const PointSet& s) : set_(s) {
    if (s.empty()) fail("empty-set", "point set is empty");
    std::vector<Box> boxes = s.boxes;
    for (const auto& seg : s.segments) {
      Box b{s.n, {}, {}};
      for (int i = 0; i < s.n; ++i) {
        b.lo[i] = std::min(seg.a[i], seg.b[i]);
        b.hi[i] = std::max(seg.a[i], seg.b[i]);
      }
      boxes.push_back(b);
    }
    boxes_ = BoxIndex(std::move(boxes), s.n);
  }

  double dist2(const Point& p) const {
    return boxes_.nearest_with(p, [&](std::size_t k) { return exact(p, k); }).dist2;
  }

  int dim() const { return set_.n; }

 private:
  double exact(const Point& p, std::size_t k) const {
    if (k < set_.boxes.size()) return point_box_dist2(p, set_.boxes[k]);
    return point_segment_dist2(p, set_.segments[k - set_.boxes.size()], set_.n);
  }

  PointSet set_;
  BoxIndex boxes_;
};

// ---------------------------------------------------------------------------
// Porosity

struct PorositySample {
  Point x{};
  double r = 0;
  double kappa = 0;
};

struct PorosityReport {
  std::optional<double> kappa_hat;
  double kappa_min = 0;  // min over samples, also when non-porous
  std::vector<double> scales;
  bool porous = false;
  std::vector<PorositySample> failures;
  std::size_t samples = 0;
};

/// Estimates the porosity constant of S by sampling centers x and searching
/// a lattice of candidates y in B(x, r) for the largest empty ball.
inline PorosityReport porosity_estimate(const PointSet& S, const std::vector<double>& scales,
                                        std::size_t trials, std::uint64_t seed, double floor_kappa,
                                        std::optional<Box> sample_region = std::nullopt,
                                        int lattice_level = 3) {
  if (S.empty()) fail("empty-set", "porosity needs a nonempty set");
  for (double r : scales)
    if (!(r > 0 && r <= 1)) fail("bad-scale", "porosity scales must lie in (0, 1], got ", r);
  const int n = S.n;
  PointSetIndex index(S);
  Box bb = S.bounds();
  double rmax = 0;
  for (double r : scales) rmax = std::max(rmax, r);
  bb = sample_region ? *sample_region : bb.expanded(rmax);
  Rng rng(seed);
  PorosityReport rep;
  rep.scales = scales;
  rep.kappa_min = 1.0;
  const int steps = 1 << lattice_level;
  for (std::size_t t = 0; t < trials; ++t) {
    Point x{};
    for (int i = 0; i < n; ++i) x[i] = bb.lo[i] + uniform01(rng) * bb.extent(i);
    for (double r : scales) {
      double best = 0;
      const double pitch = r / steps;
      IPoint k{};
      const std::int64_t m = steps;
      for (k[0] = -m; k[0] <= m; ++k[0])
        for (k[1] = (n > 1 ? -m : 0); k[1] <= (n > 1 ? m : 0); ++k[1])
          for (k[2] = (n > 2 ? -m : 0); k[2] <= (n > 2 ? m : 0); ++k[2]) {
            std::int64_t kk = 0;
            for (int i = 0; i < n; ++i) kk += k[i] * k[i];
            if (kk >= m * m) continue;  // y in the open ball B(x, r)
            Point y{};
            for (int i = 0; i < n; ++i) y[i] = x[i] + pitch * double(k[i]);
            best = std::max(best, std::sqrt(index.dist2(y)));
          }
      const double kappa = std::min(1.0, best / r);
      ++rep.samples;
      rep.kappa_min = std::min(rep.kappa_min, kappa);
      if (kappa <= floor_kappa) rep.failures.push_back({x, r, kappa});
    }
  }
  rep.porous = rep.failures.empty();
  if (rep.porous) rep.kappa_hat = rep.kappa_min;
  return rep;
}

// ---------------------------------------------------------------------------
// Minkowski precontent and dimension

namespace detail {

// Parameter interval {t : dist((t, c), box) <= r} on the line through the
// transverse point c parallel to axis 0.
inline bool box_row_interval(const Box& b, const Point& c, double r, double& lo, double& hi) {
  double perp = 0;
  for (int i = 1; i < b.n; ++i) {
    const double g = std::max({0.0, b.lo[i] - c[i], c[i] - b.hi[i]});
    perp += g * g;
  }
  if (perp > r * r) return false;
  const double a = std::sqrt(r * r - perp);
  lo = b.lo[0] - a;
  hi = b.hi[0] + a;
  return true;
}

// Solves A t^2 + B t + C <= 0 for A >= 0; false when empty.
inline bool quadratic_sublevel(double A, double B, double C, double& lo, double& hi) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  if (A <= 1e-14) {
    if (std::abs(B) <= 1e-300) {
      if (C > 0) return false;
      lo = -inf;
      hi = inf;
      return true;
    }
    const double t = -C / B;
    lo = B > 0 ? -inf : t;
    hi = B > 0 ? t : inf;
    return true;
  }
  const double disc = B * B - 4 * A * C;
  if (disc < 0) return false;
  const double sq = std::sqrt(disc);
  // Cancellation-free roots.
  const double qv = -0.5 * (B + (B >= 0 ? sq : -sq));
  double r1 = qv / A, r2 = qv != 0 ? C / qv : 0.0;
  if (qv == 0) r1 = r2 = 0;
  lo = std::min(r1, r2);
  hi = std::max(r1, r2);
  return true;
}

// Same for a segment: the capsule is convex, so its trace on the line is the
// hull of the traces of the two end balls and of the finite cylinder.
inline bool segment_row_interval(const Segment& s, const Point& c, int n, double r, double& lo, double& hi) {
  bool any = false;
  auto merge = [&](double a, double b) {
    if (a > b) return;
    lo = any ? std::min(lo, a) : a;
    hi = any ? std::max(hi, b) : b;
    any = true;
  };
  for (const Point* e : {&s.a, &s.b}) {
    double perp = 0;
    for (int i = 1; i < n; ++i) perp += (c[i] - (*e)[i]) * (c[i] - (*e)[i]);
    if (perp <= r * r) {
      const double h = std::sqrt(r * r - perp);
      merge((*e)[0] - h, (*e)[0] + h);
    }
  }
  double E = 0;
  Point e{}, u{};
  for (int i = 0; i < n; ++i) {
    e[i] = s.b[i] - s.a[i];
    E += e[i] * e[i];
    u[i] = (i == 0 ? 0.0 : c[i]) - s.a[i];
  }
  if (E > 0) {
    // w(t) = u + t e_0; projection parameter sigma(t) = (w . e) / E in [0, 1].
    double ue = 0, uu = 0;
    for (int i = 0; i < n; ++i) {
      ue += u[i] * e[i];
      uu += u[i] * u[i];
    }
    double plo = -std::numeric_limits<double>::infinity(), phi = -plo;
    if (e[0] != 0) {
      const double t0 = -ue / e[0], t1 = (E - ue) / e[0];
      plo = std::min(t0, t1);
      phi = std::max(t0, t1);
    } else if (ue < 0 || ue > E) {
      plo = 1;
      phi = 0;
    }
    // |w|^2 - (w . e)^2 / E <= r^2.
    const double A = 1.0 - e[0] * e[0] / E;
    const double B = 2.0 * (u[0] - ue * e[0] / E);
    const double C = uu - ue * ue / E - r * r;
    double qlo, qhi;
    if (plo <= phi && quadratic_sublevel(A, B, C, qlo, qhi)) merge(std::max(plo, qlo), std::min(phi, qhi));
  }
  return any;
}

}  // namespace detail

// |E + B(0, r)|: the transverse coordinates (axes 1..n-1) are sampled at the
// centers of cells of side `pitch`; along axis 0 the trace of the tube on
// each row is computed exactly as a union of intervals.
inline double tube_volume(const PointSet& E, double r, double pitch) {
  const int n = E.n;
  const Box bb = E.bounds().expanded(r + pitch);
  IPoint org{}, dims{1, 1, 1};
  for (int i = 1; i < n; ++i) {
    org[i] = std::int64_t(std::floor(bb.lo[i] / pitch));
    dims[i] = std::int64_t(std::ceil(bb.hi[i] / pitch)) - org[i] + 1;
  }
  struct Piece {
    std::uint64_t row;
    double lo, hi;
    bool operator<(const Piece& o) const { return row != o.row ? row < o.row : lo < o.lo; }
  };
  std::vector<Piece> pieces;
  auto visit = [&](const Point& plo, const Point& phi, auto&& interval) {
    IPoint a{}, z{};
    for (int i = 1; i < n; ++i) {
      a[i] = std::clamp<std::int64_t>(std::int64_t(std::floor((plo[i] - r) / pitch - 0.5)) - org[i], 0, dims[i] - 1);
      z[i] = std::clamp<std::int64_t>(std::int64_t(std::ceil((phi[i] + r) / pitch - 0.5)) - org[i], 0, dims[i] - 1);
    }
    for (std::int64_t y = a[1]; y <= z[1]; ++y)
      for (std::int64_t w = (n > 2 ? a[2] : 0); w <= (n > 2 ? z[2] : 0); ++w) {
        Point c{0.0, (double(y + org[1]) + 0.5) * pitch, n > 2 ? (double(w + org[2]) + 0.5) * pitch : 0.0};
        double lo, hi;
        if (interval(c, lo, hi)) pieces.push_back({std::uint64_t(y + dims[1] * w), lo, hi});
      }
  };
  for (const auto& b : E.boxes)
    visit(b.lo, b.hi, [&](const Point& c, double& lo, double& hi) { return detail::box_row_interval(b, c, r, lo, hi); });
  for (const auto& s : E.segments) {
    Point lo{}, hi{};
    for (int i = 0; i < n; ++i) {
      lo[i] = std::min(s.a[i], s.b[i]);
      hi[i] = std::max(s.a[i], s.b[i]);
    }
    visit(lo, hi, [&](const Point& c, double& l, double& h) { return detail::segment_row_interval(s, c, n, r, l, h); });
  }
  std::sort(pieces.begin(), pieces.end());
  CompensatedSum len;
  for (std::size_t i = 0; i < pieces.size();) {
    double cur_lo = pieces[i].lo, cur_hi = pieces[i].hi;
    std::size_t k = i + 1;
    for (; k < pieces.size() && pieces[k].row == pieces[i].row; ++k) {
      if (pieces[k].lo > cur_hi) {
        len.add(cur_hi - cur_lo);
        cur_lo = pieces[k].lo;
        cur_hi = pieces[k].hi;
      } else {
        cur_hi = std::max(cur_hi, pieces[k].hi);
      }
    }
    len.add(cur_hi - cur_lo);
    i = k;
  }
  return len.value() * std::pow(pitch, n - 1);
}

// Dyadic transverse pitch: sixteen rows per radius in the plane, eight in
// space. Always well inside the four-per-radius floor.
inline double default_tube_pitch(double r, int n = 2) {
  const double per = n == 2 ? 16.0 : 8.0;
  return std::ldexp(1.0, -int(std::ceil(std::log2(per / r))));
}

/// M_lambda(E, r) = |E + B(0, r)| / r^(n - lambda).
inline double minkowski_precontent(const PointSet& E, double r, double lambda, double pitch = 0.0) {
  if (E.empty()) fail("empty-set", "Minkowski precontent needs a nonempty set");
  if (!(r > 0)) fail("bad-radius", "radius must be positive");
  if (pitch <= 0) pitch = default_tube_pitch(r, E.n);
  if (r < 4 * pitch) fail("grid-too-coarse", "radius ", r, " is below four cell pitches (", pitch, "); refine the grid");
  return tube_volume(E, r, pitch) / std::pow(r, E.n - lambda);
}

struct PrecontentCurve {
  double lambda = 0;
  std::vector<std::pair<double, double>> samples;  // (r, M_lambda(E, r)), r decreasing
  double fitted_dim = 0;
  double ci_halfwidth = 0;
  double r2 = 0;
};

/// Fits dim = n - slope of log|E + B(0,r)| against log r over dyadic scales
/// from r_max down to r_min.
inline PrecontentCurve minkowski_dimension_estimate(const PointSet& E, double r_min, double r_max,
                                                    double lambda = 0.0) {
  if (!(r_min > 0 && r_min < r_max)) fail("bad-range", "need 0 < r_min < r_max");
  const int levels = int(std::floor(std::log2(r_max / r_min) + 1e-9)) + 1;
  if (levels < 5) fail("too-few-scales", "need at least five dyadic scales, got ", levels);
  PrecontentCurve c;
  c.lambda = lambda;
  std::vector<double> lx, ly;
  for (int k = 0; k < levels; ++k) {
    const double r = std::ldexp(r_max, -k);
    const double v = tube_volume(E, r, default_tube_pitch(r, E.n));
    if (!(v > 0)) continue;
    c.samples.emplace_back(r, v / std::pow(r, E.n - lambda));
    lx.push_back(std::log(r));
    ly.push_back(std::log(v));
  }
  if (lx.size() < 3) fail("degenerate-fit", "fewer than three usable scales");
  const LineFit f = fit_line(lx, ly);
  c.fitted_dim = E.n - f.slope;
  c.ci_halfwidth = 1.96 * f.slope_stderr;
  c.r2 = f.r2;
  return c;
}

}  // namespace fraclab
