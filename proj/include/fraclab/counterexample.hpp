#pragma once

// s-versions of a base domain (rooms behind narrow passages), their test
// functions, and the sharpness experiment.

#include <memory>

#include "fraclab/chains.hpp"
#include "fraclab/conditions.hpp"
#include "fraclab/functional.hpp"

namespace fraclab {

/// Apartment of a closed cube Q (center x, side l) for the exponent s:
/// room int(Q/4), passage of half-width w = (l/8)^s above the room.
struct ApartmentGeometry {
  int n = 2;
  Point x{};
  double l = 1, s = 2, w = 0;
  Box cube, room, passage, long_passage, tiny;

  // Room boundary minus the passage mouth, and the passage side walls.
  std::vector<Box> walls() const {
    std::vector<Box> out;
    const int t = n - 1;  // passage axis
    for (int a = 0; a < n; ++a)
      for (int side = 0; side < 2; ++side) {
        Box f = room;
        if (side == 0)
          f.hi[a] = f.lo[a];
        else
          f.lo[a] = f.hi[a];
        if (a != t || side == 0) {
          out.push_back(f);
          continue;
        }
        // Top face with the mouth prod (x_i - w, x_i + w) removed.
        for (int i = 0; i < t; ++i) {
          Box lo = f, hi = f;
          lo.hi[i] = x[i] - w;
          hi.lo[i] = x[i] + w;
          for (int k = 0; k < i; ++k) {
            lo.lo[k] = hi.lo[k] = x[k] - w;
            lo.hi[k] = hi.hi[k] = x[k] + w;
          }
          out.push_back(lo);
          out.push_back(hi);
        }
      }
    for (int i = 0; i < t; ++i)
      for (int side = 0; side < 2; ++side) {
        Box f = passage;
        f.lo[i] = f.hi[i] = side == 0 ? passage.lo[i] : passage.hi[i];
        out.push_back(f);
      }
    return out;
  }

  double wall_dist2(const Point& p) const {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& b : walls()) best = std::min(best, point_box_dist2(p, b));
    return best;
  }

  bool in_room(const Point& p) const { return room.contains_open(p); }
  bool in_passage(const Point& p) const { return passage.contains_open(p); }

  // Whether b meets the passage, widened by w along its length.
  bool near_tube(const Box& b) const {
    Box t = passage;
    t.lo[n - 1] -= w;
    t.hi[n - 1] += w;
    for (int i = 0; i < n; ++i)
      if (b.hi[i] <= t.lo[i] || b.lo[i] >= t.hi[i]) return false;
    return true;
  }

  // Distance from b to the nearer of the two passage openings.
  double opening_dist(const Box& b) const {
    Point m = x;
    m[n - 1] = passage.lo[n - 1];
    const double a = point_box_dist2(m, b);
    m[n - 1] = passage.hi[n - 1];
    return std::sqrt(std::min(a, point_box_dist2(m, b)));
  }
};

inline double passage_halfwidth(double l, double s) { return std::pow(l / 8, s); }

inline bool w_restr_holds(double l, double s) { return passage_halfwidth(l, s) <= l / 32; }

inline ApartmentGeometry apartment_of_box(const Box& q, double s) {
  const int n = q.n;
  ApartmentGeometry a;
  a.n = n;
  a.s = s;
  a.x = q.center();
  a.l = q.extent(0);
  if (!(s > 1)) fail("bad-s", "s must exceed 1, got ", s);
  if (!w_restr_holds(a.l, s)) fail("w-restr", "(l/8)^s <= l/32 fails for l = ", a.l, ", s = ", s);
  a.w = passage_halfwidth(a.l, s);
  a.cube = q;
  const double l = a.l;
  a.room = Box{n, {}, {}};
  for (int i = 0; i < n; ++i) {
    a.room.lo[i] = a.x[i] - l / 8;
    a.room.hi[i] = a.x[i] + l / 8;
  }
  auto tube = [&](double lo, double hi) {
    Box b{n, {}, {}};
    for (int i = 0; i < n - 1; ++i) {
      b.lo[i] = a.x[i] - a.w;
      b.hi[i] = a.x[i] + a.w;
    }
    b.lo[n - 1] = a.x[n - 1] + lo;
    b.hi[n - 1] = a.x[n - 1] + hi;
    return b;
  };
  a.passage = tube(l / 8, l / 4);
  a.long_passage = tube(0, l / 2);
  a.tiny = tube(5 * l / 32, 7 * l / 32);
  return a;
}

inline ApartmentGeometry apartment(const DyadicCube& q, double s) { return apartment_of_box(q.box(), s); }

// ---------------------------------------------------------------------------
// Test functions

/// Plateau l^{(lambda-n)/q} on the room and the passage below the tiny
/// passage, linear decay across it, zero elsewhere.
struct TestFunction {
  ApartmentGeometry a;
  double lambda = 1, q = 1;
  double plateau = 1;
  double slope = -16;

  double operator()(const Point& p) const {
    if (a.in_room(p)) return plateau;
    if (!a.in_passage(p)) return 0;
    const int t = a.n - 1;
    const double lo = a.tiny.lo[t], hi = a.tiny.hi[t];
    if (p[t] <= lo) return plateau;
    if (p[t] >= hi) return 0;
    return plateau * (hi - p[t]) / (hi - lo);
  }

  // Closed-form integral of |u|^q over G_s.
  double integral_q() const {
    const double cq = std::pow(plateau, q);
    const double cross = std::pow(2 * a.w, a.n - 1);
    return cq * (std::pow(a.l / 4, a.n) + cross * a.l / 32 + cross * (a.l / 16) / (q + 1));
  }
};

inline TestFunction test_function(const ApartmentGeometry& a, double lambda, double q) {
  if (!(lambda >= a.n - 1 && lambda < a.n)) fail("bad-exponents", "lambda must be in [n-1, n), got ", lambda);
  if (!(q >= 1)) fail("bad-exponents", "q must be >= 1, got ", q);
  TestFunction u;
  u.a = a;
  u.lambda = lambda;
  u.q = q;
  u.plateau = std::pow(a.l, (lambda - a.n) / q);
  u.slope = -16 * std::pow(a.l, (lambda - a.n) / q - 1);
  return u;
}

// ---------------------------------------------------------------------------
// The s-version domain

struct SVersionOptions {
  int room_depth = 4;     // smallest Whitney side l 2^-room_depth away from passages
  int passage_depth = 2;  // smallest side w 2^-passage_depth inside passages
  double eta = 0.25;      // near an opening, sides down to eta * distance to it
};

/// G_s = Q_0 u (union of apartments of the other base cubes): the union U of
/// the base cubes with the apartment walls removed. The base may be rescaled
/// by 2^-k so that every cube satisfies (l/8)^s <= l/32.
class SVersion : public DomainModel {
 public:
  SVersion(const WhitneyDecomposition& base, double s, const Point& base_center, SVersionOptions opt = {}) {
    if (!(s > 1)) fail("bad-s", "s-version requires s > 1, got ", s);
    auto p = std::make_shared<Impl>();
    p->n = base.n;
    p->s = s;
    p->opt = opt;
    // Smallest k with (extent of U) 2^-k <= (8^s / 32)^{1/(s-1)}.
    Box bb = base.cubes.front().box();
    int jf = base.cubes.front().generation;
    for (const auto& c : base.cubes) {
      const Box b = c.box();
      for (int i = 0; i < p->n; ++i) {
        bb.lo[i] = std::min(bb.lo[i], b.lo[i]);
        bb.hi[i] = std::max(bb.hi[i], b.hi[i]);
      }
      jf = std::max(jf, c.generation);
    }
    double ext = 0;
    for (int i = 0; i < p->n; ++i) ext = std::max(ext, bb.extent(i));
    const double bound = std::pow(std::pow(8.0, s) / 32, 1 / (s - 1));
    p->k = 0;
    while (std::ldexp(ext, -p->k) > bound) ++p->k;
    std::vector<DyadicCube> cubes;
    for (auto c : base.cubes) {
      c.generation += p->k;
      cubes.push_back(c);
    }
    Point center{};
    for (int i = 0; i < p->n; ++i) center[i] = std::ldexp(base_center[i], -p->k);
    p->W = from_cubes(std::move(cubes), p->n, base.J_max + p->k, center, 0);
    if (!p->W.cubes[p->W.root_id].box().contains(center)) center = p->W.cubes[p->W.root_id].midpoint();
    p->center = center;
    p->locator = std::make_unique<CubeLocator>(p->W);

    // U at the finest base generation, in unscaled coordinates.
    const int J = jf;
    IPoint lo{}, hi{};
    for (int i = 0; i < p->n; ++i) {
      lo[i] = std::numeric_limits<std::int64_t>::max();
      hi[i] = std::numeric_limits<std::int64_t>::min();
    }
    for (const auto& c : base.cubes) {
      const std::int64_t m = std::int64_t(1) << (J - c.generation);
      for (int i = 0; i < p->n; ++i) {
        lo[i] = std::min(lo[i], c.corner[i] * m);
        hi[i] = std::max(hi[i], (c.corner[i] + 1) * m);
      }
    }
    IPoint dims{1, 1, 1};
    std::size_t total = 1;
    for (int i = 0; i < p->n; ++i) {
      dims[i] = hi[i] - lo[i];
      total *= std::size_t(dims[i]);
    }
    std::vector<std::uint8_t> occ(total, 0);
    for (const auto& c : base.cubes) {
      const std::int64_t m = std::int64_t(1) << (J - c.generation);
      IPoint a{};
      for (int i = 0; i < p->n; ++i) a[i] = c.corner[i] * m - lo[i];
      for (std::int64_t z = 0; z < (p->n > 2 ? m : 1); ++z)
        for (std::int64_t y = 0; y < m; ++y)
          for (std::int64_t x = 0; x < m; ++x) {
            std::size_t f = std::size_t(a[0] + x) + std::size_t(dims[0]) * std::size_t(a[1] + y);
            if (p->n > 2) f += std::size_t(dims[0]) * std::size_t(dims[1]) * std::size_t(a[2] + z);
            occ[f] = 1;
          }
    }
    p->U = VoxelDomain(p->n, J, lo, dims, occ);
    p->sc = std::ldexp(1.0, -p->k);

    p->apartments.resize(p->W.size());
    std::vector<Box> walls;
    for (std::size_t i = 0; i < p->W.size(); ++i) {
      if (i == p->W.root_id) continue;
      p->apartments[i] = apartment(p->W.cubes[i], s);
      for (const auto& b : p->apartments[i]->walls()) {
        walls.push_back(b);
        p->wall_owner.push_back(std::uint32_t(i));
      }
    }
    p->walls = BoxIndex(std::move(walls), p->n);
    p_ = std::move(p);
  }

  int dim() const override { return p_->n; }
  Box bounds() const override { return scaled(p_->U.bounds(), p_->sc); }
  double measure() const override { return p_->U.measure() * std::pow(p_->sc, p_->n); }
  Point center() const override { return p_->center; }

  bool contains(const Point& x) const override { return p_->U.contains(unscale(x)) && wall_dist2(x) > 0; }

  double clearance(const Point& x) const override {
    if (!p_->U.contains(unscale(x))) return 0;
    const double u = p_->U.clearance(unscale(x)) * p_->sc;
    return std::sqrt(std::min(u * u, wall_dist2(x)));
  }

  double box_clearance2(const Box& b) const override {
    const double u = p_->U.box_clearance2(scaled(b, 1 / p_->sc)) * p_->sc * p_->sc;
    if (u == 0) return 0;
    return std::min(u, p_->walls.nearest(b).dist2);
  }

  bool meets(const Box& b) const override { return p_->U.meets(scaled(b, 1 / p_->sc)); }

  int truncation_generation(const Box& b, int j_max) const override {
    const Point c = b.center();
    const auto q = base_cube_of(c);
    double smin = 0;
    if (!q) {
      smin = std::ldexp(p_->sc, -(p_->U.resolution() + p_->opt.room_depth));
    } else {
      const double l = p_->W.cubes[*q].side();
      smin = l * std::ldexp(1.0, -p_->opt.room_depth);
      if (const auto& a = p_->apartments[*q]) {
        const double fine = a->w * std::ldexp(1.0, -p_->opt.passage_depth);
        smin = a->near_tube(b) ? fine : std::min(smin, std::max(fine, p_->opt.eta * a->opening_dist(b)));
      }
    }
    return std::min(j_max, int(std::floor(-std::log2(smin))));
  }

  Point nearest_boundary_point(const Point& x) const override {
    Point best = p_->U.nearest_boundary_point(unscale(x));
    for (int i = 0; i < p_->n; ++i) best[i] *= p_->sc;
    double bd = dist2(best, x, p_->n);
    const auto hit = p_->walls.nearest(x);
    if (hit.index >= 0 && hit.dist2 < bd) {
      const Box& b = p_->walls.boxes()[std::size_t(hit.index)];
      for (int i = 0; i < p_->n; ++i) best[i] = std::clamp(x[i], b.lo[i], b.hi[i]);
    }
    return best;
  }

  double wall_dist2(const Point& x) const { return p_->walls.nearest(x).dist2; }

  /// Scaled base decomposition (ids as in the input) and the scale 2^-k.
  const WhitneyDecomposition& base() const { return p_->W; }
  int scale_exponent() const { return p_->k; }
  double scale() const { return std::ldexp(1.0, -p_->k); }
  double s() const { return p_->s; }
  const SVersionOptions& options() const { return p_->opt; }
  const std::optional<ApartmentGeometry>& apartment_at(std::size_t base_id) const { return p_->apartments.at(base_id); }
  std::size_t wall_count() const { return p_->walls.size(); }

  std::optional<std::size_t> base_cube_of(const Point& x) const { return p_->locator->locate(x); }

  // Unscaled base generation of the cube containing x (-1 outside U).
  int base_generation_of(const Point& x) const {
    auto q = base_cube_of(x);
    return q ? p_->W.cubes[*q].generation - p_->k : -1;
  }

 private:
  static Box scaled(Box b, double f) {
    for (int i = 0; i < b.n; ++i) {
      b.lo[i] *= f;
      b.hi[i] *= f;
    }
    return b;
  }
  Point unscale(Point x) const {
    for (int i = 0; i < p_->n; ++i) x[i] /= p_->sc;
    return x;
  }

  struct Impl {
    int n = 2;
    double s = 2;
    int k = 0;
    double sc = 1;
    SVersionOptions opt;
    WhitneyDecomposition W;
    std::unique_ptr<CubeLocator> locator;
    VoxelDomain U;
    Point center{};
    std::vector<std::optional<ApartmentGeometry>> apartments;
    std::vector<std::uint32_t> wall_owner;
    BoxIndex walls;
  };
  std::shared_ptr<const Impl> p_;
};

inline SVersion build_s_version(const WhitneyDecomposition& base, double s, const Point& base_center,
                                SVersionOptions opt = {}) {
  return SVersion(base, s, base_center, opt);
}

/// Base generation of the apartment holding each cube of a decomposition of G_s.
inline std::vector<int> base_generation_groups(const SVersion& g, const WhitneyDecomposition& w) {
  std::vector<int> out(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) out[i] = g.base_generation_of(w.cubes[i].midpoint());
  return out;
}

// ---------------------------------------------------------------------------
// s-John paths

namespace detail {

inline Point clamp_to(const Point& p, const Box& b) {
  Point q = p;
  for (int i = 0; i < b.n; ++i) q[i] = std::clamp(p[i], b.lo[i], b.hi[i]);
  return q;
}

// Perimeter coordinate of a point on the boundary of a square (2-D).
inline double perimeter_coord(const Point& p, const Box& k) {
  const double a = k.extent(0);
  if (p[1] == k.lo[1]) return p[0] - k.lo[0];
  if (p[0] == k.hi[0]) return a + (p[1] - k.lo[1]);
  if (p[1] == k.hi[1]) return 2 * a + (k.hi[0] - p[0]);
  return 3 * a + (k.hi[1] - p[1]);
}

// Walks the square boundary from `from` to `to` the short way, appending the
// corners passed and `to`.
inline void walk_perimeter(std::vector<Point>& out, const Point& from, const Point& to, const Box& k) {
  const double a = k.extent(0), P = 4 * a;
  const double s0 = perimeter_coord(from, k), s1 = perimeter_coord(to, k);
  double fwd = std::fmod(s1 - s0 + P, P);
  const bool forward = fwd <= P - fwd;
  const Point corners[4] = {Point{k.lo[0], k.lo[1], 0}, Point{k.hi[0], k.lo[1], 0}, Point{k.hi[0], k.hi[1], 0},
                            Point{k.lo[0], k.hi[1], 0}};
  // Corner c sits at perimeter coordinate c * a.
  if (forward) {
    for (int step = 1; step <= 4; ++step) {
      const int c = (int(std::floor(s0 / a)) + step) % 4;
      const double dc = std::fmod(c * a - s0 + P, P);
      if (dc >= fwd || dc == 0) break;
      out.push_back(corners[c]);
    }
  } else {
    const double back = P - fwd;
    for (int step = 0; step < 4; ++step) {
      const int c = ((int(std::ceil(s0 / a)) - 1 - step) % 4 + 4) % 4;
      const double dc = std::fmod(s0 - c * a + P, P);
      if (dc >= back || dc == 0) continue;
      out.push_back(corners[c]);
    }
  }
  out.push_back(to);
}

}  // namespace detail

/// Canonical path from each room center of G_s to its center: up through the
/// passage, around the ring of each apartment on the base hop path, across
/// the shared faces. Two-dimensional.
inline std::vector<JohnPath> sversion_john_paths(const SVersion& g) {
  if (g.dim() != 2) fail("unsupported-dimension", "canonical s-John paths are implemented in 2-D");
  const auto& W = g.base();
  const auto hops = hop_distances(W, W.root_id);
  // Successor: a neighbor one hop closer sharing a face if possible.
  auto next_of = [&](std::size_t q) {
    std::size_t best = q;
    int best_dim = -1;
    for (auto j : W.neighbors(q)) {
      if (hops[j] != hops[q] - 1) continue;
      const Box a = W.cubes[q].box(), b = W.cubes[j].box();
      int dimc = 0;
      for (int i = 0; i < 2; ++i) dimc += std::min(a.hi[i], b.hi[i]) > std::max(a.lo[i], b.lo[i]);
      if (dimc > best_dim) {
        best_dim = dimc;
        best = j;
      }
    }
    return best;
  };
  std::vector<JohnPath> paths;
  for (std::size_t q0 = 0; q0 < W.size(); ++q0) {
    if (q0 == W.root_id || hops[q0] < 0) continue;
    const auto& a = *g.apartment_at(q0);
    const double l = a.l;
    JohnPath path;
    Point p = a.x;
    path.pts.push_back(p);
    for (double h : {l / 8, l / 4, 5 * l / 16}) {
      Point t = a.x;
      t[1] += h;
      path.pts.push_back(t);
    }
    std::size_t q = q0;
    Point pos = path.pts.back();
    while (q != W.root_id) {
      const std::size_t nq = next_of(q);
      const Box bq = W.cubes[q].box(), bn = W.cubes[nq].box();
      Point cf{};
      for (int i = 0; i < 2; ++i) cf[i] = 0.5 * (std::max(bq.lo[i], bn.lo[i]) + std::min(bq.hi[i], bn.hi[i]));
      const auto& aq = *g.apartment_at(q);
      Box k{2, {}, {}};
      for (int i = 0; i < 2; ++i) {
        k.lo[i] = aq.x[i] - 5 * aq.l / 16;
        k.hi[i] = aq.x[i] + 5 * aq.l / 16;
      }
      detail::walk_perimeter(path.pts, pos, detail::clamp_to(cf, k), k);
      path.pts.push_back(cf);
      if (nq == W.root_id) {
        path.pts.push_back(g.center());
        break;
      }
      const auto& an = *g.apartment_at(nq);
      Box kn{2, {}, {}};
      for (int i = 0; i < 2; ++i) {
        kn.lo[i] = an.x[i] - 5 * an.l / 16;
        kn.hi[i] = an.x[i] + 5 * an.l / 16;
      }
      pos = detail::clamp_to(cf, kn);
      path.pts.push_back(pos);
      q = nq;
    }
    paths.push_back(std::move(path));
  }
  return paths;
}

/// s-John fit for G_s over the canonical paths; the arc-length window spans
/// the passages of all non-root apartments.
inline SJohnEstimate estimate_sjohn(const SVersion& g) {
  const auto& W = g.base();
  double lmin = 1e300, lmax = 0;
  for (std::size_t i = 0; i < W.size(); ++i) {
    if (i == W.root_id) continue;
    lmin = std::min(lmin, W.cubes[i].side());
    lmax = std::max(lmax, W.cubes[i].side());
  }
  return fit_sjohn(g, sversion_john_paths(g), lmin / 8, lmax / 4);
}

// ---------------------------------------------------------------------------
// v_m

struct VmGeneration {
  int j = 0;  // generation in G_s coordinates
  std::uint64_t M = 0;
  std::vector<std::size_t> cubes;  // base ids; the first M carry sign +
};

struct VmFunction {
  const SVersion* g = nullptr;
  int k0 = 1;
  double lambda = 1, q = 1;
  std::vector<VmGeneration> gens;

  std::size_t m() const { return gens.size(); }

  double operator()(const Point& x) const {
    const auto b = g->base_cube_of(x);
    if (!b) return 0;
    for (const auto& gen : gens) {
      auto it = std::find(gen.cubes.begin(), gen.cubes.end(), *b);
      if (it == gen.cubes.end()) continue;
      const double sign = std::size_t(it - gen.cubes.begin()) < gen.M ? 1.0 : -1.0;
      return sign * test_function(*g->apartment_at(*b), lambda, q)(x);
    }
    return 0;
  }

  // Prefix with the first mm generations.
  VmFunction prefix(std::size_t mm) const {
    VmFunction v = *this;
    v.gens.resize(std::min(mm, gens.size()));
    return v;
  }
};

/// v_m: the m smallest admissible generations j > max(k0, -log2 l(Q0)) with
/// at least 2 M_j = 2 * 2^[lambda (j - k0)] cubes other than Q0; within a
/// generation the first 2 M_j cube ids are used (or a seeded shuffle).
inline VmFunction build_vm(const SVersion& g, std::size_t m, int k0, double lambda, double q,
                           std::optional<std::uint64_t> shuffle_seed = std::nullopt) {
  if (m < 1) fail("bad-m", "m must be at least 1");
  const auto& W = g.base();
  const int n = W.n;
  if (!(lambda >= n - 1 && lambda < n)) fail("bad-exponents", "lambda must be in [n-1, n), got ", lambda);
  std::map<int, std::vector<std::size_t>> by_gen;
  for (std::size_t i = 0; i < W.size(); ++i)
    if (i != W.root_id) by_gen[W.cubes[i].generation].push_back(i);
  const int j_root = W.cubes[W.root_id].generation;  // -log2 l(Q0)
  VmFunction v;
  v.g = &g;
  v.k0 = k0;
  v.lambda = lambda;
  v.q = q;
  const int j_last = W.cubes.back().generation;
  int first_short = std::numeric_limits<int>::min();
  for (int j = std::max(k0, j_root) + 1; j <= j_last && v.gens.size() < m; ++j) {
    const auto e = std::int64_t(std::floor(lambda * (j - k0)));
    if (e > 62) fail("too-many-cubes", "M_j overflows at generation ", j);
    const std::uint64_t M = std::uint64_t(1) << e;
    auto it = by_gen.find(j);
    const std::size_t have = it == by_gen.end() ? 0 : it->second.size();
    if (have < 2 * M) {
      if (first_short == std::numeric_limits<int>::min()) first_short = j;
      continue;
    }
    VmGeneration gen;
    gen.j = j;
    gen.M = M;
    gen.cubes = it->second;
    if (shuffle_seed) {
      Rng rng(mix_seed(*shuffle_seed, std::uint64_t(j)));
      std::shuffle(gen.cubes.begin(), gen.cubes.end(), rng);
    }
    gen.cubes.resize(2 * M);
    v.gens.push_back(std::move(gen));
  }
  if (v.gens.size() < m) {
    if (first_short != std::numeric_limits<int>::min())
      fail("not-enough-cubes", "generation ", first_short, " has fewer than 2 M_j cubes; found ", v.gens.size(),
           " admissible generations of ", m);
    fail("not-enough-cubes", "base decomposition ends at generation ", j_last, "; found ", v.gens.size(),
         " admissible generations of ", m);
  }
  return v;
}

struct AmValue {
  double Aq = 0;  // A_m^q
  double A = 0;
  double mean = 0;  // (v_m)_{G_s} times |G_s|
  std::vector<double> per_generation;
};

/// Exact A_m^q from the closed-form per-cube integrals (disjoint supports).
inline AmValue compute_Am(const VmFunction& v, double q) {
  AmValue r;
  CompensatedSum tot, mean;
  for (const auto& gen : v.gens) {
    CompensatedSum s;
    for (std::size_t i = 0; i < gen.cubes.size(); ++i) {
      const auto u = test_function(*v.g->apartment_at(gen.cubes[i]), v.lambda, q);
      s += u.integral_q();
      // Signed integral of u itself; the ramp contributes half its slab.
      const double cross = std::pow(2 * u.a.w, u.a.n - 1);
      const double I = u.plateau * (std::pow(u.a.l / 4, u.a.n) + cross * u.a.l / 32 + cross * u.a.l / 32);
      mean += i < gen.M ? I : -I;
    }
    r.per_generation.push_back(s.value());
    tot.merge(s);
  }
  r.Aq = tot.value();
  r.A = std::pow(r.Aq, 1 / q);
  r.mean = mean.value();
  return r;
}

struct BmOptions {
  std::uint64_t initial_samples = 256;  // per passage, first round
  double target_rel = 0.01;
  int max_rounds = 12;
  double radius_factor = 1.0;  // y ranges over B(x, radius_factor * dist(x, dG_s))
};

struct BmValue {
  double Bp = 0;  // B_m^p
  double B = 0;
  double stderr_p = 0;  // standard error of B_m^p
  double rel_stderr = 0;
  std::uint64_t samples = 0;
  bool converged = false;
  double paper_bound = 0;  // sum_k 2^{lambda j} 2^{-j E}
  std::vector<double> per_generation;
};

namespace detail {

struct PassageTally {
  CompensatedSum s1, s2;
  std::uint64_t n = 0;
};

// Adds `count` samples of the per-passage double integral of |u(x)-u(y)|^p /
// |x-y|^{n+delta p} over x in the passage and y in B(x, tau dist(x, dG_s)).
inline void sample_passage(PassageTally& t, const TestFunction& u, const ExponentSet& e, double radius_factor,
                           std::uint64_t stream, std::uint64_t count) {
  const auto& a = u.a;
  const int n = a.n, ax = n - 1;
  // Only x within w of the tiny passage can see a change of u.
  Box slab = a.passage;
  slab.lo[ax] = std::max(a.passage.lo[ax], a.tiny.lo[ax] - a.w);
  slab.hi[ax] = std::min(a.passage.hi[ax], a.tiny.hi[ax] + a.w);
  const double vol = slab.volume();
  const double alpha = e.p * (1 - e.delta);
  const double sig = sphere_area(n);
  Rng rng(stream);
  for (std::uint64_t k = 0; k < count; ++k) {
    Point x{};
    for (int i = 0; i < n; ++i) x[i] = slab.lo[i] + uniform01(rng) * (slab.hi[i] - slab.lo[i]);
    const double R = radius_factor * std::sqrt(a.wall_dist2(x));
    const double rho = R * std::pow(uniform01(rng), 1 / alpha);
    Point th{};
    double nn = 0;
    do {
      nn = 0;
      for (int i = 0; i < n; ++i) {
        th[i] = 2 * uniform01(rng) - 1;
        nn += th[i] * th[i];
      }
    } while (nn > 1 || nn < 1e-12);
    Point y{};
    for (int i = 0; i < n; ++i) y[i] = x[i] + rho * th[i] / std::sqrt(nn);
    double val = 0;
    if (rho > 0) val = detail::pair_power(u(x) - u(y), e.p) * std::pow(rho, -e.p) * sig * std::pow(R, alpha) / alpha * vol;
    t.s1 += val;
    t.s2 += val * val;
  }
  t.n += count;
}

}  // namespace detail

inline double paper_bound_Bp(const VmFunction& v, const ExponentSet& e) {
  const double E = e.p * (e.lambda - e.n) / e.q - e.p + e.s * (e.n - 1) + 1 + e.s * (1 - e.delta) * e.p;
  CompensatedSum s;
  for (const auto& gen : v.gens) s += std::exp2(e.lambda * gen.j - gen.j * E);
  return s.value();
}

/// Monte Carlo B_m^p as a sum of per-passage integrals (locality), with
/// per-passage seeded substreams and rounds of doubling until the relative
/// standard error reaches the target.
inline BmValue compute_Bm(const VmFunction& v, const ExponentSet& e, std::optional<std::uint64_t> seed,
                          const BmOptions& opt = {}) {
  e.validate();
  if (!seed) fail("missing-seed", "compute_Bm requires a seed");
  if (!(e.q < e.p)) fail("wrong-regime", "B_m targets q < p");
  struct Item {
    std::size_t gen, cube;
    TestFunction u;
  };
  std::vector<Item> items;
  for (std::size_t g = 0; g < v.gens.size(); ++g)
    for (auto c : v.gens[g].cubes) items.push_back({g, c, test_function(*v.g->apartment_at(c), v.lambda, e.q)});
  std::vector<detail::PassageTally> tally(items.size());
  BmValue r;
  std::uint64_t batch = opt.initial_samples;
  for (int round = 0; round < opt.max_rounds; ++round) {
    parallel_chunks(items.size(), [&](std::size_t i) {
      const std::uint64_t stream = mix_seed(mix_seed(*seed, items[i].cube), std::uint64_t(round));
      detail::sample_passage(tally[i], items[i].u, e, opt.radius_factor, stream, batch);
    });
    CompensatedSum total;
    double var = 0;
    for (const auto& t : tally) {
      const double N = double(t.n);
      const double mean = t.s1.value() / N;
      total += mean;
      var += std::max(0.0, t.s2.value() / N - mean * mean) / N;
    }
    r.Bp = total.value();
    r.stderr_p = std::sqrt(var);
    r.rel_stderr = r.Bp > 0 ? r.stderr_p / r.Bp : std::numeric_limits<double>::infinity();
    if (r.rel_stderr <= opt.target_rel) {
      r.converged = true;
      break;
    }
    if (round > 0) batch *= 2;  // totals double from the second round on
  }
  r.per_generation.assign(v.gens.size(), 0.0);
  for (std::size_t i = 0; i < items.size(); ++i) {
    r.per_generation[items[i].gen] += tally[i].s1.value() / double(tally[i].n);
    r.samples += tally[i].n;
  }
  r.B = std::pow(r.Bp, 1 / e.p);
  r.paper_bound = paper_bound_Bp(v, e);
  return r;
}

// ---------------------------------------------------------------------------
// Sharpness experiment

struct SharpnessRow {
  std::size_t m = 0;
  double Am = 0, Bm = 0, Bm_stderr = 0, ratio = 0, paper_bound_Bm = 0;
};

struct SharpnessReport {
  std::vector<SharpnessRow> rows;
  double slope = 0;
  double target = 0;
  bool pass = false;
  double max_rel_stderr = 0;
  int k0 = 1;
  std::uint64_t seed = 0;
  int scale_exponent = 0;
};

inline SharpnessReport sharpness_experiment(const SVersion& g, const ExponentSet& e, std::size_t m_max,
                                            std::uint64_t seed, int k0 = 1, const BmOptions& opt = {}) {
  e.validate();
  if (!(e.q < e.p)) fail("wrong-regime", "the experiment needs q < p (slope target 1/q - 1/p > 0)");
  if (e.s != g.s()) fail("bad-exponents", "exponent s = ", e.s, " does not match the domain's s = ", g.s());
  if (e.n != g.dim()) fail("bad-exponents", "exponent n does not match the domain dimension");
  const auto reg = check_regime(e);
  if (reg.regime != Regime::Sharp && !reg.rels_holds)
    fail("wrong-regime", "parameters are neither in the sharp regime nor satisfy the relation predicate");
  if (m_max < 2) fail("bad-m", "m_max must be at least 2");
  const auto vfull = build_vm(g, m_max, k0, e.lambda, e.q);
  SharpnessReport rep;
  rep.k0 = k0;
  rep.seed = seed;
  rep.scale_exponent = g.scale_exponent();
  rep.target = 1 / e.q - 1 / e.p;
  std::vector<double> lx, ly;
  for (std::size_t m = 1; m <= m_max; ++m) {
    const auto v = vfull.prefix(m);
    const auto A = compute_Am(v, e.q);
    const auto B = compute_Bm(v, e, seed, opt);
    SharpnessRow row;
    row.m = m;
    row.Am = A.A;
    row.Bm = B.B;
    // Delta method: se(B) = B se(B^p) / (p B^p).
    row.Bm_stderr = B.B * B.stderr_p / (e.p * B.Bp);
    row.ratio = A.A / B.B;
    row.paper_bound_Bm = std::pow(B.paper_bound, 1 / e.p);
    rep.max_rel_stderr = std::max(rep.max_rel_stderr, B.rel_stderr);
    rep.rows.push_back(row);
    lx.push_back(std::log(double(m)));
    ly.push_back(std::log(row.ratio));
  }
  rep.slope = fit_line(lx, ly).slope;
  rep.pass = rep.slope >= rep.target - 0.1;
  return rep;
}

}  // namespace fraclab
