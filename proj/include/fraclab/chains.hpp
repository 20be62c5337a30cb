#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <unordered_map>
#include <vector>

#include "fraclab/core.hpp"
#include "fraclab/domain.hpp"
#include "fraclab/whitney.hpp"

namespace fraclab {

enum class ChainStrategy { HopCount, CurveFollowing };

inline const char* to_string(ChainStrategy s) { return s == ChainStrategy::HopCount ? "hop-count" : "curve-following"; }

inline ChainStrategy parse_strategy(const std::string& s) {
  if (s == "hop-count") return ChainStrategy::HopCount;
  if (s == "curve-following") return ChainStrategy::CurveFollowing;
  fail("bad-strategy", "unknown chain strategy '", s, "'");
}

// Breadth-first hop distances from `src` over the star adjacency.
inline std::vector<std::int64_t> hop_distances(const WhitneyDecomposition& w, std::size_t src) {
  std::vector<std::int64_t> dist(w.size(), -1);
  std::deque<std::size_t> queue{src};
  dist[src] = 0;
  while (!queue.empty()) {
    const std::size_t i = queue.front();
    queue.pop_front();
    for (auto j : w.neighbors(i))
      if (dist[j] < 0) {
        dist[j] = dist[i] + 1;
        queue.push_back(j);
      }
  }
  return dist;
}

inline bool adjacent(const WhitneyDecomposition& w, std::size_t a, std::size_t b) {
  auto nb = w.neighbors(a);
  return std::binary_search(nb.begin(), nb.end(), std::uint32_t(b));
}

/// Chains C(Q*) from the root to every cube. Hop-count chains form a
/// breadth-first tree and are stored as parent pointers; curve-following
/// chains are stored explicitly.
class ChainDecomposition {
 public:
  ChainDecomposition() = default;

  std::size_t root_id() const { return root_; }
  ChainStrategy strategy() const { return strategy_; }
  std::size_t size() const { return length_.size(); }
  const WhitneyDecomposition& whitney() const { return *w_; }

  // l(C(Q*)): number of hops from the root.
  std::uint32_t length(std::size_t id) const { return length_.at(id); }

  // Chain ids (Q_0, ..., Q_k = Q).
  std::vector<std::uint32_t> chain(std::size_t id) const {
    if (id >= size()) fail("unknown-cube", "unknown cube id ", id);
    if (!explicit_.empty()) return explicit_[id];
    std::vector<std::uint32_t> c;
    for (std::uint32_t q = std::uint32_t(id);; q = parent_[q]) {
      c.push_back(q);
      if (q == root_) break;
    }
    std::reverse(c.begin(), c.end());
    return c;
  }

  // out[A] = sum of f(Q) over Q in the shadow A(W) = {Q : A in C(Q*)}.
  template <typename F>
  std::vector<double> shadow_sums(F&& f) const {
    const std::size_t N = size();
    if (explicit_.empty()) {
      // Subtree sums: children are processed before parents by reverse
      // breadth-first order.
      std::vector<CompensatedSum> acc(N);
      for (std::size_t i = 0; i < N; ++i) acc[i].add(f(i));
      for (auto it = bfs_order_.rbegin(); it != bfs_order_.rend(); ++it)
        if (*it != root_) acc[parent_[*it]].merge(acc[*it]);
      std::vector<double> out(N);
      for (std::size_t i = 0; i < N; ++i) out[i] = acc[i].value();
      return out;
    }
    std::vector<CompensatedSum> acc(N);
    for (std::size_t q = 0; q < N; ++q) {
      const double v = f(q);
      for (auto a : explicit_[q]) acc[a].add(v);
    }
    std::vector<double> out(N);
    for (std::size_t i = 0; i < N; ++i) out[i] = acc[i].value();
    return out;
  }

  // Members of A(W) in increasing id order.
  std::vector<std::uint32_t> shadow(std::size_t a) const {
    if (a >= size()) fail("unknown-cube", "unknown cube id ", a);
    std::vector<std::uint32_t> out;
    for (std::size_t q = 0; q < size(); ++q) {
      if (!explicit_.empty()) {
        const auto& c = explicit_[q];
        if (std::find(c.begin(), c.end(), std::uint32_t(a)) != c.end()) out.push_back(std::uint32_t(q));
      } else {
        for (std::uint32_t p = std::uint32_t(q);; p = parent_[p]) {
          if (p == a) {
            out.push_back(std::uint32_t(q));
            break;
          }
          if (p == root_) break;
        }
      }
    }
    return out;
  }

  // |union A(W)| for every A.
  const std::vector<double>& shadow_volumes() const { return shadow_volume_; }

  static ChainDecomposition tree(const WhitneyDecomposition& w, std::vector<std::uint32_t> parent,
                                 std::vector<std::uint32_t> length, std::vector<std::uint32_t> order) {
    ChainDecomposition c;
    c.w_ = &w;
    c.root_ = w.root_id;
    c.strategy_ = ChainStrategy::HopCount;
    c.parent_ = std::move(parent);
    c.length_ = std::move(length);
    c.bfs_order_ = std::move(order);
    c.finish();
    return c;
  }

  static ChainDecomposition explicit_chains(const WhitneyDecomposition& w,
                                            std::vector<std::vector<std::uint32_t>> chains) {
    ChainDecomposition c;
    c.w_ = &w;
    c.root_ = w.root_id;
    c.strategy_ = ChainStrategy::CurveFollowing;
    c.length_.resize(chains.size());
    for (std::size_t i = 0; i < chains.size(); ++i) c.length_[i] = std::uint32_t(chains[i].size() - 1);
    c.explicit_ = std::move(chains);
    c.finish();
    return c;
  }

 private:
  void finish() {
    shadow_volume_ = shadow_sums([&](std::size_t q) { return w_->cubes[q].volume(); });
  }

  const WhitneyDecomposition* w_ = nullptr;
  std::size_t root_ = 0;
  ChainStrategy strategy_ = ChainStrategy::HopCount;
  std::vector<std::uint32_t> parent_;
  std::vector<std::uint32_t> length_;
  std::vector<std::uint32_t> bfs_order_;
  std::vector<std::vector<std::uint32_t>> explicit_;
  std::vector<double> shadow_volume_;
};

// Point location among the Whitney cubes.
class CubeLocator {
 public:
  explicit CubeLocator(const WhitneyDecomposition& w) : w_(&w) {
    jc_ = jf_ = w.cubes.empty() ? 0 : w.cubes.front().generation;
    for (std::size_t i = 0; i < w.size(); ++i) {
      index_.emplace(key_of(w.cubes[i]), std::uint32_t(i));
      jc_ = std::min(jc_, w.cubes[i].generation);
      jf_ = std::max(jf_, w.cubes[i].generation);
    }
  }

  // Cube whose half-open box contains x; `hint` (a nearby cube) is checked
  // together with its neighbors first.
  std::optional<std::size_t> locate(const Point& x, std::optional<std::size_t> hint = std::nullopt) const {
    if (hint) {
      if (contains(*hint, x)) return hint;
      for (auto j : w_->neighbors(*hint))
        if (contains(j, x)) return j;
    }
    for (int g = jc_; g <= jf_; ++g) {
      auto it = index_.find(key_of(DyadicCube::containing(x, g, w_->n)));
      if (it != index_.end()) return it->second;
    }
    return std::nullopt;
  }

 private:
  bool contains(std::size_t id, const Point& x) const {
    const DyadicCube c = DyadicCube::containing(x, w_->cubes[id].generation, w_->n);
    return c == w_->cubes[id];
  }

  const WhitneyDecomposition* w_;
  std::unordered_map<CubeKey, std::uint32_t, CubeKeyHash> index_;
  int jc_ = 0, jf_ = 0;
};

// Polyline from the root region to the midpoint of cube `id`.
using CurveFamily = std::function<std::vector<Point>(std::size_t id)>;

namespace detail {

inline std::vector<std::uint32_t> bfs_path(const WhitneyDecomposition& w, std::size_t from, std::size_t to) {
  if (from == to) return {std::uint32_t(from)};
  std::unordered_map<std::uint32_t, std::uint32_t> prev;
  std::deque<std::uint32_t> queue{std::uint32_t(from)};
  prev[std::uint32_t(from)] = std::uint32_t(from);
  while (!queue.empty()) {
    const auto i = queue.front();
    queue.pop_front();
    if (i == to) break;
    for (auto j : w.neighbors(i))
      if (prev.emplace(j, i).second) queue.push_back(j);
  }
  if (!prev.count(std::uint32_t(to))) fail("unreachable", "cube ", to, " is unreachable from cube ", from);
  std::vector<std::uint32_t> path;
  for (std::uint32_t q = std::uint32_t(to);; q = prev[q]) {
    path.push_back(q);
    if (q == from) break;
  }
  std::reverse(path.begin(), path.end());
  return path;
}

// Cubes met by a polyline, in order. Walks cube by cube: inside the current
// cube the segment is followed to its exit point, then the cube just past
// the exit is located among the neighbors.
inline std::vector<std::uint32_t> trace_polyline(const WhitneyDecomposition& w, const CubeLocator& loc,
                                                 const std::vector<Point>& poly) {
  std::vector<std::uint32_t> seq;
  const int n = w.n;
  std::optional<std::size_t> cur;
  auto push = [&](std::size_t id) {
    if (seq.empty() || seq.back() != id) seq.push_back(std::uint32_t(id));
  };
  for (std::size_t s = 0; s + 1 < poly.size(); ++s) {
    const Point a = poly[s], b = poly[s + 1];
    double len = std::sqrt(dist2(a, b, n));
    if (len == 0) continue;
    double t = 0;
    cur = loc.locate(a, cur);
    if (cur) push(*cur);
    while (t < 1) {
      Point p{};
      for (int i = 0; i < n; ++i) p[i] = a[i] + t * (b[i] - a[i]);
      if (!cur) {
        // In the collar or outside: march in small steps until a cube is hit.
        const double step = std::ldexp(1.0, -w.J_max - 2) / len;
        t = std::min(1.0, t + step);
        for (int i = 0; i < n; ++i) p[i] = a[i] + t * (b[i] - a[i]);
        cur = loc.locate(p);
        if (cur) push(*cur);
        continue;
      }
      const Box box = w.cubes[*cur].box();
      double exit = std::numeric_limits<double>::infinity();
      for (int i = 0; i < n; ++i) {
        const double d = b[i] - a[i];
        if (d > 0) exit = std::min(exit, (box.hi[i] - a[i]) / d);
        if (d < 0) exit = std::min(exit, (box.lo[i] - a[i]) / d);
      }
      if (exit >= 1) break;
      const double eps = 1e-9 * w.cubes[*cur].side() / len;
      t = std::max(exit, t) + eps;
      for (int i = 0; i < n; ++i) p[i] = a[i] + t * (b[i] - a[i]);
      cur = loc.locate(p, cur);
      if (cur) push(*cur);
    }
  }
  if (auto last = loc.locate(poly.back(), cur)) push(*last);
  return seq;
}

// Joins consecutive non-adjacent entries by breadth-first paths, then keeps
// the farthest overlapping successor at each step so only consecutive
// entries overlap.
inline std::vector<std::uint32_t> repair_chain(const WhitneyDecomposition& w, std::vector<std::uint32_t> seq,
                                               std::size_t root, std::size_t target) {
  if (seq.empty() || seq.front() != root) seq.insert(seq.begin(), std::uint32_t(root));
  if (seq.back() != target) seq.push_back(std::uint32_t(target));
  std::vector<std::uint32_t> joined{seq.front()};
  for (std::size_t i = 1; i < seq.size(); ++i) {
    const auto a = joined.back(), b = seq[i];
    if (a == b) continue;
    if (adjacent(w, a, b)) {
      joined.push_back(b);
      continue;
    }
    auto path = bfs_path(w, a, b);
    joined.insert(joined.end(), path.begin() + 1, path.end());
  }
  std::unordered_map<std::uint32_t, std::size_t> last;
  for (std::size_t i = 0; i < joined.size(); ++i) last[joined[i]] = i;
  std::vector<std::uint32_t> out;
  std::size_t i = last[joined.front()];
  out.push_back(joined[i]);
  while (i + 1 < joined.size()) {
    std::size_t next = i + 1;
    for (auto j : w.neighbors(joined[i])) {
      auto it = last.find(j);
      if (it != last.end() && it->second > next) next = it->second;
    }
    next = std::max(next, last[joined[next]]);
    out.push_back(joined[next]);
    i = next;
  }
  return out;
}

}  // namespace detail

/// Builds C(Q*) for every cube. Hop-count: shortest adjacency paths with
/// the smallest-id predecessor at each step. Curve-following: the cubes met
/// by `curves(id)` (straight segments from the root midpoint by default),
/// repaired into a valid chain.
inline ChainDecomposition build_chain_decomposition(const WhitneyDecomposition& w, ChainStrategy strategy,
                                                    const CurveFamily& curves = {}) {
  const std::size_t N = w.size();
  if (N == 0) fail("empty-decomposition", "no cubes");
  const auto hops = hop_distances(w, w.root_id);
  for (std::size_t i = 0; i < N; ++i)
    if (hops[i] < 0) fail("unreachable", "cube ", i, " is unreachable from the root");
  if (strategy == ChainStrategy::HopCount) {
    std::vector<std::uint32_t> parent(N), length(N), order(N);
    for (std::size_t i = 0; i < N; ++i) {
      length[i] = std::uint32_t(hops[i]);
      order[i] = std::uint32_t(i);
      if (i == w.root_id) {
        parent[i] = std::uint32_t(i);
        continue;
      }
      for (auto j : w.neighbors(i))
        if (hops[j] == hops[i] - 1) {
          parent[i] = j;
          break;
        }
    }
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return hops[a] < hops[b]; });
    return ChainDecomposition::tree(w, std::move(parent), std::move(length), std::move(order));
  }
  CubeLocator loc(w);
  const Point root_mid = w.cubes[w.root_id].midpoint();
  std::vector<std::vector<std::uint32_t>> chains(N);
  parallel_chunks((N + 255) / 256, [&](std::size_t c) {
    for (std::size_t q = c * 256; q < std::min(N, (c + 1) * 256); ++q) {
      std::vector<Point> poly = curves ? curves(q) : std::vector<Point>{root_mid, w.cubes[q].midpoint()};
      chains[q] = detail::repair_chain(w, detail::trace_polyline(w, loc, poly), w.root_id, q);
    }
  });
  return ChainDecomposition::explicit_chains(w, std::move(chains));
}

inline double shadow_volume(const ChainDecomposition& cd, std::size_t a) {
  if (a >= cd.size()) fail("unknown-cube", "unknown cube id ", a);
  return cd.shadow_volumes()[a];
}

// ---------------------------------------------------------------------------
// Chain-length law

struct ChainLengthFit {
  std::vector<std::pair<int, std::uint32_t>> max_length;  // per generation
  double c = 0;   // max of l(C(Q*)) / (1 + log2(1/l(Q)))
  double slope = 0;
  double r2 = 0;
};

inline ChainLengthFit fit_chain_length(const ChainDecomposition& cd, int j_lo, int j_hi) {
  const auto& w = cd.whitney();
  std::map<int, std::uint32_t> mx;
  ChainLengthFit f;
  for (std::size_t i = 0; i < cd.size(); ++i) {
    const int j = w.cubes[i].generation;
    f.c = std::max(f.c, double(cd.length(i)) / (1.0 + std::max(0, j)));
    if (j < j_lo || j > j_hi) continue;
    mx[j] = std::max(mx[j], cd.length(i));
  }
  std::vector<double> x, y;
  for (const auto& [j, l] : mx) {
    f.max_length.emplace_back(j, l);
    x.push_back(1.0 + j);
    y.push_back(double(l));
  }
  if (x.size() >= 2) {
    const LineFit lf = fit_line(x, y);
    f.slope = lf.slope;
    f.r2 = lf.r2;
  }
  return f;
}

// ---------------------------------------------------------------------------
// W_{j,k,sigma} classification

struct ChainClassification {
  double sigma = 1;
  // (j, k) -> cube ids.
  std::map<std::pair<int, int>, std::vector<std::uint32_t>> buckets;
  std::vector<double> shadow_volumes;
  double fitted_c = 0;  // max count / (2^{-kn} 2^{j(n+1+(lambda-n-1)/s)})
};

inline ChainClassification classify_wjk(const ChainDecomposition& cd, double s, double lambda) {
  if (!(s > 1)) fail("bad-s", "classification needs s > 1, got ", s);
  const auto& w = cd.whitney();
  const int n = w.n;
  const auto& vol = cd.shadow_volumes();
  // For A of generation j, k is admissible iff x - 1 - log2(sigma)/n <= k <= x
  // with x = j + log2|U A(W)| / n, and 0 <= k <= [j - j/s].
  auto pick = [&](std::size_t a, double log2sigma) -> std::optional<int> {
    const int j = w.cubes[a].generation;
    const double x = j + std::log2(vol[a]) / n;
    const int kmax = int(std::floor(j - j / s));
    const int k = std::min(int(std::floor(x + 1e-12)), kmax);
    if (k < 0) return std::nullopt;
    if (double(k) < x - 1.0 - log2sigma / n - 1e-12) return std::nullopt;
    return k;
  };
  for (int e = 0; e <= 16; ++e) {
    bool ok = true;
    for (std::size_t a = 0; a < cd.size() && ok; ++a) ok = pick(a, e).has_value();
    if (!ok) continue;
    ChainClassification c;
    c.sigma = std::ldexp(1.0, e);
    c.shadow_volumes = vol;
    for (std::size_t a = 0; a < cd.size(); ++a)
      c.buckets[{w.cubes[a].generation, *pick(a, e)}].push_back(std::uint32_t(a));
    for (const auto& [jk, ids] : c.buckets) {
      const auto [j, k] = jk;
      const double bound = std::pow(2.0, -k * n) * std::pow(2.0, j * (n + 1 + (lambda - n - 1) / s));
      c.fitted_c = std::max(c.fitted_c, double(ids.size()) / bound);
    }
    return c;
  }
  fail("covering-failed", "no sigma <= 2^16 covers every generation; chain strategy pathology");
}

// ---------------------------------------------------------------------------
// Containment of shadows in balls around nearest boundary points

// Max over A of max_{Q in A(W)} (farthest point of Q from w_A) / l(A), where
// w_A is the boundary point nearest to x_A.
inline double fit_contains_constant(const ChainDecomposition& cd, const DomainModel& d) {
  const auto& w = cd.whitney();
  std::vector<Point> omega(w.size());
  for (std::size_t a = 0; a < w.size(); ++a) omega[a] = d.nearest_boundary_point(w.cubes[a].midpoint());
  std::vector<double> c(w.size(), 0.0);
  for (std::size_t q = 0; q < w.size(); ++q) {
    const Box b = w.cubes[q].box();
    for (auto a : cd.chain(q)) c[a] = std::max(c[a], std::sqrt(point_box_far2(omega[a], b)) / w.cubes[a].side());
  }
  return *std::max_element(c.begin(), c.end());
}

// ---------------------------------------------------------------------------
// s-John estimation

// Polyline from a start point to the center, with clearance at each vertex
// implied by the domain.
struct JohnPath {
  std::vector<Point> pts;
};

struct SJohnEstimate {
  double s_hat = 0;
  double c_hat = 0;
  double r2 = 0;
  std::vector<std::pair<double, double>> envelope;  // (t bin center, min clearance)
  std::size_t paths = 0;
};

// Clearance-greedy path from cube `q`: the successor is the neighbor one hop
// closer to the root with the largest clearance at its midpoint (smallest id
// on ties); the path then runs to the center.
inline JohnPath greedy_path(const WhitneyDecomposition& w, const DomainModel& d,
                            const std::vector<std::int64_t>& hops, const std::vector<double>& mid_clear,
                            std::size_t q) {
  JohnPath p;
  p.pts.push_back(w.cubes[q].midpoint());
  std::size_t cur = q;
  while (hops[cur] > 0) {
    std::size_t best = cur;
    double bc = -1;
    for (auto j : w.neighbors(cur))
      if (hops[j] == hops[cur] - 1 && mid_clear[j] > bc) {
        bc = mid_clear[j];
        best = j;
      }
    cur = best;
    p.pts.push_back(w.cubes[cur].midpoint());
  }
  p.pts.push_back(d.center());
  return p;
}

// Fits dist(gamma(t), dG) >= t^s / c over a family of paths by a log-log
// regression on the per-bin lower envelope. Each path is sampled at
// `per_segment` points per segment plus finer samples near its start.
inline SJohnEstimate fit_sjohn(const DomainModel& d, const std::vector<JohnPath>& paths, double t_lo,
                               double t_hi, int per_segment = 16) {
  const int n = d.dim();
  constexpr int bins_per_octave = 2;
  std::map<int, double> env;
  std::vector<std::pair<double, double>> samples;
  for (const auto& path : paths) {
    double t = 0;
    for (std::size_t s = 0; s + 1 < path.pts.size(); ++s) {
      const Point& a = path.pts[s];
      const Point& b = path.pts[s + 1];
      const double len = std::sqrt(dist2(a, b, n));
      if (len == 0) continue;
      for (int k = 1; k <= per_segment; ++k) {
        const double u = double(k) / per_segment;
        Point x{};
        for (int i = 0; i < n; ++i) x[i] = a[i] + u * (b[i] - a[i]);
        const double tt = t + u * len;
        const double c = d.clearance(x);
        samples.emplace_back(tt, c);
        if (tt < t_lo || tt > t_hi) continue;
        const int bin = int(std::floor(std::log2(tt) * bins_per_octave));
        auto it = env.find(bin);
        if (it == env.end() || c < it->second) env[bin] = c;
      }
      t += len;
    }
  }
  SJohnEstimate e;
  e.paths = paths.size();
  std::vector<double> lx, ly;
  for (const auto& [bin, c] : env) {
    // Partial bins at either end are dropped.
    if (std::exp2(double(bin) / bins_per_octave) < t_lo || std::exp2(double(bin + 1) / bins_per_octave) > t_hi) continue;
    if (!(c > 0)) continue;
    const double tc = std::exp2((bin + 0.5) / bins_per_octave);
    e.envelope.emplace_back(tc, c);
    lx.push_back(std::log(tc));
    ly.push_back(std::log(c));
  }
  if (lx.size() < 3) fail("degenerate-fit", "too few envelope bins for the s-John fit");
  const LineFit f = fit_line(lx, ly);
  e.s_hat = f.slope;
  e.r2 = f.r2;
  for (const auto& [t, c] : samples) {
    if (t <= 0) continue;
    if (!(c > 0)) {
      e.c_hat = std::numeric_limits<double>::infinity();
      break;
    }
    e.c_hat = std::max(e.c_hat, std::pow(t, e.s_hat) / c);
  }
  return e;
}

/// s-John parameters of a domain from clearance-greedy cube paths of every
/// Whitney cube midpoint to the center.
inline SJohnEstimate estimate_sjohn(const DomainModel& d, const WhitneyDecomposition& w) {
  if (!d.contains(d.center())) fail("center-outside", "center lies outside the domain");
  const auto hops = hop_distances(w, w.root_id);
  std::vector<double> mid(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (hops[i] < 0) fail("unreachable", "cube ", i, " is unreachable from the center");
    mid[i] = d.clearance(w.cubes[i].midpoint());
  }
  std::vector<JohnPath> paths(w.size());
  double lmin = 1e300, lmax = 0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    paths[i] = greedy_path(w, d, hops, mid, i);
    lmin = std::min(lmin, w.cubes[i].side());
    lmax = std::max(lmax, w.cubes[i].side());
  }
  // Below a few smallest sides the envelope is flat at the smallest cubes'
  // clearance; above the largest side the paths have reached the center.
  return fit_sjohn(d, paths, 4 * lmin, lmax);
}

// ---------------------------------------------------------------------------
// Ball chains

struct Ball {
  Point x{};
  double r = 0;
};

struct BallChain {
  Point target{};
  std::vector<Ball> balls;
  double M = 0;
  double c1 = 0, c2 = 0, c4 = 0, c5 = 0;
  double min_clearance_ratio = 0;  // min dist(B_i, dG) / r_i
  double c_fit = 0;
};

namespace detail {

// Volume of the intersection of two balls in R^n (n = 2, 3).
inline double ball_intersection_volume(const Ball& a, const Ball& b, int n) {
  const double d = std::sqrt(dist2(a.x, b.x, n));
  const double R = a.r, r = b.r;
  if (d >= R + r) return 0;
  const double small = std::min(R, r);
  if (d <= std::abs(R - r)) return unit_ball_volume(n) * std::pow(small, n);
  if (n == 2) {
    const double a1 = std::acos(std::clamp((d * d + R * R - r * r) / (2 * d * R), -1.0, 1.0));
    const double a2 = std::acos(std::clamp((d * d + r * r - R * R) / (2 * d * r), -1.0, 1.0));
    return R * R * (a1 - std::sin(2 * a1) / 2) + r * r * (a2 - std::sin(2 * a2) / 2);
  }
  return std::numbers::pi * (R + r - d) * (R + r - d) * (d * d + 2 * d * r - 3 * r * r + 2 * d * R + 6 * r * R - 3 * R * R) /
         (12 * d);
}

}  // namespace detail

/// Chain of balls B_i = B(x_i, r_i) from the center to x: centers walk the
/// clearance-greedy path with r_i = dist(x_i, dG) / (2M) and steps of at
/// most r_i / 2, followed by a geometric tail converging to x.
inline BallChain build_ball_chain(const DomainModel& d, const WhitneyDecomposition& w, const Point& x, double M,
                                  int tail = 24) {
  if (!(M > 1)) fail("bad-m", "M must exceed 1, got ", M);
  const int n = d.dim();
  if (!d.contains(x)) fail("point-outside", "target point lies outside the domain");
  const auto hops = hop_distances(w, w.root_id);
  std::vector<double> mid(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) mid[i] = d.clearance(w.cubes[i].midpoint());
  CubeLocator loc(w);
  std::vector<Point> path{x};
  const auto q0 = loc.locate(x);
  if (w.cubes[w.root_id].box().contains(x)) {
    path.push_back(d.center());
  } else if (auto q = q0) {
    auto g = greedy_path(w, d, hops, mid, *q);
    path.insert(path.end(), g.pts.begin(), g.pts.end());
  } else {
    // x lies in the collar: start from the nearest cube.
    std::size_t best = 0;
    double bd = 1e300;
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double dd = point_box_dist2(x, w.cubes[i].box());
      if (dd < bd) {
        bd = dd;
        best = i;
      }
    }
    auto g = greedy_path(w, d, hops, mid, best);
    path.insert(path.end(), g.pts.begin(), g.pts.end());
  }
  std::reverse(path.begin(), path.end());  // center -> x
  BallChain bc;
  bc.target = x;
  bc.M = M;
  Point cur = path.front();
  std::size_t seg = 0;
  for (;;) {
    const double c = d.clearance(cur);
    if (!(c > 0)) fail("condition-3", "ball centre at clearance 0; path leaves the domain");
    const double r = c / (2 * M);
    bc.balls.push_back({cur, r});
    // Remaining arc length to x.
    if (std::sqrt(dist2(cur, x, n)) <= r / 2 && seg + 1 >= path.size() - 1) break;
    double step = r / 2;
    while (step > 0 && seg + 1 < path.size()) {
      const double left = std::sqrt(dist2(cur, path[seg + 1], n));
      if (left <= step) {
        step -= left;
        cur = path[++seg];
      } else {
        for (int i = 0; i < n; ++i) cur[i] += step / left * (path[seg + 1][i] - cur[i]);
        step = 0;
      }
    }
    if (seg + 1 >= path.size()) cur = x;
    if (bc.balls.size() > 2000000) fail("condition-3", "ball chain does not terminate");
  }
  // Geometric tail along the last approach direction.
  const Ball last = bc.balls.back();
  Point e{};
  double el = std::sqrt(dist2(last.x, x, n));
  if (el > 0) {
    for (int i = 0; i < n; ++i) e[i] = (last.x[i] - x[i]) / el;
  } else {
    e[0] = 1;
  }
  // Radii 3/4 of the distance to x, halving: consecutive tail balls overlap,
  // none contains x, so the overlap count stays bounded.
  double rho = 0.7 * last.r;
  for (int k = 0; k < tail; ++k) {
    Ball b;
    for (int i = 0; i < n; ++i) b.x[i] = x[i] + rho * e[i];
    b.r = 0.75 * rho;
    bc.balls.push_back(b);
    rho /= 2;
  }
  // Conditions.
  bc.min_clearance_ratio = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < bc.balls.size(); ++i) {
    const Ball& b = bc.balls[i];
    const double dx = std::sqrt(dist2(b.x, x, n));
    bc.c2 = std::max(bc.c2, std::max(0.0, dx - b.r) / b.r);
    bc.c4 = std::max(bc.c4, dx / b.r);
    bc.min_clearance_ratio = std::min(bc.min_clearance_ratio, (d.clearance(b.x) - b.r) / b.r);
    if (i + 1 < bc.balls.size()) {
      const Ball& o = bc.balls[i + 1];
      const double inter = detail::ball_intersection_volume(b, o, n);
      const double uni = unit_ball_volume(n) * (std::pow(b.r, n) + std::pow(o.r, n)) - inter;
      bc.c1 = std::max(bc.c1, inter > 0 ? uni / inter : std::numeric_limits<double>::infinity());
    }
  }
  // Bounded overlap, probed at every ball center and the target.
  std::vector<Point> probes{x};
  for (const auto& b : bc.balls) probes.push_back(b.x);
  for (const auto& p : probes) {
    std::size_t cnt = 0;
    for (const auto& b : bc.balls) cnt += dist2(p, b.x, n) < b.r * b.r;
    bc.c5 = std::max(bc.c5, double(cnt));
  }
  bc.c_fit = std::max({bc.c1, bc.c2, bc.c4, bc.c5});
  return bc;
}

}  // namespace fraclab
