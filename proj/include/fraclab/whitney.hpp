#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <span>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "fraclab/core.hpp"
#include "fraclab/domain.hpp"
#include "fraclab/dyadic.hpp"

namespace fraclab {

struct CubeKey {
  int generation = 0;
  IPoint corner{};
  bool operator==(const CubeKey& o) const { return generation == o.generation && corner == o.corner; }
};

struct CubeKeyHash {
  std::size_t operator()(const CubeKey& k) const {
    std::uint64_t h = mix_seed(std::uint64_t(k.generation), 0x51ed);
    for (auto c : k.corner) h = mix_seed(h, std::uint64_t(c));
    return std::size_t(h);
  }
};

inline CubeKey key_of(const DyadicCube& q) { return {q.generation, q.corner}; }

/// Whitney cubes with stable ids (sorted by generation, then corner),
/// root cube, adjacency of star cubes and the uncovered collar.
struct WhitneyDecomposition {
  int n = 2;
  int J_max = 0;
  std::vector<DyadicCube> cubes;
  std::size_t root_id = 0;
  double covered_measure = 0;
  double collar_measure = 0;
  // Symmetric adjacency in CSR form; neighbor lists sorted by id.
  std::vector<std::size_t> adj_offsets{0};
  std::vector<std::uint32_t> adj;
  int max_generation_gap = 0;
  bool root_in_collar = false;

  std::size_t size() const { return cubes.size(); }

  std::span<const std::uint32_t> neighbors(std::size_t id) const {
    return {adj.data() + adj_offsets[id], adj.data() + adj_offsets[id + 1]};
  }

  std::vector<std::pair<std::uint32_t, std::uint32_t>> edges() const {
    std::vector<std::pair<std::uint32_t, std::uint32_t>> e;
    for (std::size_t i = 0; i < cubes.size(); ++i)
      for (auto j : neighbors(i))
        if (j > i) e.emplace_back(std::uint32_t(i), j);
    return e;
  }

  std::map<int, std::size_t> counts() const {
    std::map<int, std::size_t> c;
    for (const auto& q : cubes) ++c[q.generation];
    return c;
  }

  // Id of the cube with this generation and corner, if present.
  std::optional<std::size_t> find(const DyadicCube& q) const {
    auto it = std::lower_bound(cubes.begin(), cubes.end(), q);
    if (it == cubes.end() || !(*it == q)) return std::nullopt;
    return std::size_t(it - cubes.begin());
  }
};

namespace detail {

// Star cube in integer units of 2^-(jf+4): side 16 S extended by S per side.
struct IStar {
  IPoint lo{}, hi{};
};

inline IStar istar(const DyadicCube& q, int jf, std::int64_t pad_per_side) {
  const std::int64_t S = std::int64_t(1) << (jf - q.generation);
  IStar b;
  for (int i = 0; i < q.n; ++i) {
    b.lo[i] = 16 * q.corner[i] * S - pad_per_side * S;
    b.hi[i] = 16 * (q.corner[i] + 1) * S + pad_per_side * S;
  }
  return b;
}

inline bool istar_meet(const IStar& a, const IStar& b, int n) {
  for (int i = 0; i < n; ++i)
    if (a.lo[i] > b.hi[i] || b.lo[i] > a.hi[i]) return false;
  return true;
}

// Builds the star adjacency. Each partner pair is discovered from the
// coarser (or equal) cube: a finer partner lies in one of its 3^n - 1
// same-generation neighbor cells, which are searched top-down.
inline void build_adjacency(WhitneyDecomposition& w) {
  const int n = w.n;
  const std::size_t N = w.cubes.size();
  if (N == 0) return;
  int jf = w.cubes.front().generation, jc = jf;
  for (const auto& q : w.cubes) {
    jf = std::max(jf, q.generation);
    jc = std::min(jc, q.generation);
  }
  if (jf - jc > 40) fail("generation-range", "Whitney generations span more than 40 levels");
  std::unordered_map<CubeKey, std::uint32_t, CubeKeyHash> leaf;
  std::unordered_set<CubeKey, CubeKeyHash> internal;
  leaf.reserve(N * 2);
  for (std::size_t i = 0; i < N; ++i) {
    leaf.emplace(key_of(w.cubes[i]), std::uint32_t(i));
    DyadicCube p = w.cubes[i];
    while (p.generation > jc) {
      p = p.parent();
      if (!internal.insert(key_of(p)).second) break;
    }
  }
  std::vector<std::vector<std::uint32_t>> nb(N);
  int offsets = 1;
  for (int i = 0; i < n; ++i) offsets *= 3;
  for (std::size_t i = 0; i < N; ++i) {
    const DyadicCube& q = w.cubes[i];
    const IStar qs = istar(q, jf, 1);
    std::vector<DyadicCube> stack;
    for (int o = 0; o < offsets; ++o) {
      DyadicCube c = q;
      int t = o;
      bool self = true;
      for (int a = 0; a < n; ++a) {
        const int d = t % 3 - 1;
        t /= 3;
        c.corner[a] += d;
        self = self && d == 0;
      }
      if (self) continue;
      stack.push_back(c);
    }
    while (!stack.empty()) {
      const DyadicCube c = stack.back();
      stack.pop_back();
      if (auto it = leaf.find(key_of(c)); it != leaf.end()) {
        if (istar_meet(qs, istar(c, jf, 1), n)) {
          const std::uint32_t j = it->second;
          nb[i].push_back(j);
          nb[j].push_back(std::uint32_t(i));
          w.max_generation_gap = std::max(w.max_generation_gap, c.generation - q.generation);
        }
        continue;
      }
      if (!internal.count(key_of(c))) continue;
      for (int k = 0; k < (1 << n); ++k) {
        const DyadicCube ch = c.child(k);
        if (istar_meet(qs, istar(ch, jf, 1), n)) stack.push_back(ch);
      }
    }
  }
  w.adj_offsets.assign(N + 1, 0);
  w.adj.clear();
  for (std::size_t i = 0; i < N; ++i) {
    auto& v = nb[i];
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    w.adj.insert(w.adj.end(), v.begin(), v.end());
    w.adj_offsets[i + 1] = w.adj.size();
  }
}

}  // namespace detail

/// Assembles a decomposition from an explicit cube list: sorts, assigns
/// ids, builds adjacency and picks the root containing `center`.
inline WhitneyDecomposition from_cubes(std::vector<DyadicCube> cubes, int n, int J_max, const Point& center,
                                       double domain_measure) {
  WhitneyDecomposition w;
  w.n = n;
  w.J_max = J_max;
  std::sort(cubes.begin(), cubes.end());
  w.cubes = std::move(cubes);
  CompensatedSum vol;
  for (const auto& q : w.cubes) vol.add(q.volume());
  w.covered_measure = vol.value();
  w.collar_measure = std::max(0.0, domain_measure - w.covered_measure);
  detail::build_adjacency(w);
  // Root: the cube containing the center; if the center sits in the
  // collar, the cube nearest to it (smallest id on ties).
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < w.cubes.size(); ++i) {
    const double d2 = point_box_dist2(center, w.cubes[i].box());
    if (d2 < best) {
      best = d2;
      w.root_id = i;
    }
    if (d2 == 0) break;
  }
  w.root_in_collar = best > 0;
  return w;
}

namespace detail {

// Keeps only the cubes star-connected to the root; the rest join the collar.
inline WhitneyDecomposition prune_to_root(const WhitneyDecomposition& w, const Point& center,
                                          double domain_measure) {
  std::vector<std::uint8_t> seen(w.size(), 0);
  std::deque<std::size_t> queue{w.root_id};
  seen[w.root_id] = 1;
  std::size_t reached = 1;
  while (!queue.empty()) {
    const std::size_t i = queue.front();
    queue.pop_front();
    for (auto j : w.neighbors(i))
      if (!seen[j]) {
        seen[j] = 1;
        ++reached;
        queue.push_back(j);
      }
  }
  if (reached == w.size()) return w;
  std::vector<DyadicCube> keep;
  keep.reserve(reached);
  for (std::size_t i = 0; i < w.size(); ++i)
    if (seen[i]) keep.push_back(w.cubes[i]);
  auto out = from_cubes(std::move(keep), w.n, w.J_max, center, domain_measure);
  return out;
}

}  // namespace detail

/// Top-down Whitney selection: a dyadic cube is accepted when
/// diam(Q) <= dist(Q, dG) and its parent was rejected (so also
/// dist(Q, dG) <= 4 diam(Q)). Cubes below the domain's truncation
/// generation are left to the collar.
inline WhitneyDecomposition whitney_decompose(const DomainModel& d, int J_max) {
  if (J_max < 1) fail("bad-jmax", "J_max must be at least 1, got ", J_max);
  const int n = d.dim();
  const Point center = d.center();
  if (!d.contains(center)) fail("center-outside", "designated center lies outside the domain");
  const Box bb = d.bounds();
  double ext = 0;
  for (int i = 0; i < n; ++i) ext = std::max(ext, bb.extent(i));
  // Start at a generation whose cubes are at least as large as the domain,
  // so none of them can lie inside it.
  const int g0 = -int(std::ceil(std::log2(ext))) - 1;
  std::vector<DyadicCube> stack;
  {
    const DyadicCube a = DyadicCube::containing(bb.lo, g0, n);
    const DyadicCube z = DyadicCube::containing(bb.hi, g0, n);
    IPoint c{};
    for (c[0] = a.corner[0]; c[0] <= z.corner[0]; ++c[0])
      for (c[1] = a.corner[1]; c[1] <= z.corner[1]; ++c[1])
        for (c[2] = (n > 2 ? a.corner[2] : 0); c[2] <= (n > 2 ? z.corner[2] : 0); ++c[2])
          stack.push_back(DyadicCube{n, g0, c});
  }
  std::vector<DyadicCube> accepted;
  while (!stack.empty()) {
    const DyadicCube q = stack.back();
    stack.pop_back();
    const Box b = q.box();
    if (!d.meets(b)) continue;
    // Squared comparison: n * side^2 is exact for dyadic sides.
    const double diam2 = double(n) * q.side() * q.side();
    if (d.box_clearance2(b) >= diam2) {
      accepted.push_back(q);
      continue;
    }
    if (q.generation + 1 > d.truncation_generation(b, J_max)) continue;
    for (int k = (1 << n) - 1; k >= 0; --k) stack.push_back(q.child(k));
  }
  if (accepted.empty()) fail("empty-decomposition", "no Whitney cube above the truncation generation");
  auto w = from_cubes(std::move(accepted), n, J_max, center, d.measure());
  return detail::prune_to_root(w, center, d.measure());
}

struct DistEstReport {
  std::size_t samples = 0;
  std::size_t violations = 0;
  double min_ratio = std::numeric_limits<double>::infinity();
  double max_ratio = 0;
};

/// Samples points of each star cube inside G and checks
/// 3/4 diam(Q) <= dist(x, dG) <= 6 diam(Q).
inline DistEstReport verify_dist_est(const WhitneyDecomposition& w, const DomainModel& d,
                                     std::size_t samples_per_cube, std::uint64_t seed = 1) {
  const std::size_t N = w.size();
  std::vector<DistEstReport> part(N);
  parallel_chunks(N, [&](std::size_t i) {
    Rng rng(mix_seed(seed, i));
    const Box star = expand_star(w.cubes[i]);
    const double diam = w.cubes[i].diam();
    auto& r = part[i];
    for (std::size_t s = 0; s < samples_per_cube; ++s) {
      Point x{};
      for (int a = 0; a < w.n; ++a) x[a] = star.lo[a] + uniform01(rng) * star.extent(a);
      if (!d.contains(x)) continue;
      const double ratio = d.clearance(x) / diam;
      ++r.samples;
      r.min_ratio = std::min(r.min_ratio, ratio);
      r.max_ratio = std::max(r.max_ratio, ratio);
      if (ratio < 0.75 || ratio > 6.0) ++r.violations;
    }
  });
  DistEstReport total;
  for (const auto& r : part) {
    total.samples += r.samples;
    total.violations += r.violations;
    total.min_ratio = std::min(total.min_ratio, r.min_ratio);
    total.max_ratio = std::max(total.max_ratio, r.max_ratio);
  }
  return total;
}

struct CountingRow {
  int k = 0;
  std::size_t count = 0;
  double normalized = 0;
};

struct CountingReport {
  std::vector<CountingRow> rows;
  // Normalized counts over the last four generations stay within a factor
  // four of their maximum.
  bool bounded_below = false;
  double tail_min = 0;
  double tail_max = 0;
};

inline CountingReport whitney_counting(const WhitneyDecomposition& w, double lambda) {
  if (w.cubes.empty()) fail("empty-decomposition", "no cubes to count");
  CountingReport r;
  for (const auto& [k, c] : w.counts()) r.rows.push_back({k, c, double(c) * std::pow(2.0, -lambda * k)});
  const std::size_t m = std::min<std::size_t>(4, r.rows.size());
  r.tail_min = std::numeric_limits<double>::infinity();
  for (std::size_t i = r.rows.size() - m; i < r.rows.size(); ++i) {
    r.tail_min = std::min(r.tail_min, r.rows[i].normalized);
    r.tail_max = std::max(r.tail_max, r.rows[i].normalized);
  }
  r.bounded_below = r.tail_min > 0 && r.tail_min >= 0.25 * r.tail_max;
  return r;
}

}  // namespace fraclab
