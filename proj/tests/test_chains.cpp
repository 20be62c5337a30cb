#include <catch_amalgamated.hpp>

#include <deque>
#include <set>

#include "fraclab/chains.hpp"
#include "fraclab/geometry.hpp"

using namespace fraclab;
using Catch::Approx;

namespace {

// All-pairs star intersection, independent of the adjacency builder.
bool stars_meet(const WhitneyDecomposition& w, std::size_t a, std::size_t b) {
  return expand_star(w.cubes[a]).intersects(expand_star(w.cubes[b]));
}

void check_chain_validity(const ChainDecomposition& cd) {
  const auto& w = cd.whitney();
  for (std::size_t q = 0; q < cd.size(); ++q) {
    const auto c = cd.chain(q);
    REQUIRE(c.front() == cd.root_id());
    REQUIRE(c.back() == q);
    REQUIRE(c.size() == cd.length(q) + 1);
    for (std::size_t i = 0; i + 1 < c.size(); ++i) CHECK(stars_meet(w, c[i], c[i + 1]));
    for (std::size_t i = 0; i < c.size(); ++i)
      for (std::size_t k = i + 2; k < c.size(); ++k) CHECK_FALSE(stars_meet(w, c[i], c[k]));
  }
}

}  // namespace

TEST_CASE("hop-count chains on the square and the l-shape") {
  for (auto preset : {Preset::UnitCube, Preset::LShape}) {
    auto d = make_domain(preset, 6);
    auto w = whitney_decompose(d, 6);
    auto cd = build_chain_decomposition(w, ChainStrategy::HopCount);
    CHECK(cd.length(cd.root_id()) == 0);
    CHECK(cd.chain(cd.root_id()).size() == 1);
    CHECK(cd.shadow(cd.root_id()).size() == w.size());
    CHECK(shadow_volume(cd, cd.root_id()) == Approx(w.covered_measure).epsilon(1e-14));
    check_chain_validity(cd);

    // Minimality against an independent BFS over all-pairs star tests.
    std::vector<int> dist(w.size(), -1);
    std::deque<std::size_t> queue{w.root_id};
    dist[w.root_id] = 0;
    while (!queue.empty()) {
      auto i = queue.front();
      queue.pop_front();
      for (std::size_t k = 0; k < w.size(); ++k)
        if (k != i && dist[k] < 0 && stars_meet(w, i, k)) {
          dist[k] = dist[i] + 1;
          queue.push_back(k);
        }
    }
    for (std::size_t q = 0; q < w.size(); ++q) CHECK(int(cd.length(q)) == dist[q]);

    // Double counting: sum_A #A(W) = sum_Q (l(C(Q*)) + 1).
    auto counts = cd.shadow_sums([](std::size_t) { return 1.0; });
    double lhs = 0, rhs = 0;
    for (std::size_t a = 0; a < w.size(); ++a) {
      lhs += counts[a];
      rhs += cd.length(a) + 1.0;
      CHECK(counts[a] >= 1);
      CHECK(cd.shadow_volumes()[a] >= w.cubes[a].volume());
    }
    CHECK(lhs == rhs);
    // A leaf cube has A(W) = {A}.
    for (std::size_t a = 0; a < w.size(); ++a)
      if (counts[a] == 1) CHECK(cd.shadow_volumes()[a] == w.cubes[a].volume());
  }
}

TEST_CASE("shadow volumes match a voxel union") {
  auto d = make_domain(Preset::UnitCube, 6);
  auto w = whitney_decompose(d, 6);
  for (auto strat : {ChainStrategy::HopCount, ChainStrategy::CurveFollowing}) {
    auto cd = build_chain_decomposition(w, strat);
    for (std::size_t a = 0; a < w.size(); a += 7) {
      std::set<std::pair<int, int>> voxels;
      for (auto q : cd.shadow(a)) {
        const auto& c = w.cubes[q];
        const int s = 1 << (6 - c.generation);
        for (int x = 0; x < s; ++x)
          for (int y = 0; y < s; ++y) voxels.insert({int(c.corner[0]) * s + x, int(c.corner[1]) * s + y});
      }
      CHECK(cd.shadow_volumes()[a] == Approx(voxels.size() / 4096.0).epsilon(1e-14));
    }
  }
}

TEST_CASE("curve-following chains are valid") {
  for (auto preset : {Preset::UnitCube, Preset::LShape}) {
    auto d = make_domain(preset, 6);
    auto w = whitney_decompose(d, 6);
    auto cd = build_chain_decomposition(w, ChainStrategy::CurveFollowing);
    CHECK(cd.strategy() == ChainStrategy::CurveFollowing);
    check_chain_validity(cd);
    auto counts = cd.shadow_sums([](std::size_t) { return 1.0; });
    double lhs = 0, rhs = 0;
    for (std::size_t a = 0; a < w.size(); ++a) {
      lhs += counts[a];
      rhs += cd.length(a) + 1.0;
    }
    CHECK(lhs == rhs);
  }
}

TEST_CASE("chain length law on the square") {
  auto d = make_domain(Preset::UnitCube, 8);
  auto w = whitney_decompose(d, 8);
  auto cd = build_chain_decomposition(w, ChainStrategy::HopCount);
  auto f = fit_chain_length(cd, 3, 8);
  CHECK(f.max_length.size() == 6);
  CHECK(f.r2 >= 0.9);
  CHECK(f.c > 0);
  CHECK(f.c < 4);
  for (std::size_t q = 0; q < cd.size(); ++q)
    CHECK(cd.length(q) <= f.c * (1 + w.cubes[q].generation) + 1e-12);
  // Shadows sit in balls around nearest boundary points.
  const double c = fit_contains_constant(cd, distance_transform(d));
  CHECK(std::isfinite(c));
  CHECK(c < 64);
}

TEST_CASE("W_jk classification") {
  auto d = make_domain(Preset::UnitCube, 8);
  auto w = whitney_decompose(d, 8);
  auto cd = build_chain_decomposition(w, ChainStrategy::HopCount);
  auto c = classify_wjk(cd, 2.0, 1.0);
  std::size_t covered = 0;
  for (const auto& [jk, ids] : c.buckets) {
    const auto [j, k] = jk;
    CHECK(k >= 0);
    CHECK(k <= int(std::floor(j - j / 2.0)));
    for (auto a : ids) {
      const double v = cd.shadow_volumes()[a];
      CHECK(w.cubes[a].generation == j);
      CHECK(std::ldexp(1.0, -(j - k) * 2) <= v * (1 + 1e-12));
      CHECK(v <= c.sigma * std::ldexp(1.0, -(j - k - 1) * 2) * (1 + 1e-12));
    }
    covered += ids.size();
  }
  CHECK(covered == w.size());
  CHECK(std::isfinite(c.fitted_c));
  CHECK_THROWS_AS(classify_wjk(cd, 1.0, 1.0), Error);

  // Single-cube domain: one cube, sigma = 1.
  auto one = from_cubes({DyadicCube{2, 0, {0, 0, 0}}}, 2, 0, Point{0.5, 0.5, 0}, 1.0);
  auto c1 = build_chain_decomposition(one, ChainStrategy::HopCount);
  auto k1 = classify_wjk(c1, 2.0, 1.0);
  CHECK(k1.sigma == 1);
  CHECK(k1.buckets.size() == 1);
}

TEST_CASE("s-John estimate of convex domains") {
  auto d = distance_transform(make_domain(Preset::UnitCube, 7));
  auto w = whitney_decompose(d, 7);
  auto e = estimate_sjohn(d, w);
  CHECK(e.s_hat <= 1.1);
  CHECK(e.s_hat > 0.5);
  CHECK(std::isfinite(e.c_hat));
}

TEST_CASE("ball chains") {
  auto d = distance_transform(make_domain(Preset::UnitCube, 7));
  auto w = whitney_decompose(d, 7);
  auto trivial = build_ball_chain(d, w, d.center(), 3.0);
  CHECK(trivial.min_clearance_ratio >= 3.0 - 1e-12);
  CHECK(trivial.c_fit <= 5.0);

  const Point corner{0.02, 0.03, 0};
  auto bc = build_ball_chain(d, w, corner, 3.0);
  CHECK(bc.min_clearance_ratio >= 3.0 - 1e-12);
  CHECK(std::isfinite(bc.c_fit));
  CHECK(bc.c5 <= bc.c_fit);
  // Radii go to zero geometrically at the end of the chain.
  const auto& b = bc.balls;
  CHECK(b.back().r < 1e-6 * b.front().r);
  for (std::size_t i = b.size() - 10; i + 1 < b.size(); ++i) CHECK(b[i + 1].r == Approx(b[i].r / 2));
  CHECK_THROWS_AS(build_ball_chain(d, w, corner, 1.0), Error);
}
