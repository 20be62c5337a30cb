#include <catch_amalgamated.hpp>

#include "fraclab/counterexample.hpp"
#include "fraclab/geometry.hpp"

using namespace fraclab;
using Catch::Approx;

namespace {

struct Base {
  VoxelDomain d;
  WhitneyDecomposition w;
};

Base square(int J) {
  auto d = make_domain(Preset::UnitCube, J);
  auto w = whitney_decompose(d, J);
  return {std::move(d), std::move(w)};
}

ExponentSet sharp_set(double p = 2, double q = 1) {
  ExponentSet e;
  e.n = 2;
  e.p = p;
  e.q = q;
  e.delta = 0.5;
  e.s = 2;
  e.lambda = 1;
  return e;
}

Point pt(double x, double y) { return Point{x, y, 0}; }

template <typename F>
std::string error_code(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return "none";
}

}  // namespace

TEST_CASE("apartment of the unit square has exact dyadic boxes") {
  const auto a = apartment(DyadicCube{2, 0, {0, 0, 0}}, 2);
  CHECK(a.room.lo[0] == 3.0 / 8);
  CHECK(a.room.hi[0] == 5.0 / 8);
  CHECK(a.room.lo[1] == 3.0 / 8);
  CHECK(a.room.hi[1] == 5.0 / 8);
  CHECK(a.passage.lo[0] == 31.0 / 64);
  CHECK(a.passage.hi[0] == 33.0 / 64);
  CHECK(a.passage.lo[1] == 5.0 / 8);
  CHECK(a.passage.hi[1] == 3.0 / 4);
  CHECK(a.tiny.lo[0] == 31.0 / 64);
  CHECK(a.tiny.hi[0] == 33.0 / 64);
  CHECK(a.tiny.lo[1] == 21.0 / 32);
  CHECK(a.tiny.hi[1] == 23.0 / 32);
  CHECK(a.long_passage.lo[1] == 1.0 / 2);
  CHECK(a.long_passage.hi[1] == 1.0);

  // Nesting along the passage axis, room and passage disjoint, P inside Q/2.
  CHECK(a.long_passage.contains_box(a.passage));
  CHECK(a.passage.contains_box(a.tiny));
  CHECK(a.room.hi[1] <= a.passage.lo[1]);
  Box half{2, {0.25, 0.25, 0}, {0.75, 0.75, 0}};
  CHECK(half.contains_box(a.passage));

  CHECK(error_code([&] { apartment(DyadicCube{2, -2, {0, 0, 0}}, 2); }) == "w-restr");
  CHECK_THROWS(apartment(DyadicCube{2, 0, {0, 0, 0}}, 1.0));
  for (double s : {1.1, 1.5, 2.0, 3.0}) CHECK(passage_halfwidth(1, s) < 1.0 / 8);
}

TEST_CASE("apartment walls leave exactly the mouth open") {
  const auto a = apartment(DyadicCube{2, 0, {0, 0, 0}}, 2);
  CHECK(a.wall_dist2(pt(0.5, 0.5)) == Approx(0.125 * 0.125));
  CHECK(a.wall_dist2(pt(0.5, 5.0 / 8)) > 0);        // mouth center
  CHECK(a.wall_dist2(pt(0.45, 5.0 / 8)) == 0);      // top wall beside the mouth
  CHECK(a.wall_dist2(pt(3.0 / 8, 0.5)) == 0);       // side wall
  CHECK(a.wall_dist2(pt(31.0 / 64, 0.7)) == 0);     // passage wall
  CHECK(a.wall_dist2(pt(0.5, 0.7)) == Approx(1.0 / 4096));
  CHECK(a.wall_dist2(pt(0.5, 0.9)) > 0.01);         // ring, above the passage
}

TEST_CASE("test function values, slope and continuity") {
  for (auto [gen, plateau, slope] : {std::tuple{0, 1.0, -16.0}, std::tuple{1, 2.0, -64.0}}) {
    const auto a = apartment(DyadicCube{2, gen, {0, 0, 0}}, 2);
    const auto u = test_function(a, 1, 1);
    CHECK(u.plateau == plateau);
    CHECK(u.slope == slope);
    const double l = a.l, x = a.x[0], y = a.x[1];
    CHECK(u(a.x) == plateau);
    CHECK(u(pt(x, y + l / 8 + l / 64)) == plateau);  // passage below T
    CHECK(u(pt(x, y + 15 * l / 64)) == 0);           // passage above T
    CHECK(u(pt(x + l / 4, y)) == 0);                 // ring
    CHECK(u(pt(x, a.tiny.lo[1])) == plateau);
    CHECK(u(pt(x, a.tiny.hi[1])) == 0);
    CHECK(u(pt(x, std::nextafter(a.tiny.lo[1], 1.0))) == Approx(plateau).epsilon(1e-12));
    CHECK(u(pt(x, std::nextafter(a.tiny.hi[1], 0.0))) == Approx(0).margin(1e-12));

    const double h = 1e-4 * l;
    for (double f : {0.2, 0.5, 0.8}) {
      const double t = a.tiny.lo[1] + f * (a.tiny.hi[1] - a.tiny.lo[1]);
      const double fd = (u(pt(x, t + h)) - u(pt(x, t - h))) / (2 * h);
      CHECK(std::abs(fd - slope) <= 1e-10 * std::abs(slope));
      CHECK(u(pt(x + 0.5 * a.w, t + h)) - u(pt(x - 0.5 * a.w, t + h)) == 0);
    }
    for (double t : {y, y + 9 * l / 64, y + 15 * l / 64})
      CHECK((u(pt(x, t + h)) - u(pt(x, t - h))) == 0);
  }
  CHECK_THROWS(test_function(apartment(DyadicCube{2, 0, {0, 0, 0}}, 2), 2, 1));
  CHECK_THROWS(test_function(apartment(DyadicCube{2, 0, {0, 0, 0}}, 2), 1, 0.5));
}

TEST_CASE("integral of |u|^q: closed form against midpoint quadrature") {
  // s = 1.5 keeps the passage wide enough to grid: l = 1/8, w = 2^-9.
  const auto a = apartment(DyadicCube{2, 3, {2, 5, 0}}, 1.5);
  REQUIRE(a.w == std::ldexp(1.0, -9));
  for (double q : {1.0, 2.0, 3.5}) {
    const auto u = test_function(a, 1, q);
    const int N = 1024;  // pitch w/4
    const double hq = a.l / N;
    long double sum = 0;
    for (int i = 0; i < N; ++i)
      for (int j = 0; j < N; ++j) {
        const double v = u(pt(a.cube.lo[0] + (i + 0.5) * hq, a.cube.lo[1] + (j + 0.5) * hq));
        if (v != 0) sum += std::pow(std::abs(v), q);
      }
    const double quad = double(sum) * hq * hq;
    // The midpoint rule is exact on the plateaus and, for q = 1, on the ramp.
    CHECK(u.integral_q() == Approx(quad).epsilon(q == 1 ? 1e-12 : 1e-5));
  }
}

TEST_CASE("s-version rescaling and membership") {
  const auto b = square(5);
  const auto g2 = build_s_version(b.w, 2, b.d.center());
  CHECK(g2.scale_exponent() == 0);
  const auto g12 = build_s_version(b.w, 1.2, b.d.center());
  CHECK(g12.scale_exponent() == 7);
  CHECK_THROWS(build_s_version(b.w, 1.0, b.d.center()));

  for (const auto* g : {&g2, &g12}) {
    const auto& W = g->base();
    for (std::size_t i = 0; i < W.size(); ++i) {
      if (i == W.root_id) continue;
      const auto& a = *g->apartment_at(i);
      REQUIRE(w_restr_holds(a.l, g->s()));
      CHECK(g->contains(a.x));
      Point mouth = a.x;
      mouth[1] = a.room.hi[1];
      CHECK(g->contains(mouth));
      Point wall = a.x;
      wall[1] = a.room.hi[1];
      wall[0] -= a.l / 16;  // on the top face, outside the mouth
      CHECK_FALSE(g->contains(wall));
      CHECK(g->clearance(a.x) == Approx(a.l / 8));
    }
    CHECK(g->contains(g->center()));
  }
  CHECK(g12.measure() == Approx(b.w.covered_measure * std::ldexp(1.0, -14)));
}

TEST_CASE("v_m selection and A_m") {
  const auto b = square(9);
  const auto g = build_s_version(b.w, 2, b.d.center());
  const auto v = build_vm(g, 6, 1, 1, 1);
  REQUIRE(v.m() == 6);
  std::set<std::size_t> used;
  for (std::size_t k = 0; k < v.gens.size(); ++k) {
    const auto& gen = v.gens[k];
    CHECK(gen.j == int(k) + 4);
    CHECK(gen.M == (std::uint64_t(1) << (gen.j - 1)));
    CHECK(gen.cubes.size() == 2 * gen.M);
    CHECK(std::is_sorted(gen.cubes.begin(), gen.cubes.end()));
    for (auto c : gen.cubes) {
      CHECK(c != g.base().root_id);
      CHECK(g.base().cubes[c].generation == gen.j);
      CHECK(used.insert(c).second);
    }
  }
  CHECK(v(g.apartment_at(v.gens[0].cubes.front())->x) == Approx(16));
  CHECK(v(g.apartment_at(v.gens[0].cubes.back())->x) == Approx(-16));

  const auto A = compute_Am(v, 1);
  CHECK(A.mean == 0);
  double prev = 0;
  for (std::size_t m = 1; m <= 6; ++m) {
    const auto Am = compute_Am(v.prefix(m), 1);
    CHECK(Am.Aq > prev);
    prev = Am.Aq;
    // Rooms alone give 2^{1-k0}/16 per generation.
    CHECK(Am.per_generation.back() == Approx(1.0 / 16).epsilon(0.01));
    CHECK(Am.per_generation.back() >= 1.0 / 16);
    // Lower bound m * 2 * 2^{lambda(j-k0)-1} * 2^{-j(lambda-n)} 4^-n 2^{-jn}, at the largest j.
    const int j = v.gens[m - 1].j;
    CHECK(Am.Aq >= double(m) * 2 * std::exp2(j - 1 - 1) * std::exp2(j) / 16 * std::exp2(-2 * j));
  }

  CHECK(error_code([&] { build_vm(g, 7, 1, 1, 1); }) == "not-enough-cubes");
  const auto shuffled = build_vm(g, 2, 1, 1, 1, 7);
  CHECK(shuffled.gens[1].cubes != v.gens[1].cubes);
  CHECK(compute_Am(shuffled, 1).Aq == Approx(compute_Am(v.prefix(2), 1).Aq).epsilon(1e-12));
}

TEST_CASE("locality: differing pairs in admissible balls lie in one passage") {
  const auto b = square(5);
  const auto g = build_s_version(b.w, 2, b.d.center());
  const std::size_t id = 1 == b.w.root_id ? 2 : 1;
  const auto& a = *g.apartment_at(id);
  const auto u = test_function(a, 1, 1);
  Rng rng(11);
  int differing = 0, violations = 0;
  for (int k = 0; k < 200000; ++k) {
    Point x{};
    // Half the samples in the whole cube, half near the tiny passage.
    const Box& box = k % 2 ? a.cube : a.passage;
    for (int i = 0; i < 2; ++i) x[i] = box.lo[i] + uniform01(rng) * box.extent(i);
    if (!g.contains(x)) continue;
    const double r = g.clearance(x);
    Point y{};
    double t = 2 * std::acos(-1.0) * uniform01(rng), rho = r * std::sqrt(uniform01(rng));
    y[0] = x[0] + rho * std::cos(t);
    y[1] = x[1] + rho * std::sin(t);
    if (u(x) == u(y)) continue;
    ++differing;
    if (!a.in_passage(x) || !a.in_passage(y)) ++violations;
  }
  CHECK(differing > 1000);
  CHECK(violations == 0);
}

TEST_CASE("B_m for one passage against deterministic quadrature") {
  const auto b = square(5);
  const auto g = build_s_version(b.w, 2, b.d.center());
  const auto e = sharp_set();
  auto v = build_vm(g, 1, 1, 1, 1);
  v.gens[0].cubes.resize(1);
  v.gens[0].M = 1;
  const auto& a = *g.apartment_at(v.gens[0].cubes[0]);
  const auto u = test_function(a, 1, 1);

  // Midpoint rule in x (over the slab) and polar (rho, theta) around x.
  const double lo = a.tiny.lo[1] - a.w, hi = a.tiny.hi[1] + a.w;
  const int nx = 32, ny = 96, nr = 48, nt = 64;
  long double sum = 0;
  for (int i = 0; i < nx; ++i)
    for (int j = 0; j < ny; ++j) {
      const Point x = pt(a.passage.lo[0] + (i + 0.5) * 2 * a.w / nx, lo + (j + 0.5) * (hi - lo) / ny);
      const double R = a.w - std::abs(x[0] - a.x[0]);
      for (int r = 0; r < nr; ++r) {
        const double rho = (r + 0.5) * R / nr;
        for (int t = 0; t < nt; ++t) {
          const double th = (t + 0.5) * 2 * std::acos(-1.0) / nt;
          const double d = u(x) - u(pt(x[0] + rho * std::cos(th), x[1] + rho * std::sin(th)));
          // |du|^2 / rho^{n + delta p} times the polar Jacobian rho.
          sum += d * d / (rho * rho) * (R / nr) * (2 * std::acos(-1.0) / nt);
        }
      }
    }
  const double quad = double(sum) * (2 * a.w / nx) * ((hi - lo) / ny);

  BmOptions opt;
  opt.target_rel = 0.002;
  const auto B = compute_Bm(v, e, 3, opt);
  REQUIRE(B.converged);
  CHECK(std::abs(B.Bp - quad) <= 3 * B.stderr_p + 0.01 * quad);

  // Self-consistency: two seeds agree within their errors; quadrupled
  // samples halve the error.
  BmOptions loose;
  loose.target_rel = 0;
  loose.max_rounds = 1;
  const auto b1 = compute_Bm(v, e, 5, loose);
  loose.initial_samples *= 4;
  const auto b4 = compute_Bm(v, e, 5, loose);
  CHECK(b4.stderr_p / b1.stderr_p == Approx(0.5).margin(0.1));
  CHECK(std::abs(b1.Bp - B.Bp) <= 3 * std::hypot(b1.stderr_p, B.stderr_p));
  CHECK(B.paper_bound > 0);
  CHECK(error_code([&] { compute_Bm(v, e, std::nullopt); }) == "missing-seed");
}

TEST_CASE("sharpness: A_m / B_m grows like m^{1/q - 1/p}") {
  const auto b = square(9);
  const auto g = build_s_version(b.w, 2, b.d.center());
  const auto e = sharp_set();
  std::vector<double> slopes;
  for (std::uint64_t seed : {42, 7, 2024}) {
    const auto r = sharpness_experiment(g, e, 6, seed);
    CHECK(r.pass);
    CHECK(r.slope >= 0.4);
    CHECK(r.max_rel_stderr <= 0.02);
    for (std::size_t i = 1; i < r.rows.size(); ++i) CHECK(r.rows[i].ratio > r.rows[i - 1].ratio);
    slopes.push_back(r.slope);
  }
  CHECK(*std::max_element(slopes.begin(), slopes.end()) - *std::min_element(slopes.begin(), slopes.end()) <= 0.05);
  CHECK(error_code([&] { sharpness_experiment(g, sharp_set(2, 2), 6, 42); }) == "wrong-regime");
}

TEST_CASE("s-John paths of G_2") {
  const auto b = square(7);
  const auto g = build_s_version(b.w, 2, b.d.center());
  const auto paths = sversion_john_paths(g);
  CHECK(paths.size() == b.w.size() - 1);
  int outside = 0;
  for (const auto& p : paths)
    for (std::size_t i = 0; i + 1 < p.pts.size(); ++i)
      for (double f : {0.25, 0.5, 0.75}) {
        Point m{};
        for (int k = 0; k < 2; ++k) m[k] = p.pts[i][k] + f * (p.pts[i + 1][k] - p.pts[i][k]);
        outside += !g.contains(m);
      }
  CHECK(outside == 0);
  const auto est = estimate_sjohn(g);
  CHECK(est.s_hat >= 1.8);
  CHECK(est.s_hat <= 2.2);
}

TEST_CASE("sigma condition on G_2 changes verdict across p* = 2") {
  const auto b = square(5);
  const auto g = build_s_version(b.w, 2, b.d.center());
  const auto w = whitney_decompose(g, 40);
  const auto cd = build_chain_decomposition(w, ChainStrategy::HopCount);
  const auto groups = base_generation_groups(g, w);
  const auto fin = eval_sigma_thm51(cd, sharp_set(3, 1), groups);
  const auto div = eval_sigma_thm51(cd, sharp_set(1.5, 1), groups);
  CHECK(fin.rows.size() == 3);
  CHECK(fin.verdict == Verdict::Finite);
  CHECK(div.verdict == Verdict::Diverging);
  CHECK(check_regime(sharp_set(3, 1)).regime == Regime::Positive);
  CHECK(check_regime(sharp_set(2, 1)).regime == Regime::Sharp);
}
