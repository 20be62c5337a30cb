#include <catch_amalgamated.hpp>

#include "fraclab/functional.hpp"

using namespace fraclab;
using Catch::Approx;

namespace {

double left_half(const Point& x) { return x[0] < 0.5 ? 1.0 : 0.0; }

// Naive quadruple loop over voxel centers of the unit square at pitch 2^-J,
// with an optional per-center radius.
template <typename R>
double square_oracle(int J, double p, double delta, const std::function<double(double, double)>& u, R&& radius) {
  const int m = 1 << J;
  const double h = 1.0 / m;
  long double s = 0;
  for (int a = 0; a < m; ++a)
    for (int b = 0; b < m; ++b)
      for (int c = 0; c < m; ++c)
        for (int d = 0; d < m; ++d) {
          if (a == c && b == d) continue;
          const double x0 = (a + 0.5) * h, x1 = (b + 0.5) * h, y0 = (c + 0.5) * h, y1 = (d + 0.5) * h;
          const double r = std::hypot(x0 - y0, x1 - y1);
          if (!(r < radius(x0, x1))) continue;
          s += std::pow(std::abs(u(x0, x1) - u(y0, y1)), (long double)p) / std::pow((long double)r, 2 + delta * p) *
               std::pow((long double)h, 4);
        }
  return double(s);
}

const auto kInf = [](double, double) { return std::numeric_limits<double>::infinity(); };

}  // namespace

TEST_CASE("oscillation norm") {
  auto d = make_domain(Preset::UnitCube, 2);
  auto c = GridFunction::sample(d, [](const Point&) { return 3.0; });
  CHECK(oscillation_norm(c, 2) == 0);
  auto u = GridFunction::sample(d, left_half);
  for (double q : {1.0, 2.0, 3.5}) CHECK(oscillation_norm(u, q) == Approx(std::pow(0.5, q)).epsilon(1e-15));
  auto v = GridFunction::sample(d, [](const Point& x) { return -2.5 * left_half(x) + 7; });
  CHECK(oscillation_norm(v, 3) == Approx(std::pow(2.5, 3) * oscillation_norm(u, 3)).epsilon(1e-14));
  CHECK_THROWS_AS(oscillation_norm(std::vector<double>{}, 1, 2, 1), Error);
}

TEST_CASE("exact-pairs seminorm against the quadruple loop") {
  auto d = distance_transform(make_domain(Preset::UnitCube, 2));
  auto u = GridFunction::sample(d, left_half);
  auto s = fractional_seminorm(u, 2, 0.5, FullLocal{});
  auto f = [](double x, double) { return x < 0.5 ? 1.0 : 0.0; };
  CHECK(s.value == Approx(square_oracle(2, 2, 0.5, f, kInf)).epsilon(1e-12));
  CHECK(s.pair_count == 16 * 15);
  CHECK(s.localization == "full");
  CHECK(fractional_seminorm(GridFunction::sample(d, [](const Point&) { return 1.0; }), 2, 0.5, FullLocal{}).value == 0);

  // Random u, localized, at 256 voxels; general p.
  auto d4 = distance_transform(make_domain(Preset::UnitCube, 4));
  Rng rng(7);
  std::vector<double> vals(d4.occupied_count());
  for (auto& v : vals) v = uniform01(rng);
  GridFunction r(d4, vals);
  auto lookup = [&](double x0, double x1) {
    auto f = d4.locate(Point{x0, x1, 0});
    const auto& occ = d4.occupied();
    return vals[std::size_t(std::lower_bound(occ.begin(), occ.end(), *f) - occ.begin())];
  };
  for (double tau : {0.5, 0.9}) {
    auto rad = [&](double x0, double x1) { return tau * std::min({x0, 1 - x0, x1, 1 - x1}); };
    CHECK(fractional_seminorm(r, 1.5, 0.3, TauLocal{tau}).value ==
          Approx(square_oracle(4, 1.5, 0.3, lookup, rad)).epsilon(1e-12));
  }
  CHECK(fractional_seminorm(r, 3, 0.7, FullLocal{}).value == Approx(square_oracle(4, 3, 0.7, lookup, kInf)).epsilon(1e-12));
}

TEST_CASE("seminorm invariants") {
  auto d = distance_transform(make_domain(Preset::LShape, 4));
  Rng rng(3);
  std::vector<double> vals(d.occupied_count()), scaled, shifted;
  for (auto& v : vals) v = uniform01(rng);
  for (double v : vals) {
    scaled.push_back(-2 * v);
    shifted.push_back(v + 0.25);
  }
  GridFunction u(d, vals), a(d, scaled), b(d, shifted);
  const auto s = fractional_seminorm(u, 2, 0.5, FullLocal{}).value;
  CHECK(fractional_seminorm(a, 2, 0.5, FullLocal{}).value == Approx(4 * s).epsilon(1e-14));
  CHECK(fractional_seminorm(b, 2, 0.5, FullLocal{}).value == Approx(s).epsilon(1e-13));
  const double t1 = fractional_seminorm(u, 2, 0.5, TauLocal{0.3}).value;
  const double t2 = fractional_seminorm(u, 2, 0.5, TauLocal{0.6}).value;
  CHECK(t1 <= t2);
  CHECK(t2 < s);
  auto half = GridFunction::sample(d, left_half);
  CHECK(fractional_seminorm(half, 2, 0.5, TauLocal{0.5}).value < fractional_seminorm(half, 2, 0.5, FullLocal{}).value);
  CHECK_THROWS_AS(fractional_seminorm(u, 0.5, 0.5, FullLocal{}), Error);
  CHECK_THROWS_AS(fractional_seminorm(u, 2, 1.0, FullLocal{}), Error);
  CHECK_THROWS_AS(fractional_seminorm(u, 2, 0.5, TauLocal{1.0}), Error);
}

TEST_CASE("poincare ratio") {
  auto d = distance_transform(make_domain(Preset::UnitCube, 3));
  ExponentSet e;
  e.p = e.q = 2;
  e.delta = 0.5;
  e.tau = 0.9;
  auto u = GridFunction::sample(d, left_half);
  const double r = poincare_ratio(u, e);
  auto f = [](double x, double) { return x < 0.5 ? 1.0 : 0.0; };
  auto rad = [](double x0, double x1) { return 0.9 * std::min({x0, 1 - x0, x1, 1 - x1}); };
  CHECK(r == Approx(0.25 / square_oracle(3, 2, 0.5, f, rad)).epsilon(1e-12));
  CHECK(r > 0);
  auto v = GridFunction::sample(d, [](const Point& x) { return 3 - 5 * left_half(x); });
  CHECK(poincare_ratio(v, e) == Approx(r).epsilon(1e-13));
  CHECK_THROWS_AS(poincare_ratio(GridFunction::sample(d, [](const Point&) { return 1.0; }), e), Error);
  // Refinement changes the ratio deterministically.
  auto d4 = distance_transform(make_domain(Preset::UnitCube, 4));
  const double r4 = poincare_ratio(GridFunction::sample(d4, left_half), e);
  CHECK(r4 == poincare_ratio(GridFunction::sample(d4, left_half), e));
  CHECK(std::isfinite(r4 / r));
}

TEST_CASE("monte carlo seminorm") {
  auto lin = [](const Point& x) { return x[0]; };
  MonteCarloOptions opt;
  opt.samples = 1 << 17;
  auto d5 = distance_transform(make_domain(Preset::UnitCube, 5));
  CHECK_THROWS_AS(fractional_seminorm_mc(d5, lin, 2, 0.5, FullLocal{}, opt), Error);
  opt.seed = 11;
  auto mc = fractional_seminorm_mc(d5, lin, 2, 0.5, TauLocal{0.5}, opt);
  CHECK(mc.method == SeminormMethod::MonteCarlo);
  CHECK(mc.std_error < 0.005 * mc.value);
  CHECK(fractional_seminorm_mc(d5, lin, 2, 0.5, TauLocal{0.5}, opt).value == mc.value);
  // The exact-pairs discretization approaches the continuous value at rate h.
  std::vector<double> gap;
  for (int J : {5, 6, 7}) {
    auto d = distance_transform(make_domain(Preset::UnitCube, J));
    gap.push_back(mc.value - fractional_seminorm(GridFunction::sample(d, lin), 2, 0.5, TauLocal{0.5}).value);
  }
  for (std::size_t k = 1; k < gap.size(); ++k) {
    CHECK(gap[k] > 0);
    CHECK(gap[k] / gap[k - 1] == Approx(0.5).margin(0.1));
  }
  CHECK(gap.back() < 0.06 * mc.value);
}

TEST_CASE("constant estimation") {
  // Two voxels, full interaction: L = [[w, -w], [-w, w]], w = 2 h^{2n} / h^{n + 2 delta},
  // osc = h^n |u|^2 on mean-zero u, so c = h^n / (2w) = h^{2 delta} / 4.
  VoxelDomain two(2, 3, IPoint{0, 0, 0}, IPoint{2, 1, 1}, {1, 1});
  ExponentSet e;
  e.p = e.q = 2;
  e.delta = 0.5;
  auto r = estimate_constant(two, e, EstimateMethod::Eig, 1, 1, Localization{FullLocal{}});
  CHECK(r.value == Approx(std::pow(0.125, 2 * 0.5) / 4).epsilon(1e-14));
  auto ra = estimate_constant(two, e, EstimateMethod::Ascent, 2, 5, Localization{FullLocal{}});
  CHECK(ra.value == Approx(r.value).epsilon(1e-12));
  CHECK_THROWS_AS(estimate_constant(two, e, EstimateMethod::Eig), Error);  // tau: no pairs

  e.tau = 0.9;
  std::vector<double> by_res;
  for (int J : {4, 5}) {
    auto d = distance_transform(make_domain(Preset::UnitCube, J));
    auto eig = estimate_constant(d, e, EstimateMethod::Eig);
    CHECK(eig.isolated_voxels == 4);  // the corner voxels
    by_res.push_back(eig.value);
    Rng rng(J);
    for (int t = 0; t < 100; ++t) {
      std::vector<double> v(d.occupied_count());
      for (auto& x : v) x = uniform01(rng);
      // Random functions off the corner voxels.
      std::size_t k = 0;
      for (auto flat : d.occupied()) {
        const Point x = d.voxel_center(flat);
        const double m = std::min({x[0], 1 - x[0], x[1], 1 - x[1]});
        const double mm = std::max({std::min(x[0], 1 - x[0]), std::min(x[1], 1 - x[1])});
        if (m < d.pitch() && mm < d.pitch()) v[k] = 0.5;
        ++k;
      }
      CHECK(poincare_ratio(GridFunction(d, v), e) <= eig.value * (1 + 1e-12));
    }
    if (J == 4) {
      auto asc = estimate_constant(d, e, EstimateMethod::Ascent, 4, 1);
      CHECK(asc.converged);
      CHECK(asc.value <= eig.value * (1 + 1e-9));
      CHECK(asc.value >= 0.98 * eig.value);
    }
  }
  CHECK(std::abs(by_res[0] - by_res[1]) <= 0.2 * std::max(by_res[0], by_res[1]));
}

TEST_CASE("cube lemma") {
  ExponentSet e;
  e.p = 2;
  e.q = 1;
  e.delta = 0.5;
  const DyadicCube Q{2, 0, {0, 0, 0}};
  auto r = cube_lemma_check(Q, e, 0.9, 16, 3, 4);
  CHECK(r.k == 3);
  CHECK(std::isfinite(r.value));
  CHECK(r.value > 0);
  double lo = r.value, hi = r.value;
  for (int J : {5, 6}) {
    auto rj = cube_lemma_check(Q, e, 0.9, 16, 3, J);
    lo = std::min(lo, rj.value);
    hi = std::max(hi, rj.value);
  }
  CHECK(hi <= 2 * lo);
  // Scale invariance of the normalized ratio.
  auto small = cube_lemma_check(DyadicCube{2, 3, {1, 2, 0}}, e, 0.9, 16, 3, 4);
  CHECK(small.value == Approx(r.value).epsilon(1e-10));
}

TEST_CASE("log distance integral") {
  // Hyperplane x_2 = 0 through the unit disk: 4 int_0^1 sqrt(1 - t^2) log(1/t) dt
  // = 4 int_0^{pi/2} cos^2(th) log(1/sin th) d th = pi (log 2 + 1/2).
  const double ref = std::numbers::pi * (std::log(2.0) + 0.5);
  PointSet line{2, {}, {Segment{Point{-2, 0, 0}, Point{2, 0, 0}}}};
  auto li = log_distance_integral(line, Point{0, 0, 0}, 1, 1);
  CHECK(li.value == Approx(ref).epsilon(0.02));

  auto sq = PointSet::box_boundary(Box{2, {0, 0, 0}, {1, 1, 0}});
  std::vector<double> ratios;
  for (int k = 0; k <= 6; ++k) ratios.push_back(log_distance_integral(sq, Point{0, 0, 0}, std::ldexp(1.0, -k), 1).ratio);
  CHECK(*std::max_element(ratios.begin(), ratios.end()) <= 2 * *std::min_element(ratios.begin(), ratios.end()));
  for (double p : {1.0, 2.0, 4.0}) CHECK(std::isfinite(log_distance_integral(sq, Point{0, 0, 0}, 0.5, p).value));
  CHECK(log_distance_integral(sq, Point{0, 0, 0}, 0.5, 1).excluded_measure == 0);
  CHECK_THROWS_AS(log_distance_integral(sq, Point{0, 0, 0}, 2, 1), Error);
}
