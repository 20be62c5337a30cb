#include <catch_amalgamated.hpp>

#include "fraclab/conditions.hpp"
#include "fraclab/geometry.hpp"

using namespace fraclab;
using Catch::Approx;

namespace {

struct Fixture {
  WhitneyDecomposition w;
  ChainDecomposition cd;
};

Fixture square(int J) {
  auto d = make_domain(Preset::UnitCube, J);
  auto w = whitney_decompose(d, J);
  auto cd = build_chain_decomposition(w, ChainStrategy::HopCount);
  return {std::move(w), std::move(cd)};
}

ChainDecomposition single_cube(WhitneyDecomposition& w, double side_gen) {
  w = from_cubes({DyadicCube{2, int(side_gen), {0, 0, 0}}}, 2, int(side_gen), Point{0.25, 0.25, 0}, 0.25);
  return build_chain_decomposition(w, ChainStrategy::HopCount);
}

ExponentSet ex(double p, double q, double delta = 0.5) {
  ExponentSet e;
  e.p = p;
  e.q = q;
  e.delta = delta;
  return e;
}

}  // namespace

TEST_CASE("single cube closed forms") {
  WhitneyDecomposition w;
  auto cd = single_cube(w, 1);  // |Q0| = 1/4
  const double v = 0.25;
  for (auto [p, q] : {std::pair{2.0, 1.0}, {3.0, 1.5}, {1.5, 1.0}}) {
    auto e = ex(p, q, 0.3);
    auto r = eval_sharpe_sum(cd, e);
    CHECK(r.value == Approx(std::pow(v, (1 + q * (0.3 / 2 - 1 / p)) * p / (p - q))).epsilon(1e-14));
  }
  CHECK(eval_pp_sup(cd, ex(2, 2)).value == Approx(std::pow(v, 2 * 0.5 / 2)).epsilon(1e-14));
  CHECK(eval_classical_condition(cd, 3).value == Approx(std::pow(v, 3.0 / 2)).epsilon(1e-14));
  CHECK_THROWS_AS(eval_sharpe_sum(cd, ex(2, 2)), Error);
  CHECK_THROWS_AS(eval_sharpe_sum(cd, ex(2, 3)), Error);
  CHECK_THROWS_AS(eval_pp_sup(cd, ex(2, 1)), Error);
  CHECK_THROWS_AS(eval_sigma_thm51(cd, ex(2, 1.5)), Error);
}

TEST_CASE("sharpe sum against a brute-force double loop") {
  auto f = square(6);
  const auto e = ex(2, 1);
  auto r = eval_sharpe_sum(f.cd, e);
  CHECK(r.verdict == Verdict::Finite);
  for (double q : {1.0, 1.5}) {
    auto eq = ex(2.5, q, 0.4);
    auto rq = eval_sharpe_sum(f.cd, eq);
    // Oracle: membership of A in the chain of every Q, long double accumulation.
    const std::size_t N = f.w.size();
    std::vector<long double> inner(N, 0);
    for (std::size_t Q = 0; Q < N; ++Q) {
      const auto chain = f.cd.chain(Q);
      const long double len = std::max<long double>(chain.size() - 1, 1);
      for (auto A : chain) inner[A] += std::pow(len, (long double)q - 1) * f.w.cubes[Q].volume();
    }
    long double total = 0;
    for (std::size_t A = 0; A < N; ++A)
      total += std::pow(inner[A] * std::pow((long double)f.w.cubes[A].volume(), (long double)q * (0.4L / 2 - 1 / 2.5L)),
                        2.5L / (2.5L - q));
    CHECK(rq.value == Approx(double(total)).epsilon(1e-12));
  }
  // Per-generation partial sums are non-decreasing and end at the value.
  for (std::size_t i = 1; i < r.rows.size(); ++i) CHECK(r.rows[i].partial >= r.rows[i - 1].partial);
  CHECK(r.rows.back().partial == Approx(r.value).epsilon(1e-15));
}

TEST_CASE("condition sums grow with J_max") {
  const auto e = ex(2, 1);
  double prev_s = 0, prev_pp = 0;
  std::vector<double> sups;
  for (int J = 4; J <= 8; ++J) {
    auto f = square(J);
    const double s = eval_sharpe_sum(f.cd, e).value;
    CHECK(s >= prev_s);
    prev_s = s;
    auto pp = eval_pp_sup(f.cd, ex(2, 2));
    CHECK(pp.value >= prev_pp);
    CHECK(pp.verdict != Verdict::Diverging);
    prev_pp = pp.value;
    if (J >= 5) sups.push_back(pp.value);
    // The sup dominates the root term.
    CHECK(pp.value >= pp.terms[f.w.root_id]);
    CHECK(pp.value == pp.terms[*pp.argmax]);
  }
  // Bounded trajectory across J_max = 5..8: the growth shrinks geometrically.
  for (std::size_t i = 2; i < sups.size(); ++i) CHECK(sups[i] - sups[i - 1] < 0.9 * (sups[i - 1] - sups[i - 2]));
}

TEST_CASE("sigma equals the q = 1 sharpe sum") {
  auto f = square(7);
  for (double p : {1.5, 2.0, 4.0}) {
    auto e = ex(p, 1, 0.7);
    auto a = eval_sharpe_sum(f.cd, e);
    auto b = eval_sigma_thm51(f.cd, e);
    CHECK(a.value == b.value);
    CHECK(a.terms == b.terms);
  }
}

TEST_CASE("termwise comparisons") {
  auto f = square(6);
  // Classical terms are dominated by fractional ones for |A| <= 1.
  for (double delta : {0.1, 0.5, 0.9}) {
    auto fr = eval_pp_sup(f.cd, ex(2, 2, delta));
    auto cl = eval_classical_condition(f.cd, 2);
    for (std::size_t a = 0; a < f.w.size(); ++a) CHECK(cl.terms[a] <= fr.terms[a] * (1 + 1e-15));
  }
  // p = 1: the classical sum is the shadow volume times |A|^{1/n - 1}.
  auto c1 = eval_classical_condition(f.cd, 1);
  for (std::size_t a = 0; a < f.w.size(); ++a)
    CHECK(c1.terms[a] == Approx(f.cd.shadow_volumes()[a] * std::pow(f.w.cubes[a].volume(), -0.5)).epsilon(1e-14));
  // Raising delta raises the exponent on |A| <= 1, so every term shrinks.
  auto lo = eval_sharpe_sum(f.cd, ex(3, 1, 0.2));
  auto hi = eval_sharpe_sum(f.cd, ex(3, 1, 0.6));
  for (std::size_t a = 0; a < f.w.size(); ++a) CHECK(hi.terms[a] <= lo.terms[a]);
  CHECK(hi.value <= lo.value);
}

TEST_CASE("verdict rule") {
  ConditionReport r;
  auto run = [&](std::vector<double> inc) {
    r.rows.clear();
    double acc = 0;
    for (std::size_t i = 0; i < inc.size(); ++i) r.rows.push_back({int(i), inc[i], acc += inc[i]});
    detail::diagnose(r);
    return r.verdict;
  };
  CHECK(run({1, 0.5, 0.25, 0.125}) == Verdict::Finite);
  CHECK(r.tail_estimate == Approx(0.125));
  CHECK(run({1, 1, 1, 1}) == Verdict::Diverging);
  CHECK(run({1, 2, 4}) == Verdict::Diverging);
  CHECK(run({1, 0.95, 0.5}) == Verdict::Inconclusive);
  CHECK(run({3, 0, 0}) == Verdict::Finite);
  CHECK(run({1, 0.5}) == Verdict::Inconclusive);
}

TEST_CASE("regime classification") {
  ExponentSet e;
  e.n = 2;
  e.lambda = 1;
  e.delta = 0.5;
  e.s = 2;
  e.q = 1;
  e.p = 3;
  auto r = check_regime(e);
  CHECK(r.s_bound == 4);
  CHECK(r.s_ok);
  CHECK(*r.p_star == 2);
  CHECK(r.regime == Regime::Positive);
  CHECK(std::string(to_string(r.regime)) == "thm51-positive");
  e.p = 2;
  r = check_regime(e);
  CHECK(r.regime == Regime::Sharp);
  CHECK(r.rels_lhs == 0);
  CHECK(r.rels_rhs == 0);
  CHECK(r.rels_holds);

  // Positive and sharp partition p > 1 at p*.
  for (double p = 1.05; p < 6; p += 0.05) {
    e.p = p;
    auto rr = check_regime(e);
    CHECK((rr.regime == Regime::Positive) == (p > 2));
    CHECK((rr.regime == Regime::Sharp) == (p <= 2));
  }

  // s beyond the bound.
  e.s = 4;
  CHECK(check_regime(e).regime == Regime::Outside);
  // Vanishing threshold denominator: n - s(1 - delta) - lambda + 1 = 0.
  e.s = 2;
  e.delta = 0.5;
  e.lambda = 1.5;
  e.n = 2;
  // 2 - 1 - 1.5 + 1 = 0.5; pick s = 3 instead: 2 - 1.5 - 1.5 + 1 = 0.
  e.s = 3;
  r = check_regime(e);
  CHECK(r.boundary_case);
  CHECK(r.regime == Regime::Outside);

  ExponentSet j;
  j.n = 2;
  j.s = 1;
  j.p = j.q = 2;
  j.delta = 0.5;
  CHECK(check_regime(j).regime == Regime::HoldsPP);
  CHECK(std::string(to_string(check_regime(j).regime)) == "inequality-holds-by-thm42");
  j.q = 2.5;  // np/(n - delta p) = 4
  CHECK(check_regime(j).regime == Regime::HoldsSobolev);
  j.q = 4.5;
  CHECK(check_regime(j).regime == Regime::Outside);
  j.delta = 1.5;
  CHECK_THROWS_AS(check_regime(j), Error);
}
