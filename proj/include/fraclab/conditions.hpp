#pragma once

// Sufficient-condition sums over a chain decomposition and the parameter
// regime classifier.

#include <optional>
#include <span>
#include <string>

#include "fraclab/chains.hpp"

namespace fraclab {

struct ExponentSet {
  int n = 2;
  double p = 2, q = 1;
  double delta = 0.5;
  double tau = 0.5;
  double s = 1;
  double lambda = 1;

  void validate() const {
    if (n < 1 || n > kMaxDim) fail("bad-exponents", "n must be in [1, ", kMaxDim, "], got ", n);
    if (!(p >= 1) || !std::isfinite(p)) fail("bad-exponents", "p must be in [1, inf), got ", p);
    if (!(q >= 1) || !std::isfinite(q)) fail("bad-exponents", "q must be in [1, inf), got ", q);
    if (!(delta > 0 && delta < 1)) fail("bad-exponents", "delta must be in (0, 1), got ", delta);
    if (!(tau > 0 && tau < 1)) fail("bad-exponents", "tau must be in (0, 1), got ", tau);
    if (!(s >= 1)) fail("bad-exponents", "s must be >= 1, got ", s);
    if (!(lambda >= n - 1 && lambda < n)) fail("bad-exponents", "lambda must be in [n-1, n), got ", lambda);
  }
};

enum class Verdict { Finite, Diverging, Inconclusive };

inline const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::Finite: return "finite";
    case Verdict::Diverging: return "diverging";
    default: return "inconclusive";
  }
}

struct GenerationRow {
  int generation = 0;
  double increment = 0;  // sum of the generation's terms, or growth of the running sup
  double partial = 0;    // running sum or running sup
};

struct ConditionReport {
  std::string kind;
  double value = 0;
  std::vector<GenerationRow> rows;
  double tail_estimate = 0;  // geometric extrapolation of the remaining increments
  Verdict verdict = Verdict::Inconclusive;
  std::optional<std::size_t> argmax;  // sup reports only
  std::vector<double> terms;          // per cube A
};

namespace detail {

// Finite if the last three increments decay geometrically with ratio < 0.9
// (vanishing increments count as decay), diverging if they do not shrink.
inline void diagnose(ConditionReport& r) {
  const auto& g = r.rows;
  r.verdict = Verdict::Inconclusive;
  r.tail_estimate = 0;
  if (g.size() < 3) return;
  const double a = g[g.size() - 3].increment, b = g[g.size() - 2].increment, c = g.back().increment;
  auto ratio = [](double x, double y) { return y == 0 ? 0.0 : (x == 0 ? std::numeric_limits<double>::infinity() : y / x); };
  const double r1 = ratio(a, b), r2 = ratio(b, c);
  if (r1 < 0.9 && r2 < 0.9) {
    r.verdict = Verdict::Finite;
    r.tail_estimate = c * r2 / (1 - r2);
  } else if (r1 >= 1 && r2 >= 1) {
    r.verdict = Verdict::Diverging;
    r.tail_estimate = std::numeric_limits<double>::infinity();
  }
}

inline int group_of(const WhitneyDecomposition& w, std::span<const int> groups, std::size_t a) {
  return groups.empty() ? w.cubes[a].generation : groups[a];
}

inline ConditionReport summed(const ChainDecomposition& cd, std::vector<double> terms, std::span<const int> groups,
                              std::string kind) {
  const auto& w = cd.whitney();
  if (!groups.empty() && groups.size() != w.size()) fail("bad-groups", "group map size mismatch");
  std::map<int, CompensatedSum> per;
  CompensatedSum total;
  for (std::size_t a = 0; a < terms.size(); ++a) {
    per[group_of(w, groups, a)] += terms[a];
    total += terms[a];
  }
  ConditionReport r;
  r.kind = std::move(kind);
  double run = 0;
  CompensatedSum acc;
  for (auto& [j, s] : per) {
    acc.merge(s);
    run = acc.value();
    r.rows.push_back({j, s.value(), run});
  }
  r.value = total.value();
  r.terms = std::move(terms);
  diagnose(r);
  return r;
}

inline ConditionReport supped(const ChainDecomposition& cd, std::vector<double> terms, std::span<const int> groups,
                              std::string kind) {
  const auto& w = cd.whitney();
  if (!groups.empty() && groups.size() != w.size()) fail("bad-groups", "group map size mismatch");
  std::map<int, std::pair<double, std::size_t>> per;
  for (std::size_t a = 0; a < terms.size(); ++a) {
    auto [it, fresh] = per.try_emplace(group_of(w, groups, a), terms[a], a);
    if (!fresh && terms[a] > it->second.first) it->second = {terms[a], a};
  }
  ConditionReport r;
  r.kind = std::move(kind);
  double run = 0;
  for (const auto& [j, best] : per) {
    const double next = std::max(run, best.first);
    if (!r.argmax || best.first > run) r.argmax = best.second;
    r.rows.push_back({j, next - run, next});
    run = next;
  }
  r.value = run;
  r.terms = std::move(terms);
  diagnose(r);
  // The first row's increment is the sup itself; decay is judged on growth.
  return r;
}

// Chain lengths enter through max(l, 1) so the root chain (length 0) keeps a
// finite weight for every exponent.
inline double chain_weight(const ChainDecomposition& cd, std::size_t q, double e) {
  return std::pow(std::max<double>(cd.length(q), 1.0), e);
}

}  // namespace detail

/// Sum over A of (sum_{Q in A(W)} l^{q-1} |Q| |A|^{q(delta/n - 1/p)})^{p/(p-q)}.
inline ConditionReport eval_sharpe_sum(const ChainDecomposition& cd, const ExponentSet& e,
                                       std::span<const int> groups = {}) {
  e.validate();
  if (!(e.q < e.p)) fail("wrong-condition", "requires q < p (got q=", e.q, ", p=", e.p, "); use eval_pp_sup");
  const auto& w = cd.whitney();
  const auto inner = cd.shadow_sums([&](std::size_t q) { return detail::chain_weight(cd, q, e.q - 1) * w.cubes[q].volume(); });
  const double ea = e.q * (e.delta / e.n - 1 / e.p), outer = e.p / (e.p - e.q);
  std::vector<double> terms(w.size());
  for (std::size_t a = 0; a < w.size(); ++a) terms[a] = std::pow(inner[a] * std::pow(w.cubes[a].volume(), ea), outer);
  return detail::summed(cd, std::move(terms), groups, "sharpe");
}

namespace detail {

inline ConditionReport pp_like(const ChainDecomposition& cd, double p, double ea, std::span<const int> groups,
                               std::string kind) {
  const auto& w = cd.whitney();
  const auto inner = cd.shadow_sums([&](std::size_t q) { return chain_weight(cd, q, p - 1) * w.cubes[q].volume(); });
  std::vector<double> terms(w.size());
  for (std::size_t a = 0; a < w.size(); ++a) terms[a] = inner[a] * std::pow(w.cubes[a].volume(), ea);
  return supped(cd, std::move(terms), groups, std::move(kind));
}

}  // namespace detail

/// sup over A of sum_{Q in A(W)} l^{p-1} |Q| |A|^{p delta/n - 1}.
inline ConditionReport eval_pp_sup(const ChainDecomposition& cd, const ExponentSet& e,
                                   std::span<const int> groups = {}) {
  e.validate();
  if (e.p != e.q) fail("wrong-condition", "requires p = q (got q=", e.q, ", p=", e.p, ")");
  return detail::pp_like(cd, e.p, e.p * e.delta / e.n - 1, groups, "pp");
}

/// The classical counterpart: exponent p/n - 1 on |A|.
inline ConditionReport eval_classical_condition(const ChainDecomposition& cd, double p,
                                                std::span<const int> groups = {}) {
  if (!(p >= 1) || !std::isfinite(p)) fail("bad-exponents", "p must be in [1, inf), got ", p);
  return detail::pp_like(cd, p, p / cd.whitney().n - 1, groups, "classical");
}

/// Sum over A of (|union A(W)| |A|^{delta/n - 1/p})^{p/(p-1)}, from shadow volumes.
inline ConditionReport eval_sigma_thm51(const ChainDecomposition& cd, const ExponentSet& e,
                                        std::span<const int> groups = {}) {
  e.validate();
  if (!(e.q == 1 && e.p > 1)) fail("wrong-condition", "requires q = 1 < p (got q=", e.q, ", p=", e.p, ")");
  const auto& w = cd.whitney();
  const auto& sv = cd.shadow_volumes();
  const double ea = e.delta / e.n - 1 / e.p, outer = e.p / (e.p - 1);
  std::vector<double> terms(w.size());
  for (std::size_t a = 0; a < w.size(); ++a) terms[a] = std::pow(sv[a] * std::pow(w.cubes[a].volume(), ea), outer);
  return detail::summed(cd, std::move(terms), groups, "sigma");
}

// ---------------------------------------------------------------------------
// Regimes

enum class Regime { Positive, Sharp, HoldsPP, HoldsSobolev, Outside };

inline const char* to_string(Regime r) {
  switch (r) {
    case Regime::Positive: return "thm51-positive";
    case Regime::Sharp: return "thm64-sharp";
    case Regime::HoldsPP: return "inequality-holds-by-thm42";
    case Regime::HoldsSobolev: return "inequality-holds-by-thm46";
    default: return "outside";
  }
}

struct RegimeReport {
  Regime regime = Regime::Outside;
  double s_bound = 0;   // (n + 1 - lambda) / (1 - delta)
  bool s_ok = false;
  std::optional<double> p_star;  // absent when the denominator vanishes
  bool boundary_case = false;
  double rels_lhs = 0, rels_rhs = 0;
  bool rels_holds = false;
};

inline double p_threshold_denominator(const ExponentSet& e) { return e.n - e.s * (1 - e.delta) - e.lambda + 1; }

inline RegimeReport check_regime(const ExponentSet& e) {
  e.validate();
  RegimeReport r;
  const int n = e.n;
  r.s_bound = (n + 1 - e.lambda) / (1 - e.delta);
  r.s_ok = e.s < r.s_bound;
  const double den = p_threshold_denominator(e);
  if (std::abs(den) <= 1e-14 * (1 + std::abs(e.s * (n - 1)))) {
    r.boundary_case = true;
  } else {
    r.p_star = (e.s * (n - 1) - e.lambda + 1) / den;
  }
  r.rels_lhs = (e.p - e.q) * (e.lambda - n) / (e.p * e.q) + (e.s - 1) * (n - 1) / e.p;
  r.rels_rhs = 1 - e.s * (1 - e.delta);
  r.rels_holds = r.rels_lhs >= r.rels_rhs - 1e-12 * (1 + std::abs(r.rels_rhs));

  if (e.s == 1) {
    if (e.p == e.q) {
      r.regime = Regime::HoldsPP;
    } else if (e.p > 1 && e.p <= e.q && n - e.delta * e.p > 0 && e.q <= n * e.p / (n - e.delta * e.p)) {
      r.regime = Regime::HoldsSobolev;
    }
    return r;
  }
  if (r.boundary_case || !r.s_ok || den < 0) return r;
  r.regime = e.p > *r.p_star ? Regime::Positive : Regime::Sharp;
  return r;
}

}  // namespace fraclab
