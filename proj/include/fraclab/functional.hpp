#pragma once

// Piecewise-constant functions on voxel domains, fractional seminorms,
// Poincare ratios and constant estimation.

#include <Eigen/Dense>

#include <variant>

#include "fraclab/conditions.hpp"
#include "fraclab/geometry.hpp"

namespace fraclab {

class GridFunction {
 public:
  GridFunction(const VoxelDomain& d, std::vector<double> values) : d_(&d), values_(std::move(values)) {
    if (values_.size() != d.occupied_count())
      fail("bad-function", "expected ", d.occupied_count(), " values, got ", values_.size());
    for (double v : values_)
      if (!std::isfinite(v)) fail("bad-function", "function values must be finite");
  }

  template <typename F>
  static GridFunction sample(const VoxelDomain& d, F&& f) {
    std::vector<double> v;
    v.reserve(d.occupied_count());
    for (auto flat : d.occupied()) v.push_back(f(d.voxel_center(flat)));
    return GridFunction(d, std::move(v));
  }

  const VoxelDomain& domain() const { return *d_; }
  const std::vector<double>& values() const { return values_; }
  std::size_t size() const { return values_.size(); }

 private:
  const VoxelDomain* d_;
  std::vector<double> values_;
};

struct TauLocal {
  double tau;
};
struct FullLocal {};
struct RhoCube {
  DyadicCube cube;
  double rho;
};
using Localization = std::variant<TauLocal, FullLocal, RhoCube>;

inline std::string localization_name(const Localization& l) {
  if (std::holds_alternative<TauLocal>(l)) return "tau-localized";
  if (std::holds_alternative<FullLocal>(l)) return "full";
  return "rho-cube";
}

enum class SeminormMethod { ExactPairs, MonteCarlo };

struct SeminormEstimate {
  double value = 0;  // the double integral, before the 1/p power
  SeminormMethod method = SeminormMethod::ExactPairs;
  std::uint64_t pair_count = 0;
  double std_error = 0;
  std::string localization;
};

inline double oscillation_norm(const std::vector<double>& u, double h, int n, double q) {
  if (u.empty()) fail("empty-domain", "oscillation of a function on an empty domain");
  if (!(q >= 1)) fail("bad-exponents", "q must be >= 1, got ", q);
  CompensatedSum m;
  for (double v : u) m += v;
  const double mean = m.value() / double(u.size());
  CompensatedSum s;
  for (double v : u) s += q == 2 ? (v - mean) * (v - mean) : std::pow(std::abs(v - mean), q);
  return s.value() * std::pow(h, n);
}

inline double oscillation_norm(const GridFunction& u, double q) {
  return oscillation_norm(u.values(), u.domain().pitch(), u.domain().dim(), q);
}

namespace detail {

// Cell centers on a common lattice of pitch h with an interaction radius per
// center; pairs (i, j), i != j, interact when |x_i - x_j| < radius_i.
struct Lattice {
  int n = 2;
  double h = 1;
  std::vector<IPoint> at;       // integer lattice coordinates
  std::vector<double> radius;   // +inf for unlocalized pairs
  IPoint lo{}, dims{};
  std::vector<std::int64_t> slot;  // dense lookup: lattice cell -> point id or -1

  void index() {
    for (int i = 0; i < n; ++i) {
      std::int64_t a = std::numeric_limits<std::int64_t>::max(), b = std::numeric_limits<std::int64_t>::min();
      for (const auto& c : at) {
        a = std::min(a, c[i]);
        b = std::max(b, c[i]);
      }
      lo[i] = at.empty() ? 0 : a;
      dims[i] = at.empty() ? 0 : b - a + 1;
    }
    std::size_t total = 1;
    for (int i = 0; i < n; ++i) total *= std::size_t(dims[i]);
    slot.assign(at.empty() ? 0 : total, -1);
    for (std::size_t k = 0; k < at.size(); ++k) slot[flat(at[k])] = std::int64_t(k);
  }

  std::size_t flat(const IPoint& c) const {
    std::size_t f = 0;
    for (int i = n - 1; i >= 0; --i) f = f * std::size_t(dims[i]) + std::size_t(c[i] - lo[i]);
    return f;
  }

  // Calls fn(j, d2) for every partner j of i, d2 in lattice units.
  template <typename F>
  void partners(std::size_t i, F&& fn) const {
    const IPoint& c = at[i];
    const double rr = radius[i] / h;
    std::int64_t span[kMaxDim]{};
    bool all = !std::isfinite(rr);
    for (int a = 0; a < n && !all; ++a) {
      span[a] = std::int64_t(std::ceil(rr));
      if (2 * span[a] + 1 >= dims[a]) all = true;
    }
    const double r2 = rr * rr;
    auto visit = [&](std::size_t j) {
      if (j == i) return;
      std::int64_t d2 = 0;
      for (int a = 0; a < n; ++a) d2 += (at[j][a] - c[a]) * (at[j][a] - c[a]);
      if (double(d2) < r2 || !std::isfinite(rr)) fn(j, d2);
    };
    if (all) {
      for (std::size_t j = 0; j < at.size(); ++j) visit(j);
      return;
    }
    IPoint o{}, hi{};
    for (int a = 0; a < n; ++a) {
      o[a] = std::max(c[a] - span[a], lo[a]);
      hi[a] = std::min(c[a] + span[a], lo[a] + dims[a] - 1);
    }
    IPoint k = o;
    for (;;) {
      const auto s = slot[flat(k)];
      if (s >= 0) visit(std::size_t(s));
      int a = 0;
      while (a < n && ++k[a] > hi[a]) {
        k[a] = o[a];
        ++a;
      }
      if (a == n) break;
    }
  }
};

// h^{2n} / |x|^{n + delta p} as a function of the squared lattice distance.
class KernelTable {
 public:
  KernelTable(int n, double h, double expo) : n_(n), h_(h), half_(expo / 2) {}
  double operator()(std::int64_t d2) const {
    if (std::size_t(d2) >= cache_.size()) {
      std::size_t old = cache_.size();
      cache_.resize(std::max<std::size_t>(std::size_t(d2) + 1, 2 * old));
      for (std::size_t k = old; k < cache_.size(); ++k)
        cache_[k] = k == 0 ? 0.0 : std::pow(h_, 2 * n_) * std::pow(double(k) * h_ * h_, -half_);
    }
    return cache_[std::size_t(d2)];
  }
  void reserve(std::int64_t d2) const { (void)(*this)(d2); }

 private:
  int n_;
  double h_, half_;
  mutable std::vector<double> cache_;
};

inline std::int64_t max_d2(const Lattice& L) {
  std::int64_t m = 0;
  for (int a = 0; a < L.n; ++a) m += (L.dims[a] - 1) * (L.dims[a] - 1);
  return std::max<std::int64_t>(m, 1);
}

inline double pair_power(double du, double p) {
  const double a = std::abs(du);
  return p == 2 ? a * a : (p == 1 ? a : std::pow(a, p));
}

inline SeminormEstimate lattice_seminorm(const Lattice& L, const std::vector<double>& u, double p, double delta) {
  KernelTable K(L.n, L.h, L.n + delta * p);
  K.reserve(max_d2(L));  // fill once; lookups below are read-only across threads
  std::vector<std::uint64_t> pairs((L.at.size() + 255) / 256, 0);
  SeminormEstimate e;
  e.value = parallel_sum(L.at.size(), 256, [&](std::size_t i) {
    CompensatedSum s;
    std::uint64_t cnt = 0;
    L.partners(i, [&](std::size_t j, std::int64_t d2) {
      ++cnt;
      if (u[i] != u[j]) s += pair_power(u[i] - u[j], p) * K(d2);
    });
    pairs[i / 256] += cnt;
    return s.value();
  });
  for (auto c : pairs) e.pair_count += c;
  return e;
}

inline Lattice domain_lattice(const VoxelDomain& d, const Localization& loc) {
  Lattice L;
  L.n = d.dim();
  L.h = d.pitch();
  const bool need_dist = std::holds_alternative<TauLocal>(loc);
  if (need_dist && !d.has_distance()) fail("no-distance", "tau localization needs the distance field");
  for (auto flat : d.occupied()) {
    IPoint c = d.local_coords(flat);
    L.at.push_back(c);
    double r = std::numeric_limits<double>::infinity();
    if (auto t = std::get_if<TauLocal>(&loc)) r = t->tau * d.voxel_distance(flat);
    L.radius.push_back(r);
  }
  if (auto rc = std::get_if<RhoCube>(&loc)) {
    // Restrict to voxels inside the cube; radius rho l(Q).
    Lattice R;
    R.n = L.n;
    R.h = L.h;
    const Box qb = rc->cube.box();
    for (std::size_t k = 0; k < L.at.size(); ++k) {
      const Point x = d.voxel_center(d.occupied()[k]);
      if (qb.contains(x)) {
        R.at.push_back(L.at[k]);
        R.radius.push_back(rc->rho * rc->cube.side());
      }
    }
    L = std::move(R);
  }
  L.index();
  return L;
}

inline void check_seminorm_args(double p, double delta, const Localization& loc) {
  if (!(p >= 1) || !std::isfinite(p)) fail("bad-exponents", "p must be in [1, inf), got ", p);
  if (!(delta > 0 && delta < 1)) fail("bad-exponents", "delta must be in (0, 1), got ", delta);
  if (auto t = std::get_if<TauLocal>(&loc); t && !(t->tau > 0 && t->tau < 1))
    fail("bad-exponents", "tau must be in (0, 1), got ", t->tau);
  if (auto r = std::get_if<RhoCube>(&loc); r && !(r->rho > 0 && r->rho < 1))
    fail("bad-exponents", "rho must be in (0, 1), got ", r->rho);
}

}  // namespace detail

/// Exact-pairs seminorm: sum over ordered voxel-center pairs in the
/// localization of |u_i - u_j|^p / |x_i - x_j|^{n + delta p} h^{2n}.
/// Rho-cube localization restricts u to the voxels inside the cube.
inline SeminormEstimate fractional_seminorm(const GridFunction& u, double p, double delta, const Localization& loc) {
  detail::check_seminorm_args(p, delta, loc);
  const auto& d = u.domain();
  auto L = detail::domain_lattice(d, loc);
  std::vector<double> vals;
  if (std::holds_alternative<RhoCube>(loc)) {
    const Box qb = std::get<RhoCube>(loc).cube.box();
    for (std::size_t k = 0; k < u.size(); ++k)
      if (qb.contains(d.voxel_center(d.occupied()[k]))) vals.push_back(u.values()[k]);
  } else {
    vals = u.values();
  }
  auto e = detail::lattice_seminorm(L, vals, p, delta);
  e.localization = localization_name(loc);
  return e;
}

struct MonteCarloOptions {
  std::uint64_t samples = 1 << 16;
  std::optional<std::uint64_t> seed;
};

/// Monte Carlo seminorm over an analytic domain for a pointwise function u.
/// Pairs are drawn as x uniform in G and y = x + rho theta with rho importance
/// sampled from a density proportional to rho^{p(1-delta)-1}, which cancels
/// the kernel singularity up to |u(x) - u(y)|^p / rho^p.
template <typename F>
SeminormEstimate fractional_seminorm_mc(const DomainModel& d, F&& u, double p, double delta, const Localization& loc,
                                        const MonteCarloOptions& opt) {
  detail::check_seminorm_args(p, delta, loc);
  if (!opt.seed) fail("missing-seed", "monte-carlo seminorm requires an explicit seed");
  if (opt.samples == 0) fail("bad-samples", "sample count must be positive");
  const int n = d.dim();
  const Box bb = std::holds_alternative<RhoCube>(loc) ? std::get<RhoCube>(loc).cube.box() : d.bounds();
  const double a = p * (1 - delta);
  const double full_r = std::sqrt(dist2(bb.lo, bb.hi, n));
  constexpr std::size_t chunk = 4096;
  const std::size_t chunks = (opt.samples + chunk - 1) / chunk;
  std::vector<CompensatedSum> s1(chunks), s2(chunks);
  std::vector<std::uint64_t> hits(chunks, 0);
  parallel_chunks(chunks, [&](std::size_t c) {
    Rng rng(mix_seed(*opt.seed, c));
    const std::uint64_t lo = c * chunk, hi = std::min<std::uint64_t>(opt.samples, lo + chunk);
    for (std::uint64_t k = lo; k < hi; ++k) {
      Point x{};
      for (int i = 0; i < n; ++i) x[i] = bb.lo[i] + uniform01(rng) * (bb.hi[i] - bb.lo[i]);
      double val = 0;
      if (d.contains(x)) {
        ++hits[c];
        double R = full_r;
        if (auto t = std::get_if<TauLocal>(&loc)) R = t->tau * d.clearance(x);
        if (auto rc = std::get_if<RhoCube>(&loc)) R = rc->rho * rc->cube.side();
        if (R > 0) {
          const double rho = R * std::pow(uniform01(rng), 1 / a);
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
          const bool in = d.contains(y) && (!std::holds_alternative<RhoCube>(loc) || bb.contains(y));
          if (in) {
            // integrand * volume of the x-box / pdf(y | x)
            val = detail::pair_power(u(x) - u(y), p) * std::pow(rho, -p) * sphere_area(n) * std::pow(R, a) / a;
          }
        }
      }
      val *= bb.volume();
      s1[c] += val;
      s2[c] += val * val;
    }
  });
  CompensatedSum t1, t2;
  for (std::size_t c = 0; c < chunks; ++c) {
    t1.merge(s1[c]);
    t2.merge(s2[c]);
  }
  const double N = double(opt.samples);
  SeminormEstimate e;
  e.method = SeminormMethod::MonteCarlo;
  e.value = t1.value() / N;
  e.std_error = std::sqrt(std::max(0.0, t2.value() / N - e.value * e.value) / N);
  e.pair_count = opt.samples;
  e.localization = localization_name(loc);
  return e;
}

/// Oscillation over the seminorm to the q/p: a lower bound for the constant.
inline double poincare_ratio(const GridFunction& u, const ExponentSet& e, const Localization& loc) {
  const double s = fractional_seminorm(u, e.p, e.delta, loc).value;
  if (!(s > 0)) fail("ratio-undefined", "seminorm vanishes; ratio undefined");
  return oscillation_norm(u, e.q) / std::pow(s, e.q / e.p);
}

inline double poincare_ratio(const GridFunction& u, const ExponentSet& e) { return poincare_ratio(u, e, TauLocal{e.tau}); }

// ---------------------------------------------------------------------------
// Constant estimation

enum class EstimateMethod { Eig, Ascent };

struct EstimateReport {
  std::string method;
  double value = 0;
  std::optional<std::uint64_t> seed;
  std::size_t restarts = 0;
  std::size_t iterations = 0;
  bool converged = true;
  std::vector<double> trajectory;  // best ratio after each restart / refinement
  std::vector<double> best_u;
  std::size_t components = 1;       // interaction components
  std::size_t isolated_voxels = 0;  // voxels without partners
  int k = 0;                        // subdivision parameter (cube lemma)
};

namespace detail {

// Symmetrized pair weights W_ij = (m_ij + m_ji) K_ij for the nonlocal form
// sum_{i != j} m_ij K_ij |u_i - u_j|^p, stored as CSR with i < j and i > j.
struct PairGraph {
  std::vector<std::size_t> off;
  std::vector<std::uint32_t> nbr;
  std::vector<double> w;
  std::vector<std::uint32_t> comp;
  std::size_t components = 0, isolated = 0;

  std::size_t size() const { return off.empty() ? 0 : off.size() - 1; }
};

inline PairGraph build_pair_graph(const Lattice& L, double p, double delta) {
  KernelTable K(L.n, L.h, L.n + delta * p);
  const std::size_t N = L.at.size();
  std::vector<std::map<std::uint32_t, double>> rows(N);
  for (std::size_t i = 0; i < N; ++i)
    L.partners(i, [&](std::size_t j, std::int64_t d2) {
      const double k = K(d2);
      rows[i][std::uint32_t(j)] += k;
      rows[j][std::uint32_t(i)] += k;
    });
  PairGraph g;
  g.off.assign(N + 1, 0);
  for (std::size_t i = 0; i < N; ++i) {
    g.off[i + 1] = g.off[i] + rows[i].size();
    for (auto [j, v] : rows[i]) {
      g.nbr.push_back(j);
      g.w.push_back(v);
    }
    g.isolated += rows[i].empty();
  }
  g.comp.assign(N, std::uint32_t(-1));
  std::vector<std::size_t> stack;
  for (std::size_t s = 0; s < N; ++s) {
    if (g.comp[s] != std::uint32_t(-1)) continue;
    g.comp[s] = std::uint32_t(g.components);
    stack.push_back(s);
    while (!stack.empty()) {
      auto i = stack.back();
      stack.pop_back();
      for (std::size_t k = g.off[i]; k < g.off[i + 1]; ++k)
        if (g.comp[g.nbr[k]] == std::uint32_t(-1)) {
          g.comp[g.nbr[k]] = g.comp[s];
          stack.push_back(g.nbr[k]);
        }
    }
    ++g.components;
  }
  return g;
}

// Projection onto functions with zero mean on every interaction component,
// the complement of the null space of the nonlocal form.
inline void project(const PairGraph& g, std::vector<double>& u) {
  std::vector<CompensatedSum> s(g.components);
  std::vector<std::size_t> c(g.components, 0);
  for (std::size_t i = 0; i < u.size(); ++i) {
    s[g.comp[i]] += u[i];
    ++c[g.comp[i]];
  }
  for (std::size_t i = 0; i < u.size(); ++i) u[i] -= s[g.comp[i]].value() / double(c[g.comp[i]]);
}

inline double form_value(const PairGraph& g, const std::vector<double>& u, double p) {
  CompensatedSum s;
  for (std::size_t i = 0; i < g.size(); ++i)
    for (std::size_t k = g.off[i]; k < g.off[i + 1]; ++k)
      if (g.nbr[k] > i) s += g.w[k] * pair_power(u[i] - u[g.nbr[k]], p);
  return s.value();
}

struct RatioEval {
  double ratio = 0;
  std::vector<double> grad;  // gradient of log ratio
};

inline RatioEval ratio_and_grad(const PairGraph& g, const std::vector<double>& u, double p, double q, double hn) {
  const std::size_t N = u.size();
  double mean = 0;
  for (double v : u) mean += v;
  mean /= double(N);
  RatioEval r;
  r.grad.assign(N, 0.0);
  CompensatedSum osc;
  std::vector<double> go(N);
  double gmean = 0;
  for (std::size_t i = 0; i < N; ++i) {
    const double t = u[i] - mean;
    osc += hn * std::pow(std::abs(t), q);
    go[i] = hn * q * std::copysign(std::pow(std::abs(t), q - 1), t);
    gmean += go[i];
  }
  gmean /= double(N);
  const double O = osc.value();
  std::vector<double> gs(N, 0.0);
  CompensatedSum S;
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t k = g.off[i]; k < g.off[i + 1]; ++k) {
      const std::size_t j = g.nbr[k];
      const double du = u[i] - u[j];
      gs[i] += g.w[k] * p * std::copysign(std::pow(std::abs(du), p - 1), du);
      if (j > i) S += g.w[k] * pair_power(du, p);
    }
  const double Sv = S.value();
  r.ratio = O / std::pow(Sv, q / p);
  for (std::size_t i = 0; i < N; ++i) r.grad[i] = (go[i] - gmean) / O - (q / p) * gs[i] / Sv;
  return r;
}

}  // namespace detail

/// Best-constant estimate for the tau-localized inequality on a voxel domain,
/// over functions orthogonal to the null space of the nonlocal form.
inline EstimateReport estimate_constant(const VoxelDomain& dom, const ExponentSet& e, EstimateMethod method,
                                        std::size_t restarts = 4, std::optional<std::uint64_t> seed = 1,
                                        std::optional<Localization> localization = {}) {
  e.validate();
  const VoxelDomain d = dom.has_distance() ? dom : distance_transform(dom);
  const Localization loc = localization.value_or(TauLocal{e.tau});
  const auto L = detail::domain_lattice(d, loc);
  const auto g = detail::build_pair_graph(L, e.p, e.delta);
  const std::size_t N = L.at.size();
  const double hn = std::pow(d.pitch(), d.dim());
  EstimateReport r;
  r.components = g.components;
  r.isolated_voxels = g.isolated;
  if (N < 2 || g.components == N) fail("ratio-undefined", "no interacting pairs; the constant is undefined");

  if (method == EstimateMethod::Eig) {
    if (e.p != 2 || e.q != 2) fail("bad-method", "eig requires p = q = 2");
    r.method = "eig";
    // On the zero-mean-per-component subspace the oscillation form is h^n |u|^2,
    // so the best constant is h^n over the smallest positive eigenvalue of L.
    Eigen::MatrixXd Lm = Eigen::MatrixXd::Zero(Eigen::Index(N), Eigen::Index(N));
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t k = g.off[i]; k < g.off[i + 1]; ++k) {
        Lm(Eigen::Index(i), Eigen::Index(g.nbr[k])) -= g.w[k];
        Lm(Eigen::Index(i), Eigen::Index(i)) += g.w[k];
      }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Lm);
    if (es.info() != Eigen::Success) {
      r.converged = false;
      return r;
    }
    const Eigen::Index k = Eigen::Index(g.components);  // null space dimension
    const double lam = es.eigenvalues()(k);
    r.value = hn / lam;
    r.iterations = 1;
    r.trajectory = {r.value};
    const Eigen::VectorXd v = es.eigenvectors().col(k);
    r.best_u.assign(v.data(), v.data() + v.size());
    return r;
  }

  r.method = "ascent";
  if (!seed) fail("missing-seed", "ascent requires a seed");
  r.seed = seed;
  r.restarts = restarts;
  struct Run {
    double ratio = 0;
    std::vector<double> u;
    std::size_t iters = 0;
    bool converged = false;
  };
  std::vector<Run> runs(restarts);
  parallel_chunks(restarts, [&](std::size_t k) {
    Rng rng(mix_seed(*seed, k));
    std::vector<double> u(N);
    for (auto& v : u) v = 2 * uniform01(rng) - 1;
    detail::project(g, u);
    auto cur = detail::ratio_and_grad(g, u, e.p, e.q, hn);
    double step = 1.0;
    Run run;
    for (run.iters = 0; run.iters < 10000; ++run.iters) {
      double gn = 0, un = 0;
      for (std::size_t i = 0; i < N; ++i) {
        gn += cur.grad[i] * cur.grad[i];
        un += u[i] * u[i];
      }
      if (gn == 0) {
        run.converged = true;
        break;
      }
      const double scale = std::sqrt(un / gn);
      bool improved = false;
      std::vector<double> trial(N);
      for (int halvings = 0; halvings < 40; ++halvings) {
        for (std::size_t i = 0; i < N; ++i) trial[i] = u[i] + step * scale * cur.grad[i];
        detail::project(g, trial);
        auto next = detail::ratio_and_grad(g, trial, e.p, e.q, hn);
        if (std::isfinite(next.ratio) && next.ratio > cur.ratio) {
          const double gain = (next.ratio - cur.ratio) / cur.ratio;
          u.swap(trial);
          cur = std::move(next);
          improved = true;
          step = std::min(1.0, step * 2);
          if (gain < 1e-6) run.converged = true;
          break;
        }
        step /= 2;
      }
      if (!improved) run.converged = true;
      if (run.converged) break;
    }
    run.ratio = cur.ratio;
    run.u = std::move(u);
    runs[k] = std::move(run);
  });
  for (const auto& run : runs) {
    r.iterations += run.iters;
    r.converged = r.converged && run.converged;
    if (run.ratio > r.value) {
      r.value = run.ratio;
      r.best_u = run.u;
    }
    r.trajectory.push_back(r.value);
  }
  return r;
}

// ---------------------------------------------------------------------------
// Cube lemma

/// Empirical constant of the cube inequality: the largest
/// LHS / (|Q|^{1 + q(delta/n - 1/p)} RHS^{q/p}) over random functions that are
/// constant on the 2^n children of Q, sampled on a 2^J grid over Q.
inline EstimateReport cube_lemma_check(const DyadicCube& Q, const ExponentSet& e, double rho, std::size_t trials,
                                       std::uint64_t seed, int J = 5) {
  e.validate();
  if (!(e.q <= e.p)) fail("bad-exponents", "requires q <= p");
  if (!(rho > 0 && rho < 1)) fail("bad-exponents", "rho must be in (0, 1), got ", rho);
  if (J < 1 || J > 8) fail("bad-resolution", "J must be in [1, 8], got ", J);
  const int n = Q.n;
  detail::Lattice L;
  L.n = n;
  const std::int64_t m = std::int64_t(1) << J;
  L.h = Q.side() / double(m);
  std::size_t total = 1;
  for (int i = 0; i < n; ++i) total *= std::size_t(m);
  for (std::size_t f = 0; f < total; ++f) {
    IPoint c{};
    std::size_t t = f;
    for (int i = 0; i < n; ++i) {
      c[i] = std::int64_t(t % std::size_t(m));
      t /= std::size_t(m);
    }
    L.at.push_back(c);
    L.radius.push_back(rho * Q.side());
  }
  L.index();
  const double vq = Q.volume();
  const double scale = std::pow(vq, 1 + e.q * (e.delta / n - 1 / e.p));
  const double hn = std::pow(L.h, n);
  EstimateReport r;
  r.method = "cube-lemma";
  r.seed = seed;
  r.restarts = trials;
  r.k = int(std::ceil(std::sqrt(double(n + 3)) / rho));
  for (std::size_t t = 0; t < trials; ++t) {
    Rng rng(mix_seed(seed, t));
    std::vector<double> block(std::size_t(1) << n);
    // Trial 0 is the half-cube indicator; the rest are random on children.
    for (std::size_t b = 0; b < block.size(); ++b) block[b] = t == 0 ? double(b & 1) : uniform01(rng);
    std::vector<double> u(total);
    for (std::size_t f = 0; f < total; ++f) {
      std::size_t b = 0;
      for (int i = 0; i < n; ++i) b |= std::size_t(L.at[f][i] >= m / 2) << i;
      u[f] = block[b];
    }
    const double S = detail::lattice_seminorm(L, u, e.p, e.delta).value;
    if (!(S > 0)) continue;  // constant: ratio undefined
    const double lhs = oscillation_norm(u, 1.0, 1, e.q) * hn;
    const double ratio = lhs / (scale * std::pow(S, e.q / e.p));
    r.value = std::max(r.value, ratio);
    r.trajectory.push_back(r.value);
    if (r.best_u.empty() || ratio == r.value) r.best_u = u;
    ++r.iterations;
  }
  return r;
}

// ---------------------------------------------------------------------------
// Logarithmic distance integral

struct LogIntegral {
  double value = 0;
  double ratio = 0;  // value / (r^n (1 + log^p(1/r)))
  double excluded_measure = 0;
  std::size_t cells = 0;
};

/// Midpoint quadrature of max(0, log(1/dist(y, S)))^p over B(x, r) with
/// `cells_per_radius` cells per radius along each axis.
inline LogIntegral log_distance_integral(const PointSet& S, const Point& x, double r, double p,
                                         int cells_per_radius = 64) {
  if (!(r > 0 && r <= 1)) fail("bad-radius", "r must be in (0, 1], got ", r);
  if (!(p > 0)) fail("bad-exponents", "p must be positive, got ", p);
  if (cells_per_radius < 64) fail("grid-too-coarse", "need at least 64 cells per radius");
  const int n = S.n;
  const PointSetIndex idx(S);
  const double h = r / cells_per_radius;
  const std::size_t m = std::size_t(2 * cells_per_radius);
  std::size_t rows = 1;
  for (int i = 1; i < n; ++i) rows *= m;
  const double cell = std::pow(h, n);
  std::vector<double> excluded((rows + 63) / 64, 0.0);
  std::vector<std::size_t> counts((rows + 63) / 64, 0);
  LogIntegral out;
  out.value = parallel_sum(rows, 64, [&](std::size_t row) {
    Point y{};
    std::size_t t = row;
    for (int i = 1; i < n; ++i) {
      y[i] = x[i] - r + (double(t % m) + 0.5) * h;
      t /= m;
    }
    CompensatedSum s;
    for (std::size_t k = 0; k < m; ++k) {
      y[0] = x[0] - r + (double(k) + 0.5) * h;
      if (dist2(y, x, n) >= r * r) continue;
      ++counts[row / 64];
      const double d = std::sqrt(idx.dist2(y));
      if (d == 0) {
        excluded[row / 64] += cell;
        continue;
      }
      if (d < 1) s += std::pow(std::log(1 / d), p) * cell;
    }
    return s.value();
  });
  for (double v : excluded) out.excluded_measure += v;
  for (auto c : counts) out.cells += c;
  out.ratio = out.value / (std::pow(r, n) * (1 + std::pow(std::log(1 / r), p)));
  return out;
}

}  // namespace fraclab
