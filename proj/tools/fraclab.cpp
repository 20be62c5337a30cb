// fraclab command-line front end.

#include <chrono>
#include <iostream>

#include <CLI11.hpp>

#include "fraclab/geometry.hpp"
#include "fraclab/io.hpp"

using namespace fraclab;

namespace {

// Options are bound to strings so manifests keep values exactly as typed.
class Command {
 public:
  Command(CLI::App& app, const std::string& name, const std::string& help) : sub_(app.add_subcommand(name, help)) {}

  std::string& opt(const std::string& name, const std::string& def, const std::string& help) {
    auto& slot = *store_.emplace_back(std::make_unique<std::string>(def));
    sub_->add_option("--" + name, slot, help)->default_str(def.empty() ? "(none)" : def);
    order_.emplace_back(name, &slot);
    return slot;
  }
  std::string& required(const std::string& name, const std::string& help) {
    auto& slot = *store_.emplace_back(std::make_unique<std::string>());
    sub_->add_option("--" + name, slot, help)->required();
    order_.emplace_back(name, &slot);
    return slot;
  }
  bool& flag(const std::string& name, const std::string& help) {
    auto& f = *flags_.emplace_back(std::make_unique<bool>(false));
    sub_->add_flag("--" + name, f, help);
    flag_order_.emplace_back(name, &f);
    return f;
  }

  CLI::App* app() const { return sub_; }

  RunManifest manifest() const {
    RunManifest m;
    m.command = sub_->get_name();
    for (const auto& [k, v] : order_)
      if (k != "out") m.params.emplace_back(k, *v);
    for (const auto& [k, f] : flag_order_) m.params.emplace_back(k, *f ? "true" : "false");
    return m;
  }

 private:
  CLI::App* sub_;
  std::vector<std::unique_ptr<std::string>> store_;
  std::vector<std::unique_ptr<bool>> flags_;
  std::vector<std::pair<std::string, std::string*>> order_;
  std::vector<std::pair<std::string, bool*>> flag_order_;
};

double to_double(const std::string& name, const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || *end != '\0' || !std::isfinite(v)) fail("bad-number", "--", name, " expects a number, got '", s, "'");
  return v;
}

int to_int(const std::string& name, const std::string& s) {
  const double v = to_double(name, s);
  if (v != std::floor(v) || std::abs(v) > 1e9) fail("bad-number", "--", name, " expects an integer, got '", s, "'");
  return int(v);
}

std::uint64_t to_seed(const std::string& s) {
  if (s.empty()) fail("missing-seed", "--seed is required");
  char* end = nullptr;
  const auto v = std::strtoull(s.c_str(), &end, 10);
  if (*end != '\0' || s[0] == '-') fail("bad-number", "--seed expects a non-negative integer, got '", s, "'");
  return v;
}

std::vector<double> to_list(const std::string& name, const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(to_double(name, tok));
  if (out.empty()) fail("bad-number", "--", name, " expects a comma-separated list");
  return out;
}

void add_input(RunManifest& m, const std::string& path) { m.inputs.emplace_back(path, hex64(fnv1a64(read_file(path)))); }

void emit_json(const std::string& out, json j, const RunManifest& m) {
  j["manifest"] = m.to_json();
  if (out.empty() || out == "-")
    std::cout << dump(j);
  else
    write_file_atomic(out, dump(j));
}

std::string csv_path(const std::string& out) {
  auto p = std::filesystem::path(out);
  return p.replace_extension(".csv").string();
}

VoxelDomain load_or_make(const std::string& path, const std::string& preset, const std::string& J, const std::string& n,
                         RunManifest& m) {
  if (!path.empty()) {
    add_input(m, path);
    return domain_from_json(parse_json_file(path));
  }
  return make_domain(parse_preset(preset), to_int("J", J), to_int("n", n));
}

ExponentSet exponents(const std::string& n, const std::string& p, const std::string& q, const std::string& delta,
                      const std::string& tau, const std::string& s, const std::string& lambda) {
  ExponentSet e;
  e.n = to_int("n", n);
  e.p = to_double("p", p);
  e.q = to_double("q", q);
  e.delta = to_double("delta", delta);
  e.tau = to_double("tau", tau);
  e.s = to_double("s", s);
  e.lambda = lambda.empty() ? e.n - 1 : to_double("lambda", lambda);
  return e;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fraclab: Whitney chains, fractional Poincare conditions and the rooms-and-passages counterexample"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string jobs = "1";
  app.add_option("--jobs", jobs, "worker threads (results do not depend on it)")->default_str("1");

  // domain
  Command dom(app, "domain", "build a voxel domain");
  auto& d_preset = dom.opt("preset", "square", "square | l-shape | koch | bitmap");
  auto& d_J = dom.opt("J", "6", "voxel side 2^-J");
  auto& d_n = dom.opt("n", "2", "dimension (square only allows 3)");
  auto& d_bitmap = dom.opt("bitmap", "", "PBM file for --preset bitmap");
  auto& d_dist = dom.flag("dist", "embed the exact distance field");
  auto& d_out = dom.required("out", "output JSON");

  // whitney
  Command wh(app, "whitney", "Whitney decomposition of a domain");
  auto& w_domain = wh.required("domain", "domain JSON");
  auto& w_jmax = wh.opt("jmax", "", "finest generation (default: domain J)");
  auto& w_verify = wh.opt("verify", "0", "samples per cube for the distance-estimate check (0 = skip)");
  auto& w_seed = wh.opt("seed", "1", "seed for --verify sampling");
  auto& w_out = wh.required("out", "output JSON");

  // chains
  Command ch(app, "chains", "chain decomposition of a Whitney decomposition");
  auto& c_whitney = ch.required("whitney", "Whitney JSON");
  auto& c_strategy = ch.opt("strategy", "hop-count", "hop-count | curve-following");
  auto& c_out = ch.required("out", "output JSON");

  // conditions
  Command co(app, "conditions", "evaluate a sufficient-condition sum");
  auto& k_chains = co.required("chains", "chains JSON");
  auto& k_cond = co.required("cond", "sharpe | pp | sigma | classical");
  auto& k_p = co.opt("p", "2", "exponent p");
  auto& k_q = co.opt("q", "", "exponent q (default: p for pp, 1 otherwise)");
  auto& k_delta = co.opt("delta", "0.5", "smoothness delta");
  auto& k_tau = co.opt("tau", "0.5", "localization tau");
  auto& k_s = co.opt("s", "1", "John exponent s");
  auto& k_lambda = co.opt("lambda", "", "boundary dimension lambda (default: n-1)");
  auto& k_out = co.opt("out", "", "output JSON (CSV mirror beside it); stdout if empty");

  // constant
  Command cs(app, "constant", "estimate the best Poincare constant on a voxel domain");
  auto& e_domain = cs.opt("domain", "", "domain JSON (or --preset/--J)");
  auto& e_preset = cs.opt("preset", "square", "preset when no --domain is given");
  auto& e_J = cs.opt("J", "4", "resolution for --preset");
  auto& e_p = cs.opt("p", "2", "exponent p");
  auto& e_q = cs.opt("q", "2", "exponent q");
  auto& e_delta = cs.opt("delta", "0.5", "smoothness delta");
  auto& e_tau = cs.opt("tau", "0.5", "localization tau");
  auto& e_method = cs.opt("method", "eig", "eig | ascent");
  auto& e_restarts = cs.opt("restarts", "4", "ascent restarts");
  auto& e_seed = cs.opt("seed", "1", "seed for ascent restarts");
  auto& e_out = cs.opt("out", "", "output JSON; stdout if empty");

  // cube-lemma
  Command cl(app, "cube-lemma", "empirical constant of the cube lemma");
  auto& l_n = cl.opt("n", "2", "dimension");
  auto& l_p = cl.opt("p", "2", "exponent p");
  auto& l_q = cl.opt("q", "2", "exponent q");
  auto& l_delta = cl.opt("delta", "0.5", "smoothness delta");
  auto& l_rho = cl.opt("rho", "0.5", "ball fraction rho");
  auto& l_trials = cl.opt("trials", "16", "test functions");
  auto& l_J = cl.opt("J", "5", "subdivision level");
  auto& l_seed = cl.required("seed", "random seed");
  auto& l_out = cl.opt("out", "", "output JSON; stdout if empty");

  // log-integral
  Command li(app, "log-integral", "log-distance integral near the corner of the unit square boundary");
  auto& g_p = li.opt("p", "1", "power p");
  auto& g_r = li.opt("r", "1,0.5,0.25,0.125,0.0625,0.03125,0.015625", "radii (comma-separated)");
  auto& g_cells = li.opt("cells", "64", "cells per radius");
  auto& g_out = li.opt("out", "", "output JSON; stdout if empty");

  // dimension
  Command di(app, "dimension", "Minkowski dimension of a domain boundary");
  auto& m_domain = di.opt("domain", "", "domain JSON (or --preset/--J)");
  auto& m_preset = di.opt("preset", "koch", "preset when no --domain is given");
  auto& m_J = di.opt("J", "8", "resolution for --preset");
  auto& m_rmin = di.opt("rmin", "", "smallest radius (default: 2 voxels)");
  auto& m_rmax = di.opt("rmax", "0.125", "largest radius");
  auto& m_out = di.opt("out", "", "output JSON; stdout if empty");

  // porosity
  Command po(app, "porosity", "porosity of a domain boundary");
  auto& o_domain = po.opt("domain", "", "domain JSON (or --preset/--J)");
  auto& o_preset = po.opt("preset", "koch", "preset when no --domain is given");
  auto& o_J = po.opt("J", "7", "resolution for --preset");
  auto& o_scales = po.opt("scales", "0.25,0.125,0.0625", "radii (comma-separated)");
  auto& o_trials = po.opt("trials", "64", "centers per scale");
  auto& o_floor = po.opt("floor", "0.01", "porosity floor");
  auto& o_seed = po.required("seed", "random seed");
  auto& o_out = po.opt("out", "", "output JSON; stdout if empty");

  // s-version
  Command sv(app, "s-version", "rooms-and-passages domain over a base decomposition");
  auto& v_base = sv.opt("base", "square", "base preset");
  auto& v_J = sv.opt("J", "5", "base resolution");
  auto& v_s = sv.opt("s", "2", "passage exponent s > 1");
  auto& v_decompose = sv.flag("decompose", "also run the Whitney decomposition of G_s and the sigma condition");
  auto& v_p = sv.opt("p", "3", "exponent p for --decompose");
  auto& v_delta = sv.opt("delta", "0.5", "smoothness delta for --decompose");
  auto& v_out = sv.opt("out", "", "output JSON; stdout if empty");

  // sharpness
  Command sh(app, "sharpness", "A_m / B_m blow-up experiment");
  auto& h_base = sh.opt("base", "square", "base preset");
  auto& h_J = sh.opt("J", "9", "base resolution");
  auto& h_s = sh.opt("s", "2", "passage exponent s");
  auto& h_p = sh.opt("p", "2", "exponent p");
  auto& h_q = sh.opt("q", "1", "exponent q");
  auto& h_lambda = sh.opt("lambda", "", "boundary dimension lambda (default: n-1)");
  auto& h_delta = sh.opt("delta", "0.5", "smoothness delta");
  auto& h_tau = sh.opt("tau", "1", "ball radius as a fraction of dist(x, boundary), in (0, 1]");
  auto& h_k0 = sh.opt("k0", "1", "k0 in M_j = 2^[lambda (j - k0)]");
  auto& h_mmax = sh.opt("m-max", "6", "largest m");
  auto& h_target = sh.opt("target-rel", "0.01", "relative standard error target for B_m^p");
  auto& h_seed = sh.required("seed", "random seed");
  auto& h_out = sh.required("out", "output directory");

  const auto t0 = std::chrono::steady_clock::now();
  try {
    try {
      app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
      return app.exit(e);
    } catch (const CLI::ParseError& e) {
      std::string msg = e.what();
      std::replace(msg.begin(), msg.end(), '\n', ' ');
      std::cerr << "error: usage: " << msg << "\n";
      return 2;
    }
    worker_count() = to_int("jobs", jobs);
    if (worker_count() < 1) fail("bad-number", "--jobs must be at least 1");

    if (*dom.app()) {
      auto m = dom.manifest();
      auto d = make_domain(parse_preset(d_preset), to_int("J", d_J), to_int("n", d_n), d_bitmap);
      if (!d_bitmap.empty()) add_input(m, d_bitmap);
      if (d_dist) d = distance_transform(d);
      emit_json(d_out, domain_to_json(d, d_dist), m);
      std::cout << "domain voxels=" << d.occupied_count() << " measure=" << fmt_e12(d.measure()) << "\n";
    } else if (*wh.app()) {
      auto m = wh.manifest();
      add_input(m, w_domain);
      const auto d = distance_transform(domain_from_json(parse_json_file(w_domain)));
      const int jmax = w_jmax.empty() ? d.resolution() : to_int("jmax", w_jmax);
      const auto w = whitney_decompose(d, jmax);
      json j = whitney_to_json(w);
      if (const int ns = to_int("verify", w_verify); ns > 0) {
        m.seed = to_seed(w_seed);
        const auto r = verify_dist_est(w, d, std::size_t(ns), *m.seed);
        j["dist_est"] = {{"samples", r.samples}, {"violations", r.violations}, {"min_ratio", num12(r.min_ratio)},
                         {"max_ratio", num12(r.max_ratio)}};
      }
      emit_json(w_out, j, m);
      std::cout << "whitney cubes=" << w.size() << " root=" << w.root_id << "\n";
    } else if (*ch.app()) {
      auto m = ch.manifest();
      add_input(m, c_whitney);
      const auto w = whitney_from_json(parse_json_file(c_whitney));
      const auto cd = build_chain_decomposition(w, parse_strategy(c_strategy));
      emit_json(c_out, chains_to_json(cd), m);
      std::uint32_t longest = 0;
      for (std::size_t q = 0; q < cd.size(); ++q) longest = std::max(longest, cd.length(q));
      std::cout << "chains cubes=" << cd.size() << " longest=" << longest << "\n";
    } else if (*co.app()) {
      auto m = co.manifest();
      add_input(m, k_chains);
      const auto loaded = chains_from_json(parse_json_file(k_chains));
      const std::string q = k_q.empty() ? (k_cond == "pp" ? k_p : "1") : k_q;
      const auto e = exponents(std::to_string(loaded.w->n), k_p, q, k_delta, k_tau, k_s, k_lambda);
      ConditionReport r;
      if (k_cond == "sharpe")
        r = eval_sharpe_sum(loaded.cd, e);
      else if (k_cond == "pp")
        r = eval_pp_sup(loaded.cd, e);
      else if (k_cond == "sigma")
        r = eval_sigma_thm51(loaded.cd, e);
      else if (k_cond == "classical")
        r = eval_classical_condition(loaded.cd, e.p);
      else
        fail("bad-condition", "unknown condition '", k_cond, "' (sharpe | pp | sigma | classical)");
      emit_json(k_out, report_to_json(r), m);
      if (!k_out.empty() && k_out != "-") write_file_atomic(csv_path(k_out), report_to_csv(r));
      std::cout << "condition=" << r.kind << " value=" << fmt_e12(r.value) << " verdict=" << to_string(r.verdict) << "\n";
    } else if (*cs.app()) {
      auto m = cs.manifest();
      const auto d = load_or_make(e_domain, e_preset, e_J, "2", m);
      const auto e = exponents(std::to_string(d.dim()), e_p, e_q, e_delta, e_tau, "1", "");
      const auto method = e_method == "eig" ? EstimateMethod::Eig
                          : e_method == "ascent" ? EstimateMethod::Ascent
                                                 : (fail("bad-method", "unknown method '", e_method, "'"), EstimateMethod::Eig);
      m.seed = to_seed(e_seed);
      const auto r = estimate_constant(d, e, method, std::size_t(to_int("restarts", e_restarts)), m.seed);
      emit_json(e_out, estimate_to_json(r), m);
      std::cerr << "constant=" << fmt_e12(r.value) << "\n";
    } else if (*cl.app()) {
      auto m = cl.manifest();
      m.seed = to_seed(l_seed);
      const auto e = exponents(l_n, l_p, l_q, l_delta, "0.5", "1", "");
      const int n = e.n;
      const auto r = cube_lemma_check(DyadicCube{n, 0, {}}, e, to_double("rho", l_rho), std::size_t(to_int("trials", l_trials)),
                                      *m.seed, to_int("J", l_J));
      emit_json(l_out, estimate_to_json(r), m);
      std::cerr << "cube-lemma constant=" << fmt_e12(r.value) << " k=" << r.k << "\n";
    } else if (*li.app()) {
      auto m = li.manifest();
      const double p = to_double("p", g_p);
      const auto S = PointSet::box_boundary(Box{2, {0, 0, 0}, {1, 1, 0}});
      json rows = json::array();
      double lo = 1e300, hi = 0;
      for (double r : to_list("r", g_r)) {
        const auto v = log_distance_integral(S, Point{0, 0, 0}, r, p, to_int("cells", g_cells));
        rows.push_back({{"r", r}, {"value", num12(v.value)}, {"ratio", num12(v.ratio)}, {"excluded_measure", num12(v.excluded_measure)}});
        lo = std::min(lo, v.ratio);
        hi = std::max(hi, v.ratio);
      }
      emit_json(g_out, json{{"rows", rows}, {"band", num12(hi / lo)}}, m);
      std::cerr << "log-integral band=" << fmt_e12(hi / lo) << "\n";
    } else if (*di.app()) {
      auto m = di.manifest();
      const auto d = load_or_make(m_domain, m_preset, m_J, "2", m);
      PointSet S{d.dim(), d.boundary_faces(), {}};
      const double rmin = m_rmin.empty() ? 2 * d.pitch() : to_double("rmin", m_rmin);
      const auto c = minkowski_dimension_estimate(S, rmin, to_double("rmax", m_rmax));
      json rows = json::array();
      for (const auto& [r, v] : c.samples) rows.push_back({{"r", r}, {"precontent", num12(v)}});
      emit_json(m_out, json{{"fitted_dim", num12(c.fitted_dim)}, {"ci_halfwidth", num12(c.ci_halfwidth)}, {"r2", num12(c.r2)}, {"samples", rows}}, m);
      std::cerr << "dimension=" << fmt_e12(c.fitted_dim) << "\n";
    } else if (*po.app()) {
      auto m = po.manifest();
      m.seed = to_seed(o_seed);
      const auto d = load_or_make(o_domain, o_preset, o_J, "2", m);
      PointSet S{d.dim(), d.boundary_faces(), {}};
      const auto r = porosity_estimate(S, to_list("scales", o_scales), std::size_t(to_int("trials", o_trials)), *m.seed,
                                       to_double("floor", o_floor));
      emit_json(o_out, json{{"porous", r.porous}, {"kappa_hat", r.kappa_hat ? num12(*r.kappa_hat) : json(nullptr)},
                            {"kappa_min", num12(r.kappa_min)}, {"samples", r.samples}, {"failures", r.failures.size()}}, m);
      std::cerr << "porous=" << (r.porous ? "true" : "false") << "\n";
    } else if (*sv.app()) {
      auto m = sv.manifest();
      const auto base = make_domain(parse_preset(v_base), to_int("J", v_J));
      const auto bw = whitney_decompose(base, to_int("J", v_J));
      const auto g = build_s_version(bw, to_double("s", v_s), base.center());
      json j;
      j["s"] = g.s();
      j["scale_exponent"] = g.scale_exponent();
      j["measure"] = num12(g.measure());
      j["walls"] = g.wall_count();
      json apts = json::array();
      for (std::size_t i = 0; i < g.base().size(); ++i) {
        const auto& a = g.apartment_at(i);
        if (!a) continue;
        auto box = [](const Box& b) {
          json v = json::array();
          for (int k = 0; k < b.n; ++k) v.push_back({b.lo[k], b.hi[k]});
          return v;
        };
        apts.push_back({{"id", i}, {"l", a->l}, {"w", a->w}, {"room", box(a->room)}, {"passage", box(a->passage)},
                        {"tiny", box(a->tiny)}});
      }
      j["apartments"] = apts;
      if (v_decompose) {
        const auto w = whitney_decompose(g, 40);
        const auto cd = build_chain_decomposition(w, ChainStrategy::HopCount);
        const auto groups = base_generation_groups(g, w);
        ExponentSet e;
        e.n = g.dim();
        e.p = to_double("p", v_p);
        e.q = 1;
        e.delta = to_double("delta", v_delta);
        e.s = g.s();
        e.lambda = e.n - 1;
        j["whitney_cubes"] = w.size();
        j["sigma"] = report_to_json(eval_sigma_thm51(cd, e, groups));
        j["regime"] = to_string(check_regime(e).regime);
        std::cout << "sigma verdict=" << j["sigma"]["verdict"].get<std::string>() << "\n";
      }
      emit_json(v_out, j, m);
    } else if (*sh.app()) {
      auto m = sh.manifest();
      m.seed = to_seed(h_seed);
      const auto base = make_domain(parse_preset(h_base), to_int("J", h_J));
      const auto bw = whitney_decompose(base, to_int("J", h_J));
      const auto e = exponents("2", h_p, h_q, h_delta, "0.5", h_s, h_lambda);
      const auto g = build_s_version(bw, e.s, base.center());
      BmOptions opt;
      opt.target_rel = to_double("target-rel", h_target);
      opt.radius_factor = to_double("tau", h_tau);
      if (!(opt.radius_factor > 0 && opt.radius_factor <= 1)) fail("bad-exponents", "--tau must be in (0, 1]");
      const auto r = sharpness_experiment(g, e, std::size_t(to_int("m-max", h_mmax)), *m.seed, to_int("k0", h_k0), opt);
      write_file_atomic((std::filesystem::path(h_out) / "sharpness.csv").string(), sharpness_to_csv(r));
      json man;
      man["base"] = h_base;
      man["s"] = h_s;
      man["p"] = h_p;
      man["q"] = h_q;
      man["lambda"] = h_lambda.empty() ? "1" : h_lambda;
      man["delta"] = h_delta;
      man["tau"] = h_tau;
      man["k0"] = h_k0;
      man["m_max"] = h_mmax;
      man["seed"] = *m.seed;
      man["slope"] = num12(r.slope);
      man["target"] = num12(r.target);
      man["max_rel_stderr"] = num12(r.max_rel_stderr);
      man["scale_exponent"] = r.scale_exponent;
      man["pass"] = r.pass;
      man["run"] = m.to_json();
      write_file_atomic((std::filesystem::path(h_out) / "manifest.json").string(), dump(man));
      std::cout << (r.pass ? "PASS" : "FAIL") << " slope=" << fmt_e12(r.slope) << " target=" << fmt_e12(r.target) << "\n";
      if (!r.pass) return 1;
    }
  } catch (const Error& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    std::cerr << "error: " << e.code() << ": " << msg << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << "\n";
    return 2;
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::cerr << "wall_time=" << secs << "s\n";
  return 0;
}
