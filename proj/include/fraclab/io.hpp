#pragma once

// File formats: domains, Whitney decompositions, chains, condition reports,
// grid functions and run manifests. Writes go through a temp file + rename.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>

#include <json.hpp>

#include "fraclab/counterexample.hpp"
#include "fraclab/functional.hpp"

namespace fraclab {

using json = nlohmann::ordered_json;

inline constexpr const char* kVersion = "0.1.0";

// ---------------------------------------------------------------------------
// Plumbing

inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::string fmt_e12(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12e", v);
  return buf;
}

// Round-trips v through %.12e so JSON numbers carry exactly the reported digits.
inline double round12(double v) { return std::isfinite(v) ? std::strtod(fmt_e12(v).c_str(), nullptr) : v; }

inline json num12(double v) {
  if (std::isfinite(v)) return round12(v);
  return v > 0 ? json("inf") : (v < 0 ? json("-inf") : json("nan"));
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("io-error", "cannot open ", path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file_atomic(const std::string& path, const std::string& data) {
  namespace fs = std::filesystem;
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  const fs::path tmp = p.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail("io-error", "cannot write ", tmp.string());
    out << data;
    if (!out.flush()) fail("io-error", "write failed for ", tmp.string());
  }
  fs::rename(tmp, p);
}

inline json parse_json_file(const std::string& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::exception& e) {
    fail("bad-json", path, ": ", e.what());
  }
}

inline std::string dump(const json& j) { return j.dump(1) + "\n"; }

/// Run manifest embedded in every artifact: parameters exactly as given on
/// the command line, input hashes, seed and version. Wall time is printed,
/// not stored, so equal manifests give byte-identical files.
struct RunManifest {
  std::string command;
  std::vector<std::pair<std::string, std::string>> params;
  std::vector<std::pair<std::string, std::string>> inputs;  // path, fnv1a64
  std::optional<std::uint64_t> seed;

  json to_json() const {
    json j;
    j["command"] = command;
    json p = json::object();
    for (const auto& [k, v] : params) p[k] = v;
    j["params"] = p;
    json in = json::object();
    for (const auto& [k, v] : inputs) in[k] = v;
    j["inputs"] = in;
    j["seed"] = seed ? json(*seed) : json(nullptr);
    j["version"] = kVersion;
    return j;
  }
};

// ---------------------------------------------------------------------------
// Domains

// Run-length encoding of a bit vector as "count*bit" tokens.
inline std::string rle_encode(const std::vector<std::uint8_t>& bits) {
  std::string out;
  std::size_t i = 0;
  while (i < bits.size()) {
    std::size_t j = i;
    while (j < bits.size() && bits[j] == bits[i]) ++j;
    if (!out.empty()) out += ' ';
    out += std::to_string(j - i) + '*' + (bits[i] ? '1' : '0');
    i = j;
  }
  return out;
}

inline std::vector<std::uint8_t> rle_decode(const std::string& s, std::size_t expect) {
  std::vector<std::uint8_t> bits;
  bits.reserve(expect);
  std::istringstream in(s);
  std::string tok;
  while (in >> tok) {
    const auto star = tok.find('*');
    if (star == std::string::npos || star + 2 != tok.size() || (tok.back() != '0' && tok.back() != '1'))
      fail("bad-domain", "malformed run '", tok, "'");
    const auto count = std::stoull(tok.substr(0, star));
    bits.insert(bits.end(), count, tok.back() == '1');
  }
  if (bits.size() != expect) fail("bad-domain", "occupancy has ", bits.size(), " cells, expected ", expect);
  return bits;
}

inline json domain_to_json(const VoxelDomain& d, bool with_dist = false) {
  const int n = d.dim();
  // Stored grid minus its padding layer.
  IPoint org{}, dims{};
  for (int i = 0; i < n; ++i) {
    org[i] = d.grid_origin()[i] + 1;
    dims[i] = d.grid_dims()[i] - 2;
  }
  std::vector<std::uint8_t> bits;
  std::vector<double> dist;
  std::size_t total = 1;
  for (int i = 0; i < n; ++i) total *= std::size_t(dims[i]);
  bits.reserve(total);
  for (std::size_t f = 0; f < total; ++f) {
    IPoint c{};
    std::size_t r = f;
    for (int i = 0; i < n; ++i) {
      c[i] = std::int64_t(r % std::size_t(dims[i])) + 1;
      r /= std::size_t(dims[i]);
    }
    const auto lf = d.local_flat(c);
    bits.push_back(d.occupied_local(lf));
    if (with_dist && d.occupied_local(lf)) dist.push_back(d.voxel_distance(lf));
  }
  const double h = d.pitch();
  json j;
  j["n"] = n;
  j["J"] = d.resolution();
  json bbox = json::array();
  for (int i = 0; i < n; ++i) bbox.push_back({double(org[i]) * h, double(org[i] + dims[i]) * h});
  j["bbox"] = bbox;
  j["occupancy"] = rle_encode(bits);
  if (with_dist && d.has_distance()) {
    json a = json::array();
    for (double v : dist) a.push_back(num12(v));
    j["dist_field"] = a;
  }
  return j;
}

inline VoxelDomain domain_from_json(const json& j) {
  try {
    const int n = j.at("n").get<int>(), J = j.at("J").get<int>();
    if (n != 2 && n != 3) fail("bad-domain", "n must be 2 or 3");
    if (J < 0 || J > 20) fail("bad-domain", "J out of range");
    const double h = std::ldexp(1.0, -J);
    IPoint org{}, dims{1, 1, 1};
    std::size_t total = 1;
    for (int i = 0; i < n; ++i) {
      const double lo = j.at("bbox").at(i).at(0).get<double>(), hi = j.at("bbox").at(i).at(1).get<double>();
      org[i] = std::llround(lo / h);
      dims[i] = std::llround((hi - lo) / h);
      if (dims[i] <= 0) fail("bad-domain", "empty bounding box on axis ", i);
      total *= std::size_t(dims[i]);
    }
    auto d = VoxelDomain(n, J, org, dims, rle_decode(j.at("occupancy").get<std::string>(), total));
    return j.contains("dist_field") ? distance_transform(d) : d;
  } catch (const json::exception& e) {
    fail("bad-domain", e.what());
  }
}

inline std::string domain_hash(const VoxelDomain& d) { return hex64(fnv1a64(domain_to_json(d).dump())); }

// ---------------------------------------------------------------------------
// Whitney decompositions

inline json whitney_to_json(const WhitneyDecomposition& w) {
  json j;
  j["n"] = w.n;
  j["J_max"] = w.J_max;
  j["root_id"] = w.root_id;
  j["root_in_collar"] = w.root_in_collar;
  j["covered_measure"] = num12(w.covered_measure);
  j["collar_measure"] = num12(w.collar_measure);
  json counts = json::object();
  for (const auto& [k, c] : w.counts()) counts[std::to_string(k)] = c;
  j["counts_per_generation"] = counts;
  json cubes = json::array();
  for (std::size_t i = 0; i < w.size(); ++i) {
    json k = json::array();
    for (int a = 0; a < w.n; ++a) k.push_back(w.cubes[i].corner[a]);
    cubes.push_back({{"id", i}, {"j", w.cubes[i].generation}, {"k", k}});
  }
  j["cubes"] = cubes;
  json adj = json::array();
  for (const auto& [a, b] : w.edges()) adj.push_back({a, b});
  j["adjacency"] = adj;
  return j;
}

inline WhitneyDecomposition whitney_from_json(const json& j) {
  try {
    const int n = j.at("n").get<int>();
    std::vector<DyadicCube> cubes;
    for (const auto& c : j.at("cubes")) {
      DyadicCube q{n, c.at("j").get<int>(), {}};
      for (int a = 0; a < n; ++a) q.corner[a] = c.at("k").at(a).get<std::int64_t>();
      if (c.at("id").get<std::size_t>() != cubes.size()) fail("bad-whitney", "cube ids must be 0..N-1 in order");
      cubes.push_back(q);
    }
    const auto root = j.at("root_id").get<std::size_t>();
    if (root >= cubes.size()) fail("bad-whitney", "root_id out of range");
    const Point center = cubes[root].midpoint();
    const double measure = j.at("covered_measure").get<double>() + j.at("collar_measure").get<double>();
    auto w = from_cubes(std::move(cubes), n, j.at("J_max").get<int>(), center, measure);
    if (w.root_id != root) fail("bad-whitney", "cubes are not in canonical order");
    w.root_in_collar = j.value("root_in_collar", false);
    return w;
  } catch (const json::exception& e) {
    fail("bad-whitney", e.what());
  }
}

// ---------------------------------------------------------------------------
// Chains

inline json chains_to_json(const ChainDecomposition& cd) {
  json j;
  j["root_id"] = cd.root_id();
  j["strategy"] = to_string(cd.strategy());
  json chains = json::object(), lengths = json::object();
  for (std::size_t q = 0; q < cd.size(); ++q) {
    chains[std::to_string(q)] = cd.chain(q);
    lengths[std::to_string(q)] = cd.length(q);
  }
  j["chains"] = chains;
  j["lengths"] = lengths;
  j["whitney"] = whitney_to_json(cd.whitney());
  return j;
}

// Owns the decomposition the chains point into.
struct LoadedChains {
  std::unique_ptr<WhitneyDecomposition> w;
  ChainDecomposition cd;
};

inline LoadedChains chains_from_json(const json& j) {
  LoadedChains out;
  try {
    out.w = std::make_unique<WhitneyDecomposition>(whitney_from_json(j.at("whitney")));
    const auto strategy = parse_strategy(j.at("strategy").get<std::string>());
    const std::size_t N = out.w->size();
    std::vector<std::vector<std::uint32_t>> chains(N);
    for (std::size_t q = 0; q < N; ++q) chains[q] = j.at("chains").at(std::to_string(q)).get<std::vector<std::uint32_t>>();
    if (strategy == ChainStrategy::HopCount) {
      out.cd = build_chain_decomposition(*out.w, ChainStrategy::HopCount);
      for (std::size_t q = 0; q < N; ++q)
        if (out.cd.chain(q) != chains[q]) fail("bad-chains", "stored hop-count chain of cube ", q, " differs from the rebuilt one");
    } else {
      out.cd = ChainDecomposition::explicit_chains(*out.w, std::move(chains));
    }
  } catch (const json::exception& e) {
    fail("bad-chains", e.what());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reports

inline json report_to_json(const ConditionReport& r) {
  json j;
  j["condition"] = r.kind;
  j["value"] = num12(r.value);
  j["verdict"] = to_string(r.verdict);
  j["tail_estimate"] = num12(r.tail_estimate);
  json rows = json::array();
  for (const auto& g : r.rows) rows.push_back({{"j", g.generation}, {"increment", num12(g.increment)}, {"running", num12(g.partial)}});
  j["per_generation"] = rows;
  if (r.argmax) j["argmax_id"] = *r.argmax;
  return j;
}

inline std::string report_to_csv(const ConditionReport& r) {
  std::string s = "j,increment,running\n";
  for (const auto& g : r.rows) s += std::to_string(g.generation) + "," + fmt_e12(g.increment) + "," + fmt_e12(g.partial) + "\n";
  return s;
}

inline json estimate_to_json(const EstimateReport& r) {
  json j;
  j["method"] = r.method;
  j["value"] = num12(r.value);
  j["seed"] = r.seed ? json(*r.seed) : json(nullptr);
  j["restarts"] = r.restarts;
  j["iterations"] = r.iterations;
  j["converged"] = r.converged;
  json t = json::array();
  for (double v : r.trajectory) t.push_back(num12(v));
  j["trajectory"] = t;
  j["components"] = r.components;
  j["isolated_voxels"] = r.isolated_voxels;
  if (r.k) j["k"] = r.k;
  return j;
}

inline json function_to_json(const GridFunction& u) {
  json j;
  j["domain_hash"] = domain_hash(u.domain());
  j["values"] = u.values();  // shortest round-trip form, at most %.17g digits
  return j;
}

inline std::string sharpness_to_csv(const SharpnessReport& r) {
  std::string s = "m,Am,Bm,Bm_stderr,ratio,paper_bound_Bm\n";
  for (const auto& row : r.rows)
    s += std::to_string(row.m) + "," + fmt_e12(row.Am) + "," + fmt_e12(row.Bm) + "," + fmt_e12(row.Bm_stderr) + "," +
         fmt_e12(row.ratio) + "," + fmt_e12(row.paper_bound_Bm) + "\n";
  return s;
}

}  // namespace fraclab
