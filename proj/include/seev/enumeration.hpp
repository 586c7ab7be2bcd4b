#pragma once

// Enumeration of the linear regions of b that meet its zero level, and of
// the hinges where several such regions meet on the zero level.

#include <algorithm>
#include <istream>
#include <map>
#include <ostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <Eigen/Dense>

#include "seev/error.hpp"
#include "seev/linprog.hpp"
#include "seev/network.hpp"
#include "seev/parallel.hpp"
#include "seev/systems.hpp"

namespace seev {

using Hinge = std::vector<int>;  // sorted indices into BoundaryCatalog::regions

struct BoundaryCatalog {
  int input_dim = 0;
  std::vector<ActivationSet> regions;
  std::vector<Eigen::VectorXd> witnesses;  // one zero-level point per region
  std::vector<Hinge> hinges;

  int find(const ActivationSet& s) const {
    const auto it = std::lower_bound(regions.begin(), regions.end(), s);
    return it != regions.end() && *it == s ? static_cast<int>(it - regions.begin()) : -1;
  }
};

struct EnumOptions {
  long max_regions = 1'000'000;
  long max_hinges = 1'000'000;
  int max_bisection = 64;
  int seed_pairs = 16;        // sample pairs tried for extra boundary components
  bool exact_faces = true;    // confirm each USLP hit with the exact face program
  int max_hinge_order = 0;    // 0 means max(2, state dimension)
  int workers = 1;
  LpOptions lp;
};

// ---------------------------------------------------------------------------
// Initial set

namespace detail {

/// Bisection on one segment; returns a boundary activation set or nothing.
inline std::optional<ActivationSet> bisect_pair(const Network& net, Eigen::VectorXd left, Eigen::VectorXd right,
                                                const IntervalBox& box, const EnumOptions& opt) {
  for (int step = 0; step < opt.max_bisection; ++step) {
    const Eigen::VectorXd mid = 0.5 * (left + right);
    const double v = forward(net, mid);
    const ActivationSet s = activation_pattern(net, mid).active;
    if (v == 0.0) return s;
    if (boundary_lp(net, s, box, opt.lp).feasible()) return s;
    (v < 0.0 ? left : right) = mid;
  }
  return std::nullopt;
}

/// Samples of each sign; the pairing order is deterministic.
inline std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>> sign_pairs(
    const Network& net, const std::vector<Eigen::VectorXd>& unsafe, const std::vector<Eigen::VectorXd>& safe) {
  std::vector<const Eigen::VectorXd*> neg, pos;
  for (const auto& x : unsafe)
    if (forward(net, x) < 0.0) neg.push_back(&x);
  for (const auto& x : safe)
    if (forward(net, x) > 0.0) pos.push_back(&x);
  std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>> out;
  if (neg.empty() || pos.empty()) return out;
  // zip first so distinct pairs come early, then the remaining combinations
  const std::size_t z = std::min(neg.size(), pos.size());
  for (std::size_t i = 0; i < z; ++i) out.emplace_back(*neg[i], *pos[i]);
  for (std::size_t i = 0; i < neg.size() && out.size() < 4096; ++i)
    for (std::size_t j = 0; j < pos.size() && out.size() < 4096; ++j)
      if (i != j) out.emplace_back(*neg[i], *pos[j]);
  return out;
}

}  // namespace detail

inline ActivationSet initial_activation_set(const Network& net, const std::vector<Eigen::VectorXd>& unsafe_samples,
                                            const std::vector<Eigen::VectorXd>& safe_samples, const IntervalBox& box,
                                            const EnumOptions& opt = {}) {
  for (const auto& [u, s] : detail::sign_pairs(net, unsafe_samples, safe_samples))
    if (auto found = detail::bisect_pair(net, u, s, box, opt)) return *found;
  throw NotFound("initial_activation_set: no sample pair straddles the zero level of b");
}

// ---------------------------------------------------------------------------
// NBFS

namespace detail {

struct Expansion {
  bool on_boundary = false;
  Eigen::VectorXd witness;
  std::vector<ActivationSet> neighbours;
};

inline Expansion expand(const Network& net, const ActivationSet& s, const IntervalBox& box, const EnumOptions& opt) {
  Expansion e;
  const RegionAffine ra = region_affine(net, s);
  const LpOutcome b = boundary_lp(net, ra, box, opt.lp);
  if (!b.feasible()) return e;
  e.on_boundary = true;
  e.witness = b.witness;
  const auto hull = bounding_box(net, ra, box, opt.lp);
  if (!hull) return e;
  for (int k = 0; k < net.total_neurons(); ++k) {
    const Neuron nk = net.neuron_at(k);
    if (!uslp(net, ra, nk, *hull, opt.lp).feasible()) continue;
    if (opt.exact_faces && !face_lp(net, ra, nk, box, opt.lp).feasible()) continue;
    e.neighbours.push_back(s.flipped(k));
  }
  return e;
}

}  // namespace detail

/// Breadth-first closure from s0 over neighbours reachable across neuron
/// faces on the zero level. Returns the regions (sorted) and their witnesses.
inline BoundaryCatalog nbfs(const Network& net, const ActivationSet& s0, const IntervalBox& box,
                            const EnumOptions& opt = {}) {
  if (!net.compatible(s0)) throw DimensionMismatch("nbfs: activation set shape mismatch");
  std::unordered_set<ActivationSet, ActivationSetHash> visited{s0};
  std::map<ActivationSet, Eigen::VectorXd> found;
  std::vector<ActivationSet> frontier{s0};
  const int workers = resolve_workers(opt.workers);
  while (!frontier.empty()) {
    std::vector<detail::Expansion> results(frontier.size());
    parallel_for(frontier.size(), workers, [&](std::size_t i) { results[i] = detail::expand(net, frontier[i], box, opt); });
    std::vector<ActivationSet> next;
    for (std::size_t i = 0; i < frontier.size(); ++i) {
      if (!results[i].on_boundary) continue;
      found.emplace(frontier[i], results[i].witness);
      if (static_cast<long>(found.size()) > opt.max_regions)
        throw RegionBudgetExceeded("nbfs: more than " + std::to_string(opt.max_regions) + " boundary regions");
      for (auto& nb : results[i].neighbours)
        if (visited.insert(nb).second) next.push_back(std::move(nb));
    }
    std::sort(next.begin(), next.end());
    frontier = std::move(next);
  }
  BoundaryCatalog cat;
  cat.input_dim = net.input_dim();
  for (auto& [s, w] : found) {
    cat.regions.push_back(s);
    cat.witnesses.push_back(w);
  }
  return cat;
}

// ---------------------------------------------------------------------------
// Hinges

inline std::vector<Hinge> hinge_enum(const Network& net, const std::vector<ActivationSet>& regions, int n,
                                     const IntervalBox& box, const EnumOptions& opt = {}) {
  std::unordered_map<ActivationSet, int, ActivationSetHash> index;
  for (int i = 0; i < static_cast<int>(regions.size()); ++i) index.emplace(regions[i], i);
  std::vector<std::vector<int>> adjacent(regions.size());
  for (int i = 0; i < static_cast<int>(regions.size()); ++i)
    for (int k = 0; k < net.total_neurons(); ++k) {
      const auto it = index.find(regions[i].flipped(k));
      if (it != index.end()) adjacent[i].push_back(it->second);
    }
  for (auto& a : adjacent) std::sort(a.begin(), a.end());

  std::vector<RegionAffine> affine(regions.size());
  for (std::size_t i = 0; i < regions.size(); ++i) affine[i] = region_affine(net, regions[i]);
  auto feasible = [&](const Hinge& h) {
    std::vector<RegionAffine> ras;
    for (int i : h) ras.push_back(affine[i]);
    return hinge_lp(net, ras, box, opt.lp).feasible();
  };
  const int workers = resolve_workers(opt.workers);
  auto filter = [&](std::vector<Hinge> cands) {
    std::vector<char> ok(cands.size());
    parallel_for(cands.size(), workers, [&](std::size_t i) { ok[i] = feasible(cands[i]); });
    std::vector<Hinge> out;
    for (std::size_t i = 0; i < cands.size(); ++i)
      if (ok[i]) out.push_back(std::move(cands[i]));
    return out;
  };

  std::vector<Hinge> all;
  std::vector<Hinge> level;
  {
    std::vector<Hinge> cands;
    for (int i = 0; i < static_cast<int>(regions.size()); ++i)
      for (int j : adjacent[i])
        if (j > i) cands.push_back({i, j});
    level = filter(std::move(cands));
  }
  // In one dimension a fold of b can still sit on the zero level, so pairs
  // are always examined.
  const int max_order = opt.max_hinge_order > 0 ? opt.max_hinge_order : std::max(2, n);
  for (int k = 2; k <= max_order && !level.empty(); ++k) {
    all.insert(all.end(), level.begin(), level.end());
    if (static_cast<long>(all.size()) > opt.max_hinges)
      throw HingeBudgetExceeded("hinge_enum: more than " + std::to_string(opt.max_hinges) + " hinges");
    if (k == max_order) break;
    std::set<Hinge> cands;
    for (const auto& h : level) {
      std::set<int> extend;
      for (int member : h)
        for (int r : adjacent[member])
          if (!std::binary_search(h.begin(), h.end(), r)) extend.insert(r);
      for (int r : extend) {
        Hinge g = h;
        g.insert(std::upper_bound(g.begin(), g.end(), r), r);
        cands.insert(std::move(g));
      }
    }
    level = filter(std::vector<Hinge>(cands.begin(), cands.end()));
  }
  std::sort(all.begin(), all.end());
  return all;
}

// ---------------------------------------------------------------------------
// Composition

/// Boundary regions reachable from the seeds found between sample pairs;
/// hinges are left empty.
inline BoundaryCatalog enumerate_regions(const Network& net, const std::vector<Eigen::VectorXd>& unsafe_samples,
                                         const std::vector<Eigen::VectorXd>& safe_samples, const IntervalBox& box,
                                         const EnumOptions& opt = {}) {
  const auto pairs = detail::sign_pairs(net, unsafe_samples, safe_samples);
  std::map<ActivationSet, Eigen::VectorXd> found;
  bool any = false;
  int tried = 0;
  for (const auto& [u, s] : pairs) {
    if (any && tried >= opt.seed_pairs) break;
    const auto s0 = detail::bisect_pair(net, u, s, box, opt);
    if (!s0) continue;
    ++tried;
    any = true;
    if (found.count(*s0)) continue;
    const BoundaryCatalog part = nbfs(net, *s0, box, opt);
    for (std::size_t i = 0; i < part.regions.size(); ++i) found.emplace(part.regions[i], part.witnesses[i]);
    if (static_cast<long>(found.size()) > opt.max_regions)
      throw RegionBudgetExceeded("enumerate: more than " + std::to_string(opt.max_regions) + " boundary regions");
  }
  if (!any) throw NotFound("enumerate: no sample pair straddles the zero level of b");
  BoundaryCatalog cat;
  cat.input_dim = net.input_dim();
  for (auto& [s, w] : found) {
    cat.regions.push_back(s);
    cat.witnesses.push_back(w);
  }
  return cat;
}

inline BoundaryCatalog enumerate(const Network& net, const std::vector<Eigen::VectorXd>& unsafe_samples,
                                 const std::vector<Eigen::VectorXd>& safe_samples, const IntervalBox& box,
                                 const EnumOptions& opt = {}) {
  BoundaryCatalog cat = enumerate_regions(net, unsafe_samples, safe_samples, box, opt);
  cat.hinges = hinge_enum(net, cat.regions, net.input_dim(), box, opt);
  return cat;
}

/// Draws unsafe samples (h < 0 in the domain) and initial-set samples.
inline std::pair<std::vector<Eigen::VectorXd>, std::vector<Eigen::VectorXd>> boundary_samples(
    const ControlAffineSystem& sys, int count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Eigen::VectorXd> unsafe, safe;
  for (int i = 0; i < count; ++i) {
    auto x = sys.sample_unsafe(rng);
    if (!x) break;
    unsafe.push_back(std::move(*x));
  }
  for (int i = 0; i < count; ++i) safe.push_back(sys.sample_initial(rng));
  return {std::move(unsafe), std::move(safe)};
}

inline BoundaryCatalog enumerate(const Network& net, const ControlAffineSystem& sys, const EnumOptions& opt = {},
                                 int samples = 1000, std::uint64_t seed = 0) {
  if (net.input_dim() != sys.n) throw DimensionMismatch("enumerate: network and system dimensions differ");
  const auto [unsafe, safe] = boundary_samples(sys, samples, seed);
  return enumerate(net, unsafe, safe, sys.domain, opt);
}

// ---------------------------------------------------------------------------
// Text format

inline void write_catalog(std::ostream& os, const BoundaryCatalog& cat) {
  const int total = cat.regions.empty() ? 0 : cat.regions.front().size();
  os << "catalog v1 n=" << cat.input_dim << " neurons=" << total << " regions=" << cat.regions.size()
     << " hinges=" << cat.hinges.size() << "\n";
  os.precision(17);
  for (std::size_t i = 0; i < cat.regions.size(); ++i) {
    os << "region " << i << ' ' << cat.regions[i].to_hex();
    for (int k = 0; k < cat.witnesses[i].size(); ++k) os << ' ' << cat.witnesses[i][k];
    os << "\n";
  }
  for (const auto& h : cat.hinges) {
    os << "hinge";
    for (int i : h) os << ' ' << i;
    os << "\n";
  }
}

inline BoundaryCatalog read_catalog(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw ParseError("catalog: empty input");
  std::istringstream head(line);
  std::string word, version;
  head >> word >> version;
  if (word != "catalog" || version != "v1") throw ParseError("catalog: bad header");
  std::map<std::string, long> keys;
  while (head >> word) {
    const auto eq = word.find('=');
    if (eq == std::string::npos) throw ParseError("catalog: bad header field '" + word + "'");
    try {
      keys[word.substr(0, eq)] = std::stol(word.substr(eq + 1));
    } catch (const std::exception&) {
      throw ParseError("catalog: bad header field '" + word + "'");
    }
  }
  for (const char* k : {"n", "neurons", "regions", "hinges"})
    if (!keys.count(k)) throw ParseError(std::string("catalog: missing header field ") + k);
  BoundaryCatalog cat;
  cat.input_dim = static_cast<int>(keys["n"]);
  const int total = static_cast<int>(keys["neurons"]);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    ls >> word;
    if (word == "region") {
      std::size_t idx;
      std::string hex;
      if (!(ls >> idx >> hex) || idx != cat.regions.size()) throw ParseError("catalog: bad region line");
      cat.regions.push_back(ActivationSet::from_hex(hex, total));
      Eigen::VectorXd w(cat.input_dim);
      for (int k = 0; k < cat.input_dim; ++k)
        if (!(ls >> w[k])) throw ParseError("catalog: bad witness");
      cat.witnesses.push_back(w);
    } else if (word == "hinge") {
      Hinge h;
      int i;
      while (ls >> i) {
        if (i < 0 || i >= static_cast<int>(cat.regions.size())) throw ParseError("catalog: hinge index out of range");
        h.push_back(i);
      }
      if (h.size() < 2) throw ParseError("catalog: hinge with fewer than two regions");
      cat.hinges.push_back(std::move(h));
    } else {
      throw ParseError("catalog: unknown line '" + word + "'");
    }
  }
  if (static_cast<long>(cat.regions.size()) != keys["regions"] || static_cast<long>(cat.hinges.size()) != keys["hinges"])
    throw ParseError("catalog: counts do not match header");
  return cat;
}

}  // namespace seev
