#pragma once

// End-to-end exact verification: enumerate the boundary, then check
// correctness, hyperplane and hinge conditions in that order.

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "seev/conditions.hpp"
#include "seev/enumeration.hpp"
#include "seev/parallel.hpp"

namespace seev {

enum class CeCategory { Correctness, Hyperplane, Hinge };

inline const char* to_string(CeCategory c) {
  switch (c) {
    case CeCategory::Correctness: return "correctness";
    case CeCategory::Hyperplane: return "hyperplane";
    case CeCategory::Hinge: return "hinge";
  }
  return "?";
}

inline const char* condition_id(CeCategory c) {
  switch (c) {
    case CeCategory::Correctness: return "h-nonnegative";
    case CeCategory::Hyperplane: return "boundary-invariance";
    case CeCategory::Hinge: return "hinge-invariance";
  }
  return "?";
}

struct Counterexample {
  Eigen::VectorXd state;
  CeCategory category = CeCategory::Correctness;
  std::vector<ActivationSet> regions;
  std::string condition;
  std::string detail;
};

/// A piece whose minimum could not be separated from zero.
struct UndecidedPiece {
  CeCategory category = CeCategory::Correctness;
  std::vector<ActivationSet> regions;
  Eigen::VectorXd candidate;
  double lower_bound = 0.0;
  std::string reason;
};

struct PathHistogram {
  std::array<long, 5> counts{};

  void add(DischargePath p) { ++counts[static_cast<int>(p)]; }
  long operator[](DischargePath p) const { return counts[static_cast<int>(p)]; }
  long total() const {
    long t = 0;
    for (long c : counts) t += c;
    return t;
  }
  long sufficient() const {
    return (*this)[DischargePath::SufficientZeroInput] + (*this)[DischargePath::SufficientSignConsensus] +
           (*this)[DischargePath::ConstantGNonzero];
  }
  double sufficient_fraction() const { return total() ? static_cast<double>(sufficient()) / total() : 0.0; }
};

struct VerificationReport {
  bool verified = false;
  std::vector<Counterexample> counterexamples;
  std::vector<UndecidedPiece> undecided;
  BoundaryCatalog catalog;
  std::size_t num_regions = 0;
  std::size_t num_hinges = 0;
  double t_enum = 0.0;   // seconds to find the boundary regions
  double t_h = 0.0;      // correctness and hyperplane checks
  double t_g = 0.0;      // hinge enumeration and checks
  long hyperplane_checks = 0;
  long hinge_checks = 0;
  PathHistogram correctness_paths, hyperplane_paths, hinge_paths;
  bool stopped_early = false;

  long count(CeCategory c) const {
    long k = 0;
    for (const auto& ce : counterexamples) k += ce.category == c;
    return k;
  }
  std::string reason() const {
    if (verified) return "verified";
    if (!counterexamples.empty()) return std::to_string(counterexamples.size()) + " counterexample(s)";
    return std::to_string(undecided.size()) + " undecided piece(s)";
  }
};

struct VerifyOptions {
  EnumOptions enumeration;
  ConditionOptions conditions;
  bool fail_fast = false;
  int max_per_category = 32;
  int workers = 0;
  int samples = 1000;
  std::uint64_t seed = 0;
};

namespace detail {

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

/// Runs one phase over `count` items; returns verdicts in item order.
/// With `stop` set, items not yet started are skipped once a counterexample
/// has been found.
template <class Fn>
std::vector<std::optional<ConditionVerdict>> run_phase(std::size_t count, int workers, bool stop, Fn&& check) {
  std::vector<std::optional<ConditionVerdict>> out(count);
  std::atomic<bool> failed{false};
  parallel_for(count, workers, [&](std::size_t i) {
    if (stop && failed.load()) return;
    out[i] = check(i);
    if (out[i]->status == VerdictStatus::Counterexample) failed = true;
  });
  return out;
}

/// Folds the verdicts of one phase into the report; false when the caller
/// should stop (fail-fast and something failed).
inline bool absorb(VerificationReport& rep, CeCategory cat, const std::vector<std::optional<ConditionVerdict>>& verdicts,
                   const std::vector<std::vector<ActivationSet>>& pieces, PathHistogram& hist, const VerifyOptions& opt) {
  long kept = rep.count(cat);
  bool any_ce = false, any_ce_kept = false;
  for (std::size_t i = 0; i < verdicts.size(); ++i) {
    if (!verdicts[i]) {
      rep.stopped_early = true;
      continue;
    }
    const auto& v = *verdicts[i];
    switch (v.status) {
      case VerdictStatus::Safe: hist.add(v.path); break;
      case VerdictStatus::Counterexample:
        any_ce = true;
        if (kept < opt.max_per_category && !(opt.fail_fast && any_ce_kept)) {
          rep.counterexamples.push_back({v.point, cat, pieces[i], condition_id(cat), v.detail});
          ++kept;
          any_ce_kept = true;
        }
        break;
      case VerdictStatus::Undecided:
        rep.undecided.push_back({cat, pieces[i], v.point, v.lower_bound, v.detail});
        break;
    }
  }
  return !(opt.fail_fast && any_ce);
}

}  // namespace detail

/// Verifies the network against the system. Enumeration budget errors and
/// a missing zero level (NotFound) propagate.
inline VerificationReport verify(const Network& net, const ControlAffineSystem& sys, const VerifyOptions& opt = {}) {
  if (net.input_dim() != sys.n) throw DimensionMismatch("verify: network and system dimensions differ");
  VerificationReport rep;
  const int workers = resolve_workers(opt.workers);
  EnumOptions eo = opt.enumeration;
  eo.workers = workers;

  auto t0 = detail::Clock::now();
  const auto [unsafe, safe] = boundary_samples(sys, opt.samples, opt.seed);
  rep.catalog = enumerate_regions(net, unsafe, safe, sys.domain, eo);
  rep.num_regions = rep.catalog.regions.size();
  rep.t_enum = detail::seconds_since(t0);

  auto finish = [&rep] {
    rep.verified = rep.counterexamples.empty() && rep.undecided.empty() && !rep.stopped_early;
    return rep;
  };

  // unsafe samples inside D are correctness violations on their own
  for (const auto& x : unsafe) {
    if (static_cast<int>(rep.counterexamples.size()) >= opt.max_per_category) break;
    if (forward(net, x) >= 0.0) {
      rep.counterexamples.push_back({x, CeCategory::Correctness, {activation_pattern(net, x).active},
                                     condition_id(CeCategory::Correctness), "unsafe sample inside D"});
      if (opt.fail_fast) {
        rep.stopped_early = true;
        return finish();
      }
    }
  }

  const auto& regions = rep.catalog.regions;
  std::vector<std::vector<ActivationSet>> singles;
  for (const auto& s : regions) singles.push_back({s});

  t0 = detail::Clock::now();
  const auto correctness = detail::run_phase(regions.size(), workers, opt.fail_fast, [&](std::size_t i) {
    return verify_correctness(net, sys, region_affine(net, regions[i]), opt.conditions);
  });
  bool go = detail::absorb(rep, CeCategory::Correctness, correctness, singles, rep.correctness_paths, opt);
  if (go) {
    const auto hyper = detail::run_phase(regions.size(), workers, opt.fail_fast, [&](std::size_t i) {
      return verify_hyperplane(net, sys, region_affine(net, regions[i]), opt.conditions);
    });
    rep.hyperplane_checks = std::count_if(hyper.begin(), hyper.end(), [](const auto& v) { return v.has_value(); });
    go = detail::absorb(rep, CeCategory::Hyperplane, hyper, singles, rep.hyperplane_paths, opt);
  }
  rep.t_h = detail::seconds_since(t0);
  if (!go) {
    rep.stopped_early = true;
    return finish();
  }

  t0 = detail::Clock::now();
  rep.catalog.hinges = hinge_enum(net, regions, net.input_dim(), sys.domain, eo);
  rep.num_hinges = rep.catalog.hinges.size();
  std::vector<std::vector<ActivationSet>> hinge_sets;
  for (const auto& h : rep.catalog.hinges) {
    std::vector<ActivationSet> sets;
    for (int i : h) sets.push_back(regions[i]);
    hinge_sets.push_back(std::move(sets));
  }
  const auto hinge = detail::run_phase(hinge_sets.size(), workers, opt.fail_fast, [&](std::size_t i) {
    return verify_hinge(net, sys, hinge_sets[i], opt.conditions);
  });
  rep.hinge_checks = std::count_if(hinge.begin(), hinge.end(), [](const auto& v) { return v.has_value(); });
  if (!detail::absorb(rep, CeCategory::Hinge, hinge, hinge_sets, rep.hinge_paths, opt)) rep.stopped_early = true;
  rep.t_g = detail::seconds_since(t0);
  return finish();
}

inline void write_counterexamples(std::ostream& os, const VerificationReport& rep) {
  const auto old = os.precision(17);
  for (const auto& ce : rep.counterexamples) {
    os << "CE " << to_string(ce.category) << ' ' << ce.condition;
    for (int k = 0; k < ce.state.size(); ++k) os << ' ' << ce.state[k];
    os << '\n';
  }
  os.precision(old);
}

inline void write_summary(std::ostream& os, const VerificationReport& rep) {
  os << "verified " << (rep.verified ? "true" : "false") << '\n';
  os << "regions " << rep.num_regions << '\n';
  os << "hinges " << rep.num_hinges << '\n';
  os << "t_enum " << rep.t_enum << "\nt_h " << rep.t_h << "\nt_g " << rep.t_g << '\n';
  os << "counterexamples correctness=" << rep.count(CeCategory::Correctness)
     << " hyperplane=" << rep.count(CeCategory::Hyperplane) << " hinge=" << rep.count(CeCategory::Hinge) << '\n';
  os << "undecided " << rep.undecided.size() << '\n';
  auto hist = [&os](const char* name, const PathHistogram& h) {
    os << "paths " << name;
    for (int p = 0; p < 5; ++p) os << ' ' << to_string(static_cast<DischargePath>(p)) << '=' << h.counts[p];
    os << '\n';
  };
  hist("correctness", rep.correctness_paths);
  hist("hyperplane", rep.hyperplane_paths);
  hist("hinge", rep.hinge_paths);
  if (!rep.verified) os << "reason " << rep.reason() << '\n';
}

}  // namespace seev
