// Acceptance run: one PASS/FAIL line per criterion. Usage: acceptance_test <path-to-seev-cli>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include <json.hpp>

#include "oracles.hpp"
#include "seev/seev.hpp"
#include "test_nets.hpp"

using namespace seev;
using seev::testing::mat;
using seev::testing::vec;

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int failures = 0;

void report(int id, bool pass, const std::string& detail) {
  std::cout << (pass ? "PASS" : "FAIL") << " criterion " << id << ": " << detail << std::endl;
  failures += !pass;
}

std::string fmt(double v, int prec = 3) {
  std::ostringstream os;
  os.precision(prec);
  os << v;
  return os.str();
}

const IntervalBox kSquare = IntervalBox::uniform(2, -2.0, 2.0);

/// Planar linear flow with an unsafe disc and a small initial box around the origin.
ControlAffineSystem planar(const Eigen::MatrixXd& a, Eigen::VectorXd center, double r) {
  ControlAffineSystem sys;
  sys.name = "planar";
  sys.n = 2;
  sys.domain = kSquare;
  set_linear_drift(sys, a);
  set_sphere_h(sys, {0, 1}, std::move(center), r * r);
  set_box_initial(sys, IntervalBox::uniform(2, -0.1, 0.1));
  return sys;
}

std::optional<ActivationSet> grid_seed(const Network& net, const IntervalBox& box) {
  const int n = 24;
  for (int i = 0; i <= n; ++i)
    for (int j = 0; j < n; ++j) {
      const Eigen::Vector2d a(box[0].lo() + box[0].width() * i / n, box[1].lo() + box[1].width() * j / n);
      const Eigen::Vector2d b(a[0], box[1].lo() + box[1].width() * (j + 1) / n);
      const double fa = forward(net, a), fb = forward(net, b);
      if ((fa < 0) != (fb < 0) && fa != 0 && fb != 0) {
        const auto lo = fa < 0 ? a : b, hi = fa < 0 ? b : a;
        return initial_activation_set(net, {lo}, {hi}, box);
      }
    }
  return std::nullopt;
}

struct VerifiedCase {
  std::string label;
  Network net;
  ControlAffineSystem sys;
  NominalPolicy nominal;
};

// 1 -------------------------------------------------------------------------

void criterion_enumeration() {
  std::mt19937_64 rng(2024);
  int compared = 0, equal = 0;
  double pipeline = 0.0;
  for (int trial = 0; compared < 50 && trial < 1000; ++trial) {
    std::vector<int> sizes;
    if (trial % 2 == 0) {
      sizes = {std::uniform_int_distribution<int>(2, 10)(rng)};
    } else {
      const int first = std::uniform_int_distribution<int>(2, 6)(rng);
      sizes = {first, std::uniform_int_distribution<int>(2, 10 - first)(rng)};
    }
    const Network net = seev::testing::random_net(rng, 2, sizes);
    const auto s0 = grid_seed(net, kSquare);
    if (!s0) continue;
    const auto t0 = Clock::now();
    auto cat = nbfs(net, *s0, kSquare);
    cat.hinges = hinge_enum(net, cat.regions, 2, kSquare);
    pipeline += since(t0);

    const auto oracle = seev::testing::brute_force_component(net, *s0, kSquare);
    const std::set<ActivationSet> got(cat.regions.begin(), cat.regions.end());
    std::set<std::pair<ActivationSet, ActivationSet>> hinges;
    bool pairs_only = true;
    for (const auto& h : cat.hinges) {
      if (h.size() != 2) {
        pairs_only = false;
        continue;
      }
      hinges.insert(std::minmax(cat.regions[h[0]], cat.regions[h[1]]));
    }
    equal += pairs_only && got == oracle.regions && hinges == oracle.hinges;
    ++compared;
  }
  report(1, compared == 50 && equal == compared && pipeline < 60.0,
         std::to_string(equal) + "/" + std::to_string(compared) + " nets match the 2^N oracle, enumeration " +
             fmt(pipeline) + " s (limit 60 s)");
}

// 2 -------------------------------------------------------------------------

bool genuine(const Network& net, const ControlAffineSystem& sys, const Counterexample& ce) {
  if (ce.category == CeCategory::Correctness) return sys.h(ce.state) < 0.0 && forward(net, ce.state) >= -1e-6;
  return std::abs(forward(net, ce.state)) <= 1e-6 && !nagumo_point_check(net, sys, ce.state);
}

void criterion_counterexamples(std::vector<VerifiedCase>& verified) {
  std::mt19937_64 rng(515);
  std::normal_distribution<double> nd;
  long runs = 0, ces = 0, false_ces = 0;
  const auto t0 = Clock::now();
  for (int trial = 0; runs < 520 && trial < 5000; ++trial) {
    ControlAffineSystem sys;
    Network net;
    const int kind = trial % 5;
    if (kind == 3) {
      sys = darboux();
      net = seev::testing::random_net(rng, 2, {4, 4}, 1.0);
    } else if (kind == 4) {
      sys = obstacle_avoidance();
      net = seev::testing::random_net(rng, 3, {5}, 1.0);
    } else {
      Eigen::MatrixXd a(2, 2);
      for (int i = 0; i < 4; ++i) a(i / 2, i % 2) = nd(rng);
      sys = planar(a, vec({1.6, 1.6}), 0.4);
      if (kind >= 1) {
        set_constant_input(sys, mat({{nd(rng)}, {nd(rng)}}));
        sys.input = kind == 1 ? InputSet::box(mat({{std::abs(nd(rng))}})) : InputSet::unconstrained();
      }
      net = seev::testing::random_net(rng, 2, {3 + trial % 4}, 1.0);
    }
    VerificationReport rep;
    try {
      rep = verify(net, sys);
    } catch (const NotFound&) {
      continue;
    }
    ++runs;
    for (const auto& ce : rep.counterexamples) {
      ++ces;
      false_ces += !genuine(net, sys, ce);
    }
    if (rep.verified && verified.size() < 4 && sys.m > 0) {
      const Eigen::VectorXd push = vec({1.6, 1.6});
      verified.push_back({"random verified net (trial " + std::to_string(trial) + ")", net, sys,
                          [push](double, const Eigen::VectorXd& x) { return (Eigen::VectorXd(1) << 3.0 * (push - x).sum()).finished(); }});
    }
  }
  report(2, runs >= 500 && false_ces == 0 && ces > 0,
         std::to_string(runs) + " verification runs, " + std::to_string(ces) + " counterexamples, " +
             std::to_string(false_ces) + " false (" + fmt(since(t0)) + " s)");
}

// 3 -------------------------------------------------------------------------

struct SafetyCheck {
  long points = 0, point_failures = 0;
  int sims = 0;
  double min_b = std::numeric_limits<double>::infinity();
};

SafetyCheck empirical_safety(const VerifiedCase& c, std::uint64_t seed) {
  SafetyCheck out;
  std::mt19937_64 rng(seed);
  std::vector<Eigen::VectorXd> neg, pos;
  for (int i = 0; i < 200000 && (neg.size() < 400 || pos.size() < 400); ++i) {
    Eigen::VectorXd x = c.sys.sample_domain(rng);
    auto& bucket = forward(c.net, x) < 0.0 ? neg : pos;
    if (bucket.size() < 400) bucket.push_back(std::move(x));
  }
  if (neg.empty() || pos.empty()) return out;
  std::uniform_int_distribution<std::size_t> pick_neg(0, neg.size() - 1), pick_pos(0, pos.size() - 1);
  while (out.points < 100000) {
    Eigen::VectorXd lo = neg[pick_neg(rng)], hi = pos[pick_pos(rng)];
    for (int it = 0; it < 60; ++it) {
      const Eigen::VectorXd mid = 0.5 * (lo + hi);
      (forward(c.net, mid) < 0.0 ? lo : hi) = mid;
    }
    ++out.points;
    out.point_failures += !nagumo_point_check(c.net, c.sys, hi);
  }
  std::vector<Eigen::VectorXd> starts;
  for (int i = 0; i < 100; ++i) starts.push_back(c.sys.sample_initial(rng));
  const auto trajs = simulate_many(c.net, c.sys, starts, c.nominal, 10.0, 1e-3, {}, resolve_workers(0));
  for (const auto& tr : trajs) {
    ++out.sims;
    out.min_b = std::min(out.min_b, tr.min_b());
  }
  return out;
}

void criterion_empirical(const std::vector<VerifiedCase>& cases) {
  bool pass = !cases.empty();
  std::ostringstream detail;
  detail << cases.size() << " verified nets";
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const auto r = empirical_safety(cases[i], 900 + i);
    const bool ok = r.points == 100000 && r.point_failures == 0 && r.sims == 100 && r.min_b >= -1e-3;
    pass = pass && ok;
    detail << "; " << cases[i].label << ": " << r.point_failures << "/" << r.points << " point failures, min b "
           << fmt(r.min_b) << " over " << r.sims << " runs";
  }
  report(3, pass, detail.str());
}

// 4 -------------------------------------------------------------------------

void criterion_darboux(std::vector<VerifiedCase>& verified) {
  const auto t0 = Clock::now();
  int passed = 0;
  std::ostringstream detail;
  for (std::uint64_t seed : {0, 1, 2}) {
    TrainingConfig cfg = default_config("darboux");
    cfg.seed = seed;
    cfg.epochs = 50;
    cfg.ce_guidance = true;
    TrainHooks hooks;
    hooks.workers = resolve_workers(0);
    const auto res = train(darboux(), cfg, hooks);
    // independent verifier run on the final weights
    const bool ok = res.verified && verify(res.net, darboux()).verified;
    passed += ok;
    detail << " seed " << seed << (ok ? " verified at epoch " + std::to_string(res.history.back().epoch) : " not verified");
    if (ok) verified.push_back({"darboux seed " + std::to_string(seed), res.net, darboux(), nullptr});
  }
  const double t = since(t0);
  report(4, passed >= 1 && t < 1800.0,
         std::to_string(passed) + "/3 seeds verified within 50 epochs (" + fmt(t) + " s, limit 1800 s);" + detail.str());
}

// 5 -------------------------------------------------------------------------

double median3(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[1];
}

void criterion_regularizer() {
  const auto sys = spacecraft_rendezvous();
  std::vector<double> n0, n50, c0, c50;
  bool enumerated = true;
  for (double lambda_b : {0.0, 50.0})
    for (std::uint64_t seed : {0, 1, 2}) {
      TrainingConfig cfg = default_config("sr");
      cfg.hidden = {8, 8};
      cfg.seed = seed;
      cfg.epochs = 20;
      cfg.ce_guidance = false;
      cfg.unsafe_fraction = 0.1;
      cfg.eps_margin = 0.1;
      cfg.lambda_b = lambda_b;
      const auto res = train(sys, cfg);
      double count = std::numeric_limits<double>::infinity();
      try {
        const auto [unsafe, safe] = boundary_samples(sys, 1000, 0);
        count = static_cast<double>(enumerate_regions(res.net, unsafe, safe, sys.domain).regions.size());
      } catch (const NotFound&) {
        enumerated = false;  // a collapsed barrier counts against the criterion
      }
      (lambda_b == 0.0 ? n0 : n50).push_back(count);
      (lambda_b == 0.0 ? c0 : c50).push_back(safe_coverage(res.net, sys, 20000, 7));
    }
  const double m0 = median3(n0), m50 = median3(n50);
  const double ratio = median3(c50) / median3(c0);
  report(5, enumerated && m50 < m0 && ratio >= 0.9 && ratio <= 1.1,
         "median N " + fmt(m0, 6) + " (lambda_B=0) vs " + fmt(m50, 6) + " (lambda_B=50); N per seed " +
             fmt(n0[0], 6) + "," + fmt(n0[1], 6) + "," + fmt(n0[2], 6) + " vs " + fmt(n50[0], 6) + "," +
             fmt(n50[1], 6) + "," + fmt(n50[2], 6) + "; coverage ratio " + fmt(ratio));
}

// 6 -------------------------------------------------------------------------

void criterion_l1() {
  std::mt19937_64 rng(66);
  std::normal_distribution<double> nd;
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 2 + trial % 5, m = 1 + trial % 3;
    Eigen::VectorXd w(n);
    Eigen::MatrixXd g(n, m), d(m, m);
    for (int i = 0; i < n; ++i) w[i] = nd(rng);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j) g(i, j) = nd(rng);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) d(i, j) = nd(rng);
    const Eigen::VectorXd a = g.transpose() * w;
    worst = std::max(worst, std::abs(input_support(a, d) - seev::testing::vertex_support(a, d)));
  }
  report(6, worst <= 1e-9, "1000 cases, max |closed form - vertex max| = " + fmt(worst));
}

// 7 -------------------------------------------------------------------------

double rel_error(const Eigen::VectorXd& analytic, const Eigen::VectorXd& numeric) {
  const double scale = std::max(analytic.norm(), numeric.norm());
  return scale < 1e-8 ? (analytic - numeric).norm() : (analytic - numeric).norm() / scale;
}

void criterion_gradients() {
  using seev::testing::numeric_gradient;
  using seev::testing::ptrs;
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> ud(-1.5, 1.5);
  const auto ctrl = seev::testing::controlled_planar();
  const auto open = darboux();
  int checks = 0, bad = 0;
  double worst = 0.0;
  auto check = [&](const Eigen::VectorXd& analytic, const Eigen::VectorXd& numeric) {
    const double e = rel_error(analytic, numeric);
    worst = std::max(worst, e);
    ++checks;
    bad += e > 1e-4;
  };
  for (int trial = 0; trial < 20; ++trial) {
    const Network net = seev::testing::random_net(rng, 2, {3 + trial % 3, 3}, 0.8);
    std::vector<Eigen::VectorXd> a, b, c;
    for (int i = 0; i < 6; ++i) {
      a.push_back(vec({ud(rng), ud(rng)}));
      b.push_back(vec({ud(rng), ud(rng)}));
      c.push_back(vec({ud(rng), ud(rng)}));
    }
    Eigen::VectorXd g = Eigen::VectorXd::Zero(net.parameter_count());
    loss_correctness(net, ptrs(a), ptrs(b), 100.0, 50.0, 0.2, &g);
    check(g, numeric_gradient(net, [&](const Network& n) { return loss_correctness(n, ptrs(a), ptrs(b), 100.0, 50.0, 0.2); }));
    for (const auto* sys : {&ctrl, &open})
      for (double rho : {0.5, 100.0}) {
        const Eigen::VectorXd un = sys->m ? vec({0.3, -0.2}) : Eigen::VectorXd();
        g.setZero();
        loss_feasibility(net, *sys, ptrs(c), un, rho, &g);
        check(g, numeric_gradient(net, [&](const Network& n) { return loss_feasibility(n, *sys, ptrs(c), un, rho); }));
      }
    const std::vector<int> labels{0, 1, 0, 1, 1, 0};
    g.setZero();
    loss_boundary_reg(net, ptrs(c), labels, 3.0, &g);
    check(g, numeric_gradient(net, [&](const Network& n) { return loss_boundary_reg(n, ptrs(c), labels, 3.0); }));
  }
  report(7, bad == 0, std::to_string(checks - bad) + "/" + std::to_string(checks) +
                          " gradient checks within 1e-4 relative, worst " + fmt(worst));
}

// 8 -------------------------------------------------------------------------

void criterion_delta() {
  const auto fns = seev::testing::oracle_functions();
  int runs = 0, ok = 0;
  double worst_gap_ratio = 0.0;
  for (double delta : {1e-2, 1e-3, 1e-4})
    for (const auto& fn : fns) {
      BbOptions opt;
      opt.delta = delta;
      const auto r = bb_minimize(seev::testing::problem_of(fn), opt);
      const double oracle = seev::testing::grid_min(fn);
      ++runs;
      ok += r.status == MinStatus::Certified && r.gap() <= delta && r.lower_bound <= oracle + 1e-12;
      worst_gap_ratio = std::max(worst_gap_ratio, r.gap() / delta);
    }
  report(8, ok == runs, std::to_string(ok) + "/" + std::to_string(runs) +
                            " minimizations certified with gap <= delta and lower bound <= grid minimum, worst gap/delta " +
                            fmt(worst_gap_ratio));
}

// 9 -------------------------------------------------------------------------

void criterion_fast_paths(const std::string& cli) {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / ("seev_acceptance_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  const std::string table = (dir / "bench.txt").string();
  const std::string cmd = "\"" + cli + "\" bench --systems darboux,oa --sizes 2x8,2x16 --seed 0 --out \"" + table +
                          "\" 2>\"" + (dir / "bench.log").string() + "\"";
  const int rc = cli.empty() ? -1 : std::system(cmd.c_str());
  bool pass = rc == 0;
  std::ostringstream detail;
  if (rc != 0) detail << "bench exited with status " << rc;
  try {
    std::ifstream in(table + ".manifest.json");
    const auto doc = nlohmann::json::parse(in);
    int rows = 0;
    long all_fast = 0, all_checked = 0;
    for (const auto& row : doc.at("rows")) {
      // checked counts every hyperplane examined, including counterexamples and undecided ones
      const auto counts = row.at("hyperplane_paths");
      const long checked = row.at("hyperplane_checks").get<long>();
      long fast = 0, certified = 0;
      for (auto it = counts.begin(); it != counts.end(); ++it) {
        certified += it.value().get<long>();
        if (it.key() == "zero-input" || it.key() == "sign-consensus" || it.key() == "constant-g") fast += it.value().get<long>();
      }
      pass = pass && certified > 0 && 2 * fast >= certified;
      all_fast += fast;
      all_checked += checked;
      ++rows;
      detail << (rows > 1 ? "; " : "") << row.at("system").get<std::string>() << ' ' << row.at("L").get<int>() << 'x'
             << row.at("M").get<int>() << ": " << fast << '/' << checked << " checked, " << fast << '/' << certified
             << " certified";
    }
    pass = pass && rows == 4 && all_checked > 0 && 2 * all_fast >= all_checked;
    detail << "; overall " << all_fast << '/' << all_checked << " hyperplanes discharged by fast paths";
  } catch (const std::exception& e) {
    pass = false;
    detail << " (no bench manifest: " << e.what() << ")";
  }
  std::error_code ec;
  fs::remove_all(dir, ec);
  report(9, pass, detail.str());
}

}  // namespace

int main(int argc, char** argv) {
  const std::string cli = argc > 1 ? argv[1] : "";
  std::vector<VerifiedCase> verified;

  criterion_enumeration();
  criterion_counterexamples(verified);
  criterion_darboux(verified);

  // hand-built certificate: the diamond under a contracting flow with full input authority
  {
    auto sys = planar(mat({{-1.0, 0.0}, {0.0, -1.0}}), vec({1.6, 1.6}), 0.4);
    set_constant_input(sys, Eigen::MatrixXd::Identity(2, 2));
    sys.input = InputSet::unconstrained();
    const Network net = seev::testing::diamond_net();
    if (verify(net, sys).verified)
      verified.push_back({"diamond", net, sys, [](double, const Eigen::VectorXd& x) { return Eigen::VectorXd(3.0 * (vec({1.6, 1.6}) - x)); }});
  }
  criterion_empirical(verified);

  criterion_regularizer();
  criterion_l1();
  criterion_gradients();
  criterion_delta();
  criterion_fast_paths(cli);

  std::cout << (failures ? std::to_string(failures) + " criterion(s) failed" : "all criteria passed") << std::endl;
  return failures ? 1 : 0;
}
