#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "seev/seev.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace seev;

namespace {

struct Common {
  std::string system = "darboux";
  std::string config_path;
  std::string out;
  std::string manifest;
  int workers = 0;
  std::uint64_t seed = 0;
};

// Settings from a key=value file, split between system options and training
// hyperparameters.
struct Settings {
  SystemOptions system;
  std::string training;  // remaining lines, fed to read_config
  json system_json = json::object();
};

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return {};
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

Settings load_settings(const std::string& path) {
  Settings st;
  if (path.empty()) return st;
  std::ifstream in(path);
  if (!in) throw Error("cannot open config '" + path + "'");
  std::string line;
  while (std::getline(in, line)) {
    std::string body = line;
    if (const auto hash = body.find('#'); hash != std::string::npos) body.erase(hash);
    const auto eq = body.find('=');
    if (eq != std::string::npos) {
      const std::string key = trim(body.substr(0, eq)), value = trim(body.substr(eq + 1));
      if (set_system_option(st.system, key, value)) {
        st.system_json[key] = value;
        continue;
      }
    }
    st.training += line + "\n";
  }
  return st;
}

Eigen::VectorXd parse_vector(const std::string& text, const char* what) {
  std::vector<double> v;
  try {
    v = detail::split_numbers(text);
  } catch (const std::exception&) {
    throw ParseError(std::string(what) + ": expected comma-separated numbers, got '" + text + "'");
  }
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::string to_text(const TrainingConfig& c) {
  std::ostringstream os;
  write_config(os, c);
  return os.str();
}

json versions() {
  return {{"seev", kVersion},
          {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                        std::to_string(EIGEN_MINOR_VERSION)},
          {"compiler", __VERSION__},
          {"cplusplus", __cplusplus}};
}

class Manifest {
 public:
  Manifest(std::string subcommand, int argc, char** argv) {
    doc_["subcommand"] = std::move(subcommand);
    json args = json::array();
    for (int i = 0; i < argc; ++i) args.push_back(argv[i]);
    doc_["argv"] = args;
    doc_["versions"] = versions();
    doc_["artifacts"] = json::object();
  }
  json& operator[](const char* key) { return doc_[key]; }
  void artifact(const std::string& role, const std::string& path) { doc_["artifacts"][role] = path; }

  void write(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw Error("cannot write manifest '" + path + "'");
    os << std::setw(2) << doc_ << '\n';
  }

 private:
  json doc_;
};

std::string manifest_path(const Common& c, const std::string& fallback) {
  if (!c.manifest.empty()) return c.manifest;
  if (!c.out.empty()) return c.out + ".manifest.json";
  return fallback;
}

// Writes to --out when given, otherwise stdout.
template <class Fn>
void emit(const std::string& out, Fn&& fn) {
  if (out.empty()) {
    fn(std::cout);
    return;
  }
  std::ofstream os(out);
  if (!os) throw Error("cannot write '" + out + "'");
  fn(os);
}

void add_common(CLI::App* sub, Common& c, bool need_system = true) {
  auto* opt = sub->add_option("--system", c.system, "darboux | oa | sr | hi_ord8");
  if (need_system) opt->required();
  sub->add_option("--config", c.config_path, "key=value settings file");
  sub->add_option("--workers", c.workers, "worker threads (default: SEEV_WORKERS or 1)");
  sub->add_option("--seed", c.seed, "random seed");
  sub->add_option("--manifest", c.manifest, "manifest path");
}

// --- train -----------------------------------------------------------------

int run_train(const Common& c, bool seed_given, int epochs, int argc, char** argv) {
  const Settings st = load_settings(c.config_path);
  std::istringstream cfg_in(st.training);
  TrainingConfig cfg = read_config(cfg_in, default_config(c.system));
  if (seed_given) cfg.seed = c.seed;
  if (epochs >= 0) cfg.epochs = epochs;
  cfg.validate();
  const auto sys = make_system(c.system, st.system);
  const int workers = resolve_workers(c.workers);

  const std::string prefix = c.out.empty() ? c.system + "_seed" + std::to_string(cfg.seed) : c.out;
  TrainHooks hooks;
  hooks.workers = workers;
  hooks.verify.workers = workers;
  hooks.on_epoch = [](const EpochRecord& r) {
    std::cerr << "epoch " << r.epoch << " loss " << r.loss.total << " boundary " << r.boundary_estimate;
    if (r.verifier_ran)
      std::cerr << " verify regions=" << r.regions << " ce=" << (r.ce_correctness + r.ce_hyperplane + r.ce_hinge)
                << (r.verified ? " verified" : "");
    std::cerr << '\n';
  };
  const TrainResult res = train(sys, cfg, hooks);

  const std::string weights = prefix + ".weights.txt", history = prefix + ".history.csv";
  save_network(weights, res.net);
  {
    std::ofstream os(history);
    if (!os) throw Error("cannot write '" + history + "'");
    write_history_csv(os, res.history);
  }
  Manifest m("train", argc, argv);
  m["system"] = c.system;
  m["system_options"] = st.system_json;
  m["config"] = to_text(cfg);
  m["seed"] = cfg.seed;
  m["workers"] = workers;
  m.artifact("weights", weights);
  m.artifact("history", history);
  m["verified"] = res.verified;
  m["epochs_run"] = res.history.size();
  Common mc = c;
  mc.out = prefix;
  m.write(manifest_path(mc, ""));

  std::cout << "weights " << weights << "\nhistory " << history << "\nepochs " << res.history.size()
            << "\nverified " << (res.verified ? "true" : "false") << '\n';
  if (!cfg.ce_guidance) return 0;
  return res.verified ? 0 : 1;
}

// --- verify ----------------------------------------------------------------

struct VerifyArgs {
  std::string net;
  double delta = 1e-4;
  bool fail_fast = false;
  bool no_fast_paths = false;
  int samples = 1000;
  long max_nodes = 200'000;
};

VerifyOptions verify_options(const VerifyArgs& v, const Common& c, int workers) {
  VerifyOptions opt;
  opt.conditions.delta = v.delta;
  opt.conditions.fast_paths = !v.no_fast_paths;
  opt.conditions.max_nodes = v.max_nodes;
  opt.fail_fast = v.fail_fast;
  opt.samples = v.samples;
  opt.seed = c.seed;
  opt.workers = workers;
  opt.enumeration.workers = workers;
  return opt;
}

int run_verify(const Common& c, const VerifyArgs& v, int argc, char** argv) {
  const Settings st = load_settings(c.config_path);
  const auto sys = make_system(c.system, st.system);
  const Network net = load_network(v.net);
  const int workers = resolve_workers(c.workers);
  const VerificationReport rep = verify(net, sys, verify_options(v, c, workers));

  emit(c.out, [&](std::ostream& os) {
    write_counterexamples(os, rep);
    write_summary(os, rep);
  });
  Manifest m("verify", argc, argv);
  m["system"] = c.system;
  m["system_options"] = st.system_json;
  m["seed"] = c.seed;
  m["workers"] = workers;
  m["delta"] = v.delta;
  m["fail_fast"] = v.fail_fast;
  m["fast_paths"] = !v.no_fast_paths;
  m["samples"] = v.samples;
  m.artifact("net", v.net);
  if (!c.out.empty()) m.artifact("report", c.out);
  m["verified"] = rep.verified;
  m["regions"] = rep.num_regions;
  m["hinges"] = rep.num_hinges;
  m.write(manifest_path(c, "seev_verify.manifest.json"));
  return rep.verified ? 0 : 1;
}

// --- enumerate -------------------------------------------------------------

int run_enumerate(const Common& c, const std::string& net_path, int samples, bool regions_only, int argc, char** argv) {
  const Settings st = load_settings(c.config_path);
  const auto sys = make_system(c.system, st.system);
  const Network net = load_network(net_path);
  if (net.input_dim() != sys.n) throw DimensionMismatch("network and system dimensions differ");
  const int workers = resolve_workers(c.workers);
  EnumOptions opt;
  opt.workers = workers;
  const auto [unsafe, safe] = boundary_samples(sys, samples, c.seed);
  const BoundaryCatalog cat = regions_only ? enumerate_regions(net, unsafe, safe, sys.domain, opt)
                                           : enumerate(net, unsafe, safe, sys.domain, opt);
  emit(c.out, [&](std::ostream& os) { write_catalog(os, cat); });
  Manifest m("enumerate", argc, argv);
  m["system"] = c.system;
  m["system_options"] = st.system_json;
  m["seed"] = c.seed;
  m["workers"] = workers;
  m["samples"] = samples;
  m["regions_only"] = regions_only;
  m.artifact("net", net_path);
  if (!c.out.empty()) m.artifact("catalog", c.out);
  m["regions"] = cat.regions.size();
  m["hinges"] = cat.hinges.size();
  m.write(manifest_path(c, "seev_enumerate.manifest.json"));
  return 0;
}

// --- simulate --------------------------------------------------------------

struct SimulateArgs {
  std::string net;
  std::string x0 = "sample";
  std::string u_nom;
  double t_end = 10.0;
  double dt = 1e-3;
  double gamma = 1.0;
};

int run_simulate(const Common& c, const SimulateArgs& s, int argc, char** argv) {
  const Settings st = load_settings(c.config_path);
  const auto sys = make_system(c.system, st.system);
  const Network net = load_network(s.net);
  Eigen::VectorXd x0;
  if (s.x0 == "sample") {
    std::mt19937_64 rng(c.seed);
    x0 = sys.sample_initial(rng);
  } else {
    x0 = parse_vector(s.x0, "--x0");
  }
  if (x0.size() != sys.n) throw DimensionMismatch("--x0 has " + std::to_string(x0.size()) + " entries, expected " + std::to_string(sys.n));

  NominalPolicy nominal;
  if (!s.u_nom.empty()) {
    const Eigen::VectorXd u = parse_vector(s.u_nom, "--u-nom");
    if (u.size() != sys.m) throw DimensionMismatch("--u-nom must have " + std::to_string(sys.m) + " entries");
    nominal = [u](double, const Eigen::VectorXd&) { return u; };
  }
  FilterConfig fc;
  fc.gamma = s.gamma;
  const Trajectory tr = simulate(net, sys, x0, nominal, s.t_end, s.dt, fc);
  emit(c.out, [&](std::ostream& os) { write_trajectory_csv(os, tr); });

  Manifest m("simulate", argc, argv);
  m["system"] = c.system;
  m["system_options"] = st.system_json;
  m["seed"] = c.seed;
  m["x0"] = std::vector<double>(x0.data(), x0.data() + x0.size());
  m["T"] = s.t_end;
  m["dt"] = s.dt;
  m["gamma"] = s.gamma;
  m["u_nom"] = s.u_nom;
  m.artifact("net", s.net);
  if (!c.out.empty()) m.artifact("trajectory", c.out);
  m["min_b"] = tr.min_b();
  m["min_h"] = tr.min_h();
  m["exited"] = tr.exited;
  m.write(manifest_path(c, "seev_simulate.manifest.json"));

  std::cerr << "steps " << tr.size() - 1 << " min_b " << tr.min_b() << " min_h " << tr.min_h()
            << " infeasible_steps " << tr.infeasible_steps() << (tr.exited ? " exited" : "") << '\n';
  return tr.min_h() < 0.0 ? 1 : 0;
}

// --- bench -----------------------------------------------------------------

struct BenchArgs {
  std::string systems = "darboux,oa";
  std::string sizes = "2x8,2x16";
  int epochs = -1;
  std::string nets_dir;
};

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!trim(item).empty()) out.push_back(trim(item));
  return out;
}

std::pair<int, int> parse_size(const std::string& text) {
  const auto x = text.find('x');
  try {
    if (x != std::string::npos) {
      std::size_t a = 0, b = 0;
      const int l = std::stoi(text.substr(0, x), &a), mw = std::stoi(text.substr(x + 1), &b);
      if (a == x && b == text.size() - x - 1 && l > 0 && mw > 0) return {l, mw};
    }
  } catch (const std::exception&) {
  }
  throw ParseError("--sizes: expected LxM entries such as 2x8, got '" + text + "'");
}

int run_bench(const Common& c, const BenchArgs& b, int argc, char** argv) {
  const Settings st = load_settings(c.config_path);
  const int workers = resolve_workers(c.workers);
  const auto systems = split_list(b.systems);
  std::vector<std::pair<int, int>> sizes;
  for (const auto& s : split_list(b.sizes)) sizes.push_back(parse_size(s));
  if (systems.empty() || sizes.empty()) throw ParseError("bench: empty --systems or --sizes");

  Manifest m("bench", argc, argv);
  m["system_options"] = st.system_json;
  m["seed"] = c.seed;
  m["workers"] = workers;
  json rows = json::array();

  std::ostringstream table;
  table << std::left << std::setw(10) << "system" << std::setw(4) << "L" << std::setw(4) << "M" << std::setw(9)
        << "verified" << std::setw(8) << "N" << std::setw(9) << "hinges" << std::setw(10) << "t_h" << std::setw(10)
        << "t_g" << std::setw(10) << "t_train" << std::setw(10) << "fast" << "certified hyperplanes by path\n";
  table << std::fixed;
  for (const auto& name : systems) {
    const auto sys = make_system(name, st.system);
    for (const auto& [layers, width] : sizes) {
      std::istringstream cfg_in(st.training);
      TrainingConfig cfg = read_config(cfg_in, default_config(name));
      cfg.hidden.assign(layers, width);
      cfg.seed = c.seed;
      if (b.epochs >= 0) cfg.epochs = b.epochs;
      TrainHooks hooks;
      hooks.workers = workers;
      hooks.verify.workers = workers;
      const auto t0 = std::chrono::steady_clock::now();
      const TrainResult res = train(sys, cfg, hooks);
      const double t_train = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

      VerifyOptions vo;
      vo.conditions.delta = cfg.delta;
      vo.workers = workers;
      vo.enumeration.workers = workers;
      vo.seed = c.seed;
      const VerificationReport rep = verify(res.net, sys, vo);

      const auto& hp = rep.hyperplane_paths;
      std::ostringstream paths;
      for (int p = 0; p < 5; ++p) paths << (p ? " " : "") << to_string(static_cast<DischargePath>(p)) << '=' << hp.counts[p];
      table << std::setw(10) << name << std::setw(4) << layers << std::setw(4) << width << std::setw(9)
            << (rep.verified ? "yes" : "no") << std::setw(8) << rep.num_regions << std::setw(9) << rep.num_hinges
            << std::setprecision(3) << std::setw(10) << rep.t_h << std::setw(10) << rep.t_g << std::setw(10) << t_train
            << std::setw(10) << (std::to_string(hp.sufficient()) + "/" + std::to_string(rep.hyperplane_checks))
            << paths.str() << '\n';

      json row = {{"system", name},         {"L", layers},         {"M", width},
                  {"verified", rep.verified}, {"N", rep.num_regions}, {"hinges", rep.num_hinges},
                  {"t_enum", rep.t_enum},   {"t_h", rep.t_h},      {"t_g", rep.t_g},
                  {"t_train", t_train},     {"config", to_text(cfg)},
                  {"hyperplane_checks", rep.hyperplane_checks}};
      for (int p = 0; p < 5; ++p) row["hyperplane_paths"][to_string(static_cast<DischargePath>(p))] = hp.counts[p];
      if (!b.nets_dir.empty()) {
        fs::create_directories(b.nets_dir);
        const std::string path =
            (fs::path(b.nets_dir) / (name + "_" + std::to_string(layers) + "x" + std::to_string(width) + ".txt")).string();
        save_network(path, res.net);
        row["net"] = path;
        m.artifact(name + "_" + std::to_string(layers) + "x" + std::to_string(width), path);
      }
      rows.push_back(row);
      std::cerr << "done " << name << ' ' << layers << 'x' << width << '\n';
    }
  }
  emit(c.out, [&](std::ostream& os) { os << table.str(); });
  m["rows"] = rows;
  if (!c.out.empty()) m.artifact("table", c.out);
  m.write(manifest_path(c, "seev_bench.manifest.json"));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Synthesis and exact verification of ReLU neural control barrier functions"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  Common common;
  int epochs = -1;
  auto* train_cmd = app.add_subcommand("train", "train a barrier network");
  add_common(train_cmd, common);
  train_cmd->add_option("--out", common.out, "output prefix (default <system>_seed<N>)");
  train_cmd->add_option("--epochs", epochs, "override the configured epoch count");

  VerifyArgs va;
  auto* verify_cmd = app.add_subcommand("verify", "verify a trained network");
  add_common(verify_cmd, common);
  verify_cmd->add_option("--net", va.net, "weights file")->required()->check(CLI::ExistingFile);
  verify_cmd->add_option("--delta", va.delta, "tolerance for minimization");
  verify_cmd->add_flag("--fail-fast", va.fail_fast, "stop at the first counterexample");
  verify_cmd->add_flag("--no-fast-paths", va.no_fast_paths, "skip the sufficient conditions");
  verify_cmd->add_option("--samples", va.samples, "samples used to seed enumeration");
  verify_cmd->add_option("--max-nodes", va.max_nodes, "branch-and-bound node budget per piece");
  verify_cmd->add_option("--out", common.out, "report file (default stdout)");

  std::string enum_net;
  int enum_samples = 1000;
  bool regions_only = false;
  auto* enum_cmd = app.add_subcommand("enumerate", "list boundary regions and hinges");
  add_common(enum_cmd, common);
  enum_cmd->add_option("--net", enum_net, "weights file")->required()->check(CLI::ExistingFile);
  enum_cmd->add_option("--samples", enum_samples, "samples used to seed enumeration");
  enum_cmd->add_flag("--regions-only", regions_only, "skip hinge enumeration");
  enum_cmd->add_option("--out", common.out, "catalog file (default stdout)");

  SimulateArgs sa;
  auto* sim_cmd = app.add_subcommand("simulate", "closed-loop simulation with the safety filter");
  add_common(sim_cmd, common);
  sim_cmd->add_option("--net", sa.net, "weights file")->required()->check(CLI::ExistingFile);
  sim_cmd->add_option("--x0", sa.x0, "initial state as comma list, or 'sample'");
  sim_cmd->add_option("--T", sa.t_end, "horizon");
  sim_cmd->add_option("--dt", sa.dt, "step size");
  sim_cmd->add_option("--u-nom", sa.u_nom, "constant nominal input as comma list");
  sim_cmd->add_option("--gamma", sa.gamma, "class-K gain of the filter");
  sim_cmd->add_option("--out", common.out, "trajectory CSV (default stdout)");

  BenchArgs ba;
  auto* bench_cmd = app.add_subcommand("bench", "train and verify a grid of systems and sizes");
  add_common(bench_cmd, common, false);
  bench_cmd->add_option("--systems", ba.systems, "comma list of systems");
  bench_cmd->add_option("--sizes", ba.sizes, "comma list of LxM");
  bench_cmd->add_option("--epochs", ba.epochs, "override the configured epoch count");
  bench_cmd->add_option("--nets", ba.nets_dir, "directory to keep trained networks");
  bench_cmd->add_option("--out", common.out, "table file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*train_cmd) return run_train(common, train_cmd->count("--seed") > 0, epochs, argc, argv);
    if (*verify_cmd) return run_verify(common, va, argc, argv);
    if (*enum_cmd) return run_enumerate(common, enum_net, enum_samples, regions_only, argc, argv);
    if (*sim_cmd) return run_simulate(common, sa, argc, argv);
    if (*bench_cmd) return run_bench(common, ba, argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 2;
}
