#pragma once

// Training of ReLU barrier networks: loss terms with analytic gradients,
// Adam, and the counterexample-guided outer loop.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <istream>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include <Eigen/Dense>

#include "seev/error.hpp"
#include "seev/network.hpp"
#include "seev/systems.hpp"
#include "seev/verifier.hpp"

namespace seev {

struct TrainingConfig {
  int n_data = 5000;
  double a1 = 100.0;
  double a2 = 100.0;
  double lambda_f = 4.0;
  double lambda_c = 1.0;
  double lambda_b = 0.0;
  int n_cluster = 5;
  double k_sigmoid = 4.0;
  double eps_boundary = 1.0;
  double eps_margin = 0.01;
  double learning_rate = 1e-2;
  int epochs = 50;
  int batch_size = 256;
  double rho = 100.0;
  std::uint64_t seed = 0;
  std::vector<int> hidden{8, 8};
  bool ce_guidance = true;
  int ce_cap = 32;
  bool lf_all_samples = false;
  double initial_fraction = 0.2;  // extra samples drawn from I, relative to n_data
  double unsafe_fraction = 0.0;   // extra samples drawn from the unsafe set
  double delta = 1e-4;
  Eigen::VectorXd u_nom;          // constant nominal input; empty means zero

  void validate() const {
    for (double w : {a1, a2, lambda_f, lambda_c, lambda_b, rho})
      if (!(w >= 0.0)) throw Error("config: weights must be nonnegative");
    if (!(k_sigmoid > 0.0)) throw Error("config: k_sigmoid must be positive");
    if (!(eps_boundary > 0.0)) throw Error("config: eps_boundary must be positive");
    if (!(eps_margin >= 0.0)) throw Error("config: eps_margin must be nonnegative");
    if (!(initial_fraction >= 0.0) || !(unsafe_fraction >= 0.0)) throw Error("config: fractions must be nonnegative");
    if (n_data <= 0 || batch_size <= 0 || epochs < 0 || n_cluster <= 0 || ce_cap < 0)
      throw Error("config: counts must be positive");
    if (hidden.empty()) throw Error("config: at least one hidden layer is required");
    for (int m : hidden)
      if (m <= 0) throw Error("config: layer sizes must be positive");
  }
};

/// Hyperparameters per benchmark system.
inline TrainingConfig default_config(const std::string& system) {
  TrainingConfig c;
  if (system == "darboux") {
    c.n_data = 5000;
    c.a1 = 100.0, c.a2 = 100.0, c.lambda_f = 4.0, c.lambda_c = 1.0;
    c.rho = 10.0;  // open loop: rho only scales the drift penalty
  } else if (system == "hi_ord8" || system == "hi-ord8") {
    c.n_data = 50000;
    c.a1 = 100.0, c.a2 = 200.0, c.lambda_f = 1.0, c.lambda_c = 1.0;
    c.rho = 10.0;
  } else if (system == "oa" || system == "obstacle_avoidance" || system == "sr" || system == "spacecraft_rendezvous") {
    c.n_data = 10000;
    c.a1 = 100.0, c.a2 = 100.0, c.lambda_f = 2.0, c.lambda_c = 1.0;
    c.n_cluster = 5, c.k_sigmoid = 4.0, c.eps_boundary = 1.0;
  } else {
    throw NotFound("no default configuration for system '" + system + "'");
  }
  return c;
}

namespace detail {

inline std::string join(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

inline std::vector<double> split_numbers(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    const double v = std::stod(item, &used);
    if (used != item.size()) throw std::invalid_argument(item);
    out.push_back(v);
  }
  return out;
}

}  // namespace detail

/// Applies one `key=value` setting.
inline void set_config_value(TrainingConfig& c, const std::string& key, const std::string& value) {
  try {
    auto as_int = [&] {
      std::size_t used = 0;
      const long v = std::stol(value, &used);
      if (used != value.size()) throw std::invalid_argument(value);
      return static_cast<int>(v);
    };
    auto as_double = [&] {
      std::size_t used = 0;
      const double v = std::stod(value, &used);
      if (used != value.size()) throw std::invalid_argument(value);
      return v;
    };
    auto as_bool = [&] {
      if (value == "1" || value == "true") return true;
      if (value == "0" || value == "false") return false;
      throw std::invalid_argument(value);
    };
    if (key == "n_data" || key == "N_data") c.n_data = as_int();
    else if (key == "a1") c.a1 = as_double();
    else if (key == "a2") c.a2 = as_double();
    else if (key == "lambda_f") c.lambda_f = as_double();
    else if (key == "lambda_c") c.lambda_c = as_double();
    else if (key == "lambda_b" || key == "lambda_B") c.lambda_b = as_double();
    else if (key == "n_cluster") c.n_cluster = as_int();
    else if (key == "k_sigmoid" || key == "k") c.k_sigmoid = as_double();
    else if (key == "eps_boundary") c.eps_boundary = as_double();
    else if (key == "eps_margin") c.eps_margin = as_double();
    else if (key == "learning_rate") c.learning_rate = as_double();
    else if (key == "epochs") c.epochs = as_int();
    else if (key == "batch_size") c.batch_size = as_int();
    else if (key == "rho") c.rho = as_double();
    else if (key == "seed") c.seed = static_cast<std::uint64_t>(std::stoull(value));
    else if (key == "hidden") {
      c.hidden.clear();
      for (double v : detail::split_numbers(value)) c.hidden.push_back(static_cast<int>(v));
    } else if (key == "ce_guidance") c.ce_guidance = as_bool();
    else if (key == "ce_cap") c.ce_cap = as_int();
    else if (key == "lf_all_samples") c.lf_all_samples = as_bool();
    else if (key == "initial_fraction") c.initial_fraction = as_double();
    else if (key == "unsafe_fraction") c.unsafe_fraction = as_double();
    else if (key == "delta") c.delta = as_double();
    else if (key == "u_nom") {
      const auto v = detail::split_numbers(value);
      c.u_nom = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
    } else throw ParseError("config: unknown key '" + key + "'");
  } catch (const std::invalid_argument&) {
    throw ParseError("config: bad value '" + value + "' for key '" + key + "'");
  } catch (const std::out_of_range&) {
    throw ParseError("config: value out of range for key '" + key + "'");
  }
}

/// Reads `key=value` lines on top of `base`; '#' starts a comment.
inline TrainingConfig read_config(std::istream& is, TrainingConfig base = {}) {
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("config line " + std::to_string(lineno) + ": expected key=value");
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      const auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    set_config_value(base, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  base.validate();
  return base;
}

inline void write_config(std::ostream& os, const TrainingConfig& c) {
  const auto old = os.precision(17);
  os << "n_data=" << c.n_data << "\na1=" << c.a1 << "\na2=" << c.a2 << "\nlambda_f=" << c.lambda_f
     << "\nlambda_c=" << c.lambda_c << "\nlambda_b=" << c.lambda_b << "\nn_cluster=" << c.n_cluster
     << "\nk_sigmoid=" << c.k_sigmoid << "\neps_boundary=" << c.eps_boundary << "\neps_margin=" << c.eps_margin
     << "\nlearning_rate=" << c.learning_rate << "\nepochs=" << c.epochs << "\nbatch_size=" << c.batch_size
     << "\nrho=" << c.rho << "\nseed=" << c.seed << "\nhidden=" << detail::join(c.hidden)
     << "\nce_guidance=" << (c.ce_guidance ? 1 : 0) << "\nce_cap=" << c.ce_cap
     << "\nlf_all_samples=" << (c.lf_all_samples ? 1 : 0) << "\ninitial_fraction=" << c.initial_fraction << "\nunsafe_fraction=" << c.unsafe_fraction
     << "\ndelta=" << c.delta << '\n';
  if (c.u_nom.size()) {
    os << "u_nom=";
    for (int i = 0; i < c.u_nom.size(); ++i) os << (i ? "," : "") << c.u_nom[i];
    os << '\n';
  }
  os.precision(old);
}

// ---------------------------------------------------------------------------
// Data

struct Dataset {
  std::vector<Eigen::VectorXd> initial;   // T_I
  std::vector<Eigen::VectorXd> unsafe;    // T_{X\C}
  std::vector<Eigen::VectorXd> interior;  // everything else
  std::vector<Eigen::VectorXd> ce_feasible;  // invariance counterexamples, always in L_f
  std::vector<std::string> ce_log;        // category of each appended counterexample, in order

  std::size_t size() const { return initial.size() + unsafe.size() + interior.size(); }
};

inline Dataset make_dataset(const ControlAffineSystem& sys, const TrainingConfig& cfg, std::mt19937_64& rng) {
  Dataset d;
  for (int i = 0; i < cfg.n_data; ++i) {
    Eigen::VectorXd x = sys.sample_domain(rng);
    if (sys.h(x) < 0.0) d.unsafe.push_back(std::move(x));
    else if (sys.in_initial(x)) d.initial.push_back(std::move(x));
    else d.interior.push_back(std::move(x));
  }
  const int extra = static_cast<int>(std::lround(cfg.initial_fraction * cfg.n_data));
  for (int i = 0; i < extra; ++i) d.initial.push_back(sys.sample_initial(rng));
  const int bad = static_cast<int>(std::lround(cfg.unsafe_fraction * cfg.n_data));
  for (int i = 0; i < bad; ++i)
    if (auto x = sys.sample_unsafe(rng)) d.unsafe.push_back(std::move(*x));
  return d;
}

struct Batch {
  std::vector<const Eigen::VectorXd*> initial, unsafe, other, ce;
};

// ---------------------------------------------------------------------------
// Gradient engine

/// Offsets of each parameter block in the flat vector of Network::parameters().
struct ParamLayout {
  std::vector<int> weight, bias;
  int omega = 0, psi = 0;

  explicit ParamLayout(const Network& net) {
    int k = 0;
    for (const auto& l : net.layers()) {
      weight.push_back(k);
      k += static_cast<int>(l.weight.size());
      bias.push_back(k);
      k += static_cast<int>(l.bias.size());
    }
    omega = k;
    psi = k + static_cast<int>(net.output_weight().size());
  }
};

/// Gradient of b with respect to the input inside the region of x.
inline Eigen::VectorXd input_gradient(const Network& net, const ForwardTrace& t) {
  Eigen::VectorXd e = net.output_weight();
  for (int i = net.num_layers() - 1; i >= 0; --i) {
    const Eigen::VectorXd d = (t.pre[i].array() >= 0.0).cast<double>().matrix();
    e = net.layer(i).weight.transpose() * d.cwiseProduct(e);
  }
  return e;
}

/// Adds to `grad` the parameter gradient of
///   gb * b(x) + sum_i gz[i] . z_i(x) + gw . grad_x b(x)
/// where z_i are pre-activations. `gz` and `gw` may be null.
inline void accumulate_gradient(const Network& net, const ParamLayout& lay, const Eigen::VectorXd& x,
                                const ForwardTrace& t, double gb, const std::vector<Eigen::VectorXd>* gz,
                                const Eigen::VectorXd* gw, Eigen::VectorXd& grad) {
  const int L = net.num_layers();
  auto add_outer = [&](int i, const Eigen::VectorXd& dz, const Eigen::VectorXd& in) {
    const auto& w = net.layer(i).weight;
    int k = lay.weight[i];
    for (int r = 0; r < w.rows(); ++r)
      for (int c = 0; c < w.cols(); ++c) grad[k++] += dz[r] * in[c];
  };
  auto input_of = [&](int i) -> const Eigen::VectorXd& { return i == 0 ? x : t.post[i - 1]; };

  if (gb != 0.0 || gz) {
    const Eigen::VectorXd& last = t.post[L - 1];
    for (int r = 0; r < last.size(); ++r) grad[lay.omega + r] += gb * last[r];
    grad[lay.psi] += gb;
    Eigen::VectorXd dpost = gb * net.output_weight();
    for (int i = L - 1; i >= 0; --i) {
      Eigen::VectorXd dz = (t.pre[i].array() > 0.0).select(dpost.array(), 0.0).matrix();
      if (gz) dz += (*gz)[i];
      add_outer(i, dz, input_of(i));
      grad.segment(lay.bias[i], dz.size()) += dz;
      if (i > 0) dpost = net.layer(i).weight.transpose() * dz;
    }
  }
  if (gw) {
    // forward tangent of the region's linear map applied to gw
    std::vector<Eigen::VectorXd> tan(L + 1);
    tan[0] = *gw;
    std::vector<Eigen::VectorXd> mask(L);
    for (int i = 0; i < L; ++i) {
      mask[i] = (t.pre[i].array() >= 0.0).cast<double>().matrix();
      tan[i + 1] = mask[i].cwiseProduct(net.layer(i).weight * tan[i]);
    }
    for (int r = 0; r < tan[L].size(); ++r) grad[lay.omega + r] += tan[L][r];
    Eigen::VectorXd e = net.output_weight();
    for (int i = L - 1; i >= 0; --i) {
      const Eigen::VectorXd es = mask[i].cwiseProduct(e);
      add_outer(i, es, tan[i]);
      e = net.layer(i).weight.transpose() * es;
    }
  }
}

// ---------------------------------------------------------------------------
// Loss terms

struct LossBreakdown {
  double total = 0.0;
  double l_c = 0.0;
  double l_f = 0.0;
  double l_b = 0.0;
};

/// Optimal value of min ||u - u_nom||^2 + rho r  s.t.  a.u + c + r >= 0, r >= 0,
/// written in terms of the violation v = -(a.u_nom + c) and A = |a|^2.
struct RelaxedQp {
  double value = 0.0;
  double d_v = 0.0;  // derivative with respect to v
  double d_A = 0.0;  // derivative with respect to A
  double shift = 0.0;  // s*: part of the violation removed by moving u
};

inline RelaxedQp relaxed_qp(double v, double A, double rho) {
  RelaxedQp q;
  if (v <= 0.0) return q;
  if (A <= 0.0 || v > 0.5 * rho * A) {
    q.shift = 0.5 * rho * A;
    q.value = rho * v - 0.25 * rho * rho * A;
    q.d_v = rho;
    q.d_A = -0.25 * rho * rho;
    return q;
  }
  q.shift = v;
  q.value = v * v / A;
  q.d_v = 2.0 * v / A;
  q.d_A = -v * v / (A * A);
  return q;
}

inline double sigmoid(double z, double k) { return 1.0 / (1.0 + std::exp(-k * z)); }

/// Lloyd's k-means with k-means++ seeding; returns a cluster label per point.
inline std::vector<int> kmeans(const std::vector<const Eigen::VectorXd*>& pts, int k, std::mt19937_64& rng,
                               int iterations = 50) {
  const int n = static_cast<int>(pts.size());
  std::vector<int> label(n, 0);
  if (n == 0) return label;
  k = std::max(1, std::min(k, n));
  std::vector<Eigen::VectorXd> centers;
  centers.push_back(*pts[std::uniform_int_distribution<int>(0, n - 1)(rng)]);
  std::vector<double> d2(n);
  while (static_cast<int>(centers.size()) < k) {
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& c : centers) best = std::min(best, (*pts[i] - c).squaredNorm());
      d2[i] = best;
      total += best;
    }
    if (total <= 0.0) break;
    double r = std::uniform_real_distribution<double>(0.0, total)(rng);
    int pick = n - 1;
    for (int i = 0; i < n; ++i) {
      r -= d2[i];
      if (r <= 0.0) {
        pick = i;
        break;
      }
    }
    centers.push_back(*pts[pick]);
  }
  k = static_cast<int>(centers.size());
  for (int it = 0; it < iterations; ++it) {
    bool changed = false;
    for (int i = 0; i < n; ++i) {
      int best = 0;
      double bd = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        const double d = (*pts[i] - centers[c]).squaredNorm();
        if (d < bd) bd = d, best = c;
      }
      changed |= label[i] != best;
      label[i] = best;
    }
    std::vector<Eigen::VectorXd> sum(k, Eigen::VectorXd::Zero(pts[0]->size()));
    std::vector<int> count(k, 0);
    for (int i = 0; i < n; ++i) sum[label[i]] += *pts[i], ++count[label[i]];
    for (int c = 0; c < k; ++c)
      if (count[c]) centers[c] = sum[c] / count[c];
    if (!changed && it > 0) break;
  }
  return label;
}

struct LossContext {
  const ControlAffineSystem* sys = nullptr;
  const TrainingConfig* cfg = nullptr;
  std::uint64_t cluster_seed = 0;
};

/// a1 mean_I [eps - b]_+ + a2 mean_U [eps + b]_+.
inline double loss_correctness(const Network& net, const std::vector<const Eigen::VectorXd*>& initial,
                               const std::vector<const Eigen::VectorXd*>& unsafe, double a1, double a2, double eps,
                               Eigen::VectorXd* grad = nullptr, double scale = 1.0) {
  const ParamLayout lay(net);
  double loss = 0.0;
  auto term = [&](const std::vector<const Eigen::VectorXd*>& set, double weight, double sign) {
    if (set.empty()) return;
    const double w = weight / static_cast<double>(set.size());
    for (const auto* x : set) {
      const ForwardTrace t = trace(net, *x);
      const double viol = eps + sign * t.output;  // sign -1: eps - b, +1: eps + b
      if (viol <= 0.0) continue;
      loss += w * viol;
      if (grad) accumulate_gradient(net, lay, *x, t, scale * w * sign, nullptr, nullptr, *grad);
    }
  };
  term(initial, a1, -1.0);
  term(unsafe, a2, 1.0);
  return loss;
}

/// Mean optimal value of the relaxed input QP at each sample.
inline double loss_feasibility(const Network& net, const ControlAffineSystem& sys,
                               const std::vector<const Eigen::VectorXd*>& samples, const Eigen::VectorXd& u_nom,
                               double rho, Eigen::VectorXd* grad = nullptr, double scale = 1.0) {
  if (samples.empty()) return 0.0;
  const ParamLayout lay(net);
  const double w = 1.0 / static_cast<double>(samples.size());
  double loss = 0.0;
  for (const auto* x : samples) {
    const ForwardTrace t = trace(net, *x);
    const Eigen::VectorXd wbar = input_gradient(net, t);
    const Eigen::VectorXd fx = sys.f(*x);
    Eigen::VectorXd drift = fx;
    Eigen::MatrixXd g;
    Eigen::VectorXd a;
    double A = 0.0;
    if (sys.m > 0) {
      g = sys.g_at(*x);
      a = g.transpose() * wbar;
      A = a.squaredNorm();
      if (u_nom.size() == sys.m) drift += g * u_nom;
    }
    const double v = -wbar.dot(drift);
    const RelaxedQp q = relaxed_qp(v, A, rho);
    loss += w * q.value;
    if (grad && q.value > 0.0) {
      Eigen::VectorXd gw = -q.d_v * drift;
      if (sys.m > 0) gw += 2.0 * q.d_A * (g * a);
      gw *= scale * w;
      accumulate_gradient(net, lay, *x, t, 0.0, nullptr, &gw, *grad);
    }
  }
  return loss;
}

/// Mean over clusters of the mean squared distance between smoothed
/// activation vectors of every ordered pair in the cluster.
inline double loss_boundary_reg(const Network& net, const std::vector<const Eigen::VectorXd*>& samples,
                                const std::vector<int>& labels, double k, Eigen::VectorXd* grad = nullptr,
                                double scale = 1.0) {
  if (samples.empty()) return 0.0;
  const ParamLayout lay(net);
  const int clusters = *std::max_element(labels.begin(), labels.end()) + 1;
  std::vector<std::vector<int>> members(clusters);
  for (std::size_t i = 0; i < samples.size(); ++i) members[labels[i]].push_back(static_cast<int>(i));
  int nonempty = 0;
  for (const auto& m : members) nonempty += !m.empty();
  double loss = 0.0;
  for (const auto& m : members) {
    if (m.empty()) continue;
    const double T = static_cast<double>(m.size());
    std::vector<ForwardTrace> traces;
    std::vector<Eigen::VectorXd> phi;
    for (int i : m) {
      traces.push_back(trace(net, *samples[i]));
      Eigen::VectorXd p(net.total_neurons());
      int q = 0;
      for (const auto& z : traces.back().pre)
        for (int j = 0; j < z.size(); ++j) p[q++] = sigmoid(z[j], k);
      phi.push_back(std::move(p));
    }
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(net.total_neurons());
    double sq = 0.0;
    for (const auto& p : phi) sum += p, sq += p.squaredNorm();
    const double term = (2.0 * T * sq - 2.0 * sum.squaredNorm()) / (T * T);
    loss += term / nonempty;
    if (!grad) continue;
    for (std::size_t a = 0; a < m.size(); ++a) {
      const Eigen::VectorXd dphi = (4.0 / T) * phi[a] - (4.0 / (T * T)) * sum;
      std::vector<Eigen::VectorXd> gz;
      int q = 0;
      for (const auto& z : traces[a].pre) {
        Eigen::VectorXd gzi(z.size());
        for (int j = 0; j < z.size(); ++j, ++q) gzi[j] = dphi[q] * k * phi[a][q] * (1.0 - phi[a][q]);
        gz.push_back(scale * gzi / nonempty);
      }
      accumulate_gradient(net, lay, *samples[m[a]], traces[a], 0.0, &gz, nullptr, *grad);
    }
  }
  return loss;
}

/// Samples used by the feasibility and boundary terms: those with |b| within
/// eps_boundary (or all of them when configured).
inline std::vector<const Eigen::VectorXd*> near_boundary(const Network& net, const Batch& batch,
                                                         const TrainingConfig& cfg) {
  std::vector<const Eigen::VectorXd*> out;
  for (const auto* set : {&batch.initial, &batch.unsafe, &batch.other})
    for (const auto* x : *set)
      if (cfg.lf_all_samples || std::abs(forward(net, *x)) <= cfg.eps_boundary) out.push_back(x);
  return out;
}

/// Weighted objective on one batch; fills `grad` (resized) when non-null.
inline LossBreakdown total_loss(const Network& net, const Batch& batch, const LossContext& ctx,
                                Eigen::VectorXd* grad = nullptr) {
  const TrainingConfig& cfg = *ctx.cfg;
  if (grad) *grad = Eigen::VectorXd::Zero(net.parameter_count());
  LossBreakdown lb;
  lb.l_c = loss_correctness(net, batch.initial, batch.unsafe, cfg.a1, cfg.a2, cfg.eps_margin, grad, cfg.lambda_c);
  const auto near = near_boundary(net, batch, cfg);
  if (cfg.lambda_f > 0.0) {
    auto pool = near;
    pool.insert(pool.end(), batch.ce.begin(), batch.ce.end());
    const Eigen::VectorXd u_nom = cfg.u_nom.size() ? cfg.u_nom : Eigen::VectorXd::Zero(ctx.sys->m);
    lb.l_f = loss_feasibility(net, *ctx.sys, pool, u_nom, cfg.rho, grad, cfg.lambda_f);
  }
  if (cfg.lambda_b > 0.0 && !near.empty()) {
    std::mt19937_64 rng(ctx.cluster_seed);
    const auto labels = kmeans(near, cfg.n_cluster, rng);
    lb.l_b = loss_boundary_reg(net, near, labels, cfg.k_sigmoid, grad, cfg.lambda_b);
  }
  lb.total = cfg.lambda_c * lb.l_c + cfg.lambda_f * lb.l_f + cfg.lambda_b * lb.l_b;
  return lb;
}

// ---------------------------------------------------------------------------
// Optimizer and outer loop

struct Adam {
  double lr = 1e-2, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  Eigen::VectorXd m, v;
  long t = 0;

  void step(Eigen::VectorXd& theta, const Eigen::VectorXd& g) {
    if (m.size() != theta.size()) {
      m = Eigen::VectorXd::Zero(theta.size());
      v = Eigen::VectorXd::Zero(theta.size());
    }
    ++t;
    m = beta1 * m + (1.0 - beta1) * g;
    v = beta2 * v + (1.0 - beta2) * g.cwiseProduct(g);
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    theta.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  }
};

/// Uniform weights in +-1/sqrt(fan_in).
inline Network init_network(int n, const std::vector<int>& hidden, std::mt19937_64& rng) {
  std::vector<HiddenLayer> layers;
  int prev = n;
  auto uni = [&rng](double s) { return std::uniform_real_distribution<double>(-s, s)(rng); };
  for (int m : hidden) {
    const double s = 1.0 / std::sqrt(static_cast<double>(prev));
    HiddenLayer l{Eigen::MatrixXd(m, prev), Eigen::VectorXd(m)};
    for (int r = 0; r < m; ++r) {
      for (int c = 0; c < prev; ++c) l.weight(r, c) = uni(s);
      l.bias[r] = uni(s);
    }
    layers.push_back(std::move(l));
    prev = m;
  }
  const double s = 1.0 / std::sqrt(static_cast<double>(prev));
  Eigen::VectorXd omega(prev);
  for (int r = 0; r < prev; ++r) omega[r] = uni(s);
  return Network(n, std::move(layers), omega, uni(s));
}

struct EpochRecord {
  int epoch = 0;
  LossBreakdown loss;          // mean over the epoch's batches
  long boundary_estimate = 0;  // distinct activation patterns among near-boundary samples
  bool classified = false;     // every initial sample has b >= 0 and every unsafe sample b < 0
  bool verifier_ran = false;
  bool verified = false;
  long regions = -1;
  long ce_correctness = 0, ce_hyperplane = 0, ce_hinge = 0, undecided = 0;
  double seconds = 0.0;
};

inline void write_history_csv(std::ostream& os, const std::vector<EpochRecord>& hist) {
  os << "epoch,total,l_c,l_f,l_b,boundary_estimate,classified,verifier_ran,verified,regions,ce_correctness,"
        "ce_hyperplane,ce_hinge,undecided,seconds\n";
  const auto old = os.precision(10);
  for (const auto& r : hist)
    os << r.epoch << ',' << r.loss.total << ',' << r.loss.l_c << ',' << r.loss.l_f << ',' << r.loss.l_b << ','
       << r.boundary_estimate << ',' << r.classified << ',' << r.verifier_ran << ',' << r.verified << ','
       << r.regions << ',' << r.ce_correctness << ',' << r.ce_hyperplane << ',' << r.ce_hinge << ',' << r.undecided
       << ',' << r.seconds << '\n';
  os.precision(old);
}

struct TrainResult {
  Network net;
  bool verified = false;
  std::vector<EpochRecord> history;
  Dataset data;
  std::optional<VerificationReport> last_report;
};

struct TrainHooks {
  std::function<void(const EpochRecord&)> on_epoch;
  VerifyOptions verify;  // delta and workers are overridden from the config
  int workers = 0;
};

inline long boundary_pattern_count(const Network& net, const Dataset& d, double eps) {
  std::unordered_set<ActivationSet, ActivationSetHash> seen;
  for (const auto* set : {&d.initial, &d.unsafe, &d.interior})
    for (const auto& x : *set)
      if (std::abs(forward(net, x)) <= eps) seen.insert(activation_pattern(net, x).active);
  return static_cast<long>(seen.size());
}

inline bool classifies(const Network& net, const Dataset& d) {
  for (const auto& x : d.initial)
    if (forward(net, x) < 0.0) return false;
  for (const auto& x : d.unsafe)
    if (forward(net, x) >= 0.0) return false;
  return true;
}

/// Trains a network for the system. With counterexample guidance the
/// verifier runs after every epoch in which the samples are classified
/// correctly; its counterexamples are added to the data and training stops
/// as soon as it passes.
inline TrainResult train(const ControlAffineSystem& sys, const TrainingConfig& cfg, const TrainHooks& hooks = {}) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  TrainResult res{init_network(sys.n, cfg.hidden, rng), false, {}, make_dataset(sys, cfg, rng), std::nullopt};
  Dataset& data = res.data;
  Eigen::VectorXd theta = res.net.parameters();
  Adam adam;
  adam.lr = cfg.learning_rate;
  LossContext ctx{&sys, &cfg, cfg.seed};
  VerifyOptions vopt = hooks.verify;
  vopt.conditions.delta = cfg.delta;
  vopt.workers = hooks.workers;
  vopt.max_per_category = cfg.ce_cap;
  vopt.seed = cfg.seed;

  // flat list of (partition, index); rebuilt each epoch so appended points join
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<std::pair<int, int>> order;
    for (int i = 0; i < static_cast<int>(data.initial.size()); ++i) order.emplace_back(0, i);
    for (int i = 0; i < static_cast<int>(data.unsafe.size()); ++i) order.emplace_back(1, i);
    for (int i = 0; i < static_cast<int>(data.interior.size()); ++i) order.emplace_back(2, i);
    std::shuffle(order.begin(), order.end(), rng);

    EpochRecord rec;
    rec.epoch = epoch;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      Batch b;
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      for (std::size_t i = start; i < stop; ++i) {
        const auto [part, idx] = order[i];
        if (part == 0) b.initial.push_back(&data.initial[idx]);
        else if (part == 1) b.unsafe.push_back(&data.unsafe[idx]);
        else b.other.push_back(&data.interior[idx]);
      }
      for (const auto& x : data.ce_feasible) b.ce.push_back(&x);
      ctx.cluster_seed = cfg.seed * 1000003ULL + static_cast<std::uint64_t>(adam.t);
      Eigen::VectorXd grad;
      const LossBreakdown lb = total_loss(res.net, b, ctx, &grad);
      if (!std::isfinite(lb.total) || !grad.allFinite())
        throw TrainingDiverged("training diverged at epoch " + std::to_string(epoch) + " (loss " +
                               std::to_string(lb.total) + "); try a smaller learning rate or k_sigmoid");
      adam.step(theta, grad);
      res.net = res.net.with_parameters(theta);
      rec.loss.total += lb.total, rec.loss.l_c += lb.l_c, rec.loss.l_f += lb.l_f, rec.loss.l_b += lb.l_b;
      ++batches;
    }
    if (batches) {
      rec.loss.total /= batches, rec.loss.l_c /= batches, rec.loss.l_f /= batches, rec.loss.l_b /= batches;
    }
    rec.boundary_estimate = boundary_pattern_count(res.net, data, cfg.eps_boundary);
    rec.classified = classifies(res.net, data);

    if (cfg.ce_guidance && rec.classified) {
      rec.verifier_ran = true;
      try {
        VerificationReport rep = verify(res.net, sys, vopt);
        rec.verified = rep.verified;
        rec.regions = static_cast<long>(rep.num_regions);
        rec.ce_correctness = rep.count(CeCategory::Correctness);
        rec.ce_hyperplane = rep.count(CeCategory::Hyperplane);
        rec.ce_hinge = rep.count(CeCategory::Hinge);
        rec.undecided = static_cast<long>(rep.undecided.size());
        // correctness first, then the invariance categories
        for (CeCategory cat : {CeCategory::Correctness, CeCategory::Hyperplane, CeCategory::Hinge}) {
          for (const auto& ce : rep.counterexamples) {
            if (ce.category != cat) continue;
            if (cat == CeCategory::Correctness) data.unsafe.push_back(ce.state);
            else data.ce_feasible.push_back(ce.state);
            data.ce_log.push_back(to_string(cat));
          }
        }
        for (const auto& u : rep.undecided) {
          if (u.candidate.size() != sys.n) continue;
          if (u.category == CeCategory::Correctness) {
            if (sys.h(u.candidate) < 0.0) data.unsafe.push_back(u.candidate);
          } else {
            data.ce_feasible.push_back(u.candidate);
          }
          data.ce_log.push_back(std::string("undecided-") + to_string(u.category));
        }
        res.last_report = std::move(rep);
      } catch (const NotFound&) {
        rec.verified = false;
      } catch (const BudgetExceeded&) {
        rec.verified = false;
      }
    }
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    res.history.push_back(rec);
    if (hooks.on_epoch) hooks.on_epoch(rec);
    if (rec.verified) {
      res.verified = true;
      break;
    }
  }
  return res;
}

/// Fraction of safe samples (h >= 0) inside D = {b >= 0}.
inline double safe_coverage(const Network& net, const ControlAffineSystem& sys, int samples, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  long safe = 0, inside = 0;
  for (int i = 0; i < samples; ++i) {
    const Eigen::VectorXd x = sys.sample_domain(rng);
    if (sys.h(x) < 0.0) continue;
    ++safe;
    inside += forward(net, x) >= 0.0;
  }
  return safe ? static_cast<double>(inside) / safe : 0.0;
}

}  // namespace seev
