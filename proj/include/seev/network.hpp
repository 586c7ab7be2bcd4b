#pragma once

// Scalar-output ReLU feedforward networks and their per-region affine algebra.
//
// A network maps x in R^n through L hidden ReLU layers to
//   b(x) = omega . relu(z^(L)) + psi.
// Fixing which neurons are active (an ActivationSet) makes every
// pre-activation and the output affine in x; RegionAffine holds those forms.

#include <algorithm>
#include <compare>
#include <cstdint>
#include <fstream>
#include <functional>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "seev/error.hpp"
#include "seev/linear.hpp"

namespace seev {

/// Pre-activations with |z| <= this are reported as unstable when evaluating
/// in floating point. The LP path never uses it.
inline constexpr double kZeroTolerance = 1e-8;

/// Hidden neuron (layer, index), both zero-based.
struct Neuron {
  int layer = 0;
  int index = 0;
  auto operator<=>(const Neuron&) const = default;
};

/// Neurons with nonnegative pre-activation, stored as a flat bit vector in
/// layer-major order.
class ActivationSet {
 public:
  ActivationSet() = default;
  explicit ActivationSet(std::vector<std::uint8_t> bits) : bits_(std::move(bits)) {
    for (auto& b : bits_) b = b ? 1 : 0;
  }
  static ActivationSet none(int total) { return ActivationSet(std::vector<std::uint8_t>(total, 0)); }
  static ActivationSet all(int total) { return ActivationSet(std::vector<std::uint8_t>(total, 1)); }

  int size() const { return static_cast<int>(bits_.size()); }
  bool test(int flat) const { return bits_[flat] != 0; }
  void set(int flat, bool on) { bits_[flat] = on ? 1 : 0; }
  ActivationSet flipped(int flat) const {
    ActivationSet s = *this;
    s.bits_[flat] ^= 1;
    return s;
  }
  int count() const { return static_cast<int>(std::count(bits_.begin(), bits_.end(), 1)); }
  const std::vector<std::uint8_t>& bits() const { return bits_; }

  /// |A delta B|.
  friend int symmetric_difference(const ActivationSet& a, const ActivationSet& b) {
    if (a.size() != b.size()) throw DimensionMismatch("ActivationSet: size mismatch");
    int d = 0;
    for (int i = 0; i < a.size(); ++i) d += a.bits_[i] != b.bits_[i];
    return d;
  }

  friend bool operator==(const ActivationSet&, const ActivationSet&) = default;
  friend auto operator<=>(const ActivationSet& a, const ActivationSet& b) { return a.bits_ <=> b.bits_; }

  /// Hex digits, bit k of the flat vector is bit (k mod 4) of hex digit k/4.
  std::string to_hex() const {
    static constexpr char digits[] = "0123456789abcdef";
    std::vector<unsigned> nibbles((bits_.size() + 3) / 4, 0u);
    for (std::size_t k = 0; k < bits_.size(); ++k)
      if (bits_[k]) nibbles[k / 4] |= 1u << (k % 4);
    std::string out;
    for (unsigned v : nibbles) out.push_back(digits[v]);
    return out.empty() ? "0" : out;
  }
  static ActivationSet from_hex(const std::string& hex, int total) {
    ActivationSet s = none(total);
    for (int k = 0; k < total; ++k) {
      const std::size_t pos = static_cast<std::size_t>(k / 4);
      if (pos >= hex.size()) throw ParseError("ActivationSet: hex string too short");
      const char c = hex[pos];
      int v = (c >= '0' && c <= '9') ? c - '0' : (c >= 'a' && c <= 'f') ? c - 'a' + 10 : -1;
      if (v < 0) throw ParseError("ActivationSet: bad hex digit");
      s.bits_[k] = (v >> (k % 4)) & 1;
    }
    return s;
  }

 private:
  std::vector<std::uint8_t> bits_;
};

struct ActivationSetHash {
  std::size_t operator()(const ActivationSet& s) const noexcept {
    std::uint64_t h = 1469598103934665603ull;
    for (auto b : s.bits()) {
      h ^= b;
      h *= 1099511628211ull;
    }
    return static_cast<std::size_t>(h);
  }
};

/// Neurons whose pre-activation is (numerically) zero.
using UnstableSet = std::vector<Neuron>;

struct HiddenLayer {
  Eigen::MatrixXd weight;  // M_i x M_{i-1}
  Eigen::VectorXd bias;    // M_i
};

class Network {
 public:
  Network() = default;
  Network(int input_dim, std::vector<HiddenLayer> layers, Eigen::VectorXd output_weight, double output_bias)
      : input_dim_(input_dim),
        layers_(std::move(layers)),
        output_weight_(std::move(output_weight)),
        output_bias_(output_bias) {
    validate();
  }

  int input_dim() const { return input_dim_; }
  int num_layers() const { return static_cast<int>(layers_.size()); }
  int layer_size(int i) const { return static_cast<int>(layers_[i].bias.size()); }
  int layer_offset(int i) const { return offsets_[i]; }
  int total_neurons() const { return offsets_.back(); }
  std::vector<int> layer_sizes() const {
    std::vector<int> s;
    for (int i = 0; i < num_layers(); ++i) s.push_back(layer_size(i));
    return s;
  }
  const HiddenLayer& layer(int i) const { return layers_[i]; }
  const std::vector<HiddenLayer>& layers() const { return layers_; }
  const Eigen::VectorXd& output_weight() const { return output_weight_; }
  double output_bias() const { return output_bias_; }

  int flat_index(Neuron n) const { return offsets_[n.layer] + n.index; }
  Neuron neuron_at(int flat) const {
    int l = 0;
    while (flat >= offsets_[l + 1]) ++l;
    return {l, flat - offsets_[l]};
  }

  bool compatible(const ActivationSet& s) const { return s.size() == total_neurons(); }

  /// Number of scalar parameters, in the order used by parameters().
  int parameter_count() const {
    int c = 0;
    for (const auto& l : layers_) c += static_cast<int>(l.weight.size() + l.bias.size());
    return c + static_cast<int>(output_weight_.size()) + 1;
  }

  /// Per layer: weight (row-major) then bias; then omega, then psi.
  Eigen::VectorXd parameters() const {
    Eigen::VectorXd p(parameter_count());
    int k = 0;
    for (const auto& l : layers_) {
      for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
        for (Eigen::Index c = 0; c < l.weight.cols(); ++c) p[k++] = l.weight(r, c);
      for (Eigen::Index r = 0; r < l.bias.size(); ++r) p[k++] = l.bias[r];
    }
    for (Eigen::Index r = 0; r < output_weight_.size(); ++r) p[k++] = output_weight_[r];
    p[k++] = output_bias_;
    return p;
  }

  Network with_parameters(const Eigen::VectorXd& p) const {
    if (p.size() != parameter_count()) throw DimensionMismatch("Network: parameter count mismatch");
    Network out = *this;
    int k = 0;
    for (auto& l : out.layers_) {
      for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
        for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = p[k++];
      for (Eigen::Index r = 0; r < l.bias.size(); ++r) l.bias[r] = p[k++];
    }
    for (Eigen::Index r = 0; r < out.output_weight_.size(); ++r) out.output_weight_[r] = p[k++];
    out.output_bias_ = p[k++];
    out.validate();
    return out;
  }

 private:
  void validate() {
    if (input_dim_ <= 0) throw DimensionMismatch("Network: input dimension must be positive");
    if (layers_.empty()) throw DimensionMismatch("Network: at least one hidden layer required");
    offsets_.assign(1, 0);
    int prev = input_dim_;
    for (const auto& l : layers_) {
      if (l.bias.size() <= 0) throw DimensionMismatch("Network: empty layer");
      if (l.weight.rows() != l.bias.size() || l.weight.cols() != prev)
        throw DimensionMismatch("Network: weight shape inconsistent with layer sizes");
      if (!l.weight.allFinite() || !l.bias.allFinite()) throw Error("Network: non-finite parameter");
      prev = static_cast<int>(l.bias.size());
      offsets_.push_back(offsets_.back() + prev);
    }
    if (output_weight_.size() != prev) throw DimensionMismatch("Network: output weight length mismatch");
    if (!output_weight_.allFinite() || !std::isfinite(output_bias_))
      throw Error("Network: non-finite parameter");
  }

  int input_dim_ = 0;
  std::vector<HiddenLayer> layers_;
  Eigen::VectorXd output_weight_;
  double output_bias_ = 0.0;
  std::vector<int> offsets_{0};
};

/// Pre- and post-activations of every layer for one input.
struct ForwardTrace {
  std::vector<Eigen::VectorXd> pre;
  std::vector<Eigen::VectorXd> post;
  double output = 0.0;
};

inline ForwardTrace trace(const Network& net, const Eigen::VectorXd& x) {
  if (x.size() != net.input_dim()) throw DimensionMismatch("forward: input dimension mismatch");
  ForwardTrace t;
  const Eigen::VectorXd* in = &x;
  for (const auto& l : net.layers()) {
    t.pre.push_back(l.weight * *in + l.bias);
    t.post.push_back(t.pre.back().cwiseMax(0.0));
    in = &t.post.back();
  }
  t.output = net.output_weight().dot(*in) + net.output_bias();
  return t;
}

inline double forward(const Network& net, const Eigen::VectorXd& x) { return trace(net, x).output; }

struct ActivationPattern {
  ActivationSet active;
  UnstableSet unstable;
};

inline ActivationPattern activation_pattern(const Network& net, const Eigen::VectorXd& x,
                                            double zero_tol = kZeroTolerance) {
  const ForwardTrace t = trace(net, x);
  ActivationPattern p{ActivationSet::none(net.total_neurons()), {}};
  for (int i = 0; i < net.num_layers(); ++i)
    for (int j = 0; j < net.layer_size(i); ++j) {
      const double z = t.pre[i][j];
      if (z >= 0.0) p.active.set(net.flat_index({i, j}), true);
      if (std::abs(z) <= zero_tol) p.unstable.push_back({i, j});
    }
  return p;
}

/// Affine forms valid on the closed region of an activation set.
///
/// pre_weight[i].row(j) . x + pre_bias[i][j] is the pre-activation of neuron
/// (i, j) for every x in the region, whether or not (i, j) is active. The
/// post-activation form equals the pre-activation form for active neurons and
/// is identically zero otherwise.
struct RegionAffine {
  ActivationSet set;
  std::vector<Eigen::MatrixXd> pre_weight;  // M_i x n
  std::vector<Eigen::VectorXd> pre_bias;
  AffineForm output;  // b(x) = output.w . x + output.c

  AffineForm neuron(Neuron n) const { return {pre_weight[n.layer].row(n.index).transpose(), pre_bias[n.layer][n.index]}; }
};

inline RegionAffine region_affine(const Network& net, const ActivationSet& s) {
  if (!net.compatible(s)) throw DimensionMismatch("region_affine: activation set shape mismatch");
  const int n = net.input_dim();
  RegionAffine ra;
  ra.set = s;
  Eigen::MatrixXd post_w = Eigen::MatrixXd::Identity(n, n);
  Eigen::VectorXd post_c = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < net.num_layers(); ++i) {
    const auto& l = net.layer(i);
    Eigen::MatrixXd w = l.weight * post_w;
    Eigen::VectorXd c = l.weight * post_c + l.bias;
    post_w = w;
    post_c = c;
    for (int j = 0; j < net.layer_size(i); ++j)
      if (!s.test(net.flat_index({i, j}))) {
        post_w.row(j).setZero();
        post_c[j] = 0.0;
      }
    ra.pre_weight.push_back(std::move(w));
    ra.pre_bias.push_back(std::move(c));
  }
  ra.output.w = post_w.transpose() * net.output_weight();
  ra.output.c = net.output_weight().dot(post_c) + net.output_bias();
  return ra;
}

/// The closed region { x : S(x) = S } as halfspaces, one per neuron.
inline std::vector<Halfspace> region_constraints(const Network& net, const RegionAffine& ra) {
  std::vector<Halfspace> out;
  out.reserve(net.total_neurons());
  for (int i = 0; i < net.num_layers(); ++i)
    for (int j = 0; j < net.layer_size(i); ++j) {
      const AffineForm z = ra.neuron({i, j});
      out.push_back(ra.set.test(net.flat_index({i, j})) ? z.nonnegative() : z.nonpositive());
    }
  return out;
}

inline std::vector<Halfspace> region_constraints(const Network& net, const ActivationSet& s) {
  return region_constraints(net, region_affine(net, s));
}

// ---------------------------------------------------------------------------
// Weights file

inline void write_network(std::ostream& os, const Network& net) {
  os << "ncbf v1 n=" << net.input_dim() << " layers=" << net.num_layers() << '\n';
  os << std::setprecision(17);
  for (int i = 0; i < net.num_layers(); ++i) {
    const auto& l = net.layer(i);
    os << "layer " << (i + 1) << ' ' << l.bias.size() << '\n';
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) os << (c ? " " : "") << l.weight(r, c);
      os << '\n';
    }
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) os << (r ? " " : "") << l.bias[r];
    os << '\n';
  }
  os << "output\n";
  for (Eigen::Index r = 0; r < net.output_weight().size(); ++r) os << (r ? " " : "") << net.output_weight()[r];
  os << '\n' << net.output_bias() << '\n';
}

namespace detail {

inline std::string expect_word(std::istream& is, const char* what) {
  std::string w;
  if (!(is >> w)) throw ParseError(std::string("weights file: unexpected end, wanted ") + what);
  return w;
}

inline double read_number(std::istream& is) {
  std::string tok = expect_word(is, "number");
  try {
    std::size_t used = 0;
    double v = std::stod(tok, &used);
    if (used != tok.size()) throw ParseError("weights file: bad number '" + tok + "'");
    return v;
  } catch (const std::logic_error&) {
    throw ParseError("weights file: bad number '" + tok + "'");
  }
}

inline int read_key_int(std::istream& is, const std::string& key) {
  std::string w = expect_word(is, key.c_str());
  if (w.rfind(key + "=", 0) != 0) throw ParseError("weights file: expected " + key + "=, got '" + w + "'");
  try {
    return std::stoi(w.substr(key.size() + 1));
  } catch (const std::logic_error&) {
    throw ParseError("weights file: bad integer in '" + w + "'");
  }
}

}  // namespace detail

inline Network read_network(std::istream& is) {
  using detail::expect_word;
  if (expect_word(is, "header") != "ncbf" || expect_word(is, "version") != "v1")
    throw ParseError("weights file: missing 'ncbf v1' header");
  const int n = detail::read_key_int(is, "n");
  const int num_layers = detail::read_key_int(is, "layers");
  if (n <= 0 || num_layers <= 0) throw ParseError("weights file: bad dimensions");
  std::vector<HiddenLayer> layers;
  int prev = n;
  for (int i = 0; i < num_layers; ++i) {
    if (expect_word(is, "layer") != "layer") throw ParseError("weights file: expected 'layer'");
    const int idx = static_cast<int>(detail::read_number(is));
    const int m = static_cast<int>(detail::read_number(is));
    if (idx != i + 1 || m <= 0) throw ParseError("weights file: bad layer header");
    HiddenLayer l{Eigen::MatrixXd(m, prev), Eigen::VectorXd(m)};
    for (int r = 0; r < m; ++r)
      for (int c = 0; c < prev; ++c) l.weight(r, c) = detail::read_number(is);
    for (int r = 0; r < m; ++r) l.bias[r] = detail::read_number(is);
    layers.push_back(std::move(l));
    prev = m;
  }
  if (expect_word(is, "output") != "output") throw ParseError("weights file: expected 'output'");
  Eigen::VectorXd omega(prev);
  for (int r = 0; r < prev; ++r) omega[r] = detail::read_number(is);
  const double psi = detail::read_number(is);
  return Network(n, std::move(layers), std::move(omega), psi);
}

inline Network load_network(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open weights file: " + path);
  return read_network(in);
}

inline void save_network(const std::string& path, const Network& net) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write weights file: " + path);
  write_network(out, net);
}

}  // namespace seev
