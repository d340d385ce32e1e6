#pragma once

// Polynomial networks x -> W_d s(W_{d-1} s(... s(W_1 x))) with s(z) = z^k,
// the norm-constrained classes they are drawn from, and the layer-wise
// feasibility chain that keeps every activation 1-Lipschitz on its inputs.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "polyrad/linalg.hpp"
#include "polyrad/random.hpp"

namespace polyrad {

// Relative slack for norm comparisons against budgets and thresholds. Radial
// rescaling hits a budget to within a few ulps, never exactly.
inline constexpr double kNormTolerance = 1e-12;

inline bool within(double value, double limit) {
  return value <= limit * (1.0 + kNormTolerance) + 1e-300;
}

inline double activation(double z, int k) {
  double r = z;
  for (int i = 1; i < k; ++i) r *= z;
  return r;
}

// s'(z) = k z^(k-1)
inline double activation_slope(double z, int k) { return k * activation(z, k - 1); }

class PolyNet {
 public:
  PolyNet(std::vector<Matrix> weights, int degree) : weights_(std::move(weights)), degree_(degree) {
    if (weights_.empty()) throw std::invalid_argument("a network needs at least one layer");
    if (degree_ < 2) throw std::invalid_argument("activation degree k must be >= 2");
    for (std::size_t i = 1; i < weights_.size(); ++i) {
      if (weights_[i].cols() != weights_[i - 1].rows()) {
        throw std::invalid_argument("layer " + std::to_string(i + 1) + " expects " +
                                    std::to_string(weights_[i].cols()) + " inputs but layer " +
                                    std::to_string(i) + " produces " +
                                    std::to_string(weights_[i - 1].rows()));
      }
    }
  }

  std::size_t depth() const { return weights_.size(); }
  int degree() const { return degree_; }
  std::size_t input_dim() const { return weights_.front().cols(); }
  std::size_t output_dim() const { return weights_.back().rows(); }

  // Layers are numbered 1..depth().
  const Matrix& layer(std::size_t r) const {
    check_layer(r);
    return weights_[r - 1];
  }
  const std::vector<Matrix>& weights() const { return weights_; }

  PolyNet with_layer(std::size_t r, Matrix w) const {
    check_layer(r);
    if (!w.same_shape(weights_[r - 1])) throw std::invalid_argument("replacement layer has wrong shape");
    auto copy = weights_;
    copy[r - 1] = std::move(w);
    return PolyNet(std::move(copy), degree_);
  }

  void check_layer(std::size_t r) const {
    if (r < 1 || r > weights_.size()) {
      throw std::out_of_range("layer index " + std::to_string(r) + " outside 1.." +
                              std::to_string(weights_.size()));
    }
  }

  friend bool operator==(const PolyNet& a, const PolyNet& b) {
    return a.degree_ == b.degree_ && a.weights_ == b.weights_;
  }

 private:
  std::vector<Matrix> weights_;
  int degree_;
};

namespace detail {

inline void activate_in_place(Vector& v, int k) {
  for (double& z : v) z = activation(z, k);
}

// Applies layers [first, last) to h; every layer but the network's final one
// is followed by the activation.
inline Vector apply_layers(std::span<const Matrix> weights, int k, std::size_t first,
                           std::size_t last, Vector h) {
  for (std::size_t i = first; i < last; ++i) {
    h = matvec(weights[i], h);
    if (i + 1 < weights.size()) activate_in_place(h, k);
  }
  return h;
}

}  // namespace detail

inline Vector forward(const PolyNet& net, std::span<const double> x) {
  if (x.size() != net.input_dim()) {
    throw std::invalid_argument("input has dimension " + std::to_string(x.size()) +
                                ", network expects " + std::to_string(net.input_dim()));
  }
  return detail::apply_layers(net.weights(), net.degree(), 0, net.depth(), Vector(x.begin(), x.end()));
}

// Post-activation state after layer r. The activation is applied at r even
// when r is the last layer.
inline Vector forward_prefix(const PolyNet& net, std::size_t r, std::span<const double> x) {
  net.check_layer(r);
  if (x.size() != net.input_dim()) throw std::invalid_argument("forward_prefix: input dimension mismatch");
  Vector h(x.begin(), x.end());
  for (std::size_t i = 0; i < r; ++i) {
    h = matvec(net.weights()[i], h);
    detail::activate_in_place(h, net.degree());
  }
  return h;
}

// Evaluates layers r+1..d on the post-activation state of layer r, so that
// forward_suffix(net, r, forward_prefix(net, r, x)) == forward(net, x) for r < d.
inline Vector forward_suffix(const PolyNet& net, std::size_t r, std::span<const double> h) {
  if (r >= net.depth()) throw std::out_of_range("forward_suffix needs r < depth");
  return detail::apply_layers(net.weights(), net.degree(), r, net.depth(), Vector(h.begin(), h.end()));
}

// Inputs and pre-activations of every layer for one evaluation.
struct ForwardTrace {
  std::vector<Vector> layer_inputs;     // h_0 = x, ..., h_{d-1}
  std::vector<Vector> pre_activations;  // W_i h_{i-1}, i = 1..d
  Vector output;
};

inline ForwardTrace trace(const PolyNet& net, std::span<const double> x) {
  if (x.size() != net.input_dim()) throw std::invalid_argument("trace: input dimension mismatch");
  ForwardTrace t;
  Vector h(x.begin(), x.end());
  for (std::size_t i = 0; i < net.depth(); ++i) {
    t.layer_inputs.push_back(h);
    Vector z = matvec(net.weights()[i], h);
    t.pre_activations.push_back(z);
    if (i + 1 < net.depth()) detail::activate_in_place(z, net.degree());
    h = std::move(z);
  }
  t.output = std::move(h);
  return t;
}

// Largest k|z|^(k-1) over the hidden units (0 for a single linear layer).
inline double max_activation_slope(const PolyNet& net, std::span<const double> x) {
  const ForwardTrace t = trace(net, x);
  double worst = 0.0;
  for (std::size_t i = 0; i + 1 < net.depth(); ++i) {
    for (double z : t.pre_activations[i]) {
      worst = std::max(worst, std::abs(activation_slope(z, net.degree())));
    }
  }
  return worst;
}

inline std::vector<double> layer_norms(const PolyNet& net, Exponent q, Exponent p) {
  std::vector<double> norms;
  norms.reserve(net.depth());
  for (const auto& w : net.weights()) norms.push_back(matrix_norm_qp(w, q, p));
  return norms;
}

// Radii B_0..B_d: B_0 = B, B_i = (B_{i-1} ||W_i||)^k for hidden layers and
// B_d = ||W_d|| B_{d-1} for the linear output. Each B_i bounds the L_p norm of
// layer i's output over the input ball.
inline std::vector<double> propagate_norm_bound(std::span<const double> norms, double radius, int k) {
  if (radius < 0.0) throw std::invalid_argument("input radius must be nonnegative");
  std::vector<double> radii{radius};
  for (std::size_t i = 0; i < norms.size(); ++i) {
    const double linear = radii.back() * norms[i];
    radii.push_back(i + 1 < norms.size() ? activation(linear, k) : linear);
  }
  return radii;
}

inline std::vector<double> propagate_norm_bound(const PolyNet& net, double radius, Exponent q, Exponent p) {
  return propagate_norm_bound(layer_norms(net, q, p), radius, net.degree());
}

// (1/k)^(1/(k-1)): the largest |z| at which k|z|^(k-1) <= 1.
inline double constraint_threshold(int k) {
  if (k < 2) throw std::invalid_argument("activation degree k must be >= 2");
  return std::pow(1.0 / k, 1.0 / (k - 1));
}

struct LayerFeasibility {
  double input_radius = 0.0;  // B_{i-1}
  double layer_norm = 0.0;    // ||W_i||_{q,p}
  double product = 0.0;       // B_{i-1} ||W_i||_{q,p}
  double threshold = 0.0;
  bool passes = false;
};

struct FeasibilityReport {
  std::vector<LayerFeasibility> layers;
  bool passes = true;
  // The sufficient conditions ||W_1|| <= 1/(2B), ||W_j|| <= 2^(k-1) (j >= 2).
  bool canonical_first_layer = true;
  bool canonical_later_layers = true;
};

inline FeasibilityReport check_feasibility(const PolyNet& net, double radius, Exponent q, Exponent p) {
  const auto norms = layer_norms(net, q, p);
  const auto radii = propagate_norm_bound(norms, radius, net.degree());
  const double threshold = constraint_threshold(net.degree());
  FeasibilityReport report;
  for (std::size_t i = 0; i < norms.size(); ++i) {
    LayerFeasibility layer{radii[i], norms[i], radii[i] * norms[i], threshold, false};
    layer.passes = within(layer.product, threshold);
    report.passes = report.passes && layer.passes;
    report.layers.push_back(layer);
  }
  report.canonical_first_layer = within(norms.front() * radius, 0.5);
  const double later = std::ldexp(1.0, net.degree() - 1);
  for (std::size_t i = 1; i < norms.size(); ++i) {
    report.canonical_later_layers = report.canonical_later_layers && within(norms[i], later);
  }
  return report;
}

// A norm-constrained class of depth-d polynomial networks.
struct ClassSpec {
  std::vector<std::size_t> dims;  // n_0 (input), n_1, ..., n_d (output)
  int degree = 2;
  Exponent q{2.0};
  Exponent p{2.0};
  double input_radius = 1.0;
  std::vector<double> budgets;  // M(1..d)
  std::optional<double> gamma;  // lower bound on prod ||W_j||_{q,inf}
  bool canonical = true;

  std::size_t depth() const { return dims.empty() ? 0 : dims.size() - 1; }

  double budget_product() const {
    double prod = 1.0;
    for (double m : budgets) prod *= m;
    return prod;
  }

  // Throws std::invalid_argument describing the first violated invariant.
  void validate() const {
    if (dims.size() < 2) throw std::invalid_argument("dims needs an input and at least one layer size");
    for (std::size_t n : dims) {
      if (n == 0) throw std::invalid_argument("layer sizes must be >= 1");
    }
    if (degree < 2) throw std::invalid_argument("activation degree k must be >= 2");
    if (!are_dual(p, q)) {
      throw std::invalid_argument("q = " + q.to_string() + " and p = " + p.to_string() +
                                  " are not dual exponents");
    }
    if (!(input_radius > 0.0) || !std::isfinite(input_radius)) {
      throw std::invalid_argument("input radius B must be positive and finite");
    }
    if (budgets.size() != depth()) {
      throw std::invalid_argument("expected " + std::to_string(depth()) + " layer budgets, got " +
                                  std::to_string(budgets.size()));
    }
    for (double m : budgets) {
      if (!(m >= 0.0) || !std::isfinite(m)) throw std::invalid_argument("layer budgets must be finite and >= 0");
    }
    if (canonical) {
      if (!within(budgets.front(), 1.0 / (2.0 * input_radius))) {
        throw std::invalid_argument("canonical class needs M(1) <= 1/(2B) = " +
                                    std::to_string(1.0 / (2.0 * input_radius)));
      }
      const double later = std::ldexp(1.0, degree - 1);
      for (std::size_t j = 1; j < budgets.size(); ++j) {
        if (!within(budgets[j], later)) {
          throw std::invalid_argument("canonical class needs M(" + std::to_string(j + 1) +
                                      ") <= 2^(k-1) = " + std::to_string(later));
        }
      }
    }
    if (gamma) {
      if (!(*gamma > 0.0)) throw std::invalid_argument("Gamma must be positive");
      if (!within(*gamma, budget_product())) {
        throw std::invalid_argument("Gamma exceeds the budget product prod M(j)");
      }
    }
  }
};

// Budgets at the boundary of the canonical class: M(1) = 1/(2B), M(j) = 2^(k-1).
inline std::vector<double> canonical_budgets(std::size_t depth, int k, double radius) {
  std::vector<double> budgets(depth, std::ldexp(1.0, k - 1));
  if (depth > 0) budgets.front() = 1.0 / (2.0 * radius);
  return budgets;
}

inline double gaussian(Rng& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }

// Gaussian entries, then each layer rescaled so ||W_j||_{q,p} = fraction * M(j).
inline PolyNet sample_feasible_net(const ClassSpec& spec, double fraction, std::uint64_t seed) {
  spec.validate();
  if (!(fraction > 0.0 && fraction <= 1.0)) throw std::invalid_argument("norm fraction must be in (0, 1]");
  Rng rng(seed);
  std::vector<Matrix> weights;
  for (std::size_t j = 1; j < spec.dims.size(); ++j) {
    Matrix w(spec.dims[j], spec.dims[j - 1]);
    for (double& v : w.entries()) v = gaussian(rng);
    const double target = fraction * spec.budgets[j - 1];
    const double norm = matrix_norm_qp(w, spec.q, spec.p);
    w *= (target == 0.0 || norm == 0.0) ? 0.0 : target / norm;
    weights.push_back(std::move(w));
  }
  return PolyNet(std::move(weights), spec.degree);
}

struct InputSampler {
  std::size_t count = 1;
  std::size_t dim = 1;
  Exponent p{2.0};
  double radius = 1.0;
  // Probability that a point is placed on the sphere ||x||_p = radius rather
  // than at the uniform-in-ball radius radius * u^(1/dim).
  double sphere_bias = 0.0;
};

namespace detail {

// Direction uniform with respect to the cone measure of the L_p sphere.
inline Vector lp_sphere_direction(Rng& rng, std::size_t dim, Exponent p) {
  Vector g(dim);
  if (p.is_infinite()) {
    std::uniform_real_distribution<double> cube(-1.0, 1.0);
    for (double& v : g) v = cube(rng);
  } else {
    // Generalised Gaussian with density proportional to exp(-|g|^p).
    std::gamma_distribution<double> gamma(1.0 / p.value(), 1.0);
    std::bernoulli_distribution sign(0.5);
    for (double& v : g) {
      const double magnitude = std::pow(gamma(rng), 1.0 / p.value());
      v = sign(rng) ? magnitude : -magnitude;
    }
  }
  const double n = vector_norm(g, p);
  if (n == 0.0) {
    g.assign(dim, 0.0);
    g[0] = 1.0;
    return g;
  }
  for (double& v : g) v /= n;
  return g;
}

}  // namespace detail

// Points in the L_p ball of the given radius; every point satisfies
// ||x||_p <= radius exactly in floating point.
inline std::vector<Vector> sample_inputs(const InputSampler& cfg, std::uint64_t seed) {
  if (cfg.count == 0 || cfg.dim == 0) throw std::invalid_argument("sample count and dimension must be >= 1");
  if (!(cfg.radius >= 0.0) || !std::isfinite(cfg.radius)) throw std::invalid_argument("radius must be finite and >= 0");
  Rng rng(seed);
  std::vector<Vector> xs;
  xs.reserve(cfg.count);
  for (std::size_t i = 0; i < cfg.count; ++i) {
    Vector x = detail::lp_sphere_direction(rng, cfg.dim, cfg.p);
    const double u = uniform01(rng);
    const bool on_sphere = cfg.sphere_bias > 0.0 && uniform01(rng) < cfg.sphere_bias;
    const double r = on_sphere ? cfg.radius : cfg.radius * std::pow(u, 1.0 / static_cast<double>(cfg.dim));
    for (double& v : x) v *= r;
    while (vector_norm(x, cfg.p) > cfg.radius) {
      for (double& v : x) v *= 1.0 - 4.0 * std::numeric_limits<double>::epsilon();
    }
    xs.push_back(std::move(x));
  }
  return xs;
}

inline std::vector<Vector> sample_inputs(std::size_t m, std::size_t n, Exponent p, double radius,
                                         std::uint64_t seed) {
  return sample_inputs(InputSampler{m, n, p, radius, 0.0}, seed);
}

}  // namespace polyrad
