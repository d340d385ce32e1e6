#pragma once

// Monte Carlo estimation of the empirical Rademacher complexity
//   R_m(H) = E_eps sup_{N in H} (1/m) sum_i eps_i N(x_i)
// for norm-constrained polynomial networks. The inner supremum is attacked
// with multi-restart projected gradient ascent; because any feasible network
// gives a lower value for the sup, the estimate is one-sided (a lower
// estimate). Two independent oracles are provided for checking it: the
// closed form of the one-layer class and exhaustive grid search for classes
// with at most three weights.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "polyrad/linalg.hpp"
#include "polyrad/parallel.hpp"
#include "polyrad/polynet.hpp"
#include "polyrad/random.hpp"

namespace polyrad {

struct OptimizerConfig {
  std::size_t steps = 500;
  double step_size = 0.05;
  double decay = 0.999;
  std::size_t restarts = 8;
  std::uint64_t seed = 0;
  std::size_t threads = 0;

  void validate() const {
    if (steps == 0) throw std::invalid_argument("optimizer steps must be >= 1");
    if (restarts == 0) throw std::invalid_argument("optimizer restarts must be >= 1");
    if (!(step_size > 0.0)) throw std::invalid_argument("optimizer step size must be positive");
    if (!(decay > 0.0 && decay <= 1.0)) throw std::invalid_argument("optimizer decay must be in (0, 1]");
  }
};

struct OptimizerDiagnostics {
  std::size_t restarts = 0;
  std::size_t iterations = 0;      // gradient evaluations, summed over restarts and draws
  std::size_t accepted_steps = 0;
  double mean_initial_objective = 0.0;
  double mean_best_objective = 0.0;
};

struct EstimateResult {
  std::vector<double> per_draw_sup;
  double mean = 0.0;
  double standard_error = 0.0;
  std::size_t draws = 0;
  OptimizerDiagnostics diagnostics;
};

namespace detail {

inline void require_scalar_output(const PolyNet& net) {
  if (net.output_dim() != 1) {
    throw std::invalid_argument("expected a scalar-output network, last layer has " +
                                std::to_string(net.output_dim()) + " rows");
  }
}

// Adds weight * dN(x)/dW_j to grads[j] for every layer (reverse mode).
inline void accumulate_gradient(const PolyNet& net, std::span<const double> x, double weight,
                                std::vector<Matrix>& grads) {
  const ForwardTrace t = trace(net, x);
  const std::size_t d = net.depth();
  const int k = net.degree();
  Vector upstream{weight};
  for (std::size_t i = d; i-- > 0;) {
    Vector delta = upstream;
    if (i + 1 < d) {
      for (std::size_t u = 0; u < delta.size(); ++u) delta[u] *= activation_slope(t.pre_activations[i][u], k);
    }
    const Vector& in = t.layer_inputs[i];
    Matrix& g = grads[i];
    for (std::size_t a = 0; a < g.rows(); ++a) {
      auto row = g.row(a);
      for (std::size_t b = 0; b < g.cols(); ++b) row[b] += delta[a] * in[b];
    }
    if (i > 0) upstream = matvec_transposed(net.weights()[i], delta);
  }
}

inline std::vector<Matrix> zero_like(const PolyNet& net) {
  std::vector<Matrix> z;
  for (const auto& w : net.weights()) z.emplace_back(w.rows(), w.cols());
  return z;
}

// Scratch buffers for objective_and_gradient, reused across calls.
struct Workspace {
  Vector pre;         // W_i h_{i-1} for every layer, concatenated
  Vector act;         // s(pre) for the hidden layers, same offsets
  Vector upstream;
  Vector delta;
  std::vector<std::size_t> offset;
};

// (1/m) sum_i eps_i N(x_i) over raw layer matrices, writing the gradient
// into grads (resized and zeroed here). No allocation once the workspace and
// grads have their shapes.
inline double objective_and_gradient(std::span<const Matrix> weights, int k, std::span<const Vector> xs,
                                     std::span<const double> eps, std::vector<Matrix>& grads, Workspace& ws) {
  const std::size_t d = weights.size();
  if (grads.size() != d) {
    grads.clear();
    for (const auto& w : weights) grads.emplace_back(w.rows(), w.cols());
  } else {
    for (auto& g : grads) std::ranges::fill(g.entries(), 0.0);
  }
  ws.offset.resize(d + 1);
  std::size_t widest = 1;
  ws.offset[0] = 0;
  for (std::size_t i = 0; i < d; ++i) {
    ws.offset[i + 1] = ws.offset[i] + weights[i].rows();
    widest = std::max({widest, weights[i].rows(), weights[i].cols()});
  }
  ws.pre.resize(ws.offset[d]);
  ws.act.resize(ws.offset[d]);
  ws.upstream.resize(widest);
  ws.delta.resize(widest);
  double* const pre = ws.pre.data();
  double* const act = ws.act.data();
  double* up = ws.upstream.data();
  double* down = ws.delta.data();

  const double inv_m = 1.0 / static_cast<double>(xs.size());
  double total = 0.0;
  for (std::size_t s = 0; s < xs.size(); ++s) {
    // Layer i reads xs[s] when i == 0, else the previous activations.
    auto input = [&](std::size_t i) { return i == 0 ? xs[s].data() : act + ws.offset[i - 1]; };
    for (std::size_t i = 0; i < d; ++i) {
      const Matrix& w = weights[i];
      const double* h = input(i);
      double* z = pre + ws.offset[i];
      const double* row = w.entries().data();
      for (std::size_t a = 0; a < w.rows(); ++a, row += w.cols()) {
        double acc = 0.0;
        for (std::size_t b = 0; b < w.cols(); ++b) acc += row[b] * h[b];
        z[a] = acc;
        if (i + 1 < d) act[ws.offset[i] + a] = activation(acc, k);
      }
    }
    const double weight = eps[s] * inv_m;
    total += weight * pre[ws.offset[d - 1]];

    // up holds dObjective/dz_i on entry to layer i.
    up[0] = weight;
    for (std::size_t i = d; i-- > 0;) {
      const Matrix& w = weights[i];
      if (i + 1 < d) {
        for (std::size_t u = 0; u < w.rows(); ++u) up[u] *= activation_slope(pre[ws.offset[i] + u], k);
      }
      const double* in = input(i);
      double* g = grads[i].entries().data();
      for (std::size_t a = 0; a < w.rows(); ++a, g += w.cols()) {
        for (std::size_t b = 0; b < w.cols(); ++b) g[b] += up[a] * in[b];
      }
      if (i > 0) {
        std::fill(down, down + w.cols(), 0.0);
        const double* row = w.entries().data();
        for (std::size_t a = 0; a < w.rows(); ++a, row += w.cols()) {
          for (std::size_t b = 0; b < w.cols(); ++b) down[b] += row[b] * up[a];
        }
        std::swap(up, down);
      }
    }
  }
  return total;
}

}  // namespace detail

// Exact gradient of the scalar output with respect to every weight.
inline std::vector<Matrix> net_gradient(const PolyNet& net, std::span<const double> x) {
  detail::require_scalar_output(net);
  auto grads = detail::zero_like(net);
  detail::accumulate_gradient(net, x, 1.0, grads);
  return grads;
}

// (1/m) sum_i eps_i N(x_i)
inline double rademacher_objective(const PolyNet& net, std::span<const Vector> xs, std::span<const double> eps) {
  detail::require_scalar_output(net);
  if (xs.size() != eps.size()) throw std::invalid_argument("need one sign per input");
  double s = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) s += eps[i] * forward(net, xs[i])[0];
  return s / static_cast<double>(xs.size());
}

inline std::vector<Matrix> rademacher_objective_gradient(const PolyNet& net, std::span<const Vector> xs,
                                                         std::span<const double> eps) {
  detail::require_scalar_output(net);
  auto grads = detail::zero_like(net);
  const double inv_m = 1.0 / static_cast<double>(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) detail::accumulate_gradient(net, xs[i], eps[i] * inv_m, grads);
  return grads;
}

inline std::vector<double> rademacher_signs(std::size_t m, std::uint64_t seed) {
  Rng rng(seed);
  std::bernoulli_distribution coin(0.5);
  std::vector<double> eps(m);
  for (double& e : eps) e = coin(rng) ? 1.0 : -1.0;
  return eps;
}

// Scales w back onto the ball ||w||_{q,p} <= budget if it left it.
inline void retract(Matrix& w, double budget, Exponent q, Exponent p) {
  const double n = matrix_norm_qp(w, q, p);
  if (n > budget) w *= n == 0.0 ? 0.0 : budget / n;
}

// argmax <G, V> over ||V||_{q,p} <= budget. Row i gets direction u_i with
// ||u_i||_q = 1 and <g_i, u_i> = ||g_i||_{q*}; the row scales t solve the
// same problem one level up with (p, p*). The maximum is budget ||G||_{q*,p*}.
inline Matrix linear_maximizer(const Matrix& g, double budget, Exponent q, Exponent p) {
  Matrix v(g.rows(), g.cols());
  double peak = 0.0;
  for (double x : g.entries()) peak = std::max(peak, std::abs(x));
  if (peak == 0.0 || budget == 0.0) return v;
  const Exponent qs = q.dual();
  const Exponent ps = p.dual();

  Vector a(g.rows());
  for (std::size_t i = 0; i < g.rows(); ++i) {
    auto out = v.row(i);
    const auto row = g.row(i);
    Vector scaled(row.begin(), row.end());
    for (double& x : scaled) x /= peak;
    a[i] = vector_norm(scaled, qs);
    if (a[i] == 0.0) continue;
    if (q.value() == 1.0) {
      std::size_t best = 0;
      for (std::size_t b = 1; b < scaled.size(); ++b) {
        if (std::abs(scaled[b]) > std::abs(scaled[best])) best = b;
      }
      out[best] = scaled[best] > 0.0 ? 1.0 : -1.0;
    } else if (q.is_infinite()) {
      for (std::size_t b = 0; b < scaled.size(); ++b) out[b] = scaled[b] > 0.0 ? 1.0 : (scaled[b] < 0.0 ? -1.0 : 0.0);
    } else {
      const double e = qs.value() - 1.0;
      for (std::size_t b = 0; b < scaled.size(); ++b) {
        out[b] = std::copysign(std::pow(std::abs(scaled[b]) / a[i], e), scaled[b]);
      }
    }
  }

  Vector t(g.rows(), 0.0);
  if (p.value() == 1.0) {
    t[static_cast<std::size_t>(std::ranges::max_element(a) - a.begin())] = budget;
  } else if (p.is_infinite()) {
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = a[i] > 0.0 ? budget : 0.0;
  } else {
    const double an = vector_norm(a, ps);
    const double e = ps.value() - 1.0;
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = budget * std::pow(a[i] / an, e);
  }
  for (std::size_t i = 0; i < g.rows(); ++i) {
    for (double& x : v.row(i)) x *= t[i];
  }
  return v;
}

struct AscentResult {
  double best = 0.0;
  std::size_t winning_restart = 0;  // 0 when the zero network was never beaten
  std::size_t iterations = 0;
  std::size_t accepted_steps = 0;
  double mean_initial_objective = 0.0;
};

namespace detail {

inline void check_class_inputs(const ClassSpec& spec, std::span<const Vector> xs) {
  spec.validate();
  if (!spec.canonical) {
    throw std::invalid_argument(
        "estimation requires a canonical class (M(1) <= 1/(2B), M(j) <= 2^(k-1)); otherwise the activations "
        "are not guaranteed to be 1-Lipschitz on the reachable inputs");
  }
  if (spec.dims.back() != 1) throw std::invalid_argument("estimation requires a scalar-output class (last dim 1)");
  if (xs.empty()) throw std::invalid_argument("need at least one input point");
  for (const auto& x : xs) {
    if (x.size() != spec.dims.front()) throw std::invalid_argument("input dimension does not match dims[0]");
    if (!within(vector_norm(x, spec.p), spec.input_radius)) {
      throw std::invalid_argument("input point lies outside the L_p ball of radius B");
    }
  }
}

}  // namespace detail

// Multi-restart projected ascent on (1/m) sum eps_i N(x_i) over
// ||W_j||_{q,p} <= M(j). Each restart starts from a random net on the budget
// boundary. Every iteration builds two candidates from the current gradient:
// a step of step * M(j) along each normalised layer gradient followed by
// radial retraction, and a Frank-Wolfe move toward the exact linear maximiser
// over the norm ball. The better one is kept if it improves the objective.
// Each candidate has its own step multiplier, halved on failure and doubled
// back toward 1 on success. The Frank-Wolfe move reaches the vertices of the
// q = 1 and q = inf balls that retraction only creeps toward. The zero network
// is always feasible, so the result is >= 0.
inline AscentResult maximize_objective(const ClassSpec& spec, std::span<const Vector> xs,
                                       std::span<const double> eps, const OptimizerConfig& opt) {
  opt.validate();
  AscentResult result;
  double initial_sum = 0.0;
  detail::Workspace ws;
  std::vector<Matrix> grads, grad_a, grad_b;
  for (std::size_t restart = 0; restart < opt.restarts; ++restart) {
    std::vector<Matrix> current = sample_feasible_net(spec, 1.0, derive_seed(opt.seed, restart)).weights();
    double value = detail::objective_and_gradient(current, spec.degree, xs, eps, grads, ws);
    initial_sum += value;
    double multiplier = 1.0;
    double fw_multiplier = 1.0;
    double base = opt.step_size;
    for (std::size_t t = 0; t < opt.steps; ++t, base *= opt.decay) {
      ++result.iterations;
      std::vector<Matrix> step_net = current;
      std::vector<Matrix> fw_net = current;
      bool moved = false;
      for (std::size_t j = 0; j < current.size(); ++j) {
        const double gnorm = frobenius_norm(grads[j]);
        const double budget = spec.budgets[j];
        if (gnorm == 0.0 || budget == 0.0) continue;
        moved = true;
        const double step = base * multiplier * budget / gnorm;
        auto w = step_net[j].entries();
        const auto g = grads[j].entries();
        for (std::size_t e = 0; e < w.size(); ++e) w[e] += step * g[e];
        retract(step_net[j], budget, spec.q, spec.p);

        const Matrix vertex = linear_maximizer(grads[j], budget, spec.q, spec.p);
        auto f = fw_net[j].entries();
        const auto v = vertex.entries();
        for (std::size_t e = 0; e < f.size(); ++e) f[e] += fw_multiplier * (v[e] - f[e]);
      }
      if (!moved) break;
      const double va = detail::objective_and_gradient(step_net, spec.degree, xs, eps, grad_a, ws);
      const double vb = detail::objective_and_gradient(fw_net, spec.degree, xs, eps, grad_b, ws);
      multiplier = va > value ? std::min(1.0, multiplier * 2.0) : multiplier * 0.5;
      fw_multiplier = vb > value ? std::min(1.0, fw_multiplier * 2.0) : fw_multiplier * 0.5;
      if (va > value && va >= vb) {
        current = std::move(step_net);
        grads.swap(grad_a);
        value = va;
        ++result.accepted_steps;
      } else if (vb > value) {
        current = std::move(fw_net);
        grads.swap(grad_b);
        value = vb;
        ++result.accepted_steps;
      } else if (multiplier < 1e-12 && fw_multiplier < 1e-12) {
        break;
      }
    }
    if (value > result.best) {
      result.best = value;
      result.winning_restart = restart + 1;
    }
  }
  result.mean_initial_objective = initial_sum / static_cast<double>(opt.restarts);
  return result;
}

// Sign vector of draw i under a master seed, as used by estimate().
inline std::vector<double> draw_signs(std::uint64_t master, std::size_t draw, std::size_t m) {
  return rademacher_signs(m, derive_seed(derive_seed(master, draw), 0xe95));
}

// Mean over `draws` sign vectors of the ascent supremum. Draw i uses signs and
// restarts seeded from derive_seed(opt.seed, i), so results do not depend on
// thread count.
inline EstimateResult estimate(const ClassSpec& spec, std::span<const Vector> xs, std::size_t draws,
                               const OptimizerConfig& opt) {
  detail::check_class_inputs(spec, xs);
  opt.validate();
  if (draws == 0) throw std::invalid_argument("draws must be >= 1");

  std::vector<AscentResult> per_draw(draws);
  parallel_for(
      draws,
      [&](std::size_t i) {
        const auto eps = draw_signs(opt.seed, i, xs.size());
        OptimizerConfig local = opt;
        local.seed = derive_seed(derive_seed(opt.seed, i), 0x5eed);
        per_draw[i] = maximize_objective(spec, xs, eps, local);
      },
      opt.threads);

  EstimateResult r;
  r.draws = draws;
  r.diagnostics.restarts = opt.restarts;
  for (const auto& a : per_draw) {
    r.per_draw_sup.push_back(a.best);
    r.diagnostics.iterations += a.iterations;
    r.diagnostics.accepted_steps += a.accepted_steps;
    r.diagnostics.mean_initial_objective += a.mean_initial_objective;
  }
  const double n = static_cast<double>(draws);
  for (double s : r.per_draw_sup) r.mean += s;
  r.mean /= n;
  r.diagnostics.mean_initial_objective /= n;
  r.diagnostics.mean_best_objective = r.mean;
  if (draws > 1) {
    double ss = 0.0;
    for (double s : r.per_draw_sup) ss += (s - r.mean) * (s - r.mean);
    r.standard_error = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  }
  return r;
}

// sup_{||w||_q <= M} (1/m) sum eps_i w^T x_i = (M/m) ||sum eps_i x_i||_p
inline double one_layer_closed_form(std::span<const Vector> xs, std::span<const double> eps, double budget,
                                    Exponent p) {
  if (xs.empty() || xs.size() != eps.size()) throw std::invalid_argument("need one sign per input");
  Vector s(xs.front().size(), 0.0);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (xs[i].size() != s.size()) throw std::invalid_argument("inputs have different dimensions");
    for (std::size_t j = 0; j < s.size(); ++j) s[j] += eps[i] * xs[i][j];
  }
  return budget / static_cast<double>(xs.size()) * vector_norm(s, p);
}

struct GridSearchResult {
  double value = -std::numeric_limits<double>::infinity();
  std::vector<double> argmax;  // flattened weights, layer by layer
  double spacing = 0.0;        // largest grid step over all weights
  // Largest ||grad||_1 seen on the grid times the spacing. Rounding any
  // feasible point toward zero coordinate-wise lands on a feasible grid
  // point at most one step away per weight, so this bounds how far the grid
  // maximum can sit below the true supremum (up to the sup of the gradient
  // being sampled on the grid).
  double cell_bound = 0.0;
};

inline std::size_t weight_count(const ClassSpec& spec) {
  std::size_t n = 0;
  for (std::size_t j = 1; j < spec.dims.size(); ++j) n += spec.dims[j] * spec.dims[j - 1];
  return n;
}

// Exhaustive search over a grid_points^W lattice on prod_j [-M(j), M(j)]^(n_j),
// keeping only points with ||W_j||_{q,p} <= M(j). W must be <= 3.
//
// The objective and every inner-layer gradient are linear in the output row,
// so each inner configuration is evaluated once per output coordinate (with a
// unit output row) and the output-layer grid is swept by linear combination.
inline GridSearchResult brute_force_sup(const ClassSpec& spec, std::span<const double> eps,
                                        std::span<const Vector> xs, std::size_t grid_points) {
  spec.validate();
  if (spec.dims.back() != 1) throw std::invalid_argument("grid search requires a scalar-output class");
  const std::size_t count = weight_count(spec);
  if (count > 3) throw std::invalid_argument("grid search supports at most 3 weights, class has " + std::to_string(count));
  if (grid_points < 101) throw std::invalid_argument("grid search needs at least 101 points per weight");

  std::vector<Matrix> weights;
  std::vector<std::pair<std::size_t, std::size_t>> slot;  // (layer, entry) per flat weight
  for (std::size_t j = 1; j < spec.dims.size(); ++j) {
    weights.emplace_back(spec.dims[j], spec.dims[j - 1]);
    for (std::size_t e = 0; e < weights.back().size(); ++e) slot.emplace_back(j - 1, e);
  }
  const std::size_t last = weights.size() - 1;
  const std::size_t outputs = weights[last].cols();
  const std::size_t inner = count - outputs;  // flat weights before the output row

  auto coordinate = [&](std::size_t w, std::size_t g) {
    const double m = spec.budgets[slot[w].first];
    return -m + 2.0 * m * static_cast<double>(g) / static_cast<double>(grid_points - 1);
  };
  auto feasible_layer = [&](const Matrix& w, double budget) {
    // At most three rows; same arithmetic as matrix_norm_qp without the allocation.
    std::array<double, 3> norms{};
    for (std::size_t i = 0; i < w.rows(); ++i) norms[i] = vector_norm(w.row(i), spec.q);
    return within(vector_norm(std::span<const double>(norms.data(), w.rows()), spec.p), budget);
  };
  std::vector<std::size_t> odometer(count, 0);
  // Advances digits [from, to); false once they wrap back to all zeros.
  auto advance = [&](std::size_t from, std::size_t to) {
    std::size_t w = from;
    while (w < to && ++odometer[w] == grid_points) odometer[w++] = 0;
    return w < to;
  };

  GridSearchResult best;
  for (const auto& s : slot) {
    best.spacing = std::max(best.spacing, 2.0 * spec.budgets[s.first] / static_cast<double>(grid_points - 1));
  }

  // Feasible output rows, shared by every inner configuration.
  std::vector<Vector> rows;
  do {
    for (std::size_t w = inner; w < count; ++w) weights[last].entries()[w - inner] = coordinate(w, odometer[w]);
    if (feasible_layer(weights[last], spec.budgets[last])) {
      rows.emplace_back(weights[last].entries().begin(), weights[last].entries().end());
    }
  } while (advance(inner, count));

  detail::Workspace ws;
  std::vector<Matrix> grads;
  std::vector<double> unit_value(outputs);
  std::vector<Vector> unit_grad(outputs);  // inner-layer gradient for each unit output row
  Vector combined(inner);
  double max_grad = 0.0;
  do {
    bool feasible = true;
    for (std::size_t w = 0; w < inner; ++w) {
      weights[slot[w].first].entries()[slot[w].second] = coordinate(w, odometer[w]);
    }
    for (std::size_t j = 0; j < last && feasible; ++j) feasible = feasible_layer(weights[j], spec.budgets[j]);
    if (!feasible) continue;

    double output_grad = 0.0;  // ||d objective / d W_last||_1, independent of W_last
    for (std::size_t b = 0; b < outputs; ++b) {
      auto row = weights[last].entries();
      std::ranges::fill(row, 0.0);
      row[b] = 1.0;
      unit_value[b] = detail::objective_and_gradient(weights, spec.degree, xs, eps, grads, ws);
      unit_grad[b].clear();
      for (std::size_t j = 0; j < last; ++j) {
        unit_grad[b].insert(unit_grad[b].end(), grads[j].entries().begin(), grads[j].entries().end());
      }
      output_grad += std::abs(grads[last].entries()[b]);
    }
    for (const auto& r : rows) {
      double value = 0.0;
      for (std::size_t b = 0; b < outputs; ++b) value += r[b] * unit_value[b];
      std::ranges::fill(combined, 0.0);
      for (std::size_t b = 0; b < outputs; ++b) {
        for (std::size_t e = 0; e < inner; ++e) combined[e] += r[b] * unit_grad[b][e];
      }
      double g1 = output_grad;
      for (double x : combined) g1 += std::abs(x);
      max_grad = std::max(max_grad, g1);
      if (value > best.value) {
        best.value = value;
        best.argmax.clear();
        for (std::size_t j = 0; j < last; ++j) {
          best.argmax.insert(best.argmax.end(), weights[j].entries().begin(), weights[j].entries().end());
        }
        best.argmax.insert(best.argmax.end(), r.begin(), r.end());
      }
    }
  } while (advance(0, inner));
  best.cell_bound = max_grad * best.spacing;
  return best;
}

}  // namespace polyrad
