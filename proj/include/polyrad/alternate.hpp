#pragma once

// Rank-1 "alternative network" construction: replace one layer by the matrix
// that keeps only its largest-L_q row, measure how far the output moves, and
// split the result into a scalar-output head and a scalar-input tail.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "polyrad/bounds.hpp"
#include "polyrad/linalg.hpp"
#include "polyrad/parallel.hpp"
#include "polyrad/polynet.hpp"
#include "polyrad/random.hpp"

namespace polyrad {

struct Rank1Approx {
  Matrix approx;          // all zero except the kept row
  std::size_t kept_row;   // argmax_i ||w_i||_q, lowest index on ties
  double residual;        // ||W - approx||_{q,p}
};

inline Rank1Approx rank1_approx(const Matrix& w, Exponent q, Exponent p) {
  const std::size_t kept = max_row_index_lq(w, q);
  Matrix approx(w.rows(), w.cols());
  std::ranges::copy(w.row(kept), approx.row(kept).begin());
  const double residual = matrix_norm_qp(w - approx, q, p);
  return {std::move(approx), kept, residual};
}

// (||W||_{q,p}^p - ||W||_{q,inf}^p)^(1/p); for p = inf the second-largest row
// norm. The difference is expanded termwise (drop the largest summand) since
// subtracting two nearly equal p-th powers loses every digit when one row
// dominates.
inline double rank1_residual_closed_form(const Matrix& w, Exponent q, Exponent p) {
  Vector norms = row_norms(w, q);
  if (norms.size() < 2) return 0.0;
  const auto top = std::ranges::max_element(norms);
  if (p.is_infinite()) {
    std::ranges::partial_sort(norms, norms.begin() + 2, std::greater<>{});
    return norms[1];
  }
  const double scale = *top;
  if (scale == 0.0) return 0.0;
  const double pv = p.value();
  double rest = 0.0;
  for (auto it = norms.begin(); it != norms.end(); ++it) {
    if (it != top) rest += std::pow(*it / scale, pv);
  }
  return scale * std::pow(rest, 1.0 / pv);
}

// Same network with layer r replaced by its rank-1 part a b^T (a one-hot).
inline PolyNet build_alternative_net(const PolyNet& net, std::size_t r, Exponent q) {
  net.check_layer(r);
  // p does not affect which row is kept.
  return net.with_layer(r, rank1_approx(net.layer(r), q, Exponent(2.0)).approx);
}

// ||W_j||_{q,p} / ||W_j||_{q,inf}; 1 for a zero layer.
inline double layer_norm_ratio(const Matrix& w, Exponent q, Exponent p) {
  const double inf_norm = matrix_norm_qp(w, q, Exponent::infinity());
  return inf_norm == 0.0 ? 1.0 : matrix_norm_qp(w, q, p) / inf_norm;
}

// The layer j <= r with the smallest ||W_j||_{q,p} / ||W_j||_{q,inf}. Replacing
// this layer is what makes the (M/Gamma)^(1/r) ratio bound applicable at depth r.
inline std::size_t select_replacement_layer(const PolyNet& net, std::size_t r, Exponent q, Exponent p) {
  net.check_layer(r);
  std::size_t best = 1;
  double best_ratio = layer_norm_ratio(net.layer(1), q, p);
  for (std::size_t j = 2; j <= r; ++j) {
    const double ratio = layer_norm_ratio(net.layer(j), q, p);
    if (ratio < best_ratio) {
      best_ratio = ratio;
      best = j;
    }
  }
  return best;
}

enum class ResidualScale { qp, q_inf };

// B prod_j ||W_j||_{q,p} ||W_r - W~_r||_{q,p} / ||W_r||_{q,s}, s = p or inf.
// The q,inf denominator gives the larger (published) bound.
inline double alternative_net_gap_bound(const PolyNet& net, std::size_t r, double radius, Exponent q, Exponent p,
                                        ResidualScale scale = ResidualScale::q_inf) {
  net.check_layer(r);
  const Matrix& w = net.layer(r);
  const double denom = scale == ResidualScale::qp ? matrix_norm_qp(w, q, p)
                                                  : matrix_norm_qp(w, q, Exponent::infinity());
  if (denom == 0.0) return 0.0;
  double prod = 1.0;
  for (double n : layer_norms(net, q, p)) prod *= n;
  return radius * prod * rank1_approx(w, q, p).residual / denom;
}

// head(x) = (b / ||b||_q)^T h_{r-1}(x) and
// tail(s) = W_d s(... s_r(||b||_q a s) ...), so tail(head(x)) equals the
// alternative network at layer r. For r = d the tail is the linear map
// s -> ||b||_q a s.
class Decomposition {
 public:
  Decomposition(const PolyNet& net, std::size_t r, Exponent q) : degree_(net.degree()), layer_(r) {
    net.check_layer(r);
    const Matrix& w = net.layer(r);
    kept_row_ = max_row_index_lq(w, q);
    rows_ = w.rows();
    scale_ = vector_norm(w.row(kept_row_), q);
    degenerate_ = scale_ == 0.0;
    unit_row_.assign(w.row(kept_row_).begin(), w.row(kept_row_).end());
    if (!degenerate_) {
      for (double& v : unit_row_) v /= scale_;
    }
    head_layers_.assign(net.weights().begin(), net.weights().begin() + static_cast<std::ptrdiff_t>(r - 1));
    tail_layers_.assign(net.weights().begin() + static_cast<std::ptrdiff_t>(r), net.weights().end());
    input_dim_ = net.input_dim();
  }

  // True when the kept row is zero (the whole layer is zero): head is then
  // identically 0 and the tail is evaluated at 0.
  bool degenerate() const { return degenerate_; }
  std::size_t kept_row() const { return kept_row_; }
  double kept_row_norm() const { return scale_; }
  std::size_t layer() const { return layer_; }

  double head(std::span<const double> x) const {
    if (x.size() != input_dim_) throw std::invalid_argument("head: input dimension mismatch");
    if (degenerate_) return 0.0;
    Vector h(x.begin(), x.end());
    for (const auto& w : head_layers_) {
      h = matvec(w, h);
      detail::activate_in_place(h, degree_);
    }
    return dot(unit_row_, h);
  }

  Vector tail(double s) const {
    Vector z(rows_, 0.0);
    z[kept_row_] = scale_ * s;
    if (tail_layers_.empty()) return z;
    detail::activate_in_place(z, degree_);
    return detail::apply_layers(tail_layers_, degree_, 0, tail_layers_.size(), std::move(z));
  }

  Vector operator()(std::span<const double> x) const { return tail(head(x)); }

 private:
  int degree_;
  std::size_t layer_;
  std::size_t kept_row_ = 0;
  std::size_t rows_ = 0;
  std::size_t input_dim_ = 0;
  double scale_ = 0.0;
  bool degenerate_ = false;
  Vector unit_row_;
  std::vector<Matrix> head_layers_;
  std::vector<Matrix> tail_layers_;
};

inline Decomposition decompose_at(const PolyNet& net, std::size_t r, Exponent q) { return Decomposition(net, r, q); }

struct GapSampler {
  std::size_t samples = 10000;
  std::uint64_t seed = 0;
  double sphere_bias = 0.5;
  std::size_t batches = 16;
  std::size_t threads = 0;
};

struct SupGap {
  double gap = 0.0;
  Vector argmax;
};

// max over sampled x in the L_p ball of ||net(x) - alt(x)||_p. Both networks
// must pass check_feasibility, which is what the perturbation bound assumes.
inline SupGap empirical_sup_gap(const PolyNet& net, const PolyNet& alt, double radius, Exponent q, Exponent p,
                                const GapSampler& cfg) {
  if (net.input_dim() != alt.input_dim() || net.output_dim() != alt.output_dim() || net.depth() != alt.depth()) {
    throw std::invalid_argument("empirical_sup_gap: networks have different shapes");
  }
  if (!check_feasibility(net, radius, q, p).passes || !check_feasibility(alt, radius, q, p).passes) {
    throw std::domain_error("empirical_sup_gap: both networks must satisfy the feasibility chain");
  }
  if (cfg.samples == 0 || cfg.batches == 0) throw std::invalid_argument("empirical_sup_gap: empty sampler");

  const std::size_t batches = std::min(cfg.batches, cfg.samples);
  std::vector<SupGap> partial(batches);
  parallel_for(
      batches,
      [&](std::size_t b) {
        const std::size_t count = cfg.samples / batches + (b < cfg.samples % batches ? 1 : 0);
        const auto xs = sample_inputs(InputSampler{count, net.input_dim(), p, radius, cfg.sphere_bias},
                                      derive_seed(cfg.seed, b));
        SupGap best{-1.0, {}};
        for (const auto& x : xs) {
          Vector diff = forward(net, x);
          const Vector other = forward(alt, x);
          for (std::size_t i = 0; i < diff.size(); ++i) diff[i] -= other[i];
          const double gap = vector_norm(diff, p);
          if (gap > best.gap) best = {gap, x};
        }
        partial[b] = std::move(best);
      },
      cfg.threads);

  SupGap result = partial.front();
  for (std::size_t b = 1; b < batches; ++b) {
    if (partial[b].gap > result.gap) result = partial[b];
  }
  return result;
}

// Every quantity in the chain
//   sampled gap <= gap bound (layer j*) <= B P ((M/Gamma)^(p/r) - 1)^(1/p)
//               <= B P (2p log(M/Gamma) / r)^(1/p)     [inside the e^z - 1 <= 2z domain]
// for one network and depth index r, where j* <= r is the replaced layer.
struct PerturbationChain {
  std::size_t r = 0;
  std::size_t replaced_layer = 0;
  double sampled_gap = 0.0;
  double gap_bound_qp = 0.0;
  double gap_bound = 0.0;
  double exact_form = 0.0;
  double paper_form = 0.0;
  bool inequality_a_domain = false;

  // Relative tolerance absorbs rounding in the products and powers.
  bool ordered(double tol = 1e-9) const {
    auto le = [tol](double a, double b) { return a <= b * (1.0 + tol) + 1e-300; };
    return le(sampled_gap, gap_bound_qp) && le(gap_bound_qp, gap_bound) && le(gap_bound, exact_form) &&
           (!inequality_a_domain || le(exact_form, paper_form));
  }
};

inline PerturbationChain perturbation_chain(const PolyNet& net, std::size_t r, double radius, Exponent q, Exponent p,
                                            double budget_product, double gamma, const GapSampler& sampler) {
  PerturbationChain c;
  c.r = r;
  c.replaced_layer = select_replacement_layer(net, r, q, p);
  const PolyNet alt = build_alternative_net(net, c.replaced_layer, q);
  c.sampled_gap = empirical_sup_gap(net, alt, radius, q, p, sampler).gap;
  c.gap_bound_qp = alternative_net_gap_bound(net, c.replaced_layer, radius, q, p, ResidualScale::qp);
  c.gap_bound = alternative_net_gap_bound(net, c.replaced_layer, radius, q, p, ResidualScale::q_inf);
  double norm_product = 1.0;
  for (double n : layer_norms(net, q, p)) norm_product *= n;
  const auto exact = perturbation_bound(radius, norm_product, p, budget_product, gamma, r, PerturbationMode::exact);
  c.exact_form = exact.value;
  c.paper_form = exact.inputs.at("paper_form");
  c.inequality_a_domain = exact.flags.at("inequality_a_domain");
  return c;
}

}  // namespace polyrad
