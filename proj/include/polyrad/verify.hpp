#pragma once

// Randomised verification suites over the inequalities the library computes:
// the rank-1 residual identity, the perturbation chain, the feasibility
// (Lipschitz) certificate, the min-ratio bound and gradient exactness.

#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "polyrad/alternate.hpp"
#include "polyrad/bounds.hpp"
#include "polyrad/linalg.hpp"
#include "polyrad/polynet.hpp"
#include "polyrad/rademacher.hpp"
#include "polyrad/random.hpp"

namespace polyrad {

struct VerifyConfig {
  std::vector<int> degrees{2, 3};
  std::vector<std::pair<Exponent, Exponent>> exponent_pairs{  // (q, p)
      {Exponent(2.0), Exponent(2.0)},
      {Exponent(1.0), Exponent::infinity()},
      {Exponent::infinity(), Exponent(1.0)},
      {Exponent(1.5), Exponent(3.0)},
      {Exponent(3.0), Exponent(1.5)}};
  std::size_t nets = 100;
  std::size_t samples = 10000;
  std::size_t matrices = 500;
  std::size_t max_depth = 5;
  std::size_t max_width = 6;
  double input_radius = 1.0;
  std::uint64_t seed = 0;
  // Negative control: the rank-1 suite keeps the smallest row instead of the
  // largest, which must make the suite fail.
  bool break_rank1 = false;
};

struct SuiteResult {
  std::string name;
  std::size_t checks = 0;
  std::size_t failures = 0;
  double seconds = 0.0;
  std::string first_failure;

  bool passed() const { return checks > 0 && failures == 0; }

  void record(bool ok, const std::string& what) {
    ++checks;
    if (!ok && failures++ == 0) first_failure = what;
  }
};

struct NetCase {
  ClassSpec spec;
  PolyNet net;
};

// A random canonical class (depth, widths, k and (q, p) drawn from cfg) and a
// network on its budget boundary. Output width is always 1.
inline NetCase random_net_case(const VerifyConfig& cfg, std::size_t index) {
  Rng rng(derive_seed(cfg.seed, index));
  std::uniform_int_distribution<std::size_t> depth_dist(1, cfg.max_depth);
  std::uniform_int_distribution<std::size_t> width_dist(1, cfg.max_width);
  ClassSpec spec;
  const std::size_t d = depth_dist(rng);
  for (std::size_t j = 0; j < d; ++j) spec.dims.push_back(width_dist(rng));
  spec.dims.push_back(1);
  spec.degree = cfg.degrees[index % cfg.degrees.size()];
  const auto& [q, p] = cfg.exponent_pairs[(index / cfg.degrees.size()) % cfg.exponent_pairs.size()];
  spec.q = q;
  spec.p = p;
  spec.input_radius = cfg.input_radius;
  spec.budgets = canonical_budgets(d, spec.degree, cfg.input_radius);
  PolyNet net = sample_feasible_net(spec, 1.0, derive_seed(cfg.seed ^ 0xA11CE, index));
  return {std::move(spec), std::move(net)};
}

inline Matrix random_matrix(Rng& rng, std::size_t max_rows, std::size_t max_cols) {
  std::uniform_int_distribution<std::size_t> rows(1, max_rows);
  std::uniform_int_distribution<std::size_t> cols(1, max_cols);
  Matrix w(rows(rng), cols(rng));
  for (double& v : w.entries()) v = gaussian(rng);
  return w;
}

// Five-point central differences of the scalar output with respect to every
// weight. The three-point rule is not enough here: the output is a
// polynomial of degree up to k^(d-1) in small first-layer weights, so its
// O(h^2) truncation error reaches 1e-5 relative at h = 1e-5.
inline std::vector<Matrix> finite_difference_gradient(const PolyNet& net, std::span<const double> x, double h) {
  std::vector<Matrix> grads;
  for (std::size_t j = 1; j <= net.depth(); ++j) {
    Matrix g(net.layer(j).rows(), net.layer(j).cols());
    for (std::size_t e = 0; e < g.size(); ++e) {
      auto at = [&](double t) {
        Matrix shifted = net.layer(j);
        shifted.entries()[e] += t;
        return forward(net.with_layer(j, shifted), x)[0];
      };
      g.entries()[e] = (8.0 * (at(h) - at(-h)) - (at(2.0 * h) - at(-2.0 * h))) / (12.0 * h);
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

// ||a - b||_2 / max(||a||_2, ||b||_2) over all layers; 0 when both vanish.
inline double relative_gradient_error(const std::vector<Matrix>& a, const std::vector<Matrix>& b) {
  double diff = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    for (std::size_t e = 0; e < a[j].size(); ++e) {
      const double u = a[j].entries()[e];
      const double v = b[j].entries()[e];
      diff += (u - v) * (u - v);
      na += u * u;
      nb += v * v;
    }
  }
  const double scale = std::sqrt(std::max(na, nb));
  return scale == 0.0 ? 0.0 : std::sqrt(diff) / scale;
}

namespace detail {

template <typename Fn>
SuiteResult timed_suite(std::string name, Fn&& fn) {
  SuiteResult s;
  s.name = std::move(name);
  const auto start = std::chrono::steady_clock::now();
  fn(s);
  s.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return s;
}

inline bool close_rel(double a, double b, double tol) {
  return std::abs(a - b) <= tol * std::max(std::abs(a), std::abs(b));
}

}  // namespace detail

inline SuiteResult verify_rank1_identity(const VerifyConfig& cfg) {
  return detail::timed_suite("rank1_identity", [&](SuiteResult& s) {
    const std::vector<Exponent> grid{Exponent(1.0), Exponent(1.5), Exponent(2.0), Exponent(3.0),
                                     Exponent::infinity()};
    Rng rng(derive_seed(cfg.seed, 0x4A4E));
    for (std::size_t i = 0; i < cfg.matrices; ++i) {
      const Matrix w = random_matrix(rng, cfg.max_width, cfg.max_width);
      for (Exponent q : grid) {
        for (Exponent p : grid) {
          Matrix approx = rank1_approx(w, q, p).approx;
          if (cfg.break_rank1) {
            Vector norms = row_norms(w, q);
            const auto smallest = static_cast<std::size_t>(std::ranges::min_element(norms) - norms.begin());
            approx = Matrix(w.rows(), w.cols());
            std::ranges::copy(w.row(smallest), approx.row(smallest).begin());
          }
          const double direct = matrix_norm_qp(w - approx, q, p);
          const double closed = rank1_residual_closed_form(w, q, p);
          const std::string where = "matrix " + std::to_string(i) + " q=" + q.to_string() + " p=" + p.to_string();
          s.record(detail::close_rel(direct, closed, 1e-9), where + ": residual identity");
          s.record(matrix_norm_qp(approx, q, p) <= matrix_norm_qp(w, q, p), where + ": norm does not shrink");
        }
      }
    }
  });
}

inline SuiteResult verify_perturbation_chain(const VerifyConfig& cfg) {
  return detail::timed_suite("perturbation_chain", [&](SuiteResult& s) {
    for (std::size_t i = 0; i < cfg.nets; ++i) {
      const auto c = random_net_case(cfg, i);
      const double mprod = c.spec.budget_product();
      const double gamma = gamma_of_net(c.net, c.spec.q);
      for (std::size_t r = 1; r <= c.net.depth(); ++r) {
        GapSampler sampler;
        sampler.samples = cfg.samples;
        sampler.seed = derive_seed(cfg.seed, 1000 * i + r);
        const auto chain = perturbation_chain(c.net, r, cfg.input_radius, c.spec.q, c.spec.p, mprod, gamma, sampler);
        s.record(chain.ordered(), "net " + std::to_string(i) + " r=" + std::to_string(r));
      }
    }
  });
}

inline SuiteResult verify_feasibility(const VerifyConfig& cfg) {
  return detail::timed_suite("feasibility_lipschitz", [&](SuiteResult& s) {
    for (std::size_t i = 0; i < cfg.nets; ++i) {
      const auto c = random_net_case(cfg, i);
      const std::string where = "net " + std::to_string(i);
      s.record(check_feasibility(c.net, cfg.input_radius, c.spec.q, c.spec.p).passes, where + ": feasibility report");
      const auto radii = propagate_norm_bound(c.net, cfg.input_radius, c.spec.q, c.spec.p);
      const auto xs = sample_inputs(InputSampler{cfg.samples, c.net.input_dim(), c.spec.p, cfg.input_radius, 0.5},
                                    derive_seed(cfg.seed ^ 0xFEA5, i));
      std::size_t slope_violations = 0;
      std::size_t radius_violations = 0;
      for (const auto& x : xs) {
        if (max_activation_slope(c.net, x) > 1.0 + 1e-12) ++slope_violations;
        const auto t = trace(c.net, x);
        for (std::size_t layer = 1; layer <= c.net.depth(); ++layer) {
          const Vector& out = layer < c.net.depth() ? t.layer_inputs[layer] : t.output;
          if (!within(vector_norm(out, c.spec.p), radii[layer])) ++radius_violations;
        }
      }
      s.record(slope_violations == 0, where + ": activation slope above 1");
      s.record(radius_violations == 0, where + ": propagated radius exceeded");
    }
  });
}

inline SuiteResult verify_min_ratio(const VerifyConfig& cfg) {
  return detail::timed_suite("min_ratio_lemma", [&](SuiteResult& s) {
    for (std::size_t i = 0; i < cfg.nets; ++i) {
      const auto c = random_net_case(cfg, i);
      double norm_product = 1.0;
      for (double n : layer_norms(c.net, c.spec.q, c.spec.p)) norm_product *= n;
      const double gamma = gamma_of_net(c.net, c.spec.q);
      for (std::size_t r = 1; r <= c.net.depth(); ++r) {
        const std::size_t j = select_replacement_layer(c.net, r, c.spec.q, c.spec.p);
        const double ratio = layer_norm_ratio(c.net.layer(j), c.spec.q, c.spec.p);
        s.record(ratio <= min_ratio_bound(norm_product, gamma, r) * (1.0 + 1e-12),
                 "net " + std::to_string(i) + " r=" + std::to_string(r));
      }
    }
  });
}

inline SuiteResult verify_gradients(const VerifyConfig& cfg) {
  return detail::timed_suite("gradient_check", [&](SuiteResult& s) {
    for (std::size_t i = 0; i < cfg.nets; ++i) {
      const auto c = random_net_case(cfg, i);
      const auto xs = sample_inputs(1, c.net.input_dim(), c.spec.p, cfg.input_radius,
                                    derive_seed(cfg.seed ^ 0x6AAD, i));
      const double err = relative_gradient_error(net_gradient(c.net, xs[0]),
                                                 finite_difference_gradient(c.net, xs[0], 1e-5));
      s.record(err <= 1e-6, "net " + std::to_string(i) + ": relative error " + std::to_string(err));
    }
  });
}

inline std::vector<SuiteResult> run_verification(const VerifyConfig& cfg) {
  return {verify_rank1_identity(cfg), verify_perturbation_chain(cfg), verify_feasibility(cfg), verify_min_ratio(cfg),
          verify_gradients(cfg)};
}

}  // namespace polyrad
