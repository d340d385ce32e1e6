#pragma once

// Closed-form Rademacher-complexity bounds for polynomial networks, together
// with the two reference bounds they are compared against. Every function
// returns a BoundReport that echoes its inputs and records where the
// formula's side conditions hold.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "polyrad/linalg.hpp"
#include "polyrad/polynet.hpp"

namespace polyrad {

struct BoundReport {
  std::string name;
  double value = 0.0;
  std::map<std::string, double> inputs;
  double constant_c = 1.0;
  std::map<std::string, bool> flags;
  // Per-layer values for bounds indexed by r = 1..d; empty otherwise.
  std::vector<double> table;
  std::string note;
};

// Positive root of e^z - 1 = 2z. For 0 <= z <= this, e^z - 1 <= 2z.
inline constexpr double kInequalityADomain = 1.2564312086261697;

inline double logbar(double z) {
  if (!(z > 0.0)) throw std::invalid_argument("logbar needs z > 0");
  return std::max(1.0, std::log(z));
}

namespace detail {

inline void require_ratio(double budget_product, double gamma) {
  if (!(gamma > 0.0)) throw std::invalid_argument("Gamma must be positive");
  if (!within(gamma, budget_product)) {
    throw std::domain_error("Gamma = " + std::to_string(gamma) + " exceeds the norm product " +
                            std::to_string(budget_product));
  }
}

// log(M / Gamma), clamped at 0 for ratios that fall below 1 by rounding.
inline double log_ratio(double budget_product, double gamma) {
  return std::max(0.0, std::log(budget_product / gamma));
}

// x^(1/p) with the p = inf limit (1 for x > 0, 0 at x = 0).
inline double root(double x, Exponent p) {
  if (p.is_infinite()) return x > 0.0 ? 1.0 : 0.0;
  return std::pow(x, 1.0 / p.value());
}

inline double product(std::span<const double> values) {
  double prod = 1.0;
  for (double v : values) prod *= v;
  return prod;
}

}  // namespace detail

// (M/m) (sqrt(2 d ln 2) sqrt(sum ||x_i||_p^2) + (sum ||x_i||_p^p)^(1/p)),
// with the second term read as max_i ||x_i||_inf when p = inf.
inline BoundReport depth_dependent_bound(double budget_product, std::size_t depth,
                                         std::span<const Vector> xs, Exponent p) {
  if (xs.empty()) throw std::invalid_argument("depth_dependent_bound needs at least one input");
  if (depth == 0) throw std::invalid_argument("depth must be >= 1");
  Vector norms;
  norms.reserve(xs.size());
  double sum_sq = 0.0;
  for (const auto& x : xs) {
    norms.push_back(vector_norm(x, p));
    sum_sq += norms.back() * norms.back();
  }
  const double m = static_cast<double>(xs.size());
  const double sqrt_term = std::sqrt(2.0 * static_cast<double>(depth) * std::numbers::ln2) * std::sqrt(sum_sq);
  const double lp_term = vector_norm(norms, p);
  BoundReport r;
  r.name = "depth_dependent";
  r.value = budget_product / m * (sqrt_term + lp_term);
  r.inputs = {{"Mprod", budget_product}, {"d", static_cast<double>(depth)}, {"m", m},
              {"sqrt_term", sqrt_term}, {"lp_term", lp_term}};
  r.constant_c = 1.0;
  r.note = "explicit constant; no universal constant involved";
  return r;
}

inline BoundReport depth_dependent_bound(std::span<const double> budgets, std::span<const Vector> xs, Exponent p) {
  return depth_dependent_bound(detail::product(budgets), budgets.size(), xs, p);
}

// c (B M / gamma) min{ logbar(m)^(3/4) sqrt(logbar(M/Gamma)) / m^(1/4), sqrt(d/m) }
inline BoundReport depth_independent_bound(double radius, double budget_product, double gamma,
                                           double margin, double m, double depth, double c = 1.0) {
  detail::require_ratio(budget_product, gamma);
  if (!(m > 1.0)) throw std::invalid_argument("depth_independent_bound needs m > 1");
  if (!(margin > 0.0)) throw std::invalid_argument("loss margin gamma must be positive");
  const double log_branch = std::pow(logbar(m), 0.75) *
                            std::sqrt(logbar(std::max(1.0, budget_product / gamma))) / std::pow(m, 0.25);
  const double sqrt_branch = std::sqrt(depth / m);
  const double scale = c * radius * budget_product / margin;
  BoundReport r;
  r.name = "depth_independent";
  r.value = scale * std::min(log_branch, sqrt_branch);
  r.inputs = {{"B", radius}, {"Mprod", budget_product}, {"Gamma", gamma}, {"gamma_loss", margin},
              {"m", m}, {"d", depth}, {"log_branch", log_branch}, {"sqrt_branch", sqrt_branch}};
  r.constant_c = c;
  r.flags = {{"log_branch_selected", log_branch <= sqrt_branch}, {"gamma_at_least_one", gamma >= 1.0}};
  return r;
}

enum class PerturbationMode { paper, exact };

// Output perturbation caused by replacing one layer with its rank-1 part.
// paper (linearised): B P (2p log(M/Gamma) / r)^(1/p)
// exact: B P (exp((p/r) log(M/Gamma)) - 1)^(1/p) = B P ((M/Gamma)^(p/r) - 1)^(1/p)
// The linearised form relies on e^z - 1 <= 2z, which holds only for
// z = (p/r) log(M/Gamma) <= kInequalityADomain; the report flags it.
inline BoundReport perturbation_bound(double radius, double norm_product, Exponent p, double budget_product,
                                      double gamma, std::size_t r, PerturbationMode mode) {
  detail::require_ratio(budget_product, gamma);
  if (r == 0) throw std::invalid_argument("layer index r must be >= 1");
  const double lr = detail::log_ratio(budget_product, gamma);
  const double rd = static_cast<double>(r);
  const double scale = radius * norm_product;

  double paper = 0.0;
  double exact = 0.0;
  bool in_domain = false;
  if (p.is_infinite()) {
    // At p = inf the residual ratio is the second-largest over the largest
    // row norm, at most 1, and (rho^p - 1)^(1/p) tends to rho for rho > 1 but
    // to 0 at rho = 1. The valid limit is max(1, (M/Gamma)^(1/r)). The linearised
    // form tends to 1 (0 at M = Gamma) and is never inside the e^z - 1 <= 2z
    // domain.
    exact = scale * std::exp(lr / rd);
    paper = lr > 0.0 ? scale : 0.0;
  } else if (lr > 0.0) {
    const double pv = p.value();
    const double z = pv * lr / rd;
    paper = scale * std::pow(2.0 * z, 1.0 / pv);
    // log(e^z - 1) = z + log(1 - e^-z), stable for large z.
    exact = scale * std::exp((z + std::log(-std::expm1(-z))) / pv);
    in_domain = z <= kInequalityADomain;
  } else {
    in_domain = true;
  }

  BoundReport rep;
  rep.name = "perturbation";
  rep.value = mode == PerturbationMode::paper ? paper : exact;
  rep.inputs = {{"B", radius}, {"norm_product", norm_product}, {"p", p.value()}, {"Mprod", budget_product},
                {"Gamma", gamma}, {"r", rd}, {"paper_form", paper}, {"exact_form", exact}};
  rep.flags = {{"inequality_a_domain", in_domain}, {"exact_not_above_paper", exact <= paper}};
  rep.note = mode == PerturbationMode::paper ? "mode=paper" : "mode=exact";
  return rep;
}

// (M/Gamma)^(1/r): bounds min_{j<=r} ||W_j||_{q,p} / ||W_j||_{q,inf}.
inline double min_ratio_bound(double budget_product, double gamma, std::size_t r) {
  detail::require_ratio(budget_product, gamma);
  if (r == 0) throw std::invalid_argument("layer index r must be >= 1");
  return std::pow(std::max(1.0, budget_product / gamma), 1.0 / static_cast<double>(r));
}

// c L (R / sqrt(m) + log^(3/2)(m) rad_H)
inline BoundReport composition_bound(double lipschitz, double range, double m, double rad_h, double c = 1.0) {
  if (!(m >= 1.0)) throw std::invalid_argument("composition_bound needs m >= 1");
  BoundReport r;
  r.name = "composition";
  r.value = c * lipschitz * (range / std::sqrt(m) + std::pow(std::log(m), 1.5) * rad_h);
  r.inputs = {{"L", lipschitz}, {"R", range}, {"m", m}, {"rad_H", rad_h}};
  r.constant_c = c;
  return r;
}

// (c B M / gamma) min_r { log^(3/2)(m) rad_r / (B prod_{j<=r} M(j))
//                         + (log(M/Gamma)/r)^(1/p) + (1 + sqrt(log r)) / sqrt(m) },
// where rad_r is an estimate (or upper bound) of the complexity of the
// depth-r prefix class. Ties resolve to the smallest r.
inline BoundReport r_dependent_bound(double radius, std::span<const double> budgets, double gamma, double margin,
                                     double m, std::span<const double> rad_prefix, Exponent p, double c = 1.0) {
  if (budgets.empty()) throw std::invalid_argument("r_dependent_bound needs at least one layer budget");
  if (rad_prefix.size() != budgets.size()) {
    throw std::invalid_argument("expected one prefix complexity per layer (" + std::to_string(budgets.size()) +
                                "), got " + std::to_string(rad_prefix.size()));
  }
  if (!(m > 1.0)) throw std::invalid_argument("r_dependent_bound needs m > 1");
  if (!(margin > 0.0)) throw std::invalid_argument("loss margin gamma must be positive");
  const double mprod = detail::product(budgets);
  detail::require_ratio(mprod, gamma);
  const double lr = detail::log_ratio(mprod, gamma);
  const double log_m = std::pow(std::log(m), 1.5);

  BoundReport rep;
  rep.name = "r_dependent";
  rep.constant_c = c;
  double prefix_budget = 1.0;
  std::size_t best = 0;
  for (std::size_t r = 1; r <= budgets.size(); ++r) {
    prefix_budget *= budgets[r - 1];
    const double denom = radius * prefix_budget;
    double head = 0.0;
    if (rad_prefix[r - 1] != 0.0) {
      head = denom > 0.0 ? log_m * rad_prefix[r - 1] / denom : std::numeric_limits<double>::infinity();
    }
    const double rd = static_cast<double>(r);
    const double term = head + detail::root(lr / rd, p) + (1.0 + std::sqrt(std::log(rd))) / std::sqrt(m);
    rep.table.push_back(term);
    if (rep.table[r - 1] < rep.table[best]) best = r - 1;
  }
  const double scale = c * radius * mprod / margin;
  for (double& t : rep.table) t *= scale;
  rep.value = rep.table[best];
  rep.inputs = {{"B", radius}, {"Mprod", mprod}, {"Gamma", gamma}, {"gamma_loss", margin},
                {"m", m}, {"best_r", static_cast<double>(best + 1)}};
  rep.flags = {{"gamma_at_least_one", gamma >= 1.0}};
  rep.note = "prefix term divides by B prod_{j<=r} M(j) as displayed, without a max over r' <= r";
  return rep;
}

// B 2^d prod M_F(j) / sqrt(m), d = number of budgets.
inline double prior_bound_exponential(double radius, std::span<const double> frobenius_budgets, double m) {
  if (!(m > 0.0)) throw std::invalid_argument("m must be positive");
  return radius * std::ldexp(detail::product(frobenius_budgets), static_cast<int>(frobenius_budgets.size())) /
         std::sqrt(m);
}

// B prod ||W_j|| sqrt(d^3 / m); depth is real so that d = m^(1/3) can be probed.
inline double prior_bound_spectral(double radius, std::span<const double> spectral_norms, double depth, double m) {
  if (!(m > 0.0)) throw std::invalid_argument("m must be positive");
  return radius * detail::product(spectral_norms) * std::sqrt(depth * depth * depth / m);
}

// prod_j ||W_j||_{q,inf}
inline double gamma_of_net(const PolyNet& net, Exponent q) {
  double prod = 1.0;
  for (const auto& w : net.weights()) prod *= matrix_norm_qp(w, q, Exponent::infinity());
  return prod;
}

}  // namespace polyrad
