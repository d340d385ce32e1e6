#include <cmath>
#include <numbers>
#include <stdexcept>

#include <gtest/gtest.h>

#include "polyrad/bounds.hpp"

using polyrad::Exponent;
using polyrad::PerturbationMode;
using polyrad::Vector;

TEST(Logbar, ClampsAtOne) {
  EXPECT_EQ(polyrad::logbar(1.0), 1.0);
  EXPECT_EQ(polyrad::logbar(std::numbers::e), 1.0);
  EXPECT_NEAR(polyrad::logbar(100.0), std::log(100.0), 1e-15);
  EXPECT_THROW(polyrad::logbar(0.0), std::invalid_argument);
}

TEST(DepthDependent, WorkedExamples) {
  const std::vector<Vector> xs{{1, 0}, {0, 1}};
  const auto r = polyrad::depth_dependent_bound(1.0, 1, xs, Exponent(2.0));
  EXPECT_NEAR(r.value, 1.5396613923442453, 1e-15);
  EXPECT_EQ(r.name, "depth_dependent");

  const std::vector<Vector> ys{{0.6, 0.8}, {0.3, 0.0}};
  const std::vector<double> budgets{0.5, 2.0};
  EXPECT_NEAR(polyrad::depth_dependent_bound(budgets, ys, Exponent(2.0)).value, 1.3912278580348479, 1e-15);
}

TEST(DepthDependent, InfinityUsesMaxNorm) {
  const std::vector<Vector> xs{{0.5, -0.25}, {0.1, 0.2}};
  const auto r = polyrad::depth_dependent_bound(2.0, 3, xs, Exponent::infinity());
  const double sq = std::sqrt(6.0 * std::log(2.0)) * std::sqrt(0.25 + 0.04);
  EXPECT_NEAR(r.value, 2.0 / 2.0 * (sq + 0.5), 1e-15);
}

TEST(DepthDependent, GrowsLikeSqrtDepth) {
  const std::vector<Vector> xs{{1.0}};
  const double a = polyrad::depth_dependent_bound(1.0, 4, xs, Exponent(2.0)).inputs.at("sqrt_term");
  const double b = polyrad::depth_dependent_bound(1.0, 16, xs, Exponent(2.0)).inputs.at("sqrt_term");
  EXPECT_NEAR(b / a, 2.0, 1e-15);
}

TEST(DepthIndependent, WorkedExample) {
  const auto r = polyrad::depth_independent_bound(1.0, 4.0, 2.0, 1.0, 1000.0, 5.0);
  EXPECT_NEAR(r.inputs.at("log_branch"), 0.7577094567129261, 1e-15);
  EXPECT_NEAR(r.inputs.at("sqrt_branch"), 0.070710678118654752, 1e-16);
  EXPECT_NEAR(r.value, 0.28284271247461901, 1e-15);
  EXPECT_FALSE(r.flags.at("log_branch_selected"));
  EXPECT_TRUE(r.flags.at("gamma_at_least_one"));
}

TEST(DepthIndependent, GammaChecks) {
  EXPECT_THROW(polyrad::depth_independent_bound(1.0, 1.0, 2.0, 1.0, 100.0, 2.0), std::domain_error);
  EXPECT_THROW(polyrad::depth_independent_bound(1.0, 1.0, 0.0, 1.0, 100.0, 2.0), std::invalid_argument);
  const auto r = polyrad::depth_independent_bound(1.0, 1.0, 0.5, 1.0, 100.0, 2.0);
  EXPECT_FALSE(r.flags.at("gamma_at_least_one"));
}

TEST(Perturbation, InsideInequalityDomain) {
  // p = 2, r = 1, log(M/Gamma) = 1/2, so z = 1.
  const double mprod = std::exp(0.5);
  const auto paper = polyrad::perturbation_bound(1.0, 1.0, Exponent(2.0), mprod, 1.0, 1, PerturbationMode::paper);
  const auto exact = polyrad::perturbation_bound(1.0, 1.0, Exponent(2.0), mprod, 1.0, 1, PerturbationMode::exact);
  EXPECT_NEAR(paper.value, 1.414213562373095, 1e-14);
  EXPECT_NEAR(exact.value, 1.3108324944320862, 1e-14);
  EXPECT_TRUE(exact.flags.at("inequality_a_domain"));
  EXPECT_TRUE(exact.flags.at("exact_not_above_paper"));
}

TEST(Perturbation, OutsideInequalityDomain) {
  const double mprod = std::exp(2.0);
  const auto exact = polyrad::perturbation_bound(1.0, 1.0, Exponent(2.0), mprod, 1.0, 1, PerturbationMode::exact);
  EXPECT_NEAR(exact.value, 7.3210757428908109, 1e-13);
  EXPECT_NEAR(exact.inputs.at("paper_form"), 2.8284271247461901, 1e-14);
  EXPECT_FALSE(exact.flags.at("inequality_a_domain"));
  EXPECT_FALSE(exact.flags.at("exact_not_above_paper"));
}

TEST(Perturbation, DomainEdge) {
  EXPECT_NEAR(std::exp(polyrad::kInequalityADomain) - 1.0, 2.0 * polyrad::kInequalityADomain, 1e-14);
  for (double z : {0.01, 0.5, 1.0, 1.25}) EXPECT_LE(std::expm1(z), 2.0 * z);
  EXPECT_GT(std::expm1(1.26), 2.0 * 1.26);
}

TEST(Perturbation, DecreasesInR) {
  double prev = std::numeric_limits<double>::infinity();
  for (std::size_t r = 1; r <= 6; ++r) {
    const double v =
        polyrad::perturbation_bound(1.0, 3.0, Exponent(1.5), 8.0, 2.0, r, PerturbationMode::exact).value;
    EXPECT_LT(v, prev);
    prev = v;
  }
}

TEST(Perturbation, InfinityLimit) {
  const auto at_equal = polyrad::perturbation_bound(2.0, 3.0, Exponent::infinity(), 4.0, 4.0, 2,
                                                    PerturbationMode::exact);
  EXPECT_EQ(at_equal.value, 6.0);
  EXPECT_FALSE(at_equal.flags.at("inequality_a_domain"));
  const auto above = polyrad::perturbation_bound(1.0, 1.0, Exponent::infinity(), 9.0, 1.0, 2,
                                                 PerturbationMode::exact);
  EXPECT_NEAR(above.value, 3.0, 1e-15);
}

TEST(MinRatio, Values) {
  EXPECT_NEAR(polyrad::min_ratio_bound(8.0, 1.0, 3), 2.0, 1e-15);
  EXPECT_EQ(polyrad::min_ratio_bound(4.0, 4.0, 2), 1.0);
  EXPECT_THROW(polyrad::min_ratio_bound(1.0, 2.0, 1), std::domain_error);
  EXPECT_THROW(polyrad::min_ratio_bound(2.0, 1.0, 0), std::invalid_argument);
}

TEST(Composition, Formula) {
  const auto r = polyrad::composition_bound(2.0, 3.0, 100.0, 0.01, 1.5);
  EXPECT_NEAR(r.value, 1.5 * 2.0 * (0.3 + std::pow(std::log(100.0), 1.5) * 0.01), 1e-15);
}

TEST(RDependent, TableAndTies) {
  const std::vector<double> budgets{0.5, 2.0};
  const std::vector<double> rad{0.1, 0.2};
  const auto r = polyrad::r_dependent_bound(1.0, budgets, 1.0, 1.0, 100.0, rad, Exponent(2.0));
  ASSERT_EQ(r.table.size(), 2u);
  EXPECT_NEAR(r.table[0], 2.0765077528822078, 1e-14);
  EXPECT_NEAR(r.table[1], 2.1597632139979776, 1e-14);
  EXPECT_EQ(r.inputs.at("best_r"), 1.0);
  EXPECT_EQ(r.value, r.table[0]);

  const std::vector<double> flat{1.0, 1.0, 1.0};
  const std::vector<double> zero{0.0, 0.0, 0.0};
  const auto tie = polyrad::r_dependent_bound(1.0, flat, 1.0, 1.0, 4.0, zero, Exponent(2.0));
  EXPECT_EQ(tie.inputs.at("best_r"), 1.0);

  EXPECT_THROW(polyrad::r_dependent_bound(1.0, budgets, 1.0, 1.0, 100.0, flat, Exponent(2.0)),
               std::invalid_argument);
}

TEST(Priors, Formulas) {
  const std::vector<double> norms{0.5, 2.0, 2.0};
  EXPECT_EQ(polyrad::prior_bound_exponential(1.0, norms, 4.0), 8.0);
  EXPECT_NEAR(polyrad::prior_bound_spectral(1.0, norms, 3.0, 27.0), 2.0, 1e-15);
  // d = m^(1/3) flattens the spectral bound to B prod ||W||.
  for (double m : {8.0, 1000.0, 1e6}) {
    EXPECT_NEAR(polyrad::prior_bound_spectral(1.0, norms, std::cbrt(m), m), 2.0, 1e-12);
  }
}

TEST(GammaOfNet, ProductOfMaxRows) {
  const polyrad::PolyNet net({polyrad::Matrix{{3, 4}, {0, 5}, {1, 1}}, polyrad::Matrix{{1, -2, 2}}}, 2);
  EXPECT_EQ(polyrad::gamma_of_net(net, Exponent(2.0)), 15.0);
  EXPECT_EQ(polyrad::gamma_of_net(net, Exponent(1.0)), 35.0);
}
