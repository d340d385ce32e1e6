#include <cmath>
#include <stdexcept>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "polyrad/alternate.hpp"

using polyrad::ClassSpec;
using polyrad::Exponent;
using polyrad::Matrix;
using polyrad::PolyNet;

namespace {

ClassSpec canonical(std::vector<std::size_t> dims, int k, Exponent q) {
  ClassSpec s;
  s.dims = std::move(dims);
  s.degree = k;
  s.q = q;
  s.p = q.dual();
  s.budgets = polyrad::canonical_budgets(s.depth(), k, 1.0);
  return s;
}

const Matrix kW{{3, 4}, {0, 5}, {1, 1}};

}  // namespace

TEST(Rank1, KeepsLargestRow) {
  const auto a = polyrad::rank1_approx(kW, Exponent(1.0), Exponent::infinity());
  EXPECT_EQ(a.kept_row, 0u);
  EXPECT_EQ(a.approx, (Matrix{{3, 4}, {0, 0}, {0, 0}}));
  EXPECT_EQ(a.residual, 5.0);  // rows (0,5), (1,1) in L1: 5 and 2
  // L2 ties rows 0 and 1 at 5; the lower index wins.
  EXPECT_EQ(polyrad::rank1_approx(kW, Exponent(2.0), Exponent(2.0)).kept_row, 0u);
  EXPECT_EQ(polyrad::rank1_approx(kW, Exponent::infinity(), Exponent(1.0)).kept_row, 1u);
}

TEST(Rank1, ResidualWorkedExample) {
  // q = p = 3: row L3 norms 91^(1/3), 5, 2^(1/3); keep row 1, residual is
  // (91 + 2)^(1/3).
  const auto a = polyrad::rank1_approx(kW, Exponent(3.0), Exponent(3.0));
  EXPECT_EQ(a.kept_row, 1u);
  EXPECT_NEAR(a.residual, 4.5306548960834928, 1e-14);
  EXPECT_NEAR(polyrad::rank1_residual_closed_form(kW, Exponent(3.0), Exponent(3.0)), 4.5306548960834928, 1e-14);
  EXPECT_EQ(polyrad::rank1_residual_closed_form(kW, Exponent(2.0), Exponent::infinity()), 5.0);
  EXPECT_EQ(polyrad::rank1_residual_closed_form(Matrix{{1, 2}}, Exponent(2.0), Exponent(2.0)), 0.0);
}

TEST(Rank1, IdentityAgainstOracle) {
  polyrad::Rng rng(4);
  const double grid[] = {1.0, 1.5, 2.0, 3.0, oracle::kInf};
  for (int t = 0; t < 40; ++t) {
    Matrix w(2 + t % 4, 1 + t % 3);
    for (double& v : w.entries()) v = polyrad::gaussian(rng);
    for (double q : grid) {
      for (double p : grid) {
        const auto a = polyrad::rank1_approx(w, Exponent(q), Exponent(p));
        const double direct = oracle::norm_qp(oracle::rows_of(w - a.approx), q, p);
        const double closed = polyrad::rank1_residual_closed_form(w, Exponent(q), Exponent(p));
        EXPECT_LE(std::abs(direct - closed), 1e-9 * std::max(direct, closed)) << q << "," << p;
        EXPECT_LE(oracle::norm_qp(oracle::rows_of(a.approx), q, p), oracle::norm_qp(oracle::rows_of(w), q, p));
      }
    }
  }
}

TEST(Alternative, ReplacesOnlyOneLayer) {
  const auto spec = canonical({3, 4, 4, 1}, 2, Exponent(2.0));
  const PolyNet net = polyrad::sample_feasible_net(spec, 1.0, 5);
  const PolyNet alt = polyrad::build_alternative_net(net, 2, spec.q);
  EXPECT_EQ(alt.layer(1), net.layer(1));
  EXPECT_EQ(alt.layer(3), net.layer(3));
  EXPECT_EQ(alt.layer(2), polyrad::rank1_approx(net.layer(2), spec.q, spec.p).approx);
  EXPECT_THROW(polyrad::build_alternative_net(net, 4, spec.q), std::out_of_range);
}

TEST(Alternative, ReplacementLayerMinimisesRatio) {
  const PolyNet net({Matrix{{1, 0}, {1, 0}}, Matrix{{1, 0}, {0, 0.1}}, Matrix{{1, 1}}}, 2);
  // ratios (q = p = 2): sqrt(2), sqrt(1.01), 1 (a single row)
  EXPECT_EQ(polyrad::select_replacement_layer(net, 1, Exponent(2.0), Exponent(2.0)), 1u);
  EXPECT_EQ(polyrad::select_replacement_layer(net, 2, Exponent(2.0), Exponent(2.0)), 2u);
  EXPECT_EQ(polyrad::select_replacement_layer(net, 3, Exponent(2.0), Exponent(2.0)), 3u);
  EXPECT_EQ(polyrad::layer_norm_ratio(Matrix(2, 2), Exponent(2.0), Exponent(2.0)), 1.0);
}

TEST(Decomposition, ComposesToAlternative) {
  for (int k : {2, 3}) {
    const auto spec = canonical({3, 4, 3, 2, 1}, k, Exponent(1.5));
    const PolyNet net = polyrad::sample_feasible_net(spec, 1.0, 12);
    const auto xs = polyrad::sample_inputs(50, 3, spec.p, 1.0, 8);
    for (std::size_t r = 1; r <= net.depth(); ++r) {
      const PolyNet alt = polyrad::build_alternative_net(net, r, spec.q);
      const auto dec = polyrad::decompose_at(net, r, spec.q);
      for (const auto& x : xs) {
        const double want = oracle::forward(oracle::layers_of(alt), k, x)[0];
        EXPECT_NEAR(dec(x)[0], want, 1e-12 * std::max(1e-3, std::abs(want))) << "r=" << r;
      }
    }
  }
}

TEST(Decomposition, HeadIsUnitRowProjection) {
  const PolyNet net({Matrix{{3, 4}, {0, 1}}, Matrix{{1, 2}}}, 2);
  const auto dec = polyrad::decompose_at(net, 1, Exponent(2.0));
  EXPECT_EQ(dec.kept_row(), 0u);
  EXPECT_EQ(dec.kept_row_norm(), 5.0);
  EXPECT_NEAR(dec.head(std::vector<double>{1, 1}), 7.0 / 5.0, 1e-15);
  // tail(s) = W_2 (5 s e_0)^2 = 25 s^2.
  EXPECT_NEAR(dec.tail(0.2)[0], 1.0, 1e-15);
}

TEST(Decomposition, ZeroLayerIsDegenerate) {
  const PolyNet net({Matrix(2, 2), Matrix{{1, 1}}}, 2);
  const auto dec = polyrad::decompose_at(net, 1, Exponent(2.0));
  EXPECT_TRUE(dec.degenerate());
  EXPECT_EQ(dec(std::vector<double>{0.3, 0.1})[0], 0.0);
}

TEST(Gap, LinearInDistanceToRankOne) {
  const auto spec = canonical({3, 4, 3}, 2, Exponent(2.0));
  spec.validate();
  const PolyNet base = polyrad::sample_feasible_net(spec, 0.5, 21);
  const Matrix w = base.layer(2);
  const Matrix tilde = polyrad::rank1_approx(w, spec.q, spec.p).approx;
  polyrad::GapSampler sampler;
  sampler.samples = 2000;
  sampler.seed = 3;
  double first = 0.0;
  for (double t : {1.0, 0.5, 0.25, 0.125}) {
    const PolyNet net = base.with_layer(2, tilde + (w - tilde) * t);
    const PolyNet alt = polyrad::build_alternative_net(net, 2, spec.q);
    ASSERT_EQ(alt.layer(2), tilde);
    const double gap = polyrad::empirical_sup_gap(net, alt, 1.0, spec.q, spec.p, sampler).gap;
    if (t == 1.0) first = gap;
    EXPECT_NEAR(gap, t * first, 1e-12 * first) << t;
  }
  EXPECT_GT(first, 0.0);
}

TEST(Gap, RejectsInfeasibleNets) {
  const PolyNet net({Matrix{{2, 0}}, Matrix{{1}}}, 2);
  polyrad::GapSampler sampler;
  sampler.samples = 10;
  EXPECT_THROW(polyrad::empirical_sup_gap(net, net, 1.0, Exponent(2.0), Exponent(2.0), sampler), std::domain_error);
}

TEST(Chain, OrderedOnRandomNets) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    for (Exponent q : {Exponent(2.0), Exponent(1.0), Exponent(3.0)}) {
      const auto spec = canonical({3, 4, 4, 1}, 2 + static_cast<int>(seed % 2), q);
      const PolyNet net = polyrad::sample_feasible_net(spec, 1.0, seed);
      polyrad::GapSampler sampler;
      sampler.samples = 1000;
      sampler.seed = seed;
      for (std::size_t r = 1; r <= 3; ++r) {
        const auto c = polyrad::perturbation_chain(net, r, 1.0, spec.q, spec.p, spec.budget_product(),
                                                   polyrad::gamma_of_net(net, spec.q), sampler);
        EXPECT_TRUE(c.ordered()) << "seed " << seed << " q=" << q.to_string() << " r=" << r;
        EXPECT_LE(c.replaced_layer, r);
      }
    }
  }
}
