#include <gtest/gtest.h>

#include <random>

#include "coinflip/builder.hpp"
#include "coinflip/constants.hpp"
#include "oracles.hpp"

using namespace coinflip;

namespace {

Rational q(long n, long d) { return Rational(Integer(n), Integer(d)); }

const WcfTree A = WcfTree::alice_wins();
const WcfTree B = WcfTree::bob_wins();

BaseParams perfect() { return BaseParams{Probability::zero(), 1}; }

} // namespace

TEST(Comb, PutsHigherBranchOnAliceWin) {
    WcfTree t = comb(B, A);
    EXPECT_EQ(to_string(t), "F(A,B)");
    EXPECT_EQ(honest_win_probability(t), Probability::half());
    WcfTree u = comb(t, A);
    EXPECT_EQ(to_string(u), "F(A,F(A,B))");
    EXPECT_EQ(honest_win_probability(u), Probability(3, 4));
}

TEST(Comb, RejectsReversedArguments) {
    EXPECT_THROW(comb(A, B), ParameterOrderError);
    EXPECT_THROW(comb(comb(B, A), B), ParameterOrderError);
    EXPECT_NO_THROW(comb(A, A));
}

TEST(BiasBound, ClosedForm) {
    Probability eps(1, 10);
    EXPECT_EQ(bias_bound(0, eps), Probability::zero());
    EXPECT_EQ(bias_bound(1, eps), eps);
    EXPECT_EQ(bias_bound(2, eps), Probability(3, 20));
    EXPECT_EQ(bias_bound(4, eps), Probability(Rational(q(15, 8) * q(1, 10))));
    EXPECT_LT(bias_bound(60, Probability(49, 100)).value(), q(98, 100));
}

TEST(Builder, FourStepsTowardTwoMinusSqrt2) {
    auto [w, trace] = build_unbalanced(two_minus_sqrt2_proxy(40), 4, perfect());
    EXPECT_EQ(w.x, Probability(9, 16));
    EXPECT_EQ(to_string(w.tree), "F(F(F(A,F(A,B)),F(A,B)),F(A,B))");
    ASSERT_EQ(trace.steps.size(), 4u);
    EXPECT_TRUE(trace.steps[0].went_high);
    EXPECT_FALSE(trace.steps[1].went_high);
    EXPECT_FALSE(trace.steps[2].went_high);
    EXPECT_TRUE(trace.steps[3].went_high);
    EXPECT_EQ(trace.steps[2].u, Probability(5, 8));
    EXPECT_EQ(trace.steps[3].x1, Probability(9, 16));
    EXPECT_EQ(trace.steps[3].x2, Probability(5, 8));
    EXPECT_EQ(w.total_rounds, 4u);
}

TEST(Builder, ExtremeTargets) {
    auto zero = build_unbalanced(Rational(0), 5, perfect()).first;
    EXPECT_EQ(zero.x, Probability::zero());
    EXPECT_EQ(to_string(zero.tree), "B");
    EXPECT_EQ(zero.total_rounds, 0u);
    auto one = build_unbalanced(Rational(1), 5, perfect()).first;
    EXPECT_EQ(one.x, Probability(31, 32));
    EXPECT_EQ(depth(one.tree), 5u);
    auto none = build_unbalanced(q(1, 3), 0, perfect()).first;
    EXPECT_EQ(to_string(none.tree), "B");
    EXPECT_EQ(none.bias_bound, Probability::zero());
}

TEST(Builder, TieKeepsLowerHalf) {
    auto [w, trace] = build_unbalanced(q(1, 2), 1, perfect());
    EXPECT_FALSE(trace.steps[0].went_high);
    EXPECT_EQ(w.x, Probability::zero());
    auto w3 = build_unbalanced(q(3, 8), 3, perfect()).first;
    EXPECT_EQ(w3.x, Probability(1, 4));
}

TEST(Builder, RejectsInvalidInputs) {
    EXPECT_THROW(build_unbalanced(q(-1, 8), 3, perfect()), DomainError);
    EXPECT_THROW(build_unbalanced(q(9, 8), 3, perfect()), DomainError);
    EXPECT_THROW(build_unbalanced(q(1, 3), 3, BaseParams{Probability::half(), 1}), DomainError);
    EXPECT_THROW(build_unbalanced(q(1, 3), 3, BaseParams{Probability::zero(), 0}), DomainError);
}

TEST(Builder, RoundsScaleWithBaseCost) {
    auto w = build_unbalanced(two_minus_sqrt2_proxy(40), 4, BaseParams{Probability(1, 8), 7}).first;
    EXPECT_EQ(w.total_rounds, 28u);
}

TEST(FromTree, MatchesBuilderOnBuiltTrees) {
    Probability eps(1, 16);
    auto w = build_unbalanced(two_minus_sqrt2_proxy(40), 6, BaseParams{eps, 1}).first;
    UnbalancedWcf f = from_tree(w.tree, BaseParams{eps, 1});
    EXPECT_EQ(f.x, w.x);
    EXPECT_LE(f.bias_bound, w.bias_bound);
}

TEST(FromTree, SingleFlip) {
    UnbalancedWcf f = from_tree(parse_tree("F(A,B)"), BaseParams{Probability(1, 5), 3});
    EXPECT_EQ(f.x, Probability::half());
    EXPECT_EQ(f.bias_bound, Probability(1, 5));
    EXPECT_EQ(f.total_rounds, 3u);
    EXPECT_THROW(from_tree(parse_tree("F(B,A)"), BaseParams{Probability(1, 5), 1}),
                 ParameterOrderError);
}

class BuilderProperties : public ::testing::TestWithParam<int> {};

TEST_P(BuilderProperties, BisectionInvariants) {
    std::mt19937_64 rng(77 + GetParam());
    std::uniform_int_distribution<int> kdist(0, 24);
    std::uniform_int_distribution<long> num(0, 1'000'000);
    for (int trial = 0; trial < 60; ++trial) {
        const unsigned k = static_cast<unsigned>(kdist(rng));
        const Rational z = q(num(rng), 1'000'000);
        const Probability eps(oracle::random_eps(rng));
        auto [w, trace] = build_unbalanced(z, k, BaseParams{eps, 1});

        EXPECT_EQ(w.x.value(), oracle::bisection_x(z, k)) << to_fraction(z) << " k=" << k;
        EXPECT_TRUE(is_dyadic(w.x.value(), k));
        EXPECT_LE(w.x.value(), z);
        EXPECT_LE(z - w.x.value(), pow2(-static_cast<int>(k)));
        EXPECT_LE(depth(w.tree), k);
        if (k <= 14) {
            EXPECT_EQ(oracle::honest_by_paths(w.tree), w.x.value());
        }
        EXPECT_EQ(honest_win_probability(w.tree), w.x);
        EXPECT_EQ(w.bias_bound, bias_bound(k, eps));

        Rational eps0 = 0;
        Rational width = 1;
        for (const auto& s : trace.steps) {
            EXPECT_EQ(s.x2.value() - s.x1.value(), width / 2);
            EXPECT_LT(s.x1.value(), s.x2.value());
            EXPECT_EQ(s.went_high, z > s.u.value());
            eps0 += width * eps.value();
            width /= 2;
            EXPECT_EQ(s.eps0.value(), eps0);
        }
        EXPECT_EQ(eps0, w.bias_bound.value());
        EXPECT_LE(from_tree(w.tree, w.base).bias_bound, w.bias_bound);
    }
}

TEST_P(BuilderProperties, FromTreeAcceptsOrderedTrees) {
    std::mt19937_64 rng(500 + GetParam());
    for (int trial = 0; trial < 30; ++trial) {
        WcfTree t = oracle::random_ordered_tree(rng, static_cast<int>(rng() % 10));
        Probability eps(oracle::random_eps(rng));
        UnbalancedWcf f = from_tree(t, BaseParams{eps, 2});
        EXPECT_EQ(f.x.value(), oracle::honest_by_paths(t));
        EXPECT_LE(f.bias_bound.value(), Rational(depth(t)) * eps.value());
        EXPECT_EQ(f.total_rounds, 2u * depth(t));
    }
}

INSTANTIATE_TEST_SUITE_P(Seeds, BuilderProperties, ::testing::Range(0, 4));
