#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "coinflip/analysis.hpp"
#include "coinflip/builder.hpp"
#include "coinflip/constants.hpp"
#include "coinflip/simulate.hpp"

using namespace coinflip;

namespace {

UnbalancedWcf built(unsigned k, const Probability& eps) {
    return build_unbalanced(two_minus_sqrt2_proxy(k + 8), k, BaseParams{eps, 1}).first;
}

constexpr std::uint64_t kTrials = 200'000;

// |point - exact| within 4 sigma of the exact Bernoulli variance.
void expect_close(const Estimate& e, const Probability& exact) {
    const double p = exact.to_double();
    const double sigma = std::sqrt(p * (1 - p) / static_cast<double>(e.trials));
    EXPECT_NEAR(e.point, p, 4 * sigma + 1e-12) << "exact " << exact.fraction();
}

} // namespace

TEST(Rng, DeterministicAndSeparated) {
    CounterRng a(42), b(42), c(43);
    for (int i = 0; i < 100; ++i) {
        auto va = a();
        EXPECT_EQ(va, b());
        EXPECT_NE(va, c());
    }
    std::set<std::uint64_t> firsts;
    for (std::uint64_t s = 0; s < 1000; ++s) firsts.insert(CounterRng::substream(7, s)());
    EXPECT_EQ(firsts.size(), 1000u);
    EXPECT_NE(CounterRng::substream(1, 0)(), CounterRng::substream(2, 0)());
}

TEST(Rng, OutputIsRecomputableFromCounter) {
    CounterRng r(99);
    r();
    r();
    const auto third = r();
    CounterRng again(99);
    again();
    again();
    EXPECT_EQ(again(), third);
    EXPECT_EQ(r.counter(), 3u);
}

TEST(Coin, EndpointsAreExact) {
    CounterRng rng(1);
    Coin never(Probability::zero()), always(Probability::one());
    for (int i = 0; i < 10'000; ++i) {
        EXPECT_FALSE(never(rng));
        EXPECT_TRUE(always(rng));
    }
}

TEST(Coin, FrequencyMatches) {
    for (Probability w : {Probability(1, 3), Probability(3, 5), Probability(1, 1024)}) {
        Coin coin(w);
        Estimate e = estimate([&](CounterRng& r) { return coin(r); }, kTrials, 11);
        expect_close(e, w);
    }
}

TEST(Estimate, IndependentOfWorkerCount) {
    Coin coin(Probability(2, 7));
    auto f = [&](CounterRng& r) { return coin(r); };
    EstimateOptions opt;
    opt.block_size = 1000;
    opt.workers = 1;
    const Estimate one = estimate(f, 123'457, 5, opt);
    for (unsigned w : {2u, 3u, 8u}) {
        opt.workers = w;
        EXPECT_EQ(estimate(f, 123'457, 5, opt).successes, one.successes) << w;
    }
    opt.workers = 4;
    EXPECT_NE(estimate(f, 123'457, 6, opt).successes, one.successes);
}

TEST(Estimate, RejectsEmptyRuns) {
    EXPECT_THROW(estimate([](CounterRng&) { return true; }, 0, 1), DomainError);
}

TEST(Estimate, CiHalfwidth) {
    EstimateOptions opt;
    opt.z_score = 2;
    Estimate e = estimate([](CounterRng& r) { return (r() & 1) != 0; }, 10'000, 3, opt);
    EXPECT_NEAR(e.ci_halfwidth, 2 * std::sqrt(e.point * (1 - e.point) / 10'000), 1e-12);
}

TEST(Experiment, PassUsesExactSigma) {
    ExperimentResult r{"x", {10'000, 5'100, 0.51, 0}, Probability::half(), 4};
    EXPECT_NEAR(r.sigma(), 0.005, 1e-12);
    EXPECT_TRUE(r.pass());
    r.estimate.point = 0.53;
    EXPECT_FALSE(r.pass());
}

TEST(WcfSampling, HonestMatchesExact) {
    UnbalancedWcf w = built(8, Probability(1, 16));
    WcfSampler s(w.tree, WcfStrategy::honest(), WcfStrategy::honest(), w.base.eps);
    Estimate e = estimate([&](CounterRng& r) { return s.sample(r) == WcfOutcome::AliceWins; },
                          kTrials, 21);
    expect_close(e, w.x);
}

TEST(WcfSampling, OptimalCheatersMatchDp) {
    UnbalancedWcf w = built(6, Probability(1, 10));
    for (Role role : {Role::Alice, Role::Bob}) {
        WcfCheat c = cheat_wcf(w.tree, role, w.base.eps);
        WcfStrategy cheat = WcfStrategy::from_endpoints(role, c.argmax, w.base.eps);
        WcfSampler s(w.tree, role == Role::Alice ? cheat : WcfStrategy::honest(),
                     role == Role::Bob ? cheat : WcfStrategy::honest(), w.base.eps);
        const WcfOutcome goal = role == Role::Alice ? WcfOutcome::AliceWins : WcfOutcome::BobWins;
        Estimate e = estimate([&](CounterRng& r) { return s.sample(r) == goal; }, kTrials, 31);
        expect_close(e, c.max);
    }
}

TEST(WcfSampling, ThrowingEverythingLoses) {
    UnbalancedWcf w = built(5, Probability(1, 10));
    WcfCheat c = cheat_wcf(w.tree, Role::Alice, w.base.eps);
    WcfStrategy throw_all = WcfStrategy::from_endpoints(Role::Alice, c.argmin, w.base.eps);
    WcfSampler s(w.tree, throw_all, WcfStrategy::honest(), w.base.eps);
    CounterRng rng(4);
    for (int i = 0; i < 1000; ++i) EXPECT_EQ(s.sample(rng), WcfOutcome::BobWins);
}

TEST(WcfSampling, WalkReportsActivePath) {
    WcfTree t = parse_tree("F(F(A,B),B)");
    WcfSampler s(t, WcfStrategy::honest(), WcfStrategy::honest(), Probability::zero());
    CounterRng rng(8);
    for (int i = 0; i < 200; ++i) {
        std::vector<std::string> paths;
        WcfOutcome out = s.walk(rng, [&](const std::string& p, WcfOutcome) { paths.push_back(p); });
        ASSERT_FALSE(paths.empty());
        EXPECT_EQ(paths[0], "");
        if (paths.size() == 2) {
            EXPECT_EQ(paths[1], "W");
        }
        if (out == WcfOutcome::AliceWins) {
            EXPECT_EQ(paths.size(), 2u);
        }
    }
}

TEST(WcfSampling, ThreatModelChecks) {
    WcfTree t = parse_tree("F(A,B)");
    const Probability eps(1, 10);
    EXPECT_THROW(WcfSampler(t, WcfStrategy::cheat(Role::Alice), WcfStrategy::cheat(Role::Bob), eps),
                 ModelError);
    EXPECT_THROW(WcfSampler(t, WcfStrategy::cheat(Role::Bob), WcfStrategy::honest(), eps), ModelError);
    EXPECT_THROW(WcfSampler(t, WcfStrategy::cheat(Role::Alice, {{t.id(), Probability(7, 10)}}),
                            WcfStrategy::honest(), eps),
                 DomainError);
    EXPECT_NO_THROW(WcfSampler(t, WcfStrategy::cheat(Role::Alice, {{t.id(), Probability(3, 5)}}),
                               WcfStrategy::honest(), eps));
}

TEST(WcfSampling, SingleRunIsDeterministic) {
    UnbalancedWcf w = built(10, Probability(1, 8));
    for (std::uint64_t seed = 0; seed < 50; ++seed)
        EXPECT_EQ(sample_wcf(w.tree, {}, {}, w.base.eps, seed),
                  sample_wcf(w.tree, {}, {}, w.base.eps, seed));
}

TEST(ScfSampling, HonestIsFair) {
    ScfProtocol p = make_scf(built(8, Probability(1, 20)), Probability::half());
    ScfSampler s(p, ScfStrategy::honest(), ScfStrategy::honest());
    Estimate e = estimate([&](CounterRng& r) { return s.sample(r) == ScfOutcome::Zero; }, kTrials, 41);
    expect_close(e, Probability::half());
}

TEST(ScfSampling, OptimalCheatersMatchExact) {
    ScfProtocol p = make_scf(built(6, Probability(1, 20)), Probability::half());
    for (Role role : {Role::Alice, Role::Bob}) {
        for (int target : {0, 1}) {
            ScfStrategy cheat = ScfStrategy::optimal(p, role, target);
            ScfSampler s(p, role == Role::Alice ? cheat : ScfStrategy::honest(),
                         role == Role::Bob ? cheat : ScfStrategy::honest());
            Estimate e = estimate(
                [&](CounterRng& r) { return s.sample(r) == outcome_from_bit(target); }, kTrials,
                51 + target);
            expect_close(e, cheat_scf(p, role).optimal);
        }
    }
}

TEST(ScfSampling, BothCheatingIsRejected) {
    ScfProtocol p = make_scf(built(3, Probability(1, 20)), Probability::half());
    EXPECT_THROW(ScfSampler(p, ScfStrategy::optimal(p, Role::Alice, 0),
                            ScfStrategy::optimal(p, Role::Bob, 0)),
                 ModelError);
}

TEST(ScfSampling, RunAgreesWithSample) {
    ScfProtocol p = make_scf(built(7, Probability(1, 20)), Probability::half());
    ScfSampler s(p, ScfStrategy::honest(), ScfStrategy::honest());
    for (std::uint64_t seed = 0; seed < 300; ++seed) {
        CounterRng r1(seed), r2(seed);
        auto [out, t] = s.run(r1, "x");
        EXPECT_EQ(out, s.sample(r2));
        ASSERT_TRUE(t.outcome.has_value());
        EXPECT_EQ(*t.outcome, out);
        EXPECT_EQ(t.messages.front().kind, MessageKind::CommitA);
        for (std::size_t i = 1; i < t.messages.size(); ++i)
            EXPECT_LT(t.messages[i - 1].seq, t.messages[i].seq);
        const auto& last = t.messages.back();
        EXPECT_EQ(last.kind, MessageKind::Output);
        EXPECT_EQ(last.sender, Party::Bob);
    }
}

TEST(ScfSampling, WarmUpSingleFlip) {
    UnbalancedWcf w = from_tree(parse_tree("F(A,B)"), BaseParams{Probability::zero(), 1});
    ScfProtocol p{w, Probability(1, 3), Probability::half()};
    for (Role role : {Role::Alice, Role::Bob}) {
        ScfStrategy cheat = ScfStrategy::optimal(p, role, 0);
        ScfSampler s(p, role == Role::Alice ? cheat : ScfStrategy::honest(),
                     role == Role::Bob ? cheat : ScfStrategy::honest());
        Estimate e = estimate([&](CounterRng& r) { return s.sample(r) == ScfOutcome::Zero; },
                              kTrials, 61);
        expect_close(e, role == Role::Alice ? Probability(2, 3) : Probability(3, 4));
    }
}

TEST(WcfSampling, FourStepCheaterHitsHandValue) {
    UnbalancedWcf w = built(4, Probability(1, 10));
    WcfCheat c = cheat_wcf(w.tree, Role::Alice, w.base.eps);
    ASSERT_EQ(c.max, Probability(429, 625));
    WcfSampler s(w.tree, WcfStrategy::from_endpoints(Role::Alice, c.argmax, w.base.eps),
                 WcfStrategy::honest(), w.base.eps);
    Estimate e = estimate([&](CounterRng& r) { return s.sample(r) == WcfOutcome::AliceWins; },
                          kTrials, 71);
    expect_close(e, c.max);
}
