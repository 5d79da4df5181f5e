#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "coinflip/error.hpp"
#include "coinflip/probability.hpp"
#include "coinflip/tree.hpp"

namespace coinflip {

/// The balanced base primitive: bias eps, N rounds per invocation.
struct BaseParams {
    Probability eps;
    std::uint64_t rounds_n = 1;

    void validate() const {
        if (!(eps < Probability::half())) throw DomainError("base bias must be < 1/2");
        if (rounds_n < 1) throw DomainError("base round count must be >= 1");
    }
};

/// A composed unbalanced weak coin flip with its certified parameters.
struct UnbalancedWcf {
    WcfTree tree;
    Probability x;          ///< honest Pr[Alice wins]
    Probability bias_bound; ///< eps0: each cheater gains at most this over honest play
    unsigned k = 0;         ///< bisection steps (or depth, for trees not made by the builder)
    BaseParams base;
    std::uint64_t total_rounds = 0; ///< depth(tree) * N
};

struct BisectionStep {
    Probability u;   ///< midpoint (x1 + x2) / 2 of the interval entering this step
    bool went_high;  ///< z > u: the upper half was kept
    Probability x1;  ///< interval after the step
    Probability x2;
    Probability eps0; ///< bias bound of the pair after the step
};

struct BisectionTrace {
    std::vector<BisectionStep> steps;
};

/// Runs the base flip; Alice's win continues with p2, Bob's with p1.
/// Requires honest(p1) <= honest(p2).
inline WcfTree comb(const WcfTree& p1, const WcfTree& p2) {
    if (honest_win_probability(p2) < honest_win_probability(p1))
        throw ParameterOrderError("comb: honest value of the win branch is below the lose branch");
    return WcfTree::base_flip(p2, p1);
}

/// (2 - 2^(1-k)) * eps; zero for k = 0.
inline Probability bias_bound(unsigned k, const Probability& eps) {
    if (k == 0) return Probability::zero();
    return Probability(Rational((2 - pow2(1 - static_cast<int>(k))) * eps.value()));
}

/// k steps of interval bisection toward z, composing with comb at each step.
/// Ties (z == u) keep the lower half. Returns the lower protocol of the final pair.
inline std::pair<UnbalancedWcf, BisectionTrace> build_unbalanced(const Rational& z, unsigned k,
                                                                  const BaseParams& base) {
    if (z < 0 || z > 1) throw DomainError("target z must lie in [0,1], got " + to_fraction(z));
    base.validate();

    WcfTree low = WcfTree::bob_wins(), high = WcfTree::alice_wins();
    Rational x1 = 0, x2 = 1, eps0 = 0;
    BisectionTrace trace;
    trace.steps.reserve(k);
    for (unsigned i = 0; i < k; ++i) {
        Rational u = (x1 + x2) / 2;
        eps0 += (x2 - x1) * base.eps.value();
        WcfTree mid = comb(low, high);
        const bool went_high = z > u;
        if (went_high) {
            low = std::move(mid);
            x1 = u;
        } else {
            high = std::move(mid);
            x2 = u;
        }
        trace.steps.push_back({Probability(u), went_high, Probability(x1), Probability(x2),
                               Probability(eps0)});
    }

    UnbalancedWcf q;
    q.tree = low;
    q.x = Probability(x1);
    q.bias_bound = bias_bound(k, base.eps);
    q.k = k;
    q.base = base;
    q.total_rounds = static_cast<std::uint64_t>(depth(low)) * base.rounds_n;
    return {std::move(q), std::move(trace)};
}

/// Wraps an arbitrary tree, deriving its bias bound by composing the per-node
/// guarantee eps0' = max(eps0_win, eps0_lose) + eps * (z_win - z_lose) bottom-up.
/// Every BaseFlip must have honest(win) >= honest(lose), else ParameterOrderError.
/// The bound saturates at 1.
inline UnbalancedWcf from_tree(const WcfTree& tree, const BaseParams& base) {
    base.validate();
    struct Acc {
        Rational z;
        Rational eps0;
    };
    Acc root = fold_tree<Acc>(
        tree, [](NodeKind k) { return Acc{Rational(k == NodeKind::AliceWins ? 1 : 0), 0}; },
        [&](const WcfTree&, const Acc& w, const Acc& l) {
            if (w.z < l.z)
                throw ParameterOrderError(
                    "tree has a base flip whose win branch is worth less to Alice than its lose branch");
            return Acc{(w.z + l.z) / 2, std::max(w.eps0, l.eps0) + base.eps.value() * (w.z - l.z)};
        });
    UnbalancedWcf q;
    q.tree = tree;
    q.x = Probability(root.z);
    q.bias_bound = Probability(std::min(root.eps0, Rational(1)));
    q.k = depth(tree);
    q.base = base;
    q.total_rounds = static_cast<std::uint64_t>(q.k) * base.rounds_n;
    return q;
}

} // namespace coinflip
