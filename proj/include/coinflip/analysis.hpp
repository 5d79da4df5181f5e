#pragma once

#include <cstdint>
#include <optional>
#include <unordered_map>
#include <utility>

#include "coinflip/builder.hpp"
#include "coinflip/constants.hpp"
#include "coinflip/error.hpp"
#include "coinflip/outcome.hpp"
#include "coinflip/probability.hpp"
#include "coinflip/tree.hpp"

namespace coinflip {

/// Per-flip ceiling on the cheater's win probability, 1/2 + eps.
struct CheatCap {
    Probability cap;

    static CheatCap from_eps(const Probability& eps) {
        if (!(eps < Probability::half())) throw DomainError("cheat cap requires eps < 1/2");
        return {Probability(Rational(Rational(1, 2) + eps.value()))};
    }
};

/// Which end of [0, cap] the cheater picks at a base flip.
enum class Endpoint : std::uint8_t { Throw, Cap };

using EndpointMap = std::unordered_map<NodeId, Endpoint>;

struct WcfCheat {
    Probability max;
    Probability min;
    EndpointMap argmax;
    EndpointMap argmin;
};

namespace detail {

struct NodeValue {
    Rational max;
    Rational min;
};

/// Cheater `role` picks w in [0, cap] at every flip, w being the probability that the
/// flip goes the cheater's way. Leaves are worth `win_value` to the cheater when the
/// cheater wins and 0 otherwise. The objective is linear in each w, so both extrema sit
/// on endpoints; ties resolve to Cap for max and Throw for min.
inline WcfCheat solve_wcf(const WcfTree& tree, Role role, const Rational& cap,
                          const Rational& win_value) {
    WcfCheat out;
    NodeValue root = fold_tree<NodeValue>(
        tree,
        [&](NodeKind k) {
            const bool cheater_wins = (k == NodeKind::AliceWins) == (role == Role::Alice);
            Rational v = cheater_wins ? win_value : Rational(0);
            return NodeValue{v, v};
        },
        [&](const WcfTree& t, const NodeValue& w, const NodeValue& l) {
            const NodeValue& mine = role == Role::Alice ? w : l;   // cheater wins the flip
            const NodeValue& theirs = role == Role::Alice ? l : w; // cheater loses the flip
            NodeValue v;
            if (mine.max >= theirs.max) {
                v.max = cap * mine.max + (1 - cap) * theirs.max;
                out.argmax[t.id()] = Endpoint::Cap;
            } else {
                v.max = theirs.max;
                out.argmax[t.id()] = Endpoint::Throw;
            }
            if (mine.min >= theirs.min) {
                v.min = theirs.min;
                out.argmin[t.id()] = Endpoint::Throw;
            } else {
                v.min = cap * mine.min + (1 - cap) * theirs.min;
                out.argmin[t.id()] = Endpoint::Cap;
            }
            return v;
        });
    out.max = Probability(root.max / win_value);
    out.min = Probability(root.min / win_value);
    return out;
}

} // namespace detail

/// Exact extremal win probability a single cheater can force in a composed WCF,
/// with the endpoint chosen at every base flip.
inline WcfCheat cheat_wcf(const WcfTree& tree, Role role, const Probability& eps) {
    return detail::solve_wcf(tree, role, CheatCap::from_eps(eps).cap.value(), Rational(1));
}

/// Bob's echo probability equalizing Alice's two commitment branches:
/// (1 - z - eps) / (2 - z - eps).
inline Probability optimal_p(const Probability& z, const Probability& eps) {
    Rational s = z.value() + eps.value();
    if (s > 1) throw DomainError("optimal_p requires z + eps <= 1");
    return Probability(Rational((1 - s) / (2 - s)));
}

/// Upper bound on a cheating Alice in the strong flip: 1 / (2 - z - eps).
inline Rational bound_alice(const Probability& z, const Probability& eps) {
    Rational s = z.value() + eps.value();
    if (s >= 2) throw DomainError("bound_alice requires z + eps < 2");
    return 1 / (2 - s);
}

/// Upper bound on a cheating Bob in the strong flip: (2 - z + eps) / 2.
inline Rational bound_bob(const Probability& z, const Probability& eps) {
    return (2 - z.value() + eps.value()) / 2;
}

/// The strong coin flip: Alice commits a public bit a, the parties run the unbalanced
/// WCF, and if Bob wins he announces b = a with probability p (b = not a otherwise).
struct ScfProtocol {
    UnbalancedWcf wcf;
    Probability p;
    Probability target_z;
};

/// p is derived from the achieved x and bias bound eps0, not from the target.
inline ScfProtocol make_scf(UnbalancedWcf wcf, const Probability& target_z) {
    Probability p = optimal_p(wcf.x, wcf.bias_bound);
    return ScfProtocol{std::move(wcf), p, target_z};
}

struct CheatReport {
    Role role;
    Probability optimal;
    Rational bound;
    /// Endpoint used at every base flip along the chosen branch.
    EndpointMap strategy;
    /// For Alice: whether committing to the desired bit is optimal (ties prefer it).
    std::optional<bool> commit_desired;

    bool within_bound() const { return optimal.value() <= bound; }
};

/// Exact optimum for a cheater forcing outcome 0 (equal to forcing 1 by symmetry).
inline CheatReport cheat_scf(const ScfProtocol& protocol, Role role) {
    const UnbalancedWcf& q = protocol.wcf;
    const Rational& p = protocol.p.value();
    WcfCheat w = cheat_wcf(q.tree, role, q.base.eps);
    CheatReport r{role, Probability::zero(), 0, {}, std::nullopt};
    if (role == Role::Alice) {
        const Rational& wmax = w.max.value();
        const Rational& wmin = w.min.value();
        Rational desired = wmax + (1 - wmax) * p;
        Rational opposite = (1 - wmin) * (1 - p);
        const bool pick_desired = desired >= opposite;
        r.optimal = Probability(pick_desired ? desired : opposite);
        r.strategy = pick_desired ? std::move(w.argmax) : std::move(w.argmin);
        r.commit_desired = pick_desired;
        r.bound = bound_alice(q.x, q.bias_bound);
    } else {
        r.optimal = Probability(Rational((1 + w.max.value()) / 2));
        r.strategy = std::move(w.argmax);
        r.bound = bound_bob(q.x, q.bias_bound);
    }
    return r;
}

/// Honest Pr[c = 0], Pr[c = 1], averaged over Alice's uniform commitment.
inline std::pair<Probability, Probability> scf_honest_distribution(const ScfProtocol& protocol) {
    const Rational& x = protocol.wcf.x.value();
    const Rational& p = protocol.p.value();
    Rational same = x + (1 - x) * p;     // Pr[c = a]
    Rational flipped = (1 - x) * (1 - p); // Pr[c = not a]
    // a = 0 contributes same to c = 0; a = 1 contributes flipped to c = 0.
    Rational zero = (same + flipped) / 2;
    Rational one = (flipped + same) / 2;
    return {Probability(zero), Probability(one)};
}

/// 2 * ceil(log2(1/eps)); the smallest even k with 2^-k <= eps^2.
inline unsigned auto_k(const Probability& eps) {
    if (!(eps > Probability::zero())) throw DomainError("auto_k requires eps > 0");
    unsigned m = 0;
    while (pow2(static_cast<int>(m)) * eps.value() < 1) ++m;
    return 2 * m;
}

struct AsymptoticBounds {
    unsigned k;
    std::uint64_t total_rounds;
    Rational pa_bound; ///< certified upper bound on 1 / (sqrt2 - 2 eps - eps^2)
    Rational pb_bound; ///< certified upper bound on (sqrt2 + 2 eps + eps^2) / 2
};

inline AsymptoticBounds asymptotic_bounds(const Probability& eps, std::uint64_t rounds_n) {
    if (!(eps > Probability::zero()) || !(eps < Probability::half()))
        throw DomainError("asymptotic bounds require 0 < eps < 1/2");
    if (rounds_n < 1) throw DomainError("rounds_n must be >= 1");
    const Enclosure s2 = sqrt2_enclosure(64);
    const Rational& e = eps.value();
    AsymptoticBounds t;
    t.k = auto_k(eps);
    t.total_rounds = static_cast<std::uint64_t>(t.k) * rounds_n + 2;
    t.pa_bound = 1 / (s2.lo - 2 * e - e * e);
    t.pb_bound = (s2.hi + 2 * e + e * e) / 2;
    return t;
}

/// Winner-picks-a-random-bit protocol over a perfect WCF: the cheater wins the WCF
/// with probability 1/2 and otherwise still gets a fair coin.
inline Probability trivial_scf_bound() {
    return Probability(Rational(Rational(1, 2) * 1 + Rational(1, 2) * Rational(1, 2)));
}

} // namespace coinflip
