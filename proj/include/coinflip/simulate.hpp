#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <thread>
#include <unordered_map>
#include <utility>
#include <vector>

#include "coinflip/analysis.hpp"
#include "coinflip/error.hpp"
#include "coinflip/outcome.hpp"
#include "coinflip/probability.hpp"
#include "coinflip/transcript.hpp"
#include "coinflip/tree.hpp"

namespace coinflip {

inline constexpr std::uint64_t splitmix64(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Counter-based generator: output i of stream `key` is a bijective mix of
/// key + i * golden-gamma. Any output can be recomputed from (key, i), so substreams
/// are independent of scheduling. Satisfies UniformRandomBitGenerator.
class CounterRng {
  public:
    using result_type = std::uint64_t;

    explicit CounterRng(std::uint64_t key) noexcept : key_(key) {}

    /// Stream `index` of `seed`: the index is mixed and XOR-folded into the key.
    static CounterRng substream(std::uint64_t seed, std::uint64_t index) noexcept {
        return CounterRng(splitmix64(seed) ^ splitmix64(index ^ 0xd1b54a32d192ed03ULL));
    }

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept {
        return splitmix64(key_ + 0x9e3779b97f4a7c15ULL * ++counter_);
    }

    std::uint64_t key() const noexcept { return key_; }
    std::uint64_t counter() const noexcept { return counter_; }

  private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

/// Bernoulli(w) drawn by comparing one 64-bit output against floor(w * 2^64).
/// The rounding error is below 2^-64.
class Coin {
  public:
    Coin() = default;
    explicit Coin(const Probability& w) {
        if (w == Probability::one()) {
            always_ = true;
            return;
        }
        Rational scaled = w.value() * pow2(64);
        Integer t = numerator_of(scaled) / denominator_of(scaled);
        threshold_ = t.convert_to<std::uint64_t>();
    }
    static Coin fair() { return Coin(Probability::half()); }

    bool operator()(CounterRng& rng) const noexcept { return always_ || rng() < threshold_; }

  private:
    std::uint64_t threshold_ = 0;
    bool always_ = false;
};

/// One party's behaviour inside a WCF: honest (fair flips) or a cheater choosing its
/// own win probability per base flip. Nodes missing from the map are played honestly.
struct WcfStrategy {
    std::optional<Role> cheater;
    std::unordered_map<NodeId, Probability> win;

    static WcfStrategy honest() { return {}; }
    static WcfStrategy cheat(Role role, std::unordered_map<NodeId, Probability> win = {}) {
        return {role, std::move(win)};
    }
    static WcfStrategy from_endpoints(Role role, const EndpointMap& endpoints,
                                      const Probability& eps) {
        const Probability cap = CheatCap::from_eps(eps).cap;
        WcfStrategy s{role, {}};
        for (const auto& [node, e] : endpoints)
            s.win.emplace(node, e == Endpoint::Cap ? cap : Probability::zero());
        return s;
    }

    bool is_cheat() const noexcept { return cheater.has_value(); }

    void validate(const Probability& eps) const {
        if (!cheater) return;
        const Probability cap = CheatCap::from_eps(eps).cap;
        for (const auto& [node, w] : win)
            if (w > cap) throw DomainError("strategy win probability exceeds the cheat cap");
    }
};

struct Flip {
    std::string path; ///< node path from the root, over {W, L}
    WcfOutcome result;
};

/// A tree with both parties' strategies compiled into per-node coins.
class WcfSampler {
  public:
    WcfSampler(WcfTree tree, const WcfStrategy& alice, const WcfStrategy& bob,
               const Probability& eps)
        : tree_(std::move(tree)) {
        if (alice.is_cheat() && bob.is_cheat())
            throw ModelError("both parties cheat; the threat model allows one cheater");
        if (alice.is_cheat() && *alice.cheater != Role::Alice)
            throw ModelError("Alice's strategy is declared for Bob");
        if (bob.is_cheat() && *bob.cheater != Role::Bob)
            throw ModelError("Bob's strategy is declared for Alice");
        const WcfStrategy& cheat = alice.is_cheat() ? alice : bob;
        cheat.validate(eps);
        cheater_ = cheat.cheater;
        for (const auto& [node, w] : cheat.win) {
            // stored as Pr[AliceWins] at the node
            coins_.emplace(node, Coin(*cheater_ == Role::Alice ? w : w.complement()));
        }
    }

    const WcfTree& tree() const noexcept { return tree_; }

    /// Walks the tree; `on_flip` sees every base flip on the active path.
    template <class OnFlip>
    WcfOutcome walk(CounterRng& rng, OnFlip&& on_flip) const {
        const WcfTree* cur = &tree_;
        std::string path;
        while (!cur->is_leaf()) {
            auto it = coins_.find(cur->id());
            const bool alice_wins = it == coins_.end() ? fair_(rng) : it->second(rng);
            on_flip(path, alice_wins ? WcfOutcome::AliceWins : WcfOutcome::BobWins);
            path += alice_wins ? 'W' : 'L';
            cur = alice_wins ? &cur->win_child() : &cur->lose_child();
        }
        return cur->kind() == NodeKind::AliceWins ? WcfOutcome::AliceWins : WcfOutcome::BobWins;
    }

    WcfOutcome sample(CounterRng& rng) const {
        return walk(rng, [](const std::string&, WcfOutcome) {});
    }

  private:
    WcfTree tree_;
    std::optional<Role> cheater_;
    std::unordered_map<NodeId, Coin> coins_;
    Coin fair_ = Coin::fair();
};

/// Single sampled execution; deterministic in seed.
inline WcfOutcome sample_wcf(const WcfTree& tree, const WcfStrategy& alice, const WcfStrategy& bob,
                             const Probability& eps, std::uint64_t seed) {
    CounterRng rng(seed);
    return WcfSampler(tree, alice, bob, eps).sample(rng);
}

/// A party's behaviour in the strong flip.
struct ScfStrategy {
    std::optional<Role> cheater;
    int target = 0;             ///< the outcome the cheater wants
    bool commit_desired = true; ///< cheating Alice commits a = target (else the opposite)
    WcfStrategy wcf;

    static ScfStrategy honest() { return {}; }

    /// The optimum found by cheat_scf: Alice's commitment choice plus the per-flip
    /// endpoints of the matching branch; Bob maximizes his WCF win and announces target.
    static ScfStrategy optimal(const ScfProtocol& protocol, Role role, int target) {
        CheatReport r = cheat_scf(protocol, role);
        ScfStrategy s;
        s.cheater = role;
        s.target = target;
        s.commit_desired = r.commit_desired.value_or(true);
        s.wcf = WcfStrategy::from_endpoints(role, r.strategy, protocol.wcf.base.eps);
        return s;
    }

    bool is_cheat() const noexcept { return cheater.has_value(); }

    int commit_bit(CounterRng& rng) const {
        if (cheater == Role::Alice) return commit_desired ? target : 1 - target;
        return static_cast<int>(rng() >> 63);
    }

    /// Bob's announced bit after winning the WCF.
    int bob_bit(int a, const Coin& echo, CounterRng& rng) const {
        if (cheater == Role::Bob) return target;
        return echo(rng) ? a : 1 - a;
    }
};

/// Compiled strong-flip executor.
class ScfSampler {
  public:
    ScfSampler(const ScfProtocol& protocol, ScfStrategy alice, ScfStrategy bob)
        : alice_(std::move(alice)),
          bob_(std::move(bob)),
          wcf_(protocol.wcf.tree, alice_.wcf, bob_.wcf, protocol.wcf.base.eps),
          echo_(protocol.p) {
        if (alice_.is_cheat() && bob_.is_cheat())
            throw ModelError("both parties cheat; the threat model allows one cheater");
        if ((alice_.is_cheat() && *alice_.cheater != Role::Alice) ||
            (bob_.is_cheat() && *bob_.cheater != Role::Bob))
            throw ModelError("strategy declared for the wrong party");
    }

    ScfOutcome sample(CounterRng& rng) const {
        const int a = alice_.commit_bit(rng);
        if (wcf_.sample(rng) == WcfOutcome::AliceWins) return outcome_from_bit(a);
        return outcome_from_bit(bob_.bob_bit(a, echo_, rng));
    }

    /// Same draws as sample(), plus the record sequence a live session would carry.
    std::pair<ScfOutcome, Transcript> run(CounterRng& rng, const std::string& session_id) const {
        Transcript t;
        auto push = [&](std::uint64_t seq, Party who, MessageKind kind, std::string payload) {
            t.messages.push_back({session_id, seq, who, kind, std::move(payload)});
        };
        const int a = alice_.commit_bit(rng);
        push(grammar::commit(), Party::Alice, MessageKind::CommitA, std::to_string(a));
        std::uint64_t flips = 0;
        WcfOutcome w = wcf_.walk(rng, [&](const std::string& path, WcfOutcome r) {
            push(grammar::flip_req(Party::Alice, flips), Party::Alice, MessageKind::FlipReq, path);
            push(grammar::flip_req(Party::Bob, flips), Party::Bob, MessageKind::FlipReq, path);
            push(grammar::flip_result(flips), Party::Referee, MessageKind::FlipResult,
                 std::string(to_string(r)));
            ++flips;
        });
        std::uint64_t seq = grammar::tail(flips);
        int c = a;
        if (w == WcfOutcome::BobWins) {
            c = bob_.bob_bit(a, echo_, rng);
            push(seq++, Party::Bob, MessageKind::BobBit, std::to_string(c));
        }
        push(seq++, Party::Alice, MessageKind::Output, std::to_string(c));
        push(seq++, Party::Bob, MessageKind::Output, std::to_string(c));
        t.outcome = outcome_from_bit(c);
        return {*t.outcome, std::move(t)};
    }

  private:
    ScfStrategy alice_;
    ScfStrategy bob_;
    WcfSampler wcf_;
    Coin echo_;
};

inline std::pair<ScfOutcome, Transcript> run_scf(const ScfProtocol& protocol,
                                                 const ScfStrategy& alice, const ScfStrategy& bob,
                                                 std::uint64_t seed,
                                                 const std::string& session_id = "sim") {
    CounterRng rng(seed);
    return ScfSampler(protocol, alice, bob).run(rng, session_id);
}

struct Estimate {
    std::uint64_t trials = 0;
    std::uint64_t successes = 0;
    double point = 0;
    double ci_halfwidth = 0;
};

struct EstimateOptions {
    unsigned workers = 0;               ///< 0: hardware concurrency
    double z_score = 4;
    std::uint64_t block_size = 1 << 14; ///< trials per substream
};

/// Runs `trials` Bernoulli experiments. Trials are cut into fixed blocks and block b
/// draws from CounterRng::substream(seed, b), so the result depends on (seed, trials,
/// block_size) only and not on how many workers share the blocks.
inline Estimate estimate(const std::function<bool(CounterRng&)>& experiment, std::uint64_t trials,
                         std::uint64_t seed, EstimateOptions opt = {}) {
    if (trials < 1) throw DomainError("estimate needs at least one trial");
    if (opt.block_size < 1) throw DomainError("block size must be positive");
    const std::uint64_t blocks = (trials + opt.block_size - 1) / opt.block_size;
    unsigned workers = opt.workers ? opt.workers : std::max(1u, std::thread::hardware_concurrency());
    workers = static_cast<unsigned>(std::min<std::uint64_t>(workers, blocks));

    std::atomic<std::uint64_t> next{0}, total{0};
    auto work = [&] {
        std::uint64_t local = 0;
        for (std::uint64_t b; (b = next.fetch_add(1)) < blocks;) {
            CounterRng rng = CounterRng::substream(seed, b);
            const std::uint64_t begin = b * opt.block_size;
            const std::uint64_t end = std::min(trials, begin + opt.block_size);
            for (std::uint64_t i = begin; i < end; ++i) local += experiment(rng) ? 1 : 0;
        }
        total += local;
    };
    std::vector<std::thread> pool;
    for (unsigned i = 1; i < workers; ++i) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();

    Estimate e;
    e.trials = trials;
    e.successes = total.load();
    e.point = static_cast<double>(e.successes) / static_cast<double>(trials);
    e.ci_halfwidth = opt.z_score * std::sqrt(e.point * (1 - e.point) / static_cast<double>(trials));
    return e;
}

/// An estimate checked against an exact value: pass when |point - exact| is within
/// z_score standard deviations computed from the exact value.
struct ExperimentResult {
    std::string name;
    Estimate estimate;
    Probability exact;
    double z_score = 4;

    double sigma() const {
        const double p = exact.to_double();
        return std::sqrt(p * (1 - p) / static_cast<double>(estimate.trials));
    }
    bool pass() const {
        return std::abs(estimate.point - exact.to_double()) <= z_score * sigma();
    }
};

inline ExperimentResult run_experiment(std::string name,
                                       const std::function<bool(CounterRng&)>& experiment,
                                       const Probability& exact, std::uint64_t trials,
                                       std::uint64_t seed, EstimateOptions opt = {}) {
    return {std::move(name), estimate(experiment, trials, seed, opt), exact, opt.z_score};
}

} // namespace coinflip
