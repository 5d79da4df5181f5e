#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "coinflip/analysis.hpp"
#include "coinflip/channel.hpp"
#include "coinflip/error.hpp"
#include "coinflip/outcome.hpp"
#include "coinflip/simulate.hpp"
#include "coinflip/transcript.hpp"
#include "coinflip/tree.hpp"

// Networked execution of the strong flip between three endpoints. The referee stands
// in for the base weak flip: it is a trusted classical sampler, so its fairness is an
// assumption of this demo rather than of the analysis.
//
// Routing: every record from Alice or Bob goes to the other party; FLIP_REQ also goes
// to the referee; FLIP_RESULT goes from the referee to both parties. Each party thus
// sees the full record sequence of its sessions.

namespace coinflip {

struct SessionOptions {
    std::chrono::milliseconds timeout{5000}; ///< per expected record
    /// Fault injection for tests: Bob sends BOB_BIT even when Alice won the WCF.
    bool bob_bit_after_losing = false;
};

/// Identifies the protocol description both endpoints must share.
inline std::uint64_t protocol_fingerprint(const ScfProtocol& protocol) {
    std::uint64_t h = structural_hash(protocol.wcf.tree);
    auto absorb = [&h](std::string_view s) {
        for (unsigned char c : s) {
            h ^= c;
            h *= 0x100000001b3ULL;
        }
        h ^= 0xff;
        h *= 0x100000001b3ULL;
    };
    absorb(protocol.p.fraction());
    absorb(protocol.wcf.base.eps.fraction());
    return h;
}

namespace detail {

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

inline std::uint64_t session_key(const std::string& sid, std::uint64_t tag) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : sid) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h ^ splitmix64(tag);
}

} // namespace detail

/// Exchanges `HELLO\t<party>\t<fingerprint>` and returns the peer's party.
/// Throws ProtocolViolation (seq 0) on a malformed greeting or fingerprint mismatch.
inline Party handshake(Channel& ch, Party self, std::uint64_t fingerprint,
                       std::chrono::milliseconds timeout) {
    ch.send_line("HELLO\t" + std::string(to_string(self)) + "\t" + detail::hex64(fingerprint));
    std::string line = ch.recv_line(timeout);
    auto fields = detail::split_tabs(line);
    if (fields.size() != 3 || fields[0] != "HELLO")
        throw ProtocolViolation("malformed greeting: '" + line + "'", 0);
    auto peer = parse_party(fields[1]);
    if (!peer) throw ProtocolViolation("greeting names unknown party", 0);
    if (fields[2] != detail::hex64(fingerprint))
        throw ProtocolViolation("protocol fingerprint mismatch with " + std::string(fields[1]), 0);
    return *peer;
}

struct SessionResult {
    ScfOutcome outcome = ScfOutcome::Abort;
    Transcript transcript;
    /// Set when this endpoint aborted: ProtocolViolation, Timeout, ChannelError or
    /// PeerAbort (an ABORT record arrived).
    std::optional<std::string> failure;
};

/// Alice's or Bob's side of the session, over already-handshaken channels. Sessions
/// are run one after another and isolated by session id.
class PartyEndpoint {
  public:
    PartyEndpoint(Role role, Channel& peer, Channel& referee, const ScfProtocol& protocol,
                  ScfStrategy strategy = ScfStrategy::honest(), SessionOptions options = {})
        : role_(role),
          peer_(peer),
          referee_(referee),
          protocol_(protocol),
          strategy_(std::move(strategy)),
          options_(options),
          echo_(protocol.p) {
        if (strategy_.is_cheat() && *strategy_.cheater != role_)
            throw ModelError("endpoint strategy declared for the other party");
    }

    void set_options(SessionOptions options) { options_ = options; }

    SessionResult run(const std::string& session_id, std::uint64_t seed) {
        SessionResult result;
        Run r{session_id, result.transcript};
        CounterRng rng = CounterRng::substream(
            seed, detail::session_key(session_id, role_ == Role::Alice ? 1 : 2));
        try {
            int c = role_ == Role::Alice ? run_alice(r, rng) : run_bob(r, rng);
            result.outcome = outcome_from_bit(c);
        } catch (const PeerAbort&) {
            result.failure = "PeerAbort";
        } catch (const ProtocolViolation& e) {
            abort(r, "ProtocolViolation", e.seq());
            result.failure = "ProtocolViolation";
        } catch (const Timeout& e) {
            abort(r, "Timeout", e.seq());
            result.failure = "Timeout";
        } catch (const ChannelError&) {
            abort(r, "ChannelError", r.expected);
            result.failure = "ChannelError";
        }
        if (result.failure) result.outcome = ScfOutcome::Abort;
        finished_.insert(session_id);
        std::stable_sort(result.transcript.messages.begin(), result.transcript.messages.end(),
                         [](const Message& a, const Message& b) {
                             if ((a.kind == MessageKind::Abort) != (b.kind == MessageKind::Abort))
                                 return b.kind == MessageKind::Abort;
                             return a.seq < b.seq;
                         });
        result.transcript.outcome = result.outcome;
        return result;
    }

  private:
    struct PeerAbort {};

    struct Run {
        const std::string& sid;
        Transcript& t;
        std::uint64_t expected = 0;
    };

    Party self() const { return party_of(role_); }
    Party peer_party() const { return party_of(other(role_)); }

    void send(Run& r, std::uint64_t seq, MessageKind kind, std::string payload, bool to_referee) {
        Message m{r.sid, seq, self(), kind, std::move(payload)};
        const std::string line = encode(m);
        r.t.messages.push_back(std::move(m));
        peer_.send_line(line);
        if (to_referee) referee_.send_line(line);
    }

    Message expect(Run& r, Channel& ch, std::uint64_t seq, Party sender, MessageKind kind) {
        r.expected = seq;
        for (;;) {
            std::string line;
            try {
                line = ch.recv_line(options_.timeout);
            } catch (const Timeout&) {
                throw Timeout("timed out waiting for " + std::string(to_string(kind)), seq);
            }
            Message m;
            try {
                m = decode(line);
            } catch (const MalformedTranscript& e) {
                throw ProtocolViolation(e.what(), seq);
            }
            if (m.session_id != r.sid) {
                if (finished_.count(m.session_id)) continue; // stragglers of an earlier session
                throw ProtocolViolation("record for foreign session " + m.session_id, seq);
            }
            if (m.kind == MessageKind::Abort) {
                r.t.messages.push_back(std::move(m));
                throw PeerAbort{};
            }
            if (m.seq != seq || m.sender != sender || m.kind != kind)
                throw ProtocolViolation("expected " + std::string(to_string(kind)) + " seq " +
                                            std::to_string(seq) + ", got " + encode(m),
                                        seq);
            r.t.messages.push_back(m);
            return m;
        }
    }

    void abort(Run& r, const std::string& reason, std::uint64_t offending) {
        std::uint64_t seq = 0;
        for (const auto& m : r.t.messages) seq = std::max(seq, m.seq + 1);
        Message m{r.sid, seq, self(), MessageKind::Abort, reason + ":" + std::to_string(offending)};
        const std::string line = encode(m);
        r.t.messages.push_back(std::move(m));
        for (Channel* ch : {&peer_, &referee_}) {
            try {
                ch->send_line(line);
            } catch (const ChannelError&) {
            }
        }
    }

    /// Walks the active path; returns the leaf reached and the number of flips.
    std::pair<NodeKind, std::uint64_t> walk(Run& r) {
        const WcfTree* node = &protocol_.wcf.tree;
        std::string path;
        std::uint64_t i = 0;
        for (; !node->is_leaf(); ++i) {
            send(r, grammar::flip_req(self(), i), MessageKind::FlipReq, path, true);
            Message theirs =
                expect(r, peer_, grammar::flip_req(peer_party(), i), peer_party(), MessageKind::FlipReq);
            if (theirs.payload != path)
                throw ProtocolViolation("peer requested flip at path '" + theirs.payload + "'",
                                        theirs.seq);
            Message res =
                expect(r, referee_, grammar::flip_result(i), Party::Referee, MessageKind::FlipResult);
            const bool alice_won = res.payload == "A";
            path += alice_won ? 'W' : 'L';
            node = alice_won ? &node->win_child() : &node->lose_child();
        }
        return {node->kind(), i};
    }

    int finish(Run& r, std::uint64_t seq, int c) {
        const bool alice = role_ == Role::Alice;
        const std::uint64_t mine = alice ? seq : seq + 1, theirs = alice ? seq + 1 : seq;
        send(r, mine, MessageKind::Output, std::to_string(c), false);
        Message m = expect(r, peer_, theirs, peer_party(), MessageKind::Output);
        if (m.payload != std::to_string(c))
            throw ProtocolViolation("peer output disagrees", m.seq);
        return c;
    }

    int run_alice(Run& r, CounterRng& rng) {
        const int a = strategy_.commit_bit(rng);
        send(r, grammar::commit(), MessageKind::CommitA, std::to_string(a), false);
        auto [leaf, flips] = walk(r);
        std::uint64_t seq = grammar::tail(flips);
        int c = a;
        if (leaf == NodeKind::BobWins) {
            Message b = expect(r, peer_, seq++, Party::Bob, MessageKind::BobBit);
            c = b.payload == "1" ? 1 : 0;
        }
        return finish(r, seq, c);
    }

    int run_bob(Run& r, CounterRng& rng) {
        Message commit = expect(r, peer_, grammar::commit(), Party::Alice, MessageKind::CommitA);
        const int a = commit.payload == "1" ? 1 : 0;
        auto [leaf, flips] = walk(r);
        std::uint64_t seq = grammar::tail(flips);
        int c = a;
        if (leaf == NodeKind::BobWins) {
            c = strategy_.bob_bit(a, echo_, rng);
            send(r, seq++, MessageKind::BobBit, std::to_string(c), false);
        } else if (options_.bob_bit_after_losing) {
            send(r, seq++, MessageKind::BobBit, std::to_string(1 - a), false);
        }
        return finish(r, seq, c);
    }

    Role role_;
    Channel& peer_;
    Channel& referee_;
    const ScfProtocol& protocol_;
    ScfStrategy strategy_;
    SessionOptions options_;
    Coin echo_;
    std::unordered_set<std::string> finished_;
};

/// Trusted sampler for the base flips of any number of concurrent sessions. Sessions
/// are isolated by id; each draws from its own substream of the seed. A declared
/// cheater's per-node win probabilities replace the fair coin.
class Referee {
  public:
    Referee(const ScfProtocol& protocol, const WcfStrategy& cheater, std::uint64_t seed,
            SessionOptions options = {})
        : protocol_(protocol), seed_(seed), options_(options) {
        cheater.validate(protocol.wcf.base.eps);
        if (cheater.cheater)
            for (const auto& [node, w] : cheater.win)
                coins_.emplace(node, Coin(*cheater.cheater == Role::Alice ? w : w.complement()));
    }

    /// Handshakes and then serves one connection until the peer closes it. One call per
    /// connection, each on its own thread.
    void serve(Channel& ch) {
        const Party who = handshake(ch, Party::Referee, protocol_fingerprint(protocol_),
                                    options_.timeout);
        if (who == Party::Referee) throw ProtocolViolation("referee connected to itself", 0);
        for (;;) {
            std::string line;
            try {
                line = ch.recv_line(std::chrono::hours(24));
            } catch (const Timeout&) {
                continue;
            } catch (const ChannelError&) {
                return;
            }
            Message m;
            try {
                m = decode(line);
            } catch (const MalformedTranscript&) {
                continue;
            }
            handle(ch, who, m);
        }
    }

    std::uint64_t sessions_completed() const {
        std::lock_guard lock(mu_);
        return completed_;
    }

  private:
    struct State {
        const WcfTree* node;
        std::string path;
        std::uint64_t flip = 0;
        std::optional<std::string> req[2];
        Channel* conn[2] = {nullptr, nullptr};
        CounterRng rng;
    };

    void close_session(const std::string& sid) {
        sessions_.erase(sid);
        closed_.insert(sid);
    }

    void reject(Channel& from, State* st, const Message& m) {
        Message a{m.session_id, m.seq + 1, Party::Referee, MessageKind::Abort,
                  "ProtocolViolation:" + std::to_string(m.seq)};
        const std::string line = encode(a);
        std::unordered_set<Channel*> targets{&from};
        if (st)
            for (Channel* c : st->conn)
                if (c) targets.insert(c);
        for (Channel* c : targets) {
            try {
                c->send_line(line);
            } catch (const ChannelError&) {
            }
        }
        close_session(m.session_id);
    }

    void handle(Channel& ch, Party who, const Message& m) {
        std::lock_guard lock(mu_);
        if (m.kind == MessageKind::Abort) {
            close_session(m.session_id);
            return;
        }
        if (closed_.count(m.session_id)) return;
        if (m.kind != MessageKind::FlipReq || m.sender != who || who == Party::Referee) {
            reject(ch, nullptr, m);
            return;
        }
        auto it = sessions_.find(m.session_id);
        if (it == sessions_.end()) {
            State fresh{&protocol_.wcf.tree, {}, 0, {}, {nullptr, nullptr},
                        CounterRng::substream(seed_, detail::session_key(m.session_id, 3))};
            it = sessions_.emplace(m.session_id, std::move(fresh)).first;
        }
        State& st = it->second;
        const int side = who == Party::Alice ? 0 : 1;
        if (m.seq != grammar::flip_req(who, st.flip) || m.payload != st.path || st.node->is_leaf() ||
            st.req[side]) {
            reject(ch, &st, m);
            return;
        }
        st.req[side] = m.payload;
        st.conn[side] = &ch;
        if (!st.req[0] || !st.req[1]) return;

        auto coin = coins_.find(st.node->id());
        const bool alice_wins = coin == coins_.end() ? fair_(st.rng) : coin->second(st.rng);
        Message res{m.session_id, grammar::flip_result(st.flip), Party::Referee,
                    MessageKind::FlipResult, alice_wins ? "A" : "B"};
        const std::string line = encode(res);
        for (Channel* c : st.conn) {
            try {
                c->send_line(line);
            } catch (const ChannelError&) {
            }
        }
        st.path += alice_wins ? 'W' : 'L';
        st.node = alice_wins ? &st.node->win_child() : &st.node->lose_child();
        ++st.flip;
        st.req[0].reset();
        st.req[1].reset();
        if (st.node->is_leaf()) {
            ++completed_;
            close_session(m.session_id);
        }
    }

    const ScfProtocol& protocol_;
    std::uint64_t seed_;
    SessionOptions options_;
    std::unordered_map<NodeId, Coin> coins_;
    Coin fair_ = Coin::fair();
    mutable std::mutex mu_;
    std::unordered_map<std::string, State> sessions_;
    std::unordered_set<std::string> closed_;
    std::uint64_t completed_ = 0;
};

/// Recomputes the outcome of a complete party-side transcript. Returns Abort when the
/// transcript carries an ABORT record. Throws MalformedTranscript when records are
/// missing or surplus, ProtocolViolation when they contradict the grammar or each other.
inline ScfOutcome replay(const Transcript& t, const ScfProtocol& protocol) {
    const auto& ms = t.messages;
    if (ms.empty()) throw MalformedTranscript("empty transcript");
    const std::string& sid = ms.front().session_id;
    for (std::size_t i = 0; i < ms.size(); ++i) {
        if (ms[i].session_id != sid) throw MalformedTranscript("transcript mixes sessions");
        if (ms[i].kind == MessageKind::Abort) {
            if (i + 1 != ms.size()) throw MalformedTranscript("records after ABORT");
            return ScfOutcome::Abort;
        }
        if (i > 0 && ms[i].seq <= ms[i - 1].seq) throw MalformedTranscript("seq not increasing");
    }
    std::size_t at = 0;
    auto next = [&](std::uint64_t seq, Party sender, MessageKind kind) -> const Message& {
        if (at >= ms.size())
            throw MalformedTranscript("transcript ends before " + std::string(to_string(kind)));
        const Message& m = ms[at++];
        if (m.seq != seq || m.sender != sender || m.kind != kind)
            throw ProtocolViolation("expected " + std::string(to_string(kind)) + " at seq " +
                                        std::to_string(seq) + ", found " + encode(m),
                                    m.seq);
        return m;
    };
    const int a = next(grammar::commit(), Party::Alice, MessageKind::CommitA).payload == "1";
    const WcfTree* node = &protocol.wcf.tree;
    std::string path;
    std::uint64_t i = 0;
    for (; !node->is_leaf(); ++i) {
        for (Party p : {Party::Alice, Party::Bob}) {
            const Message& req = next(grammar::flip_req(p, i), p, MessageKind::FlipReq);
            if (req.payload != path) throw ProtocolViolation("flip request path mismatch", req.seq);
        }
        const bool alice_won =
            next(grammar::flip_result(i), Party::Referee, MessageKind::FlipResult).payload == "A";
        path += alice_won ? 'W' : 'L';
        node = alice_won ? &node->win_child() : &node->lose_child();
    }
    std::uint64_t seq = grammar::tail(i);
    int c = a;
    if (node->kind() == NodeKind::BobWins)
        c = next(seq++, Party::Bob, MessageKind::BobBit).payload == "1";
    for (Party p : {Party::Alice, Party::Bob}) {
        const Message& out = next(seq++, p, MessageKind::Output);
        if (out.payload != std::to_string(c))
            throw ProtocolViolation("OUTPUT disagrees with the recomputed coin", out.seq);
    }
    if (at != ms.size()) throw MalformedTranscript("surplus records after OUTPUT");
    const ScfOutcome outcome = outcome_from_bit(c);
    if (t.outcome && *t.outcome != outcome)
        throw ProtocolViolation("recorded OUTCOME disagrees with the records", ms.back().seq);
    return outcome;
}

/// Record counts of a finished session, by kind.
struct MessageCounts {
    std::uint64_t commit = 0, flip_req = 0, flip_result = 0, bob_bit = 0, output = 0, abort = 0;

    static MessageCounts of(const Transcript& t) {
        MessageCounts c;
        for (const auto& m : t.messages) {
            switch (m.kind) {
            case MessageKind::CommitA: ++c.commit; break;
            case MessageKind::FlipReq: ++c.flip_req; break;
            case MessageKind::FlipResult: ++c.flip_result; break;
            case MessageKind::BobBit: ++c.bob_bit; break;
            case MessageKind::Output: ++c.output; break;
            case MessageKind::Abort: ++c.abort; break;
            }
        }
        return c;
    }

    /// 1 COMMIT_A + 2d FLIP_REQ + d FLIP_RESULT + (0|1) BOB_BIT + 2 OUTPUT over a
    /// d-flip active path, BOB_BIT present exactly when Bob won the WCF.
    bool matches_accounting(bool bob_won) const {
        const std::uint64_t d = flip_result;
        return abort == 0 && commit == 1 && flip_req == 2 * d && bob_bit == (bob_won ? 1u : 0u) &&
               output == 2;
    }
};

struct LoopbackRun {
    std::vector<SessionResult> alice;
    std::vector<SessionResult> bob;
    std::uint64_t referee_completed = 0;
};

/// Runs `count` sessions between three endpoints on 127.0.0.1 over TCP: one connection
/// per endpoint pair, sessions sequential on those connections. The referee samples
/// with the declared cheater's strategy, if any.
inline LoopbackRun run_loopback_sessions(const ScfProtocol& protocol, std::size_t count,
                                         std::uint64_t seed,
                                         const ScfStrategy& alice_strategy = ScfStrategy::honest(),
                                         const ScfStrategy& bob_strategy = ScfStrategy::honest(),
                                         SessionOptions options = {}) {
    const WcfStrategy& declared = alice_strategy.is_cheat() ? alice_strategy.wcf : bob_strategy.wcf;
    Referee referee(protocol, declared, seed, options);
    TcpListener ref_listener(Address{"127.0.0.1", 0});
    TcpListener bob_listener(Address{"127.0.0.1", 0});
    const std::uint64_t fp = protocol_fingerprint(protocol);

    LoopbackRun out;
    std::exception_ptr ref_error, alice_error, bob_error;

    std::thread ref_thread([&] {
        try {
            auto c1 = std::make_unique<FdChannel>(ref_listener.accept(options.timeout));
            auto c2 = std::make_unique<FdChannel>(ref_listener.accept(options.timeout));
            std::thread t([&] { referee.serve(*c1); });
            referee.serve(*c2);
            t.join();
        } catch (...) {
            ref_error = std::current_exception();
        }
    });
    std::thread bob_thread([&] {
        try {
            FdChannel peer = bob_listener.accept(options.timeout);
            FdChannel ref = tcp_connect(ref_listener.address(), options.timeout);
            handshake(peer, Party::Bob, fp, options.timeout);
            handshake(ref, Party::Bob, fp, options.timeout);
            PartyEndpoint bob(Role::Bob, peer, ref, protocol, bob_strategy, options);
            for (std::size_t i = 0; i < count; ++i)
                out.bob.push_back(bob.run("s" + std::to_string(i), seed));
        } catch (...) {
            bob_error = std::current_exception();
        }
    });
    try {
        FdChannel peer = tcp_connect(bob_listener.address(), options.timeout);
        FdChannel ref = tcp_connect(ref_listener.address(), options.timeout);
        handshake(peer, Party::Alice, fp, options.timeout);
        handshake(ref, Party::Alice, fp, options.timeout);
        PartyEndpoint alice(Role::Alice, peer, ref, protocol, alice_strategy, options);
        for (std::size_t i = 0; i < count; ++i)
            out.alice.push_back(alice.run("s" + std::to_string(i), seed));
    } catch (...) {
        alice_error = std::current_exception();
    }
    bob_thread.join();
    ref_thread.join();
    for (auto e : {alice_error, bob_error, ref_error})
        if (e) std::rethrow_exception(e);
    out.referee_completed = referee.sessions_completed();
    return out;
}

} // namespace coinflip
