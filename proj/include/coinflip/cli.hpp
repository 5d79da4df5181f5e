#pragma once

#include <CLI11.hpp>

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "coinflip/analysis.hpp"
#include "coinflip/builder.hpp"
#include "coinflip/channel.hpp"
#include "coinflip/constants.hpp"
#include "coinflip/error.hpp"
#include "coinflip/report.hpp"
#include "coinflip/session.hpp"
#include "coinflip/simulate.hpp"
#include "coinflip/transcript.hpp"
#include "coinflip/tree.hpp"

namespace coinflip::cli {

enum ExitCode : int { Ok = 0, BoundViolation = 1, Usage = 2, Transport = 3 };

/// Flat configuration shared by every subcommand; also readable from a
/// `key = value` file via --config.
struct Config {
    std::string z = "optimal";
    std::string k = "auto";
    std::string eps = "0";
    std::optional<std::uint64_t> rounds_n; ///< unset: rounds are reported with N symbolic
    std::uint64_t seed = 1;
    std::uint64_t trials = 1'000'000;
    std::string output = "table";
    std::string p;    ///< override of Bob's echo probability
    std::string tree; ///< explicit tree instead of z/k
    unsigned workers = 0;
};

/// Extra bits of precision of the 2 - sqrt(2) proxy beyond the bisection depth.
inline constexpr unsigned proxy_margin_bits = 8;

struct Resolved {
    Rational z;
    BaseParams base;
    UnbalancedWcf wcf;
    std::optional<AsymptoticBounds> asymptotic;
};

inline Probability parse_probability(const std::string& text, const char* what) {
    Rational r = parse_rational(text);
    if (r < 0 || r > 1) throw DomainError(std::string(what) + " must lie in [0,1], got " + text);
    return Probability(r);
}

inline OutputFormat output_format(const Config& c) {
    if (c.output == "table") return OutputFormat::Table;
    if (c.output == "lines") return OutputFormat::Lines;
    throw DomainError("output must be 'table' or 'lines'");
}

/// Resolves z, k and eps into a built protocol. k = auto uses
/// 2 * ceil(log2(1/eps)); z = optimal uses a convergent of 2 - sqrt(2) within 2^-(k+8).
inline Resolved resolve(const Config& c) {
    Resolved r;
    r.base.eps = parse_probability(c.eps, "eps");
    r.base.rounds_n = c.rounds_n.value_or(1);
    r.base.validate();
    if (!c.tree.empty()) {
        r.wcf = from_tree(parse_tree(c.tree), r.base);
        r.z = r.wcf.x.value();
        return r;
    }
    unsigned k = 0;
    if (c.k == "auto") {
        if (!(r.base.eps > Probability::zero()))
            throw DomainError("k = auto needs eps > 0");
        r.asymptotic = asymptotic_bounds(r.base.eps, r.base.rounds_n);
        k = r.asymptotic->k;
    } else {
        Rational kr = parse_rational(c.k);
        if (denominator_of(kr) != 1 || kr < 0 || kr > 4096)
            throw DomainError("k must be an integer in [0, 4096] or 'auto'");
        k = numerator_of(kr).convert_to<unsigned>();
    }
    r.z = c.z == "optimal" ? two_minus_sqrt2_proxy(k + proxy_margin_bits) : parse_rational(c.z);
    r.wcf = build_unbalanced(r.z, k, r.base).first;
    return r;
}

inline ScfProtocol protocol_of(const Resolved& r, const Config& c) {
    ScfProtocol s = make_scf(r.wcf, Probability(r.z));
    if (!c.p.empty()) s.p = parse_probability(c.p, "p");
    return s;
}

inline int cmd_build(const Config& c, std::ostream& out) {
    Resolved r = resolve(c);
    const auto& q = r.wcf;
    Row row;
    row.add("tree", to_string(q.tree))
        .add("z", r.z)
        .add("x", q.x)
        .add("eps0", q.bias_bound)
        .add("k", std::to_string(q.k))
        .add("depth", std::to_string(depth(q.tree)))
        .add("rounds", format_rounds(depth(q.tree), 0, c.rounds_n));
    emit(out, {row}, output_format(c));
    return Ok;
}

inline int cmd_analyze(const Config& c, std::ostream& out) {
    Resolved r = resolve(c);
    Analysis a = analyze(r.z, protocol_of(r, c));
    Row row = analysis_row(a, c.rounds_n);
    bool ok = a.within_bounds();
    if (r.asymptotic) {
        row.add("cert_A", r.asymptotic->pa_bound).add("cert_B", r.asymptotic->pb_bound);
        ok = ok && a.alice.optimal.value() <= r.asymptotic->pa_bound &&
             a.bob.optimal.value() <= r.asymptotic->pb_bound;
    }
    row.add("p", a.protocol.p).add("ok", ok ? "1" : "0");
    emit(out, {row}, output_format(c));
    return ok ? Ok : BoundViolation;
}

/// Eps grid: z = optimal, k = 2 ceil(log2(1/eps)) for eps = 2^-min_exp .. 2^-max_exp;
/// a row passes when max cheat <= 1/sqrt(2) + 1.5 eps (against the lower enclosure of
/// 1/sqrt(2)) and each cheat is below its certified asymptotic bound.
inline int cmd_table(const Config& c, unsigned min_exp, unsigned max_exp, std::ostream& out) {
    if (min_exp < 2 || max_exp < min_exp || max_exp > 40)
        throw DomainError("eps exponents must satisfy 2 <= min <= max <= 40");
    const Rational inv_sqrt2_lo = inv_sqrt2_enclosure(64).lo;
    std::vector<Row> rows;
    bool all = true;
    for (unsigned e = min_exp; e <= max_exp; ++e) {
        Config ce = c;
        ce.z = "optimal";
        ce.k = "auto";
        ce.eps = "1/" + (Integer(1) << e).str();
        ce.p.clear();
        ce.tree.clear();
        Resolved r = resolve(ce);
        Analysis a = analyze(r.z, protocol_of(r, ce));
        const Rational limit = inv_sqrt2_lo + Rational(3, 2) * r.base.eps.value();
        const bool pass = a.within_bounds() && a.worst() <= limit &&
                          a.alice.optimal.value() <= r.asymptotic->pa_bound &&
                          a.bob.optimal.value() <= r.asymptotic->pb_bound;
        all = all && pass;
        Row row = analysis_row(a, c.rounds_n);
        row.add("cert_A", r.asymptotic->pa_bound)
            .add("cert_B", r.asymptotic->pb_bound)
            .add("limit", limit)
            .add("pass", pass ? "1" : "0");
        rows.push_back(std::move(row));
    }
    emit(out, rows, output_format(c));
    return all ? Ok : BoundViolation;
}

struct SweepCounts {
    std::uint64_t cells = 0;
    std::uint64_t violations = 0;
};

/// z in {i/32}, k in 1..16, eps in {0, 2^-10, 2^-6, 1/10}: every WCF and SCF bound.
inline SweepCounts bound_sweep(std::ostream* violations_out) {
    SweepCounts n;
    const std::vector<Rational> grid_eps = {0, pow2(-10), pow2(-6), Rational(1, 10)};
    for (const Rational& eps : grid_eps) {
        BaseParams base{Probability(eps), 1};
        for (unsigned k = 1; k <= 16; ++k) {
            for (int i = 0; i <= 32; ++i) {
                const Rational z(i, 32);
                UnbalancedWcf q = build_unbalanced(z, k, base).first;
                ++n.cells;
                const Rational s = q.x.value() + q.bias_bound.value();
                bool ok;
                if (s > 1) {
                    // optimal_p undefined; only the WCF guarantees apply
                    WcfCheat wa = cheat_wcf(q.tree, Role::Alice, base.eps);
                    WcfCheat wb = cheat_wcf(q.tree, Role::Bob, base.eps);
                    ok = wa.max.value() <= s && wb.max.value() <= 1 - q.x.value() + q.bias_bound.value();
                } else {
                    ok = analyze(z, make_scf(q, Probability(z))).within_bounds();
                }
                if (!ok) {
                    ++n.violations;
                    if (violations_out)
                        *violations_out << "violation\tz=" << to_fraction(z) << "\tk=" << k
                                        << "\teps=" << to_fraction(eps) << '\n';
                }
            }
        }
    }
    return n;
}

inline int cmd_sweep(const Config& c, std::ostream& out) {
    SweepCounts n = bound_sweep(&out);
    Row row;
    row.add("cells", std::to_string(n.cells)).add("violations", std::to_string(n.violations));
    emit(out, {row}, output_format(c));
    return n.violations == 0 ? Ok : BoundViolation;
}

/// Monte Carlo cross-checks of the configured protocol against its exact analysis.
inline std::vector<ExperimentResult> simulate_all(const ScfProtocol& protocol, std::uint64_t trials,
                                                  std::uint64_t seed, EstimateOptions opt = {}) {
    const auto& q = protocol.wcf;
    std::vector<ExperimentResult> results;
    {
        WcfSampler s(q.tree, WcfStrategy::honest(), WcfStrategy::honest(), q.base.eps);
        results.push_back(run_experiment(
            "honest_wcf", [&](CounterRng& g) { return s.sample(g) == WcfOutcome::AliceWins; }, q.x,
            trials, seed, opt));
    }
    {
        ScfSampler s(protocol, ScfStrategy::honest(), ScfStrategy::honest());
        results.push_back(run_experiment(
            "honest_scf", [&](CounterRng& g) { return s.sample(g) == ScfOutcome::Zero; },
            scf_honest_distribution(protocol).first, trials, seed + 1, opt));
    }
    {
        WcfCheat w = cheat_wcf(q.tree, Role::Alice, q.base.eps);
        WcfSampler s(q.tree, WcfStrategy::from_endpoints(Role::Alice, w.argmax, q.base.eps),
                     WcfStrategy::honest(), q.base.eps);
        results.push_back(run_experiment(
            "cheat_wcf_alice", [&](CounterRng& g) { return s.sample(g) == WcfOutcome::AliceWins; },
            w.max, trials, seed + 2, opt));
    }
    for (Role role : {Role::Alice, Role::Bob}) {
        ScfStrategy cheat = ScfStrategy::optimal(protocol, role, 0);
        ScfSampler s(protocol, role == Role::Alice ? cheat : ScfStrategy::honest(),
                     role == Role::Bob ? cheat : ScfStrategy::honest());
        results.push_back(run_experiment(
            role == Role::Alice ? "cheat_scf_alice" : "cheat_scf_bob",
            [&](CounterRng& g) { return s.sample(g) == ScfOutcome::Zero; },
            cheat_scf(protocol, role).optimal, trials, seed + (role == Role::Alice ? 3 : 4), opt));
    }
    return results;
}

inline int cmd_simulate(const Config& c, std::ostream& out) {
    if (c.trials < 1) throw DomainError("trials must be >= 1");
    Resolved r = resolve(c);
    EstimateOptions opt;
    opt.workers = c.workers;
    auto results = simulate_all(protocol_of(r, c), c.trials, c.seed, opt);
    std::vector<Row> rows;
    bool all = true;
    for (const auto& e : results) {
        rows.push_back(experiment_row(e));
        all = all && e.pass();
    }
    emit(out, rows, output_format(c));
    return all ? Ok : BoundViolation;
}

struct SessionArgs {
    std::string role = "loopback";
    std::string listen;
    std::string peer;
    std::string referee;
    std::uint64_t sessions = 1;
    std::string transcripts; ///< directory for one file per session
    std::uint64_t timeout_ms = 5000;
};

inline void write_transcript_file(const std::string& dir, const std::string& sid,
                                  std::string_view who, const Transcript& t) {
    if (dir.empty()) return;
    std::filesystem::create_directories(dir);
    std::ofstream f(std::filesystem::path(dir) / (sid + "." + std::string(who) + ".tsv"));
    write_transcript(f, t);
}

inline Row session_row(const std::string& sid, const SessionResult& s,
                       const ScfProtocol& protocol) {
    std::string replayed;
    try {
        replayed = std::string(to_string(replay(s.transcript, protocol)));
    } catch (const Error& e) {
        replayed = "error";
    }
    Row row;
    row.add("session", sid)
        .add("outcome", std::string(to_string(s.outcome)))
        .add("replay", replayed)
        .add("messages", std::to_string(s.transcript.messages.size()))
        .add("failure", s.failure.value_or("-"));
    return row;
}

inline int cmd_session(const Config& c, const SessionArgs& a, std::ostream& out) {
    Resolved r = resolve(c);
    const ScfProtocol protocol = protocol_of(r, c);
    SessionOptions opt;
    opt.timeout = std::chrono::milliseconds(a.timeout_ms);
    const std::uint64_t fp = protocol_fingerprint(protocol);
    const OutputFormat fmt = output_format(c);

    if (a.role == "loopback") {
        LoopbackRun run = run_loopback_sessions(protocol, a.sessions, c.seed,
                                                ScfStrategy::honest(), ScfStrategy::honest(), opt);
        std::uint64_t aborts = 0, disagree = 0, replay_ok = 0, accounting_ok = 0, zeros = 0;
        for (std::size_t i = 0; i < run.alice.size(); ++i) {
            const auto& al = run.alice[i];
            const auto& bo = run.bob[i];
            const std::string sid = "s" + std::to_string(i);
            write_transcript_file(a.transcripts, sid, "alice", al.transcript);
            write_transcript_file(a.transcripts, sid, "bob", bo.transcript);
            if (al.outcome == ScfOutcome::Abort || bo.outcome == ScfOutcome::Abort) ++aborts;
            if (al.outcome != bo.outcome) ++disagree;
            if (al.outcome == ScfOutcome::Zero) ++zeros;
            MessageCounts m = MessageCounts::of(al.transcript);
            if (m.matches_accounting(m.bob_bit == 1)) ++accounting_ok;
            try {
                if (replay(al.transcript, protocol) == al.outcome &&
                    replay(bo.transcript, protocol) == bo.outcome)
                    ++replay_ok;
            } catch (const Error&) {
            }
        }
        Row row;
        row.add("sessions", std::to_string(run.alice.size()))
            .add("aborts", std::to_string(aborts))
            .add("disagree", std::to_string(disagree))
            .add("accounting_ok", std::to_string(accounting_ok))
            .add("replay_ok", std::to_string(replay_ok))
            .add("zeros", std::to_string(zeros))
            .add("rounds_formula", format_rounds(r.wcf.k, 2, c.rounds_n));
        emit(out, {row}, fmt);
        const bool ok = aborts == 0 && disagree == 0 && replay_ok == run.alice.size() &&
                        accounting_ok == run.alice.size();
        return ok ? Ok : BoundViolation;
    }

    if (a.role == "referee") {
        if (a.listen.empty()) throw DomainError("referee needs --listen host:port");
        Referee referee(protocol, WcfStrategy::honest(), c.seed, opt);
        TcpListener listener(Address::parse(a.listen));
        // one Alice/Bob pair; the accept wait is generous so peers can start later
        auto c1 = std::make_unique<FdChannel>(listener.accept(std::chrono::minutes(10)));
        auto c2 = std::make_unique<FdChannel>(listener.accept(std::chrono::minutes(10)));
        std::thread t([&] { referee.serve(*c1); });
        referee.serve(*c2);
        t.join();
        Row row;
        row.add("role", "referee").add("sessions_completed", std::to_string(referee.sessions_completed()));
        emit(out, {row}, fmt);
        return Ok;
    }

    const bool alice = a.role == "alice";
    if (!alice && a.role != "bob")
        throw DomainError("role must be alice, bob, referee or loopback");
    if (a.referee.empty()) throw DomainError("--referee host:port is required");
    std::optional<FdChannel> peer;
    if (alice) {
        if (a.peer.empty()) throw DomainError("alice needs --peer host:port (Bob's listener)");
        peer.emplace(tcp_connect(Address::parse(a.peer), std::chrono::seconds(30)));
    } else {
        if (a.listen.empty()) throw DomainError("bob needs --listen host:port");
        TcpListener listener(Address::parse(a.listen));
        peer.emplace(listener.accept(std::chrono::minutes(10)));
    }
    FdChannel ref = tcp_connect(Address::parse(a.referee), std::chrono::seconds(30));
    const Party self = alice ? Party::Alice : Party::Bob;
    handshake(*peer, self, fp, opt.timeout);
    handshake(ref, self, fp, opt.timeout);
    PartyEndpoint ep(alice ? Role::Alice : Role::Bob, *peer, ref, protocol, ScfStrategy::honest(), opt);
    std::vector<Row> rows;
    bool transport_failure = false;
    for (std::uint64_t i = 0; i < a.sessions; ++i) {
        const std::string sid = "s" + std::to_string(i);
        SessionResult s = ep.run(sid, c.seed);
        write_transcript_file(a.transcripts, sid, to_string(self), s.transcript);
        rows.push_back(session_row(sid, s, protocol));
        if (s.failure == "ChannelError") {
            transport_failure = true;
            break;
        }
    }
    emit(out, rows, fmt);
    return transport_failure ? Transport : Ok;
}

inline int cmd_replay(const Config& c, const std::string& path, std::ostream& out) {
    Resolved r = resolve(c);
    const ScfProtocol protocol = protocol_of(r, c);
    std::ifstream f(path);
    if (!f) throw DomainError("cannot open transcript " + path);
    Transcript t = read_transcript(f);
    ScfOutcome o = replay(t, protocol);
    Row row;
    row.add("transcript", path).add("outcome", std::string(to_string(o)));
    emit(out, {row}, output_format(c));
    return Ok;
}

/// Entry point; args exclude the program name. Returns the process exit code.
inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Strong coin flipping from weak coin flipping: build, analyze, simulate, run"};
    app.require_subcommand(1);
    app.fallthrough();
    app.set_config("--config", "", "flat key = value file with the options below");

    Config c;
    std::uint64_t rounds_n = 0;
    app.add_option("--z", c.z, "target Pr[Alice wins the WCF]: rational, decimal or 'optimal'");
    app.add_option("--k", c.k, "bisection steps, or 'auto'");
    app.add_option("--eps", c.eps, "bias of the balanced base flip");
    auto* rn = app.add_option("--rounds_n,--rounds-n", rounds_n, "rounds N of the base flip (default: symbolic)");
    app.add_option("--seed", c.seed, "64-bit RNG seed");
    app.add_option("--trials", c.trials, "Monte Carlo trials");
    app.add_option("--output", c.output, "table | lines");
    app.add_option("--p", c.p, "override Bob's echo probability");
    app.add_option("--tree", c.tree, "explicit protocol tree, e.g. F(A,B)");
    app.add_option("--workers", c.workers, "simulation threads (0: all cores)");

    auto* build = app.add_subcommand("build", "construct the unbalanced WCF tree");
    auto* analyze_cmd = app.add_subcommand("analyze", "exact optimal cheating for both roles");
    auto* table = app.add_subcommand("table", "cheating probability over an eps grid");
    unsigned min_exp = 4, max_exp = 12;
    table->add_option("--min-exp", min_exp, "smallest e in eps = 2^-e");
    table->add_option("--max-exp", max_exp, "largest e in eps = 2^-e");
    auto* sweep = app.add_subcommand("sweep", "bound dominance over the z/k/eps grid");
    auto* simulate = app.add_subcommand("simulate", "Monte Carlo cross-check against the exact values");
    auto* session = app.add_subcommand("session", "run the protocol between networked endpoints");
    SessionArgs sa;
    session->add_option("--role", sa.role, "alice | bob | referee | loopback");
    session->add_option("--listen", sa.listen, "host:port to accept on (bob, referee)");
    session->add_option("--peer", sa.peer, "Bob's host:port (alice)");
    session->add_option("--referee", sa.referee, "referee host:port (alice, bob)");
    session->add_option("--sessions", sa.sessions, "number of sessions");
    session->add_option("--transcripts", sa.transcripts, "directory for transcript files");
    session->add_option("--timeout-ms", sa.timeout_ms, "per-record timeout");
    auto* replay_cmd = app.add_subcommand("replay", "recompute the outcome of a transcript file");
    std::string transcript_path;
    replay_cmd->add_option("transcript", transcript_path, "transcript file")->required();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return Ok;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return Usage;
    }
    if (rn->count() > 0) {
        if (rounds_n < 1) {
            err << "error: rounds_n must be >= 1\n";
            return Usage;
        }
        c.rounds_n = rounds_n;
    }

    try {
        if (*build) return cmd_build(c, out);
        if (*analyze_cmd) return cmd_analyze(c, out);
        if (*table) return cmd_table(c, min_exp, max_exp, out);
        if (*sweep) return cmd_sweep(c, out);
        if (*simulate) return cmd_simulate(c, out);
        if (*session) return cmd_session(c, sa, out);
        if (*replay_cmd) return cmd_replay(c, transcript_path, out);
    } catch (const ChannelError& e) {
        err << "transport error: " << e.what() << '\n';
        return Transport;
    } catch (const Timeout& e) {
        err << "timeout: " << e.what() << '\n';
        return Transport;
    } catch (const ProtocolViolation& e) {
        err << "protocol violation at seq " << e.seq() << ": " << e.what() << '\n';
        return BoundViolation;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return Usage;
    }
    return Usage;
}

} // namespace coinflip::cli
