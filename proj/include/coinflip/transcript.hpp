#pragma once

#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "coinflip/error.hpp"
#include "coinflip/outcome.hpp"

namespace coinflip {

enum class Party { Alice, Bob, Referee };

enum class MessageKind { CommitA, FlipReq, FlipResult, BobBit, Output, Abort };

constexpr std::string_view to_string(Party p) noexcept {
    switch (p) {
    case Party::Alice: return "alice";
    case Party::Bob: return "bob";
    case Party::Referee: return "referee";
    }
    return "?";
}

constexpr std::string_view to_string(MessageKind k) noexcept {
    switch (k) {
    case MessageKind::CommitA: return "COMMIT_A";
    case MessageKind::FlipReq: return "FLIP_REQ";
    case MessageKind::FlipResult: return "FLIP_RESULT";
    case MessageKind::BobBit: return "BOB_BIT";
    case MessageKind::Output: return "OUTPUT";
    case MessageKind::Abort: return "ABORT";
    }
    return "?";
}

constexpr Party party_of(Role r) noexcept { return r == Role::Alice ? Party::Alice : Party::Bob; }

inline std::optional<Party> parse_party(std::string_view s) {
    if (s == "alice") return Party::Alice;
    if (s == "bob") return Party::Bob;
    if (s == "referee") return Party::Referee;
    return std::nullopt;
}

inline std::optional<MessageKind> parse_kind(std::string_view s) {
    for (auto k : {MessageKind::CommitA, MessageKind::FlipReq, MessageKind::FlipResult,
                   MessageKind::BobBit, MessageKind::Output, MessageKind::Abort})
        if (s == to_string(k)) return k;
    return std::nullopt;
}

/// One wire record. Payloads: `0`/`1` for COMMIT_A, BOB_BIT and OUTPUT; a path over
/// {W,L} for FLIP_REQ (empty at the root); `A`/`B` for FLIP_RESULT; a reason token
/// for ABORT.
struct Message {
    std::string session_id;
    std::uint64_t seq = 0;
    Party sender = Party::Alice;
    MessageKind kind = MessageKind::Abort;
    std::string payload;

    friend bool operator==(const Message&, const Message&) = default;
};

/// Sequence numbers fixed by the session grammar. Flip i on the active path occupies
/// three slots; `tail(d)` is the first slot after d flips.
namespace grammar {
constexpr std::uint64_t commit() noexcept { return 0; }
constexpr std::uint64_t flip_req(Party p, std::uint64_t i) noexcept {
    return 1 + 3 * i + (p == Party::Bob ? 1 : 0);
}
constexpr std::uint64_t flip_result(std::uint64_t i) noexcept { return 3 + 3 * i; }
constexpr std::uint64_t tail(std::uint64_t flips) noexcept { return 1 + 3 * flips; }
} // namespace grammar

struct Transcript {
    std::vector<Message> messages;
    std::optional<ScfOutcome> outcome;
};

namespace detail {

inline bool valid_token(std::string_view s, bool allow_empty) {
    if (s.empty()) return allow_empty;
    for (char c : s)
        if (c == '\t' || c == '\n' || c == '\r' || c < 0x20 || c > 0x7e) return false;
    return true;
}

inline bool valid_payload(MessageKind kind, std::string_view p) {
    switch (kind) {
    case MessageKind::CommitA:
    case MessageKind::BobBit:
    case MessageKind::Output: return p == "0" || p == "1";
    case MessageKind::FlipReq:
        for (char c : p)
            if (c != 'W' && c != 'L') return false;
        return true;
    case MessageKind::FlipResult: return p == "A" || p == "B";
    case MessageKind::Abort: return valid_token(p, false);
    }
    return false;
}

inline std::vector<std::string_view> split_tabs(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    for (;;) {
        std::size_t tab = line.find('\t', start);
        fields.push_back(line.substr(start, tab - start));
        if (tab == std::string_view::npos) break;
        start = tab + 1;
    }
    return fields;
}

} // namespace detail

/// `SESSIONID\tSEQ\tSENDER\tKIND\tPAYLOAD`, without the trailing newline.
inline std::string encode(const Message& m) {
    std::string out = m.session_id;
    out += '\t';
    out += std::to_string(m.seq);
    out += '\t';
    out += to_string(m.sender);
    out += '\t';
    out += to_string(m.kind);
    out += '\t';
    out += m.payload;
    return out;
}

/// Inverse of encode. Throws MalformedTranscript on any deviation from the record format.
inline Message decode(std::string_view line) {
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    auto fields = detail::split_tabs(line);
    if (fields.size() != 5)
        throw MalformedTranscript("record needs 5 tab-separated fields: '" + std::string(line) + "'");
    Message m;
    if (!detail::valid_token(fields[0], false))
        throw MalformedTranscript("bad session id in '" + std::string(line) + "'");
    m.session_id = std::string(fields[0]);
    if (fields[1].empty() || fields[1].size() > 19)
        throw MalformedTranscript("bad seq in '" + std::string(line) + "'");
    for (char c : fields[1])
        if (c < '0' || c > '9') throw MalformedTranscript("bad seq in '" + std::string(line) + "'");
    m.seq = std::stoull(std::string(fields[1]));
    auto sender = parse_party(fields[2]);
    if (!sender) throw MalformedTranscript("bad sender in '" + std::string(line) + "'");
    m.sender = *sender;
    auto kind = parse_kind(fields[3]);
    if (!kind) throw MalformedTranscript("bad kind in '" + std::string(line) + "'");
    m.kind = *kind;
    if (!detail::valid_payload(m.kind, fields[4]))
        throw MalformedTranscript("bad payload in '" + std::string(line) + "'");
    m.payload = std::string(fields[4]);
    return m;
}

/// One session per file; records in order, then `OUTCOME\t<0|1|ABORT>`.
inline void write_transcript(std::ostream& os, const Transcript& t) {
    for (const auto& m : t.messages) os << encode(m) << '\n';
    if (t.outcome) os << "OUTCOME\t" << to_string(*t.outcome) << '\n';
}

inline Transcript read_transcript(std::istream& is) {
    Transcript t;
    std::string line;
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (t.outcome) throw MalformedTranscript("records after OUTCOME line");
        if (line.rfind("OUTCOME\t", 0) == 0) {
            std::string_view v = std::string_view(line).substr(8);
            if (v == "0") t.outcome = ScfOutcome::Zero;
            else if (v == "1") t.outcome = ScfOutcome::One;
            else if (v == "ABORT") t.outcome = ScfOutcome::Abort;
            else throw MalformedTranscript("bad OUTCOME line: '" + line + "'");
            continue;
        }
        t.messages.push_back(decode(line));
    }
    if (!t.messages.empty()) {
        const std::string& sid = t.messages.front().session_id;
        for (std::size_t i = 0; i < t.messages.size(); ++i) {
            if (t.messages[i].session_id != sid)
                throw MalformedTranscript("transcript mixes sessions");
            if (i > 0 && t.messages[i].kind != MessageKind::Abort &&
                t.messages[i].seq <= t.messages[i - 1].seq)
                throw MalformedTranscript("seq not strictly increasing");
        }
    }
    return t;
}

} // namespace coinflip
