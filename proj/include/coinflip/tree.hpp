#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>

#include "coinflip/error.hpp"
#include "coinflip/probability.hpp"

namespace coinflip {

enum class NodeKind : std::uint8_t { AliceWins, BobWins, BaseFlip };

/// Opaque identity of a tree node. Stable for the lifetime of the tree that owns it.
using NodeId = const void*;

/// A composed weak coin-flipping protocol.
///
/// Leaves are the zero-round protocols where one side always wins. A BaseFlip node is
/// one invocation of the balanced base flip: on AliceWins the protocol continues in
/// win_child, on BobWins in lose_child. Nodes are immutable and shared, so a tree built
/// by repeated composition is a DAG whose expanded size may be exponential in its depth;
/// every traversal below memoizes on node identity.
class WcfTree {
  public:
    WcfTree() : WcfTree(bob_wins()) {}

    static WcfTree alice_wins() {
        static const WcfTree leaf(std::make_shared<const Node>(NodeKind::AliceWins));
        return leaf;
    }
    static WcfTree bob_wins() {
        static const WcfTree leaf(std::make_shared<const Node>(NodeKind::BobWins));
        return leaf;
    }
    static WcfTree base_flip(WcfTree win, WcfTree lose) {
        return WcfTree(std::make_shared<const Node>(std::move(win), std::move(lose)));
    }

    NodeKind kind() const noexcept { return node_->kind; }
    bool is_leaf() const noexcept { return node_->kind != NodeKind::BaseFlip; }
    NodeId id() const noexcept { return node_.get(); }

    const WcfTree& win_child() const {
        if (is_leaf()) throw DomainError("win_child of a leaf");
        return *node_->win;
    }
    const WcfTree& lose_child() const {
        if (is_leaf()) throw DomainError("lose_child of a leaf");
        return *node_->lose;
    }

  private:
    struct Node {
        explicit Node(NodeKind k) : kind(k) {}
        Node(WcfTree w, WcfTree l)
            : kind(NodeKind::BaseFlip),
              win(std::make_unique<WcfTree>(std::move(w))),
              lose(std::make_unique<WcfTree>(std::move(l))) {}
        NodeKind kind;
        std::unique_ptr<WcfTree> win;
        std::unique_ptr<WcfTree> lose;
    };

    explicit WcfTree(std::shared_ptr<const Node> n) : node_(std::move(n)) {}

    std::shared_ptr<const Node> node_;
};

/// Bottom-up fold over the DAG, evaluating each shared node once.
template <class T, class Leaf, class Flip>
T fold_tree(const WcfTree& tree, Leaf&& leaf, Flip&& flip) {
    std::unordered_map<NodeId, T> memo;
    std::function<const T&(const WcfTree&)> go = [&](const WcfTree& t) -> const T& {
        if (auto it = memo.find(t.id()); it != memo.end()) return it->second;
        T value = t.is_leaf() ? leaf(t.kind()) : flip(t, go(t.win_child()), go(t.lose_child()));
        return memo.emplace(t.id(), std::move(value)).first->second;
    };
    return go(tree);
}

/// Pr[Alice wins] under honest play.
inline Probability honest_win_probability(const WcfTree& tree) {
    return fold_tree<Rational>(
        tree, [](NodeKind k) { return Rational(k == NodeKind::AliceWins ? 1 : 0); },
        [](const WcfTree&, const Rational& w, const Rational& l) { return (w + l) / 2; });
}

/// Number of BaseFlip nodes on the longest root-leaf path.
inline unsigned depth(const WcfTree& tree) {
    return fold_tree<unsigned>(
        tree, [](NodeKind) { return 0u; },
        [](const WcfTree&, unsigned w, unsigned l) { return 1 + std::max(w, l); });
}

/// BaseFlip count of the fully expanded tree.
inline std::uint64_t flip_count(const WcfTree& tree) {
    return fold_tree<std::uint64_t>(
        tree, [](NodeKind) { return std::uint64_t{0}; },
        [](const WcfTree&, std::uint64_t w, std::uint64_t l) { return 1 + w + l; });
}

/// Swaps every child pair and both leaf kinds; maps honest value x to 1 - x.
inline WcfTree mirror(const WcfTree& tree) {
    return fold_tree<WcfTree>(
        tree,
        [](NodeKind k) {
            return k == NodeKind::AliceWins ? WcfTree::bob_wins() : WcfTree::alice_wins();
        },
        [](const WcfTree&, const WcfTree& w, const WcfTree& l) {
            return WcfTree::base_flip(l, w);
        });
}

/// Structural equality (independent of node sharing).
inline bool operator==(const WcfTree& a, const WcfTree& b) {
    if (a.id() == b.id()) return true;
    if (a.kind() != b.kind()) return false;
    if (a.is_leaf()) return true;
    return a.win_child() == b.win_child() && a.lose_child() == b.lose_child();
}

/// 64-bit FNV-1a structural hash; equal for structurally equal trees.
inline std::uint64_t structural_hash(const WcfTree& tree) {
    constexpr std::uint64_t offset = 0xcbf29ce484222325ULL;
    constexpr std::uint64_t prime = 0x100000001b3ULL;
    auto mix = [](std::uint64_t h, std::uint64_t v) {
        for (int i = 0; i < 8; ++i) {
            h ^= (v >> (8 * i)) & 0xff;
            h *= prime;
        }
        return h;
    };
    return fold_tree<std::uint64_t>(
        tree,
        [&](NodeKind k) { return mix(offset, k == NodeKind::AliceWins ? 'A' : 'B'); },
        [&](const WcfTree&, std::uint64_t w, std::uint64_t l) {
            return mix(mix(mix(offset, 'F'), w), l);
        });
}

/// Canonical form: `A`, `B`, `F(<win>,<lose>)`, no whitespace.
inline std::string to_string(const WcfTree& tree) {
    std::string out;
    std::function<void(const WcfTree&)> emit = [&](const WcfTree& t) {
        switch (t.kind()) {
        case NodeKind::AliceWins: out += 'A'; break;
        case NodeKind::BobWins: out += 'B'; break;
        case NodeKind::BaseFlip:
            out += "F(";
            emit(t.win_child());
            out += ',';
            emit(t.lose_child());
            out += ')';
            break;
        }
    };
    emit(tree);
    return out;
}

/// Parses the canonical form; whitespace anywhere is ignored. Throws ParseError.
inline WcfTree parse_tree(std::string_view text) {
    constexpr unsigned max_nesting = 4096;
    std::size_t pos = 0;
    auto skip = [&] {
        while (pos < text.size() &&
               (text[pos] == ' ' || text[pos] == '\t' || text[pos] == '\n' || text[pos] == '\r'))
            ++pos;
    };
    auto fail = [&](const std::string& why) -> ParseError {
        return ParseError("tree parse error at offset " + std::to_string(pos) + ": " + why);
    };
    auto expect = [&](char c) {
        skip();
        if (pos >= text.size() || text[pos] != c) throw fail(std::string("expected '") + c + "'");
        ++pos;
    };
    std::function<WcfTree(unsigned)> node = [&](unsigned nesting) -> WcfTree {
        if (nesting > max_nesting) throw fail("nesting too deep");
        skip();
        if (pos >= text.size()) throw fail("unexpected end of input");
        char c = text[pos++];
        if (c == 'A') return WcfTree::alice_wins();
        if (c == 'B') return WcfTree::bob_wins();
        if (c != 'F') {
            --pos;
            throw fail(std::string("unexpected '") + c + "'");
        }
        expect('(');
        WcfTree w = node(nesting + 1);
        expect(',');
        WcfTree l = node(nesting + 1);
        expect(')');
        return WcfTree::base_flip(std::move(w), std::move(l));
    };
    WcfTree t = node(0);
    skip();
    if (pos != text.size()) throw fail("trailing input");
    return t;
}

/// Follows a path over {W, L} from the root (W = win_child). nullopt when the path
/// leaves the tree or contains another character.
inline std::optional<WcfTree> node_at_path(const WcfTree& tree, std::string_view path) {
    WcfTree cur = tree;
    for (char c : path) {
        if (cur.is_leaf() || (c != 'W' && c != 'L')) return std::nullopt;
        cur = c == 'W' ? cur.win_child() : cur.lose_child();
    }
    return cur;
}

} // namespace coinflip
