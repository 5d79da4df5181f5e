#pragma once

#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "coinflip/analysis.hpp"
#include "coinflip/builder.hpp"
#include "coinflip/probability.hpp"
#include "coinflip/simulate.hpp"

namespace coinflip {

/// A result record rendered either as a tab-separated table row or as a
/// `key=value` line. Exact cells show as `n/d (0.dddddddddddd)` in tables and as
/// `key=n/d key_dec=0.dddddddddddd` in lines.
class Row {
  public:
    Row& add(std::string key, std::string text) {
        cells_.push_back({std::move(key), std::move(text), std::nullopt});
        return *this;
    }
    Row& add(std::string key, const Rational& exact) {
        cells_.push_back({std::move(key), {}, exact});
        return *this;
    }
    Row& add(std::string key, const Probability& exact) { return add(std::move(key), exact.value()); }

    std::string header() const {
        std::string out;
        for (std::size_t i = 0; i < cells_.size(); ++i) out += (i ? "\t" : "") + cells_[i].key;
        return out;
    }
    std::string table() const {
        std::string out;
        for (std::size_t i = 0; i < cells_.size(); ++i) {
            if (i) out += '\t';
            const Cell& c = cells_[i];
            out += c.exact ? to_fraction(*c.exact) + " (" + to_decimal(*c.exact) + ")" : c.text;
        }
        return out;
    }
    std::string lines() const {
        std::string out;
        for (std::size_t i = 0; i < cells_.size(); ++i) {
            if (i) out += ' ';
            const Cell& c = cells_[i];
            if (c.exact)
                out += c.key + "=" + to_fraction(*c.exact) + " " + c.key + "_dec=" + to_decimal(*c.exact);
            else
                out += c.key + "=" + c.text;
        }
        return out;
    }

  private:
    struct Cell {
        std::string key;
        std::string text;
        std::optional<Rational> exact;
    };
    std::vector<Cell> cells_;
};

enum class OutputFormat { Table, Lines };

/// Prints rows in the chosen format; tables get one header line.
inline void emit(std::ostream& os, const std::vector<Row>& rows, OutputFormat fmt) {
    if (rows.empty()) return;
    if (fmt == OutputFormat::Table) {
        os << rows.front().header() << '\n';
        for (const auto& r : rows) os << r.table() << '\n';
    } else {
        for (const auto& r : rows) os << r.lines() << '\n';
    }
}

/// "kN+c" with N symbolic, or the number when N is given.
inline std::string format_rounds(std::uint64_t multiple, std::uint64_t constant,
                                 std::optional<std::uint64_t> n) {
    if (n) return std::to_string(multiple * *n + constant);
    std::string out;
    if (multiple == 1) out = "N";
    else if (multiple > 1) out = std::to_string(multiple) + "N";
    if (constant || out.empty()) out += (out.empty() ? "" : "+") + std::to_string(constant);
    return out;
}

/// Both cheating reports for one strong-flip protocol, with the bound checks.
struct Analysis {
    Rational z;
    ScfProtocol protocol;
    WcfCheat wcf_alice;
    WcfCheat wcf_bob;
    CheatReport alice;
    CheatReport bob;

    /// WCF guarantees: each cheater stays within honest value + eps0.
    bool wcf_within_bound() const {
        const auto& q = protocol.wcf;
        return wcf_alice.max.value() <= q.x.value() + q.bias_bound.value() &&
               wcf_bob.max.value() <= 1 - q.x.value() + q.bias_bound.value();
    }
    bool within_bounds() const {
        return wcf_within_bound() && alice.within_bound() && bob.within_bound();
    }
    Rational worst() const { return std::max(alice.optimal.value(), bob.optimal.value()); }
};

inline Analysis analyze(const Rational& z, ScfProtocol protocol) {
    Analysis a{z, std::move(protocol), {}, {}, {}, {}};
    a.wcf_alice = cheat_wcf(a.protocol.wcf.tree, Role::Alice, a.protocol.wcf.base.eps);
    a.wcf_bob = cheat_wcf(a.protocol.wcf.tree, Role::Bob, a.protocol.wcf.base.eps);
    a.alice = cheat_scf(a.protocol, Role::Alice);
    a.bob = cheat_scf(a.protocol, Role::Bob);
    return a;
}

/// `z k eps x eps0 cheat_A bound_A cheat_B bound_B rounds`.
inline Row analysis_row(const Analysis& a, std::optional<std::uint64_t> rounds_n) {
    const auto& q = a.protocol.wcf;
    Row r;
    r.add("z", a.z)
        .add("k", std::to_string(q.k))
        .add("eps", q.base.eps)
        .add("x", q.x)
        .add("eps0", q.bias_bound)
        .add("cheat_A", a.alice.optimal)
        .add("bound_A", a.alice.bound)
        .add("cheat_B", a.bob.optimal)
        .add("bound_B", a.bob.bound)
        .add("rounds", format_rounds(q.k, 2, rounds_n));
    return r;
}

/// `name trials successes point ci exact pass`.
inline Row experiment_row(const ExperimentResult& e) {
    auto fixed = [](double v) {
        std::ostringstream os;
        os.setf(std::ios::fixed);
        os.precision(6);
        os << v;
        return os.str();
    };
    Row r;
    r.add("name", e.name)
        .add("trials", std::to_string(e.estimate.trials))
        .add("successes", std::to_string(e.estimate.successes))
        .add("point", fixed(e.estimate.point))
        .add("ci", fixed(e.estimate.ci_halfwidth))
        .add("exact", e.exact)
        .add("pass", e.pass() ? "1" : "0");
    return r;
}

} // namespace coinflip
