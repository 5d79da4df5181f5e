#pragma once

#include <string_view>

namespace coinflip {

enum class Role { Alice, Bob };

enum class WcfOutcome { AliceWins, BobWins, Abort };

enum class ScfOutcome { Zero, One, Abort };

constexpr Role other(Role r) noexcept { return r == Role::Alice ? Role::Bob : Role::Alice; }

constexpr std::string_view to_string(Role r) noexcept {
    return r == Role::Alice ? "alice" : "bob";
}

constexpr std::string_view to_string(WcfOutcome o) noexcept {
    switch (o) {
    case WcfOutcome::AliceWins: return "A";
    case WcfOutcome::BobWins: return "B";
    case WcfOutcome::Abort: return "ABORT";
    }
    return "?";
}

constexpr std::string_view to_string(ScfOutcome o) noexcept {
    switch (o) {
    case ScfOutcome::Zero: return "0";
    case ScfOutcome::One: return "1";
    case ScfOutcome::Abort: return "ABORT";
    }
    return "?";
}

constexpr ScfOutcome outcome_from_bit(int bit) noexcept {
    return bit == 0 ? ScfOutcome::Zero : ScfOutcome::One;
}

} // namespace coinflip
