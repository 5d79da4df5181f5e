#pragma once

#include <boost/multiprecision/gmp.hpp>

#include <compare>
#include <cstdint>
#include <ostream>
#include <string>
#include <string_view>

#include "coinflip/error.hpp"

namespace coinflip {

using Integer = boost::multiprecision::number<boost::multiprecision::gmp_int,
                                              boost::multiprecision::et_off>;
using Rational = boost::multiprecision::number<boost::multiprecision::gmp_rational,
                                               boost::multiprecision::et_off>;

/// 2^e as an exact rational, for any sign of e.
inline Rational pow2(int e) {
    Integer p = 1;
    unsigned n = e < 0 ? static_cast<unsigned>(-e) : static_cast<unsigned>(e);
    p <<= n;
    return e < 0 ? Rational(Integer(1), p) : Rational(p);
}

inline Integer numerator_of(const Rational& r) { return boost::multiprecision::numerator(r); }
inline Integer denominator_of(const Rational& r) { return boost::multiprecision::denominator(r); }

/// True when the reduced denominator of r divides 2^k.
inline bool is_dyadic(const Rational& r, unsigned k) {
    Integer d = denominator_of(r);
    unsigned shift = 0;
    while (!boost::multiprecision::bit_test(d, 0)) {
        d >>= 1;
        ++shift;
    }
    return d == 1 && shift <= k;
}

/// Round-half-away-from-zero decimal rendering with a fixed number of fractional digits.
inline std::string to_decimal(const Rational& r, unsigned digits = 12) {
    Integer scale = 1;
    for (unsigned i = 0; i < digits; ++i) scale *= 10;
    const bool negative = r < 0;
    Rational a = negative ? Rational(-r) : r;
    Rational scaled = a * Rational(scale) + Rational(Integer(1), Integer(2));
    Integer q = numerator_of(scaled) / denominator_of(scaled);
    Integer whole = q / scale;
    Integer frac = q % scale;
    std::string f = frac.str();
    std::string out = negative && q != 0 ? "-" : "";
    out += whole.str();
    if (digits > 0) {
        out += '.';
        out += std::string(digits - f.size(), '0');
        out += f;
    }
    return out;
}

/// Canonical "n/d" (or "n" when d = 1).
inline std::string to_fraction(const Rational& r) {
    if (denominator_of(r) == 1) return numerator_of(r).str();
    return numerator_of(r).str() + "/" + denominator_of(r).str();
}

/// Accepts "n", "n/d" and "i.f" forms with an optional sign. Throws ParseError.
inline Rational parse_rational(std::string_view text) {
    auto trim = [](std::string_view s) {
        while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
        while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
        return s;
    };
    std::string_view s = trim(text);
    bool negative = false;
    if (!s.empty() && (s.front() == '-' || s.front() == '+')) {
        negative = s.front() == '-';
        s.remove_prefix(1);
    }
    auto digits_only = [](std::string_view d) {
        if (d.empty()) return false;
        for (char c : d)
            if (c < '0' || c > '9') return false;
        return true;
    };
    Rational value;
    if (auto slash = s.find('/'); slash != std::string_view::npos) {
        std::string_view n = s.substr(0, slash), d = s.substr(slash + 1);
        if (!digits_only(n) || !digits_only(d))
            throw ParseError("not a rational: '" + std::string(text) + "'");
        Integer den{std::string(d)};
        if (den == 0) throw ParseError("zero denominator: '" + std::string(text) + "'");
        value = Rational(Integer(std::string(n)), den);
    } else if (auto dot = s.find('.'); dot != std::string_view::npos) {
        std::string_view w = s.substr(0, dot), f = s.substr(dot + 1);
        if ((w.empty() && f.empty()) || (!w.empty() && !digits_only(w)) ||
            (!f.empty() && !digits_only(f)))
            throw ParseError("not a decimal: '" + std::string(text) + "'");
        Integer scale = 1;
        for (std::size_t i = 0; i < f.size(); ++i) scale *= 10;
        Integer whole = w.empty() ? Integer(0) : Integer(std::string(w));
        Integer frac = f.empty() ? Integer(0) : Integer(std::string(f));
        value = Rational(whole * scale + frac, scale);
    } else {
        if (!digits_only(s)) throw ParseError("not a number: '" + std::string(text) + "'");
        value = Rational(Integer(std::string(s)));
    }
    return negative ? Rational(-value) : value;
}

/// An exact rational constrained to [0, 1].
///
/// Arithmetic is done on Rational; converting back into a Probability re-checks
/// the range and throws DomainError on violation.
class Probability {
  public:
    Probability() = default;
    Probability(const Rational& v) : value_(v) { // NOLINT(google-explicit-constructor)
        if (v < 0 || v > 1)
            throw DomainError("probability out of [0,1]: " + to_fraction(v));
    }
    Probability(std::int64_t num, std::int64_t den) : Probability(make(num, den)) {}

    static Probability zero() { return Probability(); }
    static Probability one() { return Probability(Rational(1)); }
    static Probability half() { return Probability(1, 2); }

    const Rational& value() const noexcept { return value_; }
    Probability complement() const { return Probability(Rational(1 - value_)); }

    double to_double() const { return value_.convert_to<double>(); }
    std::string fraction() const { return to_fraction(value_); }
    std::string decimal(unsigned digits = 12) const { return to_decimal(value_, digits); }

    friend bool operator==(const Probability& a, const Probability& b) {
        return a.value_ == b.value_;
    }
    friend std::strong_ordering operator<=>(const Probability& a, const Probability& b) {
        if (a.value_ < b.value_) return std::strong_ordering::less;
        if (a.value_ > b.value_) return std::strong_ordering::greater;
        return std::strong_ordering::equal;
    }
    friend std::ostream& operator<<(std::ostream& os, const Probability& p) {
        return os << p.fraction();
    }

  private:
    static Rational make(std::int64_t num, std::int64_t den) {
        if (den == 0) throw DomainError("zero denominator");
        return Rational(Integer(num), Integer(den));
    }

    Rational value_{0};
};

} // namespace coinflip
