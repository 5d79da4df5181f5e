#pragma once

#include "coinflip/probability.hpp"

namespace coinflip {

/// Closed rational interval [lo, hi] known to contain an irrational constant.
struct Enclosure {
    Rational lo;
    Rational hi;

    Rational width() const { return hi - lo; }
    bool contains(const Rational& r) const { return lo <= r && r <= hi; }
};

/// sqrt(2) in [lo, lo + 2^-bits], lo = floor(sqrt(2) * 2^bits) / 2^bits.
inline Enclosure sqrt2_enclosure(unsigned bits = 64) {
    Integer scaled = Integer(2) << (2 * bits);
    Integer root = boost::multiprecision::sqrt(scaled);
    Rational lo(root, Integer(1) << bits);
    return {lo, lo + pow2(-static_cast<int>(bits))};
}

/// 1/sqrt(2) = sqrt(2)/2.
inline Enclosure inv_sqrt2_enclosure(unsigned bits = 64) {
    Enclosure s = sqrt2_enclosure(bits + 1);
    return {s.lo / 2, s.hi / 2};
}

/// 2 - sqrt(2).
inline Enclosure two_minus_sqrt2_enclosure(unsigned bits = 64) {
    Enclosure s = sqrt2_enclosure(bits);
    return {2 - s.hi, 2 - s.lo};
}

/// Continued-fraction convergent of 2 - sqrt(2) = [0; 1, 1, 2, 2, 2, ...] whose
/// distance to the true value is certified below 2^-bits.
///
/// For consecutive convergents h_n/q_n, h_{n+1}/q_{n+1} the error of the first is
/// below 1/(q_n q_{n+1}); we stop at the first n where that product exceeds 2^bits.
inline Rational two_minus_sqrt2_proxy(unsigned bits) {
    const Integer limit = Integer(1) << bits;
    auto term = [](unsigned i) -> Integer { return i == 0 ? 0 : (i <= 2 ? 1 : 2); };
    // h_{-1} = 1, h_{-2} = 0; q_{-1} = 0, q_{-2} = 1
    Integer h_prev2 = 0, h_prev1 = 1, q_prev2 = 1, q_prev1 = 0;
    Integer h = 0, q = 1;
    for (unsigned i = 0;; ++i) {
        h = term(i) * h_prev1 + h_prev2;
        q = term(i) * q_prev1 + q_prev2;
        Integer q_next = term(i + 1) * q + q_prev1;
        if (q * q_next > limit) return Rational(h, q);
        h_prev2 = h_prev1;
        h_prev1 = h;
        q_prev2 = q_prev1;
        q_prev1 = q;
    }
}

} // namespace coinflip
