#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "ugmm/errors.hpp"

namespace ugmm {

inline constexpr double kLogTwoPi = 1.8378770664093454835606594728112;  // ln(2*pi)
inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// Log of the normal density N(x; mean, var). var must be strictly positive.
inline double gauss_logpdf(double x, double mean, double var) {
    if (!(var > 0.0)) throw std::invalid_argument("gauss_logpdf: var must be positive");
    const double d = x - mean;
    return -0.5 * (kLogTwoPi + std::log(var)) - d * d / (2.0 * var);
}

/// ln sum exp(v_i), computed as m + ln sum exp(v_i - m) with m = max(v).
/// Entries may be -inf (zero contribution); returns -inf iff all entries are.
inline double logsumexp(std::span<const double> v) {
    if (v.empty()) throw NumericError("logsumexp: empty input");
    double m = kNegInf;
    for (double x : v) m = std::max(m, x);
    if (m == kNegInf) return kNegInf;
    double s = 0.0;
    for (double x : v) s += std::exp(x - m);
    return m + std::log(s);
}

/// Masked variant: only entries with keep[i] != 0 participate. The max is
/// taken over kept entries only, so dropped -inf sentinels never produce NaN.
/// An empty kept set signals a fully-dropped neuron and is an error here;
/// callers must prevent it (see ComponentMask invariant).
inline double logsumexp(std::span<const double> v, std::span<const std::uint8_t> keep) {
    if (v.size() != keep.size()) throw std::invalid_argument("logsumexp: mask length mismatch");
    double m = kNegInf;
    bool any = false;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!keep[i]) continue;
        any = true;
        m = std::max(m, v[i]);
    }
    if (!any) throw NumericError("logsumexp: all entries masked (fully-dropped neuron)");
    if (m == kNegInf) return kNegInf;
    double s = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (keep[i]) s += std::exp(v[i] - m);
    }
    return m + std::log(s);
}

inline void softmax_into(std::span<const double> v, std::span<double> out) {
    double m = kNegInf;
    for (double x : v) m = std::max(m, x);
    double s = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        out[i] = std::exp(v[i] - m);
        s += out[i];
    }
    const double inv = 1.0 / s;
    for (std::size_t i = 0; i < v.size(); ++i) out[i] *= inv;
}

/// Shift-invariant softmax; output entries are positive and sum to 1.
inline std::vector<double> softmax(std::span<const double> v) {
    std::vector<double> out(v.size());
    softmax_into(v, out);
    return out;
}

}  // namespace ugmm
