#pragma once

#include <algorithm>
#include <cmath>
#include <span>

#include "swan/error.hpp"
#include "swan/matrix.hpp"

namespace swan {

/// Cosine of the angle between a and b, clamped to [-1, 1].
inline double clamped_cosine(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw Error(ErrorCode::LengthMismatch, "vectors differ in length");
    const double na = norm2(a);
    const double nb = norm2(b);
    if (na == 0.0 || nb == 0.0) throw Error(ErrorCode::ZeroNormVector, "spectral angle of a zero vector");
    return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

/// Spectral angle in radians, in [0, pi]. Half-angle form, accurate near 0 and pi
/// where acos of the cosine loses about half the digits.
inline double spectral_angle(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw Error(ErrorCode::LengthMismatch, "vectors differ in length");
    const double na = norm2(a);
    const double nb = norm2(b);
    if (na == 0.0 || nb == 0.0) throw Error(ErrorCode::ZeroNormVector, "spectral angle of a zero vector");
    double diff = 0.0, sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double x = a[i] / na, y = b[i] / nb;
        diff += (x - y) * (x - y);
        sum += (x + y) * (x + y);
    }
    return 2.0 * std::atan2(std::sqrt(diff), std::sqrt(sum));
}

} // namespace swan
