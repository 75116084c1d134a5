#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "swan/cube.hpp"
#include "swan/error.hpp"
#include "swan/matrix.hpp"

namespace swan {

/// Two-channel biorthogonal filter bank (analysis and synthesis pairs).
struct FilterBank {
    static constexpr std::size_t length = 8;
    std::array<double, length> dec_lo{};
    std::array<double, length> dec_hi{};
    std::array<double, length> rec_lo{};
    std::array<double, length> rec_hi{};
};

/// Biorthogonal 3.3 (Cohen-Daubechies-Feauveau spline pair).
///
/// The synthesis low-pass is the quadratic B-spline (1, 3, 3, 1) / 8, the
/// analysis low-pass its dual (3, -9, -7, 45, 45, -7, -9, 3) / 64, both
/// scaled by sqrt(2) so that the pair is biorthonormal. The high-pass
/// filters follow from the alternating-sign quadrature mirror relations
///   dec_hi[n] = (-1)^(n+1) rec_lo[7 - n],   rec_hi[n] = (-1)^n dec_lo[7 - n].
/// Zero taps pad the 4-tap spline filters to the common length 8.
inline const FilterBank& bior33() {
    static const FilterBank bank = [] {
        const double s64 = std::sqrt(2.0) / 64.0;
        const double s8 = std::sqrt(2.0) / 8.0;
        FilterBank b;
        b.dec_lo = {3 * s64, -9 * s64, -7 * s64, 45 * s64, 45 * s64, -7 * s64, -9 * s64, 3 * s64};
        b.dec_hi = {0.0, 0.0, -1 * s8, 3 * s8, -3 * s8, 1 * s8, 0.0, 0.0};
        b.rec_lo = {0.0, 0.0, 1 * s8, 3 * s8, 3 * s8, 1 * s8, 0.0, 0.0};
        b.rec_hi = {3 * s64, 9 * s64, -7 * s64, -45 * s64, 45 * s64, 7 * s64, -9 * s64, -3 * s64};
        return b;
    }();
    return bank;
}

/// Number of coefficients per half for a length-L signal: floor((L + 7) / 2).
constexpr std::size_t coefficient_count(std::size_t signal_len) {
    return (signal_len + FilterBank::length - 1) / 2;
}

struct WaveletPair {
    Vec approx;
    Vec detail;
    std::size_t original_len = 0;

    std::size_t size() const noexcept { return approx.size(); }
    friend bool operator==(const WaveletPair&, const WaveletPair&) = default;
};

struct WaveletCube {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<WaveletPair> pairs;

    std::size_t pixel_count() const noexcept { return pairs.size(); }
    std::size_t coefficients() const noexcept { return pairs.empty() ? 0 : pairs.front().size(); }
    std::size_t original_len() const noexcept { return pairs.empty() ? 0 : pairs.front().original_len; }
};

namespace detail {

// Whole-sample symmetric extension: x[-i] = x[i], x[n-1+i] = x[n-1-i].
inline std::size_t reflect_index(std::ptrdiff_t i, std::ptrdiff_t n) {
    const std::ptrdiff_t period = 2 * n - 2;
    i %= period;
    if (i < 0) i += period;
    return static_cast<std::size_t>(i < n ? i : period - i);
}

} // namespace detail

/// Single-level analysis. Output halves have floor((L + 7) / 2) samples.
inline WaveletPair dwt_single_level(std::span<const double> signal, const FilterBank& bank = bior33()) {
    constexpr std::size_t F = FilterBank::length;
    const std::size_t L = signal.size();
    if (L < F)
        throw Error(ErrorCode::SignalTooShort,
                    "signal length " + std::to_string(L) + " is shorter than the filter length 8");
    for (std::size_t i = 0; i < L; ++i)
        if (!std::isfinite(signal[i]))
            throw Error(ErrorCode::NonFiniteInput, "non-finite sample at index " + std::to_string(i));

    const std::size_t K = coefficient_count(L);
    WaveletPair out{Vec(K), Vec(K), L};
    const auto n = static_cast<std::ptrdiff_t>(L);
    for (std::size_t o = 0; o < K; ++o) {
        double a = 0.0, d = 0.0;
        const auto centre = static_cast<std::ptrdiff_t>(2 * o + 1);
        for (std::size_t j = 0; j < F; ++j) {
            const double x = signal[detail::reflect_index(centre - static_cast<std::ptrdiff_t>(j), n)];
            a += bank.dec_lo[j] * x;
            d += bank.dec_hi[j] * x;
        }
        out.approx[o] = a;
        out.detail[o] = d;
    }
    return out;
}

/// Single-level synthesis; exact inverse of dwt_single_level up to round-off.
/// Odd lengths synthesise one extra sample that is dropped.
inline Vec idwt_single_level(std::span<const double> approx, std::span<const double> detail,
                             std::size_t original_len, const FilterBank& bank = bior33()) {
    constexpr std::size_t F = FilterBank::length;
    if (original_len < F)
        throw Error(ErrorCode::LengthMismatch, "original length must be at least 8");
    const std::size_t K = coefficient_count(original_len);
    if (approx.size() != K || detail.size() != K)
        throw Error(ErrorCode::LengthMismatch,
                    "expected " + std::to_string(K) + " coefficients per half for length " +
                        std::to_string(original_len) + ", got " + std::to_string(approx.size()) + "/" +
                        std::to_string(detail.size()));

    const std::size_t full = 2 * K - F + 2;
    Vec out(full, 0.0);
    for (std::size_t i = 0; i < full; ++i) {
        // Only taps t = i + F - 2 - 2k in [0, F) contribute.
        const std::size_t shifted = i + F - 2;
        const std::size_t k_hi = std::min(K - 1, shifted / 2);
        const std::size_t k_lo = shifted >= F - 1 ? (shifted - (F - 1) + 1) / 2 : 0;
        double acc = 0.0;
        for (std::size_t k = k_lo; k <= k_hi; ++k) {
            const std::size_t t = shifted - 2 * k;
            acc += approx[k] * bank.rec_lo[t] + detail[k] * bank.rec_hi[t];
        }
        out[i] = acc;
    }
    out.resize(original_len);
    return out;
}

inline Vec idwt_single_level(const WaveletPair& pair, const FilterBank& bank = bior33()) {
    return idwt_single_level(pair.approx, pair.detail, pair.original_len, bank);
}

inline WaveletCube dwt_cube(const SpectralCube& cube, const FilterBank& bank = bior33()) {
    if (cube.empty()) throw Error(ErrorCode::InvalidDims, "cannot transform an empty cube");
    WaveletCube out{cube.rows, cube.cols, {}};
    out.pairs.reserve(cube.pixel_count());
    for (std::size_t p = 0; p < cube.pixel_count(); ++p) {
        try {
            out.pairs.push_back(dwt_single_level(cube.pixel(p), bank));
        } catch (const Error& err) {
            throw Error(err.code(), "pixel " + std::to_string(p) + ": " + err.what());
        }
    }
    return out;
}

/// Mean over pixels of the descending-sorted coefficient magnitudes.
struct DecayCurve {
    Vec approx;
    Vec detail;
    Vec combined;
};

inline DecayCurve coefficient_decay_report(const WaveletCube& wcube) {
    const std::size_t K = wcube.coefficients();
    DecayCurve curve{Vec(K, 0.0), Vec(K, 0.0), Vec(2 * K, 0.0)};
    if (wcube.pairs.empty()) return curve;

    Vec a(K), d(K), c(2 * K);
    const auto desc = [](Vec& v) { std::sort(v.begin(), v.end(), std::greater<>()); };
    for (const auto& pair : wcube.pairs) {
        for (std::size_t k = 0; k < K; ++k) {
            a[k] = std::abs(pair.approx[k]);
            d[k] = std::abs(pair.detail[k]);
            c[k] = a[k];
            c[K + k] = d[k];
        }
        desc(a);
        desc(d);
        desc(c);
        for (std::size_t k = 0; k < K; ++k) {
            curve.approx[k] += a[k];
            curve.detail[k] += d[k];
        }
        for (std::size_t k = 0; k < 2 * K; ++k) curve.combined[k] += c[k];
    }
    const double inv = 1.0 / static_cast<double>(wcube.pairs.size());
    for (auto* v : {&curve.approx, &curve.detail, &curve.combined})
        for (double& x : *v) x *= inv;
    return curve;
}

} // namespace swan
