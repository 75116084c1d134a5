#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "swan/angle.hpp"
#include "swan/cube.hpp"
#include "swan/error.hpp"
#include "swan/matrix.hpp"
#include "swan/ndcore.hpp"
#include "swan/rng.hpp"
#include "swan/unmixer.hpp"

namespace swan {

struct GroundTruth {
    EndmemberMatrix endmembers;  // L x e
    AbundanceMatrix abundances;  // e x P
    std::optional<double> snr_db; // empty = noiseless
};

inline constexpr double kMinSignatureAngle = 0.15;
inline constexpr int kSignatureAttempts = 1000;

struct SignatureParams {
    double peak_min = 1.0; // each signature's maximum reflectance is drawn from [peak_min, peak_max]
    double peak_max = 1.0;
};

/// Smooth non-negative stand-in reflectance signatures, each a sum of 3-6
/// Gaussian bumps over the band axis on a small baseline.
inline EndmemberMatrix make_signatures(std::size_t e, std::size_t L, std::uint64_t seed,
                                       const SignatureParams& sp = {}) {
    if (e < 2 || L < 16)
        throw Error(ErrorCode::InvalidDims, "signatures need e >= 2 and L >= 16");
    if (!(sp.peak_min > 0.0 && sp.peak_min <= sp.peak_max && sp.peak_max <= 1.0))
        throw Error(ErrorCode::InvalidConfig, "signature peaks must satisfy 0 < min <= max <= 1");
    RngStream rng(seed, 0x5167);
    const double len = static_cast<double>(L);
    for (int attempt = 0; attempt < kSignatureAttempts; ++attempt) {
        Matrix m(L, e);
        for (std::size_t j = 0; j < e; ++j) {
            Vec s(L, 0.02);
            const int bumps = rng.integer(3, 6);
            for (int b = 0; b < bumps; ++b) {
                const double amp = rng.uniform(0.2, 1.0);
                const double centre = rng.uniform(0.0, len);
                const double width = rng.uniform(len / 40.0, len / 6.0);
                for (std::size_t l = 0; l < L; ++l) {
                    const double t = (static_cast<double>(l) - centre) / width;
                    s[l] += amp * std::exp(-0.5 * t * t);
                }
            }
            const double peak = *std::max_element(s.begin(), s.end());
            const double scale = rng.uniform(sp.peak_min, sp.peak_max) / peak;
            for (double& v : s) v *= scale;
            m.set_col(j, s);
        }
        bool distinct = true;
        for (std::size_t a = 0; a < e && distinct; ++a)
            for (std::size_t b = a + 1; b < e && distinct; ++b)
                distinct = spectral_angle(m.col(a), m.col(b)) >= kMinSignatureAngle;
        if (distinct) return EndmemberMatrix{std::move(m), {}};
    }
    throw Error(ErrorCode::RejectionExhausted,
                "no signature set with pairwise angle >= 0.15 rad after 1000 attempts");
}

enum class FieldKind { Blocks, SphericGaussian };

inline FieldKind parse_field_kind(const std::string& s) {
    if (s == "blocks") return FieldKind::Blocks;
    if (s == "spheric_gaussian") return FieldKind::SphericGaussian;
    throw Error(ErrorCode::InvalidKind, "unknown abundance field kind '" + s + "'");
}

inline std::string to_string(FieldKind k) { return k == FieldKind::Blocks ? "blocks" : "spheric_gaussian"; }

struct FieldParams {
    // blocks
    std::size_t blocks_per_side = 5;
    double pure_fraction = 0.4;
    std::size_t smoothing_radius = 2;
    // spheric_gaussian; each map draws its range uniformly from [range_min, range_max]
    double range_min = 15.0;
    double range_max = 40.0;
    double temperature = 1.0;
};

namespace detail {

inline void normalize_columns(Matrix& a) {
    for (std::size_t p = 0; p < a.cols(); ++p) {
        double s = 0.0;
        for (std::size_t j = 0; j < a.rows(); ++j) s += a(j, p);
        for (std::size_t j = 0; j < a.rows(); ++j) a(j, p) /= s;
    }
}

inline Matrix blocks_field(std::size_t rows, std::size_t cols, std::size_t e, const FieldParams& fp,
                           RngStream& rng) {
    const std::size_t bs = std::max<std::size_t>(1, rows / std::max<std::size_t>(1, fp.blocks_per_side));
    const std::size_t br = (rows + bs - 1) / bs, bc = (cols + bs - 1) / bs, nb = br * bc;

    // One block per endmember is forced pure so every material has pure pixels.
    std::vector<std::size_t> order(nb);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng.engine());
    std::vector<std::ptrdiff_t> forced(nb, -1);
    for (std::size_t j = 0; j < std::min(e, nb); ++j) forced[order[j]] = static_cast<std::ptrdiff_t>(j);

    Matrix raw(e, rows * cols);
    Vec v(e);
    for (std::size_t b = 0; b < nb; ++b) {
        std::fill(v.begin(), v.end(), 0.0);
        if (forced[b] >= 0) {
            v[static_cast<std::size_t>(forced[b])] = 1.0;
        } else if (rng.uniform() < fp.pure_fraction) {
            v[rng.index(e)] = 1.0;
        } else {
            double s = 0.0;
            for (double& x : v) s += (x = rng.gamma(1.0));
            for (double& x : v) x /= s;
        }
        const std::size_t r0 = (b / bc) * bs, c0 = (b % bc) * bs;
        for (std::size_t r = r0; r < std::min(rows, r0 + bs); ++r)
            for (std::size_t c = c0; c < std::min(cols, c0 + bs); ++c)
                for (std::size_t j = 0; j < e; ++j) raw(j, r * cols + c) = v[j];
    }

    // Box filter with clamped borders; an average of simplex points stays on the simplex.
    const auto rad = static_cast<std::ptrdiff_t>(fp.smoothing_radius);
    const auto R = static_cast<std::ptrdiff_t>(rows), C = static_cast<std::ptrdiff_t>(cols);
    Matrix out(e, rows * cols);
    for (std::ptrdiff_t r = 0; r < R; ++r)
        for (std::ptrdiff_t c = 0; c < C; ++c)
            for (std::size_t j = 0; j < e; ++j) {
                double s = 0.0;
                for (std::ptrdiff_t dr = -rad; dr <= rad; ++dr)
                    for (std::ptrdiff_t dc = -rad; dc <= rad; ++dc) {
                        const auto rr = std::clamp<std::ptrdiff_t>(r + dr, 0, R - 1);
                        const auto cc = std::clamp<std::ptrdiff_t>(c + dc, 0, C - 1);
                        s += raw(j, static_cast<std::size_t>(rr * C + cc));
                    }
                out(j, static_cast<std::size_t>(r * C + c)) = s / static_cast<double>((2 * rad + 1) * (2 * rad + 1));
            }
    normalize_columns(out);
    return out;
}

/// Gaussian field with spherical covariance of range r on a 2-D grid:
/// 3-D white noise averaged over a ball of diameter r centred on each pixel
/// (the overlap volume of two such balls is the spherical model).
inline Vec spheric_map(std::size_t rows, std::size_t cols, double range, RngStream& rng) {
    const double radius = range / 2.0;
    const auto h = static_cast<std::ptrdiff_t>(std::floor(radius));
    const std::size_t depth = static_cast<std::size_t>(2 * h + 1);
    const std::size_t pr = rows + 2 * static_cast<std::size_t>(h), pc = cols + 2 * static_cast<std::size_t>(h);

    // column_sum[(i, j), m] = sum of the noise column over |k| <= m
    std::vector<double> column_sum(pr * pc * static_cast<std::size_t>(h + 1));
    Vec col(depth);
    for (std::size_t q = 0; q < pr * pc; ++q) {
        for (double& x : col) x = rng.normal();
        double s = col[static_cast<std::size_t>(h)];
        column_sum[q * static_cast<std::size_t>(h + 1)] = s;
        for (std::ptrdiff_t m = 1; m <= h; ++m) {
            s += col[static_cast<std::size_t>(h + m)] + col[static_cast<std::size_t>(h - m)];
            column_sum[q * static_cast<std::size_t>(h + 1) + static_cast<std::size_t>(m)] = s;
        }
    }

    std::vector<std::pair<std::ptrdiff_t, std::ptrdiff_t>> offsets;
    std::vector<std::size_t> half;
    for (std::ptrdiff_t di = -h; di <= h; ++di)
        for (std::ptrdiff_t dj = -h; dj <= h; ++dj) {
            const double d2 = static_cast<double>(di * di + dj * dj);
            if (d2 > radius * radius) continue;
            offsets.emplace_back(di, dj);
            half.push_back(static_cast<std::size_t>(std::floor(std::sqrt(radius * radius - d2))));
        }

    Vec out(rows * cols, 0.0);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) {
            double s = 0.0;
            for (std::size_t o = 0; o < offsets.size(); ++o) {
                const auto i = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(r) + h + offsets[o].first);
                const auto j = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(c) + h + offsets[o].second);
                s += column_sum[(i * pc + j) * static_cast<std::size_t>(h + 1) + half[o]];
            }
            out[r * cols + c] = s;
        }

    double mean = 0.0, var = 0.0;
    for (double x : out) mean += x;
    mean /= static_cast<double>(out.size());
    for (double x : out) var += (x - mean) * (x - mean);
    const double sd = std::sqrt(var / static_cast<double>(out.size()));
    for (double& x : out) x = sd > 0.0 ? (x - mean) / sd : 0.0;
    return out;
}

} // namespace detail

/// e x (rows*cols) abundance maps, every column on the simplex.
inline AbundanceMatrix make_abundance_field(FieldKind kind, std::size_t rows, std::size_t cols, std::size_t e,
                                            std::uint64_t seed, const FieldParams& fp = {}) {
    if (e == 0 || rows * cols < e) throw Error(ErrorCode::InvalidDims, "abundance field needs rows*cols >= e >= 1");
    RngStream rng(seed, 0xab0d);
    if (kind == FieldKind::Blocks) return {detail::blocks_field(rows, cols, e, fp, rng)};
    if (kind != FieldKind::SphericGaussian) throw Error(ErrorCode::InvalidKind, "unknown abundance field kind");

    Matrix logits(e, rows * cols);
    for (std::size_t j = 0; j < e; ++j) {
        const double range = rng.uniform(fp.range_min, fp.range_max);
        RngStream map_rng = rng.substream(j);
        const Vec m = detail::spheric_map(rows, cols, range, map_rng);
        std::copy(m.begin(), m.end(), logits.row(j).begin());
    }
    Matrix out(e, rows * cols);
    Vec z(e);
    for (std::size_t p = 0; p < rows * cols; ++p) {
        for (std::size_t j = 0; j < e; ++j) z[j] = logits(j, p) / fp.temperature;
        const Vec s = softmax(z);
        for (std::size_t j = 0; j < e; ++j) out(j, p) = s[j];
    }
    return {std::move(out)};
}

/// Noiseless linear mixture: pixel p = M * alpha_p.
inline SpectralCube mix(const EndmemberMatrix& m, const AbundanceMatrix& a, std::size_t rows, std::size_t cols) {
    const std::size_t L = m.values.rows(), e = m.values.cols();
    if (a.values.rows() != e || a.values.cols() != rows * cols)
        throw Error(ErrorCode::DimensionMismatch, "abundances are " + std::to_string(a.values.rows()) + "x" +
                                                      std::to_string(a.values.cols()) + ", expected " +
                                                      std::to_string(e) + "x" + std::to_string(rows * cols));
    SpectralCube cube(rows, cols, L);
    for (std::size_t p = 0; p < rows * cols; ++p) {
        auto px = cube.pixel(p);
        for (std::size_t l = 0; l < L; ++l) {
            double s = 0.0;
            for (std::size_t j = 0; j < e; ++j) s += m.values(l, j) * a.values(j, p);
            px[l] = s;
        }
    }
    return cube;
}

/// Adds white Gaussian noise with variance mean(x^2) / 10^(snr/10).
/// An empty snr leaves the cube unchanged.
inline SpectralCube add_noise_snr(const SpectralCube& cube, std::optional<double> snr_db, std::uint64_t seed) {
    if (!snr_db) return cube;
    if (!std::isfinite(*snr_db)) throw Error(ErrorCode::InvalidConfig, "snr must be finite");
    const auto flat = cube.data.flat();
    double power = 0.0;
    for (double x : flat) power += x * x;
    power /= static_cast<double>(flat.size());
    const double sigma = std::sqrt(power / std::pow(10.0, *snr_db / 10.0));
    SpectralCube out = cube;
    RngStream rng(seed, 0x0153);
    for (double& x : out.data.flat()) x += rng.normal(0.0, sigma);
    return out;
}

struct Scenario {
    std::string name;
    std::size_t rows, cols, bands, endmembers;
    FieldKind kind;
};

inline Scenario scenario_by_name(const std::string& name) {
    if (name == "data1") return {"data1", 75, 75, 224, 3, FieldKind::Blocks};
    if (name == "data2") return {"data2", 128, 128, 431, 5, FieldKind::SphericGaussian};
    throw Error(ErrorCode::InvalidConfig, "unknown scenario '" + name + "' (expected data1 or data2)");
}

struct SyntheticScene {
    SpectralCube cube;
    GroundTruth truth;
};

inline SyntheticScene synthesize(const Scenario& s, std::optional<double> snr_db, std::uint64_t seed,
                                 const FieldParams& fp = {}) {
    SyntheticScene scene;
    scene.truth.endmembers = make_signatures(s.endmembers, s.bands, seed);
    scene.truth.abundances = make_abundance_field(s.kind, s.rows, s.cols, s.endmembers, seed, fp);
    scene.truth.snr_db = snr_db;
    scene.cube = add_noise_snr(mix(scene.truth.endmembers, scene.truth.abundances, s.rows, s.cols), snr_db, seed);
    return scene;
}

} // namespace swan
