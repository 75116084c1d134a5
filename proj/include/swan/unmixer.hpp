#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <vector>

#include "swan/error.hpp"
#include "swan/log.hpp"
#include "swan/matrix.hpp"
#include "swan/metrics.hpp"
#include "swan/model.hpp"
#include "swan/rng.hpp"
#include "swan/wavelet.hpp"

namespace swan {

/// L x e signatures, one endmember per column.
struct EndmemberMatrix {
    Matrix values;
    std::vector<std::size_t> degenerate; // columns that reconstructed to all zeros

    std::size_t bands() const noexcept { return values.rows(); }
    std::size_t count() const noexcept { return values.cols(); }
};

/// e x P fractional abundances; every column lies on the probability simplex.
struct AbundanceMatrix {
    Matrix values;

    std::size_t count() const noexcept { return values.rows(); }
    std::size_t pixels() const noexcept { return values.cols(); }
};

/// Encoder output for every pixel, dropout disabled.
inline AbundanceMatrix extract_abundances(const SwanModel& model, const WaveletCube& normalized) {
    if (normalized.coefficients() != model.arch.coefficients)
        throw Error(ErrorCode::DimensionMismatch,
                    "cube has K=" + std::to_string(normalized.coefficients()) + " but model expects K=" +
                        std::to_string(model.arch.coefficients));
    AbundanceMatrix out{Matrix(model.arch.endmembers, normalized.pixel_count())};
    RngStream unused(0);
    for (std::size_t p = 0; p < normalized.pixel_count(); ++p) {
        const Vec z = concat_pair(normalized.pairs[p]);
        Vec h = dense_forward(model[L1], z, false, unused);
        h = dense_forward(model[L2], h, false, unused);
        h = dense_forward(model[L3], h, false, unused);
        const Vec alpha = dense_forward(model[L4], h, false, unused);
        for (std::size_t j = 0; j < alpha.size(); ++j) out.values(j, p) = alpha[j];
    }
    return out;
}

/// IDWT of each decoder weight column pair, before any projection.
inline Matrix reconstruct_endmembers_raw(const SwanModel& model, std::size_t bands,
                                         const FilterBank& bank = bior33()) {
    if (bands < FilterBank::length || coefficient_count(bands) != model.arch.coefficients)
        throw Error(ErrorCode::LengthMismatch, std::to_string(bands) + " bands imply K=" +
                                                   std::to_string(coefficient_count(bands)) +
                                                   " but the model has K=" +
                                                   std::to_string(model.arch.coefficients));
    const std::size_t e = model.arch.endmembers;
    Matrix out(bands, e);
    for (std::size_t j = 0; j < e; ++j)
        out.set_col(j, idwt_single_level(model[L5A].weights.col(j), model[L5D].weights.col(j), bands, bank));
    return out;
}

/// Reconstructs signatures from the decoder weights, clamps negatives to 0
/// and rescales each column to unit maximum. All-zero columns are left as
/// zeros and listed in `degenerate`.
inline EndmemberMatrix extract_endmembers(const SwanModel& model, const FilterBank& bank, std::size_t bands) {
    EndmemberMatrix out{reconstruct_endmembers_raw(model, bands, bank), {}};
    for (std::size_t j = 0; j < out.count(); ++j) {
        double peak = 0.0;
        for (std::size_t l = 0; l < bands; ++l) {
            double& v = out.values(l, j);
            if (v < 0.0) v = 0.0;
            peak = std::max(peak, v);
        }
        if (peak == 0.0) {
            out.degenerate.push_back(j);
            log("endmember " + std::to_string(j + 1) + " reconstructed to all zeros");
            continue;
        }
        for (std::size_t l = 0; l < bands; ++l) out.values(l, j) /= peak;
    }
    return out;
}

struct Alignment {
    std::vector<std::size_t> permutation; // permutation[j] = estimated column matched to truth column j
    double total_sad = 0.0;
};

/// Minimum-cost assignment on a square cost matrix (Hungarian method, O(n^3)).
inline std::vector<std::size_t> solve_assignment(const Matrix& cost) {
    const std::size_t n = cost.rows();
    constexpr double inf = std::numeric_limits<double>::infinity();
    // 1-based potentials formulation.
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<std::size_t> match(n + 1, 0), way(n + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        match[0] = i;
        std::size_t j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<bool> used(n + 1, false);
        do {
            used[j0] = true;
            const std::size_t i0 = match[j0];
            double delta = inf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) minv[j] = cur, way[j] = j0;
                if (minv[j] < delta) delta = minv[j], j1 = j;
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) u[match[j]] += delta, v[j] -= delta;
                else minv[j] -= delta;
            }
            j0 = j1;
        } while (match[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            match[j0] = match[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<std::size_t> row_to_col(n);
    for (std::size_t j = 1; j <= n; ++j) row_to_col[match[j] - 1] = j - 1;
    return row_to_col;
}

/// Column permutation of `est` minimising the summed SAD to `gt`.
inline Alignment align_to_ground_truth(const Matrix& est, const Matrix& gt) {
    if (est.rows() != gt.rows() || est.cols() != gt.cols())
        throw Error(ErrorCode::SizeMismatch, "estimate and ground truth differ in shape");
    const std::size_t e = gt.cols();
    Matrix cost(e, e);
    for (std::size_t t = 0; t < e; ++t) {
        const Vec g = gt.col(t);
        for (std::size_t s = 0; s < e; ++s) cost(t, s) = sad(est.col(s), g);
    }
    Alignment a{solve_assignment(cost), 0.0};
    for (std::size_t t = 0; t < e; ++t) a.total_sad += cost(t, a.permutation[t]);
    return a;
}

inline Matrix permute_columns(const Matrix& m, const std::vector<std::size_t>& perm) {
    Matrix out(m.rows(), perm.size());
    for (std::size_t j = 0; j < perm.size(); ++j)
        for (std::size_t r = 0; r < m.rows(); ++r) out(r, j) = m(r, perm[j]);
    return out;
}

inline Matrix permute_rows(const Matrix& m, const std::vector<std::size_t>& perm) {
    Matrix out(perm.size(), m.cols());
    for (std::size_t j = 0; j < perm.size(); ++j) std::copy(m.row(perm[j]).begin(), m.row(perm[j]).end(), out.row(j).begin());
    return out;
}

} // namespace swan
