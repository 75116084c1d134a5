#pragma once

#include <cstddef>
#include <span>

#include "swan/matrix.hpp"

namespace swan {

/// A rows x cols x bands reflectance cube. Pixels are stored row-major,
/// one spectrum per row of `data` (P x L).
struct SpectralCube {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::size_t bands = 0;
    Matrix data;

    SpectralCube() = default;
    SpectralCube(std::size_t r, std::size_t c, std::size_t b) : rows(r), cols(c), bands(b), data(r * c, b) {}

    std::size_t pixel_count() const noexcept { return rows * cols; }
    bool empty() const noexcept { return pixel_count() == 0 || bands == 0; }

    std::span<const double> pixel(std::size_t i) const { return data.row(i); }
    std::span<double> pixel(std::size_t i) { return data.row(i); }

    friend bool operator==(const SpectralCube&, const SpectralCube&) = default;
};

} // namespace swan
