#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "tnrbm/rng.hpp"
#include "tnrbm/tensor.hpp"

namespace tnrbm {

/// Deterministic synthetic digit corpus: 28x28 grayscale glyphs of the
/// digits 0-9 rendered from a 5x7 bitmap font with per-sample shift and
/// pixel noise. Stands in for handwritten-digit data in demos and tests so
/// the pipeline needs no external downloads.

namespace detail {

// Row bitmasks of a classic 5x7 digit font, top row first, bit 4 = left column.
inline constexpr std::array<std::array<std::uint8_t, 7>, 10> kDigitFont{{
    {0x0e, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0e}, // 0
    {0x04, 0x0c, 0x04, 0x04, 0x04, 0x04, 0x0e}, // 1
    {0x0e, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1f}, // 2
    {0x1f, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0e}, // 3
    {0x02, 0x06, 0x0a, 0x12, 0x1f, 0x02, 0x02}, // 4
    {0x1f, 0x10, 0x1e, 0x01, 0x01, 0x11, 0x0e}, // 5
    {0x06, 0x08, 0x10, 0x1e, 0x11, 0x11, 0x0e}, // 6
    {0x1f, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}, // 7
    {0x0e, 0x11, 0x11, 0x0e, 0x11, 0x11, 0x0e}, // 8
    {0x0e, 0x11, 0x11, 0x0f, 0x01, 0x02, 0x0c}, // 9
}};

inline bool glyph_bit(int digit, long row, long col) {
    // Glyph upscaled 3x to 15x21, centred with shift applied by the caller.
    if (row < 0 || row >= 21 || col < 0 || col >= 15)
        return false;
    return (kDigitFont[static_cast<std::size_t>(digit)][static_cast<std::size_t>(row / 3)] >>
            (4 - col / 3)) &
           1u;
}

} // namespace detail

/// One 28x28 image of `digit` with values in 0..255; rng drives the shift
/// and pixel noise, so equal rng states give equal images.
inline DenseTensor synthetic_digit(int digit, Rng& rng) {
    if (digit < 0 || digit > 9)
        throw ValueError("digit must lie in 0..9");
    const long dr = static_cast<long>(rng.below(5)) - 2;
    const long dc = static_cast<long>(rng.below(5)) - 2;
    DenseTensor img(Dims{28, 28});
    auto out = img.values();
    for (std::size_t c = 0; c < 28; ++c)
        for (std::size_t r = 0; r < 28; ++r) {
            bool ink = detail::glyph_bit(digit, static_cast<long>(r) - 3 - dr,
                                         static_cast<long>(c) - 6 - dc);
            if (rng.bernoulli(0.03))
                ink = !ink;
            const double v = ink ? 205.0 + static_cast<double>(rng.below(51))
                                 : static_cast<double>(rng.below(41));
            out[r + 28 * c] = v;
        }
    return img;
}

/// Label of sample i in a synthetic stack: digits cycle 0..9.
inline int synthetic_digit_label(std::size_t i) { return static_cast<int>(i % 10); }

/// Stack of `count` images as dims (count, 28, 28); sample i is the digit
/// i mod 10 with an rng stream derived from (seed, i), so any prefix of a
/// larger stack matches a smaller one.
inline DenseTensor synthetic_digit_stack(std::size_t count, std::uint64_t seed) {
    if (count == 0)
        throw ValueError("count must be positive");
    DenseTensor stack(Dims{count, 28, 28});
    auto dst = stack.values();
    for (std::size_t i = 0; i < count; ++i) {
        Rng rng(derive_seed(seed, "synth-digit", i));
        const DenseTensor img = synthetic_digit(synthetic_digit_label(i), rng);
        auto src = img.values();
        for (std::size_t j = 0; j < src.size(); ++j)
            dst[i + count * j] = src[j];
    }
    return stack;
}

} // namespace tnrbm
