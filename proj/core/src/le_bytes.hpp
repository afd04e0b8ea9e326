#pragma once

#include "s2m/tensor.hpp"

#include <bit>
#include <cstdint>
#include <span>
#include <vector>

namespace s2m::detail {

inline std::size_t dtype_width(Dtype dtype) { return dtype == Dtype::f32 ? 4 : 8; }

/// Appends values as little-endian floats of the given width.
inline void append_le(std::vector<unsigned char>& out, std::span<const double> values, Dtype dtype)
{
    for (double v : values) {
        if (dtype == Dtype::f32) {
            const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
            for (int b = 0; b < 4; ++b) out.push_back(static_cast<unsigned char>((bits >> (8 * b)) & 0xFF));
        } else {
            const auto bits = std::bit_cast<std::uint64_t>(v);
            for (int b = 0; b < 8; ++b) out.push_back(static_cast<unsigned char>((bits >> (8 * b)) & 0xFF));
        }
    }
}

/// Decodes count little-endian floats; bytes must hold count * dtype_width(dtype).
inline std::vector<double> decode_le(const unsigned char* bytes, std::size_t count, Dtype dtype)
{
    std::vector<double> values(count);
    const std::size_t width = dtype_width(dtype);
    for (std::size_t i = 0; i < count; ++i) {
        const unsigned char* p = bytes + i * width;
        if (dtype == Dtype::f32) {
            std::uint32_t bits = 0;
            for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(p[b]) << (8 * b);
            values[i] = std::bit_cast<float>(bits);
        } else {
            std::uint64_t bits = 0;
            for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(p[b]) << (8 * b);
            values[i] = std::bit_cast<double>(bits);
        }
    }
    return values;
}

} // namespace s2m::detail
