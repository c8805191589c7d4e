#pragma once

#include <array>
#include <cassert>
#include <cstdint>
#include <span>
#include <vector>

#include "ripelab/error.hpp"

namespace ripelab {

// Interleaved row-major image with a compile-time channel count.
template <typename T, int Channels>
class Raster {
public:
    using value_type = T;
    static constexpr int channels = Channels;

    Raster() = default;
    Raster(int width, int height, T fill = T{})
        : width_(width), height_(height),
          data_(static_cast<std::size_t>(width) * height * Channels, fill) {
        if (width < 0 || height < 0) throw ValidationError("raster dimensions must be non-negative");
    }

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    bool empty() const noexcept { return data_.empty(); }
    bool contains(int row, int col) const noexcept {
        return row >= 0 && col >= 0 && row < height_ && col < width_;
    }

    T& at(int row, int col, int ch = 0) noexcept {
        assert(contains(row, col) && ch < Channels);
        return data_[(static_cast<std::size_t>(row) * width_ + col) * Channels + ch];
    }
    const T& at(int row, int col, int ch = 0) const noexcept {
        assert(contains(row, col) && ch < Channels);
        return data_[(static_cast<std::size_t>(row) * width_ + col) * Channels + ch];
    }

    std::span<T> pixel(int row, int col) noexcept {
        return {&at(row, col), static_cast<std::size_t>(Channels)};
    }
    std::span<const T> pixel(int row, int col) const noexcept {
        return {&at(row, col), static_cast<std::size_t>(Channels)};
    }

    std::span<T> data() noexcept { return data_; }
    std::span<const T> data() const noexcept { return data_; }

    bool operator==(const Raster&) const = default;

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<T> data_;
};

using RgbImage = Raster<std::uint8_t, 3>;
using RgbaImage = Raster<std::uint8_t, 4>;
using GrayImage = Raster<std::uint8_t, 1>;
using LabelImage = Raster<std::uint16_t, 1>;
using FloatImage = Raster<double, 1>;

using Rgb = std::array<double, 3>;

inline std::uint8_t clamp_to_byte(double v) noexcept {
    if (!(v > 0.0)) return 0;
    if (v >= 255.0) return 255;
    return static_cast<std::uint8_t>(v + 0.5);
}

// ITU-R BT.601 luma.
inline GrayImage to_gray(const RgbImage& rgb) {
    GrayImage out(rgb.width(), rgb.height());
    for (int r = 0; r < rgb.height(); ++r) {
        for (int c = 0; c < rgb.width(); ++c) {
            const auto p = rgb.pixel(r, c);
            out.at(r, c) = clamp_to_byte(0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]);
        }
    }
    return out;
}

inline FloatImage to_float(const GrayImage& gray) {
    FloatImage out(gray.width(), gray.height());
    auto src = gray.data();
    auto dst = out.data();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i];
    return out;
}

}  // namespace ripelab
