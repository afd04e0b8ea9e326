#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace s2m {

/// Planar image with values in [0, 1], stored channel-major: values[(c * height + y) * width + x].
struct Image {
    std::size_t width = 0;
    std::size_t height = 0;
    std::size_t channels = 0;  // 1 or 3
    std::vector<double> values;

    double at(std::size_t c, std::size_t y, std::size_t x) const { return values[(c * height + y) * width + x]; }
    double& at(std::size_t c, std::size_t y, std::size_t x) { return values[(c * height + y) * width + x]; }
};

/// Reads 8-bit PNG (gray, gray+alpha, RGB, RGBA) and binary or ASCII PGM/PPM.
/// Alpha is dropped. Throws DataError naming the path.
Image read_image(const std::string& path);

/// 8-bit output; values are clamped to [0, 1] and rounded.
void write_png(const std::string& path, const Image& image);
void write_pnm(const std::string& path, const Image& image);  // P5 for 1 channel, P6 for 3

/// Bilinear resampling with pixel-center alignment.
Image resize_bilinear(const Image& image, std::size_t height, std::size_t width);
/// Nearest-neighbour resampling with pixel-center alignment.
Image resize_nearest(const Image& image, std::size_t height, std::size_t width);
/// Replicates a single channel to three; three-channel input is returned as is.
Image to_rgb(const Image& image);
/// Channel mean; single-channel input is returned as is.
Image to_gray(const Image& image);

} // namespace s2m
