#include "s2m/image_io.hpp"

#include "s2m/error.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

namespace s2m {

namespace {

std::string lower_extension(const std::string& path)
{
    const auto dot = path.find_last_of('.');
    std::string ext = dot == std::string::npos ? "" : path.substr(dot + 1);
    std::ranges::transform(ext, ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return ext;
}

unsigned char quantize(double v) { return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

Image from_interleaved(const unsigned char* px, std::size_t h, std::size_t w, std::size_t stride_channels,
                       std::size_t channels, double maxval)
{
    Image img{w, h, channels, std::vector<double>(channels * h * w)};
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            for (std::size_t c = 0; c < channels; ++c) {
                img.at(c, y, x) = px[(y * w + x) * stride_channels + c] / maxval;
            }
        }
    }
    return img;
}

std::vector<unsigned char> to_interleaved(const Image& image)
{
    std::vector<unsigned char> px(image.channels * image.height * image.width);
    for (std::size_t y = 0; y < image.height; ++y) {
        for (std::size_t x = 0; x < image.width; ++x) {
            for (std::size_t c = 0; c < image.channels; ++c) {
                px[(y * image.width + x) * image.channels + c] = quantize(image.at(c, y, x));
            }
        }
    }
    return px;
}

void check_writable(const Image& image, const std::string& path)
{
    if (image.channels != 1 && image.channels != 3) {
        throw DataError("cannot write '" + path + "': expected 1 or 3 channels, got " + std::to_string(image.channels));
    }
    if (image.values.size() != image.channels * image.height * image.width || image.width == 0 || image.height == 0) {
        throw DataError("cannot write '" + path + "': inconsistent image buffer");
    }
}

Image read_png(const std::string& path)
{
    png_image png{};
    png.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&png, path.c_str())) {
        throw DataError("cannot read PNG '" + path + "': " + png.message);
    }
    const bool color = (png.format & PNG_FORMAT_FLAG_COLOR) != 0;
    png.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    std::vector<unsigned char> px(PNG_IMAGE_SIZE(png));
    if (!png_image_finish_read(&png, nullptr, px.data(), 0, nullptr)) {
        const std::string msg = png.message;
        png_image_free(&png);
        throw DataError("cannot decode PNG '" + path + "': " + msg);
    }
    const std::size_t ch = color ? 3 : 1;
    return from_interleaved(px.data(), png.height, png.width, ch, ch, 255.0);
}

std::string next_token(std::istream& in)
{
    std::string tok;
    char c = 0;
    while (in.get(c)) {
        if (c == '#') {
            std::string skip;
            std::getline(in, skip);
            continue;
        }
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!tok.empty()) break;
            continue;
        }
        tok += c;
    }
    return tok;
}

Image read_pnm(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path + "'");
    const std::string magic = next_token(in);
    if (magic != "P2" && magic != "P3" && magic != "P5" && magic != "P6") {
        throw DataError("'" + path + "' is not a PGM/PPM file");
    }
    std::size_t w = 0, h = 0;
    unsigned maxval = 0;
    try {
        w = std::stoul(next_token(in));
        h = std::stoul(next_token(in));
        maxval = static_cast<unsigned>(std::stoul(next_token(in)));
    } catch (const std::exception&) {
        throw DataError("malformed header in '" + path + "'");
    }
    if (w == 0 || h == 0 || maxval == 0 || maxval > 65535) throw DataError("malformed header in '" + path + "'");
    const std::size_t ch = (magic == "P3" || magic == "P6") ? 3 : 1;
    const std::size_t count = w * h * ch;
    std::vector<double> raw(count);
    if (magic == "P2" || magic == "P3") {
        for (std::size_t i = 0; i < count; ++i) {
            const std::string tok = next_token(in);
            if (tok.empty()) throw DataError("truncated pixel data in '" + path + "'");
            raw[i] = std::stod(tok);
        }
    } else {
        const std::size_t bytes_per = maxval > 255 ? 2 : 1;
        std::vector<unsigned char> bytes(count * bytes_per);
        in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (static_cast<std::size_t>(in.gcount()) != bytes.size()) {
            throw DataError("truncated pixel data in '" + path + "'");
        }
        for (std::size_t i = 0; i < count; ++i) {
            raw[i] = bytes_per == 1 ? bytes[i] : (bytes[2 * i] << 8 | bytes[2 * i + 1]);
        }
    }
    Image img{w, h, ch, std::vector<double>(count)};
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            for (std::size_t c = 0; c < ch; ++c) img.at(c, y, x) = raw[(y * w + x) * ch + c] / maxval;
        }
    }
    return img;
}

template <typename Sample>
Image resample(const Image& image, std::size_t height, std::size_t width, Sample sample)
{
    if (height == 0 || width == 0) throw DataError("resize: target size must be positive");
    Image out{width, height, image.channels, std::vector<double>(image.channels * height * width)};
    const double sy = static_cast<double>(image.height) / height;
    const double sx = static_cast<double>(image.width) / width;
    for (std::size_t c = 0; c < image.channels; ++c) {
        for (std::size_t y = 0; y < height; ++y) {
            for (std::size_t x = 0; x < width; ++x) {
                out.at(c, y, x) = sample(c, (y + 0.5) * sy - 0.5, (x + 0.5) * sx - 0.5);
            }
        }
    }
    return out;
}

} // namespace

Image read_image(const std::string& path)
{
    const std::string ext = lower_extension(path);
    if (ext == "png") return read_png(path);
    if (ext == "pgm" || ext == "ppm" || ext == "pnm") return read_pnm(path);
    throw DataError("unsupported image format '" + path + "' (expected PNG, PGM or PPM)");
}

void write_png(const std::string& path, const Image& image)
{
    check_writable(image, path);
    png_image png{};
    png.version = PNG_IMAGE_VERSION;
    png.width = static_cast<png_uint_32>(image.width);
    png.height = static_cast<png_uint_32>(image.height);
    png.format = image.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    const std::vector<unsigned char> px = to_interleaved(image);
    if (!png_image_write_to_file(&png, path.c_str(), 0, px.data(), 0, nullptr)) {
        throw DataError("cannot write PNG '" + path + "': " + png.message);
    }
}

void write_pnm(const std::string& path, const Image& image)
{
    check_writable(image, path);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    out << (image.channels == 3 ? "P6" : "P5") << '\n' << image.width << ' ' << image.height << "\n255\n";
    const std::vector<unsigned char> px = to_interleaved(image);
    out.write(reinterpret_cast<const char*>(px.data()), static_cast<std::streamsize>(px.size()));
    if (!out) throw DataError("write failed for '" + path + "'");
}

Image resize_bilinear(const Image& image, std::size_t height, std::size_t width)
{
    if (image.height == height && image.width == width) return image;
    const auto clampi = [](double v, std::size_t n) {
        return static_cast<std::size_t>(std::clamp(v, 0.0, static_cast<double>(n - 1)));
    };
    return resample(image, height, width, [&](std::size_t c, double fy, double fx) {
        fy = std::clamp(fy, 0.0, static_cast<double>(image.height - 1));
        fx = std::clamp(fx, 0.0, static_cast<double>(image.width - 1));
        const std::size_t y0 = clampi(std::floor(fy), image.height), x0 = clampi(std::floor(fx), image.width);
        const std::size_t y1 = std::min(y0 + 1, image.height - 1), x1 = std::min(x0 + 1, image.width - 1);
        const double ty = fy - y0, tx = fx - x0;
        const double top = image.at(c, y0, x0) * (1 - tx) + image.at(c, y0, x1) * tx;
        const double bottom = image.at(c, y1, x0) * (1 - tx) + image.at(c, y1, x1) * tx;
        return top * (1 - ty) + bottom * ty;
    });
}

Image resize_nearest(const Image& image, std::size_t height, std::size_t width)
{
    if (image.height == height && image.width == width) return image;
    return resample(image, height, width, [&](std::size_t c, double fy, double fx) {
        const auto y = static_cast<std::size_t>(std::clamp(std::floor(fy + 0.5), 0.0, image.height - 1.0));
        const auto x = static_cast<std::size_t>(std::clamp(std::floor(fx + 0.5), 0.0, image.width - 1.0));
        return image.at(c, y, x);
    });
}

Image to_rgb(const Image& image)
{
    if (image.channels == 3) return image;
    Image out{image.width, image.height, 3, {}};
    for (int c = 0; c < 3; ++c) out.values.insert(out.values.end(), image.values.begin(), image.values.end());
    return out;
}

Image to_gray(const Image& image)
{
    if (image.channels == 1) return image;
    Image out{image.width, image.height, 1, std::vector<double>(image.height * image.width, 0.0)};
    for (std::size_t c = 0; c < image.channels; ++c) {
        for (std::size_t i = 0; i < out.values.size(); ++i) {
            out.values[i] += image.values[c * out.values.size() + i] / image.channels;
        }
    }
    return out;
}

} // namespace s2m
