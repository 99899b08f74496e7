#ifndef MVFACE_IMAGE_HPP
#define MVFACE_IMAGE_HPP

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include <png.h>

#include "mvface/error.hpp"
#include "mvface/random.hpp"

namespace mvface {

// Non-owning, unclamped raster view. Metrics accept this so they can be
// evaluated on arbitrary planes, not only on normalized images.
struct ImageView {
    std::size_t width = 0;
    std::size_t height = 0;
    std::span<const double> data;
};

/// Row-major grayscale raster with intensities in [0, 1].
class GrayImage {
public:
    GrayImage() = default;

    GrayImage(std::size_t width, std::size_t height, double fill = 0.0)
        : width_(width), height_(height), data_(width * height, std::clamp(fill, 0.0, 1.0)) {}

    /// Takes ownership of `data`; values are clamped into [0, 1].
    GrayImage(std::size_t width, std::size_t height, std::vector<double> data)
        : width_(width), height_(height), data_(std::move(data)) {
        if (data_.size() != width_ * height_)
            throw Error(Errc::invalid_argument, "GrayImage: data length does not match width*height");
        for (double& v : data_) {
            if (!std::isfinite(v)) throw Error(Errc::numeric, "GrayImage: non-finite intensity");
            v = std::clamp(v, 0.0, 1.0);
        }
    }

    std::size_t width() const noexcept { return width_; }
    std::size_t height() const noexcept { return height_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double at(std::size_t x, std::size_t y) const noexcept { return data_[y * width_ + x]; }
    std::span<const double> pixels() const noexcept { return data_; }

    void set(std::size_t x, std::size_t y, double v) noexcept {
        data_[y * width_ + x] = std::clamp(v, 0.0, 1.0);
    }

    ImageView view() const noexcept { return {width_, height_, data_}; }
    operator ImageView() const noexcept { return view(); }

    friend bool operator==(const GrayImage&, const GrayImage&) = default;

private:
    std::size_t width_ = 0;
    std::size_t height_ = 0;
    std::vector<double> data_;
};

/// Inclusive prefix-sum table: at(x, y) = sum of I(i, j) for i <= x, j <= y.
class IntegralImage {
public:
    IntegralImage() = default;

    explicit IntegralImage(const GrayImage& img) : width_(img.width()), height_(img.height()) {
        if (img.empty()) throw Error(Errc::empty_image, "integral_image: empty image");
        table_.resize(width_ * height_);
        const auto px = img.pixels();
        for (std::size_t y = 0; y < height_; ++y) {
            double row = 0.0;
            for (std::size_t x = 0; x < width_; ++x) {
                row += px[y * width_ + x];
                table_[y * width_ + x] = row + (y > 0 ? table_[(y - 1) * width_ + x] : 0.0);
            }
        }
    }

    std::size_t width() const noexcept { return width_; }
    std::size_t height() const noexcept { return height_; }
    double at(std::size_t x, std::size_t y) const noexcept { return table_[y * width_ + x]; }
    std::span<const double> table() const noexcept { return table_; }

    // Unchecked four-lookup rectangle sum over [x0,x1]x[y0,y1]; callers
    // guarantee 0 <= x0 <= x1 < width and likewise for y.
    double sum(std::ptrdiff_t x0, std::ptrdiff_t y0, std::ptrdiff_t x1, std::ptrdiff_t y1) const noexcept {
        const auto w = static_cast<std::ptrdiff_t>(width_);
        const double d = table_[y1 * w + x1];
        const double b = x0 > 0 ? table_[y1 * w + x0 - 1] : 0.0;
        const double c = y0 > 0 ? table_[(y0 - 1) * w + x1] : 0.0;
        const double a = (x0 > 0 && y0 > 0) ? table_[(y0 - 1) * w + x0 - 1] : 0.0;
        return d - b - c + a;
    }

    bool contains(std::ptrdiff_t x0, std::ptrdiff_t y0, std::ptrdiff_t x1, std::ptrdiff_t y1) const noexcept {
        return x0 >= 0 && y0 >= 0 && x0 <= x1 && y0 <= y1 && x1 < static_cast<std::ptrdiff_t>(width_) &&
               y1 < static_cast<std::ptrdiff_t>(height_);
    }

private:
    std::size_t width_ = 0;
    std::size_t height_ = 0;
    std::vector<double> table_;
};

inline IntegralImage integral_image(const GrayImage& img) { return IntegralImage(img); }

inline double box_sum(const IntegralImage& ii, std::ptrdiff_t x0, std::ptrdiff_t y0, std::ptrdiff_t x1,
                      std::ptrdiff_t y1) {
    if (!ii.contains(x0, y0, x1, y1)) throw Error(Errc::out_of_bounds, "box_sum: rectangle outside image");
    return ii.sum(x0, y0, x1, y1);
}

/// Additive noise parameters. `variance` is the variance of the zero-mean
/// Gaussian, not its standard deviation.
struct NoiseSpec {
    double variance = 0.0;
    std::uint64_t seed = 0;
};

inline GrayImage add_gaussian_noise(const GrayImage& img, const NoiseSpec& spec) {
    if (!(spec.variance >= 0.0)) throw Error(Errc::invalid_argument, "add_gaussian_noise: negative variance");
    if (spec.variance == 0.0) return img;
    const double stddev = std::sqrt(spec.variance);
    Rng rng(spec.seed);
    std::vector<double> out(img.pixels().begin(), img.pixels().end());
    for (double& v : out) v = std::clamp(v + stddev * rng.normal(), 0.0, 1.0);
    return GrayImage(img.width(), img.height(), std::move(out));
}

/// k x k box average with replicate padding.
inline GrayImage mean_filter(const GrayImage& img, int k = 3) {
    if (k < 1 || k % 2 == 0) throw Error(Errc::invalid_argument, "mean_filter: window must be odd and >= 1");
    if (img.empty() || k == 1) return img;
    const auto w = static_cast<std::ptrdiff_t>(img.width());
    const auto h = static_cast<std::ptrdiff_t>(img.height());
    const std::ptrdiff_t r = k / 2;
    const auto px = img.pixels();
    auto clampi = [](std::ptrdiff_t v, std::ptrdiff_t hi) { return std::clamp<std::ptrdiff_t>(v, 0, hi - 1); };

    std::vector<double> rows(px.size());
    for (std::ptrdiff_t y = 0; y < h; ++y)
        for (std::ptrdiff_t x = 0; x < w; ++x) {
            double s = 0.0;
            for (std::ptrdiff_t d = -r; d <= r; ++d) s += px[y * w + clampi(x + d, w)];
            rows[y * w + x] = s;
        }

    const auto [lo_it, hi_it] = std::minmax_element(px.begin(), px.end());
    const double lo = *lo_it, hi = *hi_it;
    const double norm = 1.0 / static_cast<double>(k * k);
    std::vector<double> out(px.size());
    for (std::ptrdiff_t y = 0; y < h; ++y)
        for (std::ptrdiff_t x = 0; x < w; ++x) {
            double s = 0.0;
            for (std::ptrdiff_t d = -r; d <= r; ++d) s += rows[clampi(y + d, h) * w + x];
            // rounding in the sum must not push the mean outside the input range
            out[y * w + x] = std::clamp(s * norm, lo, hi);
        }
    return GrayImage(img.width(), img.height(), std::move(out));
}

// ---------------------------------------------------------------------------
// I/O: binary PGM (P5, maxval 255) and 8-bit PNG in; P5 PGM out.

namespace detail {

inline std::vector<unsigned char> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::io, "cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline GrayImage parse_pgm(const std::vector<unsigned char>& bytes, const std::string& name) {
    std::size_t pos = 2;
    auto skip_space = [&] {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(bytes[pos])) {
                ++pos;
            } else {
                break;
            }
        }
    };
    auto read_uint = [&]() -> std::size_t {
        skip_space();
        if (pos >= bytes.size() || !std::isdigit(bytes[pos]))
            throw Error(Errc::unsupported_format, name + ": malformed PGM header");
        std::size_t v = 0;
        while (pos < bytes.size() && std::isdigit(bytes[pos])) {
            v = v * 10 + static_cast<std::size_t>(bytes[pos] - '0');
            if (v > (1u << 24)) throw Error(Errc::unsupported_format, name + ": PGM dimension too large");
            ++pos;
        }
        return v;
    };
    const std::size_t w = read_uint();
    const std::size_t h = read_uint();
    const std::size_t maxval = read_uint();
    if (maxval != 255) throw Error(Errc::unsupported_format, name + ": only maxval 255 PGM is supported");
    if (pos >= bytes.size() || !std::isspace(bytes[pos]))
        throw Error(Errc::unsupported_format, name + ": malformed PGM header");
    ++pos;
    if (w == 0 || h == 0) throw Error(Errc::empty_image, name + ": zero-dimension image");
    if (bytes.size() - pos < w * h) throw Error(Errc::io, name + ": truncated PGM data");
    std::vector<double> data(w * h);
    for (std::size_t i = 0; i < w * h; ++i) data[i] = bytes[pos + i] / 255.0;
    return GrayImage(w, h, std::move(data));
}

inline GrayImage parse_png(const std::vector<unsigned char>& bytes, const std::string& name) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size()))
        throw Error(Errc::unsupported_format, name + ": " + image.message);
    if (image.format & PNG_FORMAT_FLAG_LINEAR) {
        png_image_free(&image);
        throw Error(Errc::unsupported_format, name + ": only 8-bit PNG is supported");
    }
    if (image.width == 0 || image.height == 0) {
        png_image_free(&image);
        throw Error(Errc::empty_image, name + ": zero-dimension image");
    }
    image.format = PNG_FORMAT_RGBA;
    std::vector<unsigned char> buf(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr))
        throw Error(Errc::unsupported_format, name + ": " + image.message);
    const std::size_t n = std::size_t{image.width} * image.height;
    std::vector<double> data(n);
    for (std::size_t i = 0; i < n; ++i) {
        const unsigned char* p = &buf[4 * i];
        data[i] = (0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]) / 255.0;
    }
    return GrayImage(image.width, image.height, std::move(data));
}

}  // namespace detail

inline GrayImage load_image(const std::filesystem::path& path) {
    const auto bytes = detail::read_file(path);
    const std::string name = path.string();
    if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '5') return detail::parse_pgm(bytes, name);
    static constexpr unsigned char png_sig[8] = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
    if (bytes.size() >= 8 && std::equal(std::begin(png_sig), std::end(png_sig), bytes.begin()))
        return detail::parse_png(bytes, name);
    throw Error(Errc::unsupported_format, name + ": not a P5 PGM or PNG file");
}

inline std::uint8_t to_byte(double v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

inline void save_pgm(const GrayImage& img, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(Errc::io, "cannot write " + path.string());
    out << "P5\n" << img.width() << ' ' << img.height() << "\n255\n";
    std::vector<char> bytes(img.size());
    std::transform(img.pixels().begin(), img.pixels().end(), bytes.begin(),
                   [](double v) { return static_cast<char>(to_byte(v)); });
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(Errc::io, "write failed: " + path.string());
}

}  // namespace mvface

#endif  // MVFACE_IMAGE_HPP
