#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>

#include "mvface/image.hpp"

namespace test {

inline mvface::GrayImage random_image(std::size_t w, std::size_t h, std::uint64_t seed, double lo = 0.0,
                                      double hi = 1.0) {
    std::mt19937_64 gen(seed * 7919 + 17);
    std::uniform_real_distribution<double> d(lo, hi);
    std::vector<double> px(w * h);
    for (double& v : px) v = d(gen);
    return mvface::GrayImage(w, h, std::move(px));
}

/// Gaussian spot of the given polarity on a flat background.
inline mvface::GrayImage blob_image(std::size_t w, std::size_t h, double cx, double cy, double radius,
                                    double background = 0.2, double peak = 0.9) {
    mvface::GrayImage img(w, h, background);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            const double r2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
            img.set(x, y, background + (peak - background) * std::exp(-r2 / (2 * radius * radius)));
        }
    return img;
}

class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
        path_ = std::filesystem::temp_directory_path() /
                ("mvface_test_" + std::to_string(stamp) + "_" + std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const noexcept { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace test
