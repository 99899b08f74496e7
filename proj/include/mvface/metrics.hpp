#ifndef MVFACE_METRICS_HPP
#define MVFACE_METRICS_HPP

#include <cmath>
#include <cstddef>
#include <limits>

#include "mvface/error.hpp"
#include "mvface/image.hpp"

// Image quality metrics between a probe I and a gallery image G.
namespace mvface {

namespace detail {

inline void check_pair(const ImageView& I, const ImageView& G) {
    if (I.width != G.width || I.height != G.height || I.data.size() != G.data.size())
        throw Error(Errc::invalid_argument, "metric: image dimensions differ");
    if (I.data.empty()) throw Error(Errc::empty_image, "metric: empty image");
}

inline double sum_sq_diff(const ImageView& I, const ImageView& G) {
    double s = 0.0;
    for (std::size_t i = 0; i < I.data.size(); ++i) {
        const double d = I.data[i] - G.data[i];
        s += d * d;
    }
    return s;
}

inline double sum_sq(const ImageView& I) {
    double s = 0.0;
    for (double v : I.data) s += v * v;
    return s;
}

}  // namespace detail

/// Mean squared difference, normalized by W*H.
inline double mse(const ImageView& I, const ImageView& G) {
    detail::check_pair(I, G);
    return detail::sum_sq_diff(I, G) / static_cast<double>(I.data.size());
}

inline double rmse(const ImageView& I, const ImageView& G) { return std::sqrt(mse(I, G)); }

inline double mae(const ImageView& I, const ImageView& G) {
    detail::check_pair(I, G);
    double s = 0.0;
    for (std::size_t i = 0; i < I.data.size(); ++i) s += std::abs(I.data[i] - G.data[i]);
    return s / static_cast<double>(I.data.size());
}

/// Percentage fit error, 100 * ||I - G||_F / ||I||_F.
inline double pfe(const ImageView& I, const ImageView& G) {
    detail::check_pair(I, G);
    const double denom = detail::sum_sq(I);
    if (!(denom > 0.0)) throw Error(Errc::numeric, "pfe: probe image has zero norm");
    return 100.0 * std::sqrt(detail::sum_sq_diff(I, G)) / std::sqrt(denom);
}

/// 10 log10(sum I^2 / sum (I-G)^2); +inf for identical images.
inline double snr_db(const ImageView& I, const ImageView& G) {
    detail::check_pair(I, G);
    const double noise = detail::sum_sq_diff(I, G);
    if (noise == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(detail::sum_sq(I) / noise);
}

/// Peak SNR. The default form divides I_max^2 by the *sum* of squared
/// differences; `conventional` divides by their mean instead. The two differ
/// by exactly 10 log10(W*H) dB. +inf for identical images.
inline double psnr_db(const ImageView& I, const ImageView& G, double i_max = 1.0, bool conventional = false) {
    detail::check_pair(I, G);
    double noise = detail::sum_sq_diff(I, G);
    if (noise == 0.0) return std::numeric_limits<double>::infinity();
    if (conventional) noise /= static_cast<double>(I.data.size());
    return 10.0 * std::log10(i_max * i_max / noise);
}

struct MetricReport {
    double mse = 0.0;
    double rmse = 0.0;
    double mae = 0.0;
    double pfe_percent = 0.0;
    double snr_db = 0.0;
    double psnr_db = 0.0;               // sum-denominator form
    double psnr_conventional_db = 0.0;  // mean-denominator form
};

inline MetricReport compute_metrics(const ImageView& I, const ImageView& G, double i_max = 1.0) {
    MetricReport r;
    r.mse = mse(I, G);
    r.rmse = std::sqrt(r.mse);
    r.mae = mae(I, G);
    r.pfe_percent = pfe(I, G);
    r.snr_db = snr_db(I, G);
    r.psnr_db = psnr_db(I, G, i_max, false);
    r.psnr_conventional_db = psnr_db(I, G, i_max, true);
    return r;
}

}  // namespace mvface

#endif  // MVFACE_METRICS_HPP
