#ifndef MVFACE_SURF_HPP
#define MVFACE_SURF_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <limits>
#include <numbers>
#include <optional>
#include <ostream>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "mvface/error.hpp"
#include "mvface/image.hpp"

namespace mvface {

struct HessianResponse {
    double det = 0.0;
    int laplacian_sign = 1;
    double dxx = 0.0;
    double dyy = 0.0;
    double dxy = 0.0;
};

struct InterestPoint {
    double x = 0.0;
    double y = 0.0;
    double scale = 1.2;
    double response = 0.0;
    int laplacian_sign = 1;
    double orientation = 0.0;
    // Scale-space sample that produced the point, before sub-pixel refinement.
    int sample_x = 0;
    int sample_y = 0;
    int filter_size = 9;
    int octave = 0;
};

using Descriptor128 = std::array<double, 128>;

struct Feature {
    InterestPoint point;
    Descriptor128 descriptor{};
};

struct DetectorConfig {
    int octaves = 4;
    int intervals_per_octave = 4;
    double response_threshold = 1e-4;
    double hessian_weight = 0.9;
    bool upright = false;
    // Drop a point when a stronger one of the same sign from another octave
    // sits within half a scale of it (the octaves overlap in filter size).
    bool merge_octave_duplicates = true;

    void validate() const {
        if (octaves < 1) throw Error(Errc::invalid_argument, "detector: octaves must be >= 1");
        if (intervals_per_octave < 3) throw Error(Errc::invalid_argument, "detector: intervals must be >= 3");
        if (!(response_threshold >= 0.0)) throw Error(Errc::invalid_argument, "detector: threshold must be >= 0");
        if (!(hessian_weight > 0.0 && hessian_weight <= 1.0))
            throw Error(Errc::invalid_argument, "detector: hessian weight must be in (0, 1]");
    }
};

/// Box-filter size used at (octave, interval), both zero-based: 9, 15, 21, 27
/// in the first octave, with the size increment doubling per octave.
constexpr int surf_filter_size(int octave, int interval) noexcept {
    return 3 * ((1 << (octave + 1)) * (interval + 1) + 1);
}

constexpr double filter_scale(double filter_size) noexcept { return 1.2 * filter_size / 9.0; }

constexpr double hessian_determinant(double dxx, double dyy, double dxy, double w) noexcept {
    return dxx * dyy - (w * dxy) * (w * dxy);
}

namespace detail {

inline constexpr double kTraceTieTolerance = 1e-12;

inline HessianResponse hessian_unchecked(const IntegralImage& ii, std::ptrdiff_t x, std::ptrdiff_t y, int filter,
                                         double w) noexcept {
    const std::ptrdiff_t l = filter / 3;
    const std::ptrdiff_t b = (filter - 1) / 2;
    const std::ptrdiff_t h = l / 2;
    // Second derivative along x: full-width band minus three times the centre lobe.
    const double dxx = ii.sum(x - b, y - l + 1, x + b, y + l - 1) - 3.0 * ii.sum(x - h, y - l + 1, x - h + l - 1, y + l - 1);
    const double dyy = ii.sum(x - l + 1, y - b, x + l - 1, y + b) - 3.0 * ii.sum(x - l + 1, y - h, x + l - 1, y - h + l - 1);
    const double dxy = ii.sum(x - l, y - l, x - 1, y - 1) + ii.sum(x + 1, y + 1, x + l, y + l) -
                       ii.sum(x + 1, y - l, x + l, y - 1) - ii.sum(x - l, y + 1, x - 1, y + l);
    const double inv_area = 1.0 / (static_cast<double>(filter) * filter);
    HessianResponse r;
    r.dxx = dxx * inv_area;
    r.dyy = dyy * inv_area;
    r.dxy = dxy * inv_area;
    r.det = hessian_determinant(r.dxx, r.dyy, r.dxy, w);
    // A trace within integral-table rounding of zero is a tie and counts as +1.
    r.laplacian_sign = (r.dxx + r.dyy) >= -kTraceTieTolerance ? 1 : -1;
    return r;
}

inline bool hessian_fits(const IntegralImage& ii, std::ptrdiff_t x, std::ptrdiff_t y, int filter) noexcept {
    const std::ptrdiff_t b = (filter - 1) / 2;
    return ii.contains(x - b, y - b, x + b, y + b);
}

}  // namespace detail

/// Approximated Hessian at pixel (x, y) for an odd box-filter size >= 9.
inline HessianResponse hessian_response(const IntegralImage& ii, std::ptrdiff_t x, std::ptrdiff_t y, int filter_size,
                                        double w) {
    if (filter_size < 9 || filter_size % 3 != 0 || filter_size % 2 == 0)
        throw Error(Errc::invalid_argument, "hessian_response: filter size must be an odd multiple of 3, >= 9");
    if (!detail::hessian_fits(ii, x, y, filter_size))
        throw Error(Errc::out_of_bounds, "hessian_response: filter footprint outside image");
    return detail::hessian_unchecked(ii, x, y, filter_size, w);
}

namespace detail {

struct ResponseLayer {
    int filter = 9;
    int step = 1;
    std::ptrdiff_t cols = 0;
    std::ptrdiff_t rows = 0;
    std::vector<double> det;
    std::vector<signed char> sign;
    std::vector<unsigned char> valid;

    double at(std::ptrdiff_t c, std::ptrdiff_t r) const noexcept { return det[r * cols + c]; }
    bool ok(std::ptrdiff_t c, std::ptrdiff_t r) const noexcept {
        return c >= 0 && r >= 0 && c < cols && r < rows && valid[r * cols + c];
    }
};

inline ResponseLayer build_layer(const IntegralImage& ii, int filter, int step, double w) {
    ResponseLayer layer;
    layer.filter = filter;
    layer.step = step;
    layer.cols = static_cast<std::ptrdiff_t>(ii.width()) / step;
    layer.rows = static_cast<std::ptrdiff_t>(ii.height()) / step;
    const auto n = static_cast<std::size_t>(layer.cols * layer.rows);
    layer.det.assign(n, 0.0);
    layer.sign.assign(n, 1);
    layer.valid.assign(n, 0);
    for (std::ptrdiff_t r = 0; r < layer.rows; ++r)
        for (std::ptrdiff_t c = 0; c < layer.cols; ++c) {
            const std::ptrdiff_t x = c * step, y = r * step;
            if (!hessian_fits(ii, x, y, filter)) continue;
            const auto h = hessian_unchecked(ii, x, y, filter, w);
            const auto i = static_cast<std::size_t>(r * layer.cols + c);
            layer.det[i] = h.det;
            layer.sign[i] = static_cast<signed char>(h.laplacian_sign);
            layer.valid[i] = 1;
        }
    return layer;
}

// 3x3x3 strict maximum; every neighbour must have a valid response.
inline bool is_extremum(const ResponseLayer& t, const ResponseLayer& m, const ResponseLayer& b, std::ptrdiff_t c,
                        std::ptrdiff_t r, double threshold) noexcept {
    if (!m.ok(c, r)) return false;
    const double v = m.at(c, r);
    if (!(v > threshold)) return false;
    for (std::ptrdiff_t dr = -1; dr <= 1; ++dr)
        for (std::ptrdiff_t dc = -1; dc <= 1; ++dc) {
            for (const ResponseLayer* layer : {&t, &m, &b}) {
                if (!layer->ok(c + dc, r + dr)) return false;
                if (layer == &m && dr == 0 && dc == 0) continue;
                if (layer->at(c + dc, r + dr) >= v) return false;
            }
        }
    return true;
}

// Quadratic fit of the response around a discrete maximum. Returns the
// (dx, dy, ds) offset in grid units; a degenerate fit, or one whose extremum
// lies outside the sample cell, yields a zero offset (the sample itself).
inline Eigen::Vector3d refine(const ResponseLayer& t, const ResponseLayer& m, const ResponseLayer& b,
                                             std::ptrdiff_t c, std::ptrdiff_t r) {
    const double v = m.at(c, r);
    Eigen::Vector3d grad((m.at(c + 1, r) - m.at(c - 1, r)) / 2.0, (m.at(c, r + 1) - m.at(c, r - 1)) / 2.0,
                         (t.at(c, r) - b.at(c, r)) / 2.0);
    const double dxx = m.at(c + 1, r) + m.at(c - 1, r) - 2.0 * v;
    const double dyy = m.at(c, r + 1) + m.at(c, r - 1) - 2.0 * v;
    const double dss = t.at(c, r) + b.at(c, r) - 2.0 * v;
    const double dxy = (m.at(c + 1, r + 1) - m.at(c - 1, r + 1) - m.at(c + 1, r - 1) + m.at(c - 1, r - 1)) / 4.0;
    const double dxs = (t.at(c + 1, r) - t.at(c - 1, r) - b.at(c + 1, r) + b.at(c - 1, r)) / 4.0;
    const double dys = (t.at(c, r + 1) - t.at(c, r - 1) - b.at(c, r + 1) + b.at(c, r - 1)) / 4.0;
    Eigen::Matrix3d hess;
    hess << dxx, dxy, dxs, dxy, dyy, dys, dxs, dys, dss;
    Eigen::FullPivLU<Eigen::Matrix3d> lu(hess);
    if (!lu.isInvertible()) return Eigen::Vector3d::Zero();
    Eigen::Vector3d offset = -lu.solve(grad);
    if (!offset.allFinite() || offset.cwiseAbs().maxCoeff() >= 0.5) return Eigen::Vector3d::Zero();
    return offset;
}

}  // namespace detail

/// Orders points by response (descending), then y, then x (ascending).
inline bool response_order(const InterestPoint& a, const InterestPoint& b) noexcept {
    if (a.response != b.response) return a.response > b.response;
    if (a.y != b.y) return a.y < b.y;
    return a.x < b.x;
}

/// Fast-Hessian detector over the box-filter scale space.
inline std::vector<InterestPoint> detect(const GrayImage& img, const DetectorConfig& cfg = {}) {
    cfg.validate();
    if (img.width() < 32 || img.height() < 32)
        throw Error(Errc::invalid_argument, "detect: image must be at least 32x32");
    const IntegralImage ii(img);
    std::vector<InterestPoint> points;
    for (int o = 0; o < cfg.octaves; ++o) {
        const int step = 1 << o;
        // Octaves whose smallest filter no longer fits contribute nothing.
        if (surf_filter_size(o, 0) > static_cast<int>(std::min(img.width(), img.height()))) break;
        std::vector<detail::ResponseLayer> layers;
        layers.reserve(static_cast<std::size_t>(cfg.intervals_per_octave));
        for (int i = 0; i < cfg.intervals_per_octave; ++i)
            layers.push_back(detail::build_layer(ii, surf_filter_size(o, i), step, cfg.hessian_weight));

        for (int i = 1; i + 1 < cfg.intervals_per_octave; ++i) {
            const auto& b = layers[static_cast<std::size_t>(i - 1)];
            const auto& m = layers[static_cast<std::size_t>(i)];
            const auto& t = layers[static_cast<std::size_t>(i + 1)];
            for (std::ptrdiff_t r = 1; r + 1 < m.rows; ++r)
                for (std::ptrdiff_t c = 1; c + 1 < m.cols; ++c) {
                    if (!detail::is_extremum(t, m, b, c, r, cfg.response_threshold)) continue;
                    const Eigen::Vector3d off = detail::refine(t, m, b, c, r);
                    InterestPoint p;
                    p.x = (static_cast<double>(c) + off(0)) * step;
                    p.y = (static_cast<double>(r) + off(1)) * step;
                    p.scale = filter_scale(m.filter + off(2) * (m.filter - b.filter));
                    p.response = m.at(c, r);
                    p.laplacian_sign = m.sign[static_cast<std::size_t>(r * m.cols + c)];
                    p.sample_x = static_cast<int>(c * step);
                    p.sample_y = static_cast<int>(r * step);
                    p.filter_size = m.filter;
                    p.octave = o;
                    if (p.x < 0.0 || p.y < 0.0 || p.x >= static_cast<double>(img.width()) ||
                        p.y >= static_cast<double>(img.height()))
                        continue;
                    points.push_back(p);
                }
        }
    }
    std::sort(points.begin(), points.end(), response_order);
    if (!cfg.merge_octave_duplicates) return points;
    std::vector<InterestPoint> kept;
    kept.reserve(points.size());
    for (const auto& p : points) {
        const bool duplicate = std::any_of(kept.begin(), kept.end(), [&](const InterestPoint& q) {
            const double reach = 0.5 * std::max(p.scale, q.scale);
            return q.octave != p.octave && q.laplacian_sign == p.laplacian_sign &&
                   std::hypot(q.x - p.x, q.y - p.y) <= reach;
        });
        if (!duplicate) kept.push_back(p);
    }
    return kept;
}

namespace detail {

// Haar wavelet responses of side `size` (even) centred at (x, y).
inline double haar_x(const IntegralImage& ii, std::ptrdiff_t x, std::ptrdiff_t y, std::ptrdiff_t size) noexcept {
    const std::ptrdiff_t h = size / 2;
    return ii.sum(x, y - h, x + h - 1, y + h - 1) - ii.sum(x - h, y - h, x - 1, y + h - 1);
}

inline double haar_y(const IntegralImage& ii, std::ptrdiff_t x, std::ptrdiff_t y, std::ptrdiff_t size) noexcept {
    const std::ptrdiff_t h = size / 2;
    return ii.sum(x - h, y, x + h - 1, y + h - 1) - ii.sum(x - h, y - h, x + h - 1, y - 1);
}

inline bool haar_fits(const IntegralImage& ii, std::ptrdiff_t x, std::ptrdiff_t y, std::ptrdiff_t size) noexcept {
    const std::ptrdiff_t h = size / 2;
    return ii.contains(x - h, y - h, x + h - 1, y + h - 1);
}

inline double wrap_angle(double a) noexcept {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    a = std::fmod(a, two_pi);
    if (a < 0.0) a += two_pi;
    if (a >= two_pi) a = 0.0;
    return a;
}

inline std::ptrdiff_t round_to_int(double v) noexcept { return static_cast<std::ptrdiff_t>(std::lround(v)); }

}  // namespace detail

/// Dominant orientation from Gaussian-weighted Haar responses in a disc of
/// radius 6*scale, scanned with a pi/3 sliding sector. Returns nothing when
/// the sampling disc leaves the image.
inline std::optional<double> assign_orientation(const IntegralImage& ii, const InterestPoint& p,
                                                const DetectorConfig& cfg = {}) {
    if (cfg.upright) return 0.0;
    const std::ptrdiff_t s = std::max<std::ptrdiff_t>(1, detail::round_to_int(p.scale));
    const std::ptrdiff_t cx = detail::round_to_int(p.x);
    const std::ptrdiff_t cy = detail::round_to_int(p.y);
    if (!ii.contains(cx - 7 * s, cy - 7 * s, cx + 7 * s - 1, cy + 7 * s - 1)) return std::nullopt;

    struct Sample {
        double dx, dy, angle;
    };
    std::vector<Sample> samples;
    samples.reserve(113);
    for (int j = -6; j <= 6; ++j)
        for (int i = -6; i <= 6; ++i) {
            if (i * i + j * j >= 36) continue;
            const double g = std::exp(-(i * i + j * j) / (2.0 * 2.5 * 2.5));
            const std::ptrdiff_t sx = cx + i * s, sy = cy + j * s;
            const double dx = g * detail::haar_x(ii, sx, sy, 4 * s);
            const double dy = g * detail::haar_y(ii, sx, sy, 4 * s);
            samples.push_back({dx, dy, detail::wrap_angle(std::atan2(dy, dx))});
        }

    constexpr double window = std::numbers::pi / 3.0;
    constexpr double two_pi = 2.0 * std::numbers::pi;
    double best = -1.0, best_x = 0.0, best_y = 0.0;
    for (double start = 0.0; start < two_pi; start += 0.15) {
        const double end = start + window;
        double sum_x = 0.0, sum_y = 0.0;
        for (const auto& smp : samples) {
            const bool inside = end < two_pi ? (smp.angle >= start && smp.angle < end)
                                             : (smp.angle >= start || smp.angle < end - two_pi);
            if (inside) {
                sum_x += smp.dx;
                sum_y += smp.dy;
            }
        }
        const double mag = sum_x * sum_x + sum_y * sum_y;
        if (mag > best) {
            best = mag;
            best_x = sum_x;
            best_y = sum_y;
        }
    }
    return detail::wrap_angle(std::atan2(best_y, best_x));
}

/// Extended SURF descriptor: 4x4 subregions of 5x5 samples over a
/// 20*scale oriented window. Each subregion stores the sums of dx and |dx|
/// split by the sign of dy, and of dy and |dy| split by the sign of dx.
/// Returns nothing if the window leaves the image or is featureless.
inline std::optional<Descriptor128> describe(const IntegralImage& ii, const InterestPoint& p) {
    const double s = p.scale;
    const std::ptrdiff_t haar = 2 * std::max<std::ptrdiff_t>(1, detail::round_to_int(s));
    const double co = std::cos(p.orientation), si = std::sin(p.orientation);

    struct Sample {
        std::ptrdiff_t x, y;
        double weight;
        int bin;
    };
    std::array<Sample, 400> samples{};
    std::size_t n = 0;
    for (int b = 0; b < 4; ++b)
        for (int a = 0; a < 4; ++a)
            for (int v = 0; v < 5; ++v)
                for (int u = 0; u < 5; ++u) {
                    const double lu = -10.0 + 5 * a + u + 0.5;
                    const double lv = -10.0 + 5 * b + v + 0.5;
                    const auto sx = detail::round_to_int(p.x + s * (lu * co - lv * si));
                    const auto sy = detail::round_to_int(p.y + s * (lu * si + lv * co));
                    if (!detail::haar_fits(ii, sx, sy, haar)) return std::nullopt;
                    samples[n++] = {sx, sy, std::exp(-(lu * lu + lv * lv) / (2.0 * 3.3 * 3.3)), b * 4 + a};
                }

    Descriptor128 desc{};
    for (const auto& smp : samples) {
        const double rx = detail::haar_x(ii, smp.x, smp.y, haar);
        const double ry = detail::haar_y(ii, smp.x, smp.y, haar);
        const double dx = smp.weight * (rx * co + ry * si);
        const double dy = smp.weight * (-rx * si + ry * co);
        double* d = &desc[static_cast<std::size_t>(smp.bin) * 8];
        if (dy < 0.0) {
            d[0] += dx;
            d[1] += std::abs(dx);
        } else {
            d[2] += dx;
            d[3] += std::abs(dx);
        }
        if (dx < 0.0) {
            d[4] += dy;
            d[5] += std::abs(dy);
        } else {
            d[6] += dy;
            d[7] += std::abs(dy);
        }
    }
    double norm = 0.0;
    for (double v : desc) norm += v * v;
    norm = std::sqrt(norm);
    if (!(norm > 0.0) || !std::isfinite(norm)) return std::nullopt;
    for (double& v : desc) v /= norm;
    return desc;
}

struct Extraction {
    std::vector<Feature> features;
    std::size_t skipped = 0;  // detected points without room for orientation/descriptor
};

/// Detect, orient and describe. Output keeps the detector's response order.
inline Extraction extract_features(const GrayImage& img, const DetectorConfig& cfg = {}) {
    const IntegralImage ii(img);
    Extraction out;
    for (auto& p : detect(img, cfg)) {
        const auto angle = assign_orientation(ii, p, cfg);
        if (!angle) {
            ++out.skipped;
            continue;
        }
        p.orientation = *angle;
        const auto desc = describe(ii, p);
        if (!desc) {
            ++out.skipped;
            continue;
        }
        out.features.push_back({p, *desc});
    }
    return out;
}

inline double descriptor_distance(const Descriptor128& a, const Descriptor128& b) noexcept {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return std::sqrt(s);
}

/// Ratio-test matching gated on equal Laplacian sign. A pair (i, j) is kept
/// when nearest <= ratio * second-nearest; a lone candidate always passes.
/// Distance ties go to the lower b index.
inline std::vector<std::pair<std::size_t, std::size_t>> match_descriptors(const std::vector<Feature>& a,
                                                                          const std::vector<Feature>& b,
                                                                          double ratio) {
    if (!(ratio > 0.0 && ratio <= 1.0)) throw Error(Errc::invalid_argument, "match_descriptors: ratio must be in (0,1]");
    std::vector<std::pair<std::size_t, std::size_t>> matches;
    constexpr double inf = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < a.size(); ++i) {
        double d1 = inf, d2 = inf;
        std::size_t best = b.size();
        for (std::size_t j = 0; j < b.size(); ++j) {
            if (b[j].point.laplacian_sign != a[i].point.laplacian_sign) continue;
            const double d = descriptor_distance(a[i].descriptor, b[j].descriptor);
            if (d < d1) {
                d2 = d1;
                d1 = d;
                best = j;
            } else if (d < d2) {
                d2 = d;
            }
        }
        if (best < b.size() && d1 <= ratio * d2) matches.emplace_back(i, best);
    }
    return matches;
}

/// Debug dump: `x,y,scale,response,sign,orientation`, six decimals.
inline void write_keypoints_csv(std::ostream& out, const std::vector<InterestPoint>& points) {
    out << "x,y,scale,response,sign,orientation\n";
    char buf[256];
    for (const auto& p : points) {
        std::snprintf(buf, sizeof buf, "%.6f,%.6f,%.6f,%.6f,%d,%.6f\n", p.x, p.y, p.scale, p.response,
                      p.laplacian_sign, p.orientation);
        out << buf;
    }
}

}  // namespace mvface

#endif  // MVFACE_SURF_HPP
