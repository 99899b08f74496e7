#ifndef MVFACE_DATAGEN_HPP
#define MVFACE_DATAGEN_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include "mvface/error.hpp"
#include "mvface/image.hpp"
#include "mvface/layout.hpp"
#include "mvface/random.hpp"

namespace mvface {

/// Parametric face drawing. All lengths are in pixels relative to the head
/// centre; intensities are on the [0, 1] scale.
struct SubjectSpec {
    std::uint64_t seed = 0;
    std::size_t width = 128;
    std::size_t height = 128;

    double background = 0.2;        // [0.10, 0.30]
    double background_slope = 0.0;  // [-0.10, 0.10] top-to-bottom change
    double head_rx = 42.0;          // [38, 46]
    double head_ry = 54.0;          // [50, 58]
    double skin = 0.65;             // [0.55, 0.75]
    double skin_gradient = 0.0;     // [-0.12, 0.12] top-to-bottom change
    double eye_spacing = 32.0;      // [24, 40] centre to centre
    double eye_y = -12.0;           // [-18, -8]
    double eye_radius = 4.5;        // [3, 6] vertical
    double eye_aspect = 1.6;        // [1.3, 2.0] horizontal / vertical
    double left_eye_darkness = 0.4;   // [0.25, 0.50]
    double right_eye_darkness = 0.35; // [0.25, 0.50]
    double nose_length = 16.0;      // [10, 24]
    double nose_width = 3.0;        // [2, 4]
    double nose_shade = 0.15;       // [0.08, 0.22]
    double mouth_y = 22.0;          // [16, 28]
    double mouth_width = 22.0;      // [14, 32]
    double mouth_height = 3.5;      // [2.5, 5]
    double mouth_darkness = 0.3;    // [0.20, 0.40]

    /// Draws every layout parameter from its documented range.
    static SubjectSpec from_seed(std::uint64_t seed, std::size_t width = 128, std::size_t height = 128) {
        Rng rng(seed);
        SubjectSpec s;
        s.seed = seed;
        s.width = width;
        s.height = height;
        s.background = rng.uniform(0.10, 0.30);
        s.background_slope = rng.uniform(-0.10, 0.10);
        s.head_rx = rng.uniform(38.0, 46.0);
        s.head_ry = rng.uniform(50.0, 58.0);
        s.skin = rng.uniform(0.55, 0.75);
        s.skin_gradient = rng.uniform(-0.12, 0.12);
        s.eye_spacing = rng.uniform(24.0, 40.0);
        s.eye_y = rng.uniform(-18.0, -8.0);
        s.eye_radius = rng.uniform(3.0, 6.0);
        s.left_eye_darkness = rng.uniform(0.25, 0.50);
        s.right_eye_darkness = rng.uniform(0.25, 0.50);
        s.nose_length = rng.uniform(10.0, 24.0);
        s.nose_width = rng.uniform(2.0, 4.0);
        s.nose_shade = rng.uniform(0.08, 0.22);
        s.mouth_y = rng.uniform(16.0, 28.0);
        s.mouth_width = rng.uniform(14.0, 32.0);
        s.mouth_height = rng.uniform(2.5, 5.0);
        s.mouth_darkness = rng.uniform(0.20, 0.40);
        s.eye_aspect = rng.uniform(1.3, 2.0);
        return s;
    }
};

struct ViewSpec {
    int yaw = 0;
    std::uint64_t jitter_seed = 0;
    double max_shift = 3.0;         // pixels
    double max_rotation_deg = 3.0;
    double max_brightness = 0.05;

    static ViewSpec exact(int yaw) { return {yaw, 0, 0.0, 0.0, 0.0}; }
};

namespace detail {

inline double smoothstep_edge(double signed_dist, double softness) noexcept {
    return 1.0 / (1.0 + std::exp(-signed_dist / softness));
}

}  // namespace detail

/// Renders one view of a subject. The features are painted on a cylinder of
/// radius head_rx that turns by the yaw angle, so features on the far side
/// are foreshortened; beyond 45 degrees the far-side eye is occluded. Jitter (shift, rotation, brightness) is applied
/// last and is fully determined by `view.jitter_seed`.
inline GrayImage render(const SubjectSpec& s, const ViewSpec& view) {
    if (!is_view_angle(view.yaw)) throw Error(Errc::invalid_argument, "render: unsupported yaw");
    Rng rng(view.jitter_seed);
    const double tx = rng.uniform(-1.0, 1.0) * view.max_shift;
    const double ty = rng.uniform(-1.0, 1.0) * view.max_shift;
    const double rot = rng.uniform(-1.0, 1.0) * view.max_rotation_deg * std::numbers::pi / 180.0;
    const double bright = rng.uniform(-1.0, 1.0) * view.max_brightness;

    const double yaw = view.yaw * std::numbers::pi / 180.0;
    const bool hide_left = view.yaw > 45;   // far eye when turned right
    const bool hide_right = view.yaw < -45;

    const double cx = (static_cast<double>(s.width) - 1.0) / 2.0;
    const double cy = (static_cast<double>(s.height) - 1.0) / 2.0;
    const double cr = std::cos(rot), sr = std::sin(rot);
    const double hh = static_cast<double>(s.height);

    std::vector<double> data(s.width * s.height);
    for (std::size_t py = 0; py < s.height; ++py)
        for (std::size_t px = 0; px < s.width; ++px) {
            // Undo jitter: output pixel -> canonical frame.
            const double jx = static_cast<double>(px) - cx - tx;
            const double jy = static_cast<double>(py) - cy - ty;
            const double u = cr * jx + sr * jy;
            const double v = -sr * jx + cr * jy;

            const double bg = s.background + s.background_slope * ((v + cy) / hh - 0.5);
            const double r = std::sqrt((u / s.head_rx) * (u / s.head_rx) + (v / s.head_ry) * (v / s.head_ry));
            const double inside = detail::smoothstep_edge((1.0 - r) * s.head_rx, 1.2);

            // Cylindrical head: image column u sees the surface at arc length fu.
            const double fu = s.head_rx * (std::asin(std::clamp(u / s.head_rx, -1.0, 1.0)) + yaw);
            double face = s.skin + s.skin_gradient * (v / s.head_ry) * 0.5;
            const double er2 = 2.0 * s.eye_radius * s.eye_radius;
            const double half = s.eye_spacing / 2.0;
            if (!hide_left) {
                const double du = (fu + half) / s.eye_aspect, dv = v - s.eye_y;
                face -= s.left_eye_darkness * std::exp(-(du * du + dv * dv) / er2);
            }
            if (!hide_right) {
                const double du = (fu - half) / s.eye_aspect, dv = v - s.eye_y;
                face -= s.right_eye_darkness * std::exp(-(du * du + dv * dv) / er2);
            }
            const double nose_top = s.eye_y + s.eye_radius;
            const double nose_mid = nose_top + s.nose_length / 2.0;
            face -= s.nose_shade * std::exp(-(fu * fu) / (2.0 * s.nose_width * s.nose_width)) *
                    detail::smoothstep_edge(s.nose_length / 2.0 - std::abs(v - nose_mid), 1.0);
            const double mu = fu / (s.mouth_width / 2.0), mv = (v - s.mouth_y) / (s.mouth_height / 2.0);
            face -= s.mouth_darkness * std::exp(-0.5 * (mu * mu + mv * mv));

            data[py * s.width + px] = std::clamp(inside * face + (1.0 - inside) * bg + bright, 0.0, 1.0);
        }
    return GrayImage(s.width, s.height, std::move(data));
}

inline std::string subject_dir_name(std::size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "subj%03zu", index);
    return buf;
}

inline std::string sample_file_name(std::size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "s%03zu.pgm", index);
    return buf;
}

inline std::uint64_t subject_seed(std::uint64_t root_seed, std::size_t subject) {
    return mix_seed(root_seed, subject);
}

inline std::uint64_t jitter_seed(std::uint64_t subject_seed, int yaw, std::size_t sample) {
    return mix_seed(subject_seed, static_cast<std::uint64_t>(1000 * (yaw + 90) + 1) * 100000 + sample);
}

/// Writes `subjects x views x samples` PGM files in the dataset layout and
/// returns the number of files written.
inline std::size_t generate_dataset(std::size_t subjects, const std::vector<int>& views, std::size_t samples_per_view,
                                    std::uint64_t root_seed, const std::filesystem::path& out) {
    if (subjects < 2) throw Error(Errc::invalid_argument, "generate_dataset: need at least 2 subjects");
    if (samples_per_view < 1) throw Error(Errc::invalid_argument, "generate_dataset: need at least 1 sample");
    if (views.empty()) throw Error(Errc::invalid_argument, "generate_dataset: no views requested");
    for (int v : views)
        if (!is_view_angle(v)) throw Error(Errc::invalid_argument, "generate_dataset: unsupported view angle");
    std::size_t written = 0;
    for (std::size_t s = 0; s < subjects; ++s) {
        const auto spec = SubjectSpec::from_seed(subject_seed(root_seed, s));
        for (int yaw : views) {
            const auto dir = out / subject_dir_name(s) / angle_dir_name(yaw);
            std::error_code ec;
            std::filesystem::create_directories(dir, ec);
            if (ec) throw Error(Errc::io, "cannot create " + dir.string() + ": " + ec.message());
            for (std::size_t k = 0; k < samples_per_view; ++k) {
                ViewSpec view;
                view.yaw = yaw;
                view.jitter_seed = jitter_seed(spec.seed, yaw, k);
                save_pgm(render(spec, view), dir / sample_file_name(k));
                ++written;
            }
        }
    }
    return written;
}

}  // namespace mvface

#endif  // MVFACE_DATAGEN_HPP
