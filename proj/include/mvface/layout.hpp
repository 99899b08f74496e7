#ifndef MVFACE_LAYOUT_HPP
#define MVFACE_LAYOUT_HPP

#include <array>
#include <optional>
#include <string>
#include <string_view>

namespace mvface {

// Dataset layout: root/<subject_id>/<angle>/<sample>.pgm|png, where the
// angle directory is one of m90, m45, 0, p45, p90 (positive = right).
inline constexpr std::array<int, 5> kViewAngles = {-90, -45, 0, 45, 90};

inline bool is_view_angle(int degrees) noexcept {
    for (int a : kViewAngles)
        if (a == degrees) return true;
    return false;
}

inline std::string angle_dir_name(int degrees) {
    if (degrees == 0) return "0";
    return (degrees < 0 ? "m" : "p") + std::to_string(degrees < 0 ? -degrees : degrees);
}

inline std::optional<int> parse_angle_dir(std::string_view name) {
    for (int a : kViewAngles)
        if (name == angle_dir_name(a)) return a;
    return std::nullopt;
}

}  // namespace mvface

#endif  // MVFACE_LAYOUT_HPP
