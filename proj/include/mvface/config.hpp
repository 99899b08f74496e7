#ifndef MVFACE_CONFIG_HPP
#define MVFACE_CONFIG_HPP

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mvface/error.hpp"
#include "mvface/evaluation.hpp"
#include "mvface/layout.hpp"

namespace mvface {

/// All settings a CLI run can take, before command-line overrides.
struct RunConfig {
    std::filesystem::path data;
    std::filesystem::path out;
    RunOptions run;
    EvalCase ecase;
    bool psnr_conventional = false;
    std::size_t sweep_images = 20;
};

namespace detail {

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

template <class T>
T parse_number(const std::string& key, const std::string& v) {
    T out{};
    const auto* end = v.data() + v.size();
    const auto [p, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc{} || p != end) throw Error(Errc::invalid_argument, "config: bad value for " + key + ": " + v);
    return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw Error(Errc::invalid_argument, "config: bad boolean for " + key + ": " + v);
}

}  // namespace detail

/// "m45,0,p45" or "-45,0,45".
inline std::vector<int> parse_views(const std::string& text) {
    std::vector<int> out;
    std::stringstream ss(text);
    for (std::string tok; std::getline(ss, tok, ',');) {
        tok = detail::trim(tok);
        std::optional<int> a = parse_angle_dir(tok);
        if (!a) {
            int v = 0;
            const auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
            if (ec == std::errc{} && p == tok.data() + tok.size() && is_view_angle(v)) a = v;
        }
        if (!a) throw Error(Errc::invalid_argument, "unsupported view: " + tok);
        out.push_back(*a);
    }
    if (out.empty()) throw Error(Errc::invalid_argument, "no views given");
    return out;
}

/// A comma list ("0,0.05") or an inclusive range "start:stop:step".
inline std::vector<double> parse_sigmas(const std::string& text) {
    std::vector<double> out;
    if (text.find(':') != std::string::npos) {
        std::vector<double> parts;
        std::stringstream ss(text);
        for (std::string tok; std::getline(ss, tok, ':');) parts.push_back(detail::parse_number<double>("sigmas", detail::trim(tok)));
        if (parts.size() != 3 || !(parts[2] > 0.0) || parts[1] < parts[0])
            throw Error(Errc::invalid_argument, "sigmas range must be start:stop:step with step > 0");
        const auto n = static_cast<std::size_t>(std::floor((parts[1] - parts[0]) / parts[2] + 1e-9));
        for (std::size_t i = 0; i <= n; ++i) {
            const double v = parts[0] + static_cast<double>(i) * parts[2];
            out.push_back(std::round(v * 1e12) / 1e12);
        }
    } else {
        std::stringstream ss(text);
        for (std::string tok; std::getline(ss, tok, ',');) out.push_back(detail::parse_number<double>("sigmas", detail::trim(tok)));
    }
    if (out.empty()) throw Error(Errc::invalid_argument, "no sigmas given");
    return out;
}

/// Applies one `section.key = value` setting. Keys outside any section have
/// no prefix.
inline void apply_setting(RunConfig& c, const std::string& key, const std::string& v) {
    using detail::parse_bool;
    using detail::parse_number;
    static const std::map<std::string, std::function<void(RunConfig&, const std::string&, const std::string&)>> table = {
        {"data", [](RunConfig& c, auto&, auto& v) { c.data = v; }},
        {"out", [](RunConfig& c, auto&, auto& v) { c.out = v; }},
        {"database", [](RunConfig& c, auto&, auto& v) { c.run.database = v; }},
        {"seed", [](RunConfig& c, auto& k, auto& v) { c.run.seed = parse_number<std::uint64_t>(k, v); }},
        {"threads", [](RunConfig& c, auto& k, auto& v) { c.run.threads = parse_number<unsigned>(k, v); }},
        {"template.K", [](RunConfig& c, auto& k, auto& v) { c.run.K = parse_number<std::size_t>(k, v); }},
        {"template.train_fraction",
         [](RunConfig& c, auto& k, auto& v) { c.run.train_fraction = parse_number<double>(k, v); }},
        {"detector.octaves", [](RunConfig& c, auto& k, auto& v) { c.run.detector.octaves = parse_number<int>(k, v); }},
        {"detector.intervals",
         [](RunConfig& c, auto& k, auto& v) { c.run.detector.intervals_per_octave = parse_number<int>(k, v); }},
        {"detector.threshold",
         [](RunConfig& c, auto& k, auto& v) { c.run.detector.response_threshold = parse_number<double>(k, v); }},
        {"detector.hessian_weight",
         [](RunConfig& c, auto& k, auto& v) { c.run.detector.hessian_weight = parse_number<double>(k, v); }},
        {"detector.upright", [](RunConfig& c, auto& k, auto& v) { c.run.detector.upright = parse_bool(k, v); }},
        {"train.hidden_units",
         [](RunConfig& c, auto& k, auto& v) { c.run.train.hidden_units = parse_number<std::size_t>(k, v); }},
        {"train.epochs", [](RunConfig& c, auto& k, auto& v) { c.run.train.epochs = parse_number<std::size_t>(k, v); }},
        {"train.learning_rate",
         [](RunConfig& c, auto& k, auto& v) { c.run.train.learning_rate = parse_number<double>(k, v); }},
        {"train.members", [](RunConfig& c, auto& k, auto& v) { c.run.members = parse_number<std::size_t>(k, v); }},
        {"train.weighting",
         [](RunConfig& c, auto& k, auto& v) {
             if (v == "uniform") c.run.weighting = MemberWeighting::uniform;
             else if (v == "holdout") c.run.weighting = MemberWeighting::holdout_accuracy;
             else throw Error(Errc::invalid_argument, "config: bad value for " + k + ": " + v);
         }},
        {"eval.case",
         [](RunConfig& c, auto& k, auto& v) {
             const auto kind = parse_case(v);
             if (!kind) throw Error(Errc::invalid_argument, "config: bad value for " + k + ": " + v);
             c.ecase.kind = *kind;
         }},
        {"eval.views", [](RunConfig& c, auto&, auto& v) { c.ecase.view_angles = parse_views(v); }},
        {"eval.sigmas", [](RunConfig& c, auto&, auto& v) { c.ecase.noise_variances = parse_sigmas(v); }},
        {"eval.denoise", [](RunConfig& c, auto& k, auto& v) { c.ecase.denoise_before_extraction = parse_bool(k, v); }},
        {"eval.filter_k", [](RunConfig& c, auto& k, auto& v) { c.ecase.filter_k = parse_number<int>(k, v); }},
        {"eval.enroll_all_views",
         [](RunConfig& c, auto& k, auto& v) { c.ecase.enroll_all_views = parse_bool(k, v); }},
        {"metrics.psnr_conventional",
         [](RunConfig& c, auto& k, auto& v) { c.psnr_conventional = parse_bool(k, v); }},
        {"metrics.images",
         [](RunConfig& c, auto& k, auto& v) { c.sweep_images = parse_number<std::size_t>(k, v); }},
    };
    const auto it = table.find(key);
    if (it == table.end()) throw Error(Errc::invalid_argument, "config: unknown key " + key);
    it->second(c, key, v);
}

/// Flat `key = value` lines grouped under `[section]` headers; `#` and `;`
/// start comments.
inline void parse_config(std::istream& in, RunConfig& c) {
    std::string line, section;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find_first_of("#;");
        const std::string s = detail::trim(std::string_view(line).substr(0, hash));
        if (s.empty()) continue;
        if (s.front() == '[') {
            if (s.back() != ']') throw Error(Errc::invalid_argument, "config line " + std::to_string(lineno) + ": bad section");
            section = detail::trim(std::string_view(s).substr(1, s.size() - 2));
            continue;
        }
        const auto eq = s.find('=');
        if (eq == std::string::npos)
            throw Error(Errc::invalid_argument, "config line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = detail::trim(std::string_view(s).substr(0, eq));
        const std::string value = detail::trim(std::string_view(s).substr(eq + 1));
        apply_setting(c, section.empty() ? key : section + "." + key, value);
    }
}

inline void load_config(const std::filesystem::path& path, RunConfig& c) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::io, "cannot open config " + path.string());
    parse_config(in, c);
}

}  // namespace mvface

#endif  // MVFACE_CONFIG_HPP
