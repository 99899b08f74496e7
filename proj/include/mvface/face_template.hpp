#ifndef MVFACE_FACE_TEMPLATE_HPP
#define MVFACE_FACE_TEMPLATE_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "mvface/binary_io.hpp"
#include "mvface/error.hpp"
#include "mvface/image.hpp"
#include "mvface/layout.hpp"
#include "mvface/parallel.hpp"
#include "mvface/random.hpp"
#include "mvface/surf.hpp"

namespace mvface {

inline constexpr std::size_t kDescriptorSize = 128;

/// Fixed-length per-image feature vector: the descriptors of the K strongest
/// keypoints, concatenated in response order and zero-padded.
struct FaceTemplate {
    std::string subject_id;
    int view_angle = 0;
    std::size_t sample_index = 0;
    std::vector<float> features;
    std::size_t keypoints = 0;  // descriptors actually available before padding
    bool padded = false;        // fewer than K keypoints were available

    friend bool operator==(const FaceTemplate&, const FaceTemplate&) = default;
};

struct TemplateSet {
    std::vector<FaceTemplate> templates;
    std::vector<std::string> subjects;  // class index == position
    std::size_t K = 4;

    std::size_t dim() const noexcept { return K * kDescriptorSize; }
    std::size_t size() const noexcept { return templates.size(); }
    std::size_t class_count() const noexcept { return subjects.size(); }

    std::size_t class_of(const FaceTemplate& t) const {
        const auto it = std::lower_bound(subjects.begin(), subjects.end(), t.subject_id);
        if (it == subjects.end() || *it != t.subject_id)
            throw Error(Errc::data_validation, "unknown subject: " + t.subject_id);
        return static_cast<std::size_t>(it - subjects.begin());
    }

    std::vector<std::string> subject_ids() const {
        std::vector<std::string> out;
        out.reserve(templates.size());
        for (const auto& t : templates) out.push_back(t.subject_id);
        return out;
    }

    std::vector<std::size_t> labels() const {
        std::vector<std::size_t> out;
        out.reserve(templates.size());
        for (const auto& t : templates) out.push_back(class_of(t));
        return out;
    }

    void validate() const {
        if (!std::is_sorted(subjects.begin(), subjects.end()) ||
            std::adjacent_find(subjects.begin(), subjects.end()) != subjects.end())
            throw Error(Errc::data_validation, "subject list must be sorted and distinct");
        for (const auto& t : templates) {
            class_of(t);
            if (t.features.size() != dim()) throw Error(Errc::data_validation, "template length does not match K*128");
            for (float v : t.features)
                if (!std::isfinite(v)) throw Error(Errc::numeric, "non-finite template feature");
        }
    }

    friend bool operator==(const TemplateSet&, const TemplateSet&) = default;
};

/// Keeps the K keypoints of highest response (ties by y, then x, then
/// descriptor) and concatenates their descriptors; missing slots are zero.
inline FaceTemplate build_template(std::vector<Feature> points, std::size_t K, std::string label, int angle,
                                   std::size_t sample = 0) {
    if (K < 1) throw Error(Errc::invalid_argument, "build_template: K must be >= 1");
    std::sort(points.begin(), points.end(), [](const Feature& a, const Feature& b) {
        if (response_order(a.point, b.point)) return true;
        if (response_order(b.point, a.point)) return false;
        return a.descriptor < b.descriptor;
    });
    FaceTemplate t;
    t.subject_id = std::move(label);
    t.view_angle = angle;
    t.sample_index = sample;
    t.features.assign(K * kDescriptorSize, 0.0f);
    t.keypoints = std::min(K, points.size());
    t.padded = points.size() < K;
    for (std::size_t k = 0; k < t.keypoints; ++k)
        for (std::size_t j = 0; j < kDescriptorSize; ++j)
            t.features[k * kDescriptorSize + j] = static_cast<float>(points[k].descriptor[j]);
    return t;
}

// ---------------------------------------------------------------------------
// Dataset ingestion

struct ImageRecord {
    std::filesystem::path path;
    std::string relative;  // subject/angle/file, '/'-separated
    std::string subject_id;
    int view_angle = 0;
    std::size_t sample_index = 0;
};

struct DatasetIndex {
    std::vector<ImageRecord> records;  // sorted by (subject, angle dir order, file name)
    std::vector<std::string> subjects;

    std::vector<int> angles_of(const std::string& subject) const {
        std::vector<int> out;
        for (const auto& r : records)
            if (r.subject_id == subject && std::find(out.begin(), out.end(), r.view_angle) == out.end())
                out.push_back(r.view_angle);
        return out;
    }
};

inline bool is_image_file(const std::filesystem::path& p) {
    auto ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".pgm" || ext == ".png";
}

/// Walks root/<subject>/<angle>/<sample>.pgm|png. All layout problems are
/// collected and reported together.
inline DatasetIndex scan_dataset(const std::filesystem::path& root) {
    namespace fs = std::filesystem;
    std::error_code ec;
    if (!fs::is_directory(root, ec)) throw Error(Errc::io, "dataset root is not a directory: " + root.string());
    std::vector<std::string> problems;
    std::vector<std::string> subjects;
    for (const auto& e : fs::directory_iterator(root)) {
        if (e.is_directory()) subjects.push_back(e.path().filename().string());
    }
    std::sort(subjects.begin(), subjects.end());
    if (subjects.empty()) throw Error(Errc::data_validation, "dataset root has no subject directories: " + root.string());

    DatasetIndex index;
    index.subjects = subjects;
    for (const auto& subject : subjects) {
        std::vector<std::pair<int, fs::path>> angle_dirs;
        for (const auto& e : fs::directory_iterator(root / subject)) {
            if (!e.is_directory()) continue;
            const auto name = e.path().filename().string();
            if (const auto a = parse_angle_dir(name)) {
                angle_dirs.emplace_back(*a, e.path());
            } else {
                problems.push_back(subject + "/" + name + ": malformed angle directory");
            }
        }
        std::sort(angle_dirs.begin(), angle_dirs.end());
        if (angle_dirs.empty()) problems.push_back(subject + ": no angle directories");
        for (const auto& [angle, dir] : angle_dirs) {
            std::vector<fs::path> files;
            for (const auto& e : fs::directory_iterator(dir))
                if (e.is_regular_file() && is_image_file(e.path())) files.push_back(e.path());
            std::sort(files.begin(), files.end());
            if (files.empty()) problems.push_back(subject + "/" + angle_dir_name(angle) + ": no images");
            for (std::size_t i = 0; i < files.size(); ++i) {
                ImageRecord r;
                r.path = files[i];
                r.relative = subject + "/" + angle_dir_name(angle) + "/" + files[i].filename().string();
                r.subject_id = subject;
                r.view_angle = angle;
                r.sample_index = i;
                index.records.push_back(std::move(r));
            }
        }
    }
    if (!problems.empty()) {
        std::string msg = "dataset layout errors:";
        for (const auto& p : problems) msg += "\n  " + p;
        throw Error(Errc::data_validation, msg);
    }
    return index;
}

struct IngestOptions {
    std::size_t K = 4;
    DetectorConfig detector;
    unsigned threads = 1;
};

inline FaceTemplate template_from_image(const GrayImage& img, const ImageRecord& rec, const IngestOptions& opt) {
    auto ex = extract_features(img, opt.detector);
    return build_template(std::move(ex.features), opt.K, rec.subject_id, rec.view_angle, rec.sample_index);
}

/// Extracts one template per record. Unreadable images are collected and
/// reported together; nothing is returned unless every image succeeds.
inline TemplateSet ingest_records(const std::vector<ImageRecord>& records, std::vector<std::string> subjects,
                                  const IngestOptions& opt) {
    if (opt.K < 1) throw Error(Errc::invalid_argument, "ingest: K must be >= 1");
    std::sort(subjects.begin(), subjects.end());
    subjects.erase(std::unique(subjects.begin(), subjects.end()), subjects.end());
    TemplateSet set;
    set.K = opt.K;
    set.subjects = std::move(subjects);
    set.templates.resize(records.size());
    std::vector<std::string> errors(records.size());
    parallel_for(records.size(), opt.threads, [&](std::size_t i) {
        try {
            set.templates[i] = template_from_image(load_image(records[i].path), records[i], opt);
        } catch (const Error& e) {
            errors[i] = records[i].relative + ": " + e.what();
        }
    });
    std::string msg;
    for (const auto& e : errors)
        if (!e.empty()) msg += "\n  " + e;
    if (!msg.empty()) throw Error(Errc::data_validation, "ingestion failed:" + msg);
    set.validate();
    return set;
}

inline TemplateSet ingest_dataset(const std::filesystem::path& root, const IngestOptions& opt = {}) {
    const auto index = scan_dataset(root);
    return ingest_records(index.records, index.subjects, opt);
}

// ---------------------------------------------------------------------------
// Train/test split

struct SplitSpec {
    double train_fraction = 0.7;
    std::uint64_t seed = 0;
    bool stratified = true;
};

namespace detail {

inline std::size_t train_count(std::size_t n, double fraction) {
    auto k = static_cast<std::size_t>(std::floor(static_cast<double>(n) * fraction + 1e-9));
    if (k >= n) k = n - 1;  // keep at least one probe
    return k;
}

}  // namespace detail

/// Index-level split; returns (train, test) index lists in ascending order.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(
    const std::vector<std::string>& labels, const SplitSpec& spec) {
    if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0))
        throw Error(Errc::invalid_argument, "split: train fraction must be in (0, 1)");
    if (labels.size() < 2) throw Error(Errc::data_validation, "split: need at least 2 items");
    Rng rng(spec.seed);
    std::vector<std::size_t> train, test;
    auto take = [&](std::vector<std::size_t> idx) {
        rng.shuffle(std::span<std::size_t>(idx));
        const auto k = detail::train_count(idx.size(), spec.train_fraction);
        train.insert(train.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k));
        test.insert(test.end(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end());
    };
    if (spec.stratified) {
        std::map<std::string, std::vector<std::size_t>> groups;
        for (std::size_t i = 0; i < labels.size(); ++i) groups[labels[i]].push_back(i);
        for (auto& [name, idx] : groups) {
            if (idx.size() < 2)
                throw Error(Errc::data_validation, "split: subject '" + name + "' has fewer than 2 templates");
            take(std::move(idx));
        }
    } else {
        std::vector<std::size_t> all(labels.size());
        std::iota(all.begin(), all.end(), std::size_t{0});
        take(std::move(all));
    }
    std::sort(train.begin(), train.end());
    std::sort(test.begin(), test.end());
    return {std::move(train), std::move(test)};
}

inline TemplateSet subset(const TemplateSet& set, const std::vector<std::size_t>& idx) {
    TemplateSet out;
    out.K = set.K;
    out.subjects = set.subjects;
    out.templates.reserve(idx.size());
    for (auto i : idx) out.templates.push_back(set.templates[i]);
    return out;
}

inline std::pair<TemplateSet, TemplateSet> split(const TemplateSet& set, const SplitSpec& spec) {
    const auto [train, test] = split_indices(set.subject_ids(), spec);
    return {subset(set, train), subset(set, test)};
}

// ---------------------------------------------------------------------------
// Persistence: "MVBK1", u32 subjects, u32 templates, u32 K, subject table,
// then per template: u32 subject index, i16 angle, u16 sample, K*128 f32.

inline void write_templates(std::ostream& out, const TemplateSet& set) {
    set.validate();
    bin::put_magic(out, "MVBK1");
    bin::put_u32(out, static_cast<std::uint32_t>(set.subjects.size()));
    bin::put_u32(out, static_cast<std::uint32_t>(set.templates.size()));
    bin::put_u32(out, static_cast<std::uint32_t>(set.K));
    for (const auto& s : set.subjects) bin::put_string(out, s);
    for (const auto& t : set.templates) {
        bin::put_u32(out, static_cast<std::uint32_t>(set.class_of(t)));
        bin::put_i16(out, static_cast<std::int16_t>(t.view_angle));
        bin::put_u16(out, static_cast<std::uint16_t>(t.sample_index));
        for (float v : t.features) bin::put_f32(out, v);
    }
}

inline TemplateSet read_templates(std::istream& in) {
    bin::expect_magic(in, "MVBK1");
    const auto n_subjects = bin::get_u32(in);
    const auto n_templates = bin::get_u32(in);
    const auto K = bin::get_u32(in);
    if (K < 1 || K > 4096) throw Error(Errc::data_validation, "template file: K out of range");
    TemplateSet set;
    set.K = K;
    for (std::uint32_t i = 0; i < n_subjects; ++i) set.subjects.push_back(bin::get_string(in));
    set.templates.reserve(n_templates);
    for (std::uint32_t i = 0; i < n_templates; ++i) {
        FaceTemplate t;
        const auto cls = bin::get_u32(in);
        if (cls >= n_subjects) throw Error(Errc::data_validation, "template file: subject index out of range");
        t.subject_id = set.subjects[cls];
        t.view_angle = bin::get_i16(in);
        t.sample_index = bin::get_u16(in);
        t.features.resize(set.dim());
        for (auto& v : t.features) v = bin::get_f32(in);
        // Slot occupancy is implied by the zero padding.
        t.keypoints = 0;
        for (std::size_t k = 0; k < K; ++k) {
            const auto first = t.features.begin() + static_cast<std::ptrdiff_t>(k * kDescriptorSize);
            if (std::any_of(first, first + kDescriptorSize, [](float v) { return v != 0.0f; })) t.keypoints = k + 1;
        }
        t.padded = t.keypoints < K;
        set.templates.push_back(std::move(t));
    }
    set.validate();
    return set;
}

inline void save_templates(const TemplateSet& set, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(Errc::io, "cannot write " + path.string());
    write_templates(out, set);
    if (!out) throw Error(Errc::io, "write failed: " + path.string());
}

inline TemplateSet load_templates(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::io, "cannot open " + path.string());
    return read_templates(in);
}

/// CSV view of a template set: subject,view_angle,sample,f0..f{K*128-1}.
inline void write_templates_csv(std::ostream& out, const TemplateSet& set) {
    out << "subject,view_angle,sample";
    for (std::size_t i = 0; i < set.dim(); ++i) out << ",f" << i;
    out << '\n';
    char buf[32];
    for (const auto& t : set.templates) {
        out << t.subject_id << ',' << t.view_angle << ',' << t.sample_index;
        for (float v : t.features) {
            std::snprintf(buf, sizeof buf, ",%.9g", static_cast<double>(v));
            out << buf;
        }
        out << '\n';
    }
}

}  // namespace mvface

#endif  // MVFACE_FACE_TEMPLATE_HPP
