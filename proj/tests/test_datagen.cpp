#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "mvface/datagen.hpp"
#include "mvface/face_template.hpp"
#include "test_util.hpp"

using namespace mvface;
namespace fs = std::filesystem;

namespace {

std::vector<FaceTemplate> frontal_templates(std::uint64_t root, std::size_t subjects, std::size_t samples) {
    std::vector<FaceTemplate> out;
    for (std::size_t s = 0; s < subjects; ++s) {
        const auto spec = SubjectSpec::from_seed(subject_seed(root, s));
        for (std::size_t k = 0; k < samples; ++k) {
            ViewSpec view;
            view.jitter_seed = jitter_seed(spec.seed, 0, k);
            ImageRecord rec;
            rec.subject_id = subject_dir_name(s);
            rec.sample_index = k;
            out.push_back(template_from_image(render(spec, view), rec, IngestOptions{}));
        }
    }
    return out;
}

double sq_distance(const FaceTemplate& a, const FaceTemplate& b) {
    double d = 0;
    for (std::size_t j = 0; j < a.features.size(); ++j) d += std::pow(double(a.features[j]) - b.features[j], 2);
    return d;
}

}  // namespace

TEST(Render, FrontalIsNearlySymmetric) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        auto spec = SubjectSpec::from_seed(seed);
        // the two eyes are drawn with independent darkness; symmetry is a
        // statement about the layout
        spec.right_eye_darkness = spec.left_eye_darkness;
        const auto img = render(spec, ViewSpec::exact(0));
        double diff = 0;
        for (std::size_t y = 0; y < img.height(); ++y)
            for (std::size_t x = 0; x < img.width(); ++x) diff += std::abs(img.at(x, y) - img.at(img.width() - 1 - x, y));
        EXPECT_LT(diff / static_cast<double>(img.size()), 0.02) << "seed " << seed;
    }
}

TEST(Render, Deterministic) {
    const auto spec = SubjectSpec::from_seed(42);
    EXPECT_EQ(SubjectSpec::from_seed(42).eye_spacing, spec.eye_spacing);
    ViewSpec v;
    v.yaw = 45;
    v.jitter_seed = 9;
    EXPECT_EQ(render(spec, v), render(spec, v));
    ViewSpec w = v;
    w.jitter_seed = 10;
    EXPECT_NE(render(spec, v), render(spec, w));
}

TEST(Render, ParametersWithinRanges) {
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        const auto s = SubjectSpec::from_seed(seed);
        EXPECT_GE(s.eye_spacing, 24.0);
        EXPECT_LE(s.eye_spacing, 40.0);
        EXPECT_GE(s.eye_radius, 3.0);
        EXPECT_LE(s.eye_radius, 6.0);
        EXPECT_GE(s.eye_aspect, 1.3);
        EXPECT_LE(s.eye_aspect, 2.0);
        EXPECT_GE(s.nose_length, 10.0);
        EXPECT_LE(s.nose_length, 24.0);
        EXPECT_GE(s.mouth_width, 14.0);
        EXPECT_LE(s.mouth_width, 32.0);
        EXPECT_GE(s.skin_gradient, -0.12);
        EXPECT_LE(s.skin_gradient, 0.12);
    }
}

TEST(Render, ProfileHidesTheFarEye) {
    // Turning right (positive yaw) hides the left eye and vice versa; a hidden
    // eye contributes nothing to any pixel.
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto spec = SubjectSpec::from_seed(seed);
        auto no_left = spec, no_right = spec;
        no_left.left_eye_darkness = 0.0;
        no_right.right_eye_darkness = 0.0;
        EXPECT_EQ(render(spec, ViewSpec::exact(90)), render(no_left, ViewSpec::exact(90)));
        EXPECT_EQ(render(spec, ViewSpec::exact(-90)), render(no_right, ViewSpec::exact(-90)));
        for (int yaw : {-45, 0, 45}) {
            EXPECT_NE(render(spec, ViewSpec::exact(yaw)), render(no_left, ViewSpec::exact(yaw)));
            EXPECT_NE(render(spec, ViewSpec::exact(yaw)), render(no_right, ViewSpec::exact(yaw)));
        }
        EXPECT_NE(render(spec, ViewSpec::exact(90)), render(no_right, ViewSpec::exact(90)));
    }
}

TEST(Render, RejectsUnsupportedYaw) {
    EXPECT_THROW(render(SubjectSpec{}, ViewSpec::exact(30)), Error);
}

TEST(GenerateDataset, CountsAndLayout) {
    test::TempDir dir;
    EXPECT_EQ(generate_dataset(10, {-45, 0, 45}, 12, 7, dir / "d"), 360u);
    std::size_t files = 0;
    std::set<fs::path> leaves;
    for (const auto& e : fs::recursive_directory_iterator(dir / "d"))
        if (e.is_regular_file()) {
            ++files;
            leaves.insert(e.path().parent_path());
            EXPECT_EQ(e.path().extension(), ".pgm");
        }
    EXPECT_EQ(files, 360u);
    EXPECT_EQ(leaves.size(), 30u);
    for (const auto& leaf : leaves) EXPECT_TRUE(parse_angle_dir(leaf.filename().string()).has_value()) << leaf;
    const auto index = scan_dataset(dir / "d");
    EXPECT_EQ(index.subjects.size(), 10u);
    EXPECT_EQ(index.angles_of("subj003"), (std::vector<int>{-45, 0, 45}));
}

TEST(GenerateDataset, RegenerationIsByteIdentical) {
    test::TempDir dir;
    generate_dataset(3, {0, 90}, 4, 99, dir / "a");
    generate_dataset(3, {0, 90}, 4, 99, dir / "b");
    std::size_t compared = 0;
    for (const auto& e : fs::recursive_directory_iterator(dir / "a")) {
        if (!e.is_regular_file()) continue;
        const auto other = dir / "b" / fs::relative(e.path(), dir / "a");
        EXPECT_EQ(test::slurp(e.path()), test::slurp(other)) << other;
        ++compared;
    }
    EXPECT_EQ(compared, 24u);
}

TEST(GenerateDataset, Errors) {
    test::TempDir dir;
    EXPECT_THROW(generate_dataset(1, {0}, 2, 0, dir / "x"), Error);
    EXPECT_THROW(generate_dataset(2, {0}, 0, 0, dir / "x"), Error);
    EXPECT_THROW(generate_dataset(2, {}, 1, 0, dir / "x"), Error);
    EXPECT_THROW(generate_dataset(2, {60}, 1, 0, dir / "x"), Error);
    std::ofstream(dir / "file") << "not a directory";
    try {
        generate_dataset(2, {0}, 1, 0, dir / "file" / "sub");
        ADD_FAILURE() << "expected an io error";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::io);
    }
}

TEST(Separability, IntraSubjectDistancesAreSmaller) {
    const auto t = frontal_templates(3, 10, 6);
    double intra = 0, inter = 0;
    std::size_t ni = 0, ne = 0;
    for (std::size_t i = 0; i < t.size(); ++i)
        for (std::size_t j = i + 1; j < t.size(); ++j) {
            const double d = std::sqrt(sq_distance(t[i], t[j]));
            if (t[i].subject_id == t[j].subject_id) {
                intra += d;
                ++ni;
            } else {
                inter += d;
                ++ne;
            }
        }
    EXPECT_LT(intra / ni, inter / ne);
}

TEST(Separability, NearestTemplateIdentifiesSubjects) {
    // leave-one-out 1-NN at 10 subjects x 12 frontal samples, averaged over
    // ten dataset seeds
    double total = 0;
    for (std::uint64_t root = 1; root <= 10; ++root) {
        const auto t = frontal_templates(root, 10, 12);
        std::size_t ok = 0;
        for (std::size_t i = 0; i < t.size(); ++i) {
            double best = 1e300;
            std::size_t arg = 0;
            for (std::size_t j = 0; j < t.size(); ++j) {
                if (j == i) continue;
                const double d = sq_distance(t[i], t[j]);
                if (d < best) best = d, arg = j;
            }
            ok += t[arg].subject_id == t[i].subject_id;
        }
        const double acc = 100.0 * ok / t.size();
        EXPECT_GT(acc, 85.0) << "root seed " << root;
        total += acc;
    }
    EXPECT_GT(total / 10.0, 95.0);
}
