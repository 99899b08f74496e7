#include <gtest/gtest.h>

#include <algorithm>
#include <cstring>
#include <random>
#include <set>
#include <sstream>

#include "mvface/datagen.hpp"
#include "mvface/face_template.hpp"
#include "test_util.hpp"

using namespace mvface;
namespace fs = std::filesystem;

namespace {

Feature feature(double response, double x, double y, double fill) {
    Feature f;
    f.point.response = response;
    f.point.x = x;
    f.point.y = y;
    f.descriptor.fill(fill);
    return f;
}

std::vector<std::string> labels_of(std::size_t subjects, std::size_t per_subject) {
    std::vector<std::string> out;
    for (std::size_t s = 0; s < subjects; ++s)
        for (std::size_t i = 0; i < per_subject; ++i) out.push_back("s" + std::to_string(s));
    return out;
}

TemplateSet random_set(std::size_t subjects, std::size_t per_subject, std::size_t K, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<float> d(-1.0f, 1.0f);
    TemplateSet set;
    set.K = K;
    for (std::size_t s = 0; s < subjects; ++s) set.subjects.push_back("subj" + std::to_string(s));
    std::sort(set.subjects.begin(), set.subjects.end());
    for (std::size_t s = 0; s < subjects; ++s)
        for (std::size_t i = 0; i < per_subject; ++i) {
            FaceTemplate t;
            t.subject_id = set.subjects[s];
            t.view_angle = std::array{-90, -45, 0, 45, 90}[gen() % 5];
            t.sample_index = i;
            t.features.resize(K * kDescriptorSize);
            for (auto& v : t.features) v = d(gen);
            t.keypoints = K;
            set.templates.push_back(t);
        }
    return set;
}

void write_pgm(const fs::path& p, const GrayImage& img) {
    fs::create_directories(p.parent_path());
    save_pgm(img, p);
}

}  // namespace

TEST(BuildTemplate, SingleSlotIsTheDescriptor) {
    const auto f = feature(0.3, 10, 10, 0.125);
    const auto t = build_template({f}, 1, "a", 0);
    ASSERT_EQ(t.features.size(), 128u);
    for (float v : t.features) EXPECT_EQ(v, 0.125f);
    EXPECT_FALSE(t.padded);
}

TEST(BuildTemplate, MissingSlotsAreZeroPadded) {
    const auto t = build_template({feature(0.3, 1, 1, 0.1), feature(0.2, 2, 2, 0.2)}, 4, "a", 45);
    ASSERT_EQ(t.features.size(), 512u);
    for (std::size_t i = 256; i < 512; ++i) EXPECT_EQ(t.features[i], 0.0f);
    EXPECT_TRUE(t.padded);
    EXPECT_EQ(t.keypoints, 2u);
    EXPECT_EQ(t.view_angle, 45);
}

TEST(BuildTemplate, EmptyListGivesZerosAndWarning) {
    const auto t = build_template({}, 3, "a", 0);
    EXPECT_TRUE(t.padded);
    EXPECT_EQ(t.keypoints, 0u);
    EXPECT_TRUE(std::all_of(t.features.begin(), t.features.end(), [](float v) { return v == 0.0f; }));
}

TEST(BuildTemplate, ResponseThenRowTieBreak) {
    const auto a = feature(0.5, 4, 3, 0.1), b = feature(0.9, 0, 9, 0.2), c = feature(0.5, 7, 1, 0.3);
    const auto t = build_template({a, b, c}, 2, "a", 0);
    EXPECT_EQ(t.features[0], 0.2f);    // strongest first
    EXPECT_EQ(t.features[128], 0.3f);  // of the tied pair, y = 1 before y = 3
}

TEST(BuildTemplate, PermutationInvariant) {
    std::mt19937_64 gen(2);
    std::vector<Feature> pts;
    for (int i = 0; i < 12; ++i) pts.push_back(feature(0.1 * (i % 4), i % 3, i % 5, 0.01 * i));
    const auto ref = build_template(pts, 5, "a", 0);
    for (int trial = 0; trial < 20; ++trial) {
        std::shuffle(pts.begin(), pts.end(), gen);
        EXPECT_EQ(build_template(pts, 5, "a", 0), ref);
    }
}

TEST(BuildTemplate, RejectsZeroK) { EXPECT_THROW(build_template({}, 0, "a", 0), Error); }

TEST(Split, SeventyThirtySplitSizes) {
    const std::tuple<std::size_t, std::size_t, double, std::size_t, std::size_t> cases[] = {
        {106, 4, 0.75, 318, 106}, {500, 5, 0.6, 1500, 1000}, {70, 5, 0.6, 210, 140}};
    for (const auto& [subjects, per, fraction, n_train, n_test] : cases) {
        const auto [train, test] = split_indices(labels_of(subjects, per), {fraction, 1, true});
        EXPECT_EQ(train.size(), n_train);
        EXPECT_EQ(test.size(), n_test);
    }
}

TEST(Split, IsAStratifiedPartition) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        std::mt19937_64 gen(seed);
        std::vector<std::string> labels;
        for (int s = 0; s < 7; ++s)
            for (std::size_t i = 0, n = 2 + gen() % 9; i < n; ++i) labels.push_back("c" + std::to_string(s));
        std::shuffle(labels.begin(), labels.end(), gen);
        const double fraction = 0.3 + 0.05 * static_cast<double>(seed % 10);
        const auto [train, test] = split_indices(labels, {fraction, seed, true});
        std::set<std::size_t> all(train.begin(), train.end());
        for (auto i : test) EXPECT_TRUE(all.insert(i).second);
        EXPECT_EQ(all.size(), labels.size());
        std::map<std::string, std::pair<int, int>> count;
        for (auto i : train) ++count[labels[i]].first;
        for (auto i : test) ++count[labels[i]].second;
        for (const auto& [name, c] : count) {
            EXPECT_GE(c.second, 1);
            EXPECT_LE(std::abs(c.first - fraction * (c.first + c.second)), 1.0);
        }
    }
}

TEST(Split, SeedDeterminesAssignment) {
    const auto labels = labels_of(10, 12);
    EXPECT_EQ(split_indices(labels, {0.7, 3, true}), split_indices(labels, {0.7, 3, true}));
    EXPECT_NE(split_indices(labels, {0.7, 3, true}), split_indices(labels, {0.7, 4, true}));
}

TEST(Split, SingletonSubjectNamedInError) {
    auto labels = labels_of(3, 4);
    labels.push_back("lonely");
    try {
        split_indices(labels, {0.7, 0, true});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::data_validation);
        EXPECT_NE(std::string(e.what()).find("lonely"), std::string::npos);
    }
    EXPECT_THROW(split_indices(labels_of(3, 4), {1.0, 0, true}), Error);
    EXPECT_THROW(split_indices(labels_of(3, 4), {0.0, 0, true}), Error);
}

TEST(Persistence, RoundTripIsBitExact) {
    auto set = random_set(4, 3, 2, 9);
    set.templates[1].features.assign(set.dim(), 0.0f);
    std::copy_n(set.templates[0].features.begin(), 128, set.templates[1].features.begin());
    std::stringstream buf;
    write_templates(buf, set);
    const auto back = read_templates(buf);
    EXPECT_EQ(back.subjects, set.subjects);
    ASSERT_EQ(back.size(), set.size());
    for (std::size_t i = 0; i < set.size(); ++i) {
        EXPECT_EQ(std::memcmp(back.templates[i].features.data(), set.templates[i].features.data(),
                              set.dim() * sizeof(float)),
                  0);
        EXPECT_EQ(back.templates[i].view_angle, set.templates[i].view_angle);
        EXPECT_EQ(back.templates[i].sample_index, set.templates[i].sample_index);
    }
    EXPECT_EQ(back.templates[1].keypoints, 1u);
    EXPECT_TRUE(back.templates[1].padded);
}

TEST(Persistence, ByteLayout) {
    TemplateSet set;
    set.K = 1;
    set.subjects = {"ab"};
    FaceTemplate t;
    t.subject_id = "ab";
    t.view_angle = -45;
    t.sample_index = 3;
    t.features.assign(128, 0.0f);
    t.features[0] = 1.0f;
    set.templates.push_back(t);
    std::stringstream buf;
    write_templates(buf, set);
    const std::string bytes = buf.str();
    ASSERT_EQ(bytes.size(), 5u + 12u + 4u + 2u + 4u + 2u + 2u + 512u);
    EXPECT_EQ(bytes.substr(0, 5), "MVBK1");
    const unsigned char* p = reinterpret_cast<const unsigned char*>(bytes.data());
    EXPECT_EQ(p[5], 1);   // subjects
    EXPECT_EQ(p[9], 1);   // templates
    EXPECT_EQ(p[13], 1);  // K
    EXPECT_EQ(p[17], 2);  // name length
    EXPECT_EQ(bytes.substr(21, 2), "ab");
    EXPECT_EQ(p[23], 0);                     // subject index
    EXPECT_EQ(p[27] | (p[28] << 8), 0xFFD3);  // -45 as i16
    EXPECT_EQ(p[29], 3);                     // sample
    EXPECT_EQ(p[33], 0x80);                  // 1.0f little-endian: 00 00 80 3F
    EXPECT_EQ(p[34], 0x3F);
}

TEST(Persistence, CorruptInputRejected) {
    std::stringstream bad("MVBX1....");
    EXPECT_THROW(read_templates(bad), Error);
    std::stringstream buf;
    write_templates(buf, random_set(2, 2, 1, 1));
    std::stringstream truncated(buf.str().substr(0, buf.str().size() - 7));
    EXPECT_THROW(read_templates(truncated), Error);
}

TEST(Persistence, CsvExport) {
    const auto set = random_set(2, 2, 1, 4);
    std::ostringstream out;
    write_templates_csv(out, set);
    std::istringstream in(out.str());
    std::string header, row;
    std::getline(in, header);
    EXPECT_EQ(header.rfind("subject,view_angle,sample,f0,f1,", 0), 0u);
    EXPECT_NE(header.find(",f127"), std::string::npos);
    int rows = 0;
    while (std::getline(in, row)) {
        ++rows;
        EXPECT_EQ(std::count(row.begin(), row.end(), ','), 130);
        // %.9g round-trips float32 exactly
        std::stringstream ss(row);
        std::string cell;
        for (int c = 0; c < 3; ++c) std::getline(ss, cell, ',');
        std::getline(ss, cell, ',');
        EXPECT_EQ(std::stof(cell), set.templates[static_cast<std::size_t>(rows - 1)].features[0]);
    }
    EXPECT_EQ(rows, 4);
}

class Ingest : public ::testing::Test {
protected:
    test::TempDir dir;

    void make_dataset(std::size_t subjects, const std::vector<std::string>& angles, std::size_t samples) {
        for (std::size_t s = 0; s < subjects; ++s)
            for (const auto& a : angles)
                for (std::size_t i = 0; i < samples; ++i) {
                    const auto spec = SubjectSpec::from_seed(100 + s);
                    ViewSpec view{*parse_angle_dir(a), 1000 * s + i};
                    write_pgm(dir / ("p" + std::to_string(s)) / a / sample_file_name(i), render(spec, view));
                }
    }
};

TEST_F(Ingest, CountsAndAngles) {
    make_dataset(2, {"p45"}, 3);
    const auto set = ingest_dataset(dir.path());
    EXPECT_EQ(set.size(), 6u);
    EXPECT_EQ(set.subjects, (std::vector<std::string>{"p0", "p1"}));
    for (const auto& t : set.templates) {
        EXPECT_EQ(t.view_angle, 45);
        EXPECT_EQ(t.features.size(), 512u);
        for (float v : t.features) EXPECT_TRUE(std::isfinite(v));
    }
    set.validate();
}

TEST_F(Ingest, DeterministicAndThreadIndependent) {
    make_dataset(2, {"0", "m45"}, 2);
    const auto a = ingest_dataset(dir.path(), {4, {}, 1});
    const auto b = ingest_dataset(dir.path(), {4, {}, 4});
    EXPECT_EQ(a, b);
    std::stringstream sa, sb;
    write_templates(sa, a);
    write_templates(sb, b);
    EXPECT_EQ(sa.str(), sb.str());
}

TEST_F(Ingest, LayoutErrorsAreItemized) {
    make_dataset(2, {"0"}, 1);
    fs::create_directories(dir / "p0" / "front");
    fs::create_directories(dir / "p1" / "p90");
    try {
        scan_dataset(dir.path());
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::data_validation);
        const std::string msg = e.what();
        EXPECT_NE(msg.find("p0/front"), std::string::npos);
        EXPECT_NE(msg.find("p1/p90"), std::string::npos);
    }
}

TEST_F(Ingest, EmptyRootAndUnreadableImage) {
    EXPECT_THROW(scan_dataset(dir.path()), Error);
    EXPECT_THROW(scan_dataset(dir / "missing"), Error);
    make_dataset(2, {"0"}, 2);
    std::ofstream(dir / "p1" / "0" / "s009.pgm") << "garbage";
    try {
        ingest_dataset(dir.path());
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("s009.pgm"), std::string::npos);
    }
}
