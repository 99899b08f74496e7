#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <sstream>

#include "mvface/datagen.hpp"
#include "mvface/evaluation.hpp"
#include "test_util.hpp"

using namespace mvface;

namespace {

DecisionRecord record(std::string truth, std::string predicted) {
    DecisionRecord d;
    d.true_class = std::move(truth);
    d.predicted = std::move(predicted);
    d.correct = d.true_class == d.predicted;
    return d;
}

RunOptions quick_options() {
    RunOptions opt;
    opt.train = {24, 40, 0.03, 0};
    opt.members = 3;
    opt.seed = 5;
    return opt;
}

std::string csv_of(const EvalReport& r) {
    std::ostringstream a;
    write_report_csv(a, r);
    write_decision_log(a, r);
    return a.str();
}

}  // namespace

TEST(Gar, Examples) {
    std::vector<DecisionRecord> log;
    for (int i = 0; i < 106; ++i) log.push_back(record("a", i < 96 ? "a" : "b"));
    EXPECT_NEAR(gar(log), 90.566, 1e-3);
    log.resize(96);
    EXPECT_EQ(gar(log), 100.0);
    EXPECT_THROW(gar(std::vector<DecisionRecord>{}), Error);
}

TEST(Gar, EqualsConfusionTraceRatio) {
    std::mt19937_64 gen(3);
    const std::vector<std::string> classes{"p", "q", "r", "s", "t"};
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<DecisionRecord> log;
        std::map<std::pair<std::string, std::string>, int> confusion;
        const int n = 1 + static_cast<int>(gen() % 200);
        for (int i = 0; i < n; ++i) {
            const auto& t = classes[gen() % 5];
            const auto& p = gen() % 3 ? t : classes[gen() % 5];
            log.push_back(record(t, p));
            confusion[{t, p}]++;
        }
        int trace = 0, total = 0;
        for (const auto& [k, v] : confusion) {
            total += v;
            if (k.first == k.second) trace += v;
        }
        const double g = gar(log);
        EXPECT_EQ(g, 100.0 * trace / total);
        EXPECT_GE(g, 0.0);
        EXPECT_LE(g, 100.0);
    }
}

TEST(EvalCaseSpec, Validation) {
    EXPECT_EQ(EvalCase{CaseKind::MULTIVIEW}.angles(), (std::vector<int>{-45, 45}));
    EXPECT_EQ(EvalCase{}.angles(), std::vector<int>{0});
    EXPECT_THROW(EvalCase{CaseKind::NOISE}.validate(), Error);
    EXPECT_THROW((EvalCase{CaseKind::FRONTAL, {45}}.validate()), Error);
    EvalCase even{CaseKind::NOISE, {}, {0.01}};
    even.filter_k = 4;
    EXPECT_THROW(even.validate(), Error);
    EXPECT_THROW((EvalCase{CaseKind::NOISE, {}, {-0.1}}.validate()), Error);
    EXPECT_THROW((EvalCase{CaseKind::MULTIVIEW, {30}}.validate()), Error);
    EXPECT_EQ(parse_case("multiview"), CaseKind::MULTIVIEW);
    EXPECT_FALSE(parse_case("sideways"));
}

TEST(NoiseSweep, ZeroNoiseRows) {
    std::vector<GrayImage> images;
    for (std::uint64_t s = 0; s < 3; ++s) images.push_back(test::random_image(24, 24, s, 0.1, 0.9));
    const auto identity = noise_sweep(images, {0.0}, 1);
    EXPECT_EQ(identity[0].mean.mse, 0.0);
    EXPECT_EQ(identity[0].mean.rmse, 0.0);
    EXPECT_EQ(identity[0].mean.mae, 0.0);
    EXPECT_EQ(identity[0].mean.pfe_percent, 0.0);
    const auto smoothed = noise_sweep(images, {0.0}, 3);
    EXPECT_GT(smoothed[0].mean.mse, 0.0);
    EXPECT_THROW(noise_sweep(images, {0.02, 0.01}, 3), Error);
    EXPECT_THROW(noise_sweep({}, {0.0}, 3), Error);
}

TEST(NoiseSweep, MonotoneOverRenderedFaces) {
    std::vector<GrayImage> faces;
    for (std::size_t s = 0; s < 20; ++s)
        faces.push_back(render(SubjectSpec::from_seed(subject_seed(3, s)), ViewSpec::exact(0)));
    const std::vector<double> sigmas{0, 0.02, 0.04, 0.06, 0.08, 0.1};
    const auto rows = noise_sweep(faces, sigmas, 3, 9);
    ASSERT_EQ(rows.size(), sigmas.size());
    for (std::size_t i = 1; i < rows.size(); ++i) {
        EXPECT_GT(rows[i].mean.mse, rows[i - 1].mean.mse);
        EXPECT_GT(rows[i].mean.mae, rows[i - 1].mean.mae);
        EXPECT_LT(rows[i].mean.snr_db, rows[i - 1].mean.snr_db);
        EXPECT_LT(rows[i].mean.psnr_db, rows[i - 1].mean.psnr_db);
        EXPECT_LT(rows[i].mean.psnr_conventional_db, rows[i - 1].mean.psnr_conventional_db);
    }
    std::ostringstream out;
    write_sweep_csv(out, rows);
    const auto text = out.str();
    EXPECT_EQ(text.substr(0, text.find('\n')), "sigma,mse,rmse,mae,pfe,snr_db,psnr_db");
    EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 7);
    EXPECT_NE(text.find("\n0.020000,"), std::string::npos);
}

class RunCase : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        dir_ = new test::TempDir;
        generate_dataset(4, {-45, 0, 45}, 6, 11, dir_->path() / "full");
        generate_dataset(3, {0}, 5, 12, dir_->path() / "frontal_only");
    }
    static void TearDownTestSuite() {
        delete dir_;
        dir_ = nullptr;
    }
    static std::filesystem::path root(const std::string& name) { return dir_->path() / name; }

    static void expect_consistent(const EvalReport& r) {
        for (const auto& c : r.cells) {
            ASSERT_GT(c.probes, 0u);
            EXPECT_EQ(c.gar_percent, 100.0 * static_cast<double>(c.correct) / static_cast<double>(c.probes));
        }
        std::size_t total = 0;
        for (const auto& c : r.cells) total += c.probes;
        EXPECT_EQ(r.decisions.size(), total);
    }

    static inline test::TempDir* dir_ = nullptr;
};

TEST_F(RunCase, FrontalGridShape) {
    const auto r = run_case({CaseKind::FRONTAL}, root("full"), quick_options());
    ASSERT_EQ(r.cells.size(), 12u);
    for (std::size_t i = 0; i < 12; ++i) {
        EXPECT_EQ(r.cells[i].view, 0);
        EXPECT_EQ(r.cells[i].family, kFamilies[i / 4]);
        EXPECT_EQ(r.cells[i].rule, kRules[i % 4]);
        EXPECT_EQ(r.cells[i].probes, 8u);  // 4 subjects x (6 - floor(6*0.7))
    }
    expect_consistent(r);
}

TEST_F(RunCase, MultiviewGridShape) {
    const auto r = run_case({CaseKind::MULTIVIEW}, root("full"), quick_options());
    ASSERT_EQ(r.cells.size(), 24u);
    EXPECT_EQ(r.cells.front().view, -45);
    EXPECT_EQ(r.cells.back().view, 45);
    expect_consistent(r);
    EvalCase pooled{CaseKind::MULTIVIEW};
    pooled.enroll_all_views = true;
    const auto p = run_case(pooled, root("full"), quick_options());
    EXPECT_EQ(p.cells.size(), 24u);
    expect_consistent(p);
}

TEST_F(RunCase, NoiseGridShapeAndWarning) {
    const auto r = run_case({CaseKind::NOISE, {}, {0.0, 0.2}}, root("full"), quick_options());
    ASSERT_EQ(r.cells.size(), 24u);
    EXPECT_EQ(r.cells.front().sigma, 0.0);
    EXPECT_EQ(r.cells.back().sigma, 0.2);
    ASSERT_EQ(r.warnings.size(), 1u);
    EXPECT_NE(r.warnings[0].find("0.2"), std::string::npos);
    expect_consistent(r);
}

TEST_F(RunCase, NoiseAtZeroWithoutDenoisingReproducesFrontal) {
    const auto opt = quick_options();
    const auto frontal = run_case({CaseKind::FRONTAL}, root("full"), opt);
    EvalCase noise{CaseKind::NOISE, {}, {0.0}};
    noise.denoise_before_extraction = false;
    const auto noisy = run_case(noise, root("full"), opt);
    ASSERT_EQ(noisy.cells.size(), frontal.cells.size());
    for (std::size_t i = 0; i < frontal.cells.size(); ++i) {
        EXPECT_EQ(noisy.cells[i].gar_percent, frontal.cells[i].gar_percent);
        EXPECT_EQ(noisy.cells[i].correct, frontal.cells[i].correct);
    }
}

TEST_F(RunCase, MissingAnglesAreListed) {
    try {
        run_case({CaseKind::MULTIVIEW}, root("frontal_only"), quick_options());
        FAIL() << "expected data_validation";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::data_validation);
        const std::string msg = e.what();
        for (const char* s : {"subj000/m45", "subj000/p45", "subj002/m45", "subj002/p45"})
            EXPECT_NE(msg.find(s), std::string::npos) << msg;
    }
}

TEST_F(RunCase, ThreadCountDoesNotChangeOutput) {
    auto opt = quick_options();
    const auto one = csv_of(run_case({CaseKind::NOISE, {}, {0.01}}, root("full"), opt));
    opt.threads = 6;
    EXPECT_EQ(csv_of(run_case({CaseKind::NOISE, {}, {0.01}}, root("full"), opt)), one);
}

TEST_F(RunCase, SeedDeterminism) {
    const auto a = csv_of(run_case({CaseKind::FRONTAL}, root("full"), quick_options()));
    EXPECT_EQ(csv_of(run_case({CaseKind::FRONTAL}, root("full"), quick_options())), a);
}

TEST_F(RunCase, ReportCsvRoundTrip) {
    const auto r = run_case({CaseKind::MULTIVIEW}, root("full"), quick_options());
    std::stringstream csv;
    write_report_csv(csv, r);
    const auto text = csv.str();
    const auto back = read_report_csv(csv);
    ASSERT_EQ(back.cells.size(), r.cells.size());
    EXPECT_EQ(back.kind, r.kind);
    EXPECT_EQ(back.database, "synthetic");
    for (std::size_t i = 0; i < r.cells.size(); ++i) {
        EXPECT_EQ(back.cells[i].view, r.cells[i].view);
        EXPECT_EQ(back.cells[i].correct, r.cells[i].correct);
        EXPECT_EQ(back.cells[i].probes, r.cells[i].probes);
        EXPECT_NEAR(back.cells[i].gar_percent, r.cells[i].gar_percent, 5e-7);
    }
    std::istringstream bad_header("view,gar\n1,2\n");
    EXPECT_THROW(read_report_csv(bad_header), Error);
    std::istringstream bad_row("database,case,view,sigma,family,rule,gar_percent,probes\nx,frontal,0,0,MLP,MEDIAN,1,1\n");
    EXPECT_THROW(read_report_csv(bad_row), Error);
    std::ostringstream table;
    print_gar_table(table, r);
    EXPECT_NE(table.str().find("45 deg left"), std::string::npos);
    EXPECT_NE(table.str().find("B.Count"), std::string::npos);
}

TEST_F(RunCase, DecisionLogFormat) {
    const auto r = run_case({CaseKind::FRONTAL}, root("full"), quick_options());
    std::ostringstream out;
    write_decision_log(out, r);
    std::istringstream in(out.str());
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "probe_id,true_class,rule,family,predicted,correct");
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        ++rows;
        EXPECT_EQ(std::count(line.begin(), line.end(), ','), 5);
        EXPECT_EQ(line.rfind("subj", 0), 0u);
    }
    EXPECT_EQ(rows, 8u * 12u);
}

TEST_F(RunCase, TrainedEnsemblesOnTemplateSet) {
    const auto opt = quick_options();
    const auto set = ingest_dataset(root("full"), {opt.K, opt.detector, 1});
    const auto [train_idx, test_idx] = split_indices(set.subject_ids(), {opt.train_fraction, split_seed(opt.seed), true});
    const auto ensembles = train_families(subset(set, train_idx), opt);
    const auto r = evaluate_templates(ensembles, set, opt);
    EXPECT_EQ(r.kind, CaseKind::MULTIVIEW);
    ASSERT_EQ(r.cells.size(), 36u);
    expect_consistent(r);
    auto other = set;
    other.subjects.push_back("zzz");
    EXPECT_THROW(evaluate_templates(ensembles, other, opt), Error);
}
