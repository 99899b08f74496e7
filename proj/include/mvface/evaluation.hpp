#ifndef MVFACE_EVALUATION_HPP
#define MVFACE_EVALUATION_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mvface/ensemble.hpp"
#include "mvface/error.hpp"
#include "mvface/face_template.hpp"
#include "mvface/image.hpp"
#include "mvface/metrics.hpp"
#include "mvface/parallel.hpp"

namespace mvface {

enum class CaseKind { FRONTAL, MULTIVIEW, NOISE };

inline std::string_view case_name(CaseKind k) {
    switch (k) {
    case CaseKind::FRONTAL: return "frontal";
    case CaseKind::MULTIVIEW: return "multiview";
    case CaseKind::NOISE: return "noise";
    }
    return "?";
}

inline std::optional<CaseKind> parse_case(std::string_view s) {
    if (s == "frontal") return CaseKind::FRONTAL;
    if (s == "multiview") return CaseKind::MULTIVIEW;
    if (s == "noise") return CaseKind::NOISE;
    return std::nullopt;
}

struct EvalCase {
    CaseKind kind = CaseKind::FRONTAL;
    std::vector<int> view_angles;         // empty: {0} for frontal/noise, {-45, 45} for multiview
    std::vector<double> noise_variances;  // NOISE only
    bool denoise_before_extraction = true;
    int filter_k = 3;
    bool enroll_all_views = false;  // MULTIVIEW: train on every view's enrollment split

    std::vector<int> angles() const {
        if (!view_angles.empty()) return view_angles;
        if (kind == CaseKind::MULTIVIEW) return {-45, 45};
        return {0};
    }

    void validate() const {
        if (kind == CaseKind::NOISE && noise_variances.empty())
            throw Error(Errc::invalid_argument, "noise case needs at least one variance");
        if (kind == CaseKind::FRONTAL && angles() != std::vector<int>{0})
            throw Error(Errc::invalid_argument, "frontal case evaluates the 0 degree view only");
        for (double v : noise_variances)
            if (!(v >= 0.0)) throw Error(Errc::invalid_argument, "noise variance must be >= 0");
        if (filter_k < 1 || filter_k % 2 == 0) throw Error(Errc::invalid_argument, "filter_k must be odd and >= 1");
        for (int a : angles())
            if (!is_view_angle(a)) throw Error(Errc::invalid_argument, "unsupported view angle");
    }
};

/// Everything a case run needs besides the dataset. Child seeds derive from
/// `seed`: split = mix(seed, 1), noise = mix(seed, 2), family f trains from
/// mix(seed, 10 + f) with member i at that value + i.
struct RunOptions {
    std::string database = "synthetic";
    TrainConfig train;
    std::size_t members = 5;
    std::size_t K = 4;
    DetectorConfig detector;
    double train_fraction = 0.7;
    std::uint64_t seed = 0;
    MemberWeighting weighting = MemberWeighting::uniform;
    unsigned threads = 1;
};

inline std::uint64_t split_seed(std::uint64_t seed) { return mix_seed(seed, 1); }
inline std::uint64_t noise_seed(std::uint64_t seed) { return mix_seed(seed, 2); }
inline std::uint64_t family_seed(std::uint64_t seed, Family f) {
    return mix_seed(seed, 10 + static_cast<std::uint64_t>(f));
}

struct DecisionRecord {
    std::string probe_id;
    std::string true_class;
    FusionRule rule = FusionRule::MV;
    Family family = Family::MLP;
    std::string predicted;
    bool correct = false;
};

/// Closed-set rank-1 identification rate in percent.
inline double gar(std::span<const DecisionRecord> log) {
    if (log.empty()) throw Error(Errc::invalid_argument, "gar: empty decision log");
    std::size_t ok = 0;
    for (const auto& d : log) ok += d.predicted == d.true_class;
    return 100.0 * static_cast<double>(ok) / static_cast<double>(log.size());
}

struct EvalCell {
    int view = 0;
    double sigma = 0.0;
    Family family = Family::MLP;
    FusionRule rule = FusionRule::MV;
    std::size_t correct = 0;
    std::size_t probes = 0;
    double gar_percent = 0.0;
};

struct EvalReport {
    std::string database;
    CaseKind kind = CaseKind::FRONTAL;
    std::vector<EvalCell> cells;  // (condition, family, rule) order
    std::vector<DecisionRecord> decisions;
    std::vector<std::string> warnings;

    const EvalCell& cell(int view, double sigma, Family f, FusionRule r) const {
        for (const auto& c : cells)
            if (c.view == view && c.sigma == sigma && c.family == f && c.rule == r) return c;
        throw Error(Errc::invalid_argument, "report has no such cell");
    }
};

namespace detail {

struct Probe {
    std::string id;
    std::size_t true_class = 0;
    Eigen::VectorXd x;
};

// Evaluates every probe under every family and rule, appending one cell per
// (family, rule) and the matching decision records.
inline void evaluate_condition(const std::array<Ensemble, 3>& ensembles, const std::vector<Probe>& probes, int view,
                               double sigma, unsigned threads, EvalReport& report) {
    if (probes.empty()) throw Error(Errc::data_validation, "evaluation: no probe templates");
    const auto& classes = ensembles[0].classes;
    constexpr std::size_t F = 3, R = 4;
    std::vector<std::array<std::size_t, F * R>> predicted(probes.size());
    parallel_for(probes.size(), threads, [&](std::size_t p) {
        for (std::size_t f = 0; f < F; ++f) {
            const auto& e = ensembles[f];
            const auto scores = e.member_scores(probes[p].x);
            for (std::size_t r = 0; r < R; ++r)
                predicted[p][f * R + r] = fuse(scores, kRules[r], e.member_weights, e.classes).predicted_class;
        }
    });
    for (std::size_t f = 0; f < F; ++f)
        for (std::size_t r = 0; r < R; ++r) {
            EvalCell cell{view, sigma, kFamilies[f], kRules[r], 0, probes.size(), 0.0};
            for (std::size_t p = 0; p < probes.size(); ++p) {
                const auto pred = predicted[p][f * R + r];
                const bool ok = pred == probes[p].true_class;
                cell.correct += ok;
                report.decisions.push_back({probes[p].id, classes[probes[p].true_class], kRules[r], kFamilies[f],
                                            classes[pred], ok});
            }
            cell.gar_percent = 100.0 * static_cast<double>(cell.correct) / static_cast<double>(cell.probes);
            report.cells.push_back(cell);
        }
}

inline std::string sigma_tag(double sigma) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "@sigma=%.6f", sigma);
    return buf;
}

}  // namespace detail

/// Trains MLP, CLVQ and CRBF ensembles on the same enrollment set.
inline std::array<Ensemble, 3> train_families(const TemplateSet& train, const RunOptions& opt) {
    std::array<Ensemble, 3> out;
    EnsembleOptions eo{opt.members, opt.weighting, opt.threads};
    for (std::size_t f = 0; f < 3; ++f) {
        TrainConfig cfg = opt.train;
        cfg.seed = family_seed(opt.seed, kFamilies[f]);
        out[f] = train_ensemble(kFamilies[f], train, cfg, eo);
    }
    return out;
}

/// Throws a data-validation error naming every subject/angle directory the
/// case needs but the dataset lacks.
inline void require_angles(const DatasetIndex& index, const std::vector<int>& angles) {
    std::vector<std::string> missing;
    for (const auto& s : index.subjects) {
        const auto have = index.angles_of(s);
        for (int a : angles)
            if (std::find(have.begin(), have.end(), a) == have.end()) missing.push_back(s + "/" + angle_dir_name(a));
    }
    if (!missing.empty()) {
        std::string msg = "dataset is missing angle directories:";
        for (const auto& m : missing) msg += " " + m;
        throw Error(Errc::data_validation, msg);
    }
}

/// Runs one evaluation case end to end: ingest -> split -> train the three
/// ensembles -> fuse every probe under all four rules.
inline EvalReport run_case(const EvalCase& ecase, const std::filesystem::path& data_root, const RunOptions& opt) {
    ecase.validate();
    const auto index = scan_dataset(data_root);
    const auto angles = ecase.angles();
    require_angles(index, angles);

    EvalReport report;
    report.database = opt.database;
    report.kind = ecase.kind;
    const IngestOptions ingest{opt.K, opt.detector, opt.threads};
    const SplitSpec split_spec{opt.train_fraction, split_seed(opt.seed), true};

    struct ViewData {
        int angle = 0;
        std::vector<ImageRecord> records;
        TemplateSet set;
        std::vector<std::size_t> train, test;
    };
    std::vector<ViewData> views;
    for (int a : angles) {
        ViewData v;
        v.angle = a;
        for (const auto& r : index.records)
            if (r.view_angle == a) v.records.push_back(r);
        v.set = ingest_records(v.records, index.subjects, ingest);
        std::vector<std::string> labels;
        for (const auto& t : v.set.templates) labels.push_back(t.subject_id);
        std::tie(v.train, v.test) = split_indices(labels, split_spec);
        for (const auto& t : v.set.templates)
            if (t.padded) {
                report.warnings.push_back("some templates were zero-padded (fewer than K keypoints) at view " +
                                          std::to_string(a));
                break;
            }
        views.push_back(std::move(v));
    }

    auto probes_for = [](const ViewData& v) {
        std::vector<detail::Probe> probes;
        for (auto i : v.test)
            probes.push_back({v.records[i].relative, v.set.class_of(v.set.templates[i]),
                              to_vector(v.set.templates[i].features)});
        return probes;
    };

    if (ecase.kind == CaseKind::NOISE) {
        for (double s : ecase.noise_variances)
            if (s > 0.1) report.warnings.push_back("noise variance above 0.1: " + std::to_string(s));
        for (const auto& v : views) {
            const auto ensembles = train_families(subset(v.set, v.train), opt);
            for (double sigma : ecase.noise_variances) {
                std::vector<detail::Probe> probes(v.test.size());
                parallel_for(v.test.size(), opt.threads, [&](std::size_t p) {
                    const auto& rec = v.records[v.test[p]];
                    auto img = add_gaussian_noise(load_image(rec.path), {sigma, mix_seed(noise_seed(opt.seed), p)});
                    if (ecase.denoise_before_extraction) img = mean_filter(img, ecase.filter_k);
                    const auto t = template_from_image(img, rec, ingest);
                    probes[p] = {rec.relative + detail::sigma_tag(sigma), v.set.class_of(t), to_vector(t.features)};
                });
                detail::evaluate_condition(ensembles, probes, v.angle, sigma, opt.threads, report);
            }
        }
        return report;
    }

    if (ecase.kind == CaseKind::MULTIVIEW && ecase.enroll_all_views) {
        TemplateSet enrolled;
        enrolled.K = opt.K;
        enrolled.subjects = views.front().set.subjects;
        for (const auto& v : views)
            for (auto i : v.train) enrolled.templates.push_back(v.set.templates[i]);
        const auto ensembles = train_families(enrolled, opt);
        for (const auto& v : views) detail::evaluate_condition(ensembles, probes_for(v), v.angle, 0.0, opt.threads, report);
        return report;
    }

    for (const auto& v : views) {
        const auto ensembles = train_families(subset(v.set, v.train), opt);
        detail::evaluate_condition(ensembles, probes_for(v), v.angle, 0.0, opt.threads, report);
    }
    return report;
}

/// Evaluates already-trained ensembles on the held-out part of a persisted
/// template set, one condition per view angle present in the probes.
inline EvalReport evaluate_templates(const std::array<Ensemble, 3>& ensembles, const TemplateSet& set,
                                     const RunOptions& opt) {
    for (const auto& e : ensembles)
        if (e.classes != set.subjects)
            throw Error(Errc::data_validation, "models and templates disagree on the subject list");
    const auto [train_idx, test_idx] = split_indices(set.subject_ids(), SplitSpec{opt.train_fraction, split_seed(opt.seed), true});
    std::map<int, std::vector<detail::Probe>> by_view;
    for (auto i : test_idx) {
        const auto& t = set.templates[i];
        char id[64];
        std::snprintf(id, sizeof id, "/%s/s%03u", angle_dir_name(t.view_angle).c_str(), static_cast<unsigned>(t.sample_index));
        by_view[t.view_angle].push_back({t.subject_id + id, set.class_of(t), to_vector(t.features)});
    }
    EvalReport report;
    report.database = opt.database;
    report.kind = by_view.size() == 1 && by_view.begin()->first == 0 ? CaseKind::FRONTAL : CaseKind::MULTIVIEW;
    for (const auto& [view, probes] : by_view)
        detail::evaluate_condition(ensembles, probes, view, 0.0, opt.threads, report);
    return report;
}

// ---------------------------------------------------------------------------
// Output

inline std::string fixed6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

inline void write_report_csv(std::ostream& out, const EvalReport& r) {
    out << "database,case,view,sigma,family,rule,gar_percent,probes\n";
    for (const auto& c : r.cells)
        out << r.database << ',' << case_name(r.kind) << ',' << c.view << ',' << fixed6(c.sigma) << ','
            << family_name(c.family) << ',' << rule_name(c.rule) << ',' << fixed6(c.gar_percent) << ',' << c.probes
            << '\n';
}

inline void write_decision_log(std::ostream& out, const EvalReport& r) {
    out << "probe_id,true_class,rule,family,predicted,correct\n";
    for (const auto& d : r.decisions)
        out << d.probe_id << ',' << d.true_class << ',' << rule_name(d.rule) << ',' << family_name(d.family) << ','
            << d.predicted << ',' << (d.correct ? 1 : 0) << '\n';
}

/// Reads the cells of a report CSV back (decisions are not part of it).
inline EvalReport read_report_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != "database,case,view,sigma,family,rule,gar_percent,probes")
        throw Error(Errc::unsupported_format, "report: unexpected header");
    EvalReport r;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        for (std::string tok; std::getline(ss, tok, ',');) f.push_back(tok);
        auto bad = [&] { return Error(Errc::data_validation, "report: malformed row " + std::to_string(row)); };
        if (f.size() != 8) throw bad();
        const auto kind = parse_case(f[1]);
        std::optional<Family> fam;
        std::optional<FusionRule> rule;
        for (Family x : kFamilies)
            if (family_name(x) == f[4]) fam = x;
        for (FusionRule x : kRules)
            if (rule_name(x) == f[5]) rule = x;
        if (!kind || !fam || !rule) throw bad();
        r.database = f[0];
        r.kind = *kind;
        EvalCell c;
        try {
            c.view = std::stoi(f[2]);
            c.sigma = std::stod(f[3]);
            c.gar_percent = std::stod(f[6]);
            c.probes = std::stoul(f[7]);
        } catch (const std::exception&) {
            throw bad();
        }
        c.family = *fam;
        c.rule = *rule;
        c.correct = static_cast<std::size_t>(std::llround(c.gar_percent * static_cast<double>(c.probes) / 100.0));
        r.cells.push_back(c);
    }
    if (r.cells.empty()) throw Error(Errc::data_validation, "report: no rows");
    return r;
}

inline std::string condition_label(CaseKind kind, int view, double sigma) {
    if (kind == CaseKind::NOISE) return "sigma = " + fixed6(sigma);
    if (view == 0) return "0 deg (frontal)";
    return std::to_string(std::abs(view)) + " deg " + (view < 0 ? "left" : "right");
}

/// Aligned GAR grid: one block per condition, rows = family, columns = rule.
inline void print_gar_table(std::ostream& out, const EvalReport& r) {
    std::vector<std::pair<int, double>> conditions;
    for (const auto& c : r.cells)
        if (std::find(conditions.begin(), conditions.end(), std::pair(c.view, c.sigma)) == conditions.end())
            conditions.emplace_back(c.view, c.sigma);
    char buf[128];
    for (const auto& [view, sigma] : conditions) {
        out << "GAR (%) - " << r.database << " - " << condition_label(r.kind, view, sigma) << '\n';
        std::snprintf(buf, sizeof buf, "  %-6s %8s %8s %8s %8s\n", "", "MV", "W.Sum", "Prod", "B.Count");
        out << buf;
        for (Family f : kFamilies) {
            std::snprintf(buf, sizeof buf, "  %-6s", std::string(family_name(f)).c_str());
            out << buf;
            for (FusionRule rule : kRules) {
                std::snprintf(buf, sizeof buf, " %8.2f", r.cell(view, sigma, f, rule).gar_percent);
                out << buf;
            }
            out << '\n';
        }
    }
}

// ---------------------------------------------------------------------------
// Noise sweep: metrics of the denoised probe against its clean original.

struct SweepRow {
    double sigma = 0.0;
    MetricReport mean;
};

inline std::vector<SweepRow> noise_sweep(const std::vector<GrayImage>& images, const std::vector<double>& variances,
                                         int filter_k, std::uint64_t seed = 0) {
    if (images.empty()) throw Error(Errc::invalid_argument, "noise_sweep: no images");
    if (variances.empty()) throw Error(Errc::invalid_argument, "noise_sweep: no variances");
    if (!std::is_sorted(variances.begin(), variances.end()) || !(variances.front() >= 0.0))
        throw Error(Errc::invalid_argument, "noise_sweep: variances must be ascending and >= 0");
    std::vector<SweepRow> rows;
    const double n = static_cast<double>(images.size());
    for (double sigma : variances) {
        SweepRow row;
        row.sigma = sigma;
        for (std::size_t i = 0; i < images.size(); ++i) {
            const auto noisy = add_gaussian_noise(images[i], {sigma, mix_seed(seed, i)});
            const auto probe = mean_filter(noisy, filter_k);
            const auto m = compute_metrics(probe, images[i]);
            row.mean.mse += m.mse / n;
            row.mean.rmse += m.rmse / n;
            row.mean.mae += m.mae / n;
            row.mean.pfe_percent += m.pfe_percent / n;
            row.mean.snr_db += m.snr_db / n;
            row.mean.psnr_db += m.psnr_db / n;
            row.mean.psnr_conventional_db += m.psnr_conventional_db / n;
        }
        rows.push_back(row);
    }
    return rows;
}

/// `sigma,mse,rmse,mae,pfe,snr_db,psnr_db`; the PSNR column holds the
/// sum-denominator form unless `conventional_psnr` is set.
inline void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows, bool conventional_psnr = false) {
    out << "sigma,mse,rmse,mae,pfe,snr_db,psnr_db\n";
    for (const auto& r : rows)
        out << fixed6(r.sigma) << ',' << fixed6(r.mean.mse) << ',' << fixed6(r.mean.rmse) << ',' << fixed6(r.mean.mae)
            << ',' << fixed6(r.mean.pfe_percent) << ',' << fixed6(r.mean.snr_db) << ','
            << fixed6(conventional_psnr ? r.mean.psnr_conventional_db : r.mean.psnr_db) << '\n';
}

}  // namespace mvface

#endif  // MVFACE_EVALUATION_HPP
