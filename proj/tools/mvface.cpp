#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "mvface/config.hpp"
#include "mvface/datagen.hpp"
#include "mvface/evaluation.hpp"

namespace fs = std::filesystem;
using namespace mvface;

namespace {

constexpr const char* kSeedHelp =
    "Root seed. Derived streams: split = mix(seed,1), probe noise = mix(seed,2), "
    "family f (MLP=0, CLVQ=1, CRBF=2) = mix(seed,10+f) with member i at +i; "
    "gen: subject s = mix(seed,s)";

// Values given on the command line; each one overrides the config file.
struct Overrides {
    std::optional<std::string> config, data, out, views, sigmas, kase, weighting, database;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
    std::optional<std::size_t> K, hidden, epochs, members, images;
    std::optional<double> lr, fraction;
    std::optional<int> filter_k;
    bool no_denoise = false, enroll_all = false, conventional = false;
};

void add_common(CLI::App* sub, Overrides& o) {
    sub->add_option("--config", o.config, "Config file (key = value with [sections])");
    sub->add_option("--seed", o.seed, kSeedHelp);
    sub->add_option("--threads", o.threads, "Worker threads (default: machine parallelism)")->check(CLI::PositiveNumber);
}

void add_training(CLI::App* sub, Overrides& o) {
    sub->add_option("--hidden", o.hidden, "Hidden units / prototypes / centres (default 500)");
    sub->add_option("--epochs", o.epochs, "Training epochs (default 300)");
    sub->add_option("--lr", o.lr, "Learning rate (default 0.03)");
    sub->add_option("--members", o.members, "Ensemble size M (default 5)");
    sub->add_option("--train-fraction", o.fraction, "Enrollment fraction per subject (default 0.7)");
    sub->add_option("--weighting", o.weighting, "Member weights: uniform | holdout");
}

RunConfig resolve(const Overrides& o) {
    RunConfig c;
    c.run.threads = default_threads();
    if (o.config) load_config(*o.config, c);
    auto set = [&](const char* key, const auto& v) {
        if (v) apply_setting(c, key, [&] {
            if constexpr (std::is_same_v<std::decay_t<decltype(*v)>, std::string>) return *v;
            else {
                std::ostringstream s;
                s.precision(17);
                s << *v;
                return s.str();
            }
        }());
    };
    set("data", o.data);
    set("out", o.out);
    set("database", o.database);
    set("seed", o.seed);
    set("threads", o.threads);
    set("template.K", o.K);
    set("template.train_fraction", o.fraction);
    set("train.hidden_units", o.hidden);
    set("train.epochs", o.epochs);
    set("train.learning_rate", o.lr);
    set("train.members", o.members);
    set("train.weighting", o.weighting);
    set("eval.case", o.kase);
    set("eval.views", o.views);
    set("eval.sigmas", o.sigmas);
    set("eval.filter_k", o.filter_k);
    set("metrics.images", o.images);
    if (o.no_denoise) c.ecase.denoise_before_extraction = false;
    if (o.enroll_all) c.ecase.enroll_all_views = true;
    if (o.conventional) c.psnr_conventional = true;
    if (c.run.threads < 1) throw Error(Errc::invalid_argument, "threads must be >= 1");
    return c;
}

void require(bool ok, const char* what) {
    if (!ok) throw Error(Errc::invalid_argument, what);
}

std::ofstream open_out(const fs::path& p) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out) throw Error(Errc::io, "cannot write " + p.string());
    return out;
}

void close_out(std::ofstream& out, const fs::path& p) {
    out.close();
    if (!out) throw Error(Errc::io, "write failed: " + p.string());
}

const char* kModelFiles[] = {"mlp.mvbm", "clvq.mvbm", "crbf.mvbm"};

int cmd_gen(const Overrides& o, std::size_t subjects, std::size_t samples) {
    const RunConfig c = resolve(o);
    require(!c.out.empty(), "gen: --out is required");
    const auto views = parse_views(o.views.value_or("0"));
    const auto n = generate_dataset(subjects, views, samples, c.run.seed, c.out);
    std::cout << n << " images written\n";
    return 0;
}

int cmd_extract(const Overrides& o, const std::optional<std::string>& csv) {
    const RunConfig c = resolve(o);
    require(!c.data.empty(), "extract: --data is required");
    require(!c.out.empty(), "extract: --out is required");
    const auto set = ingest_dataset(c.data, IngestOptions{c.run.K, c.run.detector, c.run.threads});
    const auto index = scan_dataset(c.data);
    std::size_t padded = 0;
    for (std::size_t i = 0; i < set.size(); ++i) {
        const auto& t = set.templates[i];
        std::cout << index.records[i].relative << ": " << t.keypoints << " keypoints";
        if (t.padded) {
            std::cout << "  (warning: fewer than K=" << set.K << ", zero-padded)";
            ++padded;
        }
        std::cout << '\n';
    }
    save_templates(set, c.out);
    if (csv) {
        auto out = open_out(*csv);
        write_templates_csv(out, set);
        close_out(out, *csv);
    }
    std::cout << set.size() << " templates, " << set.class_count() << " subjects, " << padded << " padded -> "
              << c.out.string() << '\n';
    return 0;
}

int cmd_export_csv(const std::string& in, const std::string& out_path) {
    const auto set = load_templates(in);
    auto out = open_out(out_path);
    write_templates_csv(out, set);
    close_out(out, out_path);
    std::cout << set.size() << " templates exported\n";
    return 0;
}

double mv_accuracy(const Ensemble& e, const TemplateSet& set) {
    std::size_t ok = 0;
    for (const auto& t : set.templates)
        ok += fuse(e.member_scores(to_vector(t.features)), FusionRule::MV, e.member_weights, e.classes)
                  .predicted_class == set.class_of(t);
    return 100.0 * static_cast<double>(ok) / static_cast<double>(set.size());
}

int cmd_train(const Overrides& o, const std::string& templates) {
    const RunConfig c = resolve(o);
    const fs::path out = c.out.empty() ? fs::path("models") : c.out;
    const auto set = load_templates(templates);
    const auto [train, test] = split(set, SplitSpec{c.run.train_fraction, split_seed(c.run.seed), true});
    const auto ensembles = train_families(train, c.run);
    fs::create_directories(out);
    for (std::size_t f = 0; f < 3; ++f) {
        const auto& e = ensembles[f];
        std::printf("%-5s", std::string(family_name(e.family)).c_str());
        if (e.family == Family::MLP) {
            std::printf(" final loss:");
            for (const auto& m : e.members) std::printf(" %.6f", std::get<MlpModel>(m).final_loss);
        }
        std::printf("  train acc %.2f%%  held-out acc %.2f%% (MV)\n", mv_accuracy(e, train), mv_accuracy(e, test));
        save_ensemble(e, out / kModelFiles[f]);
    }
    std::cout << "models written to " << out.string() << '\n';
    return 0;
}

void write_eval_outputs(const EvalReport& r, const fs::path& dir) {
    const std::string tag(case_name(r.kind));
    const auto report_path = dir / ("report_" + tag + ".csv");
    const auto log_path = dir / ("decisions_" + tag + ".csv");
    auto rep = open_out(report_path);
    write_report_csv(rep, r);
    close_out(rep, report_path);
    auto log = open_out(log_path);
    write_decision_log(log, r);
    close_out(log, log_path);
    for (const auto& w : r.warnings) std::cerr << "warning: " << w << '\n';
    print_gar_table(std::cout, r);
    std::cout << "wrote " << report_path.string() << " and " << log_path.string() << '\n';
}

int cmd_eval(const Overrides& o, const std::optional<std::string>& models, const std::optional<std::string>& templates) {
    const RunConfig c = resolve(o);
    const fs::path out = c.out.empty() ? fs::path("results") : c.out;
    if (models) {
        require(templates.has_value(), "eval: --models needs --templates");
        std::array<Ensemble, 3> ensembles;
        for (std::size_t f = 0; f < 3; ++f) ensembles[f] = load_ensemble(fs::path(*models) / kModelFiles[f]);
        write_eval_outputs(evaluate_templates(ensembles, load_templates(*templates), c.run), out);
        return 0;
    }
    require(!c.data.empty(), "eval: --data is required");
    write_eval_outputs(run_case(c.ecase, c.data, c.run), out);
    return 0;
}

int cmd_noise_sweep(const Overrides& o) {
    RunConfig c = resolve(o);
    if (c.ecase.noise_variances.empty()) c.ecase.noise_variances = parse_sigmas("0:0.1:0.02");
    require(c.sweep_images >= 1, "noise-sweep: --images must be >= 1");
    std::vector<GrayImage> images;
    if (!c.data.empty()) {
        const auto index = scan_dataset(c.data);
        for (const auto& r : index.records)
            if (r.view_angle == 0 && images.size() < c.sweep_images) images.push_back(load_image(r.path));
        if (images.empty()) throw Error(Errc::data_validation, "noise-sweep: no 0 degree images under " + c.data.string());
    } else {
        for (std::size_t i = 0; i < c.sweep_images; ++i)
            images.push_back(render(SubjectSpec::from_seed(subject_seed(c.run.seed, i)), ViewSpec::exact(0)));
    }
    const auto rows = noise_sweep(images, c.ecase.noise_variances, c.ecase.filter_k, noise_seed(c.run.seed));
    if (c.out.empty()) {
        write_sweep_csv(std::cout, rows, c.psnr_conventional);
    } else {
        auto out = open_out(c.out);
        write_sweep_csv(out, rows, c.psnr_conventional);
        close_out(out, c.out);
        std::cout << rows.size() << " rows over " << images.size() << " images -> " << c.out.string() << '\n';
    }
    return 0;
}

int cmd_report(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::io, "cannot open " + path);
    print_gar_table(std::cout, read_report_csv(in));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-view face recognition toolkit"};
    app.require_subcommand(1);
    Overrides o;

    auto* gen = app.add_subcommand("gen", "Generate a synthetic multi-view face dataset");
    std::size_t subjects = 0, samples = 0;
    gen->add_option("--subjects", subjects, "Number of subjects (>= 2)")->required();
    gen->add_option("--views", o.views, "Comma list of views: m90,m45,0,p45,p90 (default 0)");
    gen->add_option("--samples", samples, "Samples per subject and view")->required();
    gen->add_option("--out", o.out, "Output directory")->required();
    add_common(gen, o);

    auto* extract = app.add_subcommand("extract", "Extract SURF templates from a dataset directory");
    std::optional<std::string> csv;
    extract->add_option("--data", o.data, "Dataset root");
    extract->add_option("--out", o.out, "Template file (.mvbk)");
    extract->add_option("--K", o.K, "Keypoints per template (default 4)");
    extract->add_option("--csv", csv, "Also export the templates as CSV");
    add_common(extract, o);

    auto* templates = app.add_subcommand("templates", "Template file utilities");
    templates->require_subcommand(1);
    auto* export_csv = templates->add_subcommand("export-csv", "Write a template file as CSV");
    std::string export_in, export_out;
    export_csv->add_option("--in", export_in, "Template file (.mvbk)")->required();
    export_csv->add_option("--out", export_out, "CSV file")->required();

    auto* train = app.add_subcommand("train", "Train MLP, CLVQ and CRBF ensembles from a template file");
    std::string train_templates;
    train->add_option("--templates", train_templates, "Template file (.mvbk)")->required();
    train->add_option("--out", o.out, "Model directory (default models)");
    add_training(train, o);
    add_common(train, o);

    auto* eval = app.add_subcommand("eval", "Run an evaluation case and write the GAR report");
    std::optional<std::string> models, eval_templates;
    eval->add_option("--case", o.kase, "frontal | multiview | noise");
    eval->add_option("--data", o.data, "Dataset root");
    eval->add_option("--out", o.out, "Output directory (default results)");
    eval->add_option("--views", o.views, "View angles to evaluate");
    eval->add_option("--sigmas", o.sigmas, "Noise variances: list 0,0.05 or range 0:0.1:0.02");
    eval->add_option("--K", o.K, "Keypoints per template (default 4)");
    eval->add_option("--filter-k", o.filter_k, "Mean filter size for noisy probes (default 3)");
    eval->add_flag("--no-denoise", o.no_denoise, "Skip the mean filter on noisy probes");
    eval->add_flag("--enroll-all-views", o.enroll_all, "Multiview: enroll every view together");
    eval->add_option("--database", o.database, "Database name for the report (default synthetic)");
    eval->add_option("--models", models, "Evaluate persisted models from this directory");
    eval->add_option("--templates", eval_templates, "Template file used with --models");
    add_training(eval, o);
    add_common(eval, o);

    auto* sweep = app.add_subcommand("noise-sweep", "Image-quality metrics of denoised noisy probes versus sigma");
    sweep->add_option("--data", o.data, "Dataset root (default: render synthetic frontal faces)");
    sweep->add_option("--images", o.images, "Number of images (default 20)");
    sweep->add_option("--sigmas", o.sigmas, "Variances: list or start:stop:step (default 0:0.1:0.02)");
    sweep->add_option("--filter-k", o.filter_k, "Mean filter size (default 3)");
    sweep->add_option("--out", o.out, "CSV file (default stdout)");
    sweep->add_flag("--psnr-conventional", o.conventional, "Report PSNR with a mean denominator");
    add_common(sweep, o);

    auto* report = app.add_subcommand("report", "Print the GAR table of a report CSV");
    std::string report_path;
    report->add_option("report", report_path, "Report CSV")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (gen->parsed()) return cmd_gen(o, subjects, samples);
        if (extract->parsed()) return cmd_extract(o, csv);
        if (export_csv->parsed()) return cmd_export_csv(export_in, export_out);
        if (train->parsed()) return cmd_train(o, train_templates);
        if (eval->parsed()) return cmd_eval(o, models, eval_templates);
        if (sweep->parsed()) return cmd_noise_sweep(o);
        if (report->parsed()) return cmd_report(report_path);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code_for(e.code());
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 5;
    }
    return 2;
}
