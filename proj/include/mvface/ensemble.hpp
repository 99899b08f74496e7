#ifndef MVFACE_ENSEMBLE_HPP
#define MVFACE_ENSEMBLE_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "mvface/binary_io.hpp"
#include "mvface/classifiers.hpp"
#include "mvface/error.hpp"
#include "mvface/face_template.hpp"
#include "mvface/parallel.hpp"

namespace mvface {

enum class Family : std::uint8_t { MLP = 0, LVQ = 1, RBF = 2 };
enum class FusionRule : std::uint8_t { MV = 0, WSUM = 1, PROD = 2, BORDA = 3 };

inline constexpr Family kFamilies[] = {Family::MLP, Family::LVQ, Family::RBF};
inline constexpr FusionRule kRules[] = {FusionRule::MV, FusionRule::WSUM, FusionRule::PROD, FusionRule::BORDA};

// Report names follow the combined-classifier naming: MLP, CLVQ, CRBF.
inline std::string_view family_name(Family f) {
    switch (f) {
    case Family::MLP: return "MLP";
    case Family::LVQ: return "CLVQ";
    case Family::RBF: return "CRBF";
    }
    return "?";
}

inline std::string_view rule_name(FusionRule r) {
    switch (r) {
    case FusionRule::MV: return "MV";
    case FusionRule::WSUM: return "WSUM";
    case FusionRule::PROD: return "PROD";
    case FusionRule::BORDA: return "BORDA";
    }
    return "?";
}

using Model = std::variant<MlpModel, LvqModel, RbfModel>;

inline ScoreVector predict(const Model& m, const Eigen::VectorXd& x) {
    return std::visit(
        [&](const auto& model) -> ScoreVector {
            using T = std::decay_t<decltype(model)>;
            if constexpr (std::is_same_v<T, MlpModel>)
                return predict_mlp(model, x);
            else if constexpr (std::is_same_v<T, LvqModel>)
                return predict_lvq(model, x);
            else
                return predict_rbf(model, x);
        },
        m);
}

inline Model train_model(Family family, const Dataset& d, const TrainConfig& cfg) {
    switch (family) {
    case Family::MLP: return train_mlp(d, cfg);
    case Family::LVQ: return train_lvq(d, cfg);
    case Family::RBF: return train_rbf(d, cfg);
    }
    throw Error(Errc::invalid_argument, "unknown classifier family");
}

struct Ensemble {
    Family family = Family::MLP;
    std::vector<Model> members;
    std::vector<double> member_weights;
    std::vector<std::string> classes;

    std::size_t size() const noexcept { return members.size(); }

    std::vector<ScoreVector> member_scores(const Eigen::VectorXd& x) const {
        std::vector<ScoreVector> out;
        out.reserve(members.size());
        for (const auto& m : members) out.push_back(predict(m, x));
        return out;
    }

    friend bool operator==(const Ensemble&, const Ensemble&) = default;
};

enum class MemberWeighting { uniform, holdout_accuracy };

struct EnsembleOptions {
    std::size_t members = 5;
    MemberWeighting weighting = MemberWeighting::uniform;
    unsigned threads = 1;
};

/// Member i is trained with seed cfg.seed + i. With holdout weighting the
/// members see a stratified 80% of the data and are weighted by their
/// accuracy on the remaining 20%.
inline Ensemble train_ensemble(Family family, const TemplateSet& train, const TrainConfig& cfg,
                               const EnsembleOptions& opt = {}) {
    if (opt.members < 1) throw Error(Errc::invalid_argument, "train_ensemble: need at least one member");
    Ensemble e;
    e.family = family;
    e.classes = train.subjects;
    TemplateSet fit = train, holdout;
    if (opt.weighting == MemberWeighting::holdout_accuracy) {
        std::tie(fit, holdout) = split(train, SplitSpec{0.8, mix_seed(cfg.seed, 77), true});
    }
    const Dataset data = to_dataset(fit);
    e.members.resize(opt.members);
    parallel_for(opt.members, opt.threads, [&](std::size_t i) {
        TrainConfig member_cfg = cfg;
        member_cfg.seed = cfg.seed + i;
        try {
            e.members[i] = train_model(family, data, member_cfg);
        } catch (const Error& err) {
            throw Error(err.code(), "member " + std::to_string(i) + ": " + err.what());
        }
    });
    e.member_weights.assign(opt.members, 1.0 / static_cast<double>(opt.members));
    if (opt.weighting == MemberWeighting::holdout_accuracy && holdout.size() > 0) {
        const auto labels = holdout.labels();
        std::vector<double> acc(opt.members, 0.0);
        for (std::size_t i = 0; i < opt.members; ++i) {
            for (std::size_t t = 0; t < holdout.size(); ++t)
                acc[i] += argmax(predict(e.members[i], to_vector(holdout.templates[t].features))) == labels[t];
        }
        const double total = std::accumulate(acc.begin(), acc.end(), 0.0);
        if (total > 0.0)
            for (std::size_t i = 0; i < opt.members; ++i) e.member_weights[i] = acc[i] / total;
    }
    for (auto& w : e.member_weights) w = detail::to_float_precision(w);
    return e;
}

/// Pairwise disagreement: entry (i, j) is the fraction of validation
/// templates on which members i and j predict different classes.
inline Eigen::MatrixXd diversity(const Ensemble& e, const TemplateSet& validation) {
    if (validation.size() == 0) throw Error(Errc::data_validation, "diversity: empty validation set");
    const auto M = e.size();
    std::vector<std::vector<std::size_t>> votes(M, std::vector<std::size_t>(validation.size()));
    for (std::size_t t = 0; t < validation.size(); ++t) {
        const auto x = to_vector(validation.templates[t].features);
        for (std::size_t i = 0; i < M; ++i) votes[i][t] = argmax(predict(e.members[i], x));
    }
    Eigen::MatrixXd D = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(M), static_cast<Eigen::Index>(M));
    for (std::size_t i = 0; i < M; ++i)
        for (std::size_t j = i + 1; j < M; ++j) {
            std::size_t differ = 0;
            for (std::size_t t = 0; t < validation.size(); ++t) differ += votes[i][t] != votes[j][t];
            const double v = static_cast<double>(differ) / static_cast<double>(validation.size());
            D(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
            D(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = v;
        }
    return D;
}

// ---------------------------------------------------------------------------
// Fusion

struct Decision {
    std::size_t predicted_class = 0;
    ScoreVector fused_scores;
    FusionRule rule = FusionRule::MV;
};

namespace detail {

// Lexicographic class order; class indices stand in when no labels are given.
inline bool label_less(std::span<const std::string> labels, std::size_t a, std::size_t b) {
    if (labels.empty()) return a < b;
    if (labels[a] != labels[b]) return labels[a] < labels[b];
    return a < b;
}

// Best class under `key` (larger wins), remaining ties by label.
template <typename Key>
std::size_t pick(std::size_t classes, std::span<const std::string> labels, Key&& key) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < classes; ++c) {
        const auto kc = key(c), kb = key(best);
        if (kc > kb || (kc == kb && label_less(labels, c, best))) best = c;
    }
    return best;
}

inline std::size_t member_vote(const ScoreVector& s, std::span<const std::string> labels) {
    return pick(s.size(), labels, [&](std::size_t c) { return s[c]; });
}

inline ScoreVector normalized(ScoreVector v) {
    const double total = std::accumulate(v.begin(), v.end(), 0.0);
    if (total > 0.0) {
        for (double& x : v) x /= total;
    } else {
        std::fill(v.begin(), v.end(), 1.0 / static_cast<double>(v.size()));
    }
    return v;
}

inline ScoreVector weighted_sum(std::span<const ScoreVector> scores, std::span<const double> weights) {
    ScoreVector fused(scores[0].size(), 0.0);
    for (std::size_t i = 0; i < scores.size(); ++i)
        for (std::size_t c = 0; c < fused.size(); ++c) fused[c] += weights[i] * scores[i][c];
    return fused;
}

}  // namespace detail

/// Combines member score vectors under one rule.
///   MV    argmax votes; ties by summed scores, then label.
///   WSUM  sum_i w_i s_ic; ties by label.
///   PROD  prod_i max(s_ic, 1e-12), renormalized; ties by label.
///   BORDA member rank r earns C-1-r points (ranks by score, ties by label);
///         ties by WSUM, then label.
inline Decision fuse(std::span<const ScoreVector> member_scores, FusionRule rule, std::span<const double> weights,
                     std::span<const std::string> labels = {}) {
    if (member_scores.empty()) throw Error(Errc::invalid_argument, "fuse: no member scores");
    const std::size_t C = member_scores[0].size();
    if (C == 0) throw Error(Errc::invalid_argument, "fuse: empty score vector");
    for (const auto& s : member_scores)
        if (s.size() != C) throw Error(Errc::invalid_argument, "fuse: members disagree on the class list");
    if (!labels.empty() && labels.size() != C) throw Error(Errc::invalid_argument, "fuse: label count mismatch");
    if (weights.size() != member_scores.size()) throw Error(Errc::invalid_argument, "fuse: one weight per member");
    double wsum = 0.0;
    for (double w : weights) {
        if (!(w >= 0.0)) throw Error(Errc::invalid_argument, "fuse: negative member weight");
        wsum += w;
    }
    if (std::abs(wsum - 1.0) > 1e-6) throw Error(Errc::invalid_argument, "fuse: weights must sum to 1");

    Decision d;
    d.rule = rule;
    switch (rule) {
    case FusionRule::MV: {
        ScoreVector votes(C, 0.0), mass(C, 0.0);
        for (const auto& s : member_scores) {
            votes[detail::member_vote(s, labels)] += 1.0;
            for (std::size_t c = 0; c < C; ++c) mass[c] += s[c];
        }
        d.predicted_class = detail::pick(C, labels, [&](std::size_t c) { return std::pair(votes[c], mass[c]); });
        d.fused_scores = detail::normalized(votes);
        break;
    }
    case FusionRule::WSUM: {
        auto fused = detail::weighted_sum(member_scores, weights);
        d.predicted_class = detail::pick(C, labels, [&](std::size_t c) { return fused[c]; });
        d.fused_scores = detail::normalized(std::move(fused));
        break;
    }
    case FusionRule::PROD: {
        // Log domain: the product of many floored scores would underflow.
        // Terms are summed in sorted order so equal multisets tie exactly.
        ScoreVector logp(C, 0.0);
        std::vector<double> terms(member_scores.size());
        for (std::size_t c = 0; c < C; ++c) {
            for (std::size_t i = 0; i < terms.size(); ++i) terms[i] = std::log(std::max(member_scores[i][c], 1e-12));
            std::sort(terms.begin(), terms.end());
            for (double t : terms) logp[c] += t;
        }
        d.predicted_class = detail::pick(C, labels, [&](std::size_t c) { return logp[c]; });
        const double mx = *std::max_element(logp.begin(), logp.end());
        ScoreVector p(C);
        for (std::size_t c = 0; c < C; ++c) p[c] = std::exp(logp[c] - mx);
        d.fused_scores = detail::normalized(std::move(p));
        break;
    }
    case FusionRule::BORDA: {
        ScoreVector points(C, 0.0);
        std::vector<std::size_t> order(C);
        for (const auto& s : member_scores) {
            std::iota(order.begin(), order.end(), std::size_t{0});
            std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
                if (s[a] != s[b]) return s[a] > s[b];
                return detail::label_less(labels, a, b);
            });
            for (std::size_t r = 0; r < C; ++r) points[order[r]] += static_cast<double>(C - 1 - r);
        }
        const auto ws = detail::weighted_sum(member_scores, weights);
        d.predicted_class = detail::pick(C, labels, [&](std::size_t c) { return std::pair(points[c], ws[c]); });
        d.fused_scores = detail::normalized(std::move(points));
        break;
    }
    }
    return d;
}

inline Decision fuse(std::span<const ScoreVector> member_scores, FusionRule rule,
                     std::span<const std::string> labels = {}) {
    std::vector<double> w(member_scores.size(), 1.0 / static_cast<double>(member_scores.size()));
    return fuse(member_scores, rule, w, labels);
}

struct ViewScores {
    int view_angle = 0;
    std::vector<ScoreVector> member_scores;
};

/// Pools the members of every view into one uniformly weighted list and
/// fuses that.
inline Decision fuse_views(std::span<const ViewScores> views, FusionRule rule,
                           std::span<const std::string> labels = {}) {
    if (views.empty()) throw Error(Errc::invalid_argument, "fuse_views: no views");
    std::vector<ScoreVector> pooled;
    for (const auto& v : views) pooled.insert(pooled.end(), v.member_scores.begin(), v.member_scores.end());
    return fuse(pooled, rule, labels);
}

// ---------------------------------------------------------------------------
// Persistence: "MVBM1", family tag u8, u32 members, u32 input dim,
// u32 classes, class table, f32 member weights, then per member its
// parameter blobs (f32). MLP members carry their standardization vectors.

namespace detail {

inline void put_matrix(std::ostream& out, const Eigen::MatrixXd& m) {
    bin::put_u32(out, static_cast<std::uint32_t>(m.rows()));
    bin::put_u32(out, static_cast<std::uint32_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) bin::put_f32(out, static_cast<float>(m(i, j)));
}

inline Eigen::MatrixXd get_matrix(std::istream& in) {
    const auto r = bin::get_u32(in), c = bin::get_u32(in);
    if (std::uint64_t{r} * c > (1ull << 30)) throw Error(Errc::data_validation, "model file: matrix too large");
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = bin::get_f32(in);
    return m;
}

inline void put_vector(std::ostream& out, const Eigen::VectorXd& v) { put_matrix(out, v); }

inline Eigen::VectorXd get_vector(std::istream& in) {
    Eigen::MatrixXd m = get_matrix(in);
    if (m.cols() != 1) throw Error(Errc::data_validation, "model file: expected a column vector");
    return m.col(0);
}

}  // namespace detail

inline void write_ensemble(std::ostream& out, const Ensemble& e) {
    if (e.members.empty()) throw Error(Errc::invalid_argument, "write_ensemble: empty ensemble");
    const auto dim = std::visit([](const auto& m) { return m.input_dim(); }, e.members[0]);
    bin::put_magic(out, "MVBM1");
    bin::put_u8(out, static_cast<std::uint8_t>(e.family));
    bin::put_u32(out, static_cast<std::uint32_t>(e.members.size()));
    bin::put_u32(out, static_cast<std::uint32_t>(dim));
    bin::put_u32(out, static_cast<std::uint32_t>(e.classes.size()));
    for (const auto& c : e.classes) bin::put_string(out, c);
    for (double w : e.member_weights) bin::put_f32(out, static_cast<float>(w));
    for (const auto& member : e.members) {
        std::visit(
            [&](const auto& m) {
                using T = std::decay_t<decltype(m)>;
                if constexpr (std::is_same_v<T, MlpModel>) {
                    detail::put_vector(out, m.mean);
                    detail::put_vector(out, m.stddev);
                    detail::put_matrix(out, m.w1);
                    detail::put_vector(out, m.b1);
                    detail::put_matrix(out, m.w2);
                    detail::put_vector(out, m.b2);
                    bin::put_f32(out, static_cast<float>(m.final_loss));
                } else if constexpr (std::is_same_v<T, LvqModel>) {
                    detail::put_matrix(out, m.prototypes);
                    for (auto l : m.labels) bin::put_u32(out, static_cast<std::uint32_t>(l));
                } else {
                    detail::put_matrix(out, m.centers);
                    detail::put_vector(out, m.widths);
                    detail::put_matrix(out, m.weights);
                }
            },
            member);
    }
}

inline Ensemble read_ensemble(std::istream& in) {
    bin::expect_magic(in, "MVBM1");
    Ensemble e;
    const auto tag = bin::get_u8(in);
    if (tag > 2) throw Error(Errc::data_validation, "model file: unknown family tag");
    e.family = static_cast<Family>(tag);
    const auto members = bin::get_u32(in);
    const auto dim = bin::get_u32(in);
    const auto classes = bin::get_u32(in);
    if (members == 0 || members > 100000) throw Error(Errc::data_validation, "model file: bad member count");
    for (std::uint32_t i = 0; i < classes; ++i) e.classes.push_back(bin::get_string(in));
    for (std::uint32_t i = 0; i < members; ++i) e.member_weights.push_back(bin::get_f32(in));
    auto bad = [] { return Error(Errc::data_validation, "model file: inconsistent dimensions"); };
    for (std::uint32_t i = 0; i < members; ++i) {
        switch (e.family) {
        case Family::MLP: {
            MlpModel m;
            m.mean = detail::get_vector(in);
            m.stddev = detail::get_vector(in);
            m.w1 = detail::get_matrix(in);
            m.b1 = detail::get_vector(in);
            m.w2 = detail::get_matrix(in);
            m.b2 = detail::get_vector(in);
            m.final_loss = bin::get_f32(in);
            if (m.w1.cols() != dim || m.mean.size() != dim || m.stddev.size() != dim || m.b1.size() != m.w1.rows() ||
                m.w2.cols() != m.w1.rows() || m.w2.rows() != classes || m.b2.size() != classes)
                throw bad();
            e.members.emplace_back(std::move(m));
            break;
        }
        case Family::LVQ: {
            LvqModel m;
            m.prototypes = detail::get_matrix(in);
            m.classes = classes;
            for (Eigen::Index p = 0; p < m.prototypes.rows(); ++p) {
                const auto l = bin::get_u32(in);
                if (l >= classes) throw bad();
                m.labels.push_back(l);
            }
            if (m.prototypes.cols() != dim) throw bad();
            e.members.emplace_back(std::move(m));
            break;
        }
        case Family::RBF: {
            RbfModel m;
            m.centers = detail::get_matrix(in);
            m.widths = detail::get_vector(in);
            m.weights = detail::get_matrix(in);
            if (m.centers.cols() != dim || m.widths.size() != m.centers.rows() ||
                m.weights.rows() != m.centers.rows() + 1 || m.weights.cols() != classes)
                throw bad();
            e.members.emplace_back(std::move(m));
            break;
        }
        }
    }
    return e;
}

inline void save_ensemble(const Ensemble& e, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(Errc::io, "cannot write " + path.string());
    write_ensemble(out, e);
    if (!out) throw Error(Errc::io, "write failed: " + path.string());
}

inline Ensemble load_ensemble(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::io, "cannot open " + path.string());
    return read_ensemble(in);
}

}  // namespace mvface

#endif  // MVFACE_ENSEMBLE_HPP
