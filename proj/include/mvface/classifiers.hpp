#ifndef MVFACE_CLASSIFIERS_HPP
#define MVFACE_CLASSIFIERS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mvface/error.hpp"
#include "mvface/face_template.hpp"
#include "mvface/random.hpp"

namespace mvface {

/// Shared hyperparameters for all three families. One hidden unit is one
/// MLP neuron, one LVQ prototype or one RBF centre.
struct TrainConfig {
    std::size_t hidden_units = 500;
    std::size_t epochs = 300;
    double learning_rate = 0.03;
    std::uint64_t seed = 0;

    void validate() const {
        if (hidden_units < 1) throw Error(Errc::invalid_argument, "train: hidden_units must be >= 1");
        if (!(learning_rate > 0.0)) throw Error(Errc::invalid_argument, "train: learning_rate must be > 0");
    }
};

using ScoreVector = std::vector<double>;

inline std::size_t argmax(std::span<const double> scores) noexcept {
    return static_cast<std::size_t>(std::max_element(scores.begin(), scores.end()) - scores.begin());
}

/// Row-per-sample training data.
struct Dataset {
    Eigen::MatrixXd X;
    std::vector<std::size_t> y;
    std::size_t classes = 0;

    std::size_t size() const noexcept { return y.size(); }
};

inline Dataset to_dataset(const TemplateSet& set) {
    Dataset d;
    d.classes = set.class_count();
    d.X.resize(static_cast<Eigen::Index>(set.size()), static_cast<Eigen::Index>(set.dim()));
    for (std::size_t i = 0; i < set.size(); ++i)
        for (std::size_t j = 0; j < set.dim(); ++j)
            d.X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = set.templates[i].features[j];
    d.y = set.labels();
    return d;
}

inline Eigen::VectorXd to_vector(std::span<const float> f) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(f.size()));
    for (std::size_t i = 0; i < f.size(); ++i) v(static_cast<Eigen::Index>(i)) = f[i];
    return v;
}

namespace detail {

inline void check_training_set(const Dataset& d, const char* who, bool need_two_present = true) {
    if (d.classes < 2) throw Error(Errc::data_validation, std::string(who) + ": need at least 2 classes");
    if (d.size() == 0) throw Error(Errc::data_validation, std::string(who) + ": empty training set");
    if (!d.X.allFinite()) throw Error(Errc::numeric, std::string(who) + ": non-finite features");
    std::vector<std::size_t> count(d.classes, 0);
    for (auto c : d.y) ++count[c];
    const auto present = std::count_if(count.begin(), count.end(), [](std::size_t n) { return n > 0; });
    if (need_two_present && present < 2) throw Error(Errc::data_validation, std::string(who) + ": training set has a single class");
}

// Parameters are kept at float precision so that persisted models reload
// bit-exactly.
template <typename Derived>
void round_to_float(Eigen::MatrixBase<Derived>& m) {
    m = m.unaryExpr([](double v) { return static_cast<double>(static_cast<float>(v)); });
}

inline double to_float_precision(double v) { return static_cast<double>(static_cast<float>(v)); }

inline ScoreVector softmax(const Eigen::VectorXd& z) {
    const double mx = z.maxCoeff();
    ScoreVector s(static_cast<std::size_t>(z.size()));
    double total = 0.0;
    for (Eigen::Index i = 0; i < z.size(); ++i) total += (s[static_cast<std::size_t>(i)] = std::exp(z(i) - mx));
    for (double& v : s) v /= total;
    return s;
}

inline void check_dim(Eigen::Index got, Eigen::Index want) {
    if (got != want) throw Error(Errc::invalid_argument, "predict: feature dimension mismatch");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Multi-layer perceptron: standardize -> sigmoid hidden layer -> softmax.

struct MlpModel {
    Eigen::VectorXd mean;    // standardization, per input dimension
    Eigen::VectorXd stddev;
    Eigen::MatrixXd w1;      // hidden x input
    Eigen::VectorXd b1;
    Eigen::MatrixXd w2;      // classes x hidden
    Eigen::VectorXd b2;
    double final_loss = std::numeric_limits<double>::quiet_NaN();

    std::size_t input_dim() const noexcept { return static_cast<std::size_t>(w1.cols()); }
    std::size_t hidden_units() const noexcept { return static_cast<std::size_t>(w1.rows()); }
    std::size_t class_count() const noexcept { return static_cast<std::size_t>(w2.rows()); }

    friend bool operator==(const MlpModel& a, const MlpModel& b) {
        return a.mean == b.mean && a.stddev == b.stddev && a.w1 == b.w1 && a.b1 == b.b1 && a.w2 == b.w2 &&
               a.b2 == b.b2;
    }
};

struct MlpGradient {
    double loss = 0.0;
    Eigen::MatrixXd w1, w2;
    Eigen::VectorXd b1, b2;
};

inline Eigen::MatrixXd standardize(const MlpModel& m, const Eigen::MatrixXd& X) {
    return (X.rowwise() - m.mean.transpose()).array().rowwise() / m.stddev.transpose().array();
}

/// Mean cross-entropy over the rows of an already standardized batch and its
/// analytic gradient.
inline MlpGradient mlp_loss_gradient(const MlpModel& m, const Eigen::MatrixXd& Xs, std::span<const std::size_t> y) {
    const auto n = Xs.rows();
    Eigen::MatrixXd h = ((Xs * m.w1.transpose()).rowwise() + m.b1.transpose()).unaryExpr([](double v) {
        return 1.0 / (1.0 + std::exp(-v));
    });
    Eigen::MatrixXd z = (h * m.w2.transpose()).rowwise() + m.b2.transpose();
    Eigen::MatrixXd p(z.rows(), z.cols());
    MlpGradient g;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double mx = z.row(i).maxCoeff();
        p.row(i) = (z.row(i).array() - mx).exp();
        const double total = p.row(i).sum();
        p.row(i) /= total;
        g.loss -= (z(i, static_cast<Eigen::Index>(y[static_cast<std::size_t>(i)])) - mx - std::log(total));
    }
    g.loss /= static_cast<double>(n);
    Eigen::MatrixXd dz = p;
    for (Eigen::Index i = 0; i < n; ++i) dz(i, static_cast<Eigen::Index>(y[static_cast<std::size_t>(i)])) -= 1.0;
    dz /= static_cast<double>(n);
    g.w2 = dz.transpose() * h;
    g.b2 = dz.colwise().sum().transpose();
    Eigen::MatrixXd dh = (dz * m.w2).array() * h.array() * (1.0 - h.array());
    g.w1 = dh.transpose() * Xs;
    g.b1 = dh.colwise().sum().transpose();
    return g;
}

/// Glorot-uniform weights, zero biases, identity standardization.
inline MlpModel init_mlp(std::size_t input_dim, std::size_t hidden, std::size_t classes, std::uint64_t seed) {
    Rng rng(mix_seed(seed, 0));
    MlpModel m;
    const auto d = static_cast<Eigen::Index>(input_dim), h = static_cast<Eigen::Index>(hidden),
               c = static_cast<Eigen::Index>(classes);
    m.mean = Eigen::VectorXd::Zero(d);
    m.stddev = Eigen::VectorXd::Ones(d);
    const double a1 = std::sqrt(6.0 / static_cast<double>(input_dim + hidden));
    const double a2 = std::sqrt(6.0 / static_cast<double>(hidden + classes));
    m.w1.resize(h, d);
    for (Eigen::Index i = 0; i < h; ++i)
        for (Eigen::Index j = 0; j < d; ++j) m.w1(i, j) = rng.uniform(-a1, a1);
    m.w2.resize(c, h);
    for (Eigen::Index i = 0; i < c; ++i)
        for (Eigen::Index j = 0; j < h; ++j) m.w2(i, j) = rng.uniform(-a2, a2);
    m.b1 = Eigen::VectorXd::Zero(h);
    m.b2 = Eigen::VectorXd::Zero(c);
    detail::round_to_float(m.w1);
    detail::round_to_float(m.w2);
    return m;
}

inline double mlp_loss(const MlpModel& m, const Dataset& d) {
    return mlp_loss_gradient(m, standardize(m, d.X), d.y).loss;
}

/// Mini-batch (32) gradient descent on cross-entropy at a constant rate.
inline MlpModel train_mlp(const Dataset& d, const TrainConfig& cfg) {
    cfg.validate();
    detail::check_training_set(d, "train_mlp");
    const auto n = static_cast<Eigen::Index>(d.size());
    MlpModel m = init_mlp(static_cast<std::size_t>(d.X.cols()), cfg.hidden_units, d.classes, cfg.seed);
    m.mean = d.X.colwise().mean().transpose();
    m.stddev = ((d.X.rowwise() - m.mean.transpose()).array().square().colwise().sum() / static_cast<double>(n))
                   .sqrt()
                   .transpose()
                   .cwiseMax(1e-8);
    detail::round_to_float(m.mean);
    detail::round_to_float(m.stddev);
    m.stddev = m.stddev.cwiseMax(1e-8);
    const Eigen::MatrixXd Xs = standardize(m, d.X);

    constexpr Eigen::Index batch = 32;
    Rng rng(mix_seed(cfg.seed, 1));
    std::vector<std::size_t> order(d.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Eigen::MatrixXd xb;
    std::vector<std::size_t> yb;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(std::span<std::size_t>(order));
        for (Eigen::Index start = 0; start < n; start += batch) {
            const Eigen::Index len = std::min(batch, n - start);
            xb.resize(len, Xs.cols());
            yb.resize(static_cast<std::size_t>(len));
            for (Eigen::Index i = 0; i < len; ++i) {
                const auto src = order[static_cast<std::size_t>(start + i)];
                xb.row(i) = Xs.row(static_cast<Eigen::Index>(src));
                yb[static_cast<std::size_t>(i)] = d.y[src];
            }
            const auto g = mlp_loss_gradient(m, xb, yb);
            m.w1 -= cfg.learning_rate * g.w1;
            m.b1 -= cfg.learning_rate * g.b1;
            m.w2 -= cfg.learning_rate * g.w2;
            m.b2 -= cfg.learning_rate * g.b2;
        }
    }
    detail::round_to_float(m.w1);
    detail::round_to_float(m.b1);
    detail::round_to_float(m.w2);
    detail::round_to_float(m.b2);
    m.final_loss = mlp_loss_gradient(m, Xs, d.y).loss;
    if (!std::isfinite(m.final_loss)) throw Error(Errc::numeric, "train_mlp: training diverged");
    return m;
}

inline ScoreVector predict_mlp(const MlpModel& m, const Eigen::VectorXd& x) {
    detail::check_dim(x.size(), static_cast<Eigen::Index>(m.input_dim()));
    const Eigen::VectorXd xs = (x - m.mean).cwiseQuotient(m.stddev);
    const Eigen::VectorXd h = (m.w1 * xs + m.b1).unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
    return detail::softmax(m.w2 * h + m.b2);
}

// ---------------------------------------------------------------------------
// Learning vector quantization (LVQ1).

struct LvqModel {
    Eigen::MatrixXd prototypes;  // one row per prototype
    std::vector<std::size_t> labels;
    std::size_t classes = 0;

    std::size_t input_dim() const noexcept { return static_cast<std::size_t>(prototypes.cols()); }
    std::size_t hidden_units() const noexcept { return static_cast<std::size_t>(prototypes.rows()); }
    std::size_t class_count() const noexcept { return classes; }

    friend bool operator==(const LvqModel& a, const LvqModel& b) {
        return a.prototypes == b.prototypes && a.labels == b.labels && a.classes == b.classes;
    }
};

/// One LVQ1 step: attract the prototype towards x on a label match, repel
/// it otherwise.
template <typename Proto, typename Vec>
void lvq1_update(Proto&& prototype, const Vec& x, bool same_label, double lr) {
    if (same_label)
        prototype += lr * (x - prototype);
    else
        prototype -= lr * (x - prototype);
}

/// Prototype counts per class: one each, the remainder proportional to class
/// frequency by largest remainder (ties to the lower class index).
inline std::vector<std::size_t> allocate_prototypes(std::span<const std::size_t> class_sizes, std::size_t total) {
    const std::size_t c = class_sizes.size();
    std::vector<std::size_t> alloc(c, 1);
    if (total <= c) return alloc;
    const std::size_t extra = total - c;
    const double n = static_cast<double>(std::accumulate(class_sizes.begin(), class_sizes.end(), std::size_t{0}));
    std::vector<double> rem(c);
    std::size_t given = 0;
    for (std::size_t i = 0; i < c; ++i) {
        const double quota = static_cast<double>(extra) * static_cast<double>(class_sizes[i]) / n;
        const auto base = static_cast<std::size_t>(std::floor(quota));
        alloc[i] += base;
        given += base;
        rem[i] = quota - static_cast<double>(base);
    }
    std::vector<std::size_t> order(c);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rem[a] > rem[b]; });
    for (std::size_t k = 0; given < extra; ++k, ++given) ++alloc[order[k % c]];
    return alloc;
}

inline std::size_t nearest_prototype(const LvqModel& m, const Eigen::VectorXd& x) {
    Eigen::Index best = 0;
    (m.prototypes.rowwise() - x.transpose()).rowwise().squaredNorm().minCoeff(&best);
    return static_cast<std::size_t>(best);
}

inline LvqModel train_lvq(const Dataset& d, const TrainConfig& cfg) {
    cfg.validate();
    detail::check_training_set(d, "train_lvq");
    std::vector<std::vector<std::size_t>> by_class(d.classes);
    for (std::size_t i = 0; i < d.size(); ++i) by_class[d.y[i]].push_back(i);
    std::vector<std::size_t> sizes;
    for (std::size_t c = 0; c < d.classes; ++c) {
        if (by_class[c].empty())
            throw Error(Errc::data_validation, "train_lvq: class " + std::to_string(c) + " has no samples");
        sizes.push_back(by_class[c].size());
    }
    const auto alloc = allocate_prototypes(sizes, cfg.hidden_units);

    Rng init_rng(mix_seed(cfg.seed, 0));
    LvqModel m;
    m.classes = d.classes;
    m.prototypes.resize(static_cast<Eigen::Index>(std::accumulate(alloc.begin(), alloc.end(), std::size_t{0})),
                        d.X.cols());
    Eigen::Index row = 0;
    for (std::size_t c = 0; c < d.classes; ++c) {
        auto pool = by_class[c];
        init_rng.shuffle(std::span<std::size_t>(pool));
        for (std::size_t k = 0; k < alloc[c]; ++k, ++row) {
            m.prototypes.row(row) = d.X.row(static_cast<Eigen::Index>(pool[k % pool.size()]));
            m.labels.push_back(c);
        }
    }

    Rng rng(mix_seed(cfg.seed, 1));
    std::vector<std::size_t> order(d.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Eigen::VectorXd x;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr =
            cfg.learning_rate * (1.0 - static_cast<double>(epoch) / static_cast<double>(cfg.epochs));
        rng.shuffle(std::span<std::size_t>(order));
        for (auto i : order) {
            x = d.X.row(static_cast<Eigen::Index>(i)).transpose();
            const auto p = nearest_prototype(m, x);
            lvq1_update(m.prototypes.row(static_cast<Eigen::Index>(p)), x.transpose(), m.labels[p] == d.y[i], lr);
        }
    }
    detail::round_to_float(m.prototypes);
    if (!m.prototypes.allFinite()) throw Error(Errc::numeric, "train_lvq: non-finite prototype");
    return m;
}

/// Softmin over each class's nearest-prototype distance, temperature = mean
/// of those distances.
inline ScoreVector predict_lvq(const LvqModel& m, const Eigen::VectorXd& x) {
    detail::check_dim(x.size(), static_cast<Eigen::Index>(m.input_dim()));
    const Eigen::VectorXd dist = (m.prototypes.rowwise() - x.transpose()).rowwise().norm();
    std::vector<double> dc(m.classes, std::numeric_limits<double>::infinity());
    for (std::size_t p = 0; p < m.labels.size(); ++p)
        dc[m.labels[p]] = std::min(dc[m.labels[p]], dist(static_cast<Eigen::Index>(p)));
    const double tau = std::max(1e-8, std::accumulate(dc.begin(), dc.end(), 0.0) / static_cast<double>(dc.size()));
    Eigen::VectorXd z(static_cast<Eigen::Index>(m.classes));
    for (std::size_t c = 0; c < m.classes; ++c) z(static_cast<Eigen::Index>(c)) = -dc[c] / tau;
    return detail::softmax(z);
}

// ---------------------------------------------------------------------------
// Radial basis function network: k-means centres, Gaussian units, ridge
// least-squares output layer.

struct RbfModel {
    Eigen::MatrixXd centers;  // one row per centre
    Eigen::VectorXd widths;
    Eigen::MatrixXd weights;  // (centres + 1) x classes, last row is the bias
    bool clamped = false;     // hidden_units exceeded the sample count

    std::size_t input_dim() const noexcept { return static_cast<std::size_t>(centers.cols()); }
    std::size_t hidden_units() const noexcept { return static_cast<std::size_t>(centers.rows()); }
    std::size_t class_count() const noexcept { return static_cast<std::size_t>(weights.cols()); }

    friend bool operator==(const RbfModel& a, const RbfModel& b) {
        return a.centers == b.centers && a.widths == b.widths && a.weights == b.weights;
    }
};

/// Lloyd iterations from `k` distinct seeded samples; an empty cluster is
/// re-seeded with the sample farthest from its assigned centre.
inline Eigen::MatrixXd kmeans(const Eigen::MatrixXd& X, std::size_t k, std::size_t iterations, std::uint64_t seed) {
    const auto n = static_cast<std::size_t>(X.rows());
    if (k < 1 || k > n) throw Error(Errc::invalid_argument, "kmeans: k must be in [1, n]");
    Rng rng(seed);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(std::span<std::size_t>(order));
    Eigen::MatrixXd C(static_cast<Eigen::Index>(k), X.cols());
    for (std::size_t j = 0; j < k; ++j) C.row(static_cast<Eigen::Index>(j)) = X.row(static_cast<Eigen::Index>(order[j]));

    std::vector<std::size_t> assign(n, 0);
    std::vector<double> dist(n, 0.0);
    for (std::size_t it = 0; it < iterations; ++it) {
        for (std::size_t i = 0; i < n; ++i) {
            Eigen::Index best = 0;
            dist[i] = (C.rowwise() - X.row(static_cast<Eigen::Index>(i))).rowwise().squaredNorm().minCoeff(&best);
            assign[i] = static_cast<std::size_t>(best);
        }
        Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(C.rows(), C.cols());
        std::vector<std::size_t> count(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            sum.row(static_cast<Eigen::Index>(assign[i])) += X.row(static_cast<Eigen::Index>(i));
            ++count[assign[i]];
        }
        std::vector<char> taken(n, 0);
        for (std::size_t j = 0; j < k; ++j) {
            if (count[j] > 0) {
                C.row(static_cast<Eigen::Index>(j)) = sum.row(static_cast<Eigen::Index>(j)) / static_cast<double>(count[j]);
                continue;
            }
            std::size_t far = n;
            for (std::size_t i = 0; i < n; ++i)
                if (!taken[i] && (far == n || dist[i] > dist[far])) far = i;
            taken[far] = 1;
            C.row(static_cast<Eigen::Index>(j)) = X.row(static_cast<Eigen::Index>(far));
        }
    }
    return C;
}

inline Eigen::VectorXd rbf_activations(const RbfModel& m, const Eigen::VectorXd& x) {
    const Eigen::VectorXd d2 = (m.centers.rowwise() - x.transpose()).rowwise().squaredNorm();
    Eigen::VectorXd phi(d2.size() + 1);
    for (Eigen::Index j = 0; j < d2.size(); ++j) phi(j) = std::exp(-d2(j) / (2.0 * m.widths(j) * m.widths(j)));
    phi(d2.size()) = 1.0;
    return phi;
}

inline RbfModel train_rbf(const Dataset& d, const TrainConfig& cfg) {
    cfg.validate();
    // a single populated class is a valid (constant) regression target here
    detail::check_training_set(d, "train_rbf", false);
    if (d.size() < d.classes) throw Error(Errc::data_validation, "train_rbf: fewer samples than classes");
    RbfModel m;
    std::size_t k = cfg.hidden_units;
    if (k > d.size()) {
        k = d.size();
        m.clamped = true;
    }
    m.centers = kmeans(d.X, k, 25, mix_seed(cfg.seed, 0));
    detail::round_to_float(m.centers);

    const auto kc = static_cast<Eigen::Index>(k);
    m.widths.resize(kc);
    for (Eigen::Index j = 0; j < kc; ++j) {
        std::vector<double> dists;
        for (Eigen::Index o = 0; o < kc; ++o)
            if (o != j) dists.push_back((m.centers.row(j) - m.centers.row(o)).norm());
        std::sort(dists.begin(), dists.end());
        const std::size_t take = std::min<std::size_t>(3, dists.size());
        double w = take ? std::accumulate(dists.begin(), dists.begin() + static_cast<std::ptrdiff_t>(take), 0.0) /
                              static_cast<double>(take)
                        : 1.0;
        m.widths(j) = std::max(w, 1e-6);
    }
    detail::round_to_float(m.widths);
    m.widths = m.widths.cwiseMax(1e-6);

    const auto n = static_cast<Eigen::Index>(d.size());
    Eigen::MatrixXd Phi(n, kc + 1);
    for (Eigen::Index i = 0; i < n; ++i) Phi.row(i) = rbf_activations(m, d.X.row(i).transpose()).transpose();
    Eigen::MatrixXd Y = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(d.classes));
    for (Eigen::Index i = 0; i < n; ++i) Y(i, static_cast<Eigen::Index>(d.y[static_cast<std::size_t>(i)])) = 1.0;
    Eigen::MatrixXd A = Phi.transpose() * Phi;
    A.diagonal().array() += 1e-6;
    m.weights = A.ldlt().solve(Phi.transpose() * Y);
    if (!m.weights.allFinite()) throw Error(Errc::numeric, "train_rbf: output solve failed");
    detail::round_to_float(m.weights);
    return m;
}

inline ScoreVector predict_rbf(const RbfModel& m, const Eigen::VectorXd& x) {
    detail::check_dim(x.size(), static_cast<Eigen::Index>(m.input_dim()));
    return detail::softmax(m.weights.transpose() * rbf_activations(m, x));
}

}  // namespace mvface

#endif  // MVFACE_CLASSIFIERS_HPP
