#pragma once

// Labeled diagonal Gaussian mixtures and the closed-form quantities of their
// noised marginals: q_t(x) = sum_y pi_y N(sqrt(abar) mu_y, abar var_y + 1 - abar).

#include "gdiff/core.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <vector>

namespace gdiff {

class GaussianMixture {
public:
    GaussianMixture(std::vector<double> weights, std::vector<Point> means, std::vector<Point> variances)
        : weights_(std::move(weights)), means_(std::move(means)), variances_(std::move(variances)) {
        require(!weights_.empty(), "mixture needs at least one component");
        require(means_.size() == weights_.size() && variances_.size() == weights_.size(),
                "mixture weights, means and variances must have equal length");
        double total = 0.0;
        for (double w : weights_) {
            require(w > 0.0, "mixture weights must be positive");
            total += w;
        }
        require(std::abs(total - 1.0) <= 1e-12, "mixture weights must sum to 1");
        const auto d = means_.front().size();
        require(d >= 1, "mixture dimension must be positive");
        for (std::size_t k = 0; k < means_.size(); ++k) {
            require(means_[k].size() == d && variances_[k].size() == d, "mixture components must share a dimension");
            require((variances_[k].array() > 0.0).all(), "mixture variances must be positive");
        }
        log_weights_.reserve(weights_.size());
        for (double w : weights_) log_weights_.push_back(std::log(w));
    }

    int num_classes() const { return static_cast<int>(weights_.size()); }
    Eigen::Index dim() const { return means_.front().size(); }
    const std::vector<double>& weights() const { return weights_; }
    const std::vector<double>& log_weights() const { return log_weights_; }
    const std::vector<Point>& means() const { return means_; }
    const std::vector<Point>& variances() const { return variances_; }

private:
    std::vector<double> weights_;
    std::vector<double> log_weights_;
    std::vector<Point> means_;
    std::vector<Point> variances_;
};

/// Four classes in 2D at (+-2, +-2), variance 0.3, uniform weights.
inline GaussianMixture benchmark_mixture() {
    std::vector<Point> means;
    for (auto [a, b] : {std::pair{2.0, 2.0}, std::pair{-2.0, 2.0}, std::pair{-2.0, -2.0}, std::pair{2.0, -2.0}}) {
        Point m(2);
        m << a, b;
        means.push_back(m);
    }
    std::vector<Point> vars(4, Point::Constant(2, 0.3));
    return GaussianMixture({0.25, 0.25, 0.25, 0.25}, std::move(means), std::move(vars));
}

/// Two 1D classes: weights (0.3, 0.7), means (-2, 1), variance 0.5.
inline GaussianMixture two_class_1d_mixture() {
    return GaussianMixture({0.3, 0.7}, {Point::Constant(1, -2.0), Point::Constant(1, 1.0)},
                           {Point::Constant(1, 0.5), Point::Constant(1, 0.5)});
}

inline GaussianMixture single_gaussian(const Point& mean, const Point& variance) {
    return GaussianMixture({1.0}, {mean}, {variance});
}

inline GaussianMixture named_mixture(const std::string& name) {
    if (name == "benchmark") return benchmark_mixture();
    if (name == "two-class-1d") return two_class_1d_mixture();
    if (name == "single-gaussian-2d") return single_gaussian(Point::Constant(2, 1.0), Point::Constant(2, 0.25));
    throw std::invalid_argument("unknown mixture '" + name + "'");
}

/// Seeded draw of n labeled points.
struct LabeledSamples {
    Batch points;
    std::vector<int> labels;
};

inline LabeledSamples sample_mixture(const GaussianMixture& mix, Eigen::Index n, std::mt19937_64& rng) {
    LabeledSamples out{Batch(n, mix.dim()), std::vector<int>(static_cast<std::size_t>(n))};
    std::discrete_distribution<int> pick(mix.weights().begin(), mix.weights().end());
    std::normal_distribution<double> normal;
    for (Eigen::Index i = 0; i < n; ++i) {
        const int y = pick(rng);
        out.labels[static_cast<std::size_t>(i)] = y;
        const auto& m = mix.means()[static_cast<std::size_t>(y)];
        const auto& v = mix.variances()[static_cast<std::size_t>(y)];
        for (Eigen::Index j = 0; j < mix.dim(); ++j) out.points(i, j) = m(j) + std::sqrt(v(j)) * normal(rng);
    }
    return out;
}

inline LabeledSamples sample_mixture(const GaussianMixture& mix, Eigen::Index n, std::uint64_t seed) {
    std::mt19937_64 rng(mix_seed(seed));
    return sample_mixture(mix, n, rng);
}

namespace detail {

/// Per-component log densities and scores of the noised mixture at one point.
struct ComponentTerms {
    std::vector<double> log_joint;  // log pi_k + log N_k(x)
    std::vector<double> resp;       // posterior responsibilities
    double log_marginal = 0.0;
};

inline double log_sum_exp(const std::vector<double>& v) {
    double m = -std::numeric_limits<double>::infinity();
    for (double x : v) m = std::max(m, x);
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (double x : v) s += std::exp(x - m);
    return m + std::log(s);
}

template <class Row>
void component_terms(const GaussianMixture& mix, const Row& x, double alpha_bar, ComponentTerms& out) {
    const int K = mix.num_classes();
    const double sa = std::sqrt(alpha_bar);
    out.log_joint.resize(static_cast<std::size_t>(K));
    out.resp.resize(static_cast<std::size_t>(K));
    for (int k = 0; k < K; ++k) {
        const auto& m = mix.means()[static_cast<std::size_t>(k)];
        const auto& v = mix.variances()[static_cast<std::size_t>(k)];
        double lp = mix.log_weights()[static_cast<std::size_t>(k)];
        for (Eigen::Index j = 0; j < mix.dim(); ++j) {
            const double var = alpha_bar * v(j) + (1.0 - alpha_bar);
            const double diff = x(j) - sa * m(j);
            lp -= 0.5 * (std::log(2.0 * std::numbers::pi * var) + diff * diff / var);
        }
        out.log_joint[static_cast<std::size_t>(k)] = lp;
    }
    out.log_marginal = log_sum_exp(out.log_joint);
    for (int k = 0; k < K; ++k)
        out.resp[static_cast<std::size_t>(k)] = std::exp(out.log_joint[static_cast<std::size_t>(k)] - out.log_marginal);
}

/// Score of component k at x: -(x - sqrt(abar) mu_k) / var_k, written into `g`.
template <class Row, class Out>
void component_score(const GaussianMixture& mix, int k, const Row& x, double alpha_bar, Out& g) {
    const double sa = std::sqrt(alpha_bar);
    const auto& m = mix.means()[static_cast<std::size_t>(k)];
    const auto& v = mix.variances()[static_cast<std::size_t>(k)];
    for (Eigen::Index j = 0; j < mix.dim(); ++j) {
        const double var = alpha_bar * v(j) + (1.0 - alpha_bar);
        g(j) = -(x(j) - sa * m(j)) / var;
    }
}

}  // namespace detail

/// log q_t(x) of the noised mixture, evaluated with log-sum-exp.
inline double analytic_marginal_logdensity(const GaussianMixture& mix, const Point& x, double alpha_bar) {
    require(x.size() == mix.dim(), "analytic_marginal_logdensity: dimension mismatch");
    detail::ComponentTerms terms;
    detail::component_terms(mix, x, alpha_bar, terms);
    return terms.log_marginal;
}

/// grad_x log q_t(x) for every row of `x`.
inline Batch analytic_score(const GaussianMixture& mix, const Batch& x, double alpha_bar) {
    require(x.cols() == mix.dim(), "analytic_score: dimension mismatch");
    Batch out = Batch::Zero(x.rows(), x.cols());
    detail::ComponentTerms terms;
    Point g(mix.dim());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        auto row = x.row(i);
        detail::component_terms(mix, row, alpha_bar, terms);
        for (int k = 0; k < mix.num_classes(); ++k) {
            detail::component_score(mix, k, row, alpha_bar, g);
            out.row(i) += terms.resp[static_cast<std::size_t>(k)] * g.transpose();
        }
    }
    return out;
}

/// Exact optimal noise prediction eps*(x) = -sqrt(1 - abar) grad log q_t(x).
inline Batch analytic_eps(const GaussianMixture& mix, const Batch& x, double alpha_bar) {
    require(alpha_bar < 1.0, "analytic_eps requires alpha_bar < 1");
    return -std::sqrt(1.0 - alpha_bar) * analytic_score(mix, x, alpha_bar);
}

/// Class-conditional version: eps* under component `label` alone.
inline Batch analytic_conditional_eps(const GaussianMixture& mix, const Batch& x, double alpha_bar,
                                      std::span<const int> labels) {
    require(alpha_bar < 1.0, "analytic_eps requires alpha_bar < 1");
    require(static_cast<Eigen::Index>(labels.size()) == x.rows(), "one label per row required");
    Batch out(x.rows(), x.cols());
    Point g(mix.dim());
    const double c = -std::sqrt(1.0 - alpha_bar);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const int y = labels[static_cast<std::size_t>(i)];
        require(y >= 0 && y < mix.num_classes(), "class label out of range");
        detail::component_score(mix, y, x.row(i), alpha_bar, g);
        out.row(i) = c * g.transpose();
    }
    return out;
}

}  // namespace gdiff
