#pragma once

// Sample-quality metrics on raw coordinates: Frechet distance between Gaussian
// fits, k-NN manifold precision/recall, and an exp-mean-KL class fidelity
// score computed with the exact clean-data class posterior.

#include "gdiff/classifiers.hpp"
#include "gdiff/core.hpp"
#include "gdiff/mixture.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>
#include <random>
#include <vector>

namespace gdiff {

struct FrechetResult {
    double value = 0.0;
    bool degenerate = false;  // a covariance was rank-deficient or a negative eigenvalue was clamped
};

inline constexpr double kEigenClamp = 1e-10;

/// ||mu1 - mu2||^2 + Tr(S1 + S2 - 2 (S1 S2)^{1/2}); the trace of the square
/// root is taken as Tr sqrt(S1^{1/2} S2 S1^{1/2}), which is symmetric.
inline FrechetResult frechet_from_moments(const Eigen::VectorXd& mu1, const Eigen::MatrixXd& cov1,
                                          const Eigen::VectorXd& mu2, const Eigen::MatrixXd& cov2) {
    const auto d = mu1.size();
    require(mu2.size() == d && cov1.rows() == d && cov1.cols() == d && cov2.rows() == d && cov2.cols() == d,
            "frechet: dimension mismatch");
    FrechetResult r;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> e1(cov1);
    Eigen::VectorXd l1 = e1.eigenvalues();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> e2(cov2);
    if (l1.minCoeff() <= kEigenClamp || e2.eigenvalues().minCoeff() <= kEigenClamp) r.degenerate = true;
    l1 = l1.cwiseMax(0.0);
    const Eigen::MatrixXd s1_half = e1.eigenvectors() * l1.cwiseSqrt().asDiagonal() * e1.eigenvectors().transpose();
    Eigen::MatrixXd m = s1_half * cov2 * s1_half;
    m = 0.5 * (m + m.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> em(m, Eigen::EigenvaluesOnly);
    Eigen::VectorXd lm = em.eigenvalues();
    if (lm.minCoeff() < -kEigenClamp) r.degenerate = true;
    const double tr_sqrt = lm.cwiseMax(0.0).cwiseSqrt().sum();
    r.value = (mu1 - mu2).squaredNorm() + cov1.trace() + cov2.trace() - 2.0 * tr_sqrt;
    return r;
}

/// Sample mean and unbiased covariance.
inline std::pair<Eigen::VectorXd, Eigen::MatrixXd> sample_moments(const Batch& x) {
    require(x.rows() >= 2, "moments need at least two points");
    Eigen::VectorXd mu = x.colwise().mean().transpose();
    const Eigen::MatrixXd centered = x.rowwise() - mu.transpose();
    Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(x.rows() - 1);
    return {mu, cov};
}

inline FrechetResult frechet_distance(const Batch& ref, const Batch& gen) {
    require(ref.cols() == gen.cols(), "frechet: point sets must share a dimension");
    require(ref.rows() >= ref.cols() + 1 && gen.rows() >= gen.cols() + 1, "frechet: each set needs at least d + 1 points");
    const auto [m1, c1] = sample_moments(ref);
    const auto [m2, c2] = sample_moments(gen);
    return frechet_from_moments(m1, c1, m2, c2);
}

/// Fixed Gaussian projection (d x out_dim) with entries N(0, 1/d).
inline Eigen::MatrixXd random_projection(Eigen::Index dim, Eigen::Index out_dim, std::uint64_t seed) {
    std::mt19937_64 rng(mix_seed(seed));
    std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(dim)));
    Eigen::MatrixXd p(dim, out_dim);
    for (Eigen::Index i = 0; i < dim; ++i)
        for (Eigen::Index j = 0; j < out_dim; ++j) p(i, j) = normal(rng);
    return p;
}

inline Batch project(const Batch& x, const Eigen::MatrixXd& p) { return x * p; }

namespace detail {

inline double squared_distance(const Batch& a, Eigen::Index i, const Batch& b, Eigen::Index j) {
    double s = 0.0;
    for (Eigen::Index c = 0; c < a.cols(); ++c) {
        const double diff = a(i, c) - b(j, c);
        s += diff * diff;
    }
    return s;
}

/// Row indices sorted by the first coordinate.
inline std::vector<Eigen::Index> order_by_first(const Batch& x) {
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(x.rows()));
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    std::stable_sort(idx.begin(), idx.end(), [&](Eigen::Index a, Eigen::Index b) { return x(a, 0) < x(b, 0); });
    return idx;
}

}  // namespace detail

/// Squared distance from each point to its k-th nearest neighbour in the same
/// set (self excluded). Sweeps outward along the first coordinate and stops
/// once that coordinate alone exceeds the current k-th best.
inline std::vector<double> knn_squared_radii(const Batch& x, int k) {
    require(k >= 1 && k < x.rows(), "k must satisfy 1 <= k < set size");
    const auto order = detail::order_by_first(x);
    const auto n = static_cast<std::ptrdiff_t>(order.size());
    std::vector<std::ptrdiff_t> pos(order.size());
    for (std::ptrdiff_t p = 0; p < n; ++p) pos[static_cast<std::size_t>(order[static_cast<std::size_t>(p)])] = p;
    std::vector<double> out(order.size());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        std::priority_queue<double> best;
        const std::ptrdiff_t p = pos[static_cast<std::size_t>(i)];
        auto visit = [&](std::ptrdiff_t q) {
            const Eigen::Index j = order[static_cast<std::size_t>(q)];
            const double gap = x(j, 0) - x(i, 0);
            if (static_cast<int>(best.size()) == k && gap * gap > best.top()) return false;
            const double d2 = detail::squared_distance(x, i, x, j);
            if (static_cast<int>(best.size()) < k) {
                best.push(d2);
            } else if (d2 < best.top()) {
                best.pop();
                best.push(d2);
            }
            return true;
        };
        std::ptrdiff_t lo = p - 1, hi = p + 1;
        bool go_lo = lo >= 0, go_hi = hi < n;
        while (go_lo || go_hi) {
            if (go_lo) {
                go_lo = visit(lo) && --lo >= 0;
            }
            if (go_hi) {
                go_hi = visit(hi) && ++hi < n;
            }
        }
        out[static_cast<std::size_t>(i)] = best.top();
    }
    return out;
}

/// Fraction of `queries` inside the union of balls centred at `centers` with
/// the given squared radii (boundary included).
inline double manifold_coverage(const Batch& centers, const std::vector<double>& sq_radii, const Batch& queries) {
    require(centers.cols() == queries.cols(), "manifold coverage: dimension mismatch");
    if (queries.rows() == 0) return 0.0;
    const auto order = detail::order_by_first(centers);
    std::vector<double> firsts(order.size());
    for (std::size_t p = 0; p < order.size(); ++p) firsts[p] = centers(order[p], 0);
    const double max_r = std::sqrt(*std::max_element(sq_radii.begin(), sq_radii.end()));
    const double slack = max_r * (1.0 + 1e-9) + 1e-300;
    Eigen::Index inside = 0;
    for (Eigen::Index q = 0; q < queries.rows(); ++q) {
        const double x0 = queries(q, 0);
        auto first = std::lower_bound(firsts.begin(), firsts.end(), x0 - slack);
        auto last = std::upper_bound(firsts.begin(), firsts.end(), x0 + slack);
        for (auto it = first; it != last; ++it) {
            const Eigen::Index c = order[static_cast<std::size_t>(it - firsts.begin())];
            if (detail::squared_distance(queries, q, centers, c) <= sq_radii[static_cast<std::size_t>(c)]) {
                ++inside;
                break;
            }
        }
    }
    return static_cast<double>(inside) / static_cast<double>(queries.rows());
}

struct PrecisionRecall {
    double precision = 0.0;
    double recall = 0.0;
};

/// precision = share of gen inside the ref manifold; recall = share of ref
/// inside the gen manifold; manifolds are k-th-neighbour balls.
inline PrecisionRecall precision_recall(const Batch& ref, const Batch& gen, int k = 3) {
    require(ref.cols() == gen.cols(), "precision/recall: dimension mismatch");
    require(k >= 1 && k < ref.rows() && k < gen.rows(), "precision/recall: k must be smaller than both set sizes");
    const auto r_ref = knn_squared_radii(ref, k);
    const auto r_gen = knn_squared_radii(gen, k);
    return {manifold_coverage(ref, r_ref, gen), manifold_coverage(gen, r_gen, ref)};
}

/// exp(E_x KL(p(y|x) || p_bar(y))) with the exact clean-data posterior and
/// p_bar the posterior averaged over the sample set.
inline double class_fidelity(const GaussianMixture& mix, const Batch& samples) {
    require(samples.rows() > 0, "class fidelity needs a non-empty sample set");
    const AnalyticClassifier clf(mix);
    const Batch lp = clf.evaluate(samples, StepTime{0, 1.0}, {}).log_probs;
    const Batch p = lp.array().exp().matrix();
    const Eigen::RowVectorXd pbar = p.colwise().mean();
    double kl = 0.0;
    for (Eigen::Index i = 0; i < p.rows(); ++i)
        for (Eigen::Index y = 0; y < p.cols(); ++y)
            if (p(i, y) > 0.0) kl += p(i, y) * (lp(i, y) - std::log(pbar(y)));
    return std::exp(std::max(0.0, kl / static_cast<double>(p.rows())));
}

/// Mean of p(labels[i] | x_i) under the exact clean-data posterior.
inline double mean_class_probability(const GaussianMixture& mix, const Batch& samples, std::span<const int> labels) {
    require(samples.rows() > 0 && static_cast<Eigen::Index>(labels.size()) == samples.rows(),
            "mean class probability needs one label per sample");
    const Batch lp = AnalyticClassifier(mix).evaluate(samples, StepTime{0, 1.0}, {}).log_probs;
    double s = 0.0;
    for (Eigen::Index i = 0; i < lp.rows(); ++i) s += std::exp(lp(i, labels[static_cast<std::size_t>(i)]));
    return s / static_cast<double>(lp.rows());
}

struct MetricsReport {
    double frechet = 0.0;
    bool frechet_degenerate = false;
    double precision = 0.0;
    double recall = 0.0;
    double class_fidelity = 1.0;
    double mean_class_prob = 0.0;  // only meaningful when labels were supplied
    Eigen::Index sample_count = 0;
    Eigen::Index reference_count = 0;
};

inline MetricsReport evaluate_samples(const GaussianMixture& mix, const Batch& reference, const Batch& samples,
                                      int k = 3, std::span<const int> labels = {}) {
    MetricsReport r;
    const FrechetResult f = frechet_distance(reference, samples);
    r.frechet = f.value;
    r.frechet_degenerate = f.degenerate;
    const PrecisionRecall pr = precision_recall(reference, samples, k);
    r.precision = pr.precision;
    r.recall = pr.recall;
    r.class_fidelity = class_fidelity(mix, samples);
    if (!labels.empty()) r.mean_class_prob = mean_class_probability(mix, samples, labels);
    r.sample_count = samples.rows();
    r.reference_count = reference.rows();
    return r;
}

}  // namespace gdiff
