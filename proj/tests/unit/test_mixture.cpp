#include "gdiff/mixture.hpp"
#include "gdiff/models.hpp"
#include "gdiff/schedules.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <numbers>

using namespace gdiff;

namespace {

Point p1(double v) { return Point::Constant(1, v); }

GaussianMixture symmetric_pair() {
    return GaussianMixture({0.5, 0.5}, {p1(-1.0), p1(1.0)}, {p1(0.4), p1(0.4)});
}

double log_normal(double x, double m, double v) {
    return -0.5 * (std::log(2.0 * std::numbers::pi * v) + (x - m) * (x - m) / v);
}

}  // namespace

TEST(GaussianMixture, ValidatesParameters) {
    EXPECT_THROW(GaussianMixture({0.5, 0.4}, {p1(0), p1(1)}, {p1(1), p1(1)}), std::invalid_argument);
    EXPECT_THROW(GaussianMixture({1.0, 0.0}, {p1(0), p1(1)}, {p1(1), p1(1)}), std::invalid_argument);
    EXPECT_THROW(GaussianMixture({1.0}, {p1(0)}, {p1(0)}), std::invalid_argument);
    EXPECT_THROW(GaussianMixture({0.5, 0.5}, {p1(0), Point::Zero(2)}, {p1(1), Point::Ones(2)}),
                 std::invalid_argument);
    EXPECT_THROW(GaussianMixture({}, {}, {}), std::invalid_argument);
    EXPECT_NO_THROW(GaussianMixture({0.5, 0.5 + 5e-13}, {p1(0), p1(1)}, {p1(1), p1(1)}));
}

TEST(GaussianMixture, Presets) {
    const auto b = benchmark_mixture();
    EXPECT_EQ(b.num_classes(), 4);
    EXPECT_EQ(b.dim(), 2);
    EXPECT_EQ(named_mixture("two-class-1d").dim(), 1);
    EXPECT_EQ(named_mixture("single-gaussian-2d").num_classes(), 1);
    EXPECT_THROW(named_mixture("nope"), std::invalid_argument);
}

TEST(SampleMixture, SeededAndMatchesWeights) {
    const auto mix = two_class_1d_mixture();
    const auto a = sample_mixture(mix, 50000, std::uint64_t{4});
    const auto b = sample_mixture(mix, 50000, std::uint64_t{4});
    EXPECT_EQ(a.points, b.points);
    EXPECT_EQ(a.labels, b.labels);
    const double frac1 = static_cast<double>(std::count(a.labels.begin(), a.labels.end(), 1)) / 50000.0;
    EXPECT_NEAR(frac1, 0.7, 3.0 * std::sqrt(0.21 / 50000.0));
    double m0 = 0.0;
    int n0 = 0;
    for (Eigen::Index i = 0; i < a.points.rows(); ++i)
        if (a.labels[static_cast<std::size_t>(i)] == 0) m0 += a.points(i, 0), ++n0;
    EXPECT_NEAR(m0 / n0, -2.0, 3.0 * std::sqrt(0.5 / n0));
}

TEST(MarginalLogDensity, UnitGaussianIsFixedPoint) {
    const auto mix = single_gaussian(p1(0.0), p1(1.0));
    for (double x : {-2.0, 0.0, 0.7})
        EXPECT_NEAR(analytic_marginal_logdensity(mix, p1(x), 0.5), log_normal(x, 0.0, 1.0), 1e-14);
}

TEST(MarginalLogDensity, SymmetricMixtureIsEven) {
    const auto mix = symmetric_pair();
    for (double x : {0.3, 1.1, 2.5})
        EXPECT_NEAR(analytic_marginal_logdensity(mix, p1(x), 0.6), analytic_marginal_logdensity(mix, p1(-x), 0.6),
                    1e-14);
}

TEST(MarginalLogDensity, TwoClassReferenceValue) {
    EXPECT_NEAR(analytic_marginal_logdensity(two_class_1d_mixture(), p1(0.0), 0.72), -1.538677865061, 1e-11);
}

TEST(MarginalLogDensity, StableForTinyWeights) {
    const double tiny = std::exp(-700.0);
    const GaussianMixture mix({tiny, 1.0 - tiny}, {p1(0.0), p1(1000.0)}, {p1(1.0), p1(1.0)});
    const double lp = analytic_marginal_logdensity(mix, p1(0.0), 1.0 - 1e-12);
    EXPECT_TRUE(std::isfinite(lp));
    EXPECT_NEAR(lp, -700.0 + log_normal(0.0, 0.0, 1.0), 1e-6);
}

TEST(AnalyticEps, SingleGaussianClosedForm) {
    const auto mix = single_gaussian(Point::Zero(2), Point::Ones(2));
    Batch x(3, 2);
    x << 0.5, -1.0, 2.0, 0.0, -0.3, 0.9;
    const Batch eps = analytic_eps(mix, x, 0.5);
    EXPECT_TRUE(eps.isApprox(std::sqrt(0.5) * x, 1e-14));
    EXPECT_TRUE(analytic_score(mix, x, 0.5).isApprox(-x, 1e-14));
}

TEST(AnalyticEps, SymmetricMixtureVanishesAtOrigin) {
    Batch x = Batch::Zero(1, 1);
    EXPECT_NEAR(analytic_eps(symmetric_pair(), x, 0.3)(0, 0), 0.0, 1e-15);
}

TEST(AnalyticEps, MatchesFiniteDifferenceOfLogDensity) {
    const auto s = make_cosine_schedule(1000);
    std::mt19937_64 rng(9);
    std::normal_distribution<double> n;
    for (const auto& mix : {benchmark_mixture(), two_class_1d_mixture()}) {
        for (int t : {1, 100, 400, 800, 1000}) {
            const double ab = s.alpha_bar(t);
            for (int trial = 0; trial < 8; ++trial) {
                Batch x(1, mix.dim());
                for (Eigen::Index j = 0; j < mix.dim(); ++j) x(0, j) = 2.0 * n(rng);
                const Batch eps = analytic_eps(mix, x, ab);
                for (Eigen::Index j = 0; j < mix.dim(); ++j) {
                    const double fd = oracle::central_difference(
                        [&](double v) {
                            Point p = x.row(0).transpose();
                            p(j) = v;
                            return analytic_marginal_logdensity(mix, p, ab);
                        },
                        x(0, j));
                    EXPECT_LT(oracle::relative_error(eps(0, j), -std::sqrt(1.0 - ab) * fd, 1e-3), 1e-4);
                }
            }
        }
    }
}

TEST(AnalyticEps, RejectsNoiselessInput) {
    Batch x = Batch::Zero(1, 1);
    EXPECT_THROW(analytic_eps(symmetric_pair(), x, 1.0), std::invalid_argument);
    EXPECT_THROW(analytic_score(symmetric_pair(), Batch::Zero(1, 2), 0.5), std::invalid_argument);
}

TEST(AnalyticEps, ConditionalUsesLabelledComponent) {
    const auto mix = two_class_1d_mixture();
    Batch x(2, 1);
    x << 0.3, 0.3;
    const std::vector<int> labels{0, 1};
    const Batch eps = analytic_conditional_eps(mix, x, 0.6, labels);
    for (int k = 0; k < 2; ++k) {
        const auto single = single_gaussian(mix.means()[static_cast<std::size_t>(k)], mix.variances()[0]);
        EXPECT_NEAR(eps(k, 0), analytic_eps(single, x.topRows(1), 0.6)(0, 0), 1e-14);
    }
    EXPECT_THROW(analytic_conditional_eps(mix, x, 0.6, std::vector<int>{0, 2}), std::invalid_argument);
    EXPECT_THROW(analytic_conditional_eps(mix, x, 0.6, std::vector<int>{0}), std::invalid_argument);
}

TEST(AnalyticDenoiser, PerRowTimesMatchSharedTime) {
    const AnalyticDenoiser model(benchmark_mixture());
    const auto data = sample_mixture(benchmark_mixture(), 6, std::uint64_t{1});
    const StepTime shared{10, 0.4};
    const std::vector<StepTime> per_row(6, shared);
    const auto a = model.predict(data.points, std::span(&shared, 1), {});
    const auto b = model.predict(data.points, per_row, {});
    EXPECT_EQ(a.eps, b.eps);
    EXPECT_FALSE(a.v.has_value());
    EXPECT_THROW(model.predict(data.points, std::vector<StepTime>(2, shared), {}), std::invalid_argument);
}

TEST(AnalyticDenoiser, OracleMinimizesSimpleObjective) {
    // Any perturbation of eps* raises E||eps - eps_hat(x_t)||^2 under the
    // forward process; estimated with common random numbers.
    const auto mix = benchmark_mixture();
    const auto s = make_linear_schedule(1000);
    const int n = 20000;
    const auto data = sample_mixture(mix, n, std::uint64_t{12});
    std::mt19937_64 rng(13);
    std::normal_distribution<double> normal;
    for (int t : {50, 300, 700}) {
        const double ab = s.alpha_bar(t);
        Batch eps(n, 2);
        for (Eigen::Index i = 0; i < eps.size(); ++i) eps.data()[i] = normal(rng);
        const Batch xt = std::sqrt(ab) * data.points + std::sqrt(1.0 - ab) * eps;
        const Batch star = analytic_eps(mix, xt, ab);
        const double base = (eps - star).squaredNorm() / n;
        for (double delta : {0.05, -0.05}) {
            const Batch shifted = (star.array() + delta).matrix();
            EXPECT_GT((eps - shifted).squaredNorm() / n, base) << t;
            const Batch scaled = (1.0 + delta) * star;
            EXPECT_GT((eps - scaled).squaredNorm() / n, base) << t;
        }
    }
}
