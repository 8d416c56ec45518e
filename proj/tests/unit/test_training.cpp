#include "gdiff/training.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace gdiff;

namespace {

MlpDenoiser small_denoiser(bool learn_sigma, int classes = 0) {
    MlpNetwork net(MlpDenoiser::architecture_for(2, learn_sigma, classes, 8, 2, 4, 8));
    net.initialize(7, true);
    return MlpDenoiser(std::move(net));
}

struct Fixture {
    NoiseSchedule sched = make_linear_schedule(100);
    Batch x0;
    NoiseDraw draw;
    std::vector<int> labels{0, 1, 2, 3, 1};

    Fixture() {
        std::mt19937_64 rng(3);
        x0 = sample_mixture(benchmark_mixture(), 5, rng).points;
        draw = draw_noise(rng, 5, 2, 100);
        draw.timesteps = {1, 2, 37, 80, 100};
    }
};

/// Finite-difference check of every parameter derivative of f.
template <class F>
void expect_gradient(MlpDenoiser model, const std::vector<double>& grad, F f, double tol = 1e-5) {
    auto& p = model.network().params();
    ASSERT_EQ(grad.size(), p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double saved = p[i];
        const double fd = oracle::central_difference(
            [&](double v) {
                p[i] = v;
                return f(model);
            },
            saved);
        p[i] = saved;
        EXPECT_LT(oracle::relative_error(grad[i], fd, 1e-4), tol) << "param " << i;
    }
}

}  // namespace

TEST(NoiseDraw, RangeAndShape) {
    std::mt19937_64 rng(1);
    const auto d = draw_noise(rng, 500, 3, 7);
    EXPECT_EQ(d.eps.rows(), 500);
    EXPECT_EQ(d.eps.cols(), 3);
    EXPECT_EQ(*std::min_element(d.timesteps.begin(), d.timesteps.end()), 1);
    EXPECT_EQ(*std::max_element(d.timesteps.begin(), d.timesteps.end()), 7);
    EXPECT_THROW(draw_noise(rng, 1, 1, 0), std::invalid_argument);
}

TEST(NoiseDraw, NoisedBatchFollowsForwardProcess) {
    const Fixture f;
    const Batch xt = noised_batch(f.x0, f.draw, f.sched);
    for (Eigen::Index i = 0; i < xt.rows(); ++i) {
        const int t = f.draw.timesteps[static_cast<std::size_t>(i)];
        const Point want = q_sample(Point(f.x0.row(i).transpose()), t, Point(f.draw.eps.row(i).transpose()), f.sched);
        EXPECT_TRUE(xt.row(i).transpose().isApprox(want, 1e-15));
    }
}

TEST(SimpleLoss, ZeroPredictorGivesMeanSquaredNoise) {
    const Fixture f;
    const double mean_sq = f.draw.eps.squaredNorm() / static_cast<double>(f.draw.eps.size());
    EXPECT_NEAR(simple_loss_value(ZeroDenoiser(2), f.x0, f.draw, f.sched), mean_sq, 1e-15);
    MlpDenoiser zero(MlpNetwork(MlpDenoiser::architecture_for(2, false, 0, 8, 2, 4, 8)));
    EXPECT_NEAR(simple_loss(zero, f.x0, f.draw, f.sched).total, mean_sq, 1e-15);
}

TEST(SimpleLoss, GradientMatchesFiniteDifferences) {
    const Fixture f;
    for (bool learn_sigma : {false, true}) {
        const MlpDenoiser model = small_denoiser(learn_sigma);
        const auto r = simple_loss(model, f.x0, f.draw, f.sched);
        EXPECT_DOUBLE_EQ(r.total, r.simple);
        EXPECT_NEAR(r.simple, simple_loss_value(model, f.x0, f.draw, f.sched), 1e-14);
        expect_gradient(model, r.grad,
                        [&](const MlpDenoiser& m) { return simple_loss_value(m, f.x0, f.draw, f.sched); });
    }
}

TEST(SimpleLoss, ConditionalGradientMatchesFiniteDifferences) {
    const Fixture f;
    const MlpDenoiser model = small_denoiser(false, 4);
    const auto r = simple_loss(model, f.x0, f.draw, f.sched, f.labels);
    expect_gradient(model, r.grad,
                    [&](const MlpDenoiser& m) { return simple_loss_value(m, f.x0, f.draw, f.sched, f.labels); });
}

TEST(HybridLoss, GradientMatchesStopGradientObjective) {
    // Reference objective: L_simple + lambda T mean(term), with the reverse
    // mean frozen at the unperturbed parameters.
    const Fixture f;
    const MlpDenoiser model = small_denoiser(true);
    const double lambda = 0.01;
    const auto r = hybrid_loss(model, f.x0, f.draw, f.sched, lambda);
    const Batch xt = noised_batch(f.x0, f.draw, f.sched);
    const auto times = step_times(f.draw, f.sched);
    const Batch frozen_eps = model.predict(xt, times, {}).eps;
    auto objective = [&](const MlpDenoiser& m) {
        const auto out = m.predict(xt, times, {});
        double term = 0.0;
        for (Eigen::Index i = 0; i < xt.rows(); ++i) {
            const int t = f.draw.timesteps[static_cast<std::size_t>(i)];
            const Point xti = xt.row(i).transpose();
            const Point mean = mu_from_eps(xti, t, Point(frozen_eps.row(i).transpose()), f.sched);
            const Point var = sigma_from_v(Point(out.v->row(i).transpose()), t, f.sched);
            term += vlb_term(t - 1, Point(f.x0.row(i).transpose()), xti, mean, var, f.sched);
        }
        const double simple = (f.draw.eps - out.eps).squaredNorm() / static_cast<double>(xt.size());
        return simple + lambda * f.sched.num_steps() * term / static_cast<double>(xt.size());
    };
    EXPECT_NEAR(r.total, objective(model), 1e-12);
    EXPECT_NEAR(r.total, r.simple + lambda * 100 * r.vlb, 1e-12);
    expect_gradient(model, r.grad, objective);
}

TEST(HybridLoss, ZeroLambdaEqualsSimple) {
    const Fixture f;
    const MlpDenoiser model = small_denoiser(true);
    const auto h = hybrid_loss(model, f.x0, f.draw, f.sched, 0.0);
    const auto s = simple_loss(model, f.x0, f.draw, f.sched);
    EXPECT_EQ(h.total, s.total);
    EXPECT_EQ(h.grad, s.grad);
    EXPECT_NE(h.vlb, 0.0);
}

TEST(HybridLoss, Errors) {
    const Fixture f;
    EXPECT_THROW(hybrid_loss(small_denoiser(false), f.x0, f.draw, f.sched, 0.001), std::invalid_argument);
    EXPECT_THROW(hybrid_loss(small_denoiser(true), f.x0, f.draw, f.sched, -0.001), std::invalid_argument);
    EXPECT_THROW(simple_loss(small_denoiser(true), Batch(0, 2), f.draw, f.sched), std::invalid_argument);
}

TEST(ClassifierLoss, GradientMatchesFiniteDifferences) {
    const Fixture f;
    MlpNetwork net(MlpClassifier::architecture_for(2, 4, 8, 2, 4, 8));
    net.initialize(11, true);
    const MlpClassifier clf(net);
    const auto r = classifier_loss(clf, f.x0, f.labels, f.draw, f.sched);
    auto nll = [&](const MlpClassifier& c) {
        const Batch xt = noised_batch(f.x0, f.draw, f.sched);
        double total = 0.0;
        for (Eigen::Index i = 0; i < xt.rows(); ++i) {
            const StepTime st = f.sched.step_time(f.draw.timesteps[static_cast<std::size_t>(i)]);
            total -= c.log_probs(xt.row(i), st)(0, f.labels[static_cast<std::size_t>(i)]);
        }
        return total / static_cast<double>(xt.rows());
    };
    EXPECT_NEAR(r.total, nll(clf), 1e-12);
    MlpClassifier probe = clf;
    auto& p = probe.network().params();
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double saved = p[i];
        const double fd = oracle::central_difference(
            [&](double v) {
                p[i] = v;
                return nll(probe);
            },
            saved);
        p[i] = saved;
        EXPECT_LT(oracle::relative_error(r.grad[i], fd, 1e-4), 1e-5) << "param " << i;
    }
    EXPECT_THROW(classifier_loss(clf, f.x0, std::vector<int>{0}, f.draw, f.sched), std::invalid_argument);
}

TEST(Adam, FirstStepMovesByLearningRate) {
    for (double g : {1e-3, 1.0, -50.0}) {
        std::vector<double> p{0.5};
        AdamState st;
        adam_step(p, {g}, st, AdamConfig{});
        EXPECT_NEAR(p[0], 0.5 - 1e-3 * std::copysign(1.0, g), 1e-8);
        EXPECT_EQ(st.step, 1);
    }
}

TEST(Adam, SecondStepHandComputed) {
    std::vector<double> p{1.0};
    AdamState st;
    const AdamConfig cfg{0.1, 0.9, 0.999, 1e-8, 0.0};
    adam_step(p, {2.0}, st, cfg);
    adam_step(p, {-1.0}, st, cfg);
    const double m = 0.9 * 0.2 + 0.1 * -1.0;
    const double v = 0.999 * 0.004 + 0.001 * 1.0;
    const double mhat = m / (1 - 0.81), vhat = v / (1 - 0.999 * 0.999);
    const double first = 1.0 - 0.1 * 2.0 / (2.0 + 1e-8);
    EXPECT_NEAR(p[0], first - 0.1 * mhat / (std::sqrt(vhat) + 1e-8), 1e-12);
}

TEST(Adam, DecoupledWeightDecay) {
    std::vector<double> p{2.0};
    AdamState st;
    AdamConfig cfg;
    cfg.lr = 0.01;
    cfg.weight_decay = 0.5;
    adam_step(p, {0.0}, st, cfg);
    EXPECT_NEAR(p[0], 2.0 - 0.01 * 0.5 * 2.0, 1e-15);
    EXPECT_THROW(adam_step(p, {0.0, 1.0}, st, cfg), std::invalid_argument);
}

TEST(Ema, Examples) {
    std::vector<double> ema{0.0, 4.0};
    ema_update(ema, {2.0, 0.0}, 0.5);
    EXPECT_EQ(ema, (std::vector<double>{1.0, 2.0}));
    ema_update(ema, {3.0, 3.0}, 0.0);
    EXPECT_EQ(ema, (std::vector<double>{3.0, 3.0}));
    EXPECT_THROW(ema_update(ema, {1.0, 1.0}, 1.0), std::invalid_argument);
    EXPECT_THROW(ema_update(ema, {1.0}, 0.5), std::invalid_argument);
}

TEST(TrainConfig, Validation) {
    TrainConfig c;
    EXPECT_NO_THROW(c.validate());
    c.batch_size = 0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = {};
    c.ema_rate = 1.0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = {};
    c.adam.lr = 0.0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = {};
    c.lambda_vlb = -1.0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(TrainDiffusion, SeededDeterminism) {
    const auto mix = benchmark_mixture();
    const auto arch = MlpDenoiser::architecture_for(2, true, 0, 16, 2, 8, 8);
    const auto sched = make_linear_schedule(100);
    TrainConfig cfg;
    cfg.iterations = 20;
    cfg.batch_size = 32;
    cfg.seed = 9;
    const auto a = train_diffusion(mix, arch, sched, cfg);
    const auto b = train_diffusion(mix, arch, sched, cfg);
    EXPECT_EQ(a.model.network().params(), b.model.network().params());
    EXPECT_EQ(a.log.size(), 20u);
    EXPECT_EQ(a.steps, 20);
    cfg.seed = 10;
    EXPECT_NE(train_diffusion(mix, arch, sched, cfg).model.network().params(), a.model.network().params());
}

TEST(TrainDiffusion, ZeroIterationsKeepsInitialWeights) {
    const auto arch = MlpDenoiser::architecture_for(2, false, 0, 16, 2, 8, 8);
    TrainConfig cfg;
    cfg.iterations = 0;
    cfg.seed = 4;
    const auto r = train_diffusion(benchmark_mixture(), arch, make_linear_schedule(100), cfg);
    MlpNetwork fresh(arch);
    fresh.initialize(derive_seed(4, 0));
    EXPECT_EQ(r.model.network().params(), fresh.params());
    EXPECT_TRUE(r.log.empty());
}

TEST(TrainDiffusion, LossDecreases) {
    const auto mix = benchmark_mixture();
    const auto sched = make_linear_schedule(100);
    TrainConfig cfg;
    cfg.iterations = 300;
    cfg.batch_size = 128;
    cfg.ema_rate = 0.9;
    cfg.seed = 2;
    const auto r = train_diffusion(mix, MlpDenoiser::architecture_for(2, false, 0, 32, 2, 8, 16), sched, cfg);
    std::mt19937_64 rng(5);
    const auto data = sample_mixture(mix, 4000, rng);
    const auto draw = draw_noise(rng, 4000, 2, 100);
    EXPECT_LT(simple_loss_value(r.model, data.points, draw, sched), 0.9);
}

TEST(TrainDiffusion, NonFiniteLossIsDivergence) {
    TrainConfig cfg;
    cfg.iterations = 5;
    cfg.batch_size = 4;
    cfg.adam.lr = 1e300;
    EXPECT_THROW(train_diffusion(benchmark_mixture(), MlpDenoiser::architecture_for(2, false, 0, 8, 2, 4, 8), make_linear_schedule(100), cfg),
                 DivergenceError);
}

TEST(TrainDiffusion, ArchitectureMismatch) {
    TrainConfig cfg;
    cfg.iterations = 1;
    EXPECT_THROW(train_diffusion(benchmark_mixture(), MlpDenoiser::architecture_for(1, false), make_linear_schedule(100), cfg),
                 std::invalid_argument);
    EXPECT_THROW(train_diffusion(benchmark_mixture(), MlpDenoiser::architecture_for(2, false, 3), make_linear_schedule(100), cfg),
                 std::invalid_argument);
}

TEST(TrainClassifier, AgreesWithBayesClassifier) {
    const auto mix = two_class_1d_mixture();
    const auto sched = make_linear_schedule(100);
    TrainConfig cfg;
    cfg.iterations = 400;
    cfg.batch_size = 128;
    cfg.adam.lr = 3e-3;
    cfg.ema_rate = 0.9;
    cfg.seed = 6;
    const auto r = train_classifier(mix, MlpClassifier::architecture_for(1, 2, 32, 2, 8, 16), sched, cfg);
    const AnalyticClassifier bayes(mix);
    std::mt19937_64 rng(8);
    const auto data = sample_mixture(mix, 2000, rng);
    const auto draw = draw_noise(rng, 2000, 1, 50);
    const Batch xt = noised_batch(data.points, draw, sched);
    int agree = 0;
    for (Eigen::Index i = 0; i < xt.rows(); ++i) {
        const StepTime st = sched.step_time(draw.timesteps[static_cast<std::size_t>(i)]);
        const Batch xi = xt.row(i);
        const auto lp = r.model.log_probs(xi, st);
        const auto lb = bayes.evaluate(xi, st, {}).log_probs;
        agree += (lp(0, 1) > lp(0, 0)) == (lb(0, 1) > lb(0, 0));
    }
    EXPECT_GT(agree, 1900);
}

TEST(TrainClassifier, MatchesAnalyticPosteriorAcrossNoiseLevels) {
    const auto mix = two_class_1d_mixture();
    const auto sched = make_linear_schedule(100);
    TrainConfig cfg;
    cfg.iterations = 600;
    cfg.batch_size = 128;
    cfg.adam.lr = 3e-3;
    cfg.ema_rate = 0.9;
    cfg.seed = 12;
    const auto r = train_classifier(mix, MlpClassifier::architecture_for(1, 2, 32, 2, 8, 16), sched, cfg);
    const AnalyticClassifier bayes(mix);
    double total = 0.0;
    int count = 0;
    for (int t : {1, 25, 50, 75, 100}) {
        const StepTime st = sched.step_time(t);
        for (int i = 0; i <= 40; ++i) {
            const Batch x = Batch::Constant(1, 1, -4.0 + 0.2 * i);
            total += std::abs(std::exp(r.model.log_probs(x, st)(0, 1)) - std::exp(bayes.evaluate(x, st, {}).log_probs(0, 1)));
            ++count;
        }
    }
    EXPECT_LT(total / count, 0.05);
    const StepTime last = sched.step_time(100);
    double prior_gap = 0.0;
    for (int i = 0; i <= 20; ++i) {
        const Batch x = Batch::Constant(1, 1, -1.0 + 0.1 * i);
        prior_gap = std::max(prior_gap, std::abs(std::exp(r.model.log_probs(x, last)(0, 1)) - mix.weights()[1]));
    }
    EXPECT_LT(prior_gap, 0.05);
}

TEST(TrainClassifier, HeadMustMatchClasses) {
    TrainConfig cfg;
    cfg.iterations = 1;
    EXPECT_THROW(train_classifier(two_class_1d_mixture(), MlpClassifier::architecture_for(1, 3), make_linear_schedule(100), cfg),
                 std::invalid_argument);
}
