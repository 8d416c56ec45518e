#pragma once

// Objectives and optimization: the noise-prediction MSE, the hybrid objective
// that also trains the variance interpolant through the variational bound,
// Adam with optional decoupled weight decay, EMA, and the training loops.

#include "gdiff/classifiers.hpp"
#include "gdiff/core.hpp"
#include "gdiff/mixture.hpp"
#include "gdiff/models.hpp"
#include "gdiff/process.hpp"
#include "gdiff/schedules.hpp"

#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace gdiff {

/// Per-sample timestep and noise for one loss evaluation.
struct NoiseDraw {
    std::vector<int> timesteps;  // 1..T
    Batch eps;
};

/// Draw order: all timesteps first, then the noise row by row.
inline NoiseDraw draw_noise(std::mt19937_64& rng, Eigen::Index n, Eigen::Index dim, int max_timestep) {
    require(max_timestep >= 1, "max timestep must be positive");
    NoiseDraw d{std::vector<int>(static_cast<std::size_t>(n)), Batch(n, dim)};
    std::uniform_int_distribution<int> pick(1, max_timestep);
    for (auto& t : d.timesteps) t = pick(rng);
    std::normal_distribution<double> normal;
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < dim; ++j) d.eps(i, j) = normal(rng);
    return d;
}

/// x_t for every row at its own timestep.
inline Batch noised_batch(const Batch& x0, const NoiseDraw& draw, const NoiseSchedule& sched) {
    require(draw.eps.rows() == x0.rows() && draw.eps.cols() == x0.cols(), "noise draw does not match batch");
    Batch xt(x0.rows(), x0.cols());
    for (Eigen::Index i = 0; i < x0.rows(); ++i)
        xt.row(i) = q_sample(x0.row(i), draw.timesteps[static_cast<std::size_t>(i)], draw.eps.row(i), sched);
    return xt;
}

inline std::vector<StepTime> step_times(const NoiseDraw& draw, const NoiseSchedule& sched) {
    std::vector<StepTime> out;
    out.reserve(draw.timesteps.size());
    for (int t : draw.timesteps) out.push_back(sched.step_time(t));
    return out;
}

struct LossResult {
    double total = 0.0;
    double simple = 0.0;
    double vlb = 0.0;           // mean per-dimension bound term at the sampled steps, nats
    std::vector<double> grad;  // d total / d params
};

/// mean over rows and dimensions of (eps - eps_theta(x_t))^2, for any denoiser.
template <Denoiser M>
double simple_loss_value(const M& model, const Batch& x0, const NoiseDraw& draw, const NoiseSchedule& sched,
                         std::span<const int> labels = {}) {
    require(x0.rows() > 0, "loss needs a non-empty batch");
    const Batch xt = noised_batch(x0, draw, sched);
    const auto times = step_times(draw, sched);
    const Batch pred = model.predict(xt, times, model.is_conditional() ? labels : std::span<const int>{}).eps;
    return (draw.eps - pred).squaredNorm() / static_cast<double>(x0.size());
}

namespace detail {

inline LossResult denoiser_loss(const MlpDenoiser& model, const Batch& x0, const NoiseDraw& draw,
                                const NoiseSchedule& sched, double lambda, bool with_vlb, std::span<const int> labels) {
    require(x0.rows() > 0, "loss needs a non-empty batch");
    require(lambda >= 0.0, "lambda must be non-negative");
    const auto& net = model.network();
    const Eigen::Index n = x0.rows(), d = x0.cols();
    const Batch xt = noised_batch(x0, draw, sched);
    std::vector<int> ts(draw.timesteps.size());
    for (std::size_t i = 0; i < ts.size(); ++i) ts[i] = sched.model_timestep(draw.timesteps[i]);
    MlpCache cache;
    const RowMatrix out = net.forward(xt, ts, model.is_conditional() ? labels : std::span<const int>{}, &cache);
    const DenoiserOutput split = model.split(out);
    const double inv = 1.0 / static_cast<double>(n * d);

    LossResult r;
    const Batch diff = split.eps - draw.eps;
    r.simple = diff.squaredNorm() * inv;
    RowMatrix upstream = RowMatrix::Zero(n, out.cols());
    upstream.leftCols(d) = 2.0 * inv * diff;

    if (with_vlb) {
        require(split.v.has_value(), "hybrid loss requires a variance head");
        const double weight = lambda * sched.num_steps();
        double vlb_sum = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const int t = draw.timesteps[static_cast<std::size_t>(i)];
            const Point x0i = x0.row(i).transpose();
            const Point xti = xt.row(i).transpose();
            // Stop-gradient: the mean is treated as a constant here.
            const Point mean = mu_from_eps(xti, t, Point(split.eps.row(i).transpose()), sched);
            const Point vi = split.v->row(i).transpose();
            const Point var = sigma_from_v(vi, t, sched);
            const Point dvar_dv = sigma_from_v_derivative(vi, t, sched);
            vlb_sum += vlb_term(t - 1, x0i, xti, mean, var, sched);
            // d term / d var2 = 0.5 (1/var2 - (var1 + delta^2) / var2^2); var1 = 0 for the decoder term.
            Point target_mean, target_var;
            if (t == 1) {
                target_mean = x0i;
                target_var = Point::Zero(d);
            } else {
                const ReverseGaussian q = q_posterior(x0i, xti, t, sched);
                target_mean = q.mean;
                target_var = q.variance;
            }
            const auto delta2 = (target_mean - mean).array().square();
            const auto dterm =
                0.5 * (1.0 / var.array() - (target_var.array() + delta2) / var.array().square());
            upstream.row(i).rightCols(d) = (weight * inv * dterm * dvar_dv.array()).matrix().transpose();
        }
        r.vlb = vlb_sum * inv;
        r.total = r.simple + weight * r.vlb;
    } else {
        r.total = r.simple;
    }
    r.grad = net.backward(cache, upstream).params;
    return r;
}

}  // namespace detail

/// Noise-prediction MSE and its parameter gradient.
inline LossResult simple_loss(const MlpDenoiser& model, const Batch& x0, const NoiseDraw& draw,
                              const NoiseSchedule& sched, std::span<const int> labels = {}) {
    return detail::denoiser_loss(model, x0, draw, sched, 0.0, false, labels);
}

/// L_simple + lambda * L_vlb, with L_vlb estimated as T times the bound term at
/// each row's sampled step (per dimension) and the mean held fixed inside it,
/// so only the variance output receives gradient from the bound.
inline LossResult hybrid_loss(const MlpDenoiser& model, const Batch& x0, const NoiseDraw& draw,
                              const NoiseSchedule& sched, double lambda, std::span<const int> labels = {}) {
    require(model.has_variance_head(), "hybrid loss requires a variance head");
    return detail::denoiser_loss(model, x0, draw, sched, lambda, true, labels);
}

/// Mean cross-entropy of the classifier at noised inputs.
inline LossResult classifier_loss(const MlpClassifier& clf, const Batch& x0, std::span<const int> labels,
                                  const NoiseDraw& draw, const NoiseSchedule& sched) {
    require(x0.rows() > 0, "loss needs a non-empty batch");
    require(static_cast<Eigen::Index>(labels.size()) == x0.rows(), "classifier loss needs one label per row");
    const Batch xt = noised_batch(x0, draw, sched);
    std::vector<int> ts(draw.timesteps.size());
    for (std::size_t i = 0; i < ts.size(); ++i) ts[i] = sched.model_timestep(draw.timesteps[i]);
    MlpCache cache;
    const RowMatrix logits = clf.network().forward(xt, ts, {}, &cache);
    const Batch lp = log_softmax(logits);
    LossResult r;
    double nll = 0.0;
    for (Eigen::Index i = 0; i < xt.rows(); ++i) nll -= lp(i, labels[static_cast<std::size_t>(i)]);
    r.simple = r.total = nll / static_cast<double>(xt.rows());
    const RowMatrix up = -MlpClassifier::selected_upstream(lp, labels) / static_cast<double>(xt.rows());
    r.grad = clf.network().backward(cache, up).params;
    return r;
}

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;  // decoupled; 0 disables
};

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    long long step = 0;

    explicit AdamState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

/// Bias-corrected Adam; decoupled weight decay theta -= lr * wd * theta when enabled.
inline void adam_step(std::vector<double>& params, const std::vector<double>& grads, AdamState& state,
                      const AdamConfig& cfg) {
    require(params.size() == grads.size(), "adam: gradient size mismatch");
    if (state.m.empty()) state = AdamState(params.size());
    require(state.m.size() == params.size(), "adam: state size mismatch");
    ++state.step;
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        const double mhat = state.m[i] / c1;
        const double vhat = state.v[i] / c2;
        double update = mhat / (std::sqrt(vhat) + cfg.eps);
        if (cfg.weight_decay != 0.0) update += cfg.weight_decay * params[i];
        params[i] -= cfg.lr * update;
    }
}

/// ema <- rate * ema + (1 - rate) * params
inline void ema_update(std::vector<double>& ema, const std::vector<double>& params, double rate) {
    require(rate >= 0.0 && rate < 1.0, "ema rate must lie in [0, 1)");
    require(ema.size() == params.size(), "ema: size mismatch");
    for (std::size_t i = 0; i < ema.size(); ++i) ema[i] = rate * ema[i] + (1.0 - rate) * params[i];
}

struct TrainConfig {
    int batch_size = 256;
    int iterations = 20000;
    AdamConfig adam{};
    double ema_rate = 0.999;
    double lambda_vlb = 0.001;
    bool hybrid = true;       // only used when the model has a variance head
    int max_timestep = 0;     // 0 = T; restricts sampled t to 1..max_timestep
    std::uint64_t seed = 0;

    void validate() const {
        require(batch_size >= 1, "batch_size must be positive");
        require(iterations >= 0, "iterations must be non-negative");
        require(adam.lr > 0.0, "learning rate must be positive");
        require(ema_rate >= 0.0 && ema_rate < 1.0, "ema rate must lie in [0, 1)");
        require(lambda_vlb >= 0.0, "lambda_vlb must be non-negative");
        require(adam.weight_decay >= 0.0, "weight decay must be non-negative");
        require(max_timestep >= 0, "max_timestep must be non-negative");
    }
};

struct LossLogRow {
    int iteration = 0;
    double simple = 0.0;
    double vlb = 0.0;
    double total = 0.0;
};

template <class Model>
struct TrainResult {
    Model model;  // EMA weights
    std::vector<LossLogRow> log;
    int steps = 0;
};

using ProgressFn = std::function<void(const LossLogRow&)>;

/// Train a denoiser on a seeded mixture stream. Per iteration the training
/// stream yields, in order: the data batch (labels then coordinates, row by
/// row), the timesteps, then the noise.
inline TrainResult<MlpDenoiser> train_diffusion(const GaussianMixture& mix, const MlpArchitecture& arch,
                                                const NoiseSchedule& sched, const TrainConfig& cfg,
                                                const ProgressFn& progress = {}, int log_every = 1) {
    cfg.validate();
    require(arch.input_dim == mix.dim(), "model input dimension must match the mixture");
    if (arch.conditional()) require(arch.num_classes == mix.num_classes(), "class count must match the mixture");
    MlpNetwork net(arch);
    net.initialize(derive_seed(cfg.seed, 0));
    MlpDenoiser model(std::move(net));
    std::vector<double> ema = model.network().params();
    AdamState adam(ema.size());
    std::mt19937_64 rng(derive_seed(cfg.seed, 1));
    const int tmax = cfg.max_timestep > 0 ? std::min(cfg.max_timestep, sched.num_steps()) : sched.num_steps();
    const bool hybrid = cfg.hybrid && model.has_variance_head();

    TrainResult<MlpDenoiser> result{model, {}, 0};
    for (int it = 1; it <= cfg.iterations; ++it) {
        const LabeledSamples data = sample_mixture(mix, cfg.batch_size, rng);
        const NoiseDraw draw = draw_noise(rng, cfg.batch_size, mix.dim(), tmax);
        const LossResult loss = hybrid ? hybrid_loss(model, data.points, draw, sched, cfg.lambda_vlb, data.labels)
                                       : simple_loss(model, data.points, draw, sched, data.labels);
        if (!std::isfinite(loss.total))
            throw DivergenceError("training diverged: non-finite loss at iteration " + std::to_string(it));
        adam_step(model.network().params(), loss.grad, adam, cfg.adam);
        ema_update(ema, model.network().params(), cfg.ema_rate);
        const LossLogRow row{it, loss.simple, loss.vlb, loss.total};
        if (it % log_every == 0 || it == cfg.iterations) {
            result.log.push_back(row);
            if (progress) progress(row);
        }
    }
    result.model = std::move(model);
    result.model.network().params() = std::move(ema);
    result.steps = cfg.iterations;
    return result;
}

/// Train a noisy classifier with cross-entropy at t ~ Uniform{1..max_timestep}.
inline TrainResult<MlpClassifier> train_classifier(const GaussianMixture& mix, const MlpArchitecture& arch,
                                                   const NoiseSchedule& sched, const TrainConfig& cfg,
                                                   const ProgressFn& progress = {}, int log_every = 1) {
    cfg.validate();
    require(arch.input_dim == mix.dim(), "classifier input dimension must match the mixture");
    require(arch.output_dim == mix.num_classes(), "classifier head must have one output per class");
    MlpNetwork net(arch);
    net.initialize(derive_seed(cfg.seed, 0), true);
    MlpClassifier clf(std::move(net));
    std::vector<double> ema = clf.network().params();
    AdamState adam(ema.size());
    std::mt19937_64 rng(derive_seed(cfg.seed, 1));
    const int tmax = cfg.max_timestep > 0 ? std::min(cfg.max_timestep, sched.num_steps()) : sched.num_steps();

    TrainResult<MlpClassifier> result{clf, {}, 0};
    for (int it = 1; it <= cfg.iterations; ++it) {
        const LabeledSamples data = sample_mixture(mix, cfg.batch_size, rng);
        const NoiseDraw draw = draw_noise(rng, cfg.batch_size, mix.dim(), tmax);
        const LossResult loss = classifier_loss(clf, data.points, data.labels, draw, sched);
        if (!std::isfinite(loss.total))
            throw DivergenceError("classifier training diverged: non-finite loss at iteration " + std::to_string(it));
        adam_step(clf.network().params(), loss.grad, adam, cfg.adam);
        ema_update(ema, clf.network().params(), cfg.ema_rate);
        const LossLogRow row{it, loss.simple, 0.0, loss.total};
        if (it % log_every == 0 || it == cfg.iterations) {
            result.log.push_back(row);
            if (progress) progress(row);
        }
    }
    result.model = std::move(clf);
    result.model.network().params() = std::move(ema);
    result.steps = cfg.iterations;
    return result;
}

}  // namespace gdiff
