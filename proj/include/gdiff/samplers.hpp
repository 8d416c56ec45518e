#pragma once

// Reverse-process samplers: ancestral and DDIM (eta = 0), each with optional
// classifier guidance, plus temperature variants, DDIM latent encoding and
// spherical-style latent interpolation.
//
// Every chain owns a random stream derived from (seed, chain index), so the
// output is a pure function of (model, classifier, config, labels) and does
// not depend on how chains are blocked.

#include "gdiff/classifiers.hpp"
#include "gdiff/core.hpp"
#include "gdiff/models.hpp"
#include "gdiff/process.hpp"
#include "gdiff/schedules.hpp"

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace gdiff {

enum class SamplerKind { ancestral, ddim };
enum class VarianceMode { learned, fixed_beta, fixed_beta_tilde };
enum class TemperatureMode { none, noise_scale, eps_scale };

struct Temperature {
    TemperatureMode mode = TemperatureMode::none;
    double tau = 1.0;
};

inline TemperatureMode parse_temperature_mode(const std::string& s) {
    if (s == "none") return TemperatureMode::none;
    if (s == "noise-scale") return TemperatureMode::noise_scale;
    if (s == "eps-scale") return TemperatureMode::eps_scale;
    if (s.find("noise") != std::string::npos && s.find("eps") != std::string::npos)
        throw std::invalid_argument("temperature: only one of noise-scale and eps-scale may be set");
    throw std::invalid_argument("unknown temperature mode '" + s + "' (expected none, noise-scale or eps-scale)");
}

inline std::string to_string(TemperatureMode m) {
    switch (m) {
    case TemperatureMode::noise_scale: return "noise-scale";
    case TemperatureMode::eps_scale: return "eps-scale";
    case TemperatureMode::none: break;
    }
    return "none";
}

inline VarianceMode parse_variance_mode(const std::string& s) {
    if (s == "learned-v" || s == "learned") return VarianceMode::learned;
    if (s == "fixed-beta") return VarianceMode::fixed_beta;
    if (s == "fixed-beta-tilde") return VarianceMode::fixed_beta_tilde;
    throw std::invalid_argument("unknown variance mode '" + s + "'");
}

inline std::string to_string(VarianceMode m) {
    switch (m) {
    case VarianceMode::learned: return "learned-v";
    case VarianceMode::fixed_beta: return "fixed-beta";
    case VarianceMode::fixed_beta_tilde: break;
    }
    return "fixed-beta-tilde";
}

struct SamplerConfig {
    SamplerKind kind = SamplerKind::ancestral;
    double guidance_scale = 0.0;
    Temperature temperature{};
    RespacingSpec respacing{};
    std::uint64_t seed = 0;
    VarianceMode variance_mode = VarianceMode::fixed_beta_tilde;
    bool allow_experimental = false;

    void validate() const {
        require(guidance_scale >= 0.0, "guidance scale must be non-negative");
        // noise-scale admits tau = 0 (mean-following); eps-scale divides by tau.
        if (temperature.mode == TemperatureMode::eps_scale)
            require(temperature.tau > 0.0, "eps-scale temperature needs tau > 0");
        else
            require(temperature.tau >= 0.0, "temperature tau must be non-negative");
        if (guidance_scale > 0.0 && temperature.mode != TemperatureMode::none)
            require(allow_experimental, "guidance combined with temperature requires allow_experimental");
    }

    bool guided() const { return guidance_scale > 0.0; }
};

/// eps / tau in eps-scale mode, unchanged otherwise.
inline Batch apply_temperature_eps(Batch eps, const Temperature& temp) {
    if (temp.mode == TemperatureMode::eps_scale) eps /= temp.tau;
    return eps;
}

/// tau * noise in noise-scale mode, unchanged otherwise.
inline Batch apply_temperature_noise(Batch noise, const Temperature& temp) {
    if (temp.mode == TemperatureMode::noise_scale) noise *= temp.tau;
    return noise;
}

/// Per-element reverse variance for step t.
inline Batch reverse_variance(const DenoiserOutput& out, int t, const NoiseSchedule& sched, VarianceMode mode) {
    const Eigen::Index n = out.eps.rows(), d = out.eps.cols();
    switch (mode) {
    case VarianceMode::learned:
        require(out.v.has_value(), "learned variance requires a model with a variance head");
        return sigma_from_v(*out.v, t, sched);
    case VarianceMode::fixed_beta: return Batch::Constant(n, d, sched.beta(t));
    case VarianceMode::fixed_beta_tilde: break;
    }
    return Batch::Constant(n, d, sched.beta_tilde(t));
}

/// Classifier-free placeholder for unguided sampling.
struct NoClassifier {
    ClassifierOutput evaluate(const Batch&, StepTime, std::span<const int>) const {
        throw std::logic_error("NoClassifier::evaluate called");
    }
    int num_classes() const { return 0; }
};

namespace detail {

template <Denoiser M, NoisyClassifier C>
Batch ancestral_impl(const M& model, const C* classifier, std::span<const int> targets, const Batch& xt, int t,
                     const NoiseSchedule& sched, std::span<ChainStream> rngs, const SamplerConfig& cfg,
                     std::span<const int> model_labels) {
    require(t >= 1, "ancestral step needs t >= 1");
    require(static_cast<Eigen::Index>(rngs.size()) == xt.rows(), "one random stream per chain required");
    const StepTime st = sched.step_time(t);
    const DenoiserOutput out = model.predict(xt, std::span<const StepTime>(&st, 1), model_labels);
    const Batch eps = apply_temperature_eps(out.eps, cfg.temperature);
    Batch mean = mu_from_eps(xt, t, eps, sched);
    const Batch var = reverse_variance(out, t, sched, cfg.variance_mode);
    if (classifier != nullptr && cfg.guidance_scale != 0.0) {
        const ClassifierOutput co = classifier->evaluate(xt, st, targets);
        mean.array() += cfg.guidance_scale * var.array() * co.grad_selected.array();
    }
    if (t == 1) return mean;
    const Batch z = apply_temperature_noise(standard_normal(rngs, xt.cols()), cfg.temperature);
    return (mean.array() + var.array().sqrt() * z.array()).matrix();
}

inline Batch ddim_update(const Batch& xt, const Batch& eps_hat, double ab, double ab_prev) {
    const Batch x0 = (xt - std::sqrt(1.0 - ab) * eps_hat) / std::sqrt(ab);
    return std::sqrt(ab_prev) * x0 + std::sqrt(1.0 - ab_prev) * eps_hat;
}

template <Denoiser M, NoisyClassifier C>
Batch ddim_impl(const M& model, const C* classifier, std::span<const int> targets, const Batch& xt, int t, int t_prev,
                const NoiseSchedule& sched, const SamplerConfig& cfg, std::span<const int> model_labels) {
    require(t_prev >= 0 && t_prev < t, "ddim step needs 0 <= t_prev < t");
    const StepTime st = sched.step_time(t);
    const DenoiserOutput out = model.predict(xt, std::span<const StepTime>(&st, 1), model_labels);
    Batch eps = apply_temperature_eps(out.eps, cfg.temperature);
    if (classifier != nullptr && cfg.guidance_scale != 0.0) {
        const ClassifierOutput co = classifier->evaluate(xt, st, targets);
        eps -= std::sqrt(1.0 - st.alpha_bar) * cfg.guidance_scale * co.grad_selected;
    }
    return ddim_update(xt, eps, st.alpha_bar, sched.alpha_bar(t_prev));
}

}  // namespace detail

/// One ancestral step x_t -> x_{t-1}: mean from the eps prediction, variance
/// per `cfg.variance_mode`. Step t = 1 returns the mean without noise.
template <Denoiser M>
Batch ancestral_step(const M& model, const Batch& xt, int t, const NoiseSchedule& sched, std::span<ChainStream> rngs,
                     const SamplerConfig& cfg, std::span<const int> model_labels = {}) {
    return detail::ancestral_impl<M, NoClassifier>(model, nullptr, {}, xt, t, sched, rngs, cfg, model_labels);
}

/// Ancestral step with the mean shifted by s * Sigma * grad log p(y | x_t).
template <Denoiser M, NoisyClassifier C>
Batch guided_ancestral_step(const M& model, const C& classifier, std::span<const int> targets, const Batch& xt, int t,
                            const NoiseSchedule& sched, std::span<ChainStream> rngs, const SamplerConfig& cfg,
                            std::span<const int> model_labels = {}) {
    require(cfg.guidance_scale >= 0.0, "guidance scale must be non-negative");
    require(static_cast<Eigen::Index>(targets.size()) == xt.rows(), "guided sampling needs one target class per chain");
    return detail::ancestral_impl(model, &classifier, targets, xt, t, sched, rngs, cfg, model_labels);
}

/// Deterministic DDIM update from step t to t_prev of the same chain.
template <Denoiser M>
Batch ddim_step(const M& model, const Batch& xt, int t, int t_prev, const NoiseSchedule& sched,
                const SamplerConfig& cfg, std::span<const int> model_labels = {}) {
    return detail::ddim_impl<M, NoClassifier>(model, nullptr, {}, xt, t, t_prev, sched, cfg, model_labels);
}

/// eps - sqrt(1 - abar) * s * grad
template <class E, class G>
Plain<E> guided_eps(const Eigen::MatrixBase<E>& eps, const Eigen::MatrixBase<G>& grad, double scale, double alpha_bar) {
    require(scale >= 0.0, "guidance scale must be non-negative");
    return eps - std::sqrt(1.0 - alpha_bar) * scale * grad;
}

template <Denoiser M, NoisyClassifier C>
Batch guided_ddim_step(const M& model, const C& classifier, std::span<const int> targets, const Batch& xt, int t,
                       int t_prev, const NoiseSchedule& sched, const SamplerConfig& cfg,
                       std::span<const int> model_labels = {}) {
    require(cfg.guidance_scale >= 0.0, "guidance scale must be non-negative");
    require(static_cast<Eigen::Index>(targets.size()) == xt.rows(), "guided sampling needs one target class per chain");
    return detail::ddim_impl(model, &classifier, targets, xt, t, t_prev, sched, cfg, model_labels);
}

struct Trajectory {
    std::vector<Batch> states;  // x at steps T', T'-1, ..., 0
    Batch final;
};

struct SampleResult {
    Batch samples;
    std::vector<int> labels;
    std::optional<Trajectory> trajectory;
    std::size_t model_calls_per_chain = 0;
};

struct SampleOptions {
    std::span<const int> labels{};  // guidance targets and/or conditioning classes
    bool record_trajectory = false;
    Eigen::Index block_size = 2048;
};

namespace detail {

/// Runs steps start..1 of `sched` on every row of `x`; `streams` are the
/// chains' random streams (consumed by ancestral sampling only).
template <Denoiser M, NoisyClassifier C>
Batch run_reverse(const M& model, const C* classifier, Batch x, int start, const NoiseSchedule& sched,
                  const SamplerConfig& cfg, std::span<ChainStream> streams, std::span<const int> labels,
                  std::vector<Batch>* states, std::size_t& calls) {
    const std::span<const int> model_labels = model.is_conditional() ? labels : std::span<const int>{};
    const C* guide = cfg.guided() ? classifier : nullptr;
    if (states) states->push_back(x);
    for (int t = start; t >= 1; --t) {
        if (cfg.kind == SamplerKind::ddim)
            x = ddim_impl(model, guide, labels, x, t, t - 1, sched, cfg, model_labels);
        else
            x = ancestral_impl(model, guide, labels, x, t, sched, streams, cfg, model_labels);
        ++calls;
        if (states) states->push_back(x);
    }
    return x;
}

}  // namespace detail

/// Draw n samples: x_T ~ N(0, I) per chain, then walk the respaced chain down
/// to step 0. Guidance is active iff cfg.guidance_scale > 0.
template <Denoiser M, NoisyClassifier C = NoClassifier>
SampleResult sample(const M& model, const NoiseSchedule& base, const SamplerConfig& cfg, Eigen::Index n,
                    const C* classifier = nullptr, const SampleOptions& opts = {}) {
    cfg.validate();
    require(n >= 0, "sample count must be non-negative");
    if (cfg.guided()) {
        require(classifier != nullptr, "guided sampling needs a classifier");
        require(static_cast<Eigen::Index>(opts.labels.size()) == n, "guided sampling needs one target class per chain");
    }
    if (model.is_conditional())
        require(static_cast<Eigen::Index>(opts.labels.size()) == n, "conditional model needs one class per chain");
    if (cfg.variance_mode == VarianceMode::learned && cfg.kind == SamplerKind::ancestral)
        require(model.has_variance_head(), "learned variance requires a model with a variance head");

    const NoiseSchedule sched = apply_respacing(base, cfg.respacing);
    const int steps = sched.num_steps();
    const Eigen::Index dim = model.data_dim();
    SampleResult result;
    result.labels.assign(opts.labels.begin(), opts.labels.end());
    if (opts.record_trajectory) result.trajectory.emplace();
    std::vector<std::vector<Batch>> block_states;
    Batch out;
    std::size_t total_calls = 0;

    for (Eigen::Index first = 0; first < n; first += opts.block_size) {
        const Eigen::Index count = std::min(opts.block_size, n - first);
        auto streams = make_streams(cfg.seed, static_cast<std::size_t>(first), static_cast<std::size_t>(count));
        Batch x = standard_normal(streams, dim);
        const auto lab = opts.labels.empty() ? std::span<const int>{}
                                             : opts.labels.subspan(static_cast<std::size_t>(first),
                                                                   static_cast<std::size_t>(count));
        std::vector<Batch> states;
        std::size_t calls = 0;
        x = detail::run_reverse(model, classifier, std::move(x), steps, sched, cfg, streams, lab,
                                opts.record_trajectory ? &states : nullptr, calls);
        total_calls = calls;
        if (out.size() == 0) out.resize(n, x.cols());
        out.middleRows(first, count) = x;
        if (opts.record_trajectory) block_states.push_back(std::move(states));
    }
    result.samples = n > 0 ? std::move(out) : Batch(0, dim);
    result.model_calls_per_chain = total_calls;
    if (opts.record_trajectory && n > 0) {
        auto& traj = *result.trajectory;
        for (int k = 0; k <= steps; ++k) {
            Batch s(n, result.samples.cols());
            Eigen::Index row = 0;
            for (auto& bs : block_states) {
                s.middleRows(row, bs[static_cast<std::size_t>(k)].rows()) = bs[static_cast<std::size_t>(k)];
                row += bs[static_cast<std::size_t>(k)].rows();
            }
            traj.states.push_back(std::move(s));
        }
        traj.final = result.samples;
    }
    return result;
}

/// Integrate the DDIM ODE forward from data to the latent at step T'-1 of the
/// respaced chain (reversing T'-1 steps). The transition out of step 0 uses
/// the model at step 1.
template <Denoiser M>
Batch ddim_encode(const M& model, const Batch& x0, const NoiseSchedule& base, int num_steps,
                  std::span<const int> labels = {}) {
    require(x0.allFinite(), "ddim_encode: input must be finite");
    require(num_steps >= 1 && num_steps <= base.num_steps(), "ddim_encode: steps must lie in 1..T");
    const NoiseSchedule sched = respace(base, uniform_timesteps(base.num_steps(), num_steps));
    const std::span<const int> model_labels = model.is_conditional() ? labels : std::span<const int>{};
    Batch x = x0;
    for (int t = 0; t + 1 <= sched.num_steps() - 1; ++t) {
        const StepTime st = sched.step_time(std::max(t, 1));
        const Batch eps = model.predict(x, std::span<const StepTime>(&st, 1), model_labels).eps;
        const double ab = sched.alpha_bar(t);
        const double ab_next = sched.alpha_bar(t + 1);
        const double cx = std::sqrt(1.0 / ab) - std::sqrt(1.0 / ab_next);
        const double ce = std::sqrt(1.0 / ab_next - 1.0) - std::sqrt(1.0 / ab - 1.0);
        x = x + std::sqrt(ab_next) * (cx * x + ce * eps);
    }
    return x;
}

/// DDIM decode from latents produced by ddim_encode with the same step count.
template <Denoiser M, NoisyClassifier C = NoClassifier>
Batch ddim_decode(const M& model, const Batch& latents, const NoiseSchedule& base, int num_steps,
                  const SamplerConfig& cfg = {}, const C* classifier = nullptr, std::span<const int> labels = {}) {
    require(num_steps >= 1 && num_steps <= base.num_steps(), "ddim_decode: steps must lie in 1..T");
    SamplerConfig c = cfg;
    c.kind = SamplerKind::ddim;
    c.validate();
    if (c.guided()) require(classifier != nullptr, "guided decoding needs a classifier");
    const NoiseSchedule sched = respace(base, uniform_timesteps(base.num_steps(), num_steps));
    std::size_t calls = 0;
    return detail::run_reverse(model, classifier, latents, sched.num_steps() - 1, sched, c, {}, labels, nullptr, calls);
}

/// cos(theta) z0 + sin(theta) z1
template <class A, class B>
Plain<A> latent_interpolate(const Eigen::MatrixBase<A>& z0, const Eigen::MatrixBase<B>& z1, double theta) {
    require(z0.rows() == z1.rows() && z0.cols() == z1.cols(), "latent_interpolate: dimension mismatch");
    return std::cos(theta) * z0 + std::sin(theta) * z1;
}

}  // namespace gdiff
