#pragma once

// Noise schedules: construction (linear, cosine), respacing onto a subset of
// timesteps, and the five-segment step allocations used to pick that subset.
//
// Math is 1-based (t = 1..T); arrays are stored 0-based. alpha_bar(0) == 1.

#include "gdiff/core.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

namespace gdiff {

enum class ScheduleFamily { linear, cosine };

struct ScheduleSpec {
    ScheduleFamily family = ScheduleFamily::linear;
    int steps = 1000;
};

inline std::string to_string(ScheduleFamily f) { return f == ScheduleFamily::linear ? "linear" : "cosine"; }

inline ScheduleFamily parse_schedule_family(const std::string& s) {
    if (s == "linear") return ScheduleFamily::linear;
    if (s == "cosine") return ScheduleFamily::cosine;
    throw std::invalid_argument("unknown schedule family '" + s + "' (expected linear or cosine)");
}

class NoiseSchedule {
public:
    /// Build from per-step betas; alpha_bar is the running product of (1 - beta).
    static NoiseSchedule from_betas(std::vector<double> betas, std::optional<std::vector<int>> source = std::nullopt) {
        require(!betas.empty(), "noise schedule needs at least one step");
        std::vector<double> abar(betas.size());
        double acc = 1.0;
        for (std::size_t i = 0; i < betas.size(); ++i) {
            require(betas[i] > 0.0 && betas[i] < 1.0, "beta must lie in (0, 1)");
            acc *= 1.0 - betas[i];
            abar[i] = acc;
        }
        return NoiseSchedule(std::move(betas), std::move(abar), std::move(source));
    }

    /// Build from alpha_bar directly, so the stored values are bit-identical
    /// to the given ones; betas are reconstructed from successive ratios.
    static NoiseSchedule from_alpha_bars(std::vector<double> abar, std::optional<std::vector<int>> source = std::nullopt) {
        require(!abar.empty(), "noise schedule needs at least one step");
        std::vector<double> betas(abar.size());
        double prev = 1.0;
        for (std::size_t i = 0; i < abar.size(); ++i) {
            betas[i] = 1.0 - abar[i] / prev;
            require(betas[i] > 0.0 && betas[i] < 1.0, "alpha_bar must be strictly decreasing in (0, 1)");
            prev = abar[i];
        }
        return NoiseSchedule(std::move(betas), std::move(abar), std::move(source));
    }

    int num_steps() const { return static_cast<int>(betas_.size()); }

    /// Throws std::out_of_range unless 1 <= t <= T.
    void check_step(int t) const { index(t); }

    double beta(int t) const { return betas_[index(t)]; }
    double alpha(int t) const { return alphas_[index(t)]; }
    double alpha_bar(int t) const {
        if (t == 0) return 1.0;
        return alpha_bars_[index(t)];
    }
    double alpha_bar_prev(int t) const { return alpha_bar_prev_[index(t)]; }
    double beta_tilde(int t) const { return beta_tildes_[index(t)]; }

    /// log(beta_tilde_t) with beta_tilde_1 replaced by beta_tilde_2 (or beta_1
    /// when T == 1) since beta_tilde_1 is zero.
    double log_beta_tilde_clipped(int t) const {
        index(t);
        if (t == 1) return num_steps() > 1 ? std::log(beta_tildes_[1]) : std::log(betas_[0]);
        return std::log(beta_tildes_[index(t)]);
    }

    const std::vector<double>& betas() const { return betas_; }
    const std::vector<double>& alphas() const { return alphas_; }
    const std::vector<double>& alpha_bars() const { return alpha_bars_; }
    const std::vector<double>& alpha_bar_prevs() const { return alpha_bar_prev_; }
    const std::vector<double>& beta_tildes() const { return beta_tildes_; }

    /// 0-based indices into the original chain; present iff respaced.
    const std::optional<std::vector<int>>& source_timesteps() const { return source_; }

    /// 1-based timestep in the original chain for step t of this chain.
    int model_timestep(int t) const {
        index(t);
        return source_ ? (*source_)[static_cast<std::size_t>(t - 1)] + 1 : t;
    }

    StepTime step_time(int t) const { return {model_timestep(t), alpha_bar(t)}; }

private:
    NoiseSchedule(std::vector<double> betas, std::vector<double> abar, std::optional<std::vector<int>> source)
        : betas_(std::move(betas)), alpha_bars_(std::move(abar)), source_(std::move(source)) {
        const std::size_t n = betas_.size();
        if (source_) require(source_->size() == n, "source timesteps must match schedule length");
        alphas_.resize(n);
        alpha_bar_prev_.resize(n);
        beta_tildes_.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            alphas_[i] = 1.0 - betas_[i];
            alpha_bar_prev_[i] = i == 0 ? 1.0 : alpha_bars_[i - 1];
            beta_tildes_[i] = (1.0 - alpha_bar_prev_[i]) / (1.0 - alpha_bars_[i]) * betas_[i];
        }
    }

    std::size_t index(int t) const {
        if (t < 1 || t > num_steps())
            throw std::out_of_range("timestep " + std::to_string(t) + " outside 1.." + std::to_string(num_steps()));
        return static_cast<std::size_t>(t - 1);
    }

    std::vector<double> betas_;
    std::vector<double> alphas_;
    std::vector<double> alpha_bars_;
    std::vector<double> alpha_bar_prev_;
    std::vector<double> beta_tildes_;
    std::optional<std::vector<int>> source_;
};

inline constexpr double kLinearBetaStart = 1e-4;
inline constexpr double kLinearBetaEnd = 0.02;
inline constexpr double kCosineOffset = 0.008;
inline constexpr double kCosineMaxBeta = 0.999;

/// Betas linearly spaced from 1e-4 to 0.02, both scaled by 1000/T.
inline NoiseSchedule make_linear_schedule(int steps) {
    require(steps >= 1, "schedule needs T >= 1");
    const double scale = 1000.0 / steps;
    const double lo = kLinearBetaStart * scale;
    const double hi = kLinearBetaEnd * scale;
    std::vector<double> betas(static_cast<std::size_t>(steps));
    for (int i = 0; i < steps; ++i) {
        betas[static_cast<std::size_t>(i)] =
            steps == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(steps - 1);
    }
    return NoiseSchedule::from_betas(std::move(betas));
}

/// Squared-cosine alpha_bar with offset 0.008; betas clipped at 0.999.
inline NoiseSchedule make_cosine_schedule(int steps) {
    require(steps >= 1, "schedule needs T >= 1");
    auto f = [steps](int t) {
        const double u = (static_cast<double>(t) / steps + kCosineOffset) / (1.0 + kCosineOffset);
        const double c = std::cos(u * std::numbers::pi / 2.0);
        return c * c;
    };
    std::vector<double> betas(static_cast<std::size_t>(steps));
    for (int t = 1; t <= steps; ++t) betas[static_cast<std::size_t>(t - 1)] = std::min(1.0 - f(t) / f(t - 1), kCosineMaxBeta);
    return NoiseSchedule::from_betas(std::move(betas));
}

inline NoiseSchedule make_schedule(const ScheduleSpec& spec) {
    return spec.family == ScheduleFamily::linear ? make_linear_schedule(spec.steps) : make_cosine_schedule(spec.steps);
}

/// Keep only the given 0-based timesteps of `base`; the result's alpha_bar at
/// step i is the base alpha_bar at timesteps[i].
inline NoiseSchedule respace(const NoiseSchedule& base, std::span<const int> timesteps) {
    require(!timesteps.empty(), "respacing needs at least one timestep");
    std::vector<double> abar;
    std::vector<int> source;
    abar.reserve(timesteps.size());
    source.reserve(timesteps.size());
    int last = -1;
    for (int s : timesteps) {
        require(s >= 0 && s < base.num_steps(), "respaced timestep out of range");
        require(s > last, "respaced timesteps must be strictly ascending");
        last = s;
        abar.push_back(base.alpha_bar(s + 1));
        source.push_back(base.source_timesteps() ? (*base.source_timesteps())[static_cast<std::size_t>(s)] : s);
    }
    return NoiseSchedule::from_alpha_bars(std::move(abar), std::move(source));
}

/// `count` evenly spaced 0-based indices in [0, total): floor(j * total / count).
inline std::vector<int> uniform_timesteps(int total, int count) {
    require(count >= 1 && count <= total, "uniform respacing count must lie in 1..T");
    std::vector<int> out(static_cast<std::size_t>(count));
    for (int j = 0; j < count; ++j)
        out[static_cast<std::size_t>(j)] =
            static_cast<int>(static_cast<long long>(j) * total / count);
    return out;
}

/// Steps allocated to each fifth of the chain.
struct SegmentSchedule {
    std::array<int, 5> counts{};

    int total() const {
        int s = 0;
        for (int c : counts) s += c;
        return s;
    }
};

inline std::vector<int> segment_to_timesteps(const SegmentSchedule& sched, int total) {
    require(total >= 5 && total % 5 == 0, "segment schedules need T divisible by 5");
    const int width = total / 5;
    std::vector<int> out;
    out.reserve(static_cast<std::size_t>(sched.total()));
    for (int seg = 0; seg < 5; ++seg) {
        const int c = sched.counts[static_cast<std::size_t>(seg)];
        require(c >= 0, "segment counts must be non-negative");
        require(c <= width, "segment " + std::to_string(seg) + " allocates " + std::to_string(c) +
                                " steps but only has " + std::to_string(width));
        for (int j = 0; j < c; ++j)
            out.push_back(seg * width + static_cast<int>(static_cast<long long>(j) * width / c));
    }
    return out;
}

enum class RespacingKind { none, uniform, segments };

struct RespacingSpec {
    RespacingKind kind = RespacingKind::none;
    int count = 0;
    SegmentSchedule segments{};

    static RespacingSpec uniform(int n) { return {RespacingKind::uniform, n, {}}; }
    static RespacingSpec from_segments(std::array<int, 5> c) { return {RespacingKind::segments, 0, {c}}; }
};

inline std::vector<int> respacing_timesteps(const RespacingSpec& spec, int total) {
    switch (spec.kind) {
    case RespacingKind::uniform: return uniform_timesteps(total, spec.count);
    case RespacingKind::segments: return segment_to_timesteps(spec.segments, total);
    case RespacingKind::none: break;
    }
    return uniform_timesteps(total, total);
}

inline NoiseSchedule apply_respacing(const NoiseSchedule& base, const RespacingSpec& spec) {
    if (spec.kind == RespacingKind::none) return base;
    const auto ts = respacing_timesteps(spec, base.num_steps());
    return respace(base, ts);
}

}  // namespace gdiff
