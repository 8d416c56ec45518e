#pragma once

// Guidance-scale sweep: sample at each scale with fixed seeds and target
// labels, then score every batch against one reference set.

#include "gdiff/metrics.hpp"
#include "gdiff/samplers.hpp"

#include <random>
#include <span>
#include <vector>

namespace gdiff {

/// Target classes drawn from the mixture weights with a dedicated stream.
inline std::vector<int> draw_target_labels(const GaussianMixture& mix, Eigen::Index n, std::uint64_t seed) {
    std::mt19937_64 rng(derive_seed(seed, 0x1abe1ULL));
    std::discrete_distribution<int> pick(mix.weights().begin(), mix.weights().end());
    std::vector<int> out(static_cast<std::size_t>(n));
    for (auto& y : out) y = pick(rng);
    return out;
}

struct SweepRow {
    double scale = 0.0;
    MetricsReport report;
};

struct SweepRequest {
    std::vector<double> scales;
    Eigen::Index samples = 10000;
    int k = 3;
};

template <Denoiser M, NoisyClassifier C>
std::vector<SweepRow> sweep_guidance_scale(const M& model, const C& classifier, const GaussianMixture& mix,
                                           const NoiseSchedule& base, const SamplerConfig& cfg,
                                           const SweepRequest& req, const Batch& reference) {
    require(!req.scales.empty(), "sweep needs at least one scale");
    const auto labels = draw_target_labels(mix, req.samples, cfg.seed);
    std::vector<SweepRow> rows;
    rows.reserve(req.scales.size());
    for (double s : req.scales) {
        SamplerConfig c = cfg;
        c.guidance_scale = s;
        SampleOptions opts;
        opts.labels = labels;
        const SampleResult res = sample(model, base, c, req.samples, &classifier, opts);
        rows.push_back({s, evaluate_samples(mix, reference, res.samples, req.k, labels)});
    }
    return rows;
}

}  // namespace gdiff
