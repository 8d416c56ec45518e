#pragma once

// Denoisers: the closed-form oracle for mixture data and the trainable MLP,
// both behind the same batch interface consumed by samplers and losses.

#include "gdiff/core.hpp"
#include "gdiff/mixture.hpp"
#include "gdiff/mlp.hpp"

#include <concepts>
#include <optional>
#include <span>

namespace gdiff {

/// Noise prediction plus the optional variance interpolant v, one row per sample.
struct DenoiserOutput {
    Batch eps;
    std::optional<Batch> v;
};

/// `times` holds either one entry shared by every row or one entry per row.
template <class M>
concept Denoiser = requires(const M& m, const Batch& x, std::span<const StepTime> times, std::span<const int> labels) {
    { m.predict(x, times, labels) } -> std::same_as<DenoiserOutput>;
    { m.has_variance_head() } -> std::convertible_to<bool>;
    { m.is_conditional() } -> std::convertible_to<bool>;
    { m.data_dim() } -> std::convertible_to<Eigen::Index>;
};

namespace detail {
inline void check_times(std::span<const StepTime> times, Eigen::Index rows) {
    require(times.size() == 1 || static_cast<Eigen::Index>(times.size()) == rows,
            "denoiser needs one step time or one per row");
}

/// Apply `f(rows, alpha_bar)` to each run of rows that share an alpha_bar.
template <class F>
void for_each_time_group(std::span<const StepTime> times, Eigen::Index rows, F&& f) {
    if (times.size() == 1) {
        f(Eigen::Index{0}, rows, times[0]);
        return;
    }
    for (Eigen::Index i = 0; i < rows; ++i) f(i, Eigen::Index{1}, times[static_cast<std::size_t>(i)]);
}
}  // namespace detail

/// Exact eps* for mixture data. When conditional, uses the labelled component.
class AnalyticDenoiser {
public:
    explicit AnalyticDenoiser(GaussianMixture mix, bool conditional = false)
        : mix_(std::move(mix)), conditional_(conditional) {}

    DenoiserOutput predict(const Batch& x, std::span<const StepTime> times, std::span<const int> labels) const {
        detail::check_times(times, x.rows());
        if (conditional_)
            require(static_cast<Eigen::Index>(labels.size()) == x.rows(), "conditional oracle needs one label per row");
        Batch eps(x.rows(), x.cols());
        detail::for_each_time_group(times, x.rows(), [&](Eigen::Index first, Eigen::Index count, StepTime st) {
            const Batch block = x.middleRows(first, count);
            eps.middleRows(first, count) =
                conditional_ ? analytic_conditional_eps(mix_, block, st.alpha_bar,
                                                        labels.subspan(static_cast<std::size_t>(first),
                                                                       static_cast<std::size_t>(count)))
                             : analytic_eps(mix_, block, st.alpha_bar);
        });
        return {std::move(eps), std::nullopt};
    }

    bool has_variance_head() const { return false; }
    bool is_conditional() const { return conditional_; }
    Eigen::Index data_dim() const { return mix_.dim(); }
    const GaussianMixture& mixture() const { return mix_; }

private:
    GaussianMixture mix_;
    bool conditional_;
};

/// Predicts eps = 0 everywhere.
class ZeroDenoiser {
public:
    explicit ZeroDenoiser(Eigen::Index dim = 1) : dim_(dim) {}

    DenoiserOutput predict(const Batch& x, std::span<const StepTime> times, std::span<const int>) const {
        detail::check_times(times, x.rows());
        return {Batch::Zero(x.rows(), x.cols()), std::nullopt};
    }
    bool has_variance_head() const { return false; }
    bool is_conditional() const { return false; }
    Eigen::Index data_dim() const { return dim_; }

private:
    Eigen::Index dim_;
};

/// MLP noise predictor. Output columns are [eps | v] when the variance head
/// is enabled, else [eps].
class MlpDenoiser {
public:
    MlpDenoiser() = default;
    explicit MlpDenoiser(MlpNetwork net) : net_(std::move(net)) {
        const auto& a = net_.architecture();
        require(a.output_dim == a.input_dim || a.output_dim == 2 * a.input_dim,
                "denoiser output must be d (eps) or 2d (eps and v)");
    }

    static MlpArchitecture architecture_for(int dim, bool learn_sigma, int num_classes = 0, int width = 128,
                                            int hidden_layers = 3, int group_size = 32, int embed_dim = 64) {
        MlpArchitecture a;
        a.input_dim = dim;
        a.output_dim = learn_sigma ? 2 * dim : dim;
        a.num_classes = num_classes;
        a.width = width;
        a.hidden_layers = hidden_layers;
        a.group_size = group_size;
        a.embed_dim = embed_dim;
        return a;
    }

    DenoiserOutput predict(const Batch& x, std::span<const StepTime> times, std::span<const int> labels) const {
        detail::check_times(times, x.rows());
        std::vector<int> ts(times.size());
        for (std::size_t i = 0; i < times.size(); ++i) ts[i] = times[i].timestep;
        return split(net_.forward(x, ts, labels));
    }

    DenoiserOutput split(const RowMatrix& out) const {
        const int d = net_.architecture().input_dim;
        DenoiserOutput r{out.leftCols(d), std::nullopt};
        if (has_variance_head()) r.v = out.rightCols(d);
        return r;
    }

    bool has_variance_head() const { return net_.architecture().output_dim == 2 * net_.architecture().input_dim; }
    bool is_conditional() const { return net_.architecture().conditional(); }
    Eigen::Index data_dim() const { return net_.architecture().input_dim; }
    MlpNetwork& network() { return net_; }
    const MlpNetwork& network() const { return net_; }

private:
    MlpNetwork net_;
};

/// Wraps a denoiser and counts evaluated rows.
template <Denoiser M>
class CountingDenoiser {
public:
    explicit CountingDenoiser(const M& inner) : inner_(&inner) {}

    DenoiserOutput predict(const Batch& x, std::span<const StepTime> times, std::span<const int> labels) const {
        rows_ += static_cast<std::size_t>(x.rows());
        return inner_->predict(x, times, labels);
    }
    bool has_variance_head() const { return inner_->has_variance_head(); }
    bool is_conditional() const { return inner_->is_conditional(); }
    Eigen::Index data_dim() const { return inner_->data_dim(); }
    std::size_t evaluated_rows() const { return rows_; }

private:
    const M* inner_;
    mutable std::size_t rows_ = 0;
};

/// Single-point convenience wrapper around predict().
template <Denoiser M>
DenoiserOutput predict_point(const M& model, const Point& x, StepTime st, std::optional<int> label = std::nullopt) {
    Batch b = x.transpose();
    std::vector<int> labels;
    if (label) labels.push_back(*label);
    return model.predict(b, std::span<const StepTime>(&st, 1), labels);
}

}  // namespace gdiff
