#pragma once

// Noisy classifiers p(y | x_t): the exact Bayes posterior of a noised mixture
// and an MLP trunk with a K-way log-softmax head. Both report the input
// gradient of log p(y | x_t) for a queried label.

#include "gdiff/core.hpp"
#include "gdiff/mixture.hpp"
#include "gdiff/mlp.hpp"

#include <cmath>
#include <concepts>
#include <span>
#include <vector>

namespace gdiff {

struct ClassifierOutput {
    Batch log_probs;       // n x K
    Batch grad_selected;   // n x d, grad_x log p(labels[i] | x_i); empty if no labels given
};

template <class C>
concept NoisyClassifier = requires(const C& c, const Batch& x, StepTime st, std::span<const int> labels) {
    { c.evaluate(x, st, labels) } -> std::same_as<ClassifierOutput>;
    { c.num_classes() } -> std::convertible_to<int>;
};

/// Exact posterior p(y | x_t) proportional to pi_y N(x_t; sqrt(abar) mu_y, abar var_y + 1 - abar).
/// Depends on x_t alone.
class AnalyticClassifier {
public:
    explicit AnalyticClassifier(GaussianMixture mix) : mix_(std::move(mix)) {}

    ClassifierOutput evaluate(const Batch& x, StepTime st, std::span<const int> labels) const {
        require(x.cols() == mix_.dim(), "classifier input dimension mismatch");
        require(labels.empty() || static_cast<Eigen::Index>(labels.size()) == x.rows(),
                "classifier needs no labels or one per row");
        const int K = mix_.num_classes();
        ClassifierOutput out{Batch(x.rows(), K), labels.empty() ? Batch() : Batch::Zero(x.rows(), x.cols())};
        detail::ComponentTerms terms;
        Point g(mix_.dim());
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            auto row = x.row(i);
            detail::component_terms(mix_, row, st.alpha_bar, terms);
            for (int k = 0; k < K; ++k)
                out.log_probs(i, k) = terms.log_joint[static_cast<std::size_t>(k)] - terms.log_marginal;
            if (labels.empty()) continue;
            const int y = labels[static_cast<std::size_t>(i)];
            require(y >= 0 && y < K, "class label out of range");
            // grad log p(y|x) = score_y - sum_k r_k score_k
            for (int k = 0; k < K; ++k) {
                detail::component_score(mix_, k, row, st.alpha_bar, g);
                const double coef = (k == y ? 1.0 : 0.0) - terms.resp[static_cast<std::size_t>(k)];
                out.grad_selected.row(i) += coef * g.transpose();
            }
        }
        return out;
    }

    int num_classes() const { return mix_.num_classes(); }
    const GaussianMixture& mixture() const { return mix_; }

private:
    GaussianMixture mix_;
};

/// Row-wise log-softmax.
inline Batch log_softmax(const Batch& logits) {
    Batch out(logits.rows(), logits.cols());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const double m = logits.row(i).maxCoeff();
        const double lse = m + std::log((logits.row(i).array() - m).exp().sum());
        out.row(i) = logits.row(i).array() - lse;
    }
    return out;
}

/// MLP trunk with a K-way log-softmax head. Unconditional in the class sense;
/// conditioned on the timestep through the trunk's adaptive normalization.
class MlpClassifier {
public:
    MlpClassifier() = default;
    explicit MlpClassifier(MlpNetwork net) : net_(std::move(net)) {
        require(!net_.architecture().conditional(), "classifier trunk must not take class labels");
        require(net_.architecture().output_dim >= 2, "classifier needs at least two classes");
    }

    static MlpArchitecture architecture_for(int dim, int num_classes, int width = 128, int hidden_layers = 3,
                                            int group_size = 32, int embed_dim = 64) {
        MlpArchitecture a;
        a.input_dim = dim;
        a.output_dim = num_classes;
        a.width = width;
        a.hidden_layers = hidden_layers;
        a.group_size = group_size;
        a.embed_dim = embed_dim;
        return a;
    }

    Batch log_probs(const Batch& x, StepTime st) const {
        const int t = st.timestep;
        return log_softmax(net_.forward(x, std::span<const int>(&t, 1), {}));
    }

    ClassifierOutput evaluate(const Batch& x, StepTime st, std::span<const int> labels) const {
        const int t = st.timestep;
        return evaluate(x, std::span<const int>(&t, 1), labels);
    }

    /// Per-row timesteps variant used by training.
    ClassifierOutput evaluate(const Batch& x, std::span<const int> timesteps, std::span<const int> labels) const {
        require(labels.empty() || static_cast<Eigen::Index>(labels.size()) == x.rows(),
                "classifier needs no labels or one per row");
        MlpCache cache;
        const RowMatrix logits = net_.forward(x, timesteps, {}, labels.empty() ? nullptr : &cache);
        ClassifierOutput out{log_softmax(logits), Batch()};
        if (labels.empty()) return out;
        out.grad_selected = net_.backward(cache, selected_upstream(out.log_probs, labels)).input;
        return out;
    }

    /// d log p(y_i | x_i) / d logits = onehot(y_i) - softmax_i
    static RowMatrix selected_upstream(const Batch& log_probs, std::span<const int> labels) {
        RowMatrix up = -log_probs.array().exp().matrix();
        for (Eigen::Index i = 0; i < up.rows(); ++i) {
            const int y = labels[static_cast<std::size_t>(i)];
            require(y >= 0 && y < up.cols(), "class label out of range");
            up(i, y) += 1.0;
        }
        return up;
    }

    int num_classes() const { return net_.architecture().output_dim; }
    MlpNetwork& network() { return net_; }
    const MlpNetwork& network() const { return net_; }

private:
    MlpNetwork net_{architecture_for(2, 2)};
};

/// s * g
template <class G>
Plain<G> scale_gradient(const Eigen::MatrixBase<G>& g, double s) {
    require(s >= 0.0, "gradient scale must be non-negative");
    return s * g;
}

}  // namespace gdiff
