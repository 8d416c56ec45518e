#pragma once

// Timestep-conditioned MLP with adaptive group normalization and a
// hand-written reverse pass.
//
// Each hidden layer computes
//     a = W h + b
//     (y_s, y_b) = P e + c          e = timestep embedding [+ class embedding]
//     z = y_s * GroupNorm(a) + y_b
//     h' = SiLU(z)
// and a final affine head maps the last hidden state to the outputs.
//
// All parameters live in one flat vector so optimizers, EMA and checkpoints
// can treat the network as a plain array of doubles.

#include "gdiff/core.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace gdiff {

inline constexpr double kGroupNormVarianceFloor = 1e-5;

/// Sinusoidal features: out[2i] = sin(t w_i), out[2i+1] = cos(t w_i),
/// w_i = 10000^(-2i/dim).
inline Eigen::VectorXd timestep_embedding(double t, int dim) {
    require(dim > 0 && dim % 2 == 0, "timestep embedding dimension must be even and positive");
    Eigen::VectorXd out(dim);
    for (int i = 0; i < dim / 2; ++i) {
        const double freq = std::pow(10000.0, -2.0 * i / dim);
        out(2 * i) = std::sin(t * freq);
        out(2 * i + 1) = std::cos(t * freq);
    }
    return out;
}

/// Per-group normalization statistics for one row.
struct GroupStats {
    std::vector<double> mean;
    std::vector<double> inv_std;
    std::vector<bool> floored;
};

/// Group-normalize `h` in place in groups of `group_size`, with the variance
/// floored at 1e-5. Returns the statistics used.
template <class Row>
GroupStats group_normalize(Row&& h, int group_size) {
    const auto width = static_cast<int>(h.size());
    require(group_size > 0 && width % group_size == 0, "width must be divisible by the group size");
    const int groups = width / group_size;
    GroupStats st{std::vector<double>(static_cast<std::size_t>(groups)),
                  std::vector<double>(static_cast<std::size_t>(groups)),
                  std::vector<bool>(static_cast<std::size_t>(groups))};
    for (int g = 0; g < groups; ++g) {
        auto seg = h.segment(g * group_size, group_size);
        const double m = seg.mean();
        const double var = (seg.array() - m).square().mean();
        const bool floored = var < kGroupNormVarianceFloor;
        const double inv = 1.0 / std::sqrt(floored ? kGroupNormVarianceFloor : var);
        seg = ((seg.array() - m) * inv).matrix();
        st.mean[static_cast<std::size_t>(g)] = m;
        st.inv_std[static_cast<std::size_t>(g)] = inv;
        st.floored[static_cast<std::size_t>(g)] = floored;
    }
    return st;
}

/// y_s * GroupNorm(h) + y_b
inline Eigen::VectorXd adagn(const Eigen::VectorXd& h, const Eigen::VectorXd& y_s, const Eigen::VectorXd& y_b,
                             int group_size) {
    require(h.size() == y_s.size() && h.size() == y_b.size(), "adagn: vectors must have equal length");
    Eigen::VectorXd n = h;
    group_normalize(n, group_size);
    return (y_s.array() * n.array() + y_b.array()).matrix();
}

struct MlpArchitecture {
    int input_dim = 2;
    int width = 128;
    int hidden_layers = 3;
    int group_size = 32;
    int embed_dim = 64;
    int output_dim = 2;
    int num_classes = 0;  // 0 = unconditional
    bool normalize = true;
    bool activation = true;

    void validate() const {
        require(input_dim >= 1, "input_dim must be positive");
        require(width >= 1 && hidden_layers >= 1, "width and hidden_layers must be positive");
        require(!normalize || (group_size >= 1 && width % group_size == 0), "width must be divisible by group_size");
        require(embed_dim >= 2 && embed_dim % 2 == 0, "embed_dim must be even");
        require(output_dim >= 1, "output_dim must be positive");
        require(num_classes >= 0, "num_classes must be non-negative");
    }

    bool conditional() const { return num_classes > 0; }

    std::string describe() const {
        std::ostringstream os;
        os << "input_dim=" << input_dim << " width=" << width << " hidden_layers=" << hidden_layers
           << " group_size=" << group_size << " embed_dim=" << embed_dim << " output_dim=" << output_dim
           << " num_classes=" << num_classes << " normalize=" << normalize << " activation=" << activation;
        return os.str();
    }

    bool operator==(const MlpArchitecture&) const = default;
};

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixView = Eigen::Map<RowMatrix>;
using ConstMatrixView = Eigen::Map<const RowMatrix>;
using VectorView = Eigen::Map<Eigen::VectorXd>;
using ConstVectorView = Eigen::Map<const Eigen::VectorXd>;

/// Offsets of every tensor inside the flat parameter vector, in declaration
/// order: per layer (W, b, P, c), then head (W, b), then the class table.
struct MlpLayout {
    struct Layer {
        std::size_t weight, bias, proj, proj_bias;
        int in;
    };
    std::vector<Layer> layers;
    std::size_t head_weight = 0, head_bias = 0, class_table = 0, total = 0;

    explicit MlpLayout(const MlpArchitecture& a) {
        std::size_t off = 0;
        int in = a.input_dim;
        const auto w = static_cast<std::size_t>(a.width);
        const auto e = static_cast<std::size_t>(a.embed_dim);
        for (int l = 0; l < a.hidden_layers; ++l) {
            Layer L{};
            L.in = in;
            L.weight = off;
            off += w * static_cast<std::size_t>(in);
            L.bias = off;
            off += w;
            L.proj = off;
            off += 2 * w * e;
            L.proj_bias = off;
            off += 2 * w;
            layers.push_back(L);
            in = a.width;
        }
        head_weight = off;
        off += static_cast<std::size_t>(a.output_dim) * w;
        head_bias = off;
        off += static_cast<std::size_t>(a.output_dim);
        class_table = off;
        off += static_cast<std::size_t>(a.num_classes) * e;
        total = off;
    }
};

/// Everything the reverse pass needs from a forward pass.
struct MlpCache {
    RowMatrix embedding;                 // n x E
    std::vector<RowMatrix> inputs;       // h_{l-1}, n x in_l
    std::vector<RowMatrix> normalized;   // GroupNorm(a) (or a), n x w
    std::vector<RowMatrix> scale;        // y_s, n x w
    std::vector<RowMatrix> preact;       // z, n x w
    std::vector<std::vector<GroupStats>> stats;
    RowMatrix last_hidden;               // n x w
    std::vector<int> labels;
};

struct MlpGradients {
    std::vector<double> params;
    RowMatrix input;
};

class MlpNetwork {
public:
    MlpNetwork() : MlpNetwork(MlpArchitecture{}) {}
    explicit MlpNetwork(const MlpArchitecture& arch)
        : arch_((arch.validate(), arch)), layout_(arch_), params_(layout_.total, 0.0) {
        set_unit_scale_bias();
    }

    const MlpArchitecture& architecture() const { return arch_; }
    const MlpLayout& layout() const { return layout_; }
    std::vector<double>& params() { return params_; }
    const std::vector<double>& params() const { return params_; }
    std::size_t parameter_count() const { return params_.size(); }

    /// Seeded initialization: hidden weights ~ N(0, 1/fan_in), projections
    /// ~ N(0, 0.02^2), y_s bias = 1, class table ~ N(0, 1). The output head is
    /// zero unless `random_head` is set.
    void initialize(std::uint64_t seed, bool random_head = false) {
        std::mt19937_64 rng(mix_seed(seed));
        std::normal_distribution<double> normal;
        std::fill(params_.begin(), params_.end(), 0.0);
        const auto w = static_cast<std::size_t>(arch_.width);
        const auto e = static_cast<std::size_t>(arch_.embed_dim);
        for (const auto& L : layout_.layers) {
            const double sd = 1.0 / std::sqrt(static_cast<double>(L.in));
            for (std::size_t i = 0; i < w * static_cast<std::size_t>(L.in); ++i) params_[L.weight + i] = sd * normal(rng);
            for (std::size_t i = 0; i < 2 * w * e; ++i) params_[L.proj + i] = 0.02 * normal(rng);
        }
        if (random_head) {
            const double sd = 1.0 / std::sqrt(static_cast<double>(w));
            for (std::size_t i = 0; i < static_cast<std::size_t>(arch_.output_dim) * w; ++i)
                params_[layout_.head_weight + i] = sd * normal(rng);
        }
        for (std::size_t i = 0; i < static_cast<std::size_t>(arch_.num_classes) * e; ++i)
            params_[layout_.class_table + i] = normal(rng);
        set_unit_scale_bias();
    }

    /// Forward pass. `timesteps` holds one entry (shared) or one per row;
    /// `labels` is empty for unconditional networks, else one per row.
    RowMatrix forward(const Batch& x, std::span<const int> timesteps, std::span<const int> labels,
                      MlpCache* cache = nullptr) const {
        const Eigen::Index n = x.rows();
        require(x.cols() == arch_.input_dim, "mlp input dimension mismatch");
        require(timesteps.size() == 1 || static_cast<Eigen::Index>(timesteps.size()) == n,
                "mlp needs one timestep or one per row");
        if (arch_.conditional()) {
            require(static_cast<Eigen::Index>(labels.size()) == n, "conditional model needs one class label per row");
            for (int y : labels) require(y >= 0 && y < arch_.num_classes, "class label out of range");
        } else {
            require(labels.empty(), "unconditional model does not take class labels");
        }

        RowMatrix emb = embeddings(n, timesteps, labels);
        const int w = arch_.width;
        RowMatrix h = x;
        if (cache) {
            cache->inputs.clear();
            cache->normalized.clear();
            cache->scale.clear();
            cache->preact.clear();
            cache->stats.clear();
            cache->labels.assign(labels.begin(), labels.end());
        }
        for (const auto& L : layout_.layers) {
            ConstMatrixView W(params_.data() + L.weight, w, L.in);
            ConstVectorView b(params_.data() + L.bias, w);
            ConstMatrixView P(params_.data() + L.proj, 2 * w, arch_.embed_dim);
            ConstVectorView c(params_.data() + L.proj_bias, 2 * w);

            RowMatrix a = h * W.transpose();
            a.rowwise() += b.transpose();
            RowMatrix mod = emb * P.transpose();
            mod.rowwise() += c.transpose();

            std::vector<GroupStats> stats;
            if (arch_.normalize) {
                stats.reserve(static_cast<std::size_t>(n));
                for (Eigen::Index i = 0; i < n; ++i) stats.push_back(group_normalize(a.row(i), arch_.group_size));
            }
            RowMatrix z = (mod.leftCols(w).array() * a.array() + mod.rightCols(w).array()).matrix();
            if (cache) {
                cache->inputs.push_back(std::move(h));
                cache->normalized.push_back(a);
                cache->scale.push_back(mod.leftCols(w));
                cache->preact.push_back(z);
                cache->stats.push_back(std::move(stats));
            }
            h = arch_.activation ? silu(z) : z;
        }
        ConstMatrixView Wo(params_.data() + layout_.head_weight, arch_.output_dim, w);
        ConstVectorView bo(params_.data() + layout_.head_bias, arch_.output_dim);
        RowMatrix out = h * Wo.transpose();
        out.rowwise() += bo.transpose();
        if (cache) {
            cache->last_hidden = std::move(h);
            cache->embedding = std::move(emb);
        }
        return out;
    }

    /// Reverse pass: gradients of sum(upstream .* outputs) with respect to
    /// every parameter and to the input.
    MlpGradients backward(const MlpCache& cache, const RowMatrix& upstream) const {
        const Eigen::Index n = cache.last_hidden.rows();
        require(upstream.rows() == n && upstream.cols() == arch_.output_dim, "mlp backward: upstream shape mismatch");
        require(cache.inputs.size() == layout_.layers.size(), "mlp backward: cache does not match network");
        const int w = arch_.width;
        MlpGradients g{std::vector<double>(params_.size(), 0.0), RowMatrix()};

        ConstMatrixView Wo(params_.data() + layout_.head_weight, arch_.output_dim, w);
        MatrixView dWo(g.params.data() + layout_.head_weight, arch_.output_dim, w);
        VectorView dbo(g.params.data() + layout_.head_bias, arch_.output_dim);
        dWo.noalias() = upstream.transpose() * cache.last_hidden;
        dbo = upstream.colwise().sum().transpose();
        RowMatrix dh = upstream * Wo;
        RowMatrix demb = RowMatrix::Zero(n, arch_.embed_dim);

        for (std::size_t li = layout_.layers.size(); li-- > 0;) {
            const auto& L = layout_.layers[li];
            const RowMatrix& z = cache.preact[li];
            const RowMatrix& norm = cache.normalized[li];
            const RowMatrix& ys = cache.scale[li];
            RowMatrix dz = arch_.activation ? (dh.array() * silu_grad(z).array()).matrix() : dh;

            RowMatrix dmod(n, 2 * w);
            dmod.leftCols(w) = (dz.array() * norm.array()).matrix();
            dmod.rightCols(w) = dz;
            RowMatrix da = (dz.array() * ys.array()).matrix();
            if (arch_.normalize) {
                for (Eigen::Index i = 0; i < n; ++i)
                    group_norm_backward(da.row(i), norm.row(i), cache.stats[li][static_cast<std::size_t>(i)]);
            }

            ConstMatrixView W(params_.data() + L.weight, w, L.in);
            ConstMatrixView P(params_.data() + L.proj, 2 * w, arch_.embed_dim);
            MatrixView dW(g.params.data() + L.weight, w, L.in);
            VectorView db(g.params.data() + L.bias, w);
            MatrixView dP(g.params.data() + L.proj, 2 * w, arch_.embed_dim);
            VectorView dc(g.params.data() + L.proj_bias, 2 * w);
            dW.noalias() = da.transpose() * cache.inputs[li];
            db = da.colwise().sum().transpose();
            dP.noalias() = dmod.transpose() * cache.embedding;
            dc = dmod.colwise().sum().transpose();
            demb.noalias() += dmod * P;
            dh = da * W;
        }
        if (arch_.conditional()) {
            MatrixView dE(g.params.data() + layout_.class_table, arch_.num_classes, arch_.embed_dim);
            for (Eigen::Index i = 0; i < n; ++i) dE.row(cache.labels[static_cast<std::size_t>(i)]) += demb.row(i);
        }
        g.input = std::move(dh);
        return g;
    }

private:
    void set_unit_scale_bias() {
        const auto w = static_cast<std::size_t>(arch_.width);
        for (const auto& L : layout_.layers)
            for (std::size_t i = 0; i < w; ++i) params_[L.proj_bias + i] = 1.0;
    }

    RowMatrix embeddings(Eigen::Index n, std::span<const int> timesteps, std::span<const int> labels) const {
        RowMatrix emb(n, arch_.embed_dim);
        if (timesteps.size() == 1) {
            emb.rowwise() = timestep_embedding(timesteps[0], arch_.embed_dim).transpose();
        } else {
            for (Eigen::Index i = 0; i < n; ++i)
                emb.row(i) = timestep_embedding(timesteps[static_cast<std::size_t>(i)], arch_.embed_dim).transpose();
        }
        if (arch_.conditional()) {
            ConstMatrixView E(params_.data() + layout_.class_table, arch_.num_classes, arch_.embed_dim);
            for (Eigen::Index i = 0; i < n; ++i) emb.row(i) += E.row(labels[static_cast<std::size_t>(i)]);
        }
        return emb;
    }

    static RowMatrix silu(const RowMatrix& z) { return (z.array() / (1.0 + (-z.array()).exp())).matrix(); }

    static RowMatrix silu_grad(const RowMatrix& z) {
        const auto s = 1.0 / (1.0 + (-z.array()).exp());
        return (s * (1.0 + z.array() * (1.0 - s))).matrix();
    }

    /// dnorm -> da for one row, in place.
    template <class Row, class NormRow>
    void group_norm_backward(Row&& d, const NormRow& norm, const GroupStats& st) const {
        const int G = arch_.group_size;
        for (std::size_t g = 0; g < st.mean.size(); ++g) {
            auto dg = d.segment(static_cast<Eigen::Index>(g) * G, G);
            const auto ng = norm.segment(static_cast<Eigen::Index>(g) * G, G);
            const double mean_d = dg.mean();
            if (st.floored[g]) {
                dg = ((dg.array() - mean_d) * st.inv_std[g]).matrix();
            } else {
                const double mean_dn = (dg.array() * ng.array()).mean();
                dg = ((dg.array() - mean_d - ng.array() * mean_dn) * st.inv_std[g]).matrix();
            }
        }
    }

    MlpArchitecture arch_;
    MlpLayout layout_;
    std::vector<double> params_;
};

}  // namespace gdiff
