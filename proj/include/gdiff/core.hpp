#pragma once

// Shared vocabulary types for the gdiff library: points, batches, step times
// and per-chain random streams.

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace gdiff {

/// A single data point (column vector of length d).
using Point = Eigen::VectorXd;

/// A batch of points, one per row.
using Batch = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class Mat>
using Plain = typename Mat::PlainObject;

/// Raised when training produces a non-finite loss.
class DivergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Time coordinate handed to a model for one evaluation.
///
/// `timestep` is the 1-based index in the original (un-respaced) chain and is
/// what learned networks embed; `alpha_bar` is the cumulative signal level at
/// that step and is what analytic oracles consume.
struct StepTime {
    int timestep = 1;
    double alpha_bar = 1.0;
};

inline void require(bool cond, const std::string& what) {
    if (!cond) throw std::invalid_argument(what);
}

/// SplitMix64 finalizer, used to derive independent seeds.
constexpr std::uint64_t mix_seed(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    return mix_seed(mix_seed(seed) ^ mix_seed(stream + 0x632be59bd9b4e019ULL));
}

/// Random stream owned by one sampling chain; (seed, chain index) -> stream.
class ChainStream {
public:
    ChainStream() = default;
    ChainStream(std::uint64_t seed, std::uint64_t chain) : engine_(derive_seed(seed, chain)) {}

    double normal() { return normal_(engine_); }
    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_{0};
    std::normal_distribution<double> normal_{0.0, 1.0};
};

inline std::vector<ChainStream> make_streams(std::uint64_t seed, std::size_t first_chain, std::size_t count) {
    std::vector<ChainStream> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) out.emplace_back(seed, first_chain + i);
    return out;
}

/// Fill a batch with standard normals, row i drawn from streams[i].
inline Batch standard_normal(std::span<ChainStream> streams, Eigen::Index dim) {
    Batch z(static_cast<Eigen::Index>(streams.size()), dim);
    for (Eigen::Index i = 0; i < z.rows(); ++i)
        for (Eigen::Index j = 0; j < dim; ++j) z(i, j) = streams[static_cast<std::size_t>(i)].normal();
    return z;
}

}  // namespace gdiff
