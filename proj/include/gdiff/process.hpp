#pragma once

// Forward noising process, true posterior, reverse-step parameterization,
// score relation and variational-bound terms. Everything here is a pure
// function of its arguments.
//
// Functions taking Eigen expressions accept either a Point or a Batch (one
// row per sample, every row at the same timestep). Covariances are diagonal.

#include "gdiff/core.hpp"
#include "gdiff/schedules.hpp"

#include <cmath>
#include <numbers>

namespace gdiff {

namespace detail {
template <class A, class B>
void require_same_shape(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b, const char* what) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw std::invalid_argument(std::string(what) + ": dimension mismatch");
}
}  // namespace detail

/// Diagonal Gaussian over x_{t-1}.
struct ReverseGaussian {
    Point mean;
    Point variance;
};

/// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps
template <class X, class E>
Plain<X> q_sample(const Eigen::MatrixBase<X>& x0, int t, const Eigen::MatrixBase<E>& eps, const NoiseSchedule& sched) {
    detail::require_same_shape(x0, eps, "q_sample");
    sched.check_step(t);
    const double ab = sched.alpha_bar(t);
    return std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * eps;
}

template <class X0, class Xt>
Plain<Xt> q_posterior_mean(const Eigen::MatrixBase<X0>& x0, const Eigen::MatrixBase<Xt>& xt, int t,
                           const NoiseSchedule& sched) {
    detail::require_same_shape(x0, xt, "q_posterior");
    const double ab = sched.alpha_bar(t);
    const double ab_prev = sched.alpha_bar_prev(t);
    const double c0 = std::sqrt(ab_prev) * sched.beta(t) / (1.0 - ab);
    const double ct = std::sqrt(sched.alpha(t)) * (1.0 - ab_prev) / (1.0 - ab);
    return c0 * x0 + ct * xt;
}

inline ReverseGaussian q_posterior(const Point& x0, const Point& xt, int t, const NoiseSchedule& sched) {
    return {q_posterior_mean(x0, xt, t, sched), Point::Constant(x0.size(), sched.beta_tilde(t))};
}

/// Inverts q_sample for x0 given the noise.
template <class Xt, class E>
Plain<Xt> predict_x0_from_eps(const Eigen::MatrixBase<Xt>& xt, int t, const Eigen::MatrixBase<E>& eps,
                              const NoiseSchedule& sched) {
    detail::require_same_shape(xt, eps, "predict_x0_from_eps");
    sched.check_step(t);
    const double ab = sched.alpha_bar(t);
    return (xt - std::sqrt(1.0 - ab) * eps) / std::sqrt(ab);
}

/// Reverse-step mean expressed through the predicted noise.
template <class Xt, class E>
Plain<Xt> mu_from_eps(const Eigen::MatrixBase<Xt>& xt, int t, const Eigen::MatrixBase<E>& eps,
                      const NoiseSchedule& sched) {
    detail::require_same_shape(xt, eps, "mu_from_eps");
    const double a = sched.alpha(t);
    const double coef = (1.0 - a) / std::sqrt(1.0 - sched.alpha_bar(t));
    return (xt - coef * eps) / std::sqrt(a);
}

/// grad log q_t(x) = -eps / sqrt(1 - abar_t)
template <class E>
Plain<E> score_from_eps(const Eigen::MatrixBase<E>& eps, int t, const NoiseSchedule& sched) {
    sched.check_step(t);
    const double ab = sched.alpha_bar(t);
    require(ab < 1.0, "score_from_eps: alpha_bar == 1 leaves the score undefined");
    return -eps / std::sqrt(1.0 - ab);
}

/// Reverse variance interpolated in log space between beta_tilde_t (v = 0)
/// and beta_t (v = 1). v is not clamped.
template <class V>
Plain<V> sigma_from_v(const Eigen::MatrixBase<V>& v, int t, const NoiseSchedule& sched) {
    const double log_hi = std::log(sched.beta(t));
    const double log_lo = sched.log_beta_tilde_clipped(t);
    return (v.array() * log_hi + (1.0 - v.array()) * log_lo).exp().matrix();
}

/// d sigma / d v, elementwise.
template <class V>
Plain<V> sigma_from_v_derivative(const Eigen::MatrixBase<V>& v, int t, const NoiseSchedule& sched) {
    const double span = std::log(sched.beta(t)) - sched.log_beta_tilde_clipped(t);
    return (sigma_from_v(v, t, sched).array() * span).matrix();
}

/// KL(N(m1, v1) || N(m2, v2)) for diagonal Gaussians, summed over dimensions.
template <class M1, class V1, class M2, class V2>
double gaussian_kl(const Eigen::MatrixBase<M1>& mean1, const Eigen::MatrixBase<V1>& var1,
                   const Eigen::MatrixBase<M2>& mean2, const Eigen::MatrixBase<V2>& var2) {
    detail::require_same_shape(mean1, var1, "gaussian_kl");
    detail::require_same_shape(mean1, mean2, "gaussian_kl");
    detail::require_same_shape(mean1, var2, "gaussian_kl");
    require((var1.array() > 0.0).all() && (var2.array() > 0.0).all(), "gaussian_kl: variances must be positive");
    const auto d = (mean1 - mean2).array();
    return (0.5 * ((var2.array() / var1.array()).log() + (var1.array() + d.square()) / var2.array() - 1.0)).sum();
}

/// -log N(x; mean, var), summed over dimensions.
template <class X, class M, class V>
double gaussian_nll(const Eigen::MatrixBase<X>& x, const Eigen::MatrixBase<M>& mean, const Eigen::MatrixBase<V>& var) {
    detail::require_same_shape(x, mean, "gaussian_nll");
    detail::require_same_shape(x, var, "gaussian_nll");
    require((var.array() > 0.0).all(), "gaussian_nll: variance must be positive");
    const auto d = (x - mean).array();
    return (0.5 * ((2.0 * std::numbers::pi * var.array()).log() + d.square() / var.array())).sum();
}

/// One term of the variational bound, in nats.
///
/// `term` is the subscript of L: 0 is the decoder term -log p(x0 | x1) with
/// `xt` = x1; 1..T-1 is KL(q(x_term | x_{term+1}, x0) || p(x_term | x_{term+1}))
/// with `xt` = x_{term+1}; T is the prior term KL(q(x_T | x0) || N(0, I)),
/// which ignores the model arguments.
inline double vlb_term(int term, const Point& x0, const Point& xt, const Point& model_mean, const Point& model_var,
                       const NoiseSchedule& sched) {
    const int T = sched.num_steps();
    if (term < 0 || term > T) throw std::out_of_range("vlb term index outside 0..T");
    if (term == T) {
        const double ab = sched.alpha_bar(T);
        const Point mean = std::sqrt(ab) * x0;
        const Point var = Point::Constant(x0.size(), 1.0 - ab);
        return gaussian_kl(mean, var, Point::Zero(x0.size()), Point::Ones(x0.size()));
    }
    if (term == 0) return gaussian_nll(x0, model_mean, model_var);
    const int t = term + 1;
    const ReverseGaussian q = q_posterior(x0, xt, t, sched);
    return gaussian_kl(q.mean, q.variance, model_mean, model_var);
}

}  // namespace gdiff
