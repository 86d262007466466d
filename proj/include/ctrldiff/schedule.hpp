#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "ctrldiff/errors.hpp"
#include "ctrldiff/signals.hpp"
#include "ctrldiff/tensor.hpp"

namespace ctrldiff {

/// Diffusion schedule: alpha_bar[t] for t = 0..T and beta[t] for t = 1..T
/// (beta[0] is unused padding).
struct NoiseSchedule {
    std::size_t T = 0;
    double s = 0.0;
    std::vector<double> alpha_bar;
    std::vector<double> beta;

    void validate() const {
        if (alpha_bar.size() != T + 1 || beta.size() != T + 1)
            throw ContractError("schedule arrays have the wrong length");
        for (std::size_t t = 0; t <= T; ++t)
            if (!(alpha_bar[t] > 0.0 && alpha_bar[t] < 1.0))
                throw ContractError("alpha_bar escapes (0, 1) at t=" + std::to_string(t));
        for (std::size_t t = 1; t <= T; ++t) {
            if (!(alpha_bar[t] < alpha_bar[t - 1]))
                throw ContractError("alpha_bar not strictly decreasing at t=" + std::to_string(t));
            if (!(beta[t] > 0.0 && beta[t] < 1.0))
                throw ContractError("beta escapes (0, 1) at t=" + std::to_string(t));
        }
    }
};

/// Square-root schedule: alpha_bar_t = 1 - sqrt(t/T + s), clamped to
/// [eps, 1 - eps] because the raw value goes negative at t = T. A strictly
/// decreasing tail is enforced after clamping so the derived betas stay in
/// (0, 1) even when several trailing steps hit the clamp floor.
inline NoiseSchedule sqrt_schedule(std::size_t T, double s) {
    if (T < 1) throw ContractError("schedule needs T >= 1");
    if (!(s > 0.0 && s < 1.0)) throw ContractError("schedule offset s must lie in (0, 1)");
    constexpr double eps = 1e-5;
    NoiseSchedule sched;
    sched.T = T;
    sched.s = s;
    sched.alpha_bar.resize(T + 1);
    sched.beta.assign(T + 1, 0.0);
    for (std::size_t t = 0; t <= T; ++t) {
        const double raw = 1.0 - std::sqrt(static_cast<double>(t) / static_cast<double>(T) + s);
        sched.alpha_bar[t] = std::min(std::max(raw, eps), 1.0 - eps);
    }
    for (std::size_t t = 1; t <= T; ++t) {
        sched.alpha_bar[t] =
            std::min(sched.alpha_bar[t], sched.alpha_bar[t - 1] * (1.0 - 1e-7));
        sched.beta[t] = 1.0 - sched.alpha_bar[t] / sched.alpha_bar[t - 1];
    }
    sched.validate();
    return sched;
}

/// Closed-form forward sample with partial noising: response rows become
/// sqrt(ab_t) x0 + sqrt(1 - ab_t) noise, condition rows are copied
/// bit-for-bit.
template <typename T>
Tensor<T> q_sample(const Tensor<T>& x0, std::size_t t, const Tensor<T>& noise,
                   const SpanMap& span, const NoiseSchedule& sched) {
    if (t < 1 || t > sched.T) throw ContractError("q_sample needs 1 <= t <= T");
    if (!x0.same_shape(noise)) throw DimensionError("noise shape must match x0");
    if (x0.rank() != 2 || x0.shape()[0] != span.total_len)
        throw DimensionError("x0 rows must match the span map length");
    const T sig = static_cast<T>(std::sqrt(sched.alpha_bar[t]));
    const T noi = static_cast<T>(std::sqrt(1.0 - sched.alpha_bar[t]));
    Tensor<T> xt = x0;
    const std::size_t cols = x0.shape()[1];
    for (std::size_t r = span.resp_begin; r < span.resp_end; ++r)
        for (std::size_t c = 0; c < cols; ++c)
            xt.at(r, c) = sig * x0.at(r, c) + noi * noise.at(r, c);
    xt.check_finite("q_sample");
    return xt;
}

template <typename T>
struct Posterior {
    Tensor<T> mean;
    std::vector<T> row_variance;  // one entry per position
};

/// Statistics of the reverse-step distribution over x_{t-1} given x_t and the
/// predicted clean representation. Response rows follow the forward-chain
/// posterior; condition rows are carried over from x_t with zero variance
/// (callers keep those rows anchored to the clean embeddings).
template <typename T>
Posterior<T> posterior(const Tensor<T>& x_t, const Tensor<T>& x0_hat, std::size_t t,
                       const SpanMap& span, const NoiseSchedule& sched) {
    if (t < 2 || t > sched.T) throw ContractError("posterior needs 2 <= t <= T");
    if (!x_t.same_shape(x0_hat)) throw DimensionError("x_t and x0_hat shapes disagree");
    if (x_t.rank() != 2 || x_t.shape()[0] != span.total_len)
        throw DimensionError("x_t rows must match the span map length");
    const double ab_t = sched.alpha_bar[t];
    const double ab_prev = sched.alpha_bar[t - 1];
    const double alpha_t = ab_t / ab_prev;
    const double beta_t = sched.beta[t];
    const double coef_clean = std::sqrt(ab_prev) * beta_t / (1.0 - ab_t);
    const double coef_noisy = std::sqrt(alpha_t) * (1.0 - ab_prev) / (1.0 - ab_t);
    const double var = beta_t * (1.0 - ab_prev) / (1.0 - ab_t);

    Posterior<T> post;
    post.mean = x_t;  // condition rows pass through
    post.row_variance.assign(span.total_len, T(0));
    const std::size_t cols = x_t.shape()[1];
    for (std::size_t r = span.resp_begin; r < span.resp_end; ++r) {
        for (std::size_t c = 0; c < cols; ++c)
            post.mean.at(r, c) = static_cast<T>(coef_clean * x0_hat.at(r, c) +
                                                coef_noisy * x_t.at(r, c));
        post.row_variance[r] = static_cast<T>(var);
    }
    post.mean.check_finite("posterior");
    return post;
}

}  // namespace ctrldiff
