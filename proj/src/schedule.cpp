#include "cdiff/schedule.hpp"

#include <cmath>
#include <string>

#include "cdiff/errors.hpp"
#include "cdiff/kernels.hpp"

namespace cdiff {

NoiseSchedule NoiseSchedule::linear(std::size_t timesteps, double beta_start, double beta_end) {
    if (timesteps < 1) throw numeric_error("schedule: need at least one timestep");
    if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0))
        throw numeric_error("schedule: need 0 < beta_start <= beta_end < 1");

    NoiseSchedule s;
    s.timesteps_ = timesteps;
    s.betas_.assign(timesteps + 1, 0.0);
    s.alphas_.assign(timesteps + 1, 1.0);
    s.alpha_bars_.assign(timesteps + 1, 1.0);
    for (std::size_t t = 1; t <= timesteps; ++t) {
        const double frac =
            timesteps == 1 ? 0.0
                           : static_cast<double>(t - 1) / static_cast<double>(timesteps - 1);
        s.betas_[t] = beta_start + (beta_end - beta_start) * frac;
        s.alphas_[t] = 1.0 - s.betas_[t];
        s.alpha_bars_[t] = s.alpha_bars_[t - 1] * s.alphas_[t];
    }
    return s;
}

void NoiseSchedule::check_t(std::size_t t, std::size_t lo) const {
    if (t < lo || t > timesteps_)
        throw numeric_error("schedule: timestep " + std::to_string(t) + " outside [" +
                            std::to_string(lo) + "," + std::to_string(timesteps_) + "]");
}

double NoiseSchedule::beta(std::size_t t) const {
    check_t(t, 1);
    return betas_[t];
}

double NoiseSchedule::alpha(std::size_t t) const {
    check_t(t, 1);
    return alphas_[t];
}

double NoiseSchedule::alpha_bar(std::size_t t) const {
    check_t(t, 0);
    return alpha_bars_[t];
}

Tensor q_sample(const Tensor& x0, std::size_t t, const Tensor& eps, const NoiseSchedule& sched) {
    if (!x0.same_shape(eps))
        throw shape_error("q_sample: eps shape " + shape_str(eps.shape()) +
                          " != x0 shape " + shape_str(x0.shape()));
    const double ab = sched.alpha_bar(t);
    if (t < 1) throw numeric_error("q_sample: t must be >= 1");
    Tensor out = Tensor::zeros(x0.shape());
    kernels::ops().axpby(static_cast<float>(std::sqrt(ab)), x0.data(),
                         static_cast<float>(std::sqrt(1.0 - ab)), eps.data(), out.data(),
                         out.numel());
    return out;
}

Tensor q_sample_iterative(const Tensor& x0, std::size_t t, Philox& rng,
                          const NoiseSchedule& sched) {
    if (t < 1 || t > sched.timesteps())
        throw numeric_error("q_sample_iterative: t outside schedule range");
    Tensor x = x0;
    Tensor z = Tensor::zeros(x0.shape());
    for (std::size_t s = 1; s <= t; ++s) {
        for (float& v : z.values()) v = rng.normal_f32();
        const double beta = sched.beta(s);
        kernels::ops().axpby(static_cast<float>(std::sqrt(1.0 - beta)), x.data(),
                             static_cast<float>(std::sqrt(beta)), z.data(), x.data(), x.numel());
    }
    return x;
}

Tensor normal_tensor(const Shape& shape, Philox& rng) {
    Tensor t = Tensor::zeros(shape);
    for (float& v : t.values()) v = rng.normal_f32();
    return t;
}

} // namespace cdiff
