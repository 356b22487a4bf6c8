#include "cdiff/sampler.hpp"

#include <cmath>

#include "cdiff/errors.hpp"
#include "cdiff/kernels.hpp"

namespace cdiff {

Tensor ddim_step(const Tensor& x_t, std::size_t t, const Tensor& eps_hat,
                 const NoiseSchedule& sched) {
    if (t < 1 || t > sched.timesteps())
        throw numeric_error("ddim_step: timestep outside schedule range");
    if (!x_t.same_shape(eps_hat)) throw shape_error("ddim_step: eps_hat shape mismatch");

    const double ab_t = sched.alpha_bar(t);
    const double ab_prev = sched.alpha_bar(t - 1);
    const double ratio = std::sqrt(ab_prev / ab_t);
    // x_{t-1} = ratio*x_t + (sqrt(1-ab_prev) - ratio*sqrt(1-ab_t)) * eps_hat
    const double eps_coeff = std::sqrt(1.0 - ab_prev) - ratio * std::sqrt(1.0 - ab_t);

    Tensor out = Tensor::zeros(x_t.shape());
    kernels::ops().axpby(static_cast<float>(ratio), x_t.data(), static_cast<float>(eps_coeff),
                         eps_hat.data(), out.data(), out.numel());
    return out;
}

Tensor ddpm_ancestral_step(const Tensor& x_t, std::size_t t, const Tensor& eps_hat, Philox& rng,
                           const NoiseSchedule& sched) {
    if (t < 1 || t > sched.timesteps())
        throw numeric_error("ddpm_ancestral_step: timestep outside schedule range");
    if (!x_t.same_shape(eps_hat)) throw shape_error("ddpm_ancestral_step: eps_hat shape mismatch");

    const double ab_t = sched.alpha_bar(t);
    const double beta = sched.beta(t);
    const double inv_sqrt_alpha = 1.0 / std::sqrt(sched.alpha(t));
    const double eps_coeff = -inv_sqrt_alpha * beta / std::sqrt(1.0 - ab_t);

    Tensor out = Tensor::zeros(x_t.shape());
    kernels::ops().axpby(static_cast<float>(inv_sqrt_alpha), x_t.data(),
                         static_cast<float>(eps_coeff), eps_hat.data(), out.data(), out.numel());
    if (t > 1) {
        Tensor z = normal_tensor(x_t.shape(), rng);
        kernels::ops().axpy(static_cast<float>(std::sqrt(beta)), z.data(), out.data(),
                            out.numel());
    }
    return out;
}

Tensor guided_epsilon(const EpsilonModel& model, const Tensor& x_t, std::size_t t,
                      std::span<const float> e, const GuidanceConfig& guidance,
                      const NoiseSchedule& sched) {
    Tensor eps = model.predict(x_t, t, e);
    if (guidance.scale == 0.0 || guidance.classifier == nullptr) return eps;
    if (guidance.scale < 0.0) throw numeric_error("guided_epsilon: scale must be >= 0");

    const Tensor grad = guidance.classifier->input_gradient(x_t, t, guidance.target);
    if (!grad.same_shape(x_t))
        throw shape_error("guided_epsilon: classifier gradient shape mismatch");
    const double coeff = -guidance.scale * std::sqrt(1.0 - sched.alpha_bar(t));
    kernels::ops().axpy(static_cast<float>(coeff), grad.data(), eps.data(), eps.numel());
    return eps;
}

} // namespace cdiff
