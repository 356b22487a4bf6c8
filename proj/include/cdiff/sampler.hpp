#pragma once

#include <span>

#include "cdiff/classifier.hpp"
#include "cdiff/denoiser.hpp"
#include "cdiff/rng.hpp"
#include "cdiff/schedule.hpp"
#include "cdiff/tensor.hpp"

namespace cdiff {

// Classifier-guidance settings. With scale == 0 or no classifier the guided
// prediction equals the raw model output bit for bit.
struct GuidanceConfig {
    double scale = 0.0;
    const NoisyClassifier* classifier = nullptr;
    int target = 1;
};

// Deterministic reverse step:
//   x_{t-1} = sqrt(ab_{t-1}) * (x_t - sqrt(1-ab_t)*eps_hat) / sqrt(ab_t)
//           + sqrt(1-ab_{t-1}) * eps_hat
// with ab_0 = 1 at the final step.
Tensor ddim_step(const Tensor& x_t, std::size_t t, const Tensor& eps_hat,
                 const NoiseSchedule& sched);

// Stochastic reverse step: mean (x_t - beta_t/sqrt(1-ab_t)*eps_hat)/sqrt(a_t),
// plus sqrt(beta_t)*z for t > 1; the t = 1 step is deterministic.
Tensor ddpm_ancestral_step(const Tensor& x_t, std::size_t t, const Tensor& eps_hat, Philox& rng,
                           const NoiseSchedule& sched);

// eps_hat = model(x_t,t,e) - scale * sqrt(1-ab_t) * grad_x log p(target|x_t).
Tensor guided_epsilon(const EpsilonModel& model, const Tensor& x_t, std::size_t t,
                      std::span<const float> e, const GuidanceConfig& guidance,
                      const NoiseSchedule& sched);

} // namespace cdiff
