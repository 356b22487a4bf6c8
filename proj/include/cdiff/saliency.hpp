#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "cdiff/classifier.hpp"
#include "cdiff/denoiser.hpp"
#include "cdiff/sampler.hpp"
#include "cdiff/schedule.hpp"
#include "cdiff/tensor.hpp"

namespace cdiff {

enum class NormalizeMode { abs_minmax, pos_minmax };

NormalizeMode parse_normalize_mode(const std::string& name);
std::string normalize_mode_name(NormalizeMode mode);

struct SaliencyConfig {
    std::size_t q_noise_level = 400; // noising depth Q
    std::size_t r_steps = 10;        // reverse iterations R
    double tau = 0.95;               // embedding moving weight
    double guidance_scale = 10.0;    // classifier gradient scale s
    std::uint64_t seed = 0;
    std::uint64_t stream = 0; // rng stream, one per image
    NormalizeMode normalization = NormalizeMode::abs_minmax;
};

struct SaliencyMap {
    Tensor raw;        // signed accumulator
    Tensor normalized; // in [0,1]
};

// Clamp/rectify and min-max normalize onto [0,1]. An all-zero input maps to
// all zeros (no division).
Tensor normalize_map(const Tensor& raw, NormalizeMode mode);

// Condition-sensitivity map. Noises x (a positive-class image) step by step
// up to level Q, duplicates the trajectory, then runs R paired deterministic
// reverse steps: one conditioned on f(y1), the other on the interpolated
// embedding (1-tau)f(y1)+tau*f(y0). The per-step trajectory gap, scaled by
// 1/tau, accumulates into the map. Both trajectories share the same noising
// realization so condition-independent structure cancels.
//
// With a classifier and scale > 0 the two predictions are additionally guided
// toward y1 and y0 respectively. classifier == nullptr or scale == 0 gives
// the unguided variant, bit for bit.
SaliencyMap cdm_saliency(const EpsilonModel& model, const ConditionEmbedding& emb,
                         const Tensor& x, const SaliencyConfig& cfg, const NoiseSchedule& sched,
                         const NoisyClassifier* classifier = nullptr);

// Reconstruction baseline: noise x to level Q, then run the full guided
// reverse chain toward the negative class down to t = 0; the map is
// |x - reconstruction|, normalized. Requires a classifier.
SaliencyMap cg_diff_baseline(const EpsilonModel& model, const ConditionEmbedding& emb,
                             const Tensor& x, const SaliencyConfig& cfg,
                             const NoiseSchedule& sched, const NoisyClassifier& classifier);

} // namespace cdiff
