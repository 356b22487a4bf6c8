#include "cdiff/saliency.hpp"

#include <cmath>

#include "cdiff/errors.hpp"
#include "cdiff/kernels.hpp"

namespace cdiff {

NormalizeMode parse_normalize_mode(const std::string& name) {
    if (name == "abs_minmax") return NormalizeMode::abs_minmax;
    if (name == "pos_minmax") return NormalizeMode::pos_minmax;
    throw config_error("unknown normalization mode: " + name);
}

std::string normalize_mode_name(NormalizeMode mode) {
    return mode == NormalizeMode::abs_minmax ? "abs_minmax" : "pos_minmax";
}

Tensor normalize_map(const Tensor& raw, NormalizeMode mode) {
    Tensor out = Tensor::zeros(raw.shape());
    const std::size_t n = raw.numel();
    for (std::size_t i = 0; i < n; ++i) {
        const float v = raw[i];
        out[i] = mode == NormalizeMode::abs_minmax ? std::fabs(v) : (v > 0.0f ? v : 0.0f);
    }
    float lo = out[0], hi = out[0];
    for (std::size_t i = 1; i < n; ++i) {
        lo = std::min(lo, out[i]);
        hi = std::max(hi, out[i]);
    }
    if (hi == lo) {
        // Degenerate map; all zeros out (covers the identically-zero case).
        for (std::size_t i = 0; i < n; ++i) out[i] = 0.0f;
        return out;
    }
    const float inv = 1.0f / (hi - lo);
    for (std::size_t i = 0; i < n; ++i) out[i] = (out[i] - lo) * inv;
    return out;
}

namespace {

void validate(const SaliencyConfig& cfg, const NoiseSchedule& sched) {
    if (cfg.q_noise_level < 1 || cfg.q_noise_level > sched.timesteps())
        throw numeric_error("saliency: Q must lie in [1, T]");
    if (cfg.r_steps < 1 || cfg.r_steps > cfg.q_noise_level)
        throw numeric_error("saliency: R must lie in [1, Q]");
    if (!(cfg.tau > 0.0 && cfg.tau <= 1.0))
        throw numeric_error("saliency: tau must lie in (0, 1]");
    if (cfg.guidance_scale < 0.0) throw numeric_error("saliency: guidance scale must be >= 0");
}

} // namespace

SaliencyMap cdm_saliency(const EpsilonModel& model, const ConditionEmbedding& emb,
                         const Tensor& x, const SaliencyConfig& cfg, const NoiseSchedule& sched,
                         const NoisyClassifier* classifier) {
    validate(cfg, sched);

    Philox rng(cfg.seed, cfg.stream);
    Tensor x_pos = q_sample_iterative(x, cfg.q_noise_level, rng, sched);
    Tensor x_neg = x_pos; // shared noising realization

    const std::vector<float> e_pos = emb.embed(1);
    const std::vector<float> e_mix = emb.interpolate_toward_negative(cfg.tau);
    GuidanceConfig guide_pos{cfg.guidance_scale, classifier, 1};
    GuidanceConfig guide_neg{cfg.guidance_scale, classifier, 0};

    Tensor accum = Tensor::zeros(x.shape());
    const float inv_tau = static_cast<float>(1.0 / cfg.tau);
    for (std::size_t t = cfg.q_noise_level; t + cfg.r_steps > cfg.q_noise_level; --t) {
        const Tensor eps_pos = guided_epsilon(model, x_pos, t, e_pos, guide_pos, sched);
        const Tensor eps_neg = guided_epsilon(model, x_neg, t, e_mix, guide_neg, sched);
        x_pos = ddim_step(x_pos, t, eps_pos, sched);
        x_neg = ddim_step(x_neg, t, eps_neg, sched);
        kernels::ops().accum_scaled_diff(accum.data(), x_pos.data(), x_neg.data(), inv_tau,
                                         accum.numel());
    }

    SaliencyMap map;
    map.normalized = normalize_map(accum, cfg.normalization);
    map.raw = std::move(accum);
    return map;
}

SaliencyMap cg_diff_baseline(const EpsilonModel& model, const ConditionEmbedding& emb,
                             const Tensor& x, const SaliencyConfig& cfg,
                             const NoiseSchedule& sched, const NoisyClassifier& classifier) {
    validate(cfg, sched);

    Philox rng(cfg.seed, cfg.stream);
    Tensor x_rec = q_sample_iterative(x, cfg.q_noise_level, rng, sched);

    // Full reverse chain conditioned and guided toward the negative class.
    const std::vector<float> e_neg = emb.embed(0);
    GuidanceConfig guide{cfg.guidance_scale, &classifier, 0};
    for (std::size_t t = cfg.q_noise_level; t >= 1; --t) {
        const Tensor eps = guided_epsilon(model, x_rec, t, e_neg, guide, sched);
        x_rec = ddim_step(x_rec, t, eps, sched);
    }

    Tensor diff = Tensor::zeros(x.shape());
    kernels::ops().sub(x.data(), x_rec.data(), diff.data(), diff.numel());
    for (float& v : diff.values()) v = std::fabs(v);

    SaliencyMap map;
    map.normalized = normalize_map(diff, cfg.normalization);
    map.raw = std::move(diff);
    return map;
}

} // namespace cdiff
