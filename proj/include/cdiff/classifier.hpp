#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "cdiff/schedule.hpp"
#include "cdiff/tensor.hpp"
#include "cdiff/unet.hpp"

namespace cdiff {

// Noise-level-aware binary classifier p(y|x_t). log_prob returns a normalized
// log posterior; input_gradient the gradient of that log posterior w.r.t. the
// (single-image) input. Inference is read-only and thread-safe.
class NoisyClassifier {
public:
    virtual ~NoisyClassifier() = default;
    virtual double log_prob(const Tensor& x_t, std::size_t t, int y) const = 0;
    virtual Tensor input_gradient(const Tensor& x_t, std::size_t t, int y) const = 0;
};

// Exact Bayes posterior for the per-class Gaussian benchmark: under
// x0|y ~ N(mu_y, sigma_y^2 I) the noised marginal is
// x_t|y ~ N(sqrt(ab_t) mu_y, (ab_t sigma_y^2 + 1 - ab_t) I).
class AnalyticBayesClassifier final : public NoisyClassifier {
public:
    AnalyticBayesClassifier(Tensor mu0, Tensor mu1, double sigma0, double sigma1,
                            double prior1, NoiseSchedule schedule);

    double log_prob(const Tensor& x_t, std::size_t t, int y) const override;
    Tensor input_gradient(const Tensor& x_t, std::size_t t, int y) const override;

private:
    // log N(x; sqrt(ab) mu_y, v_y I) up to the shared normalization constant.
    double class_log_likelihood(const Tensor& x_t, std::size_t t, int y) const;

    Tensor mu0_;
    Tensor mu1_;
    double sigma0_;
    double sigma1_;
    double log_prior0_;
    double log_prior1_;
    NoiseSchedule schedule_;
};

struct ConvClassifierConfig {
    std::size_t channels = 32;
    std::size_t time_dim = 64;
    std::size_t image_channels = 1;
};

// Trainable classifier sharing the noise model's encoder layout: input conv,
// full-resolution residual block, 2x pooled residual block, global average
// pool, linear head. Timestep features are injected into both blocks.
class ConvClassifier final : public NoisyClassifier {
public:
    ConvClassifier(ConvClassifierConfig cfg, std::uint64_t seed);

    double log_prob(const Tensor& x_t, std::size_t t, int y) const override;
    Tensor input_gradient(const Tensor& x_t, std::size_t t, int y) const override;

    // Class log-probabilities [N,2] for a batch with per-sample timesteps.
    Tensor log_prob_batch(const Tensor& x_t, const std::vector<std::size_t>& timesteps) const;

    // Training graph over bound (mutable) parameters; returns log-probs [N,2].
    Var forward_train(Tape& tape, Var x, const std::vector<std::size_t>& timesteps);

    const ConvClassifierConfig& config() const { return cfg_; }
    std::vector<std::pair<std::string, Tensor*>> named_params();
    std::vector<std::pair<std::string, const Tensor*>> named_params() const;

private:
    template <typename Binder>
    Var graph(Tape& tape, Var x, const Tensor& time_feats, Binder&& bind) const;

    ConvClassifierConfig cfg_;
    Tensor in_conv_w_, in_conv_b_;
    ResBlockParams block1_, block2_;
    Tensor head_w_, head_b_;
    Tensor time_w1_, time_b1_, time_w2_, time_b2_;
};

} // namespace cdiff
