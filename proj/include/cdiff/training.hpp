#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "cdiff/classifier.hpp"
#include "cdiff/denoiser.hpp"
#include "cdiff/schedule.hpp"
#include "cdiff/tensor.hpp"
#include "cdiff/unet.hpp"

namespace cdiff {

struct TrainConfig {
    double lr = 1e-3;
    double weight_decay = 0.0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::size_t batch = 8;
    std::size_t iters = 3000;
    std::uint64_t seed = 0;
    std::size_t checkpoint_interval = 0; // 0 = only final
    std::size_t log_interval = 50;
};

// First/second moment state for one parameter tensor.
struct AdamState {
    std::vector<float> m;
    std::vector<float> v;
    std::size_t step = 0;
};

// One decoupled-weight-decay update of a single parameter from its
// accumulated gradient. Throws training_error on non-finite gradients.
void adamw_step(Tensor& param, AdamState& state, const TrainConfig& cfg);

// Optimizer over a named parameter list; update order follows the list.
class AdamW {
public:
    AdamW(std::vector<std::pair<std::string, Tensor*>> params, TrainConfig cfg);
    void step();
    void zero_grad();
    const TrainConfig& config() const { return cfg_; }

private:
    std::vector<std::pair<std::string, Tensor*>> params_;
    std::vector<AdamState> state_;
    TrainConfig cfg_;
};

// Mean squared error between the model's noise prediction at
// q_sample(x0,t,eps) and eps itself. Pure measurement path (no gradients).
double diffusion_loss(const EpsilonModel& model, const Tensor& x0, int label, std::size_t t,
                      const Tensor& eps, const ConditionEmbedding& emb,
                      const NoiseSchedule& sched);

// In-memory labelled dataset.
struct LabelledImage {
    Tensor image; // [1,C,H,W]
    int label = 0;
};

struct LossPoint {
    std::size_t iteration;
    double loss;
};

using CheckpointFn = std::function<void(std::size_t iteration)>;

// Noise-prediction training: per sample t ~ Uniform{1..T}, eps ~ N(0,I),
// minimizing the squared prediction error. Deterministic given cfg.seed.
// Aborts with training_error if the loss goes non-finite.
std::vector<LossPoint> train_diffusion(TinyCondUNet& model,
                                       const std::vector<LabelledImage>& dataset,
                                       const NoiseSchedule& sched, const TrainConfig& cfg,
                                       const CheckpointFn& on_checkpoint = nullptr);

// Cross-entropy training of the noise-aware classifier on q_sample-noised
// inputs with t ~ Uniform{1..noise_max}.
std::vector<LossPoint> train_classifier(ConvClassifier& classifier,
                                        const std::vector<LabelledImage>& dataset,
                                        const NoiseSchedule& sched, std::size_t noise_max,
                                        const TrainConfig& cfg,
                                        const CheckpointFn& on_checkpoint = nullptr);

// Fraction of correct argmax predictions at the given noise level.
double classifier_accuracy(const ConvClassifier& classifier,
                           const std::vector<LabelledImage>& dataset, std::size_t t,
                           const NoiseSchedule& sched, std::uint64_t seed);

} // namespace cdiff
