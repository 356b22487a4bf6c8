#include "cdiff/training.hpp"

#include <cmath>

#include "cdiff/errors.hpp"
#include "cdiff/kernels.hpp"
#include "cdiff/rng.hpp"

namespace cdiff {

void adamw_step(Tensor& param, AdamState& state, const TrainConfig& cfg) {
    std::vector<float>& g = param.grad();
    const std::size_t n = param.numel();
    if (state.m.size() != n) {
        state.m.assign(n, 0.0f);
        state.v.assign(n, 0.0f);
        state.step = 0;
    }
    for (float gv : g)
        if (!std::isfinite(gv)) throw training_error("adamw: non-finite gradient");

    ++state.step;
    const double b1 = cfg.beta1, b2 = cfg.beta2;
    const double bias1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double bias2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
    float* p = param.data();
    for (std::size_t i = 0; i < n; ++i) {
        const double grad = g[i];
        const double m = b1 * state.m[i] + (1.0 - b1) * grad;
        const double v = b2 * state.v[i] + (1.0 - b2) * grad * grad;
        state.m[i] = static_cast<float>(m);
        state.v[i] = static_cast<float>(v);
        const double m_hat = m / bias1;
        const double v_hat = v / bias2;
        double next = p[i] - cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
        next -= cfg.lr * cfg.weight_decay * p[i];
        p[i] = static_cast<float>(next);
    }
}

AdamW::AdamW(std::vector<std::pair<std::string, Tensor*>> params, TrainConfig cfg)
    : params_(std::move(params)), state_(params_.size()), cfg_(cfg) {}

void AdamW::step() {
    for (std::size_t i = 0; i < params_.size(); ++i) adamw_step(*params_[i].second, state_[i], cfg_);
}

void AdamW::zero_grad() {
    for (auto& [name, p] : params_) p->zero_grad();
}

double diffusion_loss(const EpsilonModel& model, const Tensor& x0, int label, std::size_t t,
                      const Tensor& eps, const ConditionEmbedding& emb,
                      const NoiseSchedule& sched) {
    if (!x0.same_shape(eps)) throw shape_error("diffusion_loss: eps shape mismatch");
    const Tensor x_t = q_sample(x0, t, eps, sched);
    const Tensor pred = model.predict(x_t, t, emb.embed(label));
    if (!pred.same_shape(eps)) throw shape_error("diffusion_loss: prediction shape mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < eps.numel(); ++i) {
        const double d = static_cast<double>(eps[i]) - static_cast<double>(pred[i]);
        acc += d * d;
    }
    return acc / static_cast<double>(eps.numel());
}

namespace {

// Deterministic batch assembly: sample indices, timesteps and noise from the
// iteration's own stream so runs are reproducible regardless of batch size.
struct BatchDraw {
    Tensor x0;      // [B,C,H,W]
    Tensor x_noised;
    std::vector<std::size_t> timesteps;
    std::vector<int> labels;
    Tensor eps; // [B,C,H,W]
};

BatchDraw draw_batch(const std::vector<LabelledImage>& dataset, const NoiseSchedule& sched,
                     std::size_t max_t, std::size_t batch, std::uint64_t seed,
                     std::uint64_t iteration) {
    const Shape& img_shape = dataset.front().image.shape(); // [1,C,H,W]
    const std::size_t chw = dataset.front().image.numel();
    BatchDraw out;
    out.x0 = Tensor::zeros({batch, img_shape[1], img_shape[2], img_shape[3]});
    out.eps = Tensor::zeros(out.x0.shape());
    out.timesteps.resize(batch);
    out.labels.resize(batch);

    Philox rng(seed, 0x6a7c4 + iteration);
    for (std::size_t b = 0; b < batch; ++b) {
        const std::size_t idx = rng.next_u32() % dataset.size();
        const LabelledImage& sample = dataset[idx];
        std::copy_n(sample.image.data(), chw, out.x0.data() + b * chw);
        out.labels[b] = sample.label;
        out.timesteps[b] = 1 + rng.next_u32() % max_t;
    }
    for (float& v : out.eps.values()) v = rng.normal_f32();

    out.x_noised = Tensor::zeros(out.x0.shape());
    for (std::size_t b = 0; b < batch; ++b) {
        const double ab = sched.alpha_bar(out.timesteps[b]);
        kernels::ops().axpby(static_cast<float>(std::sqrt(ab)), out.x0.data() + b * chw,
                             static_cast<float>(std::sqrt(1.0 - ab)), out.eps.data() + b * chw,
                             out.x_noised.data() + b * chw, chw);
    }
    return out;
}

void validate_dataset(const std::vector<LabelledImage>& dataset) {
    if (dataset.empty()) throw training_error("training: empty dataset");
    for (const LabelledImage& s : dataset) {
        if (s.image.rank() != 4 || s.image.dim(0) != 1)
            throw shape_error("training: samples must be [1,C,H,W]");
        if (!s.image.same_shape(dataset.front().image))
            throw shape_error("training: all samples must share a shape");
        if (s.label != 0 && s.label != 1) throw training_error("training: labels must be 0/1");
    }
}

} // namespace

std::vector<LossPoint> train_diffusion(TinyCondUNet& model,
                                       const std::vector<LabelledImage>& dataset,
                                       const NoiseSchedule& sched, const TrainConfig& cfg,
                                       const CheckpointFn& on_checkpoint) {
    validate_dataset(dataset);
    AdamW optimizer(model.named_params(), cfg);
    std::vector<LossPoint> curve;

    for (std::size_t it = 1; it <= cfg.iters; ++it) {
        BatchDraw batch =
            draw_batch(dataset, sched, sched.timesteps(), cfg.batch, cfg.seed, it);

        optimizer.zero_grad();
        Tape tape;
        Var x = tape.constant(std::move(batch.x_noised));
        Var pred = model.forward_train(tape, x, batch.timesteps, batch.labels);
        Var target = tape.constant(std::move(batch.eps));
        Var diff = tape.sub(pred, target);
        Var loss = tape.mean(tape.mul(diff, diff));
        const double loss_value = tape.value(loss)[0];
        if (!std::isfinite(loss_value))
            throw training_error("train_diffusion: non-finite loss at iteration " +
                                 std::to_string(it));
        tape.backward(loss);
        optimizer.step();

        if (it == 1 || it == cfg.iters || (cfg.log_interval && it % cfg.log_interval == 0))
            curve.push_back({it, loss_value});
        if (on_checkpoint && cfg.checkpoint_interval && it % cfg.checkpoint_interval == 0)
            on_checkpoint(it);
    }
    return curve;
}

std::vector<LossPoint> train_classifier(ConvClassifier& classifier,
                                        const std::vector<LabelledImage>& dataset,
                                        const NoiseSchedule& sched, std::size_t noise_max,
                                        const TrainConfig& cfg,
                                        const CheckpointFn& on_checkpoint) {
    validate_dataset(dataset);
    if (noise_max < 1 || noise_max > sched.timesteps())
        throw training_error("train_classifier: noise_max outside [1,T]");
    AdamW optimizer(classifier.named_params(), cfg);
    std::vector<LossPoint> curve;

    for (std::size_t it = 1; it <= cfg.iters; ++it) {
        BatchDraw batch = draw_batch(dataset, sched, noise_max, cfg.batch, cfg.seed ^ 0xc1f5, it);

        optimizer.zero_grad();
        Tape tape;
        Var x = tape.constant(std::move(batch.x_noised));
        Var logp = classifier.forward_train(tape, x, batch.timesteps);
        Var loss = tape.nll(logp, batch.labels);
        const double loss_value = tape.value(loss)[0];
        if (!std::isfinite(loss_value))
            throw training_error("train_classifier: non-finite loss at iteration " +
                                 std::to_string(it));
        tape.backward(loss);
        optimizer.step();

        if (it == 1 || it == cfg.iters || (cfg.log_interval && it % cfg.log_interval == 0))
            curve.push_back({it, loss_value});
        if (on_checkpoint && cfg.checkpoint_interval && it % cfg.checkpoint_interval == 0)
            on_checkpoint(it);
    }
    return curve;
}

double classifier_accuracy(const ConvClassifier& classifier,
                           const std::vector<LabelledImage>& dataset, std::size_t t,
                           const NoiseSchedule& sched, std::uint64_t seed) {
    validate_dataset(dataset);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        Philox rng(seed, i);
        const Tensor eps = normal_tensor(dataset[i].image.shape(), rng);
        const Tensor x_t = q_sample(dataset[i].image, t, eps, sched);
        const Tensor logp = classifier.log_prob_batch(x_t, {t});
        const int pred = logp.at(0, 1) > logp.at(0, 0) ? 1 : 0;
        if (pred == dataset[i].label) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(dataset.size());
}

} // namespace cdiff
