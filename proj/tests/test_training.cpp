#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "cdiff/data_io.hpp"
#include "cdiff/errors.hpp"
#include "cdiff/training.hpp"

using namespace cdiff;

namespace {

// Noise predictor that ignores its inputs.
class ConstantModel final : public EpsilonModel {
public:
    explicit ConstantModel(Tensor value) : value_(std::move(value)) {}
    Tensor predict(const Tensor&, std::size_t, std::span<const float>) const override {
        return value_;
    }
    std::size_t embedding_dim() const override { return 2; }

private:
    Tensor value_;
};

// Oracle that returns the exact noise realization it was primed with.
class EchoModel final : public EpsilonModel {
public:
    explicit EchoModel(Tensor eps) : eps_(std::move(eps)) {}
    Tensor predict(const Tensor&, std::size_t, std::span<const float>) const override {
        return eps_;
    }
    std::size_t embedding_dim() const override { return 2; }

private:
    Tensor eps_;
};

std::vector<LabelledImage> block_dataset(std::size_t n, std::uint64_t seed,
                                         std::size_t size = 8) {
    GaussianBlockSpec spec;
    spec.height = spec.width = size;
    spec.block_y = spec.block_x = 2;
    spec.block_h = spec.block_w = 3;
    const std::vector<Sample> samples = gen_gaussian_blocks(spec, n, seed);
    std::vector<LabelledImage> out;
    for (const Sample& s : samples) out.push_back({s.image, s.label});
    return out;
}

} // namespace

TEST_CASE("squared-error objective: perfect and zero predictors") {
    const NoiseSchedule sched = NoiseSchedule::linear(50, 1e-3, 0.04);
    const ConditionEmbedding pair = ConditionEmbedding::analytic_pair();
    Philox rng(3);
    const Tensor x0 = normal_tensor({1, 1, 8, 8}, rng);
    const Tensor eps = normal_tensor({1, 1, 8, 8}, rng);

    const EchoModel oracle(eps);
    CHECK(diffusion_loss(oracle, x0, 1, 9, eps, pair, sched) == doctest::Approx(0.0));

    const ConstantModel zero(Tensor::zeros(x0.shape()));
    double eps_mean_sq = 0.0;
    for (std::size_t i = 0; i < eps.numel(); ++i)
        eps_mean_sq += static_cast<double>(eps[i]) * eps[i];
    eps_mean_sq /= eps.numel();
    CHECK(diffusion_loss(zero, x0, 1, 9, eps, pair, sched) ==
          doctest::Approx(eps_mean_sq).epsilon(1e-6));
}

TEST_CASE("exact conditional predictor beats every constant predictor on average") {
    const NoiseSchedule sched = NoiseSchedule::linear(50, 1e-3, 0.04);
    const ConditionEmbedding pair = ConditionEmbedding::analytic_pair();
    const double sigma = 0.4;
    Tensor mu1 = Tensor::full({1, 1, 6, 6}, 0.6f);
    Tensor mu0 = Tensor::full({1, 1, 6, 6}, 0.1f);
    const AnalyticGaussianDenoiser den(mu0, mu1, sigma, sigma, sched);
    const ConstantModel zero(Tensor::zeros({1, 1, 6, 6}));
    const ConstantModel biased(Tensor::full({1, 1, 6, 6}, 0.2f));

    const std::size_t t = 25;
    double loss_den = 0.0, loss_zero = 0.0, loss_biased = 0.0;
    const int trials = 10000 / 36;
    for (int k = 0; k < trials; ++k) {
        Philox rng(500 + k);
        Tensor x0 = Tensor::zeros({1, 1, 6, 6});
        for (std::size_t i = 0; i < x0.numel(); ++i)
            x0[i] = static_cast<float>(mu1[i] + sigma * rng.normal());
        const Tensor eps = normal_tensor(x0.shape(), rng);
        loss_den += diffusion_loss(den, x0, 1, t, eps, pair, sched);
        loss_zero += diffusion_loss(zero, x0, 1, t, eps, pair, sched);
        loss_biased += diffusion_loss(biased, x0, 1, t, eps, pair, sched);
    }
    CHECK(loss_den < loss_zero);
    CHECK(loss_den < loss_biased);
}

TEST_CASE("optimizer fixed points and closed forms") {
    TrainConfig cfg;
    cfg.lr = 0.01;

    // Zero gradient, zero decay: parameters unchanged.
    Tensor p = Tensor::from_data({3}, {1.0f, -2.0f, 0.5f});
    p.set_requires_grad(true);
    AdamState state;
    adamw_step(p, state, cfg);
    CHECK(p[0] == 1.0f);
    CHECK(p[1] == -2.0f);
    CHECK(p[2] == 0.5f);

    // Pure decoupled decay: p <- p * (1 - lr*wd).
    TrainConfig decay_cfg;
    decay_cfg.lr = 0.01;
    decay_cfg.weight_decay = 0.1;
    Tensor q = Tensor::from_data({1}, {2.0f});
    q.set_requires_grad(true);
    AdamState qstate;
    adamw_step(q, qstate, decay_cfg);
    CHECK(q[0] == doctest::Approx(2.0f * (1.0f - 0.01f * 0.1f)).epsilon(1e-7));

    // Constant gradient: the step magnitude converges to lr * sign(g).
    Tensor w = Tensor::from_data({1}, {0.0f});
    w.set_requires_grad(true);
    AdamState wstate;
    TrainConfig wcfg;
    wcfg.lr = 1e-3;
    float prev = 0.0f;
    double last_step = 0.0;
    for (int it = 0; it < 1000; ++it) {
        w.grad()[0] = -0.37f; // constant negative gradient
        prev = w[0];
        adamw_step(w, wstate, wcfg);
        last_step = w[0] - prev;
    }
    CHECK(last_step == doctest::Approx(wcfg.lr).epsilon(1e-3));

    // Non-finite gradients abort.
    Tensor bad = Tensor::from_data({1}, {0.0f});
    bad.set_requires_grad(true);
    bad.grad()[0] = std::numeric_limits<float>::quiet_NaN();
    AdamState bstate;
    CHECK_THROWS_AS(adamw_step(bad, bstate, cfg), training_error);
}

TEST_CASE("noise-prediction training runs, logs finite losses and improves") {
    const NoiseSchedule sched = NoiseSchedule::linear(50, 1e-3, 0.04);
    const std::vector<LabelledImage> data = block_dataset(64, 31);
    TinyCondUNet model({8, 16, 16, 1}, 41);

    TrainConfig cfg;
    cfg.lr = 2e-3;
    cfg.batch = 8;
    cfg.iters = 120;
    cfg.seed = 11;
    cfg.log_interval = 10;
    const std::vector<LossPoint> curve = train_diffusion(model, data, sched, cfg);
    REQUIRE(!curve.empty());
    for (const LossPoint& p : curve) CHECK(std::isfinite(p.loss));
    double head = 0.0, tail = 0.0;
    const std::size_t k = 3;
    for (std::size_t i = 0; i < k; ++i) {
        head += curve[i].loss;
        tail += curve[curve.size() - 1 - i].loss;
    }
    CHECK(tail < head);
}

TEST_CASE("training is bit-deterministic given the seed") {
    const NoiseSchedule sched = NoiseSchedule::linear(30, 1e-3, 0.04);
    const std::vector<LabelledImage> data = block_dataset(32, 37);

    auto run = [&] {
        TinyCondUNet model({8, 16, 16, 1}, 51);
        TrainConfig cfg;
        cfg.lr = 1e-3;
        cfg.batch = 4;
        cfg.iters = 40;
        cfg.seed = 13;
        train_diffusion(model, data, sched, cfg);
        std::vector<float> flat;
        for (auto& [name, p] : model.named_params())
            flat.insert(flat.end(), p->data(), p->data() + p->numel());
        return flat;
    };
    CHECK(run() == run());
}

TEST_CASE("exact predictor's objective lower-bounds the trained network's") {
    const NoiseSchedule sched = NoiseSchedule::linear(50, 1e-3, 0.04);
    GaussianBlockSpec spec;
    spec.height = spec.width = 8;
    spec.block_y = spec.block_x = 2;
    spec.block_h = spec.block_w = 3;
    const std::vector<Sample> samples = gen_gaussian_blocks(spec, 96, 61);
    std::vector<LabelledImage> data;
    for (const Sample& s : samples) data.push_back({s.image, s.label});

    TinyCondUNet model({8, 16, 16, 1}, 71);
    TrainConfig cfg;
    cfg.lr = 2e-3;
    cfg.batch = 8;
    cfg.iters = 200;
    cfg.seed = 17;
    train_diffusion(model, data, sched, cfg);

    const AnalyticGaussianDenoiser den(spec.mu0(), spec.mu1(), spec.sigma0, spec.sigma1, sched);
    const ConditionEmbedding pair = ConditionEmbedding::analytic_pair();
    const ConditionEmbedding learned = model.condition_embedding();

    double loss_exact = 0.0, loss_net = 0.0;
    int trials = 0;
    for (int k = 0; k < 200; ++k) {
        Philox rng(700 + k);
        const LabelledImage& sample = data[k % data.size()];
        const std::size_t t = 1 + rng.next_u32() % sched.timesteps();
        const Tensor eps = normal_tensor(sample.image.shape(), rng);
        loss_exact += diffusion_loss(den, sample.image, sample.label, t, eps, pair, sched);
        loss_net += diffusion_loss(model, sample.image, sample.label, t, eps, learned, sched);
        ++trials;
    }
    loss_exact /= trials;
    loss_net /= trials;
    // MMSE optimality with a 5% Monte-Carlo cushion.
    CHECK(loss_exact <= loss_net * 1.05);
}
