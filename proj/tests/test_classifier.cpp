#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "cdiff/classifier.hpp"
#include "cdiff/data_io.hpp"
#include "cdiff/errors.hpp"
#include "cdiff/rng.hpp"
#include "cdiff/training.hpp"

using namespace cdiff;

namespace {

Tensor random_image(Shape shape, std::uint64_t seed, double scale = 1.0) {
    Philox rng(seed);
    Tensor t = Tensor::zeros(std::move(shape));
    for (float& v : t.values()) v = static_cast<float>(scale * rng.normal());
    return t;
}

} // namespace

TEST_CASE("posterior symmetry for an equidistant input") {
    const NoiseSchedule sched = NoiseSchedule::linear(50, 1e-3, 0.04);
    Tensor mu0 = Tensor::full({1, 1, 4, 4}, 0.0f);
    Tensor mu1 = Tensor::full({1, 1, 4, 4}, 1.0f);
    const AnalyticBayesClassifier cls(mu0, mu1, 0.2, 0.2, 0.5, sched);
    const std::size_t t = 12;
    const Tensor x =
        Tensor::full({1, 1, 4, 4}, 0.5f * static_cast<float>(std::sqrt(sched.alpha_bar(t))));
    CHECK(cls.log_prob(x, t, 0) == doctest::Approx(std::log(0.5)).epsilon(1e-6));
    CHECK(cls.log_prob(x, t, 1) == doctest::Approx(std::log(0.5)).epsilon(1e-6));
}

TEST_CASE("posterior normalization holds at every noise level") {
    const NoiseSchedule sched = NoiseSchedule::linear(60, 1e-3, 0.05);
    Tensor mu0 = random_image({1, 1, 5, 5}, 3, 0.3);
    Tensor mu1 = random_image({1, 1, 5, 5}, 4, 0.3);
    const AnalyticBayesClassifier cls(mu0, mu1, 0.15, 0.3, 0.4, sched);
    const Tensor x = random_image({1, 1, 5, 5}, 5);
    for (std::size_t t : {std::size_t{1}, std::size_t{17}, std::size_t{42}, std::size_t{60}}) {
        const double total = std::exp(cls.log_prob(x, t, 0)) + std::exp(cls.log_prob(x, t, 1));
        CHECK(total == doctest::Approx(1.0).epsilon(1e-5));
    }
}

TEST_CASE("well-separated means give a confident posterior") {
    const NoiseSchedule sched = NoiseSchedule::linear(50, 1e-4, 0.02);
    // Separation chosen so the Mahalanobis gap is > 6 at this noise level.
    Tensor mu0 = Tensor::full({1, 1, 4, 4}, 0.0f);
    Tensor mu1 = Tensor::full({1, 1, 4, 4}, 2.0f);
    const AnalyticBayesClassifier cls(mu0, mu1, 0.1, 0.1, 0.5, sched);
    const std::size_t t = 5;
    Tensor x = Tensor::full({1, 1, 4, 4},
                            2.0f * static_cast<float>(std::sqrt(sched.alpha_bar(t))));
    CHECK(std::exp(cls.log_prob(x, t, 1)) > 0.99);
}

TEST_CASE("analytic input gradient matches central finite differences") {
    const NoiseSchedule sched = NoiseSchedule::linear(40, 1e-3, 0.05);
    Tensor mu0 = random_image({1, 1, 4, 4}, 7, 0.4);
    Tensor mu1 = random_image({1, 1, 4, 4}, 8, 0.4);
    const AnalyticBayesClassifier cls(mu0, mu1, 0.25, 0.2, 0.5, sched);
    const Tensor x = random_image({1, 1, 4, 4}, 9, 0.6);
    const std::size_t t = 13;

    const Tensor grad = cls.input_gradient(x, t, 1);
    CHECK(grad.shape() == x.shape());
    const double h = 1e-3;
    for (std::size_t i = 0; i < x.numel(); ++i) {
        Tensor up = x, dn = x;
        up[i] = static_cast<float>(x[i] + h);
        dn[i] = static_cast<float>(x[i] - h);
        const double fd = (cls.log_prob(up, t, 1) - cls.log_prob(dn, t, 1)) / (2.0 * h);
        CHECK(grad[i] == doctest::Approx(fd).epsilon(1e-4));
    }
}

TEST_CASE("untrained conv classifier sits near chance on balanced data") {
    const NoiseSchedule sched = NoiseSchedule::linear(50, 1e-3, 0.04);
    ConvClassifier cls({8, 16, 1}, 11);

    GaussianBlockSpec spec;
    spec.height = spec.width = 8;
    spec.block_y = spec.block_x = 2;
    spec.block_h = spec.block_w = 3;
    const std::vector<Sample> samples = gen_gaussian_blocks(spec, 200, 21);
    std::vector<LabelledImage> data;
    for (const Sample& s : samples) data.push_back({s.image, s.label});

    const double acc = classifier_accuracy(cls, data, 1, sched, 5);
    CHECK(acc > 0.35);
    CHECK(acc < 0.65);
}

TEST_CASE("conv classifier learns a separable task and its gradient checks out") {
    const NoiseSchedule sched = NoiseSchedule::linear(50, 1e-3, 0.04);
    ConvClassifier cls({8, 16, 1}, 13);

    GaussianBlockSpec spec;
    spec.height = spec.width = 8;
    spec.block_y = spec.block_x = 2;
    spec.block_h = spec.block_w = 4;
    spec.delta = 1.5;
    const std::vector<Sample> samples = gen_gaussian_blocks(spec, 160, 23);
    std::vector<LabelledImage> data;
    for (const Sample& s : samples) data.push_back({s.image, s.label});

    TrainConfig tc;
    tc.lr = 2e-3;
    tc.batch = 8;
    tc.iters = 150;
    tc.seed = 3;
    const std::vector<LossPoint> curve = train_classifier(cls, data, sched, 10, tc);
    CHECK(curve.back().loss < curve.front().loss);

    const double acc = classifier_accuracy(cls, data, 1, sched, 6);
    CHECK(acc >= 0.9);

    // Input gradient vs finite differences on a handful of pixels.
    const Tensor x = data.front().image;
    const std::size_t t = 4;
    const Tensor grad = cls.input_gradient(x, t, 1);
    Philox pick(31);
    const double h = 1e-2;
    int checked = 0;
    while (checked < 8) {
        const std::size_t i = pick.next_u32() % x.numel();
        if (std::fabs(grad[i]) < 1e-3) continue;
        Tensor up = x, dn = x;
        up[i] = static_cast<float>(x[i] + h);
        dn[i] = static_cast<float>(x[i] - h);
        const double fd = (cls.log_prob(up, t, 1) - cls.log_prob(dn, t, 1)) / (2.0 * h);
        CHECK(std::fabs(fd - grad[i]) / std::max(std::fabs(fd), 1e-8) < 1e-2);
        ++checked;
    }

    // Normalization also holds for the learned classifier.
    const double total = std::exp(cls.log_prob(x, t, 0)) + std::exp(cls.log_prob(x, t, 1));
    CHECK(total == doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("classifier input validation") {
    const NoiseSchedule sched = NoiseSchedule::linear(10, 0.01, 0.1);
    Tensor mu0 = Tensor::full({1, 1, 4, 4}, 0.0f);
    Tensor mu1 = Tensor::full({1, 1, 4, 4}, 1.0f);
    const AnalyticBayesClassifier cls(mu0, mu1, 0.2, 0.2, 0.5, sched);
    CHECK_THROWS_AS(cls.log_prob(Tensor::zeros({1, 1, 4, 4}), 3, 2), numeric_error);
    CHECK_THROWS_AS(cls.log_prob(Tensor::zeros({1, 1, 2, 2}), 3, 1), shape_error);
    CHECK_THROWS_AS(AnalyticBayesClassifier(mu0, mu1, 0.2, 0.2, 1.5, sched), numeric_error);
}
