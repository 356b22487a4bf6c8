#include "cdiff/classifier.hpp"

#include <cmath>

#include "cdiff/errors.hpp"
#include "cdiff/kernels.hpp"
#include "cdiff/rng.hpp"

namespace cdiff {

namespace {

void check_label(int y) {
    if (y != 0 && y != 1)
        throw numeric_error("classifier: label must be 0 or 1, got " + std::to_string(y));
}

} // namespace

AnalyticBayesClassifier::AnalyticBayesClassifier(Tensor mu0, Tensor mu1, double sigma0,
                                                 double sigma1, double prior1,
                                                 NoiseSchedule schedule)
    : mu0_(std::move(mu0)),
      mu1_(std::move(mu1)),
      sigma0_(sigma0),
      sigma1_(sigma1),
      schedule_(std::move(schedule)) {
    if (!mu0_.same_shape(mu1_))
        throw shape_error("analytic classifier: class means must share a shape");
    if (sigma0_ < 0.0 || sigma1_ < 0.0)
        throw numeric_error("analytic classifier: sigmas must be >= 0");
    if (!(prior1 > 0.0 && prior1 < 1.0))
        throw numeric_error("analytic classifier: prior1 must lie in (0,1)");
    log_prior0_ = std::log(1.0 - prior1);
    log_prior1_ = std::log(prior1);
}

double AnalyticBayesClassifier::class_log_likelihood(const Tensor& x_t, std::size_t t,
                                                     int y) const {
    const Tensor& mu = y == 0 ? mu0_ : mu1_;
    const double sigma = y == 0 ? sigma0_ : sigma1_;
    const double ab = schedule_.alpha_bar(t);
    const double var = ab * sigma * sigma + 1.0 - ab;
    const std::size_t n = x_t.numel();

    // ||x - sqrt(ab) mu||^2 accumulated in f64.
    const double sqrt_ab = std::sqrt(ab);
    double ss = 0.0;
    const float* xv = x_t.data();
    const float* mv = mu.data();
    for (std::size_t i = 0; i < n; ++i) {
        const double d = static_cast<double>(xv[i]) - sqrt_ab * static_cast<double>(mv[i]);
        ss += d * d;
    }
    return -0.5 * ss / var - 0.5 * static_cast<double>(n) * std::log(var);
}

double AnalyticBayesClassifier::log_prob(const Tensor& x_t, std::size_t t, int y) const {
    check_label(y);
    if (!x_t.same_shape(mu0_))
        throw shape_error("analytic classifier: input shape mismatch");
    const double l0 = class_log_likelihood(x_t, t, 0) + log_prior0_;
    const double l1 = class_log_likelihood(x_t, t, 1) + log_prior1_;
    const double m = std::max(l0, l1);
    const double lse = m + std::log(std::exp(l0 - m) + std::exp(l1 - m));
    return (y == 0 ? l0 : l1) - lse;
}

Tensor AnalyticBayesClassifier::input_gradient(const Tensor& x_t, std::size_t t, int y) const {
    check_label(y);
    if (!x_t.same_shape(mu0_))
        throw shape_error("analytic classifier: input shape mismatch");
    const double ab = schedule_.alpha_bar(t);
    const double sqrt_ab = std::sqrt(ab);
    const double v0 = ab * sigma0_ * sigma0_ + 1.0 - ab;
    const double v1 = ab * sigma1_ * sigma1_ + 1.0 - ab;
    const double p0 = std::exp(log_prob(x_t, t, 0));
    const double p1 = std::exp(log_prob(x_t, t, 1));

    // grad log p(y|x) = grad log N_y - sum_k p(k|x) grad log N_k, with
    // grad log N_k = -(x - sqrt(ab) mu_k) / v_k.
    Tensor out = Tensor::zeros(x_t.shape());
    const float* xv = x_t.data();
    const float* m0 = mu0_.data();
    const float* m1 = mu1_.data();
    const double vy = y == 0 ? v0 : v1;
    const float* my = y == 0 ? m0 : m1;
    for (std::size_t i = 0; i < out.numel(); ++i) {
        const double r0 = (static_cast<double>(xv[i]) - sqrt_ab * static_cast<double>(m0[i])) / v0;
        const double r1 = (static_cast<double>(xv[i]) - sqrt_ab * static_cast<double>(m1[i])) / v1;
        const double ry = (static_cast<double>(xv[i]) - sqrt_ab * static_cast<double>(my[i])) / vy;
        out[i] = static_cast<float>(-ry + p0 * r0 + p1 * r1);
    }
    return out;
}

ConvClassifier::ConvClassifier(ConvClassifierConfig cfg, std::uint64_t seed) : cfg_(cfg) {
    Philox rng(seed, 0xc1a55);
    in_conv_w_ = TinyCondUNet::init_conv(cfg_.channels, cfg_.image_channels, 3, rng);
    in_conv_b_ = Tensor::zeros({cfg_.channels});
    block1_ = TinyCondUNet::init_res_block(cfg_.channels, cfg_.time_dim, rng);
    block2_ = TinyCondUNet::init_res_block(cfg_.channels, cfg_.time_dim, rng);
    head_w_ = TinyCondUNet::init_linear(2, cfg_.channels, rng);
    head_b_ = Tensor::zeros({2});
    time_w1_ = TinyCondUNet::init_linear(cfg_.time_dim, cfg_.time_dim, rng);
    time_b1_ = Tensor::zeros({cfg_.time_dim});
    time_w2_ = TinyCondUNet::init_linear(cfg_.time_dim, cfg_.time_dim, rng);
    time_b2_ = Tensor::zeros({cfg_.time_dim});
    for (auto& [name, t] : named_params()) t->set_requires_grad(true);
}

std::vector<std::pair<std::string, Tensor*>> ConvClassifier::named_params() {
    return {
        {"in_conv.w", &in_conv_w_},     {"in_conv.b", &in_conv_b_},
        {"block1.conv1.w", &block1_.conv1_w}, {"block1.conv1.b", &block1_.conv1_b},
        {"block1.conv2.w", &block1_.conv2_w}, {"block1.conv2.b", &block1_.conv2_b},
        {"block1.proj.w", &block1_.proj_w},   {"block1.proj.b", &block1_.proj_b},
        {"block2.conv1.w", &block2_.conv1_w}, {"block2.conv1.b", &block2_.conv1_b},
        {"block2.conv2.w", &block2_.conv2_w}, {"block2.conv2.b", &block2_.conv2_b},
        {"block2.proj.w", &block2_.proj_w},   {"block2.proj.b", &block2_.proj_b},
        {"head.w", &head_w_},           {"head.b", &head_b_},
        {"time.w1", &time_w1_},         {"time.b1", &time_b1_},
        {"time.w2", &time_w2_},         {"time.b2", &time_b2_},
    };
}

std::vector<std::pair<std::string, const Tensor*>> ConvClassifier::named_params() const {
    auto mutable_view = const_cast<ConvClassifier*>(this)->named_params();
    std::vector<std::pair<std::string, const Tensor*>> out;
    out.reserve(mutable_view.size());
    for (auto& [name, t] : mutable_view) out.emplace_back(name, t);
    return out;
}

template <typename Binder>
Var ConvClassifier::graph(Tape& tape, Var x, const Tensor& time_feats, Binder&& bind) const {
    Var tfeat = tape.constant(time_feats);
    Var temb = tape.linear(tape.silu(tape.linear(tfeat, bind(time_w1_), bind(time_b1_))),
                           bind(time_w2_), bind(time_b2_));

    TinyCondUNet::BoundResBlock b1{bind(block1_.conv1_w), bind(block1_.conv1_b),
                                   bind(block1_.conv2_w), bind(block1_.conv2_b),
                                   bind(block1_.proj_w),  bind(block1_.proj_b)};
    TinyCondUNet::BoundResBlock b2{bind(block2_.conv1_w), bind(block2_.conv1_b),
                                   bind(block2_.conv2_w), bind(block2_.conv2_b),
                                   bind(block2_.proj_w),  bind(block2_.proj_b)};

    Var h0 = tape.conv2d(x, bind(in_conv_w_), bind(in_conv_b_));
    Var h1 = TinyCondUNet::res_block(tape, h0, temb, b1);
    Var hd = tape.avg_pool2(h1);
    Var h2 = TinyCondUNet::res_block(tape, hd, temb, b2);
    Var pooled = tape.global_avg_pool(tape.silu(h2)); // [N,C]
    Var logits = tape.linear(pooled, bind(head_w_), bind(head_b_));
    return tape.log_softmax(logits);
}

Tensor ConvClassifier::log_prob_batch(const Tensor& x_t,
                                      const std::vector<std::size_t>& timesteps) const {
    if (x_t.rank() != 4 || x_t.dim(1) != cfg_.image_channels)
        throw shape_error("classifier: expected x[N,C,H,W]");
    if (timesteps.size() != x_t.dim(0))
        throw shape_error("classifier: one timestep per sample");
    Tape tape;
    Var x = tape.constant(x_t);
    auto freeze = [&tape](const Tensor& p) { return tape.constant(p); };
    Var out = graph(tape, x, time_feature_batch(timesteps, cfg_.time_dim), freeze);
    return tape.value(out);
}

double ConvClassifier::log_prob(const Tensor& x_t, std::size_t t, int y) const {
    check_label(y);
    if (x_t.rank() != 4 || x_t.dim(0) != 1)
        throw shape_error("classifier log_prob: expected a single image [1,C,H,W]");
    const Tensor probs = log_prob_batch(x_t, std::vector<std::size_t>(1, t));
    return probs.at(0, static_cast<std::size_t>(y));
}

Tensor ConvClassifier::input_gradient(const Tensor& x_t, std::size_t t, int y) const {
    check_label(y);
    if (x_t.rank() != 4) throw shape_error("classifier: expected x[N,C,H,W]");
    Tape tape;
    Var x = tape.input(x_t, true);
    auto freeze = [&tape](const Tensor& p) { return tape.constant(p); };
    Var logp = graph(tape, x, time_feature_batch(std::vector<std::size_t>(x_t.dim(0), t),
                                                 cfg_.time_dim),
                     freeze);
    // Summing one class column per row keeps per-sample gradients separate.
    std::vector<int> labels(x_t.dim(0), y);
    Var picked = tape.nll(logp, labels);
    Var loss = tape.mul_scalar(picked, -static_cast<float>(x_t.dim(0)));
    tape.backward(loss);
    const std::vector<float>& g = tape.grad(x);
    Tensor out = Tensor::zeros(x_t.shape());
    std::copy(g.begin(), g.end(), out.data());
    return out;
}

Var ConvClassifier::forward_train(Tape& tape, Var x, const std::vector<std::size_t>& timesteps) {
    const Tensor& vx = tape.value(x);
    if (vx.rank() != 4) throw shape_error("classifier forward: expected x[N,C,H,W]");
    if (timesteps.size() != vx.dim(0))
        throw shape_error("classifier forward: one timestep per sample");
    auto bind = [&tape](const Tensor& p) { return tape.param(const_cast<Tensor&>(p)); };
    return graph(tape, x, time_feature_batch(timesteps, cfg_.time_dim), bind);
}

} // namespace cdiff
