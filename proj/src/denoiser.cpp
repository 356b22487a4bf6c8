#include "cdiff/denoiser.hpp"

#include <cmath>

#include "cdiff/errors.hpp"
#include "cdiff/kernels.hpp"
#include "cdiff/rng.hpp"

namespace cdiff {

ConditionEmbedding ConditionEmbedding::random_unit(std::size_t dim, std::uint64_t seed) {
    if (dim < 1) throw shape_error("embedding: dim must be positive");
    Philox rng(seed, 0x7ab1e);
    Tensor table = Tensor::zeros({2, dim});
    while (true) {
        for (float& v : table.values()) v = rng.normal_f32();
        for (std::size_t row = 0; row < 2; ++row) {
            float* r = table.data() + row * dim;
            const double norm = std::sqrt(kernels::ops().dot(r, r, dim));
            if (norm == 0.0) continue;
            kernels::ops().mul_scalar(r, static_cast<float>(1.0 / norm), r, dim);
        }
        bool distinct = false;
        for (std::size_t i = 0; i < dim; ++i)
            if (table.at(0, i) != table.at(1, i)) distinct = true;
        if (distinct) break;
    }
    return ConditionEmbedding(std::move(table));
}

ConditionEmbedding ConditionEmbedding::analytic_pair() {
    return ConditionEmbedding(Tensor::from_data({2, 2}, {1.0f, 0.0f, 0.0f, 1.0f}));
}

ConditionEmbedding ConditionEmbedding::from_table(Tensor table) {
    if (table.rank() != 2 || table.dim(0) != 2)
        throw shape_error("embedding: table must be [2,dim]");
    return ConditionEmbedding(std::move(table));
}

std::vector<float> ConditionEmbedding::embed(int label) const {
    if (label != 0 && label != 1)
        throw numeric_error("embedding: label must be 0 or 1, got " + std::to_string(label));
    const std::size_t n = dim();
    const float* row = table_.data() + static_cast<std::size_t>(label) * n;
    return std::vector<float>(row, row + n);
}

std::vector<float> ConditionEmbedding::interpolate_toward_negative(double tau) const {
    if (tau == 0.0) return embed(1);
    if (tau == 1.0) return embed(0);
    const std::size_t n = dim();
    std::vector<float> out(n);
    const float* neg = table_.data();     // f(y0)
    const float* pos = table_.data() + n; // f(y1)
    // Difference form: coinciding rows interpolate to themselves bit-exactly,
    // so a zero condition gap stays an exact zero downstream.
    for (std::size_t i = 0; i < n; ++i)
        out[i] = std::fma(static_cast<float>(tau), neg[i] - pos[i], pos[i]);
    return out;
}

AnalyticGaussianDenoiser::AnalyticGaussianDenoiser(Tensor mu0, Tensor mu1, double sigma0,
                                                   double sigma1, NoiseSchedule schedule)
    : mu0_(std::move(mu0)),
      mu1_(std::move(mu1)),
      sigma0_(sigma0),
      sigma1_(sigma1),
      schedule_(std::move(schedule)) {
    if (!mu0_.same_shape(mu1_))
        throw shape_error("analytic denoiser: class means must share a shape");
    if (sigma0_ < 0.0 || sigma1_ < 0.0)
        throw numeric_error("analytic denoiser: sigmas must be >= 0");
}

double AnalyticGaussianDenoiser::decode_mixing_weight(std::span<const float> e) {
    if (e.size() != 2)
        throw numeric_error("analytic denoiser: embedding must have dimension 2");
    const double c = e[0];
    const double s = static_cast<double>(e[0]) + static_cast<double>(e[1]);
    if (std::abs(s - 1.0) > 1e-4 || c < -1e-4 || c > 1.0 + 1e-4)
        throw numeric_error("analytic denoiser: embedding is not a convex mix of the basis rows");
    return std::min(1.0, std::max(0.0, c));
}

Tensor AnalyticGaussianDenoiser::predict(const Tensor& x_t, std::size_t t,
                                         std::span<const float> e) const {
    if (!x_t.same_shape(mu0_))
        throw shape_error("analytic denoiser: input shape " + shape_str(x_t.shape()) +
                          " != configured mean shape " + shape_str(mu0_.shape()));
    const double c = decode_mixing_weight(e);
    const double ab = schedule_.alpha_bar(t);
    const double var1 = sigma1_ * sigma1_;
    const double var_c = std::fma(c, sigma0_ * sigma0_ - var1, var1);
    const double denom = ab * var_c + 1.0 - ab;

    // mu_c = (1-c)*mu1 + c*mu0, evaluated as mu1 + c*(mu0-mu1) so equal class
    // means give a c-independent (bit-identical) prediction.
    Tensor mu_c = Tensor::zeros(mu0_.shape());
    for (std::size_t i = 0; i < mu_c.numel(); ++i)
        mu_c[i] = std::fma(static_cast<float>(c), mu0_[i] - mu1_[i], mu1_[i]);

    const double scale = std::sqrt(1.0 - ab) / denom;
    Tensor out = Tensor::zeros(x_t.shape());
    kernels::ops().axpby(static_cast<float>(scale), x_t.data(),
                         static_cast<float>(-scale * std::sqrt(ab)), mu_c.data(), out.data(),
                         out.numel());
    return out;
}

std::vector<float> sinusoidal_time_features(std::size_t t, std::size_t dim) {
    if (dim < 2 || dim % 2 != 0)
        throw shape_error("time features: dim must be even and >= 2");
    std::vector<float> out(dim);
    const std::size_t half = dim / 2;
    for (std::size_t i = 0; i < half; ++i) {
        const double freq =
            std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
        const double angle = static_cast<double>(t) * freq;
        out[i] = static_cast<float>(std::sin(angle));
        out[half + i] = static_cast<float>(std::cos(angle));
    }
    return out;
}

} // namespace cdiff
