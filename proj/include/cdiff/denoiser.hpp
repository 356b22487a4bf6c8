#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cdiff/schedule.hpp"
#include "cdiff/tensor.hpp"

namespace cdiff {

// Two-row table of class embedding vectors, row y holding f(y). Interpolation
// moves linearly from the positive row toward the negative one.
class ConditionEmbedding {
public:
    // Rows drawn from a unit normal and normalized to unit length; rows are
    // re-drawn in the (astronomically unlikely) case they coincide.
    static ConditionEmbedding random_unit(std::size_t dim, std::uint64_t seed);
    // Fixed basis pair f(y0)=[1,0], f(y1)=[0,1] used by the analytic models.
    static ConditionEmbedding analytic_pair();
    static ConditionEmbedding from_table(Tensor table);

    std::size_t dim() const { return table_.dim(1); }
    const Tensor& table() const { return table_; }

    // Row y of the table.
    std::vector<float> embed(int label) const;
    // (1-tau)*f(y1) + tau*f(y0).
    std::vector<float> interpolate_toward_negative(double tau) const;

private:
    explicit ConditionEmbedding(Tensor table) : table_(std::move(table)) {}
    Tensor table_; // [2, dim]
};

// Noise predictor abstraction: estimates the standard-normal component of a
// noised image given the timestep and a condition embedding. Deterministic
// and safe to call concurrently.
class EpsilonModel {
public:
    virtual ~EpsilonModel() = default;
    virtual Tensor predict(const Tensor& x_t, std::size_t t, std::span<const float> e) const = 0;
    virtual std::size_t embedding_dim() const = 0;
};

// Closed-form optimal noise predictor for per-class isotropic Gaussian image
// data x0|y ~ N(mu_y, sigma_y^2 I). The embedding decodes to a mixing weight
// c in [0,1] (c=0 selects class 1, c=1 selects class 0) and the prediction is
//
//   sqrt(1-ab_t) * (x_t - sqrt(ab_t)*mu_c) / (ab_t*sigma_c^2 + 1 - ab_t)
//
// with mu_c = (1-c)*mu1 + c*mu0 and sigma_c^2 interpolated the same way.
// Affine in x_t and in c, which makes it an exact oracle for the saliency
// pipeline.
class AnalyticGaussianDenoiser final : public EpsilonModel {
public:
    AnalyticGaussianDenoiser(Tensor mu0, Tensor mu1, double sigma0, double sigma1,
                             NoiseSchedule schedule);

    Tensor predict(const Tensor& x_t, std::size_t t, std::span<const float> e) const override;
    std::size_t embedding_dim() const override { return 2; }

    // c = first component; requires a length-2 embedding on the segment
    // between the two basis rows. Throws numeric_error otherwise.
    static double decode_mixing_weight(std::span<const float> e);

    const Tensor& mu0() const { return mu0_; }
    const Tensor& mu1() const { return mu1_; }
    double sigma0() const { return sigma0_; }
    double sigma1() const { return sigma1_; }
    const NoiseSchedule& schedule() const { return schedule_; }

private:
    Tensor mu0_;
    Tensor mu1_;
    double sigma0_;
    double sigma1_;
    NoiseSchedule schedule_;
};

// Sinusoidal timestep features of the given even width.
std::vector<float> sinusoidal_time_features(std::size_t t, std::size_t dim);

} // namespace cdiff
