#pragma once

#include <cstddef>
#include <vector>

#include "cdiff/rng.hpp"
#include "cdiff/tensor.hpp"

namespace cdiff {

// Forward-process variance schedule. Stores beta_t, alpha_t = 1-beta_t and
// the running product alpha_bar_t for t in 1..T, with the t=0 boundary fixed
// at alpha_bar_0 = 1. Immutable after construction; safe to share across
// threads.
class NoiseSchedule {
public:
    static NoiseSchedule linear(std::size_t timesteps, double beta_start, double beta_end);

    std::size_t timesteps() const { return timesteps_; }
    double beta(std::size_t t) const;      // t in 1..T
    double alpha(std::size_t t) const;     // t in 1..T
    double alpha_bar(std::size_t t) const; // t in 0..T, alpha_bar(0) == 1

private:
    NoiseSchedule() = default;
    void check_t(std::size_t t, std::size_t lo) const;

    std::size_t timesteps_ = 0;
    std::vector<double> betas_;      // index 0 unused
    std::vector<double> alphas_;     // index 0 == 1
    std::vector<double> alpha_bars_; // index 0 == 1
};

// Closed-form noising: sqrt(alpha_bar_t)*x0 + sqrt(1-alpha_bar_t)*eps.
Tensor q_sample(const Tensor& x0, std::size_t t, const Tensor& eps, const NoiseSchedule& sched);

// Step-by-step noising with a fresh standard-normal draw per step, applying
// x <- sqrt(1-beta_s)*x + sqrt(beta_s)*z for s = 1..t. Marginally equivalent
// to q_sample.
Tensor q_sample_iterative(const Tensor& x0, std::size_t t, Philox& rng,
                          const NoiseSchedule& sched);

// Fills a tensor of the given shape with standard-normal draws.
Tensor normal_tensor(const Shape& shape, Philox& rng);

} // namespace cdiff
