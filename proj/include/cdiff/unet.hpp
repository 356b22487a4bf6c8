#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "cdiff/autodiff.hpp"
#include "cdiff/denoiser.hpp"
#include "cdiff/tensor.hpp"

namespace cdiff {

// One residual unit: conv3x3 -> +embedding projection -> silu -> conv3x3,
// added back onto the input. All tensors carry requires_grad.
struct ResBlockParams {
    Tensor conv1_w, conv1_b;
    Tensor conv2_w, conv2_b;
    Tensor proj_w, proj_b; // embedding -> per-channel shift
};

struct TinyCondUNetConfig {
    std::size_t channels = 32;
    std::size_t embed_dim = 64; // condition embedding width
    std::size_t time_dim = 64;  // sinusoidal feature width; must equal embed_dim
    std::size_t image_channels = 1;
};

// Small conditional noise-prediction network: input conv, a residual block at
// full resolution, a 2x pooled residual block, nearest upsample with additive
// skip, output conv. Timestep features go through a 2-layer MLP and are added
// to the condition embedding; each block projects that vector onto its
// channels and adds it to the feature maps.
class TinyCondUNet final : public EpsilonModel {
public:
    TinyCondUNet(TinyCondUNetConfig cfg, std::uint64_t seed);

    Tensor predict(const Tensor& x_t, std::size_t t, std::span<const float> e) const override;
    std::size_t embedding_dim() const override { return cfg_.embed_dim; }

    // Training-path graph: binds parameters mutably so backward() accumulates
    // into their grads. x is [N,C,H,W]; one timestep and label per sample;
    // labels index the trainable embedding table.
    Var forward_train(Tape& tape, Var x, const std::vector<std::size_t>& timesteps,
                      const std::vector<int>& labels);

    const TinyCondUNetConfig& config() const { return cfg_; }
    ConditionEmbedding condition_embedding() const;

    std::vector<std::pair<std::string, Tensor*>> named_params();
    std::vector<std::pair<std::string, const Tensor*>> named_params() const;

    // Internals shared with the convolutional classifier.
    struct BoundResBlock {
        Var conv1_w, conv1_b, conv2_w, conv2_b, proj_w, proj_b;
    };
    static Var res_block(Tape& tape, Var x, Var emb, const BoundResBlock& p);
    static Tensor init_conv(std::size_t out_ch, std::size_t in_ch, std::size_t k, Philox& rng);
    static Tensor init_linear(std::size_t out_dim, std::size_t in_dim, Philox& rng);
    static ResBlockParams init_res_block(std::size_t channels, std::size_t emb_dim, Philox& rng);

private:
    template <typename Binder>
    Var graph(Tape& tape, Var x, const Tensor& time_feats, Var emb, Binder&& bind) const;

    TinyCondUNetConfig cfg_;
    Tensor in_conv_w_, in_conv_b_;
    ResBlockParams block1_, block2_;
    Tensor out_conv_w_, out_conv_b_;
    Tensor time_w1_, time_b1_, time_w2_, time_b2_;
    Tensor embed_table_; // [2, embed_dim]
};

// Builds the batched sinusoidal feature matrix [N, dim].
Tensor time_feature_batch(const std::vector<std::size_t>& timesteps, std::size_t dim);

} // namespace cdiff
