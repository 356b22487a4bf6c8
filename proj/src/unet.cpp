#include "cdiff/unet.hpp"

#include <cmath>

#include "cdiff/errors.hpp"
#include "cdiff/rng.hpp"

namespace cdiff {

namespace {

void mark_trainable(Tensor& t) { t.set_requires_grad(true); }

} // namespace

Tensor TinyCondUNet::init_conv(std::size_t out_ch, std::size_t in_ch, std::size_t k,
                               Philox& rng) {
    Tensor w = Tensor::zeros({out_ch, in_ch, k, k});
    const double std_dev = std::sqrt(2.0 / static_cast<double>(in_ch * k * k));
    for (float& v : w.values()) v = static_cast<float>(rng.normal() * std_dev);
    return w;
}

Tensor TinyCondUNet::init_linear(std::size_t out_dim, std::size_t in_dim, Philox& rng) {
    Tensor w = Tensor::zeros({out_dim, in_dim});
    const double std_dev = std::sqrt(2.0 / static_cast<double>(in_dim));
    for (float& v : w.values()) v = static_cast<float>(rng.normal() * std_dev);
    return w;
}

ResBlockParams TinyCondUNet::init_res_block(std::size_t channels, std::size_t emb_dim,
                                            Philox& rng) {
    ResBlockParams p;
    p.conv1_w = init_conv(channels, channels, 3, rng);
    p.conv1_b = Tensor::zeros({channels});
    p.conv2_w = init_conv(channels, channels, 3, rng);
    p.conv2_b = Tensor::zeros({channels});
    p.proj_w = init_linear(channels, emb_dim, rng);
    p.proj_b = Tensor::zeros({channels});
    return p;
}

TinyCondUNet::TinyCondUNet(TinyCondUNetConfig cfg, std::uint64_t seed) : cfg_(cfg) {
    if (cfg_.time_dim != cfg_.embed_dim)
        throw shape_error("unet: time_dim must equal embed_dim (features are added)");
    Philox rng(seed, 0x0de1);

    in_conv_w_ = init_conv(cfg_.channels, cfg_.image_channels, 3, rng);
    in_conv_b_ = Tensor::zeros({cfg_.channels});
    block1_ = init_res_block(cfg_.channels, cfg_.embed_dim, rng);
    block2_ = init_res_block(cfg_.channels, cfg_.embed_dim, rng);
    // Zero-initialized output conv so the initial prediction is exactly zero.
    out_conv_w_ = Tensor::zeros({cfg_.image_channels, cfg_.channels, 3, 3});
    out_conv_b_ = Tensor::zeros({cfg_.image_channels});
    time_w1_ = init_linear(cfg_.time_dim, cfg_.time_dim, rng);
    time_b1_ = Tensor::zeros({cfg_.time_dim});
    time_w2_ = init_linear(cfg_.time_dim, cfg_.time_dim, rng);
    time_b2_ = Tensor::zeros({cfg_.time_dim});
    embed_table_ = ConditionEmbedding::random_unit(cfg_.embed_dim, seed ^ 0x5eedu).table();

    for (auto& [name, t] : named_params()) mark_trainable(*t);
}

std::vector<std::pair<std::string, Tensor*>> TinyCondUNet::named_params() {
    return {
        {"in_conv.w", &in_conv_w_},     {"in_conv.b", &in_conv_b_},
        {"block1.conv1.w", &block1_.conv1_w}, {"block1.conv1.b", &block1_.conv1_b},
        {"block1.conv2.w", &block1_.conv2_w}, {"block1.conv2.b", &block1_.conv2_b},
        {"block1.proj.w", &block1_.proj_w},   {"block1.proj.b", &block1_.proj_b},
        {"block2.conv1.w", &block2_.conv1_w}, {"block2.conv1.b", &block2_.conv1_b},
        {"block2.conv2.w", &block2_.conv2_w}, {"block2.conv2.b", &block2_.conv2_b},
        {"block2.proj.w", &block2_.proj_w},   {"block2.proj.b", &block2_.proj_b},
        {"out_conv.w", &out_conv_w_},   {"out_conv.b", &out_conv_b_},
        {"time.w1", &time_w1_},         {"time.b1", &time_b1_},
        {"time.w2", &time_w2_},         {"time.b2", &time_b2_},
        {"embed.table", &embed_table_},
    };
}

std::vector<std::pair<std::string, const Tensor*>> TinyCondUNet::named_params() const {
    auto mutable_view = const_cast<TinyCondUNet*>(this)->named_params();
    std::vector<std::pair<std::string, const Tensor*>> out;
    out.reserve(mutable_view.size());
    for (auto& [name, t] : mutable_view) out.emplace_back(name, t);
    return out;
}

ConditionEmbedding TinyCondUNet::condition_embedding() const {
    std::vector<float> values(embed_table_.data(), embed_table_.data() + embed_table_.numel());
    return ConditionEmbedding::from_table(
        Tensor::from_data(embed_table_.shape(), std::move(values)));
}

Var TinyCondUNet::res_block(Tape& tape, Var x, Var emb, const BoundResBlock& p) {
    Var shift = tape.linear(emb, p.proj_w, p.proj_b); // [N,C]
    Var h = tape.conv2d(x, p.conv1_w, p.conv1_b);
    h = tape.add_channel(h, shift);
    h = tape.silu(h);
    h = tape.conv2d(h, p.conv2_w, p.conv2_b);
    return tape.add(x, h);
}

Tensor time_feature_batch(const std::vector<std::size_t>& timesteps, std::size_t dim) {
    Tensor out = Tensor::zeros({timesteps.size(), dim});
    for (std::size_t n = 0; n < timesteps.size(); ++n) {
        const std::vector<float> feats = sinusoidal_time_features(timesteps[n], dim);
        std::copy(feats.begin(), feats.end(), out.data() + n * dim);
    }
    return out;
}

template <typename Binder>
Var TinyCondUNet::graph(Tape& tape, Var x, const Tensor& time_feats, Var emb,
                        Binder&& bind) const {
    Var tw1 = bind(time_w1_), tb1 = bind(time_b1_);
    Var tw2 = bind(time_w2_), tb2 = bind(time_b2_);
    Var tfeat = tape.constant(time_feats);
    Var temb = tape.linear(tape.silu(tape.linear(tfeat, tw1, tb1)), tw2, tb2);
    Var cond = tape.add(temb, emb); // [N,embed_dim]

    BoundResBlock b1{bind(block1_.conv1_w), bind(block1_.conv1_b), bind(block1_.conv2_w),
                     bind(block1_.conv2_b), bind(block1_.proj_w),  bind(block1_.proj_b)};
    BoundResBlock b2{bind(block2_.conv1_w), bind(block2_.conv1_b), bind(block2_.conv2_w),
                     bind(block2_.conv2_b), bind(block2_.proj_w),  bind(block2_.proj_b)};

    Var h0 = tape.conv2d(x, bind(in_conv_w_), bind(in_conv_b_));
    Var h1 = res_block(tape, h0, cond, b1);
    Var hd = tape.avg_pool2(h1);
    Var h2 = res_block(tape, hd, cond, b2);
    Var hu = tape.upsample2(h2);
    Var hm = tape.add(h1, hu);
    return tape.conv2d(tape.silu(hm), bind(out_conv_w_), bind(out_conv_b_));
}

Tensor TinyCondUNet::predict(const Tensor& x_t, std::size_t t, std::span<const float> e) const {
    if (x_t.rank() != 4 || x_t.dim(1) != cfg_.image_channels)
        throw shape_error("unet predict: expected x[N," + std::to_string(cfg_.image_channels) +
                          ",H,W], got " + shape_str(x_t.shape()));
    if (e.size() != cfg_.embed_dim)
        throw shape_error("unet predict: embedding dim " + std::to_string(e.size()) +
                          " != configured " + std::to_string(cfg_.embed_dim));
    const std::size_t batch = x_t.dim(0);

    Tape tape;
    Tensor e_rows = Tensor::zeros({batch, cfg_.embed_dim});
    for (std::size_t n = 0; n < batch; ++n)
        std::copy(e.begin(), e.end(), e_rows.data() + n * cfg_.embed_dim);
    const Tensor time_feats =
        time_feature_batch(std::vector<std::size_t>(batch, t), cfg_.time_dim);

    Var x = tape.constant(x_t);
    Var emb = tape.constant(std::move(e_rows));
    auto freeze = [&tape](const Tensor& p) { return tape.constant(p); };
    Var out = graph(tape, x, time_feats, emb, freeze);
    return tape.value(out);
}

Var TinyCondUNet::forward_train(Tape& tape, Var x, const std::vector<std::size_t>& timesteps,
                                const std::vector<int>& labels) {
    const Tensor& vx = tape.value(x);
    if (vx.rank() != 4) throw shape_error("unet forward: expected x[N,C,H,W]");
    if (timesteps.size() != vx.dim(0) || labels.size() != vx.dim(0))
        throw shape_error("unet forward: one timestep and label per sample");

    const Tensor time_feats = time_feature_batch(timesteps, cfg_.time_dim);
    Var table = tape.param(embed_table_);
    Var emb = tape.gather_rows(table, labels);
    auto bind = [&tape](const Tensor& p) { return tape.param(const_cast<Tensor&>(p)); };
    return graph(tape, x, time_feats, emb, bind);
}

} // namespace cdiff
