#include "cdiff/autodiff.hpp"

#include <cmath>
#include <string>

#include "cdiff/errors.hpp"
#include "cdiff/kernels.hpp"

namespace cdiff {

namespace {

using kernels::ops;

// col[(c*k+ky)*k+kx][y*W+x] = x[c][y+ky-pad][x+kx-pad], zero outside.
void im2col(const float* x, std::size_t channels, std::size_t height, std::size_t width,
            std::size_t ksize, float* col) {
    const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(ksize / 2);
    const std::size_t hw = height * width;
    std::size_t row = 0;
    for (std::size_t c = 0; c < channels; ++c) {
        const float* plane = x + c * hw;
        for (std::size_t ky = 0; ky < ksize; ++ky) {
            for (std::size_t kx = 0; kx < ksize; ++kx, ++row) {
                float* out = col + row * hw;
                const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - pad;
                const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - pad;
                for (std::size_t y = 0; y < height; ++y) {
                    const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y) + dy;
                    float* out_row = out + y * width;
                    if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(height)) {
                        for (std::size_t xx = 0; xx < width; ++xx) out_row[xx] = 0.0f;
                        continue;
                    }
                    const float* src_row = plane + static_cast<std::size_t>(sy) * width;
                    for (std::size_t xx = 0; xx < width; ++xx) {
                        const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(xx) + dx;
                        out_row[xx] = (sx < 0 || sx >= static_cast<std::ptrdiff_t>(width))
                                          ? 0.0f
                                          : src_row[static_cast<std::size_t>(sx)];
                    }
                }
            }
        }
    }
}

// Scatter-add of the column gradient back onto the input image.
void col2im_accum(const float* col, std::size_t channels, std::size_t height, std::size_t width,
                  std::size_t ksize, float* dx) {
    const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(ksize / 2);
    const std::size_t hw = height * width;
    std::size_t row = 0;
    for (std::size_t c = 0; c < channels; ++c) {
        float* plane = dx + c * hw;
        for (std::size_t ky = 0; ky < ksize; ++ky) {
            for (std::size_t kx = 0; kx < ksize; ++kx, ++row) {
                const float* src = col + row * hw;
                const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - pad;
                const std::ptrdiff_t dxo = static_cast<std::ptrdiff_t>(kx) - pad;
                for (std::size_t y = 0; y < height; ++y) {
                    const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y) + dy;
                    if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(height)) continue;
                    const float* src_row = src + y * width;
                    float* dst_row = plane + static_cast<std::size_t>(sy) * width;
                    for (std::size_t xx = 0; xx < width; ++xx) {
                        const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(xx) + dxo;
                        if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(width)) continue;
                        dst_row[static_cast<std::size_t>(sx)] += src_row[xx];
                    }
                }
            }
        }
    }
}

void transpose(const float* src, std::size_t rows, std::size_t cols, float* dst) {
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) dst[c * rows + r] = src[r * cols + c];
}

} // namespace

void Tape::check_open(const char* op_name) const {
    if (consumed_)
        throw numeric_error(std::string(op_name) + ": tape already consumed by backward()");
}

void Tape::check_var(Var v, const char* op_name) const {
    if (!v.valid() || static_cast<std::size_t>(v.idx) >= nodes_.size())
        throw numeric_error(std::string(op_name) + ": invalid Var handle");
}

int Tape::emit(Tensor value, bool needs_grad, const char* op_name) {
    if (debug_checks::enabled()) check_finite(value, op_name);
    Node node;
    node.value = std::move(value);
    node.needs_grad = needs_grad;
    nodes_.push_back(std::move(node));
    return static_cast<int>(nodes_.size()) - 1;
}

std::vector<float>& Tape::grad_buf(int idx) {
    Node& n = nodes_[static_cast<std::size_t>(idx)];
    if (n.grad.empty()) n.grad.assign(n.value.numel(), 0.0f);
    return n.grad;
}

Var Tape::constant(Tensor value) {
    check_open("constant");
    return {emit(std::move(value), false, "constant")};
}

Var Tape::input(Tensor value, bool requires_grad) {
    check_open("input");
    return {emit(std::move(value), requires_grad, "input")};
}

Var Tape::param(Tensor& external) {
    check_open("param");
    const bool needs = external.requires_grad();
    const int idx = emit(external, needs, "param");
    nodes_.back().bound = needs ? &external : nullptr;
    return {idx};
}

Var Tape::elementwise(Elementwise op, Var a, Var b) {
    check_open("elementwise");
    check_var(a, "elementwise");
    check_var(b, "elementwise");
    const Tensor& va = val(a);
    const Tensor& vb = val(b);
    if (!va.same_shape(vb))
        throw shape_error("elementwise: shape mismatch " + shape_str(va.shape()) + " vs " +
                          shape_str(vb.shape()));
    const std::size_t n = va.numel();
    Tensor out = Tensor::zeros(va.shape());
    switch (op) {
        case Elementwise::add: ops().add(va.data(), vb.data(), out.data(), n); break;
        case Elementwise::sub: ops().sub(va.data(), vb.data(), out.data(), n); break;
        case Elementwise::mul: ops().mul(va.data(), vb.data(), out.data(), n); break;
        case Elementwise::div:
            if (debug_checks::enabled()) {
                for (float d : vb.values())
                    if (d == 0.0f) throw numeric_error("elementwise div: zero divisor");
            }
            ops().div(va.data(), vb.data(), out.data(), n);
            break;
    }
    const bool needs = node_needs(a) || node_needs(b);
    const Var result{emit(std::move(out), needs, "elementwise")};
    if (needs) {
        const int ia = a.idx, ib = b.idx, io = result.idx;
        nodes_.back().backprop = [this, op, ia, ib, io] {
            const std::vector<float>& g = nodes_[static_cast<std::size_t>(io)].grad;
            const std::size_t count = g.size();
            const Tensor& lhs = nodes_[static_cast<std::size_t>(ia)].value;
            const Tensor& rhs = nodes_[static_cast<std::size_t>(ib)].value;
            const bool need_a = nodes_[static_cast<std::size_t>(ia)].needs_grad;
            const bool need_b = nodes_[static_cast<std::size_t>(ib)].needs_grad;
            switch (op) {
                case Elementwise::add:
                    if (need_a) ops().axpy(1.0f, g.data(), grad_buf(ia).data(), count);
                    if (need_b) ops().axpy(1.0f, g.data(), grad_buf(ib).data(), count);
                    break;
                case Elementwise::sub:
                    if (need_a) ops().axpy(1.0f, g.data(), grad_buf(ia).data(), count);
                    if (need_b) ops().axpy(-1.0f, g.data(), grad_buf(ib).data(), count);
                    break;
                case Elementwise::mul:
                    if (need_a) {
                        std::vector<float> tmp(count);
                        ops().mul(g.data(), rhs.data(), tmp.data(), count);
                        ops().axpy(1.0f, tmp.data(), grad_buf(ia).data(), count);
                    }
                    if (need_b) {
                        std::vector<float> tmp(count);
                        ops().mul(g.data(), lhs.data(), tmp.data(), count);
                        ops().axpy(1.0f, tmp.data(), grad_buf(ib).data(), count);
                    }
                    break;
                case Elementwise::div: {
                    if (need_a) {
                        std::vector<float> tmp(count);
                        ops().div(g.data(), rhs.data(), tmp.data(), count);
                        ops().axpy(1.0f, tmp.data(), grad_buf(ia).data(), count);
                    }
                    if (need_b) {
                        // d/db (a/b) = -a / b^2
                        const Tensor& outv = nodes_[static_cast<std::size_t>(io)].value;
                        std::vector<float> tmp(count);
                        ops().mul(g.data(), outv.data(), tmp.data(), count);
                        ops().div(tmp.data(), rhs.data(), tmp.data(), count);
                        ops().axpy(-1.0f, tmp.data(), grad_buf(ib).data(), count);
                    }
                    break;
                }
            }
        };
    }
    return result;
}

Var Tape::elementwise(Elementwise op, Var a, float b) {
    check_open("elementwise");
    check_var(a, "elementwise");
    const Tensor& va = val(a);
    const std::size_t n = va.numel();
    Tensor out = Tensor::zeros(va.shape());
    switch (op) {
        case Elementwise::add: ops().add_scalar(va.data(), b, out.data(), n); break;
        case Elementwise::sub: ops().add_scalar(va.data(), -b, out.data(), n); break;
        case Elementwise::mul: ops().mul_scalar(va.data(), b, out.data(), n); break;
        case Elementwise::div:
            if (debug_checks::enabled() && b == 0.0f)
                throw numeric_error("elementwise div: zero divisor");
            ops().div_scalar(va.data(), b, out.data(), n);
            break;
    }
    const bool needs = node_needs(a);
    const Var result{emit(std::move(out), needs, "elementwise")};
    if (needs) {
        const int ia = a.idx, io = result.idx;
        nodes_.back().backprop = [this, op, b, ia, io] {
            const std::vector<float>& g = nodes_[static_cast<std::size_t>(io)].grad;
            const std::size_t count = g.size();
            switch (op) {
                case Elementwise::add:
                case Elementwise::sub:
                    ops().axpy(1.0f, g.data(), grad_buf(ia).data(), count);
                    break;
                case Elementwise::mul:
                    ops().axpy(b, g.data(), grad_buf(ia).data(), count);
                    break;
                case Elementwise::div: {
                    std::vector<float> tmp(count);
                    ops().div_scalar(g.data(), b, tmp.data(), count);
                    ops().axpy(1.0f, tmp.data(), grad_buf(ia).data(), count);
                    break;
                }
            }
        };
    }
    return result;
}

Var Tape::conv2d(Var x, Var w, Var bias) {
    check_open("conv2d");
    check_var(x, "conv2d");
    check_var(w, "conv2d");
    check_var(bias, "conv2d");
    const Tensor& vx = val(x);
    const Tensor& vw = val(w);
    const Tensor& vb = val(bias);
    if (vx.rank() != 4 || vw.rank() != 4 || vb.rank() != 1)
        throw shape_error("conv2d: expected x[N,C,H,W], w[F,C,k,k], bias[F]");
    const std::size_t batch = vx.dim(0), channels = vx.dim(1), height = vx.dim(2),
                      width = vx.dim(3);
    const std::size_t filters = vw.dim(0), ksize = vw.dim(2);
    if (vw.dim(1) != channels)
        throw shape_error("conv2d: channel mismatch, input has " + std::to_string(channels) +
                          ", kernel expects " + std::to_string(vw.dim(1)));
    if (vw.dim(3) != ksize || ksize % 2 == 0)
        throw shape_error("conv2d: kernel must be square with odd size");
    if (vb.dim(0) != filters) throw shape_error("conv2d: bias length != filter count");

    const std::size_t hw = height * width;
    const std::size_t patch = channels * ksize * ksize;
    Tensor out = Tensor::zeros({batch, filters, height, width});
    std::vector<float> col(patch * hw);
    for (std::size_t n = 0; n < batch; ++n) {
        im2col(vx.data() + n * channels * hw, channels, height, width, ksize, col.data());
        float* out_n = out.data() + n * filters * hw;
        ops().matmul(vw.data(), col.data(), out_n, filters, patch, hw);
        for (std::size_t f = 0; f < filters; ++f)
            ops().add_scalar(out_n + f * hw, vb[f], out_n + f * hw, hw);
    }

    const bool needs = node_needs(x) || node_needs(w) || node_needs(bias);
    const Var result{emit(std::move(out), needs, "conv2d")};
    if (needs) {
        const int ix = x.idx, iw = w.idx, ib = bias.idx, io = result.idx;
        nodes_.back().backprop = [this, ix, iw, ib, io, batch, channels, height, width, filters,
                                  ksize] {
            const std::vector<float>& g = nodes_[static_cast<std::size_t>(io)].grad;
            const Tensor& vx2 = nodes_[static_cast<std::size_t>(ix)].value;
            const Tensor& vw2 = nodes_[static_cast<std::size_t>(iw)].value;
            const std::size_t hw = height * width;
            const std::size_t patch = channels * ksize * ksize;
            const bool need_x = nodes_[static_cast<std::size_t>(ix)].needs_grad;
            const bool need_w = nodes_[static_cast<std::size_t>(iw)].needs_grad;
            const bool need_b = nodes_[static_cast<std::size_t>(ib)].needs_grad;
            std::vector<float> col(patch * hw);
            std::vector<float> wt;
            if (need_x) {
                wt.resize(patch * filters);
                transpose(vw2.data(), filters, patch, wt.data());
            }
            std::vector<float> dcol(need_x ? patch * hw : 0);
            for (std::size_t n = 0; n < batch; ++n) {
                const float* g_n = g.data() + n * filters * hw;
                if (need_w)
                    im2col(vx2.data() + n * channels * hw, channels, height, width, ksize,
                           col.data());
                if (need_b) {
                    std::vector<float>& dbias = grad_buf(ib);
                    for (std::size_t f = 0; f < filters; ++f)
                        dbias[f] += static_cast<float>(ops().sum(g_n + f * hw, hw));
                }
                if (need_w)
                    ops().matmul_bt(g_n, col.data(), grad_buf(iw).data(), filters, hw, patch);
                if (need_x) {
                    std::fill(dcol.begin(), dcol.end(), 0.0f);
                    ops().matmul(wt.data(), g_n, dcol.data(), patch, filters, hw);
                    col2im_accum(dcol.data(), channels, height, width, ksize,
                                 grad_buf(ix).data() + n * channels * hw);
                }
            }
        };
    }
    return result;
}

Var Tape::linear(Var x, Var w, Var bias) {
    check_open("linear");
    check_var(x, "linear");
    check_var(w, "linear");
    check_var(bias, "linear");
    const Tensor& vx = val(x);
    const Tensor& vw = val(w);
    const Tensor& vb = val(bias);
    if (vx.rank() != 2 || vw.rank() != 2 || vb.rank() != 1)
        throw shape_error("linear: expected x[N,I], w[O,I], bias[O]");
    const std::size_t batch = vx.dim(0), in_dim = vx.dim(1), out_dim = vw.dim(0);
    if (vw.dim(1) != in_dim || vb.dim(0) != out_dim)
        throw shape_error("linear: dimension mismatch");

    Tensor out = Tensor::zeros({batch, out_dim});
    ops().matmul_bt(vx.data(), vw.data(), out.data(), batch, in_dim, out_dim);
    for (std::size_t n = 0; n < batch; ++n)
        ops().add(out.data() + n * out_dim, vb.data(), out.data() + n * out_dim, out_dim);

    const bool needs = node_needs(x) || node_needs(w) || node_needs(bias);
    const Var result{emit(std::move(out), needs, "linear")};
    if (needs) {
        const int ix = x.idx, iw = w.idx, ib = bias.idx, io = result.idx;
        nodes_.back().backprop = [this, ix, iw, ib, io, batch, in_dim, out_dim] {
            const std::vector<float>& g = nodes_[static_cast<std::size_t>(io)].grad;
            const Tensor& vx2 = nodes_[static_cast<std::size_t>(ix)].value;
            const Tensor& vw2 = nodes_[static_cast<std::size_t>(iw)].value;
            if (nodes_[static_cast<std::size_t>(ix)].needs_grad)
                ops().matmul(g.data(), vw2.data(), grad_buf(ix).data(), batch, out_dim, in_dim);
            if (nodes_[static_cast<std::size_t>(iw)].needs_grad) {
                std::vector<float> gt(out_dim * batch);
                transpose(g.data(), batch, out_dim, gt.data());
                ops().matmul(gt.data(), vx2.data(), grad_buf(iw).data(), out_dim, batch, in_dim);
            }
            if (nodes_[static_cast<std::size_t>(ib)].needs_grad) {
                std::vector<float>& dbias = grad_buf(ib);
                for (std::size_t n = 0; n < batch; ++n)
                    ops().axpy(1.0f, g.data() + n * out_dim, dbias.data(), out_dim);
            }
        };
    }
    return result;
}

Var Tape::gather_rows(Var table, std::vector<int> rows) {
    check_open("gather_rows");
    check_var(table, "gather_rows");
    const Tensor& vt = val(table);
    if (vt.rank() != 2) throw shape_error("gather_rows: table must be [R,E]");
    const std::size_t row_count = vt.dim(0), width = vt.dim(1);
    for (int r : rows)
        if (r < 0 || static_cast<std::size_t>(r) >= row_count)
            throw shape_error("gather_rows: row index out of range");

    Tensor out = Tensor::zeros({rows.size(), width});
    for (std::size_t i = 0; i < rows.size(); ++i)
        std::copy_n(vt.data() + static_cast<std::size_t>(rows[i]) * width, width,
                    out.data() + i * width);

    const bool needs = node_needs(table);
    const Var result{emit(std::move(out), needs, "gather_rows")};
    if (needs) {
        const int it = table.idx, io = result.idx;
        nodes_.back().backprop = [this, it, io, rows = std::move(rows), width] {
            const std::vector<float>& g = nodes_[static_cast<std::size_t>(io)].grad;
            std::vector<float>& dt = grad_buf(it);
            for (std::size_t i = 0; i < rows.size(); ++i)
                ops().axpy(1.0f, g.data() + i * width,
                           dt.data() + static_cast<std::size_t>(rows[i]) * width, width);
        };
    }
    return result;
}

Var Tape::add_channel(Var x, Var s) {
    check_open("add_channel");
    check_var(x, "add_channel");
    check_var(s, "add_channel");
    const Tensor& vx = val(x);
    const Tensor& vs = val(s);
    if (vx.rank() != 4 || vs.rank() != 2 || vs.dim(0) != vx.dim(0) || vs.dim(1) != vx.dim(1))
        throw shape_error("add_channel: expected x[N,C,H,W] and s[N,C]");
    const std::size_t batch = vx.dim(0), channels = vx.dim(1);
    const std::size_t hw = vx.dim(2) * vx.dim(3);

    Tensor out = Tensor::zeros(vx.shape());
    for (std::size_t n = 0; n < batch; ++n)
        for (std::size_t c = 0; c < channels; ++c) {
            const std::size_t off = (n * channels + c) * hw;
            ops().add_scalar(vx.data() + off, vs.at(n, c), out.data() + off, hw);
        }

    const bool needs = node_needs(x) || node_needs(s);
    const Var result{emit(std::move(out), needs, "add_channel")};
    if (needs) {
        const int ix = x.idx, is = s.idx, io = result.idx;
        nodes_.back().backprop = [this, ix, is, io, batch, channels, hw] {
            const std::vector<float>& g = nodes_[static_cast<std::size_t>(io)].grad;
            if (nodes_[static_cast<std::size_t>(ix)].needs_grad)
                ops().axpy(1.0f, g.data(), grad_buf(ix).data(), g.size());
            if (nodes_[static_cast<std::size_t>(is)].needs_grad) {
                std::vector<float>& ds = grad_buf(is);
                for (std::size_t n = 0; n < batch; ++n)
                    for (std::size_t c = 0; c < channels; ++c)
                        ds[n * channels + c] +=
                            static_cast<float>(ops().sum(g.data() + (n * channels + c) * hw, hw));
            }
        };
    }
    return result;
}

Var Tape::avg_pool2(Var x) {
    check_open("avg_pool2");
    check_var(x, "avg_pool2");
    const Tensor& vx = val(x);
    if (vx.rank() != 4) throw shape_error("avg_pool2: expected x[N,C,H,W]");
    const std::size_t batch = vx.dim(0), channels = vx.dim(1), height = vx.dim(2),
                      width = vx.dim(3);
    if (height % 2 != 0 || width % 2 != 0)
        throw shape_error("avg_pool2: spatial dims must be even");
    const std::size_t oh = height / 2, ow = width / 2;

    Tensor out = Tensor::zeros({batch, channels, oh, ow});
    for (std::size_t nc = 0; nc < batch * channels; ++nc) {
        const float* src = vx.data() + nc * height * width;
        float* dst = out.data() + nc * oh * ow;
        for (std::size_t y = 0; y < oh; ++y)
            for (std::size_t xx = 0; xx < ow; ++xx) {
                const float* p = src + 2 * y * width + 2 * xx;
                dst[y * ow + xx] = 0.25f * (p[0] + p[1] + p[width] + p[width + 1]);
            }
    }

    const bool needs = node_needs(x);
    const Var result{emit(std::move(out), needs, "avg_pool2")};
    if (needs) {
        const int ix = x.idx, io = result.idx;
        nodes_.back().backprop = [this, ix, io, batch, channels, height, width, oh, ow] {
            const std::vector<float>& g = nodes_[static_cast<std::size_t>(io)].grad;
            std::vector<float>& dx = grad_buf(ix);
            for (std::size_t nc = 0; nc < batch * channels; ++nc) {
                const float* gsrc = g.data() + nc * oh * ow;
                float* dst = dx.data() + nc * height * width;
                for (std::size_t y = 0; y < oh; ++y)
                    for (std::size_t xx = 0; xx < ow; ++xx) {
                        const float quarter = 0.25f * gsrc[y * ow + xx];
                        float* p = dst + 2 * y * width + 2 * xx;
                        p[0] += quarter;
                        p[1] += quarter;
                        p[width] += quarter;
                        p[width + 1] += quarter;
                    }
            }
        };
    }
    return result;
}

Var Tape::upsample2(Var x) {
    check_open("upsample2");
    check_var(x, "upsample2");
    const Tensor& vx = val(x);
    if (vx.rank() != 4) throw shape_error("upsample2: expected x[N,C,H,W]");
    const std::size_t batch = vx.dim(0), channels = vx.dim(1), height = vx.dim(2),
                      width = vx.dim(3);
    const std::size_t oh = height * 2, ow = width * 2;

    Tensor out = Tensor::zeros({batch, channels, oh, ow});
    for (std::size_t nc = 0; nc < batch * channels; ++nc) {
        const float* src = vx.data() + nc * height * width;
        float* dst = out.data() + nc * oh * ow;
        for (std::size_t y = 0; y < oh; ++y) {
            const float* src_row = src + (y / 2) * width;
            float* dst_row = dst + y * ow;
            for (std::size_t xx = 0; xx < ow; ++xx) dst_row[xx] = src_row[xx / 2];
        }
    }

    const bool needs = node_needs(x);
    const Var result{emit(std::move(out), needs, "upsample2")};
    if (needs) {
        const int ix = x.idx, io = result.idx;
        nodes_.back().backprop = [this, ix, io, batch, channels, height, width, oh, ow] {
            const std::vector<float>& g = nodes_[static_cast<std::size_t>(io)].grad;
            std::vector<float>& dx = grad_buf(ix);
            for (std::size_t nc = 0; nc < batch * channels; ++nc) {
                const float* gsrc = g.data() + nc * oh * ow;
                float* dst = dx.data() + nc * height * width;
                for (std::size_t y = 0; y < oh; ++y) {
                    const float* grow = gsrc + y * ow;
                    float* drow = dst + (y / 2) * width;
                    for (std::size_t xx = 0; xx < ow; ++xx) drow[xx / 2] += grow[xx];
                }
            }
        };
    }
    return result;
}

Var Tape::global_avg_pool(Var x) {
    check_open("global_avg_pool");
    check_var(x, "global_avg_pool");
    const Tensor& vx = val(x);
    if (vx.rank() != 4) throw shape_error("global_avg_pool: expected x[N,C,H,W]");
    const std::size_t batch = vx.dim(0), channels = vx.dim(1);
    const std::size_t hw = vx.dim(2) * vx.dim(3);

    Tensor out = Tensor::zeros({batch, channels});
    for (std::size_t nc = 0; nc < batch * channels; ++nc)
        out[nc] = static_cast<float>(ops().sum(vx.data() + nc * hw, hw) /
                                     static_cast<double>(hw));

    const bool needs = node_needs(x);
    const Var result{emit(std::move(out), needs, "global_avg_pool")};
    if (needs) {
        const int ix = x.idx, io = result.idx;
        nodes_.back().backprop = [this, ix, io, batch, channels, hw] {
            const std::vector<float>& g = nodes_[static_cast<std::size_t>(io)].grad;
            std::vector<float>& dx = grad_buf(ix);
            const float inv = 1.0f / static_cast<float>(hw);
            for (std::size_t nc = 0; nc < batch * channels; ++nc)
                ops().add_scalar(dx.data() + nc * hw, g[nc] * inv, dx.data() + nc * hw, hw);
        };
    }
    return result;
}

Var Tape::sum(Var x) {
    check_open("sum");
    check_var(x, "sum");
    const Tensor& vx = val(x);
    Tensor out = Tensor::scalar(static_cast<float>(ops().sum(vx.data(), vx.numel())));
    const bool needs = node_needs(x);
    const Var result{emit(std::move(out), needs, "sum")};
    if (needs) {
        const int ix = x.idx, io = result.idx;
        nodes_.back().backprop = [this, ix, io] {
            const float g0 = nodes_[static_cast<std::size_t>(io)].grad[0];
            std::vector<float>& dx = grad_buf(ix);
            ops().add_scalar(dx.data(), g0, dx.data(), dx.size());
        };
    }
    return result;
}

Var Tape::mean(Var x) {
    check_open("mean");
    check_var(x, "mean");
    const Tensor& vx = val(x);
    const std::size_t n = vx.numel();
    Tensor out =
        Tensor::scalar(static_cast<float>(ops().sum(vx.data(), n) / static_cast<double>(n)));
    const bool needs = node_needs(x);
    const Var result{emit(std::move(out), needs, "mean")};
    if (needs) {
        const int ix = x.idx, io = result.idx;
        nodes_.back().backprop = [this, ix, io, n] {
            const float g0 = nodes_[static_cast<std::size_t>(io)].grad[0] / static_cast<float>(n);
            std::vector<float>& dx = grad_buf(ix);
            ops().add_scalar(dx.data(), g0, dx.data(), dx.size());
        };
    }
    return result;
}

Var Tape::silu(Var x) {
    check_open("silu");
    check_var(x, "silu");
    const Tensor& vx = val(x);
    Tensor out = Tensor::zeros(vx.shape());
    ops().silu(vx.data(), out.data(), vx.numel());
    const bool needs = node_needs(x);
    const Var result{emit(std::move(out), needs, "silu")};
    if (needs) {
        const int ix = x.idx, io = result.idx;
        nodes_.back().backprop = [this, ix, io] {
            const std::vector<float>& g = nodes_[static_cast<std::size_t>(io)].grad;
            const Tensor& vx2 = nodes_[static_cast<std::size_t>(ix)].value;
            ops().silu_grad(vx2.data(), g.data(), grad_buf(ix).data(), g.size());
        };
    }
    return result;
}

Var Tape::relu(Var x) {
    check_open("relu");
    check_var(x, "relu");
    const Tensor& vx = val(x);
    Tensor out = Tensor::zeros(vx.shape());
    ops().relu(vx.data(), out.data(), vx.numel());
    const bool needs = node_needs(x);
    const Var result{emit(std::move(out), needs, "relu")};
    if (needs) {
        const int ix = x.idx, io = result.idx;
        nodes_.back().backprop = [this, ix, io] {
            const std::vector<float>& g = nodes_[static_cast<std::size_t>(io)].grad;
            const Tensor& vx2 = nodes_[static_cast<std::size_t>(ix)].value;
            ops().relu_grad(vx2.data(), g.data(), grad_buf(ix).data(), g.size());
        };
    }
    return result;
}

Var Tape::log_softmax(Var x) {
    check_open("log_softmax");
    check_var(x, "log_softmax");
    const Tensor& vx = val(x);
    if (vx.rank() == 0) throw shape_error("log_softmax: needs at least one axis");
    const std::size_t width = vx.shape().back();
    const std::size_t rows = vx.numel() / width;

    Tensor out = Tensor::zeros(vx.shape());
    for (std::size_t r = 0; r < rows; ++r) {
        const float* src = vx.data() + r * width;
        float* dst = out.data() + r * width;
        float max_v = src[0];
        for (std::size_t i = 1; i < width; ++i) max_v = std::max(max_v, src[i]);
        double acc = 0.0;
        for (std::size_t i = 0; i < width; ++i) acc += std::exp(static_cast<double>(src[i] - max_v));
        const float lse = max_v + static_cast<float>(std::log(acc));
        for (std::size_t i = 0; i < width; ++i) dst[i] = src[i] - lse;
    }

    const bool needs = node_needs(x);
    const Var result{emit(std::move(out), needs, "log_softmax")};
    if (needs) {
        const int ix = x.idx, io = result.idx;
        nodes_.back().backprop = [this, ix, io, rows, width] {
            const std::vector<float>& g = nodes_[static_cast<std::size_t>(io)].grad;
            const Tensor& outv = nodes_[static_cast<std::size_t>(io)].value;
            std::vector<float>& dx = grad_buf(ix);
            for (std::size_t r = 0; r < rows; ++r) {
                const float* grow = g.data() + r * width;
                const float* orow = outv.data() + r * width;
                float* drow = dx.data() + r * width;
                const double gsum = ops().sum(grow, width);
                for (std::size_t i = 0; i < width; ++i)
                    drow[i] += grow[i] - static_cast<float>(std::exp(static_cast<double>(orow[i])) * gsum);
            }
        };
    }
    return result;
}

Var Tape::nll(Var log_probs, std::vector<int> labels) {
    check_open("nll");
    check_var(log_probs, "nll");
    const Tensor& vp = val(log_probs);
    if (vp.rank() != 2) throw shape_error("nll: expected log_probs[N,K]");
    const std::size_t batch = vp.dim(0), classes = vp.dim(1);
    if (labels.size() != batch) throw shape_error("nll: one label per row required");
    for (int y : labels)
        if (y < 0 || static_cast<std::size_t>(y) >= classes)
            throw shape_error("nll: label out of range");

    double acc = 0.0;
    for (std::size_t n = 0; n < batch; ++n)
        acc += static_cast<double>(vp.at(n, static_cast<std::size_t>(labels[n])));
    Tensor out = Tensor::scalar(static_cast<float>(-acc / static_cast<double>(batch)));

    const bool needs = node_needs(log_probs);
    const Var result{emit(std::move(out), needs, "nll")};
    if (needs) {
        const int ip = log_probs.idx, io = result.idx;
        nodes_.back().backprop = [this, ip, io, labels = std::move(labels), classes] {
            const float g0 = nodes_[static_cast<std::size_t>(io)].grad[0];
            std::vector<float>& dp = grad_buf(ip);
            const float scale = -g0 / static_cast<float>(labels.size());
            for (std::size_t n = 0; n < labels.size(); ++n)
                dp[n * classes + static_cast<std::size_t>(labels[n])] += scale;
        };
    }
    return result;
}

const Tensor& Tape::value(Var v) const {
    check_var(v, "value");
    return nodes_[static_cast<std::size_t>(v.idx)].value;
}

const std::vector<float>& Tape::grad(Var v) const {
    check_var(v, "grad");
    return nodes_[static_cast<std::size_t>(v.idx)].grad;
}

void Tape::backward(Var loss) {
    check_var(loss, "backward");
    if (consumed_) throw numeric_error("backward: tape already consumed");
    if (nodes_.empty()) throw numeric_error("backward: empty tape");
    const Tensor& lv = val(loss);
    if (lv.numel() != 1)
        throw shape_error("backward: loss must be scalar, got " + shape_str(lv.shape()));

    grad_buf(loss.idx)[0] = 1.0f;
    for (std::size_t i = nodes_.size(); i-- > 0;) {
        Node& node = nodes_[i];
        if (node.grad.empty()) continue;
        if (node.backprop) node.backprop();
        if (node.bound) {
            std::vector<float>& target = node.bound->grad();
            ops().axpy(1.0f, node.grad.data(), target.data(), target.size());
        }
    }
    for (Node& node : nodes_) node.backprop = nullptr;
    consumed_ = true;
}

} // namespace cdiff
