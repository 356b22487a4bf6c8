#include "cdiff/tensor.hpp"

#include <atomic>
#include <cmath>
#include <sstream>

#include "cdiff/errors.hpp"

namespace cdiff {

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

namespace {

void validate_shape(const Shape& shape) {
    for (std::size_t d : shape) {
        if (d == 0) throw shape_error("tensor extents must be positive, got " + shape_str(shape));
    }
}

} // namespace

Tensor Tensor::zeros(Shape shape) {
    validate_shape(shape);
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_.assign(shape_numel(t.shape_), 0.0f);
    return t;
}

Tensor Tensor::full(Shape shape, float value) {
    validate_shape(shape);
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_.assign(shape_numel(t.shape_), value);
    check_finite(t, "Tensor::full");
    return t;
}

Tensor Tensor::from_data(Shape shape, std::vector<float> data) {
    validate_shape(shape);
    if (shape_numel(shape) != data.size()) {
        throw shape_error("data length " + std::to_string(data.size()) +
                          " does not match shape " + shape_str(shape));
    }
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = std::move(data);
    check_finite(t, "Tensor::from_data");
    return t;
}

void Tensor::set_requires_grad(bool on) {
    requires_grad_ = on;
    if (on) {
        grad_.assign(data_.size(), 0.0f);
    } else {
        grad_.clear();
    }
}

std::vector<float>& Tensor::grad() {
    if (!requires_grad_) throw numeric_error("grad() called on tensor without requires_grad");
    return grad_;
}

const std::vector<float>& Tensor::grad() const {
    if (!requires_grad_) throw numeric_error("grad() called on tensor without requires_grad");
    return grad_;
}

void Tensor::zero_grad() {
    if (requires_grad_) grad_.assign(data_.size(), 0.0f);
}

void check_finite(std::span<const float> values, const char* where) {
    for (float v : values) {
        if (!std::isfinite(v)) {
            throw numeric_error(std::string("non-finite value in ") + where);
        }
    }
}

void check_finite(const Tensor& t, const char* where) { check_finite(t.values(), where); }

namespace debug_checks {

namespace {
std::atomic<bool>& flag() {
#ifdef NDEBUG
    static std::atomic<bool> value{false};
#else
    static std::atomic<bool> value{true};
#endif
    return value;
}
} // namespace

bool enabled() { return flag().load(std::memory_order_relaxed); }
void set_enabled(bool on) { flag().store(on, std::memory_order_relaxed); }

} // namespace debug_checks

} // namespace cdiff
