#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace cdiff {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major f32 array. External data is validated finite at
// construction; results of recorded ops are re-checked when debug checks are
// on. The optional grad buffer always mirrors the value shape.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape);
    static Tensor full(Shape shape, float value);
    static Tensor from_data(Shape shape, std::vector<float> data);
    static Tensor scalar(float value) { return full({1}, value); }

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t i) const { return shape_[i]; }
    std::size_t numel() const { return data_.size(); }
    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }
    std::span<float> values() { return data_; }
    std::span<const float> values() const { return data_; }

    float& operator[](std::size_t i) { return data_[i]; }
    float operator[](std::size_t i) const { return data_[i]; }

    // Row-major addressing for the common ranks.
    float& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
    float at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
    float& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
        return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
    }
    float at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
        return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
    }

    bool requires_grad() const { return requires_grad_; }
    void set_requires_grad(bool on);
    std::vector<float>& grad();
    const std::vector<float>& grad() const;
    void zero_grad();

private:
    Shape shape_;
    std::vector<float> data_;
    std::vector<float> grad_;
    bool requires_grad_ = false;
};

// Throws numeric_error naming `where` if any element is NaN/Inf.
void check_finite(std::span<const float> values, const char* where);
void check_finite(const Tensor& t, const char* where);

// Runtime switch for the per-op NaN/Inf sentinel. Defaults on in debug
// builds, off under NDEBUG.
namespace debug_checks {
bool enabled();
void set_enabled(bool on);
}

} // namespace cdiff
