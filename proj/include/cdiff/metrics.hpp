#pragma once

#include <cstdint>
#include <vector>

#include "cdiff/tensor.hpp"

namespace cdiff {

// 2D boolean grid with the same extent as its source image.
struct BinaryMask {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint8_t> data; // row-major, 0/1

    static BinaryMask zeros(std::size_t height, std::size_t width);
    bool at(std::size_t y, std::size_t x) const { return data[y * width + x] != 0; }
    void set(std::size_t y, std::size_t x, bool v) {
        data[y * width + x] = v ? std::uint8_t{1} : std::uint8_t{0};
    }
    std::size_t count() const;
    bool empty_mask() const { return count() == 0; }
    bool same_shape(const BinaryMask& other) const {
        return height == other.height && width == other.width;
    }
};

// Histogram threshold maximizing between-class variance. `map` must hold
// values in [0,1]; a constant map returns that constant. The returned value
// is the upper edge of the chosen background bin, so `value > threshold`
// selects the foreground.
double otsu_threshold(const Tensor& map, int bins = 256);

// map interpreted as [H,W], [1,H,W] or [1,1,H,W]; pixels strictly above the
// threshold become foreground.
BinaryMask threshold_map(const Tensor& map, double threshold);

// 2|A∩B| / (|A|+|B|); both masks empty gives 1.
double dice(const BinaryMask& a, const BinaryMask& b);
// |A∩B| / |A∪B|; both masks empty gives 1.
double iou(const BinaryMask& a, const BinaryMask& b);

// 95th percentile (nearest-rank) of the pooled two-direction boundary
// distance multiset, in Euclidean pixel units. Boundary pixels are mask
// pixels with a 4-neighbour outside the mask (image border counts as
// outside). Throws empty_mask_error if either mask is empty.
double hd95(const BinaryMask& a, const BinaryMask& b);

// Exact squared Euclidean distance transform of the feature set marked by
// nonzero entries. Exposed for verification against the pairwise oracle.
std::vector<double> squared_distance_transform(const std::vector<std::uint8_t>& feature,
                                               std::size_t height, std::size_t width);

// Boundary pixels as defined for hd95.
BinaryMask boundary(const BinaryMask& mask);

} // namespace cdiff
