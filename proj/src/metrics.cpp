#include "cdiff/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cdiff/errors.hpp"

namespace cdiff {

BinaryMask BinaryMask::zeros(std::size_t height, std::size_t width) {
    BinaryMask m;
    m.height = height;
    m.width = width;
    m.data.assign(height * width, 0);
    return m;
}

std::size_t BinaryMask::count() const {
    std::size_t n = 0;
    for (std::uint8_t v : data) n += v != 0;
    return n;
}

double otsu_threshold(const Tensor& map, int bins) {
    if (bins < 2) throw numeric_error("otsu: need at least 2 bins");
    if (map.numel() == 0) throw shape_error("otsu: empty map");

    float lo = map[0], hi = map[0];
    for (std::size_t i = 1; i < map.numel(); ++i) {
        lo = std::min(lo, map[i]);
        hi = std::max(hi, map[i]);
    }
    if (lo < -1e-6f || hi > 1.0f + 1e-6f)
        throw numeric_error("otsu: map values must lie in [0,1]");
    if (lo == hi) return static_cast<double>(lo); // degenerate histogram

    std::vector<double> hist(static_cast<std::size_t>(bins), 0.0);
    for (std::size_t i = 0; i < map.numel(); ++i) {
        const double v = std::min(std::max(static_cast<double>(map[i]), 0.0), 1.0);
        const int b = std::min(bins - 1, static_cast<int>(v * bins));
        hist[static_cast<std::size_t>(b)] += 1.0;
    }
    const double total = static_cast<double>(map.numel());
    double total_mean = 0.0;
    for (int b = 0; b < bins; ++b)
        total_mean += (static_cast<double>(b) + 0.5) / bins * hist[static_cast<std::size_t>(b)];
    total_mean /= total;

    // Split after bin k: background bins 0..k, foreground k+1..bins-1.
    double best_score = -1.0;
    int best_k = 0;
    double w0 = 0.0, sum0 = 0.0;
    for (int k = 0; k + 1 < bins; ++k) {
        const double center = (static_cast<double>(k) + 0.5) / bins;
        w0 += hist[static_cast<std::size_t>(k)];
        sum0 += center * hist[static_cast<std::size_t>(k)];
        const double w1 = total - w0;
        if (w0 == 0.0 || w1 == 0.0) continue;
        const double mu0 = sum0 / w0;
        const double mu1 = (total_mean * total - sum0) / w1;
        const double score = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
        if (score > best_score) {
            best_score = score;
            best_k = k;
        }
    }
    return static_cast<double>(best_k + 1) / bins;
}

BinaryMask threshold_map(const Tensor& map, double threshold) {
    std::size_t height = 0, width = 0;
    if (map.rank() == 2) {
        height = map.dim(0);
        width = map.dim(1);
    } else if (map.rank() == 3 && map.dim(0) == 1) {
        height = map.dim(1);
        width = map.dim(2);
    } else if (map.rank() == 4 && map.dim(0) == 1 && map.dim(1) == 1) {
        height = map.dim(2);
        width = map.dim(3);
    } else {
        throw shape_error("threshold_map: expected a single-channel 2D map, got " +
                          shape_str(map.shape()));
    }
    BinaryMask out = BinaryMask::zeros(height, width);
    for (std::size_t i = 0; i < height * width; ++i)
        out.data[i] = static_cast<double>(map[i]) > threshold ? 1 : 0;
    return out;
}

namespace {

void check_same_shape(const BinaryMask& a, const BinaryMask& b, const char* where) {
    if (!a.same_shape(b)) throw shape_error(std::string(where) + ": mask shape mismatch");
}

} // namespace

double dice(const BinaryMask& a, const BinaryMask& b) {
    check_same_shape(a, b, "dice");
    std::size_t inter = 0, ca = 0, cb = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const bool va = a.data[i] != 0, vb = b.data[i] != 0;
        inter += va && vb;
        ca += va;
        cb += vb;
    }
    if (ca + cb == 0) return 1.0;
    return 2.0 * static_cast<double>(inter) / static_cast<double>(ca + cb);
}

double iou(const BinaryMask& a, const BinaryMask& b) {
    check_same_shape(a, b, "iou");
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const bool va = a.data[i] != 0, vb = b.data[i] != 0;
        inter += va && vb;
        uni += va || vb;
    }
    if (uni == 0) return 1.0;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

BinaryMask boundary(const BinaryMask& mask) {
    BinaryMask out = BinaryMask::zeros(mask.height, mask.width);
    for (std::size_t y = 0; y < mask.height; ++y)
        for (std::size_t x = 0; x < mask.width; ++x) {
            if (!mask.at(y, x)) continue;
            const bool edge = y == 0 || y + 1 == mask.height || x == 0 || x + 1 == mask.width;
            const bool inner = !edge && mask.at(y - 1, x) && mask.at(y + 1, x) &&
                               mask.at(y, x - 1) && mask.at(y, x + 1);
            if (edge || !inner) out.set(y, x, true);
        }
    return out;
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
// Finite stand-in for "no feature here"; keeps the envelope intersections
// finite while dwarfing any real squared pixel distance.
constexpr double kFar = 1e12;

// 1D lower envelope of parabolas (exact squared distance transform).
// f must be finite everywhere.
void dt1d(const std::vector<double>& f, std::vector<double>& d, std::vector<int>& v,
          std::vector<double>& z, std::size_t n) {
    auto intersect = [&f](int q, int p) {
        return ((f[static_cast<std::size_t>(q)] + static_cast<double>(q) * q) -
                (f[static_cast<std::size_t>(p)] + static_cast<double>(p) * p)) /
               (2.0 * q - 2.0 * p);
    };
    int k = 0;
    v[0] = 0;
    z[0] = -kInf;
    z[1] = kInf;
    for (int q = 1; q < static_cast<int>(n); ++q) {
        double s = intersect(q, v[static_cast<std::size_t>(k)]);
        while (s <= z[static_cast<std::size_t>(k)]) {
            --k;
            s = intersect(q, v[static_cast<std::size_t>(k)]);
        }
        ++k;
        v[static_cast<std::size_t>(k)] = q;
        z[static_cast<std::size_t>(k)] = s;
        z[static_cast<std::size_t>(k) + 1] = kInf;
    }
    k = 0;
    for (int q = 0; q < static_cast<int>(n); ++q) {
        while (z[static_cast<std::size_t>(k) + 1] < static_cast<double>(q)) ++k;
        const int p = v[static_cast<std::size_t>(k)];
        d[static_cast<std::size_t>(q)] =
            static_cast<double>(q - p) * (q - p) + f[static_cast<std::size_t>(p)];
    }
}

} // namespace

std::vector<double> squared_distance_transform(const std::vector<std::uint8_t>& feature,
                                               std::size_t height, std::size_t width) {
    std::vector<double> dist(height * width);
    for (std::size_t i = 0; i < height * width; ++i) dist[i] = feature[i] ? 0.0 : kFar;

    const std::size_t n = std::max(height, width);
    std::vector<double> f(n), d(n), z(n + 1);
    std::vector<int> v(n);

    // Columns first, then rows.
    for (std::size_t x = 0; x < width; ++x) {
        for (std::size_t y = 0; y < height; ++y) f[y] = dist[y * width + x];
        dt1d(f, d, v, z, height);
        for (std::size_t y = 0; y < height; ++y) dist[y * width + x] = d[y];
    }
    for (std::size_t y = 0; y < height; ++y) {
        for (std::size_t x = 0; x < width; ++x) f[x] = dist[y * width + x];
        dt1d(f, d, v, z, width);
        for (std::size_t x = 0; x < width; ++x) dist[y * width + x] = d[x];
    }
    return dist;
}

double hd95(const BinaryMask& a, const BinaryMask& b) {
    check_same_shape(a, b, "hd95");
    if (a.empty_mask() || b.empty_mask())
        throw empty_mask_error("hd95: both masks must be nonempty");

    const BinaryMask ba = boundary(a);
    const BinaryMask bb = boundary(b);
    const std::vector<double> dist_to_a =
        squared_distance_transform(ba.data, a.height, a.width);
    const std::vector<double> dist_to_b =
        squared_distance_transform(bb.data, b.height, b.width);

    std::vector<double> pooled;
    for (std::size_t i = 0; i < ba.data.size(); ++i) {
        if (ba.data[i]) pooled.push_back(std::sqrt(dist_to_b[i]));
        if (bb.data[i]) pooled.push_back(std::sqrt(dist_to_a[i]));
    }
    std::sort(pooled.begin(), pooled.end());
    // Nearest-rank percentile over the pooled multiset.
    const std::size_t rank = static_cast<std::size_t>(
        std::ceil(0.95 * static_cast<double>(pooled.size())));
    return pooled[std::max<std::size_t>(rank, 1) - 1];
}

} // namespace cdiff
