#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace cdiff {

// Philox4x32-10 counter-based generator. Output is a pure function of
// (seed, stream, counter), so independent streams can be handed to parallel
// workers and every draw is reproducible across platforms. Normal variates
// come from a Box-Muller transform of the uniform stream.
class Philox {
public:
    using block_type = std::array<std::uint32_t, 4>;
    using key_type = std::array<std::uint32_t, 2>;

    explicit Philox(std::uint64_t seed, std::uint64_t stream = 0)
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
          stream_lo_(static_cast<std::uint32_t>(stream)),
          stream_hi_(static_cast<std::uint32_t>(stream >> 32)) {}

    // One application of the 10-round bijection on a raw counter/key pair.
    static block_type block(block_type counter, key_type key) {
        for (int round = 0; round < 10; ++round) {
            const std::uint64_t p0 = std::uint64_t{0xD2511F53u} * counter[0];
            const std::uint64_t p1 = std::uint64_t{0xCD9E8D57u} * counter[2];
            const block_type next = {
                static_cast<std::uint32_t>(p1 >> 32) ^ counter[1] ^ key[0],
                static_cast<std::uint32_t>(p1),
                static_cast<std::uint32_t>(p0 >> 32) ^ counter[3] ^ key[1],
                static_cast<std::uint32_t>(p0),
            };
            counter = next;
            key[0] += 0x9E3779B9u;
            key[1] += 0xBB67AE85u;
        }
        return counter;
    }

    std::uint32_t next_u32() {
        if (buf_pos_ == 4) {
            buf_ = block({counter_lo(), counter_hi(), stream_lo_, stream_hi_}, key_);
            ++block_index_;
            buf_pos_ = 0;
        }
        return buf_[buf_pos_++];
    }

    // Uniform on the open interval (0,1); never returns an exact 0 or 1.
    double uniform() {
        return (static_cast<double>(next_u32()) + 0.5) * 0x1p-32;
    }

    // Standard normal draw.
    double normal() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        const double u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * 3.14159265358979323846 * u2;
        cached_ = r * std::sin(a);
        have_cached_ = true;
        return r * std::cos(a);
    }

    float normal_f32() { return static_cast<float>(normal()); }

private:
    std::uint32_t counter_lo() const { return static_cast<std::uint32_t>(block_index_); }
    std::uint32_t counter_hi() const { return static_cast<std::uint32_t>(block_index_ >> 32); }

    key_type key_;
    std::uint32_t stream_lo_ = 0;
    std::uint32_t stream_hi_ = 0;
    std::uint64_t block_index_ = 0;
    block_type buf_{};
    int buf_pos_ = 4;
    double cached_ = 0.0;
    bool have_cached_ = false;
};

} // namespace cdiff
