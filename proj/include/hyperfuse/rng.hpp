#pragma once

#include "hyperfuse/tensor.hpp"

#include <cstdint>

namespace hyperfuse {

// SplitMix64 (Steele, Lea, Flood 2014). Substreams are derived by hashing the
// parent state with a stream id, so `split(k)` is stable across platforms.
class SplitMix64 {
public:
    static constexpr const char* kAlgorithm = "splitmix64";

    explicit SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

    std::uint64_t next() noexcept {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1) from the top 53 bits.
    double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

    std::uint64_t below(std::uint64_t bound) noexcept { return bound ? next() % bound : 0; }

    SplitMix64 split(std::uint64_t stream) const noexcept {
        SplitMix64 mixer(state_ ^ (0xD1B54A32D192ED03ULL * (stream + 1)));
        return SplitMix64(mixer.next());
    }

private:
    std::uint64_t state_;
};

Tensor uniform_tensor(SplitMix64& rng, const Shape& shape, double lo, double hi, bool requires_grad = false);

// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
Tensor fan_in_init(SplitMix64& rng, const Shape& shape, std::size_t fan_in);

}  // namespace hyperfuse
