#include "hyperfuse/rng.hpp"

#include "hyperfuse/error.hpp"

#include <cmath>

namespace hyperfuse {

Tensor uniform_tensor(SplitMix64& rng, const Shape& shape, double lo, double hi, bool requires_grad) {
    std::vector<double> data(shape_numel(shape));
    for (auto& v : data) v = rng.uniform(lo, hi);
    return Tensor(shape, std::move(data), requires_grad);
}

Tensor fan_in_init(SplitMix64& rng, const Shape& shape, std::size_t fan_in) {
    if (fan_in == 0) throw Error(ErrorKind::InvalidConfig, "fan_in must be positive");
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    return uniform_tensor(rng, shape, -bound, bound, true);
}

}  // namespace hyperfuse
