#pragma once

#include <cmath>

#include "lnmdet/rng.hpp"
#include "lnmdet/tensor.hpp"

namespace lnmdet {

// He initialization: zero-mean normal with variance 2 / fan_in. For conv
// weights [F, C, kh, kw] the fan-in is C * kh * kw.
template <typename T>
void he_init(Tensor<T>& w, Rng& rng) {
    require(w.rank() >= 2, ErrorCategory::shape, "he_init needs a weight tensor of rank >= 2");
    std::int64_t fan_in = 1;
    for (int i = 1; i < w.rank(); ++i) fan_in *= w.dim(i);
    const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (auto& v : w.data) v = static_cast<T>(rng.normal(0.0, stddev));
}

}  // namespace lnmdet
