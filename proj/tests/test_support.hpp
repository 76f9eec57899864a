#pragma once

#include <doctest.h>

#include "sinkgan/tensor.hpp"

namespace testutil {

using sinkgan::Rng;
using sinkgan::Tensor;

inline Tensor rand_tensor(std::vector<size_t> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

// Independent triple-loop product, no shared code with the library kernels.
inline Tensor matmul_oracle(const Tensor& a, const Tensor& b) {
    Tensor c({a.dim(0), b.dim(1)});
    for (size_t i = 0; i < a.dim(0); ++i)
        for (size_t j = 0; j < b.dim(1); ++j) {
            double s = 0.0;
            for (size_t k = 0; k < a.dim(1); ++k) s += a.at(i, k) * b.at(k, j);
            c.at(i, j) = s;
        }
    return c;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    REQUIRE(a.same_shape(b));
    double m = 0.0;
    for (size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
    return m;
}

}  // namespace testutil
