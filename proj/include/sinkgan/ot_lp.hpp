#pragma once

#include "sinkgan/tensor.hpp"

namespace sinkgan {

/// Exact optimum of the unregularized transport LP
///   min sum_ij C_ij x_ij  s.t.  row sums = a, col sums = b, x >= 0
/// via a dense two-phase simplex with Bland's rule. Intended for small
/// problems (n, m <= ~16); used as the reference for the entropic solver.
double lp_transport_cost(const Tensor& cost, const Tensor& source_weights,
                         const Tensor& target_weights);

}  // namespace sinkgan
