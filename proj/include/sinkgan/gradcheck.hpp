#pragma once

#include <functional>
#include <string>
#include <vector>

#include "sinkgan/autodiff.hpp"

namespace sinkgan {

/// Builds a scalar loss from tape leaves bound to the given inputs.
using GraphBuilder = std::function<Var(Tape&, const std::vector<Var>&)>;

struct FdReport {
    double max_rel_err = 0.0;
    size_t worst_input = 0;
    size_t worst_index = 0;
    double analytic = 0.0;
    double numeric = 0.0;

    bool pass(double tol) const { return max_rel_err <= tol; }
    std::string describe() const;
};

/// Central finite differences against the tape gradient, elementwise over every
/// input tensor. Relative error uses max(|analytic|, |numeric|, zero_floor) as
/// the denominator; the floor keeps exactly-zero gradients from tripping on
/// rounding noise. `max_elements_per_input` == 0 checks every element,
/// otherwise a deterministic stride sample.
FdReport check_graph_gradients(const GraphBuilder& build, const std::vector<Tensor>& inputs,
                               double step = 1e-5, double zero_floor = 1e-6,
                               size_t max_elements_per_input = 0);

/// Same comparison for an externally supplied scalar function and analytic
/// gradients (used for the OT path, where the gradient is not tape-produced).
FdReport check_fn_gradients(const std::function<double(const std::vector<Tensor>&)>& f,
                            const std::vector<Tensor>& at, const std::vector<Tensor>& analytic,
                            double step = 1e-5, double zero_floor = 1e-6,
                            size_t max_elements_per_input = 0);

}  // namespace sinkgan
