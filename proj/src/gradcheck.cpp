#include "sinkgan/gradcheck.hpp"

#include <cmath>
#include <sstream>

namespace sinkgan {

std::string FdReport::describe() const {
    std::ostringstream os;
    os << "max rel err " << max_rel_err << " at input " << worst_input << " elem " << worst_index
       << " (analytic " << analytic << ", numeric " << numeric << ")";
    return os.str();
}

FdReport check_fn_gradients(const std::function<double(const std::vector<Tensor>&)>& f,
                            const std::vector<Tensor>& at, const std::vector<Tensor>& analytic,
                            double step, double zero_floor, size_t max_elements_per_input) {
    FdReport rep;
    std::vector<Tensor> work = at;
    for (size_t t = 0; t < at.size(); ++t) {
        const size_t n = at[t].numel();
        size_t stride = 1;
        if (max_elements_per_input > 0 && n > max_elements_per_input) {
            stride = (n + max_elements_per_input - 1) / max_elements_per_input;
        }
        for (size_t i = 0; i < n; i += stride) {
            const double orig = work[t][i];
            work[t][i] = orig + step;
            const double fp = f(work);
            work[t][i] = orig - step;
            const double fm = f(work);
            work[t][i] = orig;
            const double numeric = (fp - fm) / (2.0 * step);
            const double a = analytic[t][i];
            const double denom = std::max({std::fabs(a), std::fabs(numeric), zero_floor});
            const double rel = std::fabs(a - numeric) / denom;
            if (rel > rep.max_rel_err) {
                rep.max_rel_err = rel;
                rep.worst_input = t;
                rep.worst_index = i;
                rep.analytic = a;
                rep.numeric = numeric;
            }
        }
    }
    return rep;
}

FdReport check_graph_gradients(const GraphBuilder& build, const std::vector<Tensor>& inputs,
                               double step, double zero_floor, size_t max_elements_per_input) {
    Tape tape;
    std::vector<Var> leaves;
    leaves.reserve(inputs.size());
    for (const Tensor& in : inputs) leaves.push_back(tape.leaf(in, true));
    Var loss = build(tape, leaves);
    tape.backward(loss);

    std::vector<Tensor> analytic;
    analytic.reserve(leaves.size());
    for (const Var& v : leaves) analytic.push_back(v.grad());

    auto f = [&](const std::vector<Tensor>& xs) {
        Tape t2;
        std::vector<Var> ls;
        ls.reserve(xs.size());
        for (const Tensor& x : xs) ls.push_back(t2.leaf(x, false));
        return build(t2, ls).value()[0];
    };
    return check_fn_gradients(f, inputs, analytic, step, zero_floor, max_elements_per_input);
}

}  // namespace sinkgan
