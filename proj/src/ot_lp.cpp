#include "sinkgan/ot_lp.hpp"

#include <cmath>
#include <vector>

namespace sinkgan {

namespace {

// Dense simplex on a tableau with Bland's rule (anti-cycling). Rows are the
// constraints, the last row holds reduced costs, the last column the rhs.
class SimplexTableau {
public:
    SimplexTableau(size_t rows, size_t cols) : r_(rows), c_(cols), t_((rows + 1) * (cols + 1), 0.0) {}

    double& at(size_t i, size_t j) { return t_[i * (c_ + 1) + j]; }
    double at(size_t i, size_t j) const { return t_[i * (c_ + 1) + j]; }
    double& rhs(size_t i) { return t_[i * (c_ + 1) + c_]; }
    double& obj(size_t j) { return t_[r_ * (c_ + 1) + j]; }
    double& obj_rhs() { return t_[r_ * (c_ + 1) + c_]; }

    void pivot(size_t pr, size_t pc) {
        const double pv = at(pr, pc);
        for (size_t j = 0; j <= c_; ++j) t_[pr * (c_ + 1) + j] /= pv;
        for (size_t i = 0; i <= r_; ++i) {
            if (i == pr) continue;
            const double f = t_[i * (c_ + 1) + pc];
            if (f == 0.0) continue;
            for (size_t j = 0; j <= c_; ++j) t_[i * (c_ + 1) + j] -= f * t_[pr * (c_ + 1) + j];
        }
    }

    // Returns false when no entering column remains (optimal).
    bool iterate(const std::vector<bool>& allowed, std::vector<size_t>& basis) {
        const double eps = 1e-11;
        size_t enter = c_;
        for (size_t j = 0; j < c_; ++j) {
            if (allowed[j] && obj(j) < -eps) {
                enter = j;
                break;  // Bland: smallest index
            }
        }
        if (enter == c_) return false;

        size_t leave = r_;
        double best = 0.0;
        for (size_t i = 0; i < r_; ++i) {
            const double a = at(i, enter);
            if (a > eps) {
                const double ratio = rhs(i) / a;
                if (leave == r_ || ratio < best - eps ||
                    (std::fabs(ratio - best) <= eps && basis[i] < basis[leave])) {
                    leave = i;
                    best = ratio;
                }
            }
        }
        if (leave == r_) throw NumericalError("simplex: unbounded transport LP");
        pivot(leave, enter);
        basis[leave] = enter;
        return true;
    }

    size_t rows() const { return r_; }
    size_t cols() const { return c_; }

private:
    size_t r_, c_;
    std::vector<double> t_;
};

}  // namespace

double lp_transport_cost(const Tensor& cost, const Tensor& source_weights,
                         const Tensor& target_weights) {
    const size_t n = source_weights.numel();
    const size_t m = target_weights.numel();
    if (cost.rank() != 2 || cost.dim(0) != n || cost.dim(1) != m) {
        throw DimensionError("lp_transport_cost: cost " + cost.shape_str() + " vs weights " +
                             std::to_string(n) + "/" + std::to_string(m));
    }

    const size_t nv = n * m;            // transport variables
    const size_t rows = n + m;          // marginal constraints (one redundant)
    const size_t cols = nv + rows;      // plus artificials

    SimplexTableau t(rows, cols);
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = 0; j < m; ++j) t.at(i, i * m + j) = 1.0;
        t.rhs(i) = source_weights[i];
    }
    for (size_t j = 0; j < m; ++j) {
        for (size_t i = 0; i < n; ++i) t.at(n + j, i * m + j) = 1.0;
        t.rhs(n + j) = target_weights[j];
    }
    std::vector<size_t> basis(rows);
    for (size_t i = 0; i < rows; ++i) {
        t.at(i, nv + i) = 1.0;
        basis[i] = nv + i;
    }

    // Phase 1: minimize the artificial sum. Objective row = -sum(constraint rows)
    // restricted to non-artificial columns.
    for (size_t j = 0; j < nv; ++j) {
        double s = 0.0;
        for (size_t i = 0; i < rows; ++i) s += t.at(i, j);
        t.obj(j) = -s;
    }
    double rhs_sum = 0.0;
    for (size_t i = 0; i < rows; ++i) rhs_sum += t.rhs(i);
    t.obj_rhs() = -rhs_sum;

    std::vector<bool> allowed(cols, true);
    while (t.iterate(allowed, basis)) {
    }
    if (std::fabs(t.obj_rhs()) > 1e-8) {
        throw NumericalError("simplex: infeasible transport problem (unbalanced weights?)");
    }

    // Phase 2: real costs; artificial columns may not re-enter.
    for (size_t j = 0; j < cols; ++j) t.obj(j) = 0.0;
    t.obj_rhs() = 0.0;
    for (size_t j = 0; j < nv; ++j) t.obj(j) = cost[j];
    for (size_t i = 0; i < rows; ++i) {
        const size_t bj = basis[i];
        const double cb = bj < nv ? cost[bj] : 0.0;
        if (cb == 0.0) continue;
        for (size_t j = 0; j <= cols; ++j) {
            const double v = (j == cols) ? t.rhs(i) : t.at(i, j);
            if (j == cols) {
                t.obj_rhs() -= cb * v;
            } else {
                t.obj(j) -= cb * v;
            }
        }
    }
    for (size_t j = nv; j < cols; ++j) allowed[j] = false;
    while (t.iterate(allowed, basis)) {
    }

    double value = 0.0;
    for (size_t i = 0; i < rows; ++i) {
        if (basis[i] < nv) value += cost[basis[i]] * t.rhs(i);
    }
    return value;
}

}  // namespace sinkgan
