#include "sinkgan/eig.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace sinkgan {

Tensor EigenDecomposition::eigenvector(size_t k) const {
    size_t n = eigenvalues.numel();
    Tensor v({n});
    for (size_t i = 0; i < n; ++i) v[i] = eigenvectors.at(i, k);
    return v;
}

static double offdiag_frobenius(const Tensor& a) {
    size_t n = a.dim(0);
    double s = 0.0;
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j)
            if (i != j) s += a.at(i, j) * a.at(i, j);
    return std::sqrt(s);
}

EigenDecomposition sym_eig(const Tensor& m) {
    if (m.rank() != 2 || m.dim(0) != m.dim(1)) {
        throw DimensionError("sym_eig expects a square matrix, got " + m.shape_str());
    }
    const size_t n = m.dim(0);

    double max_asym = 0.0;
    for (size_t i = 0; i < n; ++i)
        for (size_t j = i + 1; j < n; ++j)
            max_asym = std::max(max_asym, std::fabs(m.at(i, j) - m.at(j, i)));
    if (max_asym > 1e-9 * std::max(m.max_abs(), 1e-300)) {
        throw SymmetryError("sym_eig input not symmetric: max asymmetry " +
                            std::to_string(max_asym));
    }

    Tensor a = m;
    // Force exact symmetry so rotations stay clean.
    for (size_t i = 0; i < n; ++i)
        for (size_t j = i + 1; j < n; ++j) {
            double v = 0.5 * (a.at(i, j) + a.at(j, i));
            a.at(i, j) = v;
            a.at(j, i) = v;
        }

    Tensor v = Tensor::identity(n);
    const double norm = std::max(a.frobenius_norm(), 1e-300);
    const double tol = 1e-12 * norm;
    const int max_sweeps = 100;

    bool converged = offdiag_frobenius(a) <= tol;
    for (int sweep = 0; sweep < max_sweeps && !converged; ++sweep) {
        for (size_t p = 0; p + 1 < n; ++p) {
            for (size_t q = p + 1; q < n; ++q) {
                double apq = a.at(p, q);
                if (std::fabs(apq) < 1e-300) continue;
                double app = a.at(p, p);
                double aqq = a.at(q, q);
                double tau = (aqq - app) / (2.0 * apq);
                double t = (tau >= 0.0 ? 1.0 : -1.0) /
                           (std::fabs(tau) + std::sqrt(1.0 + tau * tau));
                double c = 1.0 / std::sqrt(1.0 + t * t);
                double s = t * c;

                for (size_t i = 0; i < n; ++i) {
                    double aip = a.at(i, p);
                    double aiq = a.at(i, q);
                    a.at(i, p) = c * aip - s * aiq;
                    a.at(i, q) = s * aip + c * aiq;
                }
                for (size_t j = 0; j < n; ++j) {
                    double apj = a.at(p, j);
                    double aqj = a.at(q, j);
                    a.at(p, j) = c * apj - s * aqj;
                    a.at(q, j) = s * apj + c * aqj;
                }
                for (size_t i = 0; i < n; ++i) {
                    double vip = v.at(i, p);
                    double viq = v.at(i, q);
                    v.at(i, p) = c * vip - s * viq;
                    v.at(i, q) = s * vip + c * viq;
                }
            }
        }
        converged = offdiag_frobenius(a) <= tol;
    }
    if (!converged) {
        throw ConvergenceError("sym_eig did not converge in 100 sweeps, off-diagonal residual " +
                               std::to_string(offdiag_frobenius(a)));
    }

    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](size_t x, size_t y) { return a.at(x, x) < a.at(y, y); });

    EigenDecomposition out;
    out.eigenvalues = Tensor({n});
    out.eigenvectors = Tensor({n, n});
    for (size_t k = 0; k < n; ++k) {
        size_t src = order[k];
        out.eigenvalues[k] = a.at(src, src);
        double sign = 1.0;
        for (size_t i = 0; i < n; ++i) {
            if (std::fabs(v.at(i, src)) > 1e-12) {
                sign = v.at(i, src) > 0.0 ? 1.0 : -1.0;
                break;
            }
        }
        for (size_t i = 0; i < n; ++i) out.eigenvectors.at(i, k) = sign * v.at(i, src);
    }
    return out;
}

}  // namespace sinkgan
