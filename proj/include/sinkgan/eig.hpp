#pragma once

#include "sinkgan/tensor.hpp"

namespace sinkgan {

/// Eigendecomposition of a symmetric matrix. Eigenvalues ascending, columns of
/// `eigenvectors` paired with them, orthonormal. Deterministic sign convention:
/// the first component of each eigenvector with magnitude > 1e-12 is positive.
struct EigenDecomposition {
    Tensor eigenvalues;   // [N]
    Tensor eigenvectors;  // [N x N], columns

    /// Column k as an [N] tensor.
    Tensor eigenvector(size_t k) const;
};

/// Cyclic Jacobi rotations. Input must satisfy ||m - m^T||_inf <= 1e-9 * ||m||_inf
/// (SymmetryError otherwise). Converges when the off-diagonal Frobenius norm
/// drops below 1e-12 * ||m||_F; capped at 100 sweeps (ConvergenceError reports
/// the residual).
EigenDecomposition sym_eig(const Tensor& m);

}  // namespace sinkgan
