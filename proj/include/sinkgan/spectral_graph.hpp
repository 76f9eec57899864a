#pragma once

#include "sinkgan/autodiff.hpp"
#include "sinkgan/eig.hpp"
#include "sinkgan/tensor.hpp"

namespace sinkgan {

/// Similarity graph over node features with its normalized Laplacian and
/// ascending eigendecomposition. Immutable after build.
struct SpectralGraph {
    Tensor node_matrix;  // [N x F]
    Tensor adjacency;    // [N x N], conditioned
    Tensor laplacian;    // [N x N]
    EigenDecomposition eig;

    static SpectralGraph build(const Tensor& nodes, const Tensor& w1, const Tensor& w2);
    size_t size() const { return adjacency.dim(0); }
};

/// Raw similarity S_ij = <nodes_i w1, nodes_j w2>, conditioned into a valid
/// adjacency: relu((S + S^T)/2) + 1e-6 I.
Tensor build_adjacency(const Tensor& nodes, const Tensor& w1, const Tensor& w2);
/// Differentiable version of the same construction.
Var build_adjacency(const Var& nodes, const Var& w1, const Var& w2);

/// I - D^{-1/2} A D^{-1/2}. Adjacency must be symmetric nonnegative with
/// positive row sums (DegenerateDegreeError otherwise).
Tensor normalized_laplacian(const Tensor& adjacency);

/// Graph Fourier transform of a [N x F'] signal: P^T X; igft is P X.
Tensor gft(const SpectralGraph& g, const Tensor& signal);
Tensor igft(const SpectralGraph& g, const Tensor& signal);

/// High-pass filter: zeroes the k lowest-frequency eigencomponents,
/// X_bar = P_bar P_bar^T X with P_bar = columns k..N-1. k = 0 returns the
/// signal unchanged. 0 <= k <= N-1.
Tensor highpass_filter(const SpectralGraph& g, size_t k);
Tensor highpass_apply(const SpectralGraph& g, const Tensor& signal, size_t k);
/// Tape version; the eigenvectors are constants of the forward graph, so the
/// gradient flows through the signal only (adjacency path excluded).
Var highpass_apply(const SpectralGraph& g, const Var& signal, size_t k);

/// Columns k..N-1 of the eigenvector matrix, shape [N x (N-k)].
Tensor high_projector_columns(const SpectralGraph& g, size_t k);

}  // namespace sinkgan
