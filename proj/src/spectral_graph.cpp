#include "sinkgan/spectral_graph.hpp"

#include <cmath>

namespace sinkgan {

namespace {

void check_nodes_weights(const Tensor& nodes, const Tensor& w1, const Tensor& w2) {
    if (nodes.rank() != 2) {
        throw DimensionError("build_adjacency expects [N x F] nodes, got " + nodes.shape_str());
    }
    const size_t f = nodes.dim(1);
    if (w1.rank() != 2 || w1.dim(0) != f || w1.dim(1) != f || w2.rank() != 2 ||
        w2.dim(0) != f || w2.dim(1) != f) {
        throw DimensionError("build_adjacency weights must be [F x F] with F=" +
                             std::to_string(f) + ", got " + w1.shape_str() + " and " +
                             w2.shape_str());
    }
}

}  // namespace

Tensor build_adjacency(const Tensor& nodes, const Tensor& w1, const Tensor& w2) {
    check_nodes_weights(nodes, w1, w2);
    const Tensor s = matmul(matmul(nodes, w1), transpose2d(matmul(nodes, w2)));
    const size_t n = nodes.dim(0);
    Tensor a({n, n});
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = 0; j < n; ++j) {
            const double sym = 0.5 * (s.at(i, j) + s.at(j, i));
            a.at(i, j) = sym > 0.0 ? sym : 0.0;
        }
        a.at(i, i) += 1e-6;
    }
    return a;
}

Var build_adjacency(const Var& nodes, const Var& w1, const Var& w2) {
    check_nodes_weights(nodes.value(), w1.value(), w2.value());
    const size_t n = nodes.value().dim(0);
    Var s = matmul(matmul(nodes, w1), transpose(matmul(nodes, w2)));
    Var sym = mul_scalar(add(s, transpose(s)), 0.5);
    Var clamped = relu(sym);
    return add(clamped, nodes.tape->constant(scale(Tensor::identity(n), 1e-6)));
}

Tensor normalized_laplacian(const Tensor& adjacency) {
    if (adjacency.rank() != 2 || adjacency.dim(0) != adjacency.dim(1)) {
        throw DimensionError("normalized_laplacian expects square adjacency, got " +
                             adjacency.shape_str());
    }
    const size_t n = adjacency.dim(0);
    std::vector<double> dinv(n);
    for (size_t i = 0; i < n; ++i) {
        double deg = 0.0;
        for (size_t j = 0; j < n; ++j) {
            const double v = adjacency.at(i, j);
            if (v < 0.0 || !std::isfinite(v)) {
                throw ContractError("adjacency entries must be nonnegative and finite");
            }
            if (std::fabs(v - adjacency.at(j, i)) > 1e-9 * std::max(1.0, adjacency.max_abs())) {
                throw SymmetryError("adjacency must be symmetric");
            }
            deg += v;
        }
        if (deg <= 0.0) {
            throw DegenerateDegreeError("zero-degree node " + std::to_string(i) +
                                        " in normalized_laplacian");
        }
        dinv[i] = 1.0 / std::sqrt(deg);
    }
    Tensor l({n, n});
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = 0; j <= i; ++j) {
            const double v = (i == j ? 1.0 : 0.0) - dinv[i] * adjacency.at(i, j) * dinv[j];
            l.at(i, j) = v;
            l.at(j, i) = v;
        }
    }
    return l;
}

SpectralGraph SpectralGraph::build(const Tensor& nodes, const Tensor& w1, const Tensor& w2) {
    SpectralGraph g;
    g.node_matrix = nodes;
    g.adjacency = build_adjacency(nodes, w1, w2);
    g.laplacian = normalized_laplacian(g.adjacency);
    g.eig = sym_eig(g.laplacian);
    return g;
}

namespace {

void check_signal(const SpectralGraph& g, const Tensor& signal) {
    if (signal.rank() != 2 || signal.dim(0) != g.size()) {
        throw DimensionError("graph signal must be [N x F'] with N=" + std::to_string(g.size()) +
                             ", got " + signal.shape_str());
    }
}

}  // namespace

Tensor gft(const SpectralGraph& g, const Tensor& signal) {
    check_signal(g, signal);
    return matmul(transpose2d(g.eig.eigenvectors), signal);
}

Tensor igft(const SpectralGraph& g, const Tensor& signal) {
    check_signal(g, signal);
    return matmul(g.eig.eigenvectors, signal);
}

Tensor high_projector_columns(const SpectralGraph& g, size_t k) {
    const size_t n = g.size();
    if (k > n - 1) {
        throw ContractError("highpass cutoff k=" + std::to_string(k) + " out of range for N=" +
                            std::to_string(n));
    }
    Tensor p({n, n - k});
    for (size_t i = 0; i < n; ++i)
        for (size_t j = k; j < n; ++j) p.at(i, j - k) = g.eig.eigenvectors.at(i, j);
    return p;
}

Tensor highpass_apply(const SpectralGraph& g, const Tensor& signal, size_t k) {
    check_signal(g, signal);
    if (k >= g.size()) {
        throw ContractError("highpass cutoff k=" + std::to_string(k) + " out of range for N=" +
                            std::to_string(g.size()));
    }
    if (k == 0) return signal;
    const Tensor pbar = high_projector_columns(g, k);
    return matmul(pbar, matmul(transpose2d(pbar), signal));
}

Tensor highpass_filter(const SpectralGraph& g, size_t k) {
    return highpass_apply(g, g.node_matrix, k);
}

Var highpass_apply(const SpectralGraph& g, const Var& signal, size_t k) {
    check_signal(g, signal.value());
    if (k >= g.size()) {
        throw ContractError("highpass cutoff k=" + std::to_string(k) + " out of range for N=" +
                            std::to_string(g.size()));
    }
    if (k == 0) return signal;
    const Tensor pbar = high_projector_columns(g, k);
    return matmul_const(pbar, matmul_const(transpose2d(pbar), signal));
}

}  // namespace sinkgan
