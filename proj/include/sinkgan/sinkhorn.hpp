#pragma once

#include <functional>
#include <span>
#include <vector>

#include "sinkgan/autodiff.hpp"
#include "sinkgan/tensor.hpp"

namespace sinkgan {

/// Discrete entropic OT problem between weighted point masses.
struct TransportProblem {
    Tensor source_weights;  // [n], simplex
    Tensor target_weights;  // [m], simplex
    Tensor cost;            // [n x m], nonnegative finite
    double epsilon = 0.1;
    int max_iters = 10;

    void validate() const;
};

struct TransportSolution {
    Tensor phi;       // [n] dual potential
    Tensor psi;       // [m] dual potential
    Tensor coupling;  // [n x m]
    double cost_value = 0.0;  // transport cost + epsilon * mutual information
    int iterations_used = 0;
    double marginal_residual = 0.0;  // max |marginal - weight|, both sides
};

/// Pairwise cost matrix: entry (i,j) = ||xs_i - ys_j||^exponent, exponent in [1,2].
Tensor cost_matrix(const Tensor& xs, const Tensor& ys, double exponent);

/// Log-domain (softmin) alternating dual updates; runs exactly max_iters
/// iterations or until the marginal residual drops below 1e-9, whichever is
/// first. Deterministic. NaN in any intermediate raises NumericalError with
/// the iteration index.
TransportSolution solve_eot(const TransportProblem& p);

/// Debiased divergence W(mu,nu) - W(mu,mu)/2 - W(nu,nu)/2, all three terms
/// solved under identical (epsilon, max_iters, exponent). Solver errors are
/// rethrown tagged with the failing term.
double sinkhorn_divergence(const Tensor& xs, const Tensor& ys, const Tensor& weights_x,
                           const Tensor& weights_y, double epsilon, int max_iters,
                           double exponent);

/// d/dxs_i of C(xs_i, ys_j), written into grad_out (length d).
using CostJacobian = std::function<void(size_t i, size_t j, std::span<double> grad_out)>;

CostJacobian point_cost_jacobian(const Tensor& xs, const Tensor& ys, double exponent);

/// Gradient of cost_value w.r.t. source atom positions holding the coupling
/// fixed: E_pi[grad C]. Requires a converged solution (marginal residual
/// <= 1e-6), else StalenessError.
Tensor eot_gradient(const TransportProblem& p, const TransportSolution& solution,
                    const CostJacobian& cost_jacobian, size_t n, size_t d);

/// Gradient of the full divergence w.r.t. xs. When include_self_term is set
/// (default, faithful to the debiased definition) the W(mu,mu) term
/// contributes through both cost slots; otherwise it is treated as detached.
Tensor sinkhorn_divergence_gradient(const Tensor& xs, const Tensor& ys, const Tensor& weights_x,
                                    const Tensor& weights_y, double epsilon, int max_iters,
                                    double exponent, bool include_self_term = true);

/// Direct expectation formula for the epsilon -> infinity limit of the
/// divergence (energy-distance form with kernel -C).
double mmd_divergence(const Tensor& xs, const Tensor& ys, const Tensor& weights_x,
                      const Tensor& weights_y, double exponent);

/// Differentiable parametrization theta -> point cloud for the theory probes.
struct ParametricFamily {
    size_t theta_dim = 0;
    std::function<Tensor(const Tensor& theta)> atoms;  // theta -> [n x d]
    // Chain rule: dS/datoms -> dS/dtheta.
    std::function<Tensor(const Tensor& theta, const Tensor& atom_grad)> pullback;
};

/// Rigid translation of a fixed cloud; theta_dim = point dimension.
ParametricFamily translation_family(Tensor base_atoms);

struct SmoothnessRow {
    double epsilon = 0.0;
    double lipschitz_estimate = 0.0;
};

/// Empirical gradient-Lipschitz estimate of the divergence in theta: max over
/// `trials` random close pairs of ||grad(theta1) - grad(theta2)|| / ||theta1 -
/// theta2||, per epsilon. Deterministic for a given seed. trials >= 10.
std::vector<SmoothnessRow> smoothness_probe(const ParametricFamily& family,
                                            const Tensor& target_atoms,
                                            const Tensor& target_weights,
                                            const std::vector<double>& epsilons, int trials,
                                            uint64_t seed, int max_iters, double exponent);

/// Tape op: divergence between variable prediction atoms [n x d] and fixed
/// target atoms [m x d] under uniform weights; backward uses the analytic
/// coupling gradient.
Var ot_divergence_loss(const Var& pred_atoms, const Tensor& target_atoms, double epsilon,
                       int max_iters, double exponent, bool self_term_gradient = true);

namespace sinkhorn_stats {
uint64_t solve_calls();
void reset();
}  // namespace sinkhorn_stats

}  // namespace sinkgan
