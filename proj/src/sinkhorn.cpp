#include "sinkgan/sinkhorn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>

namespace sinkgan {

namespace sinkhorn_stats {
namespace {
uint64_t calls = 0;
}
uint64_t solve_calls() { return calls; }
void reset() { calls = 0; }
}  // namespace sinkhorn_stats

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void check_simplex(const Tensor& w, const char* name) {
    double s = 0.0;
    for (size_t i = 0; i < w.numel(); ++i) {
        if (!(w[i] >= 0.0)) {
            throw ContractError(std::string(name) + " weights must be nonnegative");
        }
        s += w[i];
    }
    if (std::fabs(s - 1.0) > 1e-12) {
        throw ContractError(std::string(name) + " weights must sum to 1, got " +
                            std::to_string(s));
    }
}

double logsumexp(const std::vector<double>& terms) {
    double m = kNegInf;
    for (double t : terms) m = std::max(m, t);
    if (m == kNegInf) return kNegInf;
    double s = 0.0;
    for (double t : terms) s += std::exp(t - m);
    return m + std::log(s);
}

}  // namespace

void TransportProblem::validate() const {
    const size_t n = source_weights.numel();
    const size_t m = target_weights.numel();
    if (cost.rank() != 2 || cost.dim(0) != n || cost.dim(1) != m) {
        throw DimensionError("transport cost " + cost.shape_str() + " inconsistent with weights " +
                             std::to_string(n) + "/" + std::to_string(m));
    }
    check_simplex(source_weights, "source");
    check_simplex(target_weights, "target");
    for (size_t i = 0; i < cost.numel(); ++i) {
        if (!std::isfinite(cost[i]) || cost[i] < 0.0) {
            throw ContractError("cost entries must be nonnegative and finite");
        }
    }
    if (!(epsilon > 0.0)) throw ContractError("epsilon must be positive");
    if (max_iters < 1) throw ContractError("max_iters must be >= 1");
}

Tensor cost_matrix(const Tensor& xs, const Tensor& ys, double exponent) {
    if (xs.rank() != 2 || ys.rank() != 2 || xs.dim(1) != ys.dim(1)) {
        throw DimensionError("cost_matrix: point dims disagree, " + xs.shape_str() + " vs " +
                             ys.shape_str());
    }
    if (exponent < 1.0 || exponent > 2.0) {
        throw ContractError("cost exponent must lie in [1, 2]");
    }
    const size_t n = xs.dim(0), m = ys.dim(0), d = xs.dim(1);
    Tensor c({n, m});
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = 0; j < m; ++j) {
            double s = 0.0;
            for (size_t k = 0; k < d; ++k) {
                const double diff = xs.at(i, k) - ys.at(j, k);
                s += diff * diff;
            }
            const double r = std::sqrt(s);
            c.at(i, j) = exponent == 2.0 ? s : std::pow(r, exponent);
        }
    }
    return c;
}

TransportSolution solve_eot(const TransportProblem& p) {
    p.validate();
    ++sinkhorn_stats::calls;

    const size_t n = p.source_weights.numel();
    const size_t m = p.target_weights.numel();
    const double eps = p.epsilon;

    std::vector<double> loga(n), logb(m);
    for (size_t i = 0; i < n; ++i) loga[i] = p.source_weights[i] > 0.0 ? std::log(p.source_weights[i]) : kNegInf;
    for (size_t j = 0; j < m; ++j) logb[j] = p.target_weights[j] > 0.0 ? std::log(p.target_weights[j]) : kNegInf;

    Tensor phi({n}), psi({m});
    auto residual_of = [&](const Tensor& f, const Tensor& g) {
        // Marginals of the coupling induced by the current potentials.
        double worst = 0.0;
        std::vector<double> colsum(m, 0.0);
        for (size_t i = 0; i < n; ++i) {
            double rowsum = 0.0;
            if (p.source_weights[i] > 0.0) {
                for (size_t j = 0; j < m; ++j) {
                    if (p.target_weights[j] <= 0.0) continue;
                    const double pi = p.source_weights[i] * p.target_weights[j] *
                                      std::exp((f[i] + g[j] - p.cost.at(i, j)) / eps);
                    rowsum += pi;
                    colsum[j] += pi;
                }
            }
            worst = std::max(worst, std::fabs(rowsum - p.source_weights[i]));
        }
        for (size_t j = 0; j < m; ++j) worst = std::max(worst, std::fabs(colsum[j] - p.target_weights[j]));
        return worst;
    };

    int used = 0;
    double residual = residual_of(phi, psi);
    std::vector<double> terms(std::max(n, m));
    for (int it = 0; it < p.max_iters && residual > 1e-9; ++it) {
        opcount::add(3 * static_cast<uint64_t>(n) * m);  // two softmin sweeps + residual pass
        for (size_t i = 0; i < n; ++i) {
            terms.resize(m);
            for (size_t j = 0; j < m; ++j) terms[j] = logb[j] + (psi[j] - p.cost.at(i, j)) / eps;
            phi[i] = -eps * logsumexp(terms);
        }
        for (size_t j = 0; j < m; ++j) {
            terms.resize(n);
            for (size_t i = 0; i < n; ++i) terms[i] = loga[i] + (phi[i] - p.cost.at(i, j)) / eps;
            psi[j] = -eps * logsumexp(terms);
        }
        ++used;
        for (size_t i = 0; i < n; ++i) {
            if (std::isnan(phi[i])) {
                throw NumericalError("solve_eot: NaN in phi at iteration " + std::to_string(used));
            }
        }
        for (size_t j = 0; j < m; ++j) {
            if (std::isnan(psi[j])) {
                throw NumericalError("solve_eot: NaN in psi at iteration " + std::to_string(used));
            }
        }
        residual = residual_of(phi, psi);
    }

    TransportSolution sol;
    sol.phi = phi;
    sol.psi = psi;
    sol.iterations_used = used;
    sol.marginal_residual = residual;
    sol.coupling = Tensor({n, m});
    double transport = 0.0, info = 0.0;
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = 0; j < m; ++j) {
            const double ab = p.source_weights[i] * p.target_weights[j];
            if (ab <= 0.0) continue;
            const double pi = ab * std::exp((phi[i] + psi[j] - p.cost.at(i, j)) / eps);
            sol.coupling.at(i, j) = pi;
            transport += pi * p.cost.at(i, j);
            if (pi > 0.0) info += pi * std::log(pi / ab);  // 0 log 0 := 0
        }
    }
    sol.cost_value = transport + eps * info;
    if (std::isnan(sol.cost_value)) {
        throw NumericalError("solve_eot: NaN cost value after " + std::to_string(used) +
                             " iterations");
    }
    return sol;
}

namespace {

TransportSolution solve_pair(const Tensor& xs, const Tensor& ys, const Tensor& wx,
                             const Tensor& wy, double epsilon, int max_iters, double exponent,
                             const char* term) {
    TransportProblem p;
    p.source_weights = wx;
    p.target_weights = wy;
    p.cost = cost_matrix(xs, ys, exponent);
    p.epsilon = epsilon;
    p.max_iters = max_iters;
    try {
        return solve_eot(p);
    } catch (const NumericalError& e) {
        throw NumericalError(std::string("sinkhorn_divergence ") + term + ": " + e.what());
    }
}

}  // namespace

double sinkhorn_divergence(const Tensor& xs, const Tensor& ys, const Tensor& weights_x,
                           const Tensor& weights_y, double epsilon, int max_iters,
                           double exponent) {
    const double wxy =
        solve_pair(xs, ys, weights_x, weights_y, epsilon, max_iters, exponent, "cross term")
            .cost_value;
    const double wxx =
        solve_pair(xs, xs, weights_x, weights_x, epsilon, max_iters, exponent, "source self-term")
            .cost_value;
    const double wyy =
        solve_pair(ys, ys, weights_y, weights_y, epsilon, max_iters, exponent, "target self-term")
            .cost_value;
    return wxy - 0.5 * wxx - 0.5 * wyy;
}

CostJacobian point_cost_jacobian(const Tensor& xs, const Tensor& ys, double exponent) {
    const size_t d = xs.dim(1);
    return [xs, ys, exponent, d](size_t i, size_t j, std::span<double> out) {
        double s = 0.0;
        for (size_t k = 0; k < d; ++k) {
            const double diff = xs.at(i, k) - ys.at(j, k);
            out[k] = diff;
            s += diff * diff;
        }
        if (exponent == 2.0) {
            for (size_t k = 0; k < d; ++k) out[k] *= 2.0;
            return;
        }
        const double r = std::sqrt(s);
        const double coef = r > 0.0 ? exponent * std::pow(r, exponent - 2.0) : 0.0;
        for (size_t k = 0; k < d; ++k) out[k] *= coef;
    };
}

Tensor eot_gradient(const TransportProblem& p, const TransportSolution& solution,
                    const CostJacobian& cost_jacobian, size_t n, size_t d) {
    if (solution.marginal_residual > 1e-6) {
        throw StalenessError("eot_gradient: stale solution, marginal residual " +
                             std::to_string(solution.marginal_residual));
    }
    const size_t m = p.target_weights.numel();
    Tensor grad({n, d});
    std::vector<double> buf(d);
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = 0; j < m; ++j) {
            const double pi = solution.coupling.at(i, j);
            if (pi == 0.0) continue;
            cost_jacobian(i, j, buf);
            for (size_t k = 0; k < d; ++k) grad.at(i, k) += pi * buf[k];
        }
    }
    return grad;
}

namespace {

// Adds w * E_pi[grad C] for the problem (xs -> ys); `slot` selects which cost
// argument the derivative is taken in (0: xs positions, 1: ys positions); the
// gradient always accumulates into the xs-indexed rows for slot 0 and the
// ys-indexed rows for slot 1.
void accumulate_coupling_grad(Tensor& acc, const TransportSolution& sol, const Tensor& xs,
                              const Tensor& ys, double exponent, int slot, double w) {
    const size_t n = xs.dim(0), m = ys.dim(0), d = xs.dim(1);
    std::vector<double> buf(d);
    auto jac = point_cost_jacobian(xs, ys, exponent);
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = 0; j < m; ++j) {
            const double pi = sol.coupling.at(i, j);
            if (pi == 0.0) continue;
            jac(i, j, buf);
            if (slot == 0) {
                for (size_t k = 0; k < d; ++k) acc.at(i, k) += w * pi * buf[k];
            } else {
                // d/dy ||x-y||^p = -d/dx ||x-y||^p
                for (size_t k = 0; k < d; ++k) acc.at(j, k) -= w * pi * buf[k];
            }
        }
    }
}

}  // namespace

Tensor sinkhorn_divergence_gradient(const Tensor& xs, const Tensor& ys, const Tensor& weights_x,
                                    const Tensor& weights_y, double epsilon, int max_iters,
                                    double exponent, bool include_self_term) {
    Tensor grad({xs.dim(0), xs.dim(1)});
    const TransportSolution cross =
        solve_pair(xs, ys, weights_x, weights_y, epsilon, max_iters, exponent, "cross term");
    accumulate_coupling_grad(grad, cross, xs, ys, exponent, 0, 1.0);
    if (include_self_term) {
        const TransportSolution self = solve_pair(xs, xs, weights_x, weights_x, epsilon,
                                                  max_iters, exponent, "source self-term");
        accumulate_coupling_grad(grad, self, xs, xs, exponent, 0, -0.5);
        accumulate_coupling_grad(grad, self, xs, xs, exponent, 1, -0.5);
    }
    return grad;
}

double mmd_divergence(const Tensor& xs, const Tensor& ys, const Tensor& weights_x,
                      const Tensor& weights_y, double exponent) {
    auto expect = [&](const Tensor& u, const Tensor& v, const Tensor& wu, const Tensor& wv) {
        const Tensor c = cost_matrix(u, v, exponent);
        double s = 0.0;
        for (size_t i = 0; i < u.dim(0); ++i)
            for (size_t j = 0; j < v.dim(0); ++j) s += wu[i] * wv[j] * c.at(i, j);
        return s;
    };
    return expect(xs, ys, weights_x, weights_y) - 0.5 * expect(xs, xs, weights_x, weights_x) -
           0.5 * expect(ys, ys, weights_y, weights_y);
}

ParametricFamily translation_family(Tensor base_atoms) {
    if (base_atoms.rank() != 2) {
        throw DimensionError("translation_family expects [n x d] atoms");
    }
    const size_t d = base_atoms.dim(1);
    ParametricFamily fam;
    fam.theta_dim = d;
    fam.atoms = [base = base_atoms](const Tensor& theta) {
        Tensor out = base;
        for (size_t i = 0; i < base.dim(0); ++i)
            for (size_t k = 0; k < base.dim(1); ++k) out.at(i, k) += theta[k];
        return out;
    };
    fam.pullback = [d](const Tensor&, const Tensor& atom_grad) {
        Tensor g({d});
        for (size_t i = 0; i < atom_grad.dim(0); ++i)
            for (size_t k = 0; k < d; ++k) g[k] += atom_grad.at(i, k);
        return g;
    };
    return fam;
}

std::vector<SmoothnessRow> smoothness_probe(const ParametricFamily& family,
                                            const Tensor& target_atoms,
                                            const Tensor& target_weights,
                                            const std::vector<double>& epsilons, int trials,
                                            uint64_t seed, int max_iters, double exponent) {
    if (trials < 10) throw ContractError("smoothness_probe requires trials >= 10");
    const size_t n_atoms = family.atoms(Tensor({family.theta_dim})).dim(0);
    Tensor wx = Tensor::full({n_atoms}, 1.0 / static_cast<double>(n_atoms));

    std::vector<SmoothnessRow> rows;
    for (double eps : epsilons) {
        double worst = 0.0;
        for (int trial = 0; trial < trials; ++trial) {
            Rng rng(mix_seed(seed, static_cast<uint64_t>(trial)));
            Tensor theta1({family.theta_dim});
            for (size_t k = 0; k < family.theta_dim; ++k) theta1[k] = rng.uniform(-0.5, 0.5);
            Tensor delta({family.theta_dim});
            double norm = 0.0;
            for (size_t k = 0; k < family.theta_dim; ++k) {
                delta[k] = rng.gaussian();
                norm += delta[k] * delta[k];
            }
            norm = std::sqrt(norm);
            const double step = 0.01 * rng.uniform(0.1, 1.0);
            for (size_t k = 0; k < family.theta_dim; ++k) delta[k] *= step / norm;
            Tensor theta2 = theta1;
            for (size_t k = 0; k < family.theta_dim; ++k) theta2[k] += delta[k];

            auto grad_at = [&](const Tensor& theta) {
                const Tensor atoms = family.atoms(theta);
                const Tensor ag = sinkhorn_divergence_gradient(atoms, target_atoms, wx,
                                                               target_weights, eps, max_iters,
                                                               exponent, true);
                return family.pullback(theta, ag);
            };
            const Tensor g1 = grad_at(theta1);
            const Tensor g2 = grad_at(theta2);
            double diff = 0.0;
            for (size_t k = 0; k < family.theta_dim; ++k) {
                const double dg = g1[k] - g2[k];
                diff += dg * dg;
            }
            worst = std::max(worst, std::sqrt(diff) / step);
        }
        rows.push_back({eps, worst});
    }
    return rows;
}

Var ot_divergence_loss(const Var& pred_atoms, const Tensor& target_atoms, double epsilon,
                       int max_iters, double exponent, bool self_term_gradient) {
    const Tensor& xs = pred_atoms.value();
    if (xs.rank() != 2 || target_atoms.rank() != 2 || xs.dim(1) != target_atoms.dim(1)) {
        throw DimensionError("ot_divergence_loss: atom shapes " + xs.shape_str() + " vs " +
                             target_atoms.shape_str());
    }
    const size_t n = xs.dim(0), m = target_atoms.dim(0);
    Tensor wx = Tensor::full({n}, 1.0 / static_cast<double>(n));
    Tensor wy = Tensor::full({m}, 1.0 / static_cast<double>(m));

    const TransportSolution cross =
        solve_pair(xs, target_atoms, wx, wy, epsilon, max_iters, exponent, "cross term");
    const TransportSolution self_x =
        solve_pair(xs, xs, wx, wx, epsilon, max_iters, exponent, "source self-term");
    const TransportSolution self_y = solve_pair(target_atoms, target_atoms, wy, wy, epsilon,
                                                max_iters, exponent, "target self-term");
    const double value = cross.cost_value - 0.5 * self_x.cost_value - 0.5 * self_y.cost_value;

    // The coupling gradient is computed eagerly so backward needs no re-solve.
    auto atom_grad = std::make_shared<Tensor>(Tensor::zeros({n, xs.dim(1)}));
    accumulate_coupling_grad(*atom_grad, cross, xs, target_atoms, exponent, 0, 1.0);
    if (self_term_gradient) {
        accumulate_coupling_grad(*atom_grad, self_x, xs, xs, exponent, 0, -0.5);
        accumulate_coupling_grad(*atom_grad, self_x, xs, xs, exponent, 1, -0.5);
    }

    Tape& t = *pred_atoms.tape;
    const int ip = pred_atoms.id, out = static_cast<int>(t.size());
    return t.record(Tensor::scalar(value), {ip}, [=](Tape& t) {
        if (!t.needs_grad(ip)) return;
        const double g = t.grad_acc(out)[0];
        Tensor& gp = t.grad_acc(ip);
        for (size_t i = 0; i < gp.numel(); ++i) gp[i] += g * (*atom_grad)[i];
    });
}

}  // namespace sinkgan
