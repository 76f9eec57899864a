#include <doctest.h>

#include <cmath>

#include "sinkgan/gradcheck.hpp"
#include "sinkgan/ot_lp.hpp"
#include "sinkgan/sinkhorn.hpp"
#include "test_support.hpp"

using namespace sinkgan;
using testutil::max_abs_diff;
using testutil::rand_tensor;

namespace {

Tensor uniform_weights(size_t n) { return Tensor::full({n}, 1.0 / static_cast<double>(n)); }

// Random simplex weights bounded away from zero.
Tensor random_weights(size_t n, Rng& rng) {
    Tensor w({n});
    double s = 0.0;
    for (size_t i = 0; i < n; ++i) {
        w[i] = rng.uniform(0.2, 1.0);
        s += w[i];
    }
    for (size_t i = 0; i < n; ++i) w[i] /= s;
    // Renormalize exactly so the simplex check holds to 1e-12.
    double s2 = 0.0;
    for (size_t i = 0; i + 1 < n; ++i) s2 += w[i];
    w[n - 1] = 1.0 - s2;
    return w;
}

struct RandomProblem {
    Tensor xs, ys, wx, wy;
};

// `offset` displaces the target cloud; LP-comparison cases use 1.0 so the
// optimal cost stays O(1) and the relative tolerance is meaningful.
RandomProblem random_problem(Rng& rng, size_t max_pts = 8, size_t d = 2, double offset = 0.0) {
    RandomProblem p;
    const size_t n = 2 + rng.uniform_index(max_pts - 1);
    const size_t m = 2 + rng.uniform_index(max_pts - 1);
    p.xs = rand_tensor({n, d}, rng, 0.0, 1.0);
    p.ys = rand_tensor({m, d}, rng, offset, offset + 1.0);
    p.wx = random_weights(n, rng);
    p.wy = random_weights(m, rng);
    return p;
}

TransportProblem make_problem(const RandomProblem& rp, double eps, int iters, double exponent) {
    TransportProblem p;
    p.source_weights = rp.wx;
    p.target_weights = rp.wy;
    p.cost = cost_matrix(rp.xs, rp.ys, exponent);
    p.epsilon = eps;
    p.max_iters = iters;
    return p;
}

}  // namespace

TEST_CASE("cost_matrix hand cases and oracle") {
    Tensor a = Tensor::from_rows({{0.0}});
    Tensor b = Tensor::from_rows({{3.0}});
    CHECK(cost_matrix(a, b, 2.0).at(0, 0) == doctest::Approx(9.0).epsilon(1e-15));

    Tensor pts = Tensor::from_rows({{0.0}, {1.0}});
    Tensor c = cost_matrix(pts, pts, 1.0);
    CHECK(c.at(0, 0) == 0.0);
    CHECK(c.at(0, 1) == doctest::Approx(1.0));
    CHECK(c.at(1, 0) == doctest::Approx(1.0));
    CHECK(c.at(1, 1) == 0.0);

    Rng rng(17);
    Tensor xs = rand_tensor({3, 2}, rng);
    Tensor ys = rand_tensor({4, 2}, rng);
    const double p = 1.7;
    Tensor got = cost_matrix(xs, ys, p);
    for (size_t i = 0; i < 3; ++i) {
        for (size_t j = 0; j < 4; ++j) {
            const double dx = xs.at(i, 0) - ys.at(j, 0);
            const double dy = xs.at(i, 1) - ys.at(j, 1);
            const double want = std::pow(std::sqrt(dx * dx + dy * dy), p);
            CHECK(std::fabs(got.at(i, j) - want) <= 1e-12);
        }
    }

    CHECK_THROWS_AS(cost_matrix(rand_tensor({2, 2}, rng), rand_tensor({2, 3}, rng), 2.0),
                    DimensionError);
}

TEST_CASE("lp oracle hand cases") {
    // Zero-cost diagonal assignment.
    Tensor c = Tensor::from_rows({{0, 1}, {1, 0}});
    CHECK(lp_transport_cost(c, uniform_weights(2), uniform_weights(2)) ==
          doctest::Approx(0.0).epsilon(1e-12));

    // Fully degenerate LP: every feasible plan costs 2.8.
    Tensor c2 = Tensor::from_rows({{1, 2}, {3, 4}});
    Tensor a({2}, {0.3, 0.7});
    Tensor b({2}, {0.6, 0.4});
    CHECK(lp_transport_cost(c2, a, b) == doctest::Approx(2.8).epsilon(1e-10));

    Tensor c3 = Tensor::from_rows({{5.0}});
    CHECK(lp_transport_cost(c3, uniform_weights(1), uniform_weights(1)) == doctest::Approx(5.0));
}

TEST_CASE("solve_eot single-atom problem") {
    TransportProblem p;
    p.source_weights = uniform_weights(1);
    p.target_weights = uniform_weights(1);
    p.cost = Tensor::from_rows({{1.0}});
    p.epsilon = 0.37;
    p.max_iters = 50;
    TransportSolution s = solve_eot(p);
    CHECK(s.coupling.at(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(s.cost_value == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(s.marginal_residual <= 1e-9);
}

TEST_CASE("solve_eot two-point permutation cost") {
    TransportProblem p;
    p.source_weights = uniform_weights(2);
    p.target_weights = uniform_weights(2);
    p.cost = Tensor::from_rows({{0, 1}, {1, 0}});
    p.epsilon = 0.01;
    p.max_iters = 1000;
    TransportSolution s = solve_eot(p);
    const double lp = lp_transport_cost(p.cost, p.source_weights, p.target_weights);
    CHECK(lp == doctest::Approx(0.0));
    CHECK(std::fabs(s.cost_value - lp) <= 0.02);
    CHECK(s.coupling.at(0, 0) + s.coupling.at(1, 1) >= 0.98);
}

TEST_CASE("solve_eot matches LP oracle at small epsilon") {
    Rng rng(101);
    for (int trial = 0; trial < 10; ++trial) {
        RandomProblem rp = random_problem(rng, 5, 2, 1.0);
        TransportProblem p = make_problem(rp, 0.001, 5000, 2.0);
        TransportSolution s = solve_eot(p);
        const double lp = lp_transport_cost(p.cost, p.source_weights, p.target_weights);
        CHECK(std::fabs(s.cost_value - lp) <= 0.02 * std::max(lp, 1e-9));
    }
}

TEST_CASE("solution satisfies coupling formula and marginal report") {
    Rng rng(55);
    RandomProblem rp = random_problem(rng);
    TransportProblem p = make_problem(rp, 0.05, 2000, 2.0);
    TransportSolution s = solve_eot(p);

    const size_t n = p.source_weights.numel(), m = p.target_weights.numel();
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = 0; j < m; ++j) {
            const double expect = p.source_weights[i] * p.target_weights[j] *
                                  std::exp((s.phi[i] + s.psi[j] - p.cost.at(i, j)) / p.epsilon);
            CHECK(std::fabs(s.coupling.at(i, j) - expect) <= 1e-9);
        }
    }
    for (size_t i = 0; i < n; ++i) {
        double rowsum = 0.0;
        for (size_t j = 0; j < m; ++j) rowsum += s.coupling.at(i, j);
        CHECK(std::fabs(rowsum - p.source_weights[i]) <= s.marginal_residual + 1e-12);
    }
    for (size_t j = 0; j < m; ++j) {
        double colsum = 0.0;
        for (size_t i = 0; i < n; ++i) colsum += s.coupling.at(i, j);
        CHECK(std::fabs(colsum - p.target_weights[j]) <= s.marginal_residual + 1e-12);
    }
    for (size_t i = 0; i < s.coupling.numel(); ++i) CHECK(s.coupling[i] >= 0.0);
}

TEST_CASE("divergence is zero for identical clouds and exact for unit point masses") {
    Rng rng(5);
    Tensor xs = rand_tensor({4, 3}, rng);
    Tensor w = uniform_weights(4);
    CHECK(std::fabs(sinkhorn_divergence(xs, xs, w, w, 0.1, 200, 2.0)) <= 1e-6);

    Tensor x0 = Tensor::from_rows({{0.0}});
    Tensor y1 = Tensor::from_rows({{1.0}});
    Tensor w1 = uniform_weights(1);
    CHECK(sinkhorn_divergence(x0, y1, w1, w1, 0.5, 100, 2.0) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("divergence approaches MMD at large epsilon") {
    Rng rng(31);
    for (int trial = 0; trial < 5; ++trial) {
        Tensor xs = rand_tensor({4, 2}, rng, 0.0, 1.0);
        Tensor ys = rand_tensor({4, 2}, rng, 0.5, 1.5);
        Tensor w = uniform_weights(4);
        const double sink = sinkhorn_divergence(xs, ys, w, w, 1000.0, 500, 1.5);
        const double mmd = mmd_divergence(xs, ys, w, w, 1.5);
        CHECK(std::fabs(sink - mmd) <= 0.05 * std::max(std::fabs(mmd), 1e-9));
    }
}

TEST_CASE("divergence nonnegativity and symmetry") {
    Rng rng(77);
    for (int trial = 0; trial < 100; ++trial) {
        RandomProblem rp = random_problem(rng);
        const double s_xy =
            sinkhorn_divergence(rp.xs, rp.ys, rp.wx, rp.wy, 0.1, 500, 2.0);
        const double s_yx =
            sinkhorn_divergence(rp.ys, rp.xs, rp.wy, rp.wx, 0.1, 500, 2.0);
        CHECK(s_xy >= -1e-6);
        CHECK(std::fabs(s_xy - s_yx) <= 1e-8);
    }
}

TEST_CASE("entropic cost decreases toward the LP optimum as epsilon shrinks") {
    Rng rng(913);
    for (int trial = 0; trial < 5; ++trial) {
        RandomProblem rp = random_problem(rng, 6, 2, 1.0);
        const double lp = lp_transport_cost(cost_matrix(rp.xs, rp.ys, 2.0), rp.wx, rp.wy);
        double prev = std::numeric_limits<double>::infinity();
        double last = 0.0;
        for (double eps : {1.0, 0.1, 0.01, 0.001}) {
            TransportSolution s = solve_eot(make_problem(rp, eps, 20000, 2.0));
            CHECK(s.cost_value <= prev + 1e-9);
            prev = s.cost_value;
            last = s.cost_value;
        }
        CHECK(std::fabs(last - lp) <= 0.02 * std::max(lp, 1e-9));
    }
}

TEST_CASE("eot_gradient unit point masses") {
    // Single atoms at 0 and 1 with squared cost: d/dx (x-1)^2 at 0 is -2.
    Tensor xs = Tensor::from_rows({{0.0}});
    Tensor ys = Tensor::from_rows({{1.0}});
    TransportProblem p;
    p.source_weights = uniform_weights(1);
    p.target_weights = uniform_weights(1);
    p.cost = cost_matrix(xs, ys, 2.0);
    p.epsilon = 0.2;
    p.max_iters = 100;
    TransportSolution s = solve_eot(p);
    Tensor g = eot_gradient(p, s, point_cost_jacobian(xs, ys, 2.0), 1, 1);
    CHECK(g.at(0, 0) == doctest::Approx(-2.0).epsilon(1e-10));
}

TEST_CASE("eot_gradient rejects stale solutions") {
    Rng rng(4);
    RandomProblem rp = random_problem(rng, 5);
    TransportProblem p = make_problem(rp, 0.01, 1, 2.0);  // one iteration: unconverged
    TransportSolution s = solve_eot(p);
    REQUIRE(s.marginal_residual > 1e-6);
    CHECK_THROWS_AS(eot_gradient(p, s, point_cost_jacobian(rp.xs, rp.ys, 2.0), rp.xs.dim(0), 2),
                    StalenessError);
}

TEST_CASE("divergence gradient vanishes at identical clouds") {
    Rng rng(8);
    Tensor xs = rand_tensor({4, 2}, rng);
    Tensor w = uniform_weights(4);
    Tensor g = sinkhorn_divergence_gradient(xs, xs, w, w, 0.1, 2000, 2.0, true);
    CHECK(g.frobenius_norm() <= 1e-6);
}

TEST_CASE("eot_gradient and divergence gradient match finite differences") {
    Rng rng(202);
    for (int trial = 0; trial < 5; ++trial) {
        Tensor xs = rand_tensor({3, 2}, rng, 0.0, 1.0);
        Tensor ys = rand_tensor({3, 2}, rng, 0.3, 1.3);
        Tensor wx = random_weights(3, rng);
        Tensor wy = random_weights(3, rng);
        const double eps = 0.1;
        const int iters = 5000;

        SUBCASE("") {}
        // Plain transport term.
        {
            TransportProblem p;
            p.source_weights = wx;
            p.target_weights = wy;
            p.cost = cost_matrix(xs, ys, 2.0);
            p.epsilon = eps;
            p.max_iters = iters;
            TransportSolution s = solve_eot(p);
            Tensor analytic = eot_gradient(p, s, point_cost_jacobian(xs, ys, 2.0), 3, 2);
            auto f = [&](const std::vector<Tensor>& in) {
                TransportProblem q;
                q.source_weights = wx;
                q.target_weights = wy;
                q.cost = cost_matrix(in[0], ys, 2.0);
                q.epsilon = eps;
                q.max_iters = iters;
                return solve_eot(q).cost_value;
            };
            FdReport rep = check_fn_gradients(f, {xs}, {analytic});
            CHECK_MESSAGE(rep.pass(1e-3), "transport-term trial " << trial << ": "
                                                                  << rep.describe());
        }
        // Full debiased divergence, self-term gradient included.
        {
            Tensor analytic =
                sinkhorn_divergence_gradient(xs, ys, wx, wy, eps, iters, 2.0, true);
            auto f = [&](const std::vector<Tensor>& in) {
                return sinkhorn_divergence(in[0], ys, wx, wy, eps, iters, 2.0);
            };
            FdReport rep = check_fn_gradients(f, {xs}, {analytic});
            CHECK_MESSAGE(rep.pass(1e-3), "divergence trial " << trial << ": " << rep.describe());
        }
    }
}

TEST_CASE("ot_divergence_loss backward matches the analytic gradient path") {
    Rng rng(303);
    Tensor pred = rand_tensor({4, 3}, rng);
    Tensor target = rand_tensor({5, 3}, rng, 0.2, 1.2);
    Tape t;
    Var atoms = t.leaf(pred, true);
    Var loss = ot_divergence_loss(atoms, target, 0.1, 3000, 2.0, true);
    t.backward(loss);

    Tensor wx = uniform_weights(4), wy = uniform_weights(5);
    CHECK(loss.value()[0] ==
          doctest::Approx(sinkhorn_divergence(pred, target, wx, wy, 0.1, 3000, 2.0)));
    Tensor expect = sinkhorn_divergence_gradient(pred, target, wx, wy, 0.1, 3000, 2.0, true);
    CHECK(max_abs_diff(atoms.grad(), expect) <= 1e-12);
}

TEST_CASE("smoothness probe sanity, asymptote and determinism") {
    Rng rng(17);
    Tensor base = rand_tensor({4, 2}, rng, 0.0, 1.0);
    Tensor target = rand_tensor({4, 2}, rng, 0.2, 1.2);
    Tensor wt = uniform_weights(4);
    const std::vector<double> eps_grid = {1e-3, 1e-1, 1e3};

    auto rows = smoothness_probe(translation_family(base), target, wt, eps_grid, 10, 99, 3000, 2.0);
    REQUIRE(rows.size() == 3);
    for (const auto& r : rows) {
        CHECK(std::isfinite(r.lipschitz_estimate));
        CHECK(r.lipschitz_estimate > 0.0);
    }

    // Same seed twice: identical bits.
    auto rows2 = smoothness_probe(translation_family(base), target, wt, eps_grid, 10, 99, 3000, 2.0);
    for (size_t i = 0; i < rows.size(); ++i) {
        CHECK(rows[i].lipschitz_estimate == rows2[i].lipschitz_estimate);
    }

    // Large-epsilon level is cloud-size independent within a factor of 3.
    Tensor base8 = rand_tensor({8, 2}, rng, 0.0, 1.0);
    Tensor target8 = rand_tensor({8, 2}, rng, 0.2, 1.2);
    auto rows8 = smoothness_probe(translation_family(base8), target8, uniform_weights(8),
                                  {1e3}, 10, 99, 3000, 2.0);
    const double a = rows[2].lipschitz_estimate;
    const double b = rows8[0].lipschitz_estimate;
    CHECK(std::max(a, b) / std::min(a, b) <= 3.0);

    CHECK_THROWS_AS(
        smoothness_probe(translation_family(base), target, wt, eps_grid, 5, 1, 100, 2.0),
        ContractError);
}

TEST_CASE("solver counter tracks calls") {
    sinkhorn_stats::reset();
    CHECK(sinkhorn_stats::solve_calls() == 0);
    TransportProblem p;
    p.source_weights = uniform_weights(1);
    p.target_weights = uniform_weights(1);
    p.cost = Tensor::from_rows({{1.0}});
    solve_eot(p);
    CHECK(sinkhorn_stats::solve_calls() == 1);
}

TEST_CASE("transport problem validation") {
    TransportProblem p;
    p.source_weights = Tensor({2}, {0.6, 0.6});  // not a simplex
    p.target_weights = uniform_weights(2);
    p.cost = Tensor({2, 2});
    CHECK_THROWS_AS(solve_eot(p), ContractError);

    p.source_weights = uniform_weights(2);
    p.epsilon = 0.0;
    CHECK_THROWS_AS(solve_eot(p), ContractError);

    p.epsilon = 0.1;
    p.cost = Tensor({2, 2}, {0.0, -1.0, 0.0, 0.0});
    CHECK_THROWS_AS(solve_eot(p), ContractError);
}
