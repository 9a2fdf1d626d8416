from __future__ import annotations

import numpy as np
import pytest

from mfmdp import transport
from mfmdp.errors import InputError, MFMDPError
from mfmdp.instances import grid_distance

import oracles


def _random_metric(rng, n):
    pts = rng.random((n, 2))
    return np.linalg.norm(pts[:, None] - pts[None], axis=2)


def test_identical_measures_have_zero_distance():
    m = transport.FiniteMetric.line(4)
    mu = np.array([0.1, 0.2, 0.3, 0.4])
    assert transport.wasserstein_finite(mu, mu, m) == 0


def test_point_masses_cost_their_distance():
    D = grid_distance()
    assert transport.wasserstein_finite(np.eye(9)[0], np.eye(9)[8], D) == pytest.approx(D[0, 8], abs=1e-12)


def test_line_example():
    m = transport.FiniteMetric.line(3)
    mu, nu = [0.5, 0.5, 0], [0, 0.5, 0.5]
    assert transport.wasserstein_finite(mu, nu, m) == pytest.approx(1.0, abs=1e-12)
    assert oracles.brute_force_w1(mu, nu, m.dist) == pytest.approx(1.0, abs=1e-12)


def test_triangle_inequality_is_enforced():
    with pytest.raises(InputError):
        transport.FiniteMetric([[0, 1, 5], [1, 0, 1], [5, 1, 0]])


def test_metric_axioms_on_random_triples(rng):
    for _ in range(30):
        D = _random_metric(rng, 5)
        a, b, c = rng.dirichlet(np.ones(5), size=3)
        ab = transport.wasserstein_finite(a, b, D)
        assert ab == pytest.approx(transport.wasserstein_finite(b, a, D), abs=1e-9)
        assert ab <= transport.wasserstein_finite(a, c, D) + transport.wasserstein_finite(c, b, D) + 1e-9
        assert ab > 0


def test_duality_certificate(rng):
    for _ in range(30):
        D = _random_metric(rng, 6)
        mu, nu = rng.dirichlet(np.ones(6), size=2)
        res = transport.optimal_transport(mu, nu, D)
        f = res.potential
        # the potential is 1-Lipschitz for D and its value bounds W1 from below
        assert np.all(f[:, None] - f[None, :] <= D + 1e-9)
        assert res.dual_value <= res.value + 1e-10
        assert abs(res.gap) <= 1e-10
        assert np.allclose(res.plan.sum(axis=1), mu, atol=1e-9)
        assert np.allclose(res.plan.sum(axis=0), nu, atol=1e-9)


def test_convexity_in_first_argument(rng):
    for _ in range(20):
        D = _random_metric(rng, 5)
        m1, m2, nu = rng.dirichlet(np.ones(5), size=3)
        lam = rng.random()
        lhs = transport.wasserstein_finite(lam * m1 + (1 - lam) * m2, nu, D)
        rhs = lam * transport.wasserstein_finite(m1, nu, D) + (1 - lam) * transport.wasserstein_finite(m2, nu, D)
        assert lhs <= rhs + 1e-9


def test_small_differences_are_resolved():
    D = grid_distance()
    mu = np.full(9, 1 / 9)
    nu = mu.copy()
    nu[0] += 1e-9
    nu[8] -= 1e-9
    assert transport.wasserstein_finite(mu, nu, D) == pytest.approx(1e-9 * D[0, 8], rel=1e-6)


def test_one_dimensional_distance():
    A = transport.AtomMeasure
    assert transport.wasserstein_1d(A.point(0.2), A.point(0.7)) == pytest.approx(0.5)
    mu = A([0, 0.5, 1], [1 / 3] * 3)
    assert transport.wasserstein_1d(mu, mu) == 0
    assert transport.wasserstein_1d(mu, A.point(0.5)) == pytest.approx(1 / 3)
    with pytest.raises(InputError):
        A([1.5], [1.0])


def test_atom_measure_round_trip(tmp_path):
    mu = transport.AtomMeasure([0.3, 0.1, 0.3], [0.2, 0.5, 0.3])
    assert np.array_equal(mu.positions, [0.1, 0.3]) and np.allclose(mu.weights, [0.5, 0.5])
    mu.write(tmp_path / "atoms.txt")
    back = transport.AtomMeasure.read(tmp_path / "atoms.txt")
    assert np.array_equal(back.positions, mu.positions) and np.allclose(back.weights, mu.weights)


def test_ergodicity_identity_and_identical_rows(tmp_path):
    m = transport.FiniteMetric.line(3)
    rep = transport.ergodicity_estimate(np.eye(3), m, 5)
    assert np.allclose(rep.table, 1) and not rep.ergodic
    P = np.tile([0.2, 0.3, 0.5], (3, 1))
    assert transport.ergodicity_estimate(P, m, 3).table[0] == pytest.approx(0, abs=1e-12)
    rep.to_csv(tmp_path / "erg.csv")
    assert (tmp_path / "erg.csv").read_text().startswith("n,kappa_n,fitted_C,fitted_rho\n")


def test_grid_kernel_is_geometrically_ergodic(grid):
    rep = transport.ergodicity_estimate(grid["kernel"].as_float(), grid_distance(), 30)
    assert rep.ergodic and rep.geometric and rep.rho < 1


def test_pure_noise_model_reaches_stationarity_in_one_step():
    model = transport.LinearMFModel(0.0, 0.0, 0.0, 0.5)
    rep = transport.contraction_check(model, transport.AtomMeasure([0.9], [1.0]), 5)
    assert rep.distances[1] == pytest.approx(0, abs=1e-15)
    assert np.all(rep.distances[1:] < 1e-15)


def test_start_at_stationary_measure_stays():
    model = transport.LinearMFModel(0.3, 0.2, 0.2, 0.5)
    grid = transport.UnitGrid()
    mu_star = transport.stationary_measure(model, grid)
    mu0 = transport.AtomMeasure(grid.x[mu_star > 0], mu_star[mu_star > 0])
    rep = transport.contraction_check(model, mu0, 10, grid, mu_star)
    assert np.all(rep.distances < 1e-11)


def test_contraction_on_random_admissible_parameters(rng):
    grid = transport.UnitGrid(1025)
    for _ in range(100):
        gs, ga, gw = rng.dirichlet(np.ones(4))[:3] * 0.7
        model = transport.LinearMFModel(gs, ga, gw, rng.random())
        mu0 = transport.AtomMeasure(rng.random(3), rng.dirichlet(np.ones(3)))
        rep = transport.contraction_check(model, mu0, 10, grid, strict=False)
        assert rep.passed, (gs, ga, gw, model.gamma_q, rep.max_ratio)


def test_no_clamp_contract():
    with pytest.raises(InputError):
        transport.LinearMFModel(0.5, 0.3, 0.2, 0.5)


def test_exact_propagation_agrees_with_grid():
    model = transport.LinearMFModel(0.3, 0.2, 0.2, 0.5)
    mu0 = transport.AtomMeasure([0.25], [1.0])
    exact = transport.propagate_exact(model, mu0, 3)
    grid = transport.UnitGrid()
    w = grid.project(mu0.positions, mu0.weights)
    for _ in range(3):
        w = grid.project(*model.step_atoms(grid.x, w))
    # the exact atoms fall on multiples of 1/20 after three steps; compare means
    assert exact[-1].mean == pytest.approx(grid.x @ w, abs=1e-12)
    with pytest.raises(MFMDPError):
        transport.propagate_exact(model, mu0, 20, max_atoms=1000)


def test_transport_matches_vertex_enumeration_examples(rng):
    for _ in range(10):
        D = _random_metric(rng, 4)
        mu, nu = rng.dirichlet(np.ones(4), size=2)
        assert transport.wasserstein_finite(mu, nu, D) == pytest.approx(oracles.brute_force_w1(mu, nu, D), abs=1e-10)
