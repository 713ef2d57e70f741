import math

import numpy as np
import pytest

from singular_limits import harness as H
from singular_limits import systems
from singular_limits.errors import ParameterError, UnsupportedError


def test_riemann_problem_validation(chrom, burgers):
    with pytest.raises(ParameterError):
        H.RiemannProblem(chrom, [1.0, 1.0], [2.0, 1.0])
    with pytest.raises(ParameterError):
        H.RiemannProblem(chrom, [1.0, 1.0], [1.2, 1.0])
    H.RiemannProblem(burgers, [0.4], [0.0])  # scalar data may be large


def test_scalar_riemann_constant(burgers):
    x = np.linspace(-1, 1, 11)
    out = H.scalar_riemann_values(burgers, 0.2, 0.2, 1.0, x)
    assert np.all(out == 0.2)


def test_scalar_riemann_shock(burgers):
    x = np.array([0.59, 0.61])
    np.testing.assert_array_equal(H.scalar_riemann_values(burgers, 0.4, 0.0, 1.0, x), [0.4, 0.0])
    # Rankine-Hugoniot: (f(0.4) - f(0)) / 0.4 = 0.24 / 0.4
    assert burgers.flux(np.array([0.4]))[0] == pytest.approx(0.24)


def test_scalar_riemann_rarefaction(burgers):
    t = 2.0
    x = np.linspace(0.5 * t, 0.7 * t, 21)
    out = H.scalar_riemann_values(burgers, 0.0, 0.4, t, x)
    np.testing.assert_allclose(out, (x / t - 0.5) / 0.5, atol=1e-14)
    assert H.scalar_riemann_values(burgers, 0.0, 0.4, t, np.array([0.0]))[0] == 0.0
    assert H.scalar_riemann_values(burgers, 0.0, 0.4, t, np.array([2.0]))[0] == 0.4


def test_exact_solution_weak_form(burgers):
    """Flux balance on control volumes around the shock and across the fan.

    Wave edges fall on cell boundaries of the midpoint rule, which is then
    exact for the piecewise linear solution.
    """
    t0, t1, h = 1.0, 1.5, 0.05
    f = lambda v: burgers.flux(np.array([v]))[0]
    for left, right, a, b in ((0.4, 0.0, 0.3, 1.2), (0.0, 0.4, -0.2, 1.6)):
        prob = H.RiemannProblem(burgers, [left], [right])
        mid = np.arange(a + h / 2, b, h)
        mass = [h * np.sum(H.reference_values(burgers, prob, t, mid)[:, 0]) for t in (t0, t1)]
        assert abs(mass[1] - mass[0] - (t1 - t0) * (f(left) - f(right))) < 1e-8


def test_nonconvex_flux_is_unsupported():
    cubic = systems.make_system("cubic", lambda u: 0.5 * u + 0.1 * u ** 3, [-0.5], [0.5],
                                samples=200)
    with pytest.raises(UnsupportedError):
        H.scalar_riemann_values(cubic, 0.3, -0.3, 1.0, np.zeros(3))


def test_exact_scalar_riemann_grid(burgers):
    g = H.exact_scalar_riemann(burgers, H.RiemannProblem(burgers, [0.4], [0.0]), 1.0, -1, 2, 0.01)
    assert g.values[np.searchsorted(g.x, 0.5), 0] == 0.4
    assert g.values[np.searchsorted(g.x, 0.7), 0] == 0.0


def test_linear_reference(linear2):
    prob = H.RiemannProblem(linear2, [0.0, 0.0], [0.03, 0.02])
    out = H.reference_values(linear2, prob, 1.0, np.array([0.2, 0.5, 0.8]))
    np.testing.assert_allclose(out, [[0, 0], [0.03, 0], [0.03, 0.02]])


def test_reference_unavailable_for_nonlinear_systems(chrom):
    prob = H.RiemannProblem(chrom, [1.0, 1.0], [1.02, 1.0])
    with pytest.raises(UnsupportedError):
        H.reference_values(chrom, prob, 1.0, np.zeros(2))


def test_physical_mapping_on_linear_system(scalar_linear):
    """Same physical problem at two epsilons, against the translated step."""
    prob = H.RiemannProblem(scalar_linear, [0.0], [0.5])
    xs, h = H.fine_grid(-0.1, 1.2, 1e-4)
    exact = H.reference_values(scalar_linear, prob, 1.0, xs)
    for eps in (0.02, 0.005):
        for scheme in H.SCHEMES:
            sol, _ = H.evolve_physical(scalar_linear, prob, scheme, eps, 1.0)
            err = H.l1_distance(sol.sample(xs), exact, h)
            # kernel spreading: jump * sd of the kernel, sd = sqrt(t eps (1 - lam)) or sqrt(t eps lam)
            assert err < 0.5 * 2 * math.sqrt(eps)


def test_epsilon_study_single_epsilon(scalar_linear):
    prob = H.RiemannProblem(scalar_linear, [0.0], [0.5])
    rec = H.epsilon_study(scalar_linear, prob, "semidiscrete", [0.02])
    assert len(rec.errors) == 1 and rec.order is None


def test_epsilon_study_linear_order(scalar_linear):
    prob = H.RiemannProblem(scalar_linear, [0.0], [0.5])
    for scheme in H.SCHEMES:
        rec = H.epsilon_study(scalar_linear, prob, scheme)
        assert rec.epsilons == sorted(rec.epsilons, reverse=True)
        assert rec.order == pytest.approx(0.5, abs=0.15)


def test_epsilon_study_records_failures(scalar_linear):
    prob = H.RiemannProblem(scalar_linear, [0.0], [0.5])
    rec = H.epsilon_study(scalar_linear, prob, "backward", [0.03, 0.02])
    # 1 / 0.03 is not an integer number of backward steps
    assert 0.03 in rec.failures and rec.epsilons == [0.02]


def test_cross_scheme_identical_constant_data(chrom):
    prob = H.RiemannProblem(chrom, [1.0, 1.0], [1.0, 1.0])
    for _, dist in H.cross_scheme_agreement(chrom, prob, [0.04, 0.02]):
        assert dist == 0.0


def test_cross_scheme_linear_triangle_bound(scalar_linear):
    prob = H.RiemannProblem(scalar_linear, [0.0], [0.5])
    eps = [0.04, 0.01]
    dists = dict(H.cross_scheme_agreement(scalar_linear, prob, eps))
    for e in eps:
        bound = sum(H.epsilon_study(scalar_linear, prob, s, [e]).errors[0] for s in H.SCHEMES)
        assert dists[e] <= bound * (1 + 1e-9)
    assert dists[0.01] < dists[0.04]


def test_lipschitz_requires_distinct_pairs(chrom):
    data = H.random_small_tv_data(chrom, np.random.default_rng(0))
    with pytest.raises(ParameterError):
        H.lipschitz_study(chrom, [(data, data)], "semidiscrete", 1.0, 5.0)


def test_lipschitz_linear_is_one(linear2):
    pairs = H.perturbed_pairs(linear2, np.random.default_rng(2), count=2)
    for scheme in H.SCHEMES:
        L = H.lipschitz_study(linear2, pairs, scheme, 1.0, 30.0)
        assert L == pytest.approx(1.0, abs=1e-6)


def test_random_data_is_small_and_admissible(builtins):
    rng = np.random.default_rng(5)
    for system in builtins.values():
        for _ in range(5):
            data = H.random_small_tv_data(system, rng, tv=0.05)
            x = np.linspace(data.extent[0] - 5, data.extent[1] + 5, 20001)
            vals = data(x)
            tv = np.sum(np.linalg.norm(np.diff(vals, axis=0), axis=1))
            assert tv <= 0.05 + 1e-12
            assert np.all(system.distance_to_box(vals) == 0)


def test_random_data_is_seeded(chrom):
    a = H.random_small_tv_data(chrom, np.random.default_rng(3))
    b = H.random_small_tv_data(chrom, np.random.default_rng(3))
    x = np.linspace(-10, 30, 50)
    assert np.array_equal(a(x), b(x))


def test_invariant_monitor_on_runs(chrom):
    prob = H.RiemannProblem(chrom, [1.0, 1.0], [1.03, 0.98])
    mon = H.InvariantMonitor(chrom)
    # the first backward step over a jump balances flux to O(dx^3); refine it
    H.evolve_physical(chrom, prob, "backward", 0.04, 1.0, dx=0.01, monitor=mon)
    H.evolve_physical(chrom, prob, "semidiscrete", 0.04, 1.0, monitor=mon)
    assert mon.checked > 25 and mon.ok()


def test_fit_order():
    eps = np.array([0.1, 0.05, 0.025])
    assert H.fit_order(eps, 3 * eps ** 0.5) == pytest.approx(0.5)
    assert H.fit_order([0.1], [1.0]) is None
