import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from singular_limits import systems
from singular_limits.errors import DomainError, ParameterError, WindowError
from singular_limits.kernels import fundamental_semidiscrete
from singular_limits.semidiscrete import (LatticeState, integrate, lattice_delta,
                                          lattice_difference, lattice_riemann, run_semidiscrete,
                                          semidiscrete_rhs, step_count)


def test_rhs_constant_is_zero(chrom):
    state = LatticeState(0, np.tile([1.0, 1.2], (10, 1)), [1.0, 1.2])
    assert np.array_equal(semidiscrete_rhs(chrom, state), np.zeros((10, 2)))


def test_rhs_linear_unit_bump(scalar_linear):
    state = lattice_delta(-3, 6, at=2)
    rhs = semidiscrete_rhs(scalar_linear, state)[:, 0]
    expected = np.zeros(10)
    expected[5], expected[6] = -0.5, 0.5
    np.testing.assert_allclose(rhs, expected, atol=1e-16)


def test_rhs_chromatography_flux_difference(chrom):
    state = LatticeState(0, [[1.0, 1.0], [1.1, 1.0]], [1.0, 1.0])
    rhs = semidiscrete_rhs(chrom, state)
    np.testing.assert_allclose(rhs[0], 0.0, atol=1e-16)
    np.testing.assert_allclose(rhs[1], [-(1.1 / 3.1 - 1 / 3), -(1.0 / 3.1 - 1 / 3)], rtol=1e-14)
    np.testing.assert_allclose(rhs[1], [-0.021505, 0.010753], atol=5e-7)


def test_integrate_zero_time_returns_initial(chrom):
    state = lattice_riemann([1, 1], [1.02, 0.99], -5, 40)
    assert integrate(chrom, state, 0.0) is state


def test_poisson_fundamental_solution(scalar_linear):
    state = lattice_delta(-5, 60, at=0)
    seen = []
    final = integrate(scalar_linear, state, 4.0, hooks=seen.append, hook_every=10)
    exact = fundamental_semidiscrete(final.indices, 4.0, 0.5)
    assert np.max(np.abs(final.cells[:, 0] - exact)) < 1e-6
    assert final.cells[5, 0] == pytest.approx(math.exp(-2.0), abs=1e-6)
    for snap in seen:
        assert abs(snap.cells.sum() - 1.0) < 1e-9


def test_burgers_shock_speed(burgers):
    state = lattice_riemann([0.4], [0.0], -20, 140)
    positions = {}

    def crossing(s):
        vals = s.cells[:, 0]
        k = int(np.argmax(vals < 0.2))
        # linear interpolation of the median level between cells k-1 and k
        frac = (vals[k - 1] - 0.2) / (vals[k - 1] - vals[k])
        positions[round(s.time, 6)] = s.indices[k - 1] + frac

    integrate(burgers, state, 100.0, hooks=crossing, hook_every=100)
    speed = (positions[100.0] - positions[50.0]) / 50.0
    assert speed == pytest.approx(0.6, rel=0.02)


def test_lattice_difference_cases():
    const = LatticeState(0, np.ones((5, 2)), [1.0, 1.0])
    assert np.array_equal(lattice_difference(const), np.zeros((5, 2)))
    jump = lattice_riemann([0.0], [2.0], -3, 3, jump_at=1)
    diff = lattice_difference(jump)[:, 0]
    assert diff[4] == 2.0 and np.count_nonzero(diff) == 1
    ramp = LatticeState.from_function(lambda n: 0.25 * n, -4, 4, left_state=[-1.25])
    np.testing.assert_allclose(lattice_difference(ramp)[:, 0], 0.25)


def test_conservation_ledger(chrom):
    rng = np.random.default_rng(5)
    n = np.arange(-5, 120)
    cells = 1.0 + 0.02 * np.exp(-((n[:, None] - 10) / 4.0) ** 2) * rng.normal(size=2)
    state = LatticeState(-5, cells, [1.0, 1.0])
    snaps = run_semidiscrete(chrom, state, 40.0, snapshot_every=20)
    start = snaps[0].conserved_total()
    for s in snaps[1:]:
        assert np.max(np.abs(s.conserved_total() - start)) < 1e-9 * s.time
    # nothing has left the window yet, so the mass itself is conserved
    assert np.max(np.abs(snaps[-1].outflow)) < 1e-12


def test_riemann_outflow_accounts_for_the_edge(chrom):
    state = lattice_riemann([1.0, 1.0], [1.02, 0.99], -5, 80)
    final = integrate(chrom, state, 20.0)
    expected = 20.0 * (chrom.flux(np.array([1.02, 0.99])) - chrom.flux(np.array([1.0, 1.0])))
    np.testing.assert_allclose(final.outflow, expected, rtol=1e-12)
    assert np.max(np.abs(final.conserved_total() - state.conserved_total())) < 1e-12


def test_dt_shrinks_to_divide_t_final():
    assert step_count(1.0, 0.05) == 20
    assert step_count(1.01, 0.05) == 21


def test_errors(chrom, burgers):
    with pytest.raises(ParameterError):
        integrate(chrom, lattice_riemann([1, 1], [1, 1], 0, 10), -1.0)
    with pytest.raises(ParameterError):
        integrate(chrom, lattice_riemann([1, 1], [1, 1], 0, 10), 1.0, dt=0.0)
    with pytest.raises(WindowError):
        integrate(chrom, lattice_riemann([1, 1], [1.02, 0.99], -2, 8), 5.0)
    bad = LatticeState(0, [[0.0], [0.0], [3.0], [0.0]], [0.0])
    with pytest.raises(DomainError) as info:
        integrate(burgers, bad, 1.0)
    assert info.value.time is not None and info.value.index is not None


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-0.4, 0.4), min_size=3, max_size=30))
def test_rhs_sum_telescopes(values):
    burgers = _BURGERS
    state = LatticeState(0, np.array(values)[:, None], [values[0]])
    total = semidiscrete_rhs(burgers, state).sum()
    edge = burgers.flux(np.array([values[-1]])) - burgers.flux(np.array([values[0]]))
    assert total == pytest.approx(-edge[0], abs=1e-14)


_BURGERS = systems.shifted_burgers()
