import numpy as np
import pytest

from singular_limits import systems
from singular_limits.backward import (GridFunction, backward_residual, backward_step,
                                      conservation_defect, riemann_profile, run_backward,
                                      spike_profile)
from singular_limits.errors import DomainError, ParameterError, WindowError
from singular_limits.kernels import fundamental_backward


def _constant(system, state, n=400, dx=0.05):
    values = np.tile(np.asarray(state, dtype=float), (n, 1))
    return GridFunction(-2.0, dx, values, state)


@pytest.mark.parametrize("name,state", [("linear", [0.3, -0.2]), ("burgers-shifted", [0.1]),
                                        ("chromatography", [0.8, 1.2])])
def test_constants_are_fixed_points(builtins, name, state):
    system = builtins[name]
    prof = _constant(system, state)
    out = backward_step(system, prof)
    assert np.array_equal(out.values, prof.values)


def test_python_march_matches_compiled(chrom):
    """A user system without a compiled kernel takes the pure Python path."""
    plain = systems.make_system("chrom-plain", chrom.flux, chrom.box_lower, chrom.box_upper,
                                jacobian=chrom.jacobian, samples=2000)
    x = np.arange(-5, 40, 0.05)
    vals = 1.0 + 0.03 * np.tanh(x[:, None] - 3) * np.array([1.0, -0.5])
    prof = GridFunction(-5.0, 0.05, vals, vals[0])
    a = backward_step(chrom, prof)
    b = backward_step(plain, prof)
    np.testing.assert_allclose(a.values, b.values, atol=1e-14)


@pytest.fixture(scope="module")
def spike_line():
    """Scalar linear law whose box holds a unit-mass hat of half-width 1e-3."""
    return systems.linear_system(eigenvalues=(0.5,), box=((-1.0,), (1200.0,)))


def test_single_step_of_spike_gives_exponential(spike_line):
    lam = 0.5
    errors = []
    for dx in (2e-3, 1e-3):
        prof = spike_profile(-1.0, 15.0, dx)
        out = backward_step(spike_line, prof)
        exact = fundamental_backward(1, out.x, lam)
        errors.append(np.sum(np.abs(out.values[:, 0] - exact)) * dx)
    # O(dx + spike width) with width = 10 dx
    assert errors[1] < 0.6 * errors[0]
    assert errors[1] < 0.05


def test_gamma_density_after_five_steps(spike_line):
    prof = spike_profile(-1.0, 20.0, 1e-3, width=1e-2)
    records = run_backward(spike_line, prof, 5)
    final = records[-1].profile
    exact = fundamental_backward(5, final.x, 0.5)
    assert np.sum(np.abs(final.values[:, 0] - exact)) * final.dx < 0.02


def test_run_backward_constant_single_step(chrom):
    prof = _constant(chrom, [1.0, 1.0])
    records = run_backward(chrom, prof, 1)
    assert len(records) == 1
    assert np.array_equal(records[0].profile.values, prof.values)
    assert records[0].previous is prof


def test_run_backward_guards_and_stride(chrom):
    prof = _constant(chrom, [1.0, 1.0])
    with pytest.raises(ParameterError):
        run_backward(chrom, prof, 0)
    with pytest.raises(ParameterError):
        run_backward(chrom, prof, 3, stride=0)
    seen = []
    records = run_backward(chrom, prof, 7, stride=3, hooks=lambda s: seen.append(s.step_index))
    assert [r.step_index for r in records] == [3, 6, 7]
    assert seen == list(range(1, 8))


def test_tv_budget_applies_to_systems_only(chrom, burgers):
    big = riemann_profile([1.0, 1.0], [1.2, 0.8], -5, 60, 0.05)
    with pytest.raises(ParameterError):
        run_backward(chrom, big, 1)
    shock = riemann_profile([0.4], [0.0], -5, 60, 0.05)
    assert len(run_backward(burgers, shock, 2)) == 2


def test_decoupled_linear_system_superposes_gamma_kernels():
    linear2 = systems.linear_system(box=((-1.0, -1.0), (200.0, 200.0)))
    dx = 2e-3
    x_min, x_max = -1.0, 30.0
    first = spike_profile(x_min, x_max, dx, center=0.0, direction=[1.0, 0.0])
    second = spike_profile(x_min, x_max, dx, center=5.0, direction=[0.0, 1.0])
    both = GridFunction(x_min, dx, first.values + second.values, [0.0, 0.0])
    final = run_backward(linear2, both, 6, tv_budget=None)[-1].profile
    g1 = fundamental_backward(6, final.x, 0.3)
    g2 = fundamental_backward(6, final.x - 5.0, 0.7)
    assert np.sum(np.abs(final.values[:, 0] - g1)) * dx < 0.02
    assert np.sum(np.abs(final.values[:, 1] - g2)) * dx < 0.02


def test_linear_mass_is_conserved(linear2):
    rng = np.random.default_rng(3)
    x = np.arange(-5, 80, 0.05)
    bumps = np.exp(-(x[:, None] - 5) ** 2) * rng.normal(size=2) * 0.01
    prof = GridFunction(-5.0, 0.05, bumps, [0.0, 0.0])
    records = run_backward(linear2, prof, 20)
    masses = [prof.mass()] + [r.profile.mass() for r in records]
    assert np.max(np.abs(np.array(masses) - masses[0])) < 1e-8
    for r in records:
        assert conservation_defect(linear2, r.previous, r.profile) < 1e-12


def test_residual_small_and_second_order(chrom):
    residuals = []
    for dx in (0.1, 0.05, 0.025):
        x = np.arange(-10, 60 + dx / 2, dx)
        vals = 1.0 + 0.04 * np.tanh((x[:, None] - 5) / 2) * np.array([0.6, -0.8])
        prof = GridFunction(-10.0, dx, vals, vals[0])
        out = backward_step(chrom, prof)
        res = backward_residual(chrom, prof, out)
        assert res < 10 * dx * dx
        residuals.append(res)
    assert residuals[0] / residuals[1] >= 3
    assert residuals[1] / residuals[2] >= 3


def test_sup_bound_by_total_variation(chrom):
    states = systems.sample_enlarged_box(chrom.box_lower, chrom.box_upper, chrom.margin, 4000)
    C = max(np.linalg.norm(np.linalg.inv(A), 2) for A in chrom.jacobian(states))
    rng = np.random.default_rng(11)
    x = np.arange(-5, 60, 0.1)
    for _ in range(100):
        base = rng.uniform(0.8, 1.2, size=2)
        jumps = rng.normal(size=(3, 2)) * 0.01
        centers = rng.uniform(0, 20, size=3)
        vals = base + (0.5 * (1 + np.tanh(x[:, None] - centers))) @ jumps
        prof = GridFunction(-5.0, 0.1, vals, vals[0])
        out = backward_step(chrom, prof)
        sup = np.max(np.linalg.norm(out.values - prof.left_state, axis=1))
        assert sup <= C * prof.total_variation()


def test_domain_escape_reports_index(burgers):
    x = np.arange(-2, 20, 0.05)
    inside = GridFunction(-2.0, 0.05, np.where(np.abs(x - 5) < 0.2, 0.449, 0.0)[:, None], [0.0])
    backward_step(burgers, inside)
    bad = GridFunction(-2.0, 0.05, np.where(x > 5, 0.9, 0.0)[:, None], [0.0])
    with pytest.raises(DomainError) as info:
        backward_step(burgers, bad)
    assert info.value.index is not None


def test_window_error_when_waves_reach_the_end(chrom):
    prof = riemann_profile([1.0, 1.0], [1.03, 0.98], -2, 6, 0.05)
    with pytest.raises(WindowError) as info:
        run_backward(chrom, prof, 5)
    assert info.value.step >= 1


def test_grid_function_helpers():
    g = GridFunction.from_function(lambda x: np.sin(x), 0.0, np.pi, np.pi / 100)
    assert g.size == 101
    assert g.x_max == pytest.approx(np.pi)
    assert g.mass()[0] == pytest.approx(2.0, abs=1e-3)
    assert g.total_variation() == pytest.approx(2.0, abs=1e-3)
    with pytest.raises(ParameterError):
        GridFunction(0.0, 0.0, np.zeros(3), [0.0])
