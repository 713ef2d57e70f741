"""Reference solutions and epsilon -> 0 experiments for both schemes.

Physical coordinates are mapped to the schemes' rescaled ones by
x -> x / eps and t -> t / eps.  A backward run of n = t/eps steps gives node
values at x = eps * x_i (read with linear interpolation); a lattice run to
time t/eps gives cell averages on [eps n, eps (n + 1)) (read as piecewise
constants).  Distances are L1 norms, summed over components, after sampling
every field at the midpoints of a common fine grid.
"""

from __future__ import annotations

import math
import time as _time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .backward import (TV_BUDGET, BackwardRunState, GridFunction, conservation_defect,
                       exceeds_budget, run_backward)
from .errors import ParameterError, SingularLimitsError, UnsupportedError
from .functionals import (DEFAULT_C0_SCAN, DEFAULT_SLACK, decompose_backward,
                          decompose_semidiscrete, lyapunov_scan)
from .semidiscrete import DEFAULT_DT, LatticeState, run_semidiscrete
from .systems import SystemSpec

SCHEMES = ("backward", "semidiscrete")
DEFAULT_EPSILONS = (0.04, 0.02, 0.01, 0.005)


@dataclass(frozen=True, eq=False)
class RiemannProblem:
    """Riemann data jumping from ``left`` to ``right`` at x = 0."""

    system: SystemSpec
    left: np.ndarray
    right: np.ndarray
    tv_budget: Optional[float] = TV_BUDGET

    def __post_init__(self):
        n = self.system.dimension
        left = np.asarray(self.left, dtype=float).reshape(n)
        right = np.asarray(self.right, dtype=float).reshape(n)
        object.__setattr__(self, "left", left)
        object.__setattr__(self, "right", right)
        if np.any(self.system.distance_to_box(np.stack([left, right])) > 1e-12):
            raise ParameterError("Riemann states must lie in K0")
        if exceeds_budget(self.system, float(np.linalg.norm(right - left)), self.tv_budget):
            raise ParameterError("Riemann jump exceeds the total-variation budget")

    @property
    def left_state(self):
        return self.left

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.where((x < 0)[:, None], self.left, self.right)

    def cell_averages(self, a, b):
        """Exact averages over the intervals [a_k, b_k)."""
        frac = np.clip(-a / (b - a), 0.0, 1.0)[:, None]
        return frac * self.left + (1 - frac) * self.right

    def node_values(self, x, spacing):
        values = self(x)
        on_jump = np.isclose(x, 0.0, rtol=0, atol=1e-9 * spacing)
        values[on_jump] = 0.5 * (self.left + self.right)
        return values

    @property
    def extent(self):
        return 0.0, 0.0


@dataclass(frozen=True, eq=False)
class InitialProfile:
    """Initial data ``func(x) -> (N, n)`` equal to ``left_state`` left of ``extent[0]``
    and constant right of ``extent[1]``."""

    func: Callable
    left_state: np.ndarray
    extent: tuple = (0.0, 0.0)

    def __call__(self, x):
        return np.asarray(self.func(np.asarray(x, dtype=float)), dtype=float)

    def cell_averages(self, a, b):
        # three-point Gauss-Legendre per cell
        nodes, weights = np.polynomial.legendre.leggauss(3)
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        return sum(w * 0.5 * self(mid + half * s) for s, w in zip(nodes, weights))

    def node_values(self, x, spacing):
        return self(x)


# --------------------------------------------------------------------------
# reference solutions
# --------------------------------------------------------------------------

def _speed(system, u):
    return system.jacobian(np.asarray(u, dtype=float)[..., None])[..., 0, 0]


def scalar_riemann_values(system: SystemSpec, left: float, right: float, t: float, x):
    """Entropy solution of a scalar Riemann problem with nondecreasing speed lambda(u)."""
    if system.dimension != 1:
        raise UnsupportedError("exact Riemann solutions are scalar only")
    left, right = float(np.ravel(left)[0]), float(np.ravel(right)[0])
    x = np.asarray(x, dtype=float)
    lo, hi = min(left, right), max(left, right)
    probe = np.linspace(lo, hi, 257)
    speeds = _speed(system, probe)
    if np.any(np.diff(speeds) < -1e-12):
        raise UnsupportedError("flux is not convex on the Riemann interval")
    if t <= 0 or left == right:
        return np.where(x < 0, left, right)
    flat = np.all(np.abs(speeds - speeds[0]) <= 1e-12)
    if left > right or flat:
        fl = system.flux(np.array([left]))[0]
        fr = system.flux(np.array([right]))[0]
        speed = (fl - fr) / (left - right) if left != right else speeds[0]
        return np.where(x < speed * t, left, right)
    # rarefaction: invert lambda(u) = x/t by bisection on [left, right]
    xi = x / t
    sl, sr = speeds[0], speeds[-1]
    out = np.where(xi <= sl, left, right).astype(float)
    fan = (xi > sl) & (xi < sr)
    a = np.full(fan.sum(), left)
    b = np.full(fan.sum(), right)
    target = xi[fan]
    for _ in range(80):
        m = 0.5 * (a + b)
        below = _speed(system, m) < target
        a = np.where(below, m, a)
        b = np.where(below, b, m)
    out[fan] = 0.5 * (a + b)
    return out


def exact_scalar_riemann(system: SystemSpec, problem: RiemannProblem, t: float,
                         x_min: float, x_max: float, dx: float) -> GridFunction:
    """The exact entropy solution at time ``t`` sampled on a uniform grid."""
    count = int(round((x_max - x_min) / dx)) + 1
    x = x_min + dx * np.arange(count)
    values = scalar_riemann_values(system, problem.left, problem.right, t, x)
    return GridFunction(x_min, dx, values[:, None], problem.left)


def _is_linear(system):
    if system.jit_kind is not None:
        from . import _jit
        return system.jit_kind == _jit.KIND_LINEAR
    pts = np.stack([system.box_lower, system.box_upper, 0.5 * (system.box_lower + system.box_upper)])
    J = system.jacobian(pts)
    return bool(np.allclose(J, J[0], rtol=0, atol=1e-13))


def reference_values(system: SystemSpec, problem: RiemannProblem, t: float, x):
    """Exact solution for scalar convex or linear systems, else UnsupportedError."""
    x = np.asarray(x, dtype=float)
    if system.dimension == 1:
        return scalar_riemann_values(system, problem.left, problem.right, t, x)[:, None]
    if _is_linear(system):
        A = system.jacobian(problem.left)
        from .systems import spectral_arrays
        lam, right, left = spectral_arrays(A)
        jump = problem.right - problem.left
        out = np.tile(problem.left, (x.size, 1))
        for i in range(system.dimension):
            passed = (x >= lam[i] * t)[:, None]
            out = out + passed * (left[i] @ jump) * right[i]
        return out
    raise UnsupportedError("no exact Riemann solution for nonlinear systems")


class InvariantMonitor:
    """Worst conservation and reconstruction errors seen over recorded states.

    Backward states are checked step by step (mass change against the edge
    flux); lattice snapshots against the initial conserved total, per unit of
    elapsed time.
    """

    def __init__(self, system: SystemSpec):
        self.system = system
        self.conservation = 0.0
        self.reconstruction = 0.0
        self.checked = 0
        self._origin = None

    def __call__(self, state):
        if isinstance(state, BackwardRunState):
            comps = decompose_backward(self.system, state.profile)
            defect = conservation_defect(self.system, state.previous, state.profile)
        else:
            comps = decompose_semidiscrete(self.system, state)
            if self._origin is None or state.time == 0.0:
                self._origin = (state.time, state.conserved_total())
                defect = 0.0
            else:
                t0, total = self._origin
                drift = np.max(np.abs(state.conserved_total() - total))
                defect = float(drift / max(1.0, state.time - t0))
        self.conservation = max(self.conservation, defect)
        self.reconstruction = max(self.reconstruction, comps.reconstruction_error())
        self.checked += 1

    def ok(self, conservation: float = 1e-9, reconstruction: float = 1e-10) -> bool:
        return self.conservation <= conservation and self.reconstruction <= reconstruction


# --------------------------------------------------------------------------
# runs in physical coordinates
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PhysicalSolution:
    """Scheme output mapped back to physical coordinates."""

    scheme: str
    epsilon: float
    positions: np.ndarray
    values: np.ndarray
    left_state: np.ndarray

    def sample(self, x):
        x = np.asarray(x, dtype=float)
        if self.scheme == "backward":
            return np.stack([np.interp(x, self.positions, self.values[:, k])
                             for k in range(self.values.shape[1])], axis=1)
        cell = np.floor(x / self.epsilon + 1e-12).astype(int)
        idx = cell - int(round(self.positions[0] / self.epsilon))
        out = self.values[np.clip(idx, 0, len(self.values) - 1)]
        out[idx < 0] = self.left_state
        return out


def default_dx(system: SystemSpec) -> float:
    """Rescaled backward grid spacing: keeps dx / kappa <= 0.5."""
    return min(0.1, 0.5 * system.kappa)


def _window(system, data, epsilon, horizon, x_lo):
    """Rescaled window [lo, hi] so that the outflow strip stays clean."""
    start, end = data.extent
    travel = horizon * system.speed_cap
    spread = 12.0 * math.sqrt(max(horizon, 1.0)) + 30.0
    lo = min(x_lo, start) / epsilon - 5.0
    need = end / epsilon + travel + spread
    hi = lo + (need - lo) / 0.9
    return lo, hi


def evolve_physical(system: SystemSpec, data, scheme: str, epsilon: float, t_physical: float,
                    x_lo: float = -0.1, dx: Optional[float] = None, dt: float = DEFAULT_DT,
                    record_every: Optional[int] = None, tv_budget: Optional[float] = TV_BUDGET,
                    monitor: Optional[Callable] = None):
    """Run ``scheme`` on ``data`` to physical time ``t_physical``.

    Returns ``(final PhysicalSolution, list of PhysicalSolution snapshots)``;
    snapshots are only collected when ``record_every`` is given (steps for
    the backward scheme, RK4 steps for the lattice).  ``monitor`` sees every
    backward step, or every lattice snapshot (each unit of rescaled time when
    ``record_every`` is not given).
    """
    if scheme not in SCHEMES:
        raise ParameterError(f"unknown scheme {scheme!r}")
    horizon = t_physical / epsilon
    lo, hi = _window(system, data, epsilon, horizon, x_lo)
    left = np.asarray(data.left_state, dtype=float).reshape(system.dimension)
    snaps = []
    if scheme == "backward":
        steps = int(round(horizon))
        if abs(steps - horizon) > 1e-9 * max(1.0, horizon):
            raise ParameterError("t_physical / epsilon must be an integer for the backward scheme")
        h = default_dx(system) if dx is None else dx
        count = int(math.ceil((hi - lo) / h)) + 1
        x = lo + h * np.arange(count)
        initial = GridFunction(lo, h, data.node_values(x * epsilon, h * epsilon), left)
        if exceeds_budget(system, initial.total_variation(), tv_budget):
            raise ParameterError("initial data exceed the total-variation budget")

        def to_physical(profile):
            return PhysicalSolution("backward", epsilon, profile.x * epsilon, profile.values, left)

        if record_every is not None:
            snaps.append(to_physical(initial))
        records = run_backward(system, initial, steps, stride=record_every or steps,
                               tv_budget=None, hooks=monitor)
        if record_every is not None:
            snaps.extend(to_physical(r.profile) for r in records)
        return to_physical(records[-1].profile), snaps
    n_min = int(math.floor(lo))
    n_max = int(math.ceil(hi))
    idx = np.arange(n_min, n_max + 1)
    cells = data.cell_averages(idx * epsilon, (idx + 1) * epsilon)
    initial = LatticeState(n_min, cells, left)
    if exceeds_budget(system, float(np.sum(np.linalg.norm(np.diff(
            np.concatenate([left[None], cells]), axis=0), axis=1))), tv_budget):
        raise ParameterError("initial data exceed the total-variation budget")

    def to_physical(state):
        return PhysicalSolution("semidiscrete", epsilon, state.indices * epsilon, state.cells, left)

    every = record_every or max(1, int(round(1.0 / dt)))
    if monitor is not None:
        monitor(initial)
    states = run_semidiscrete(system, initial, horizon, dt=dt, snapshot_every=every,
                              hooks=monitor)
    if record_every is not None:
        snaps = [to_physical(s) for s in states]
    return to_physical(states[-1]), snaps


def fine_grid(x_lo, x_hi, spacing):
    count = int(math.ceil((x_hi - x_lo) / spacing))
    return x_lo + spacing * (np.arange(count) + 0.5), (x_hi - x_lo) / count


def l1_distance(a, b, spacing):
    return float(np.sum(np.abs(np.asarray(a) - np.asarray(b))) * spacing)


@dataclass
class ConvergenceRecord:
    """Errors against a reference for decreasing epsilon, with a fitted order."""

    scheme: str
    epsilons: list = field(default_factory=list)
    errors: list = field(default_factory=list)
    runtimes: list = field(default_factory=list)
    failures: dict = field(default_factory=dict)
    order: Optional[float] = None

    def rows(self):
        return list(zip(self.epsilons, self.errors, self.runtimes))

    def strictly_decreasing(self) -> bool:
        return all(b < a for a, b in zip(self.errors, self.errors[1:]))


def fit_order(epsilons, errors) -> Optional[float]:
    """Least-squares slope of log(error) against log(epsilon)."""
    if len(epsilons) < 2:
        return None
    slope, _ = np.polyfit(np.log(epsilons), np.log(errors), 1)
    return float(slope)


def _window_hi(system, t_physical):
    return t_physical * system.speed_cap + 0.5


def epsilon_study(system: SystemSpec, problem, scheme: str,
                  epsilons: Sequence[float] = DEFAULT_EPSILONS, t_physical: float = 1.0,
                  x_lo: float = -0.1, dx: Optional[float] = None, dt: float = DEFAULT_DT,
                  reference: Optional[Callable] = None,
                  monitor: Optional[Callable] = None) -> ConvergenceRecord:
    """L1 error of ``scheme`` against a reference solution for each epsilon.

    The reference is exact for scalar convex and linear systems; otherwise a
    lattice run at epsilon_min / 4.  Per-epsilon failures are recorded, not
    raised.
    """
    epsilons = sorted((float(e) for e in epsilons), reverse=True)
    x_hi = _window_hi(system, t_physical)
    xs, spacing = fine_grid(x_lo, x_hi, min(epsilons) / 64)
    if reference is None:
        try:
            exact = reference_values(system, problem, t_physical, xs)
        except UnsupportedError:
            ref_eps = min(epsilons) / 4
            ref, _ = evolve_physical(system, problem, "semidiscrete", ref_eps, t_physical,
                                     x_lo=x_lo, dt=dt, monitor=monitor)
            exact = ref.sample(xs)
    else:
        exact = np.asarray(reference(xs), dtype=float).reshape(xs.size, -1)
    record = ConvergenceRecord(scheme)
    for eps in epsilons:
        start = _time.perf_counter()
        try:
            sol, _ = evolve_physical(system, problem, scheme, eps, t_physical, x_lo=x_lo,
                                     dx=dx, dt=dt, monitor=monitor)
        except SingularLimitsError as exc:
            record.failures[eps] = str(exc)
            continue
        record.epsilons.append(eps)
        record.errors.append(l1_distance(sol.sample(xs), exact, spacing))
        record.runtimes.append(_time.perf_counter() - start)
    record.order = fit_order(record.epsilons, record.errors)
    return record


def cross_scheme_agreement(system: SystemSpec, problem, epsilons=DEFAULT_EPSILONS,
                           t_physical: float = 1.0, x_lo: float = -0.1,
                           dx: Optional[float] = None, dt: float = DEFAULT_DT,
                           monitor: Optional[Callable] = None):
    """[(epsilon, L1 distance between the backward and lattice solutions)]."""
    epsilons = sorted((float(e) for e in epsilons), reverse=True)
    xs, spacing = fine_grid(x_lo, _window_hi(system, t_physical), min(epsilons) / 64)
    out = []
    for eps in epsilons:
        a, _ = evolve_physical(system, problem, "backward", eps, t_physical, x_lo=x_lo, dx=dx,
                               monitor=monitor)
        b, _ = evolve_physical(system, problem, "semidiscrete", eps, t_physical, x_lo=x_lo, dt=dt,
                               monitor=monitor)
        out.append((eps, l1_distance(a.sample(xs), b.sample(xs), spacing)))
    return out


def _native_distance(a: PhysicalSolution, b: PhysicalSolution):
    """L1 distance on the schemes' own grid (trapezoid nodes or cells)."""
    diff = np.sum(np.abs(a.values - b.values), axis=1)
    if a.scheme == "backward":
        h = a.positions[1] - a.positions[0]
        return float(np.trapezoid(diff, dx=h))
    return float(np.sum(diff) * a.epsilon)


def lipschitz_study(system: SystemSpec, pairs, scheme: str, epsilon: float,
                    t_physical: float, x_lo: float = -0.1, dx: Optional[float] = None,
                    dt: float = DEFAULT_DT, record_every: Optional[int] = None,
                    monitor: Optional[Callable] = None) -> float:
    """max over pairs and recorded times of d(t) / d(0) (L1 distances)."""
    if record_every is None:
        record_every = 1 if scheme == "backward" else max(1, int(round(1.0 / dt)))
    worst = 0.0
    for first, second in pairs:
        extent = (min(first.extent[0], second.extent[0]), max(first.extent[1], second.extent[1]))
        a_data = _with_extent(first, extent)
        b_data = _with_extent(second, extent)
        _, snaps_a = evolve_physical(system, a_data, scheme, epsilon, t_physical, x_lo=x_lo,
                                     dx=dx, dt=dt, record_every=record_every,
                                     monitor=monitor)
        _, snaps_b = evolve_physical(system, b_data, scheme, epsilon, t_physical, x_lo=x_lo,
                                     dx=dx, dt=dt, record_every=record_every,
                                     monitor=monitor)
        d0 = _native_distance(snaps_a[0], snaps_b[0])
        if not d0 > 0:
            raise ParameterError("pair members must differ initially (d0 > 0)")
        for sa, sb in zip(snaps_a, snaps_b):
            worst = max(worst, _native_distance(sa, sb) / d0)
    return worst


def _with_extent(data, extent):
    if isinstance(data, InitialProfile):
        return InitialProfile(data.func, data.left_state, extent)
    return InitialProfile(data, data.left_state, extent)


# --------------------------------------------------------------------------
# random small-TV data and the Lyapunov experiment
# --------------------------------------------------------------------------

def random_small_tv_data(system: SystemSpec, rng: np.random.Generator, tv: float = 0.05,
                         waves: int = 4, span=(0.0, 15.0), widths=(0.5, 2.0)) -> InitialProfile:
    """Sum of smooth steps of random directions whose jumps add up to ``tv``.

    Coordinates are rescaled (epsilon = 1).  The base state sits in the
    middle half of K0 so the data stay admissible.
    """
    lo, hi = system.box_lower, system.box_upper
    base = lo + (hi - lo) * rng.uniform(0.3, 0.7, size=lo.size)
    sizes = rng.dirichlet(np.ones(waves)) * tv
    dirs = rng.normal(size=(waves, system.dimension))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    centers = rng.uniform(span[0], span[1], size=waves)
    scales = rng.uniform(widths[0], widths[1], size=waves)
    jumps = sizes[:, None] * dirs

    def func(x):
        x = np.asarray(x, dtype=float)
        ramp = 0.5 * (1 + np.tanh((x[:, None] - centers) / scales))
        return base + ramp @ jumps

    extent = (span[0] - 15 * widths[1], span[1] + 15 * widths[1])
    return InitialProfile(func, func(np.array([extent[0] - 100.0]))[0], extent)


def lyapunov_experiment(system: SystemSpec, scheme: str, seed: int = 0, count: int = 20,
                        tv: float = 0.05, horizon: float = 80.0,
                        c0_values=DEFAULT_C0_SCAN, slack: float = DEFAULT_SLACK,
                        dx: Optional[float] = None, dt: float = DEFAULT_DT,
                        monitor: Optional[Callable] = None):
    """For ``count`` random data, the smallest working c0 (or None) per datum.

    Runs in rescaled units for ``horizon`` steps (backward) or time units
    (lattice, snapshots every unit of time).
    """
    rng = np.random.default_rng(seed)
    results = []
    for _ in range(count):
        data = random_small_tv_data(system, rng, tv=tv)
        states = rescaled_run(system, data, scheme, horizon, dx=dx, dt=dt)
        if monitor is not None:
            for st in states:
                monitor(st)
        c0, reports = lyapunov_scan(system, states, c0_values, slack)
        results.append((c0, reports))
    return results


def rescaled_run(system: SystemSpec, data, scheme: str, horizon: float,
                 dx: Optional[float] = None, dt: float = DEFAULT_DT, snapshot_time: float = 1.0):
    """Run at epsilon = 1 and return the scheme-native record (states)."""
    lo, hi = _window(system, data, 1.0, horizon, data.extent[0])
    left = np.asarray(data.left_state, dtype=float)
    if scheme == "backward":
        h = default_dx(system) if dx is None else dx
        count = int(math.ceil((hi - lo) / h)) + 1
        x = lo + h * np.arange(count)
        initial = GridFunction(lo, h, data.node_values(x, h), left)
        return run_backward(system, initial, int(round(horizon)), tv_budget=None)
    idx = np.arange(int(math.floor(lo)), int(math.ceil(hi)) + 1)
    initial = LatticeState(int(idx[0]), data.cell_averages(idx.astype(float), idx + 1.0), left)
    every = max(1, int(round(snapshot_time / dt)))
    return run_semidiscrete(system, initial, horizon, dt=dt, snapshot_every=every)


def perturbed_pairs(system: SystemSpec, rng: np.random.Generator, count: int = 5,
                    distance: float = 0.005, tv: float = 0.04, scale: float = 1.0):
    """Pairs (a, a + bump) of small-TV data whose L1 distance is ``distance``.

    The bump is a unit-mass Gaussian along a random unit direction.  Spatial
    features are stretched by ``scale`` (use epsilon to get physical data
    that resolve on the rescaled grids).
    """
    pairs = []
    for _ in range(count):
        base = random_small_tv_data(system, rng, tv=tv)
        direction = rng.normal(size=system.dimension)
        direction *= distance / np.sum(np.abs(direction))
        center = rng.uniform(2.0, 10.0)

        def first(x, f=base.func):
            return f(np.asarray(x) / scale)

        def second(x, f=base.func, d=direction, c=center):
            y = np.asarray(x) / scale
            return f(y) + np.exp(-(y - c) ** 2)[:, None] / (math.sqrt(math.pi) * scale) * d

        extent = (base.extent[0] * scale, base.extent[1] * scale)
        pairs.append((InitialProfile(first, base.left_state, extent),
                      InitialProfile(second, base.left_state, extent)))
    return pairs
