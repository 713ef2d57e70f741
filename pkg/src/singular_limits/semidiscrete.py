"""Semi-discrete upwind scheme  du_n/dt + f(u_n) - f(u_{n-1}) = 0.

The lattice lives on a finite window of cells ``n_min, ..., n_min + M - 1``;
every cell left of the window holds ``left_state`` (all speeds are positive,
so nothing enters from the right).  Cell ``n`` represents the rescaled
interval [n, n + 1).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .backward import EDGE_TOLERANCE, check_window
from .errors import DomainError, ParameterError, WindowError
from .systems import SystemSpec

DEFAULT_DT = 0.05


@dataclass(frozen=True, eq=False)
class LatticeState:
    """Cell values u_n(t) on a window, plus the boundary-flux ledger.

    ``outflow`` accumulates the time integral of f(u_last) - f(left_state),
    the only way the window mass sum_n (u_n - left_state) can change.
    """

    n_min: int
    cells: np.ndarray
    left_state: np.ndarray
    time: float = 0.0
    outflow: Optional[np.ndarray] = None

    def __post_init__(self):
        cells = np.asarray(self.cells, dtype=float)
        if cells.ndim == 1:
            cells = cells[:, None]
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "left_state",
                           np.asarray(self.left_state, dtype=float).reshape(cells.shape[1]))
        outflow = np.zeros(cells.shape[1]) if self.outflow is None else self.outflow
        object.__setattr__(self, "outflow", np.asarray(outflow, dtype=float).reshape(cells.shape[1]))
        if self.time < 0:
            raise ParameterError("time must be nonnegative")

    @property
    def size(self) -> int:
        return self.cells.shape[0]

    @property
    def dimension(self) -> int:
        return self.cells.shape[1]

    @property
    def indices(self) -> np.ndarray:
        return self.n_min + np.arange(self.size)

    def mass(self) -> np.ndarray:
        return np.sum(self.cells - self.left_state, axis=0)

    def conserved_total(self) -> np.ndarray:
        """Window mass plus everything that left through the right edge."""
        return self.mass() + self.outflow

    @classmethod
    def from_function(cls, func, n_min, n_max, left_state=None, time=0.0):
        """Cells n_min..n_max with values ``func(n)`` (shape ``(M, n)`` or ``(M,)``)."""
        idx = np.arange(n_min, n_max + 1)
        cells = np.asarray(func(idx), dtype=float)
        if cells.ndim == 1:
            cells = cells[:, None]
        if left_state is None:
            left_state = cells[0]
        return cls(int(n_min), cells, left_state, time)


def lattice_riemann(left, right, n_min, n_max, jump_at=0) -> LatticeState:
    """Cells n < jump_at hold ``left``, cells n >= jump_at hold ``right``."""
    left = np.atleast_1d(np.asarray(left, dtype=float))
    right = np.atleast_1d(np.asarray(right, dtype=float))
    return LatticeState.from_function(
        lambda n: np.where((n < jump_at)[:, None], left, right), n_min, n_max, left_state=left)


def lattice_delta(n_min, n_max, at=0, mass=1.0, direction=None, base=None) -> LatticeState:
    """Kronecker delta of size ``mass`` along ``direction`` on top of ``base``."""
    direction = np.atleast_1d(np.asarray(1.0 if direction is None else direction, dtype=float))
    base = np.zeros(direction.size) if base is None else np.atleast_1d(np.asarray(base, dtype=float))

    def func(n):
        return base + ((n == at) * mass)[:, None] * direction

    return LatticeState.from_function(func, n_min, n_max, left_state=base)


def lattice_difference(state: LatticeState) -> np.ndarray:
    """v_n = u_n - u_{n-1}, using ``left_state`` as the ghost for the first cell."""
    padded = np.concatenate([state.left_state[None], state.cells])
    return np.diff(padded, axis=0)


def _flux_differences(system, cells, left_state):
    f = system.flux(cells)
    f_left = system.flux(left_state)
    return f - np.concatenate([f_left[None], f[:-1]]), f[-1] - f_left


def semidiscrete_rhs(system: SystemSpec, state: LatticeState) -> np.ndarray:
    """du_n/dt = -(f(u_n) - f(u_{n-1})) for every cell of the window."""
    diff, _ = _flux_differences(system, state.cells, state.left_state)
    return -diff


def _rk4_step(system, cells, outflow, left, dt):
    def rates(u):
        diff, edge = _flux_differences(system, u, left)
        return -diff, edge

    k1, e1 = rates(cells)
    k2, e2 = rates(cells + 0.5 * dt * k1)
    k3, e3 = rates(cells + 0.5 * dt * k2)
    k4, e4 = rates(cells + dt * k3)
    cells = cells + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    outflow = outflow + (dt / 6.0) * (e1 + 2.0 * e2 + 2.0 * e3 + e4)
    return cells, outflow


def _check(system, cells, time, edge_tolerance):
    inside = system.contains(cells)
    if not np.all(inside):
        raise DomainError("semi-discrete state left K1",
                          index=int(np.flatnonzero(~inside)[0]), time=time)
    edge = check_window(cells, tolerance=edge_tolerance)
    if edge is not None:
        raise WindowError("variation reached the outflow end of the window", index=edge, time=time)


def step_count(t_final: float, dt: float) -> int:
    return int(np.ceil(t_final / dt - 1e-9))


def integrate(system: SystemSpec, initial: LatticeState, t_final: float,
              hooks: Optional[Callable[[LatticeState], None]] = None,
              dt: float = DEFAULT_DT, hook_every: int = 1,
              edge_tolerance: float = EDGE_TOLERANCE) -> LatticeState:
    """Advance the lattice ODE to ``initial.time + t_final`` with fixed-step RK4.

    The step is shrunk uniformly so that it divides ``t_final``.  ``hooks``
    receives the state every ``hook_every`` steps and after the last one.
    """
    if t_final < 0:
        raise ParameterError("t_final must be nonnegative")
    if not dt > 0:
        raise ParameterError("dt must be positive")
    if initial.dimension != system.dimension:
        raise ParameterError("lattice dimension does not match the system")
    if t_final == 0:
        return initial
    steps = step_count(t_final, dt)
    h = t_final / steps
    cells = initial.cells.copy()
    outflow = initial.outflow.copy()
    left = initial.left_state
    state = initial
    for k in range(1, steps + 1):
        cells, outflow = _rk4_step(system, cells, outflow, left, h)
        time = initial.time + k * h if k < steps else initial.time + t_final
        _check(system, cells, time, edge_tolerance)
        if hooks is not None and (k % hook_every == 0 or k == steps):
            state = LatticeState(initial.n_min, cells.copy(), left, time, outflow.copy())
            hooks(state)
        elif k == steps:
            state = LatticeState(initial.n_min, cells.copy(), left, time, outflow.copy())
    return state


def run_semidiscrete(system: SystemSpec, initial: LatticeState, t_final: float,
                     dt: float = DEFAULT_DT, snapshot_every: int = 1,
                     hooks: Optional[Callable[[LatticeState], None]] = None,
                     edge_tolerance: float = EDGE_TOLERANCE) -> list:
    """Integrate and return the initial state plus every recorded snapshot."""
    snapshots = [initial]

    def record(state):
        snapshots.append(state)
        if hooks is not None:
            hooks(state)

    integrate(system, initial, t_final, hooks=record, dt=dt, hook_every=snapshot_every,
              edge_tolerance=edge_tolerance)
    return snapshots


def integrate_linearized(system: SystemSpec, initial: LatticeState, h0, t_final: float,
                         dt: float = DEFAULT_DT):
    """Advance (u, h) with dh_n/dt = -Df(u_n) h_n + Df(u_{n-1}) h_{n-1} by the same RK4.

    Returns ``(state, h)``.  The perturbation vanishes on the ghost cells.
    """
    from .functionals import linearized_semidiscrete_rhs

    steps = step_count(t_final, dt)
    h = t_final / steps if steps else 0.0
    cells = initial.cells.copy()
    tangent = np.asarray(h0, dtype=float).reshape(cells.shape).copy()
    left = initial.left_state

    def rates(u, w):
        st = LatticeState(initial.n_min, u, left)
        return semidiscrete_rhs(system, st), linearized_semidiscrete_rhs(system, st, w)

    for _ in range(steps):
        a1, b1 = rates(cells, tangent)
        a2, b2 = rates(cells + 0.5 * h * a1, tangent + 0.5 * h * b1)
        a3, b3 = rates(cells + 0.5 * h * a2, tangent + 0.5 * h * b2)
        a4, b4 = rates(cells + h * a3, tangent + h * b3)
        cells = cells + (h / 6.0) * (a1 + 2 * a2 + 2 * a3 + a4)
        tangent = tangent + (h / 6.0) * (b1 + 2 * b2 + 2 * b3 + b4)
    state = LatticeState(initial.n_min, cells, left, initial.time + t_final)
    return state, tangent

