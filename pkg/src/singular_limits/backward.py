"""Backward semigroup scheme u_n - u_{n-1} + A(u_n) u_{n,x} = 0.

Each step is recast as the spatial ODE

    du_n/dx = A(u_n)^{-1} (u_{n-1}(x) - u_n(x)),    u_n(x_min) = left_state,

and marched left to right with classical RK4 on the grid.  Marching in the
direction of the flow is well posed because every eigenvalue of A is at
least kappa > 0.  All coordinates are rescaled so that epsilon = 1.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import _jit
from .errors import DomainError, ParameterError, WindowError
from .systems import SystemSpec

#: fraction of the grid at the outflow end that must stay free of variation
EDGE_FRACTION = 0.05
#: total variation tolerated inside the outflow strip
EDGE_TOLERANCE = 1e-8
#: default smallness budget for Tot.Var.(u_0)
TV_BUDGET = 0.1


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Node values of a state profile on a uniform grid.

    ``values`` has shape ``(N, n)``.  ``slope``, when present, holds the
    exact node derivative produced by the march; otherwise derivatives are
    taken by centred differences.
    """

    x_min: float
    dx: float
    values: np.ndarray
    left_state: np.ndarray
    slope: Optional[np.ndarray] = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "left_state",
                           np.asarray(self.left_state, dtype=float).reshape(values.shape[1]))
        if self.slope is not None:
            object.__setattr__(self, "slope", np.asarray(self.slope, dtype=float).reshape(values.shape))
        if not self.dx > 0:
            raise ParameterError("grid spacing must be positive")

    @property
    def size(self) -> int:
        return self.values.shape[0]

    @property
    def dimension(self) -> int:
        return self.values.shape[1]

    @property
    def x(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(self.size)

    @property
    def x_max(self) -> float:
        return self.x_min + self.dx * (self.size - 1)

    def derivative(self) -> np.ndarray:
        """Node derivative: stored slope, else centred (one-sided at the ends)."""
        if self.slope is not None:
            return self.slope
        return np.gradient(self.values, self.dx, axis=0)

    def total_variation(self) -> float:
        """Euclidean total variation of the node values (from left_state)."""
        jumps = np.diff(np.concatenate([self.left_state[None], self.values]), axis=0)
        return float(np.sum(np.linalg.norm(jumps, axis=1)))

    def mass(self) -> np.ndarray:
        """Trapezoidal integral of (u - left_state)."""
        return np.trapezoid(self.values - self.left_state, dx=self.dx, axis=0)

    def same_grid(self, other: "GridFunction") -> bool:
        return (self.size == other.size and self.dx == other.dx and self.x_min == other.x_min)

    @classmethod
    def from_function(cls, func, x_min, x_max, dx, left_state=None):
        """Sample ``func(x) -> (N, n)`` (or ``(N,)``) on the grid covering [x_min, x_max]."""
        count = int(round((x_max - x_min) / dx)) + 1
        x = x_min + dx * np.arange(count)
        values = np.asarray(func(x), dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if left_state is None:
            left_state = values[0]
        return cls(x_min, dx, values, left_state)


@dataclass(frozen=True, eq=False)
class BackwardRunState:
    """The pair (u_n, u_{n-1}) recorded after step ``step_index``."""

    step_index: int
    profile: GridFunction
    previous: Optional[GridFunction] = None


def riemann_profile(left, right, x_min, x_max, dx, jump_at=0.0) -> GridFunction:
    """Riemann data on the grid; a node falling exactly on the jump takes the mean."""
    left = np.atleast_1d(np.asarray(left, dtype=float))
    right = np.atleast_1d(np.asarray(right, dtype=float))

    def func(x):
        out = np.where((x < jump_at)[:, None], left, right)
        at = np.isclose(x, jump_at, rtol=0, atol=1e-9 * dx)
        out[at] = 0.5 * (left + right)
        return out

    return GridFunction.from_function(func, x_min, x_max, dx, left_state=left)


def spike_profile(x_min, x_max, dx, center=0.0, width=None, mass=1.0, direction=None,
                  base=None) -> GridFunction:
    """Base state plus a hat of half-width ``width`` and integral ``mass`` along ``direction``.

    The hat approximates a Dirac mass; the default width is 10 dx.
    """
    if width is None:
        width = 10 * dx
    direction = np.atleast_1d(np.asarray(1.0 if direction is None else direction, dtype=float))
    base = np.zeros(direction.size) if base is None else np.atleast_1d(np.asarray(base, dtype=float))

    def func(x):
        hat = np.clip(1.0 - np.abs(x - center) / width, 0.0, None) * (mass / width)
        return base + hat[:, None] * direction

    return GridFunction.from_function(func, x_min, x_max, dx, left_state=base)


def _solver(system: SystemSpec):
    """Return ``rhs(u, p) = A(u)^{-1}(p - u)`` specialised to small dimensions."""
    jac = system.jacobian
    n = system.dimension
    if n == 1:
        def rhs(u, p):
            return (p - u) / jac(u)[0]
    elif n == 2:
        def rhs(u, p):
            J = jac(u)
            a, b, c, d = J[0, 0], J[0, 1], J[1, 0], J[1, 1]
            det = a * d - b * c
            r0, r1 = p[0] - u[0], p[1] - u[1]
            return np.array([(d * r0 - b * r1) / det, (a * r1 - c * r0) / det])
    else:
        def rhs(u, p):
            return np.linalg.solve(jac(u), p - u)
    return rhs


def _march(system, previous: GridFunction):
    lower = system.box_lower - system.margin
    upper = system.box_upper + system.margin
    if system.jit_kind is not None:
        values, slope, bad = _jit.march(system.jit_kind, system.jit_params, previous.values,
                                         previous.left_state, previous.dx, lower, upper)
        if bad >= 0:
            raise DomainError("backward step escaped K1", index=int(bad))
        return values, slope
    rhs = _solver(system)
    p = previous.values
    mid = 0.5 * (p[:-1] + p[1:])
    h = previous.dx
    N = previous.size
    out = np.empty_like(p)
    slope = np.empty_like(p)
    u = previous.left_state.copy()
    out[0] = u
    for i in range(N - 1):
        k1 = rhs(u, p[i])
        slope[i] = k1
        k2 = rhs(u + 0.5 * h * k1, mid[i])
        k3 = rhs(u + 0.5 * h * k2, mid[i])
        k4 = rhs(u + h * k3, p[i + 1])
        u = u + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out[i + 1] = u
        if not (np.all(u >= lower) and np.all(u <= upper)):
            # the enlarged box contains K1; a state outside it has left K1
            raise DomainError("backward step escaped K1", index=i + 1)
    slope[N - 1] = rhs(u, p[N - 1])
    return out, slope


def backward_step(system: SystemSpec, previous: GridFunction) -> GridFunction:
    """One step of the backward scheme, u_{n-1} -> u_n.

    Raises :class:`DomainError` (with the first offending node) if the
    marched solution leaves K1.
    """
    if previous.dimension != system.dimension:
        raise ParameterError("profile dimension does not match the system")
    system.check_states(previous.values, what="previous profile")
    values, slope = _march(system, previous)
    inside = system.contains(values)
    if not np.all(inside):
        raise DomainError("backward step left K1", index=int(np.flatnonzero(~inside)[0]))
    return GridFunction(previous.x_min, previous.dx, values, previous.left_state, slope)


def backward_residual(system: SystemSpec, previous: GridFunction, current: GridFunction) -> float:
    """L1 norm of u_n - u_{n-1} + A(u_n) u_{n,x} with centred u_{n,x} at interior nodes."""
    u = current.values
    ux = (u[2:] - u[:-2]) / (2 * current.dx)
    A = system.jacobian(u[1:-1])
    res = u[1:-1] - previous.values[1:-1] + np.einsum("kij,kj->ki", A, ux)
    return float(np.sum(np.abs(res)) * current.dx)


def check_window(values, left_state=None, fraction=EDGE_FRACTION, tolerance=EDGE_TOLERANCE):
    """Index of the first node in the outflow strip if it carries variation, else None."""
    values = np.asarray(values)
    count = values.shape[0]
    strip = max(2, int(np.ceil(fraction * count)))
    tail = values[count - strip:]
    variation = np.sum(np.abs(np.diff(tail, axis=0)), axis=1)
    if np.sum(variation) > tolerance:
        return count - strip + int(np.argmax(variation > 0))
    return None


def exceeds_budget(system: SystemSpec, tv: float, budget: Optional[float]) -> bool:
    """Smallness matters only for systems; scalar convex laws take data of any size."""
    return budget is not None and system.dimension > 1 and tv > budget


def run_backward(system: SystemSpec, initial: GridFunction, steps: int,
                 hooks: Optional[Callable[[BackwardRunState], None]] = None,
                 stride: int = 1, tv_budget: Optional[float] = TV_BUDGET,
                 edge_tolerance: float = EDGE_TOLERANCE) -> list:
    """Iterate :func:`backward_step` and record every ``stride``-th state.

    ``hooks`` is called after every step with the new :class:`BackwardRunState`.
    The final step is always recorded.  Errors carry the failing step index.
    """
    if steps < 1:
        raise ParameterError("steps must be >= 1")
    if stride < 1:
        raise ParameterError("stride must be >= 1")
    if exceeds_budget(system, initial.total_variation(), tv_budget):
        raise ParameterError(
            f"Tot.Var. of initial data {initial.total_variation():.4g} exceeds budget {tv_budget:g}")
    records = []
    prev = initial
    for n in range(1, steps + 1):
        try:
            cur = backward_step(system, prev)
        except DomainError as exc:
            exc.step = n
            raise
        edge = check_window(cur.values, tolerance=edge_tolerance)
        if edge is not None:
            raise WindowError("variation reached the outflow end of the grid", index=edge, step=n)
        state = BackwardRunState(n, cur, prev)
        if hooks is not None:
            hooks(state)
        if n % stride == 0 or n == steps:
            records.append(state)
        prev = cur
    return records


def conservation_defect(system: SystemSpec, previous: GridFunction, current: GridFunction) -> float:
    """max_k |mass change + f(u_n)(x_max) - f(left)| for one step.

    The scheme is in conservation form, u_n - u_{n-1} = -f(u_n)_x, so the
    trapezoidal mass changes only through the flux leaving the right edge.
    """
    balance = (current.mass() - previous.mass()
               + system.flux(current.values[-1]) - system.flux(current.left_state))
    return float(np.max(np.abs(balance)))
