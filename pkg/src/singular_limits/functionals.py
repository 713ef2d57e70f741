"""Wave decompositions, interaction potentials, Lyapunov tracking and linearised evolutions.

Backward profiles are decomposed pointwise, u_x = sum_i v^i r_i(u); lattice
differences u_n - u_{n-1} along the eigenvectors of the averaged matrix
A(u_{n-1}, u_n).  The potentials weight products of strengths of different
families (i < j) by P0 (continuous) or P (lattice) from :mod:`kernels`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.signal import lfilter

from . import _jit
from .backward import BackwardRunState, GridFunction, _march
from .errors import DomainError, ParameterError
from .kernels import weight_decay_rates
from .semidiscrete import LatticeState, lattice_difference, semidiscrete_rhs
from .systems import (SystemSpec, averaged_spectral_arrays, directional_jacobian,
                      spectral_arrays)

BASIS_POINTWISE = "pointwise"
BASIS_AVERAGED = "averaged"
DEFAULT_C0_SCAN = (1.0, 5.0, 10.0, 50.0)
DEFAULT_SLACK = 1e-4


@dataclass(frozen=True, eq=False)
class WaveComponents:
    """Strengths v^i (shape ``(N, n)``) of ``vectors`` in the basis ``right``.

    ``spacing`` is the measure of one location (dx for profiles, 1 for cells).
    """

    strengths: np.ndarray
    vectors: np.ndarray
    right: np.ndarray
    eigenvalues: np.ndarray
    basis: str
    spacing: float = 1.0

    def reconstruction_error(self) -> float:
        """max |sum_i v^i r_i - vector| over locations."""
        rebuilt = np.einsum("ki,kij->kj", self.strengths, self.right)
        return float(np.max(np.abs(rebuilt - self.vectors))) if len(self.vectors) else 0.0

    def total_variation(self) -> float:
        return float(np.sum(np.abs(self.strengths)) * self.spacing)


@dataclass(frozen=True)
class FunctionalReport:
    """Tot.Var., Q, Tot.Var. + c0 Q and the source size at one step or snapshot."""

    step: float
    total_variation: float
    interaction_potential: float
    lyapunov: float
    c0: float
    source_magnitude: float
    flagged: bool = False


# --------------------------------------------------------------------------
# decompositions
# --------------------------------------------------------------------------

def _pointwise_basis(system, states):
    return spectral_arrays(system.jacobian(states))


def decompose_backward(system: SystemSpec, profile: GridFunction) -> WaveComponents:
    """v^i = l^i(u) . u_x at every node, using the stored march slope when present."""
    ux = profile.derivative()
    lam, right, left = _pointwise_basis(system, profile.values)
    strengths = np.einsum("kij,kj->ki", left, ux)
    return WaveComponents(strengths, ux, right, lam, BASIS_POINTWISE, profile.dx)


def decompose_semidiscrete(system: SystemSpec, state: LatticeState) -> WaveComponents:
    """v^i_n = l^i_n . (u_n - u_{n-1}) in the basis of A(u_{n-1}, u_n)."""
    diffs = lattice_difference(state)
    lower = np.concatenate([state.left_state[None], state.cells[:-1]])
    lam, right, left = averaged_spectral_arrays(system, lower, state.cells)
    strengths = np.einsum("kij,kj->ki", left, diffs)
    return WaveComponents(strengths, diffs, right, lam, BASIS_AVERAGED, 1.0)


# --------------------------------------------------------------------------
# interaction potentials
# --------------------------------------------------------------------------

def weighted_pair_sum(a, b, ratio, flat):
    """sum_{k,m} W(k - m) a_k b_m with W = flat for k >= m and flat ratio^{m-k} otherwise.

    Both sequences live on the same uniform index set; O(N) via a backward
    recursion for the exponentially weighted suffix sums.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    prefix = np.cumsum(b)
    # G_k = sum_{m >= k} ratio^{m-k} b_m
    G = lfilter([1.0], [1.0, -ratio], b[::-1])[::-1]
    suffix = G - b
    return float(flat * np.dot(a, prefix + suffix))


def _pairs(n):
    return [(i, j) for i in range(n) for j in range(i + 1, n)]


def potential_backward(system: SystemSpec, current: WaveComponents,
                       previous: WaveComponents, dx: Optional[float] = None) -> float:
    """Discrete Q(u_n, u_{n-1}) with weight P0 and cell weights dx^2."""
    n = current.strengths.shape[1]
    if n < 2:
        return 0.0
    if current.strengths.shape != previous.strengths.shape:
        raise ParameterError("components must share the grid")
    dx = current.spacing if dx is None else dx
    beta, _ = weight_decay_rates(system)
    ratio = np.exp(-beta * dx)
    flat = 1.0 / system.separation
    cur = np.abs(current.strengths)
    prev = np.abs(previous.strengths)
    total = 0.0
    for i, j in _pairs(n):
        total += weighted_pair_sum(cur[:, i], cur[:, j], ratio, flat)
        total += weighted_pair_sum(prev[:, i], cur[:, j], ratio, flat)
        total += weighted_pair_sum(cur[:, i], prev[:, j], ratio, flat)
    return total * dx * dx


def _shift_down(values):
    """Sequence w_n = values_{n-1}, one longer, with a zero for the ghost cell."""
    return np.concatenate([np.zeros((1,) + values.shape[1:]), values])


def potential_semidiscrete(system: SystemSpec, state: LatticeState,
                           components: Optional[WaveComponents] = None) -> float:
    """Lattice Q(u(t)) with weight P and absolute values on every product."""
    if system.dimension < 2:
        return 0.0
    comps = decompose_semidiscrete(system, state) if components is None else components
    _, ratio = weight_decay_rates(system)
    flat = 1.0 / system.separation
    v = np.abs(comps.strengths)
    padded = np.concatenate([v, np.zeros((1, v.shape[1]))])
    shifted = _shift_down(v)
    total = 0.0
    for i, j in _pairs(system.dimension):
        total += weighted_pair_sum(padded[:, i], padded[:, j], ratio, flat)
        total += weighted_pair_sum(shifted[:, i], padded[:, j], ratio, flat)
        total += weighted_pair_sum(padded[:, i], shifted[:, j], ratio, flat)
    return total


# --------------------------------------------------------------------------
# source terms
# --------------------------------------------------------------------------

def _left_derivative(system, u, direction, averaged_with=None, direction_other=None):
    """Central difference of the left eigenvectors along a state perturbation.

    The perturbation is rescaled to a fixed size 1e-6 so that the finite
    difference stays accurate for both large and tiny directions.
    """
    scale = float(np.max(np.abs(direction)))
    if averaged_with is not None:
        scale = max(scale, float(np.max(np.abs(direction_other))))
    if scale == 0:
        n = u.shape[-1]
        return np.zeros(u.shape[:-1] + (n, n))
    eta = 1e-6 / scale
    if averaged_with is None:
        plus = spectral_arrays(system.jacobian(u + eta * direction))[2]
        minus = spectral_arrays(system.jacobian(u - eta * direction))[2]
    else:
        plus = averaged_spectral_arrays(system, averaged_with + eta * direction_other,
                                        u + eta * direction)[2]
        minus = averaged_spectral_arrays(system, averaged_with - eta * direction_other,
                                         u - eta * direction)[2]
    return (plus - minus) / (2 * eta)


def backward_component_lhs(system: SystemSpec, previous: GridFunction,
                           current: GridFunction) -> np.ndarray:
    """v^i_n - v^i_{n-1} + (lam_{i,n} v^i_n)_x at every node, shape ``(N, n)``.

    With the exact march slope, lam_i v^i = l^i(u_n).(u_{n-1} - u_n) and its
    x-derivative follows from the product rule; otherwise centred differences.
    """
    cur = decompose_backward(system, current)
    prev = decompose_backward(system, previous)
    lam, _, left = _pointwise_basis(system, current.values)
    if current.slope is not None:
        ux = current.slope
        drift = previous.values - current.values
        dleft = _left_derivative(system, current.values, ux)
        flux_part = (np.einsum("kij,kj->ki", dleft, drift)
                     + np.einsum("kij,kj->ki", left, previous.derivative() - ux))
    else:
        flux_part = np.gradient(lam * cur.strengths, current.dx, axis=0)
    return cur.strengths - prev.strengths + flux_part


def semidiscrete_component_lhs(system: SystemSpec, state: LatticeState) -> np.ndarray:
    """d/dt v^i_n + lam_{i,n} v^i_n - lam_{i,n-1} v^i_{n-1} for every cell."""
    comps = decompose_semidiscrete(system, state)
    diffs = comps.vectors
    rates = semidiscrete_rhs(system, state)
    lower = np.concatenate([state.left_state[None], state.cells[:-1]])
    lower_rates = np.concatenate([np.zeros((1, state.dimension)), rates[:-1]])
    _, _, left = averaged_spectral_arrays(system, lower, state.cells)
    dleft = _left_derivative(system, state.cells, rates, averaged_with=lower,
                             direction_other=lower_rates)
    vdot = (np.einsum("kij,kj->ki", dleft, diffs)
            + np.einsum("kij,kj->ki", left, rates - lower_rates))
    flux = comps.eigenvalues * comps.strengths
    return vdot + flux - _shift_down(flux)[:-1]


def component_residual(system: SystemSpec, state) -> float:
    """L1 size of the conservation-form left-hand side of the component equations.

    ``state`` is a :class:`BackwardRunState` (with its previous profile) or a
    :class:`LatticeState`.  The left-hand side equals the quadratic source
    terms, so this is the aggregate source magnitude.
    """
    if isinstance(state, BackwardRunState):
        if state.previous is None:
            return 0.0
        lhs = backward_component_lhs(system, state.previous, state.profile)
        return float(np.sum(np.abs(lhs)) * state.profile.dx)
    lhs = semidiscrete_component_lhs(system, state)
    return float(np.sum(np.abs(lhs)))


# --------------------------------------------------------------------------
# Lyapunov functional
# --------------------------------------------------------------------------

def functional_series(system: SystemSpec, states: Sequence, with_source: bool = True):
    """Per-state (label, Tot.Var., Q, source) tuples for a run record.

    Backward records are lists of :class:`BackwardRunState`; lattice records
    lists of :class:`LatticeState`.
    """
    rows = []
    for st in states:
        if isinstance(st, BackwardRunState):
            cur = decompose_backward(system, st.profile)
            if st.previous is not None:
                prev = decompose_backward(system, st.previous)
                q = potential_backward(system, cur, prev)
            else:
                q = potential_backward(system, cur, cur) if system.dimension > 1 else 0.0
            label = st.step_index
        else:
            cur = decompose_semidiscrete(system, st)
            q = potential_semidiscrete(system, st, cur)
            label = st.time
        src = component_residual(system, st) if with_source else float("nan")
        rows.append((label, cur.total_variation(), q, src))
    return rows


def reports_from_series(rows, c0: float, slack: float = DEFAULT_SLACK):
    reports = []
    last = None
    for label, tv, q, src in rows:
        value = tv + c0 * q
        flagged = last is not None and value > last + slack
        reports.append(FunctionalReport(label, tv, q, value, c0, src, flagged))
        last = value
    return reports


def lyapunov_track(system: SystemSpec, states: Sequence, c0: float,
                   slack: float = DEFAULT_SLACK) -> list:
    """FunctionalReport per recorded state; increases beyond ``slack`` are flagged."""
    return reports_from_series(functional_series(system, states), c0, slack)


def lyapunov_scan(system: SystemSpec, states: Sequence, c0_values=DEFAULT_C0_SCAN,
                  slack: float = DEFAULT_SLACK, with_source: bool = False):
    """Smallest c0 in ``c0_values`` whose functional never increases beyond ``slack``.

    Returns ``(c0 or None, reports for that c0 or for the largest c0 tried)``.
    """
    rows = functional_series(system, states, with_source=with_source)
    reports = []
    for c0 in sorted(c0_values):
        reports = reports_from_series(rows, c0, slack)
        if not any(r.flagged for r in reports):
            return c0, reports
    return None, reports


# --------------------------------------------------------------------------
# linearised evolutions
# --------------------------------------------------------------------------

def _march_linearized_python(system, p, q, left, h, step):
    N, n = p.shape
    lower = system.box_lower - system.margin
    upper = system.box_upper + system.margin

    def rhs(u, w, pp, qq):
        J = system.jacobian(u)
        du = np.linalg.solve(J, pp - u)
        dA = directional_jacobian(system, u, w, step)
        return du, np.linalg.solve(J, qq - w - dA @ du)

    out = np.empty_like(p)
    tan = np.empty_like(q)
    u = left.copy()
    w = np.zeros(n)
    out[0], tan[0] = u, w
    for i in range(N - 1):
        pm, qm = 0.5 * (p[i] + p[i + 1]), 0.5 * (q[i] + q[i + 1])
        a1, b1 = rhs(u, w, p[i], q[i])
        a2, b2 = rhs(u + 0.5 * h * a1, w + 0.5 * h * b1, pm, qm)
        a3, b3 = rhs(u + 0.5 * h * a2, w + 0.5 * h * b2, pm, qm)
        a4, b4 = rhs(u + h * a3, w + h * b3, p[i + 1], q[i + 1])
        u = u + (h / 6) * (a1 + 2 * a2 + 2 * a3 + a4)
        w = w + (h / 6) * (b1 + 2 * b2 + 2 * b3 + b4)
        out[i + 1], tan[i + 1] = u, w
        if np.any(u < lower) or np.any(u > upper):
            return out, tan, i + 1
    return out, tan, -1


def linearized_backward_step(system: SystemSpec, u_prev: GridFunction, u_curr: GridFunction,
                             h_prev: GridFunction, step: float = 1e-5) -> GridFunction:
    """Tangent h_n of the backward step at u_{n-1} in the direction h_{n-1}.

    Solves h_n - h_{n-1} + A(u_n) h_{n,x} + (DA(u_n) h_n) u_{n,x} = 0 by the
    same RK4 march as the state, which is marched alongside; DA comes from
    central differences of the Jacobian with the given ``step``.
    """
    if not (u_prev.same_grid(u_curr) and u_prev.same_grid(h_prev)):
        raise ParameterError("u_prev, u_curr and h_prev must share the grid")
    lower = system.box_lower - system.margin
    upper = system.box_upper + system.margin
    if system.jit_kind is not None:
        values, tangent, bad = _jit.march_linearized(
            system.jit_kind, system.jit_params, u_prev.values, h_prev.values,
            u_prev.left_state, u_prev.dx, lower, upper, step)
    else:
        values, tangent, bad = _march_linearized_python(
            system, u_prev.values, h_prev.values, u_prev.left_state, u_prev.dx, step)
    if bad >= 0:
        raise DomainError("linearised march escaped K1", index=int(bad))
    mismatch = float(np.max(np.abs(values - u_curr.values)))
    if mismatch > 1e-9 * max(1.0, float(np.max(np.abs(u_curr.values)))):
        raise ParameterError(f"u_curr is not backward_step(u_prev) (mismatch {mismatch:.3g})")
    return GridFunction(u_prev.x_min, u_prev.dx, tangent, np.zeros(system.dimension))


def linearized_semidiscrete_rhs(system: SystemSpec, state: LatticeState, h) -> np.ndarray:
    """dh_n/dt = -Df(u_n) h_n + Df(u_{n-1}) h_{n-1}, with h = 0 on the ghost cell."""
    h = np.asarray(h, dtype=float).reshape(state.cells.shape)
    J = system.jacobian(state.cells)
    Jh = np.einsum("kij,kj->ki", J, h)
    return -Jh + _shift_down(Jh)[:-1]


def divided_difference_backward(system: SystemSpec, u_prev: GridFunction, h_prev: GridFunction,
                                delta: float = 1e-6) -> GridFunction:
    """(backward_step(u_prev + delta h_prev) - backward_step(u_prev)) / delta."""
    base, _ = _march(system, u_prev)
    bumped = GridFunction(u_prev.x_min, u_prev.dx, u_prev.values + delta * h_prev.values,
                          u_prev.left_state)
    moved, _ = _march(system, bumped)
    return GridFunction(u_prev.x_min, u_prev.dx, (moved - base) / delta, np.zeros(system.dimension))
