"""Conservation-law systems u_t + f(u)_x = 0 and their characteristic data.

A :class:`SystemSpec` bundles the flux, its Jacobian and the admissible state
set K1 (an axis-aligned box K0 enlarged by ``margin`` in Euclidean distance),
together with the speed bounds ``kappa <= lambda_i <= speed_cap`` and the
separation ``c`` of consecutive eigenvalues, all estimated by sampling K1.

Fluxes and Jacobians are vectorised over leading axes: ``flux(u)`` maps an
array of shape ``(..., n)`` to ``(..., n)`` and ``jacobian(u)`` to
``(..., n, n)``.  Eigenvectors are stored as *rows*, ``right[i]`` is r_i and
``left[i]`` is l^i.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import _jit
from .errors import DomainError, HyperbolicityError, ParameterError

#: relative slack when comparing an eigenvalue gap against the sampled separation
GAP_TOLERANCE = 1e-6
#: Gauss-Legendre order used for the path-averaged Jacobian
AVERAGE_ORDER = 5

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(AVERAGE_ORDER)
_GL_NODES = 0.5 * (_GL_NODES + 1.0)
_GL_WEIGHTS = 0.5 * _GL_WEIGHTS


@dataclass(frozen=True, eq=False)
class SpectralData:
    """Eigenvalues and row-stored right/left eigenvectors of one matrix."""

    eigenvalues: np.ndarray
    right: np.ndarray
    left: np.ndarray

    @property
    def dimension(self) -> int:
        return self.eigenvalues.shape[-1]

    def components(self, vector):
        """Coefficients v^i = l^i . vector."""
        return self.left @ np.asarray(vector, dtype=float)

    def reconstruct(self, components):
        """sum_i v^i r_i."""
        return np.asarray(components, dtype=float) @ self.right


@dataclass(frozen=True, eq=False)
class SystemSpec:
    """A strictly hyperbolic system with positive speeds below one.

    Build instances with :func:`make_system` (or the built-in factories) so
    that ``kappa``, ``speed_cap`` and ``separation`` are estimated and the
    standing assumptions are enforced.
    """

    name: str
    dimension: int
    flux: Callable[[np.ndarray], np.ndarray]
    jacobian: Callable[[np.ndarray], np.ndarray]
    box_lower: np.ndarray
    box_upper: np.ndarray
    margin: float
    kappa: float
    speed_cap: float
    separation: float
    params: dict = field(default_factory=dict)
    jit_kind: Optional[int] = None
    jit_params: Optional[np.ndarray] = None

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.box_upper - self.box_lower))

    def distance_to_box(self, u):
        """Euclidean distance from ``u`` (shape ``(..., n)``) to K0."""
        u = np.asarray(u, dtype=float)
        clipped = np.clip(u, self.box_lower, self.box_upper)
        return np.linalg.norm(u - clipped, axis=-1)

    def contains(self, u):
        """Boolean mask of states lying in K1 (NaNs are never inside)."""
        u = np.asarray(u, dtype=float)
        dist = self.distance_to_box(u)
        return np.isfinite(dist) & (dist <= self.margin * (1 + 1e-12) + 1e-14)

    def check_states(self, u, what="state"):
        """Raise :class:`DomainError` naming the first state outside K1."""
        u = np.asarray(u, dtype=float)
        inside = self.contains(u)
        if not np.all(inside):
            bad = np.flatnonzero(~np.atleast_1d(inside).ravel())
            index = int(bad[0]) if u.ndim > 1 else None
            raise DomainError(f"{what} outside K1 for system {self.name!r}", index=index)


# --------------------------------------------------------------------------
# spectral decomposition
# --------------------------------------------------------------------------

def _orient(right):
    """Flip each row so its first entry with |.| > 1e-8 is positive."""
    significant = np.abs(right) > 1e-8
    first = np.argmax(significant, axis=-1)
    lead = np.take_along_axis(right, first[..., None], axis=-1)[..., 0]
    sign = np.where(lead < 0, -1.0, 1.0)
    return right * sign[..., None]


def _spectral_2x2(A):
    a, b = A[..., 0, 0], A[..., 0, 1]
    c, d = A[..., 1, 0], A[..., 1, 1]
    half_trace = 0.5 * (a + d)
    disc = (0.5 * (a - d)) ** 2 + b * c
    if np.any(~(disc > 0)):
        raise HyperbolicityError("2x2 Jacobian has no pair of distinct real eigenvalues")
    root = np.sqrt(disc)
    lam = np.stack([half_trace - root, half_trace + root], axis=-1)
    rows = []
    for k in range(2):
        lk = lam[..., k]
        cand1 = np.stack([b, lk - a], axis=-1)
        cand2 = np.stack([lk - d, c], axis=-1)
        n1 = np.hypot(cand1[..., 0], cand1[..., 1])
        n2 = np.hypot(cand2[..., 0], cand2[..., 1])
        use1 = (n1 >= n2)[..., None]
        vec = np.where(use1, cand1, cand2)
        norm = np.where(use1[..., 0], n1, n2)
        rows.append(vec / norm[..., None])
    right = _orient(np.stack(rows, axis=-2))
    det = right[..., 0, 0] * right[..., 1, 1] - right[..., 0, 1] * right[..., 1, 0]
    # L = R^{-T} when R holds r_i in rows: l^i . r_j = delta_ij
    left = np.empty_like(right)
    left[..., 0, 0] = right[..., 1, 1] / det
    left[..., 0, 1] = -right[..., 1, 0] / det
    left[..., 1, 0] = -right[..., 0, 1] / det
    left[..., 1, 1] = right[..., 0, 0] / det
    return lam, right, left


def _spectral_general(A):
    lam, vecs = np.linalg.eig(A)
    if np.any(np.abs(lam.imag) > 1e-12 * (1 + np.abs(lam.real))):
        raise HyperbolicityError("Jacobian has complex eigenvalues")
    lam = lam.real
    vecs = vecs.real
    order = np.argsort(lam, axis=-1)
    lam = np.take_along_axis(lam, order, axis=-1)
    vecs = np.take_along_axis(vecs, order[..., None, :], axis=-1)
    right = np.swapaxes(vecs, -1, -2)
    right = right / np.linalg.norm(right, axis=-1, keepdims=True)
    right = _orient(right)
    left = np.swapaxes(np.linalg.inv(right), -1, -2)
    return lam, right, left


def spectral_arrays(A):
    """Batched decomposition of real matrices ``A`` of shape ``(..., n, n)``.

    Returns ``(eigenvalues, right, left)`` with eigenvalues ascending, unit
    right eigenvectors in rows with the deterministic sign convention, and
    left eigenvectors normalised so that ``left @ right.T`` is the identity.
    """
    A = np.asarray(A, dtype=float)
    n = A.shape[-1]
    if n == 1:
        lam = A[..., 0].copy()
        ones = np.ones(A.shape)
        return lam, ones, ones.copy()
    if n == 2:
        return _spectral_2x2(A)
    return _spectral_general(A)


def _check_gaps(system, lam):
    if system.dimension < 2:
        return
    gaps = np.diff(lam, axis=-1)
    if np.any(gaps < system.separation * (1 - GAP_TOLERANCE)):
        raise HyperbolicityError(
            f"eigenvalue gap {float(np.min(gaps)):.3g} below separation "
            f"{system.separation:.3g}")


def eigen_decompose(system: SystemSpec, state) -> SpectralData:
    """Spectral data of A(u) = Df(u) at a state in K1."""
    u = np.asarray(state, dtype=float).reshape(system.dimension)
    system.check_states(u)
    lam, right, left = spectral_arrays(system.jacobian(u))
    _check_gaps(system, lam)
    return SpectralData(lam, right, left)


def averaged_matrix(system: SystemSpec, left_state, right_state):
    """Gauss-Legendre approximation of int_0^1 Df(l + (r - l)s) ds (batched)."""
    ul = np.asarray(left_state, dtype=float)
    ur = np.asarray(right_state, dtype=float)
    jump = ur - ul
    total = 0.0
    for s, w in zip(_GL_NODES, _GL_WEIGHTS):
        total = total + w * system.jacobian(ul + s * jump)
    return total


def averaged_spectral_arrays(system: SystemSpec, left_states, right_states):
    """Batched spectral data of the averaged matrix, with hyperbolicity check."""
    lam, right, left = spectral_arrays(averaged_matrix(system, left_states, right_states))
    _check_gaps(system, lam)
    return lam, right, left


def averaged_jacobian(system: SystemSpec, left_state, right_state) -> SpectralData:
    """Spectral data of the matrix A(u_n, u_{n-1}) averaged along the segment."""
    ul = np.asarray(left_state, dtype=float).reshape(system.dimension)
    ur = np.asarray(right_state, dtype=float).reshape(system.dimension)
    # the segment lies in K1 whenever both ends do only if K1 is convex, which it is
    system.check_states(np.stack([ul, ur]), what="segment end")
    lam, right, left = averaged_spectral_arrays(system, ul, ur)
    return SpectralData(lam, right, left)


def directional_jacobian(system: SystemSpec, u, direction, step=1e-5):
    """Central difference of the Jacobian, (DA(u) . direction), batched.

    The step is applied to the normalised direction and the result rescaled,
    so tiny perturbations are differentiated as accurately as large ones.
    """
    u = np.asarray(u, dtype=float)
    d = np.asarray(direction, dtype=float)
    norm = np.linalg.norm(d, axis=-1, keepdims=True)
    safe = np.where(norm > 0, norm, 1.0)
    unit = d / safe
    dA = (system.jacobian(u + step * unit) - system.jacobian(u - step * unit)) / (2 * step)
    return dA * norm[..., None]


def verify_straight_line(system: SystemSpec, sample_count: int = 100, step: float = 1e-4,
                         seed: int = 0) -> float:
    """Max finite-difference size of (Dr_i) r_i over states sampled in K0."""
    if sample_count < 1:
        raise ParameterError("sample_count must be >= 1")
    if step >= system.margin and system.margin > 0:
        raise DomainError("step leaves K1: choose step below the margin")
    rng = np.random.default_rng(seed)
    states = rng.uniform(system.box_lower, system.box_upper,
                         size=(sample_count, system.dimension))
    _, right, _ = spectral_arrays(system.jacobian(states))
    defect = 0.0
    for i in range(system.dimension):
        ri = right[:, i, :]
        plus, minus = states + step * ri, states - step * ri
        system.check_states(plus, what="straight-line probe")
        system.check_states(minus, what="straight-line probe")
        rp = spectral_arrays(system.jacobian(plus))[1][:, i, :]
        rm = spectral_arrays(system.jacobian(minus))[1][:, i, :]
        fd = (rp - rm) / (2 * step)
        defect = max(defect, float(np.max(np.abs(fd))))
    return defect


# --------------------------------------------------------------------------
# construction
# --------------------------------------------------------------------------

def finite_difference_jacobian(flux, step):
    """Fourth-order central-difference Jacobian of a vectorised flux."""

    def jacobian(u):
        u = np.asarray(u, dtype=float)
        n = u.shape[-1]
        cols = []
        for k in range(n):
            e = np.zeros(n)
            e[k] = step
            col = (-flux(u + 2 * e) + 8 * flux(u + e) - 8 * flux(u - e) + flux(u - 2 * e)) / (12 * step)
            cols.append(col)
        return np.stack(cols, axis=-1)

    return jacobian


def sample_enlarged_box(lower, upper, margin, count, seed=0):
    """Deterministic sample of K1: pushed-out corners plus uniform fill."""
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    n = lower.size
    corners = np.array(np.meshgrid(*[[lo, hi] for lo, hi in zip(lower, upper)],
                                   indexing="ij")).reshape(n, -1).T
    outward = np.where(corners > 0.5 * (lower + upper), 1.0, -1.0) / np.sqrt(n)
    pushed = corners + margin * outward
    rng = np.random.default_rng(seed)
    fill = rng.uniform(lower - margin, upper + margin, size=(count, n))
    dist = np.linalg.norm(fill - np.clip(fill, lower, upper), axis=-1)
    fill = fill[dist <= margin]
    return np.concatenate([corners, pushed, fill])


def make_system(name, flux, box_lower, box_upper, jacobian=None, margin=0.05,
                samples=10_000, seed=0, params=None, jit_kind=None,
                jit_params=None) -> SystemSpec:
    """Build a :class:`SystemSpec`, estimating kappa, K and c on K1.

    Raises :class:`HyperbolicityError` if some sampled state has complex or
    colliding eigenvalues, and :class:`ParameterError` if the speeds do not
    lie strictly inside (0, 1).
    """
    lower = np.atleast_1d(np.asarray(box_lower, dtype=float))
    upper = np.atleast_1d(np.asarray(box_upper, dtype=float))
    if lower.shape != upper.shape or np.any(upper < lower):
        raise ParameterError("state box must satisfy lower <= upper componentwise")
    if margin < 0:
        raise ParameterError("margin must be nonnegative")
    n = lower.size
    if jacobian is None:
        step = 1e-5 * max(float(np.linalg.norm(upper - lower)), 1.0)
        jacobian = finite_difference_jacobian(flux, step)
    states = sample_enlarged_box(lower, upper, margin, samples, seed)
    lam, _, _ = spectral_arrays(jacobian(states))
    kappa = float(lam.min())
    speed_cap = float(lam.max())
    separation = float(np.diff(lam, axis=-1).min()) if n > 1 else float("inf")
    if not kappa > 0:
        raise ParameterError(f"{name}: minimal speed {kappa:.4g} is not positive on K1")
    if not speed_cap < 1:
        raise ParameterError(f"{name}: maximal speed {speed_cap:.4g} is not below 1 on K1")
    if not separation > 0:
        raise HyperbolicityError(f"{name}: eigenvalues collide on K1")
    return SystemSpec(name=name, dimension=n, flux=flux, jacobian=jacobian,
                      box_lower=lower, box_upper=upper, margin=float(margin),
                      kappa=kappa, speed_cap=speed_cap, separation=separation,
                      params=dict(params or {}), jit_kind=jit_kind,
                      jit_params=None if jit_kind is None else np.asarray(
                          np.zeros(1) if jit_params is None else jit_params, dtype=float))


# --------------------------------------------------------------------------
# built-in systems
# --------------------------------------------------------------------------

def linear_system(eigenvalues=(0.3, 0.7), eigenvectors=None, box=None, margin=0.05):
    """f(u) = A u with A = R diag(eigenvalues) R^{-1}.

    ``eigenvectors`` holds the right eigenvectors as rows (identity by
    default, giving a diagonal system).  ``box`` is ``(lower, upper)``.
    """
    lam = np.asarray(eigenvalues, dtype=float)
    n = lam.size
    R = np.eye(n) if eigenvectors is None else np.asarray(eigenvectors, dtype=float)
    if R.shape != (n, n):
        raise ParameterError("eigenvectors must be an n x n array")
    A = R.T @ np.diag(lam) @ np.linalg.inv(R.T)
    if box is None:
        box = (-np.ones(n), np.ones(n))

    def flux(u):
        return np.asarray(u, dtype=float) @ A.T

    def jacobian(u):
        u = np.asarray(u, dtype=float)
        return np.broadcast_to(A, u.shape[:-1] + (n, n)).copy()

    params = {"eigenvalues": lam.tolist()}
    if eigenvectors is not None:
        params["eigenvectors"] = R.tolist()
    return make_system("linear", flux, box[0], box[1], jacobian=jacobian,
                       margin=margin, params=params, jit_kind=_jit.KIND_LINEAR,
                       jit_params=A.ravel())


def shifted_burgers(box=(-0.4, 0.4), margin=0.05):
    """Scalar f(u) = u/2 + u^2/4, speeds 0.5 + 0.5 u in (0.3, 0.7) on the default box."""

    def flux(u):
        u = np.asarray(u, dtype=float)
        return 0.5 * u + 0.25 * u * u

    def jacobian(u):
        u = np.asarray(u, dtype=float)
        return (0.5 + 0.5 * u)[..., None]

    return make_system("burgers-shifted", flux, [box[0]], [box[1]], jacobian=jacobian,
                       margin=margin, jit_kind=_jit.KIND_BURGERS)


def chromatography(box=((0.5, 0.5), (1.5, 1.5)), margin=0.05):
    """Langmuir isotherm f_i(u) = u_i / (1 + u_1 + u_2).

    Speeds are 1/s^2 along r_1 = u/|u| and 1/s along r_2 = (1, -1)/sqrt(2),
    s = 1 + u_1 + u_2; both eigenvector fields are straight lines.
    """

    def flux(u):
        u = np.asarray(u, dtype=float)
        s = 1.0 + u[..., 0] + u[..., 1]
        return u / s[..., None]

    def jacobian(u):
        u = np.asarray(u, dtype=float)
        s = 1.0 + u[..., 0] + u[..., 1]
        inv = 1.0 / s
        inv2 = inv * inv
        J = np.empty(u.shape[:-1] + (2, 2))
        J[..., 0, 0] = inv - u[..., 0] * inv2
        J[..., 0, 1] = -u[..., 0] * inv2
        J[..., 1, 0] = -u[..., 1] * inv2
        J[..., 1, 1] = inv - u[..., 1] * inv2
        return J

    return make_system("chromatography", flux, box[0], box[1], jacobian=jacobian,
                       margin=margin, jit_kind=_jit.KIND_CHROMATOGRAPHY)


BUILTIN_SYSTEMS = {
    "linear": linear_system,
    "burgers-shifted": shifted_burgers,
    "chromatography": chromatography,
}


def get_system(name: str, **params) -> SystemSpec:
    """Instantiate a built-in system by its CLI name."""
    try:
        factory = BUILTIN_SYSTEMS[name]
    except KeyError:
        raise ParameterError(f"unknown system {name!r}; choose from {sorted(BUILTIN_SYSTEMS)}")
    return factory(**params)
