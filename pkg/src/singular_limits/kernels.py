"""Fundamental solutions of the two linear scalar schemes and their interaction integrals.

For  v_n - v_{n-1} + lam v_{n,x} = 0  with Dirac data the n-th iterate is
the Gamma(n, lam) density; for  v_n' + lam (v_n - v_{n-1}) = 0  with a
Kronecker delta the lattice at time t is the Poisson(lam t) law.  The total
overlap of two such solutions with speeds lam > mu, started at relative
offset x0 (resp. n0), has the closed forms implemented by
:func:`interaction_backward` and :func:`interaction_semidiscrete`; the
``*_oracle`` functions recompute the same quantities by brute-force
summation and adaptive quadrature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from .errors import ParameterError, TruncationError

ORACLE_TOLERANCE = 1e-10


@dataclass(frozen=True)
class KernelParams:
    """Faster speed ``lam`` and slower speed ``mu``, 0 < mu < lam."""

    lam: float
    mu: float

    def __post_init__(self):
        if not (self.lam > self.mu > 0):
            raise ParameterError(f"need lam > mu > 0, got lam={self.lam}, mu={self.mu}")


def _log_gamma_density(n, x, lam):
    # valid for x > 0
    return -np.log(lam) + (n - 1) * np.log(x / lam) - x / lam - special.gammaln(n)


def fundamental_backward(n: int, x, lam: float):
    """(1/lam) (x/lam)^{n-1} e^{-x/lam} / (n-1)!  on x >= 0, zero for x < 0."""
    if n < 1:
        raise ParameterError("n must be >= 1")
    if not lam > 0:
        raise ParameterError("lam must be positive")
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = np.exp(_log_gamma_density(n, x[pos], lam))
    if n == 1:
        out[x == 0] = 1.0 / lam
    return out if out.ndim else float(out)


def fundamental_semidiscrete(n, t: float, lam: float):
    """(lam t)^n e^{-lam t} / n!  for n >= 0, zero for n < 0."""
    if not lam > 0:
        raise ParameterError("lam must be positive")
    if t < 0:
        raise ParameterError("t must be nonnegative")
    n = np.asarray(n)
    out = np.zeros(n.shape)
    valid = n >= 0
    if t == 0:
        out[valid & (n == 0)] = 1.0
    else:
        m = n[valid].astype(float)
        rate = lam * t
        out[valid] = np.exp(m * math.log(rate) - rate - special.gammaln(m + 1))
    return out if out.ndim else float(out)


def interaction_backward(x0: float, params: KernelParams) -> float:
    """Closed form of sum_n int v_n z_n dx for backward kernels offset by x0."""
    lam, mu = params.lam, params.mu
    base = 1.0 / (lam - mu)
    if x0 >= 0:
        return base
    return base * math.exp((lam - mu) / (lam * mu) * x0)


def interaction_semidiscrete(n0: int, params: KernelParams) -> float:
    """Closed form of int_0^inf sum_n v_n z_n dt for lattice kernels offset by n0."""
    lam, mu = params.lam, params.mu
    base = 1.0 / (lam - mu)
    if n0 >= 0:
        return base
    return base * (lam / mu) ** n0


def _log_gamma_peak(n, scale):
    """log of the maximal value of the Gamma(n, scale) density."""
    n = np.asarray(n, dtype=float)
    m = np.maximum(n - 1, 1e-300)
    peak = (n - 1) * np.log(m) - (n - 1) - special.gammaln(n) - np.log(scale)
    return np.where(n > 1, peak, -np.log(scale))


def backward_tail_bounds(x0, params: KernelParams, n_cap: int):
    """Upper bounds on int v_n(x) z_n(x - x0) dx for n = 1..n_cap.

    Split the line at s_n: the overlap is at most sup z_n P(X_n <= s_n) +
    sup v_n P(x0 + Y_n >= s_n), with Chernoff bounds for both Gamma tails.
    Each overlap is also at most min(sup v_n, sup z_n).
    """
    lam, mu = params.lam, params.mu
    n = np.arange(1, n_cap + 1, dtype=float)
    split = n * math.sqrt(lam * mu) + max(x0, 0.0)
    a = split / (n * lam)
    b = (split - x0) / (n * mu)
    log_v_peak = _log_gamma_peak(n, lam)
    log_z_peak = _log_gamma_peak(n, mu)
    with np.errstate(divide="ignore", invalid="ignore"):
        lower_tail = np.where((a > 0) & (a < 1), n * (np.log(a) + 1 - a), 0.0)
        upper_tail = np.where(b > 1, n * (np.log(b) + 1 - b), 0.0)
    chernoff = np.exp(log_z_peak + lower_tail) + np.exp(log_v_peak + upper_tail)
    trivial = np.exp(np.minimum(log_v_peak, log_z_peak))
    return np.minimum(chernoff, trivial)


def _backward_truncation(x0, params, tol, n_cap=2_000_000):
    cap = 1024
    while cap <= n_cap:
        bounds = backward_tail_bounds(x0, params, cap)
        # tail[k] = sum of bounds for n > k + 1
        tail = np.concatenate([np.cumsum(bounds[::-1])[::-1][1:], [0.0]])
        # the bounds beyond cap decay at least geometrically once past the peak
        ratio = bounds[-1] / bounds[-2] if bounds[-2] > 0 else 0.0
        beyond = bounds[-1] * ratio / (1 - ratio) if ratio < 1 else math.inf
        ok = np.flatnonzero(tail + beyond < tol)
        if ok.size:
            return int(ok[0]) + 1
        cap *= 2
    raise TruncationError("Gamma tail bound never falls below the tolerance")


def interaction_backward_oracle(x0: float, params: KernelParams, n_max: int | None = None,
                                tol: float = ORACLE_TOLERANCE) -> float:
    """Brute-force sum_{n >= 1} int v_n(x) z_n(x) dx with z started at x0.

    The series is truncated where the Chernoff tail bound drops below ``tol``
    (or at ``n_max`` if given, which must also satisfy the bound); the summed
    integrand is integrated by adaptive quadrature.  The n = 0 pairing of two
    Dirac masses is excluded.
    """
    needed = _backward_truncation(x0, params, tol)
    if n_max is None:
        n_max = needed
    elif n_max < needed:
        raise TruncationError(f"n_max={n_max} leaves a tail above {tol:g}; need {needed}")
    lam, mu = params.lam, params.mu
    ns = np.arange(1, n_max + 1, dtype=float)
    start = max(x0, 0.0)

    def summed(x):
        if x <= 0 or x - x0 <= 0:
            return 0.0
        logs = _log_gamma_density(ns, x, lam) + _log_gamma_density(ns, x - x0, mu)
        return float(np.exp(logs).sum())

    # beyond `end` every retained v_n has negligible Gamma upper tail
    end = start + lam * (n_max + 20 * math.sqrt(n_max) + 60)
    breaks = [start + d for d in (1.0, 5.0, 20.0, 100.0) if start + d < end]
    value, _ = integrate.quad(summed, start, end, points=breaks or None, limit=5000,
                              epsabs=tol * 1e-3, epsrel=1e-12)
    return value


def interaction_semidiscrete_oracle(n0: int, params: KernelParams, t_max: float | None = None,
                                    tol: float = ORACLE_TOLERANCE) -> float:
    """Brute-force int_0^t_max sum_n Poisson(lam t; n) Poisson(mu t; n - n0) dt.

    The summand is bounded by (lam/mu)^{n0/2} exp(-(sqrt(lam) - sqrt(mu))^2 t),
    which fixes ``t_max`` when not supplied; the inner sum is truncated with
    Poisson tail bounds.
    """
    lam, mu = params.lam, params.mu
    rate = (math.sqrt(lam) - math.sqrt(mu)) ** 2
    prefactor = max(1.0, (lam / mu) ** (n0 / 2))
    needed = math.log(prefactor / (rate * tol)) / rate
    if t_max is None:
        t_max = needed
    elif t_max < needed:
        raise TruncationError(f"t_max={t_max:g} leaves a tail above {tol:g}; need {needed:g}")

    def summed(t):
        if t == 0:
            return 1.0 if n0 == 0 else 0.0
        lo = max(0, n0)
        mean = max(lam * t, mu * t + n0)
        hi = _poisson_cutoff(mean, lo)
        n = np.arange(lo, hi + 1, dtype=float)
        logs = (n * math.log(lam * t) - lam * t - special.gammaln(n + 1)
                + (n - n0) * math.log(mu * t) - mu * t - special.gammaln(n - n0 + 1))
        return float(np.exp(logs).sum())

    value, _ = integrate.quad(summed, 0.0, t_max, limit=5000, epsabs=tol * 1e-3, epsrel=1e-12)
    return value


def _poisson_cutoff(mean, lo):
    """Index k with P(N > k) < 1e-17 for N ~ Poisson(mean) (Chernoff bound)."""
    k = int(max(lo, mean + 10 * math.sqrt(mean) + 40))
    while k * math.log(math.e * mean / k) - mean > math.log(1e-17):
        k = int(k * 1.2) + 1
    return k


def weight_backward(x, system) -> np.ndarray:
    """P0(x) = (1/c) exp(c x / (K (K - c))) for x < 0 and 1/c for x >= 0."""
    c, K = _weight_constants(system)
    x = np.asarray(x, dtype=float)
    out = np.where(x >= 0, 1.0 / c, np.exp(c / (K * (K - c)) * np.minimum(x, 0.0)) / c)
    return out if out.ndim else float(out)


def weight_semidiscrete(k, system) -> np.ndarray:
    """P(k) = (1/c) (1 + c/K)^k for k < 0 and 1/c for k >= 0."""
    c, K = _weight_constants(system)
    k = np.asarray(k, dtype=float)
    out = np.where(k >= 0, 1.0 / c, (1.0 + c / K) ** np.minimum(k, 0.0) / c)
    return out if out.ndim else float(out)


def weight_decay_rates(system):
    """(exponent c/(K(K-c)) of P0, geometric ratio 1/(1 + c/K) of P)."""
    c, K = _weight_constants(system)
    return c / (K * (K - c)), 1.0 / (1.0 + c / K)


def _weight_constants(system):
    c, K = system.separation, system.speed_cap
    if not c < K:
        raise ParameterError(f"weights need separation c < speed cap K (c={c:g}, K={K:g})")
    return c, K


SPEED_PAIRS = ((0.9, 0.1), (0.7, 0.3), (0.55, 0.45))
BACKWARD_OFFSETS = (-3.0, -1.0, 0.0, 1.0, 3.0)
LATTICE_OFFSETS = (-5, -1, 0, 1, 5)


def kernel_table(with_oracle: bool = True):
    """Closed forms (and oracles) on the standard speed/offset grid.

    Rows are ``(scheme, lam, mu, offset, closed, oracle, relative_error)``;
    without the oracle the last two entries are NaN.
    """
    rows = []
    for lam, mu in SPEED_PAIRS:
        params = KernelParams(lam, mu)
        for scheme, offsets, closed, oracle in (
                ("backward", BACKWARD_OFFSETS, interaction_backward, interaction_backward_oracle),
                ("semidiscrete", LATTICE_OFFSETS, interaction_semidiscrete,
                 interaction_semidiscrete_oracle)):
            for off in offsets:
                exact = closed(off, params)
                ref = oracle(off, params) if with_oracle else math.nan
                rows.append((scheme, lam, mu, off, exact, ref, abs(exact - ref) / abs(ref)))
    return rows
