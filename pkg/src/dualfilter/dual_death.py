"""Transition probabilities of the K-dimensional pure death process.

The death process jumps from ``m`` to ``m - e_j`` at rate
``lambda(|m|) * rho(theta_t) * m_j`` where ``theta_t`` is a deterministic
flow. Because every rate carries the common factor ``rho(theta_t)``, the
process is a time change of a homogeneous chain run for the clock
``tau = int_0^t rho(theta_s) ds``. The total ``|M_t|`` is a one-dimensional
death chain with rates ``lambda_n = n * lambda(n)``; given how many deaths
occurred, which coordinates lost them follows a multivariate hypergeometric
law.

The level probabilities come from the hypoexponential closed form, an
alternating sum whose terms can be many orders of magnitude larger than the
result. Each row is first summed in float64 from log-magnitudes with a
running error bound; rows whose bound is too loose are recomputed in
arbitrary precision with :mod:`mpmath`, and as a last resort from the matrix
exponential of the level chain.
"""
from __future__ import annotations

import functools
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Mapping

import mpmath
import numpy as np
import scipy.linalg
from scipy.special import gammaln

from .errors import DegenerateRatesError, NumericalError
from .multiindex import IndexSet, MultiIndex, as_multiindex, leq, magnitude, sub

logger = logging.getLogger(__name__)

_EPS = np.finfo(float).eps
# float64 rows are accepted when the bound is below RTOL*|p| + ATOL
RTOL = 1e-12
ATOL = 1e-30
# beyond this many digits the level-chain matrix exponential is used instead
MAX_DPS = 1500
CLAMP_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class DeathKernelSpec:
    """Rates of a subordinated pure death process.

    Attributes:
        lambda_fn: ``n -> lambda(n)``, the per-individual rate factor at total ``n``.
        rho_integral_fn: ``(theta0, t) -> int_0^t rho(theta_s) ds``.
        dim: number of coordinates K.
    """

    lambda_fn: Callable[[int], float]
    rho_integral_fn: Callable[[object, float], float]
    dim: int
    name: str = field(default="")

    def level_rate(self, n: int) -> float:
        """``lambda_n = n * lambda(n)``, the total death rate at level ``n``."""
        return n * float(self.lambda_fn(n)) if n > 0 else 0.0

    def level_rates(self, total: int) -> np.ndarray:
        return np.array([self.level_rate(n) for n in range(total + 1)], dtype=float)


@dataclass(frozen=True)
class TransitionTable:
    """Row ``n -> p_{origin,n}`` of the death process over the lower set of ``origin``."""

    origin: MultiIndex
    elapsed: float
    theta0: object
    probs: Mapping[MultiIndex, float]

    @property
    def support(self) -> IndexSet:
        return IndexSet(self.probs.keys(), dim=len(self.origin))

    def total(self) -> float:
        return math.fsum(self.probs.values())


def death_rate(m, j: int, theta, spec: DeathKernelSpec, rho: Callable[[object], float]) -> float:
    """Rate of the jump ``m -> m - e_j`` (``j`` is 0-based)."""
    m = as_multiindex(m)
    if not 0 <= j < len(m):
        raise IndexError(f"coordinate {j} out of range for dimension {len(m)}")
    if m[j] == 0:
        return 0.0
    return float(spec.lambda_fn(magnitude(m))) * float(rho(theta)) * m[j]


def _check_rates(lam: np.ndarray) -> None:
    d = np.diff(lam)
    scale = np.maximum(np.abs(lam[1:]), np.abs(lam[:-1]))
    bad = np.nonzero(d <= 8 * _EPS * scale)[0]
    if bad.size:
        n = int(bad[0])
        raise DegenerateRatesError(
            f"level rates must be strictly increasing; lambda_{n}={lam[n]!r}, "
            f"lambda_{n + 1}={lam[n + 1]!r}"
        )


def _float_rows(v: np.ndarray, tau: float, rows: int):
    """Float64 evaluation of level probabilities for drops ``0..rows-1``.

    ``v[k] = lambda_{M-k}``. Returns (p, err, abs_sum).
    """
    n = rows
    vk = v[:n]
    diff = vk[:, None] - vk[None, :]
    with np.errstate(divide="ignore"):
        logdiff = np.log(np.abs(diff))
    np.fill_diagonal(logdiff, 0.0)
    # D[k, i] = sum_{h <= i, h != k} log|v_k - v_h|
    D = np.cumsum(logdiff, axis=1)
    Dabs = np.cumsum(np.abs(logdiff), axis=1)
    with np.errstate(divide="ignore"):
        logv = np.log(vk)
    logpre = np.concatenate(([0.0], np.cumsum(logv[:-1]))) if n > 1 else np.zeros(1)
    logpre_abs = np.concatenate(([0.0], np.cumsum(np.abs(logv[:-1])))) if n > 1 else np.zeros(1)

    i_idx = np.arange(n)
    # L[i, k], valid for k <= i
    L = logpre[:, None] - vk[None, :] * tau - D.T
    mask = i_idx[None, :] <= i_idx[:, None]
    L = np.where(mask, L, -np.inf)
    sign = np.where((i_idx[:, None] + i_idx[None, :]) % 2 == 0, 1.0, -1.0)
    mag = np.exp(L)
    terms = sign * mag
    p = np.array([math.fsum(row) for row in terms])
    abs_sum = mag.sum(axis=1)
    lerr = _EPS * (logpre_abs[:, None] + vk[None, :] * tau + Dabs.T + i_idx[:, None] + 4.0)
    err = (mag * (lerr + 2 * _EPS)).sum(axis=1) + _EPS * abs_sum
    return p, err, abs_sum


def _mp_rows(v: np.ndarray, tau: float, rows: list[int], dps: int) -> dict[int, mpmath.mpf]:
    """Arbitrary-precision level probabilities for the requested drops."""
    top = max(rows) + 1
    wanted = set(rows)
    out = {}
    with mpmath.workdps(dps):
        vm = [mpmath.mpf(float(x)) for x in v[:top]]
        t = mpmath.mpf(float(tau))
        ex = [mpmath.exp(-x * t) for x in vm]
        # den[k] = prod_{h <= i, h != k} (v_k - v_h), updated row by row
        den: list = []
        pre = mpmath.mpf(1)
        for i in range(top):
            for k in range(i):
                den[k] *= vm[k] - vm[i]
            d = mpmath.mpf(1)
            for h in range(i):
                d *= vm[i] - vm[h]
            den.append(d)
            if i in wanted:
                s = mpmath.fsum(ex[k] / den[k] for k in range(i + 1))
                out[i] = pre * s * (-1) ** i
            pre *= vm[i]
    return out


def _expm_levels(v: np.ndarray, tau: float) -> np.ndarray:
    n = len(v)
    Q = np.zeros((n, n))
    for k in range(n - 1):
        Q[k, k] = -v[k]
        Q[k, k + 1] = v[k]
    return scipy.linalg.expm(tau * Q)[0]


def _clamp(p: np.ndarray, what: str) -> np.ndarray:
    lo = p < 0.0
    hi = p > 1.0
    if np.any(p < -CLAMP_TOL) or np.any(p > 1.0 + CLAMP_TOL):
        raise NumericalError(f"{what}: probabilities outside [0, 1] beyond tolerance: "
                             f"min={p.min()!r}, max={p.max()!r}")
    if lo.any() or hi.any():
        p = np.clip(p, 0.0, 1.0)
    return p


@functools.lru_cache(maxsize=4096)
def _level_probabilities_cached(total: int, tau: float, spec: DeathKernelSpec, rows: int) -> np.ndarray:
    lam = spec.level_rates(total)
    if total == 0 or tau == 0.0:
        out = np.zeros(rows)
        out[0] = 1.0
        return out
    _check_rates(lam)
    v = lam[::-1].copy()  # v[k] = lambda_{M-k}
    p, err, abs_sum = _float_rows(v, tau, rows)
    bad = [i for i in range(rows) if err[i] > RTOL * abs(p[i]) + ATOL]
    if bad:
        p = p.copy()
        need = 0.0
        for i in bad:
            ref = max(abs(p[i]) - err[i], abs_sum[i] * 1e-300, 1e-300)
            need = max(need, math.log10(max(abs_sum[i] / ref, 1.0)))
        dps = int(need) + 25
        while True:
            if dps > MAX_DPS:
                logger.warning("death level probabilities: M=%d tau=%g needs >%d digits; "
                               "using matrix exponential", total, tau, MAX_DPS)
                full = _expm_levels(v, tau)
                for i in bad:
                    p[i] = full[i]
                break
            vals = _mp_rows(v, tau, bad, dps)
            lost = 0.0
            for i in bad:
                a = vals[i]
                lost = max(lost, math.log10(abs_sum[i]) - float(mpmath.log10(abs(a))) if a != 0 else dps)
            if lost + 18 <= dps:
                for i in bad:
                    p[i] = float(vals[i])
                logger.debug("death level probabilities: M=%d tau=%g, %d rows at %d digits",
                             total, tau, len(bad), dps)
                break
            dps = int(lost) + 30
    p = _clamp(p, "level probabilities")
    p.setflags(write=False)
    return p


def level_probabilities(total: int, tau: float, spec: DeathKernelSpec, max_drop: int | None = None) -> np.ndarray:
    """Probabilities that the total falls from ``total`` to ``total - i``.

    Args:
        total: starting level ``|m|``.
        tau: elapsed clock ``int rho(theta_s) ds``.
        spec: the death kernel.
        max_drop: only compute drops ``0..max_drop`` (default: all).

    Returns:
        Read-only array indexed by the drop ``i``.
    """
    if tau < 0:
        raise ValueError(f"elapsed clock must be non-negative, got {tau}")
    rows = total + 1 if max_drop is None else min(max_drop, total) + 1
    return _level_probabilities_cached(int(total), float(tau), spec, rows)


def c_coeff(total: int, drop: int, tau: float, spec: DeathKernelSpec) -> float:
    """The alternating-sum coefficient ``C_{|m|,|m|-|i|}``.

    Equals the level probability divided by the rate product
    ``prod_{h<|i|} lambda_{|m|-h}``; for ``drop == 0`` this is
    ``exp(-lambda_{|m|} tau)``. May under/overflow for large totals; use
    :func:`level_probabilities` for the product.
    """
    if not 0 <= drop <= total:
        raise ValueError(f"drop must lie in [0, {total}], got {drop}")
    lam = spec.level_rates(total)
    if drop == 0:
        return math.exp(-lam[total] * tau)
    _check_rates(lam)
    p = level_probabilities(total, tau, spec, max_drop=drop)[drop]
    if p == 0.0:
        return 0.0
    logpre = sum(math.log(lam[total - h]) for h in range(drop))
    return math.exp(math.log(p) - logpre)


def mv_hypergeom(i, m) -> float:
    """Multivariate hypergeometric pmf ``prod C(m_k, i_k) / C(|m|, |i|)``."""
    i = as_multiindex(i)
    m = as_multiindex(m)
    if not leq(i, m):
        raise ValueError(f"{i} is not below {m}")
    num = math.prod(math.comb(mk, ik) for mk, ik in zip(m, i))
    return float(Fraction(num, math.comb(magnitude(m), magnitude(i))))


def _log_binom(n: int, k: np.ndarray) -> np.ndarray:
    return gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1)


def hypergeom_array(m: MultiIndex) -> np.ndarray:
    """Dense array ``a[n] = p(m - n; m, |m| - |n|)`` over the box ``0 <= n <= m``."""
    M = magnitude(m)
    logs = np.zeros(tuple(v + 1 for v in m))
    tot = np.zeros_like(logs, dtype=int)
    for j, mj in enumerate(m):
        shape = [1] * len(m)
        shape[j] = mj + 1
        k = np.arange(mj + 1)
        logs = logs + _log_binom(mj, k).reshape(shape)
        tot = tot + k.reshape(shape)
    logs = logs - _log_binom(M, tot)
    return np.exp(logs)


def dense_transition(m: MultiIndex, level: np.ndarray) -> np.ndarray:
    """Dense row ``p_{m,n}`` over the box below ``m`` given its level probabilities."""
    M = magnitude(m)
    tot = np.zeros(tuple(v + 1 for v in m), dtype=int)
    for j, mj in enumerate(m):
        shape = [1] * len(m)
        shape[j] = mj + 1
        tot = tot + np.arange(mj + 1).reshape(shape)
    return level[M - tot] * hypergeom_array(m)


def transition_prob(m, n, t: float, theta0, spec: DeathKernelSpec) -> float:
    """``Pr[M_t = n | M_0 = m, Theta_0 = theta0]``."""
    m = as_multiindex(m)
    n = as_multiindex(n)
    i = sub(m, n)
    if t < 0:
        raise ValueError(f"elapsed time must be non-negative, got {t}")
    drop = magnitude(i)
    tau = float(spec.rho_integral_fn(theta0, t))
    # full rows share one cache entry across all targets below m
    level = level_probabilities(magnitude(m), tau, spec)
    return float(level[drop]) * mv_hypergeom(i, m)


def transition_table(m, t: float, theta0, spec: DeathKernelSpec) -> TransitionTable:
    """All probabilities ``p_{m,n}(t; theta0)`` for ``n`` in the lower set of ``m``."""
    m = as_multiindex(m)
    if t < 0:
        raise ValueError(f"elapsed time must be non-negative, got {t}")
    if len(m) != spec.dim:
        raise ValueError(f"expected a {spec.dim}-dimensional multi-index, got {m}")
    tau = float(spec.rho_integral_fn(theta0, t))
    dense = dense_transition(m, level_probabilities(magnitude(m), tau, spec))
    s = dense.sum()
    if abs(s - 1.0) > CLAMP_TOL:
        raise NumericalError(f"transition row from {m} sums to {s!r}")
    dense = dense / s
    probs = {tuple(int(v) for v in idx): float(dense[idx]) for idx in np.ndindex(dense.shape)}
    return TransitionTable(origin=m, elapsed=float(t), theta0=theta0, probs=probs)
