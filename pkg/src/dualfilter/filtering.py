"""Exact filtering recursion over finite mixtures of conjugate components.

The filtering distribution is held as ``sum_m w_m h(x, m, theta) pi(dx)``:
a lexicographically ordered support of multi-indices with log-weights and a
single shared dual parameter ``theta``. An observation reweights the
components by their predictive constants and shifts every multi-index by the
observed counts; advancing time moves ``theta`` along its flow and spreads
each component's weight over the multi-indices below it with the death
process transition probabilities.
"""
from __future__ import annotations

import functools
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from . import dual_death
from .errors import InputError, NumericalError
from .models import Model, Observation
from .multiindex import IndexSet, MultiIndex, as_multiindex

logger = logging.getLogger(__name__)

DEFAULT_PRUNE_EPS = 1e-10


@dataclass(frozen=True, eq=False)
class MixtureState:
    """Filtering (or predictive) distribution at ``timestamp``.

    For models without a death component (OU) ``support`` and
    ``log_weights`` are ``None`` and the state is just ``theta``.
    """

    model: Model
    theta: object
    timestamp: float
    support: tuple | None = None
    log_weights: np.ndarray | None = None

    @property
    def weights(self) -> np.ndarray | None:
        if self.log_weights is None:
            return None
        return np.exp(self.log_weights)

    def weight_map(self) -> dict[MultiIndex, float]:
        if self.support is None:
            return {}
        return dict(zip(self.support, self.weights.tolist()))

    @property
    def index_set(self) -> IndexSet | None:
        return None if self.support is None else IndexSet(self.support, dim=self.model.dim)

    def __len__(self) -> int:
        return 1 if self.support is None else len(self.support)


@dataclass
class StepRecord:
    time: float
    observation: Observation
    predicted: MixtureState
    state: MixtureState
    log_density: float
    pruned_mass: float = 0.0
    outside_proof_range: bool = False


@dataclass
class FilterTrace:
    records: list[StepRecord] = field(default_factory=list)

    @property
    def log_likelihood(self) -> float:
        return math.fsum(r.log_density for r in self.records)

    def cumulative_log_likelihood(self) -> np.ndarray:
        return np.cumsum([r.log_density for r in self.records])

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)


def init(model: Model, m0: Sequence[int] | None = None, theta0=None, timestamp: float = 0.0) -> MixtureState:
    """Single-component state at ``(m0, theta0)``; the default is the stationary law."""
    theta = model.stationary_theta if theta0 is None else theta0
    model.check_theta(theta)
    if model.dim == 0:
        if m0 is not None and len(m0) != 0:
            raise InputError(f"{model.variant} model takes no multi-index, got {m0!r}")
        return MixtureState(model, theta, float(timestamp))
    m = model.default_m0() if m0 is None else as_multiindex(m0)
    if len(m) != model.dim:
        raise InputError(f"initial multi-index must have dimension {model.dim}, got {m}")
    return MixtureState(model, theta, float(timestamp), (m,), np.zeros(1))


def update(state: MixtureState, y) -> tuple[MixtureState, float]:
    """Condition on one observation; returns the new state and ``log p(y)``."""
    model = state.model
    if isinstance(y, Observation):
        y = y.y
    y = model.check_observation(y)
    if state.support is None:
        logc = model.log_predictive_const((), state.theta, y)
        _, theta = model.conjugate_update(y, (), state.theta)
        return MixtureState(model, theta, state.timestamp), logc

    logc = np.array([model.log_predictive_const(m, state.theta, y) for m in state.support])
    a = state.log_weights + logc
    if not np.any(np.isfinite(a)):
        raise NumericalError(f"observation {y!r} has zero probability under every component")
    logp = float(logsumexp(a))
    new_support = []
    theta = state.theta
    for m in state.support:
        n, theta = model.conjugate_update(y, m, state.theta)
        new_support.append(n)
    new_support = tuple(new_support)
    if len(set(new_support)) != len(new_support):
        raise NumericalError("conjugate update collapsed distinct components")
    return MixtureState(model, theta, state.timestamp, new_support, a - logp), logp


@functools.lru_cache(maxsize=8192)
def _hypergeom(m: MultiIndex) -> tuple[np.ndarray, np.ndarray]:
    tot = np.zeros(tuple(v + 1 for v in m), dtype=np.intp)
    for j, mj in enumerate(m):
        shape = [1] * len(m)
        shape[j] = mj + 1
        tot = tot + np.arange(mj + 1).reshape(shape)
    drops = sum(m) - tot
    return drops, dual_death.hypergeom_array(m)


def predict(state: MixtureState, dt: float, generic: bool = False) -> MixtureState:
    """Advance the mixture by ``dt``.

    Args:
        state: current mixture.
        dt: elapsed time, non-negative.
        generic: use the generic death-process formula even when the model
            provides a specialised one (CIR binomial thinning).
    """
    if dt < 0:
        raise InputError(f"cannot predict backwards in time (dt={dt})")
    if dt == 0:
        return state
    model = state.model
    theta_new = model.theta_flow(state.theta, dt)
    t_new = state.timestamp + dt
    if state.support is None:
        return MixtureState(model, theta_new, t_new)

    weights = state.weights
    support = state.support
    box = tuple(max(m[j] for m in support) + 1 for j in range(model.dim))
    acc = np.zeros(box)
    # the new support is the lower set of the old one, even where a weight
    # underflows to zero; only pruning removes components
    reach = np.zeros(box, dtype=bool)
    levels: dict[int, np.ndarray] = {}
    spec = model.death_kernel_spec() if generic else None
    for m, w in zip(support, weights):
        below = tuple(slice(0, v + 1) for v in m)
        reach[below] = True
        if w == 0.0:
            continue
        M = sum(m)
        if M not in levels:
            if generic:
                tau = spec.rho_integral_fn(state.theta, dt)
                levels[M] = dual_death.level_probabilities(M, tau, spec)
            else:
                levels[M] = model.level_probabilities(M, dt, state.theta)
        drops, hyper = _hypergeom(m)
        acc[below] += w * (levels[M][drops] * hyper)

    total = acc.sum()
    if not abs(total - 1.0) < 1e-9:
        raise NumericalError(f"predicted weights sum to {total!r}")
    idx = np.nonzero(reach)
    vals = acc[idx] / total
    new_support = tuple(zip(*(ix.tolist() for ix in idx)))
    with np.errstate(divide="ignore"):
        log_vals = np.log(vals)
    return MixtureState(model, theta_new, t_new, new_support, log_vals)


def prune(state: MixtureState, eps: float = DEFAULT_PRUNE_EPS) -> tuple[MixtureState, float]:
    """Drop components with weight below ``eps``; returns the state and the discarded mass."""
    if not 0 <= eps < 1:
        raise InputError(f"prune threshold must lie in [0, 1), got {eps}")
    if state.support is None or eps == 0:
        return state, 0.0
    w = state.weights
    keep = w >= eps
    if keep.all():
        return state, 0.0
    if not keep.any():
        raise NumericalError(f"pruning at {eps} would remove every component")
    discarded = math.fsum(w[~keep])
    lw = state.log_weights[keep]
    lw = lw - logsumexp(lw)
    support = tuple(m for m, k in zip(state.support, keep) if k)
    if discarded > 0:
        logger.debug("pruned %d components, mass %.3g", int((~keep).sum()), discarded)
    return MixtureState(state.model, state.theta, state.timestamp, support, lw), discarded


def step(state: MixtureState, obs: Observation, prune_eps: float = DEFAULT_PRUNE_EPS,
         generic: bool = False) -> StepRecord:
    """Predict up to ``obs.time``, condition on ``obs`` and prune."""
    dt = obs.time - state.timestamp
    if dt < 0:
        raise InputError(f"observation at t={obs.time} precedes the filter time {state.timestamp}")
    predicted = predict(state, dt, generic=generic)
    updated, logp = update(predicted, obs.y)
    updated, pruned = prune(updated, prune_eps)
    model = state.model
    outside = not (model.in_proof_range(predicted.theta) and model.in_proof_range(updated.theta))
    return StepRecord(obs.time, obs, predicted, updated, logp, pruned, outside)


def run_filter(model: Model, observations: Sequence[Observation], m0=None, theta0=None,
               prune_eps: float = DEFAULT_PRUNE_EPS, t0: float | None = None,
               generic: bool = False) -> FilterTrace:
    """Filter a whole observation sequence.

    The initial law ``h(x, m0, theta0) pi(dx)`` sits at ``t0``, which
    defaults to the first observation time.
    """
    trace = FilterTrace()
    if not observations:
        return trace
    start = observations[0].time if t0 is None else t0
    state = init(model, m0, theta0, timestamp=start)
    for obs in observations:
        rec = step(state, obs, prune_eps, generic=generic)
        trace.records.append(rec)
        state = rec.state
    return trace


def moments(state: MixtureState):
    """Mean and variance of the filtering distribution.

    For WF both are per-coordinate arrays.
    """
    model = state.model
    if state.support is None:
        mu, tau = state.theta
        return mu, tau
    w = state.weights
    firsts, seconds = zip(*(model.component_moments(m, state.theta) for m in state.support))
    if model.dim == 1:
        mean = float(np.dot(w, firsts))
        second = float(np.dot(w, seconds))
        return mean, max(second - mean * mean, 0.0)
    firsts = np.asarray(firsts)
    seconds = np.asarray(seconds)
    mean = w @ firsts
    second = w @ seconds
    return mean, np.maximum(second - mean * mean, 0.0)
