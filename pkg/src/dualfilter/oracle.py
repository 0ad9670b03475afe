"""Independent reference computations used to validate the exact filter.

Nothing here goes through the closed-form death-process coefficients: the
signal is simulated directly (exactly for CIR and OU, by Euler-Maruyama for
WF), the filter is approximated by a bootstrap particle filter, death
process rows come from the exponential of the explicit rate matrix, and
Bayes updates are done by quadrature on a grid.

Randomness is drawn from streams derived from one integer seed plus a key
naming the sub-oracle, so every check is reproducible on its own.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg
from scipy.special import gammaln
from scipy.integrate import trapezoid
from scipy.stats import poisson

from .dual_death import DeathKernelSpec, TransitionTable
from .errors import InputError, NumericalError
from .models import CIRModel, Model, Observation, OUModel, WFModel
from .multiindex import as_multiindex, lower_set

WF_STEP = 1e-4
WF_FLOOR = 1e-12
MAX_STATES = 100_000

# stream keys
_SIM, _PF, _DUAL = 0, 1, 2


def stream(seed: int, *key: int) -> np.random.Generator:
    """Generator for sub-stream ``key`` of ``seed``."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key)))


@dataclass(frozen=True)
class SimulationConfig:
    model: Model
    n_obs: int
    gap: float
    seed: int = 0
    particles: int = 1000
    wf_step: float = WF_STEP
    wf_total: int = 10

    def __post_init__(self):
        if self.n_obs < 1:
            raise InputError(f"need at least one observation, got {self.n_obs}")
        if not self.gap > 0:
            raise InputError(f"observation gap must be positive, got {self.gap}")
        if self.particles < 1:
            raise InputError(f"particle count must be positive, got {self.particles}")
        if not self.wf_step > 0:
            raise InputError(f"Euler step must be positive, got {self.wf_step}")
        if self.wf_total < 0:
            raise InputError(f"multinomial total must be non-negative, got {self.wf_total}")


# -- signal ----------------------------------------------------------------

def sample_stationary(model: Model, rng: np.random.Generator, size: int) -> np.ndarray:
    if isinstance(model, CIRModel):
        return rng.gamma(model.shape0, 1.0 / model.stationary_theta, size)
    if isinstance(model, OUModel):
        return rng.normal(model.gamma, math.sqrt(model.alpha), size)
    if isinstance(model, WFModel):
        return rng.dirichlet(model.alpha, size)
    raise TypeError(f"unsupported model {model!r}")


def _wf_euler(model: WFModel, x: np.ndarray, dt: float, rng: np.random.Generator, step: float) -> np.ndarray:
    n = max(1, math.ceil(dt / step - 1e-9))
    h = dt / n
    sh = math.sqrt(h)
    A = model.total_alpha
    shape = x.shape
    # work on a (K, N) array so each coordinate is contiguous
    xt = np.ascontiguousarray(np.asarray(x, dtype=float).reshape(-1, model.dim).T)
    drift = 0.5 * h * np.asarray(model.alpha)[:, None]
    decay = 1.0 - 0.5 * A * h
    for _ in range(n):
        z = rng.standard_normal(xt.shape)
        z *= np.sqrt(xt)
        # noise with covariance diag(x) - x x^T
        s = z.sum(axis=0)
        z -= xt * s
        z *= sh
        xt *= decay
        xt += drift
        xt += z
        np.maximum(xt, WF_FLOOR, out=xt)
        xt /= xt.sum(axis=0)
    return xt.T.reshape(shape).copy()


def simulate_signal(model: Model, x0, dt: float, rng: np.random.Generator,
                    wf_step: float = WF_STEP) -> np.ndarray:
    """One draw from the ``dt``-transition for each starting point in ``x0``.

    CIR uses the Poisson mixture of gammas, OU its Gaussian transition, WF an
    Euler-Maruyama scheme projected back onto the simplex.
    """
    if dt < 0:
        raise InputError(f"dt must be non-negative, got {dt}")
    x0 = np.asarray(x0, dtype=float)
    if dt == 0:
        return x0.copy()
    if isinstance(model, CIRModel):
        g = model.stationary_theta
        em1 = math.expm1(2 * model.gamma * dt)
        k = rng.poisson(g * x0 / em1)
        rate = g * (em1 + 1.0) / em1
        return rng.gamma(k + model.shape0, 1.0 / rate)
    if isinstance(model, OUModel):
        r = model.sigma2 / model.alpha
        mean = model.gamma + (x0 - model.gamma) * math.exp(-r * dt)
        sd = math.sqrt(model.alpha * -math.expm1(-2 * r * dt))
        return mean + sd * rng.standard_normal(x0.shape)
    if isinstance(model, WFModel):
        return _wf_euler(model, x0, dt, rng, wf_step)
    raise TypeError(f"unsupported model {model!r}")


def sample_emission(model: Model, x, rng: np.random.Generator, wf_total: int = 10):
    if isinstance(model, CIRModel):
        return int(rng.poisson(model.lambda_em * float(x)))
    if isinstance(model, OUModel):
        return float(rng.normal(float(x), math.sqrt(model.lambda_em)))
    if isinstance(model, WFModel):
        p = np.asarray(x, dtype=float)
        return tuple(int(v) for v in rng.multinomial(wf_total, p / p.sum()))
    raise TypeError(f"unsupported model {model!r}")


def simulate_hmm(config: SimulationConfig) -> tuple[np.ndarray, list, list[Observation]]:
    """Stationary start, then alternate signal moves and emissions.

    Returns (observation times, hidden states, observations).
    """
    rng = stream(config.seed, _SIM)
    model = config.model
    x = sample_stationary(model, rng, 1)[0]
    times = config.gap * np.arange(config.n_obs)
    path, obs = [], []
    for i, t in enumerate(times):
        if i > 0:
            x = simulate_signal(model, np.asarray([x]), config.gap, rng, config.wf_step)[0]
        path.append(np.array(x, copy=True) if np.ndim(x) else float(x))
        obs.append(Observation(float(t), sample_emission(model, x, rng, config.wf_total)))
    return times, path, obs


# -- particle filter ---------------------------------------------------------

@dataclass
class ParticleFilterResult:
    """Replicate-averaged particle estimates.

    ``*_se`` is the standard error of a single ``n_particles`` filter,
    estimated by the standard deviation across replicates. Divide by
    ``sqrt(replicates)`` for the standard error of the averages.
    """

    mean: np.ndarray
    var: np.ndarray
    loglik: np.ndarray
    mean_se: np.ndarray
    var_se: np.ndarray
    loglik_se: np.ndarray
    n_particles: int
    replicates: int
    runs: dict = field(default_factory=dict, repr=False)

    def z_scores(self, exact_mean, exact_var) -> tuple[np.ndarray, np.ndarray]:
        zm = (np.asarray(exact_mean) - self.mean) / self.mean_se
        zv = (np.asarray(exact_var) - self.var) / self.var_se
        return zm, zv


def _bootstrap_run(model: Model, obs: Sequence[Observation], n: int, rng: np.random.Generator,
                   wf_step: float):
    x = sample_stationary(model, rng, n)
    t_prev = obs[0].time
    T = len(obs)
    shape = (T, model.dim) if isinstance(model, WFModel) else (T,)
    means, vars_ = np.empty(shape), np.empty(shape)
    loglik = np.empty(T)
    acc = 0.0
    for i, o in enumerate(obs):
        if o.time > t_prev:
            x = simulate_signal(model, x, o.time - t_prev, rng, wf_step)
        t_prev = o.time
        y = np.asarray(o.y) if isinstance(model, WFModel) else o.y
        lw = model.log_emission(x, y)
        mx = lw.max()
        if not np.isfinite(mx):
            raise NumericalError(f"particle degeneracy at t={o.time}: every weight is zero")
        w = np.exp(lw - mx)
        sw = w.sum()
        acc += mx + math.log(sw / n)
        w /= sw
        mu = w @ x
        means[i] = mu
        vars_[i] = w @ (x - mu) ** 2
        loglik[i] = acc
        idx = rng.choice(n, size=n, p=w)
        x = x[idx]
    return means, vars_, loglik


def particle_filter(model: Model, obs: Sequence[Observation], n_particles: int, seed: int = 0,
                    replicates: int = 20, wf_step: float = WF_STEP) -> ParticleFilterResult:
    """Bootstrap particle filter with multinomial resampling at every step.

    The particles start from the stationary law at the first observation
    time, matching the exact filter's default initialisation.
    """
    if n_particles < 100:
        raise InputError(f"need at least 100 particles, got {n_particles}")
    if replicates < 2:
        raise InputError(f"need at least two replicates to estimate errors, got {replicates}")
    if not obs:
        raise InputError("no observations")
    runs = [_bootstrap_run(model, obs, n_particles, stream(seed, _PF, r), wf_step)
            for r in range(replicates)]
    means = np.stack([r[0] for r in runs])
    vars_ = np.stack([r[1] for r in runs])
    logliks = np.stack([r[2] for r in runs])
    return ParticleFilterResult(
        mean=means.mean(0), var=vars_.mean(0), loglik=logliks.mean(0),
        mean_se=means.std(0, ddof=1), var_se=vars_.std(0, ddof=1), loglik_se=logliks.std(0, ddof=1),
        n_particles=n_particles, replicates=replicates,
        runs={"mean": means, "var": vars_, "loglik": logliks},
    )


# -- death process -----------------------------------------------------------

def generator_expm(m, t: float, theta0, spec: DeathKernelSpec) -> TransitionTable:
    """Row ``m`` of ``exp(tau Q)`` for the death-process rate matrix ``Q``.

    ``Q`` is assembled on the lower set of ``m`` from the jump rates
    ``lambda(|n|) n_j`` for ``n -> n - e_j``; the common ``rho`` factor is
    absorbed into the clock ``tau``.
    """
    m = as_multiindex(m)
    states = lower_set([m]).elements
    S = len(states)
    if S > MAX_STATES:
        raise InputError(f"state space of {S} states exceeds the limit of {MAX_STATES}")
    tau = float(spec.rho_integral_fn(theta0, t)) if t > 0 else 0.0
    index = {s: k for k, s in enumerate(states)}
    rows, cols, vals = [], [], []
    for k, n in enumerate(states):
        lam = float(spec.lambda_fn(sum(n))) if sum(n) > 0 else 0.0
        out = 0.0
        for j, nj in enumerate(n):
            if nj == 0:
                continue
            r = lam * nj
            target = n[:j] + (nj - 1,) + n[j + 1:]
            rows.append(k)
            cols.append(index[target])
            vals.append(r)
            out += r
        rows.append(k)
        cols.append(k)
        vals.append(-out)
    Q = scipy.sparse.csr_matrix((vals, (rows, cols)), shape=(S, S))
    start = index[m]
    if tau == 0.0:
        row = np.zeros(S)
        row[start] = 1.0
    elif S <= 2000:
        row = scipy.linalg.expm(tau * Q.toarray())[start]
    else:
        e = np.zeros(S)
        e[start] = 1.0
        row = scipy.sparse.linalg.expm_multiply(tau * Q.T.tocsc(), e)
    if row.min() < -1e-12:
        raise NumericalError(f"matrix exponential produced a negative entry {row.min()!r}")
    row = np.clip(row, 0.0, None)
    return TransitionTable(origin=m, elapsed=float(t), theta0=theta0,
                           probs={s: float(row[k]) for k, s in enumerate(states)})


# -- quadrature --------------------------------------------------------------

def quadrature_bayes(model: Model, grid: np.ndarray, prior: np.ndarray, y) -> tuple[np.ndarray, float]:
    """Grid Bayes update by the trapezoid rule.

    ``grid`` holds states of a one-dimensional model, or the first coordinate
    for a two-type WF model. Returns the posterior density on the grid and the
    predictive density of ``y``.
    """
    grid = np.asarray(grid, dtype=float)
    prior = np.asarray(prior, dtype=float)
    if isinstance(model, WFModel):
        if model.dim != 2:
            raise InputError("grid quadrature supports WF only with two types")
        states = np.stack([grid, 1.0 - grid], axis=-1)
        y = np.asarray(model.check_observation(y))
    else:
        states = grid
        y = model.check_observation(y)
    if grid.size < 10_000:
        raise InputError(f"grid needs at least 10^4 nodes, got {grid.size}")
    mass = trapezoid(prior, grid)
    if mass < 1 - 1e-6:
        raise NumericalError(f"prior grid mass {mass!r} is below 1 - 1e-6; widen the grid")
    lik = np.exp(model.log_emission(states, y))
    joint = lik * prior
    p = float(trapezoid(joint, grid))
    if not p > 0:
        raise NumericalError("observation has zero predictive density on the grid")
    return joint / p, p


def cir_transition_density(model: CIRModel, x: float, xp, t: float, tail: float = 1e-12) -> np.ndarray:
    """CIR transition density ``P_t(x, dx')/dx'`` from its Poisson-gamma series.

    The series is cut once the remaining Poisson mass is below ``tail``.
    """
    xp = np.asarray(xp, dtype=float)
    g = model.stationary_theta
    em1 = math.expm1(2 * model.gamma * t)
    lam = g * x / em1
    rate = g * (em1 + 1.0) / em1
    kmax = int(poisson.isf(tail, lam)) + 1 if lam > 0 else 0
    k = np.arange(kmax + 1)
    logw = poisson.logpmf(k, lam)
    shape = k + model.shape0
    with np.errstate(divide="ignore"):
        logx = np.log(xp)
    logdens = (shape[:, None] * math.log(rate) - gammaln(shape)[:, None]
               + (shape[:, None] - 1) * logx[None, :] - rate * xp[None, :])
    return np.exp(logw[:, None] + logdens).sum(axis=0)


def duality_check(model: Model, x, m, theta, t: float, n_draws: int, rng: np.random.Generator,
                  table: TransitionTable | None = None, wf_step: float = WF_STEP):
    """Both sides of ``E^x[h(X_t, m, theta)] = sum_n p_{m,n}(t; theta) h(x, n, Theta_t)``.

    The left side is a Monte Carlo mean over simulated signal draws; the
    right side uses ``table`` (by default the matrix-exponential row).

    Returns (lhs estimate, its standard error, rhs).
    """
    m = as_multiindex(m)
    if isinstance(model, WFModel):
        x0 = np.broadcast_to(np.asarray(x, dtype=float), (n_draws, model.dim))
    else:
        x0 = np.full(n_draws, float(x))
    xt = simulate_signal(model, x0, t, rng, wf_step)
    vals = model.h_eval(xt, m, theta)
    lhs = float(vals.mean())
    se = float(vals.std(ddof=1) / math.sqrt(n_draws))
    if table is None:
        table = generator_expm(m, t, theta, model.death_kernel_spec())
    theta_t = model.theta_flow(theta, t)
    rhs = math.fsum(p * model.h_eval(x, n, theta_t) for n, p in table.probs.items())
    return lhs, se, rhs
