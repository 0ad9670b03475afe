"""Signal/emission families with conjugate duality structure.

Each model bundles

* the reversible law ``pi`` of the signal,
* the duality function ``h(x, m, theta)``, the density of a conjugate
  component with respect to ``pi``,
* the conjugate update ``(m, theta) -> (m + N(y), T(y, theta))`` and the
  predictive constant ``c(m, theta, y)``,
* the deterministic flow of ``theta`` and the death-process rates of the dual.

Three families are provided: :class:`CIRModel` (gamma components, Poisson
counts), :class:`OUModel` (Gaussian components, Gaussian observations) and
:class:`WFModel` (Dirichlet components, multinomial counts).
"""
from __future__ import annotations

import dataclasses
import functools
import math
import numbers
from dataclasses import dataclass
from typing import ClassVar, Sequence

import numpy as np
from scipy.special import gammaln
from scipy.stats import binom

from .dual_death import DeathKernelSpec, level_probabilities
from .errors import InputError
from .multiindex import MultiIndex, as_multiindex

SIMPLEX_TOL = 1e-9


@dataclass(frozen=True)
class Observation:
    """A time-stamped emission: a count (CIR), a real (OU) or a count vector (WF)."""

    time: float
    y: object


def _positive(name: str, value: float) -> float:
    value = float(value)
    if not (value > 0 and math.isfinite(value)):
        raise InputError(f"{name} must be positive and finite, got {value!r}")
    return value


class Model:
    """Common interface of the three families.

    ``dim`` is the death-process dimension K (0 when the dual is purely
    deterministic). Dual parameters are plain values: a float for CIR, a
    ``(mean, variance)`` tuple for OU and ``None`` for WF.
    """

    variant: ClassVar[str] = ""
    dim: int = 0

    @property
    def stationary_theta(self):
        raise NotImplementedError

    def default_m0(self) -> MultiIndex:
        return (0,) * self.dim

    def check_theta(self, theta) -> None:
        """Raise :class:`InputError` if ``theta`` lies outside the parameter space."""

    def in_proof_range(self, theta) -> bool:
        """Whether ``theta`` lies where the generator-based duality argument applies."""
        return True

    def check_observation(self, y):
        raise NotImplementedError

    def h_eval(self, x, m, theta):
        """Duality function ``h(x, m, theta)``; vectorised over ``x``."""
        lh = self.log_h(x, m, theta)
        with np.errstate(over="ignore"):
            out = np.exp(lh)
        return out if np.ndim(lh) else float(out)

    def log_h(self, x, m, theta):
        raise NotImplementedError

    def conjugate_update(self, y, m, theta):
        raise NotImplementedError

    def log_predictive_const(self, m, theta, y) -> float:
        raise NotImplementedError

    def predictive_const(self, m, theta, y) -> float:
        return math.exp(self.log_predictive_const(m, theta, y))

    def log_emission(self, x, y):
        """Log emission density ``log f_x(y)``, vectorised over ``x``."""
        raise NotImplementedError

    def theta_flow(self, theta, t: float):
        raise NotImplementedError

    def rho_integral(self, theta, t: float) -> float:
        raise NotImplementedError

    def death_kernel_spec(self) -> DeathKernelSpec:
        raise InputError(f"{self.variant} model has no death component")

    def level_probabilities(self, total: int, t: float, theta) -> np.ndarray:
        """Probabilities of the death-process total falling by ``0..total`` over ``t``."""
        spec = self.death_kernel_spec()
        return level_probabilities(total, spec.rho_integral_fn(theta, t), spec)

    def component_moments(self, m, theta):
        """Mean and second moment of the component ``h(x, m, theta) pi(dx)``."""
        raise NotImplementedError

    def to_config(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class CIRModel(Model):
    """CIR signal ``dX = (delta*sigma2 - 2*gamma*X) dt + 2*sqrt(sigma2*X) dB``.

    Observations are Poisson counts with intensity ``lambda_em * X``. The
    stationary law is ``Gamma(delta/2, rate=gamma/sigma2)`` and components are
    ``Gamma(delta/2 + m, rate=theta)``.
    """

    delta: float
    gamma: float
    sigma2: float
    lambda_em: float

    variant: ClassVar[str] = "cir"
    dim: ClassVar[int] = 1

    def __post_init__(self):
        for name in ("delta", "gamma", "sigma2", "lambda_em"):
            object.__setattr__(self, name, _positive(name, getattr(self, name)))

    @property
    def stationary_theta(self) -> float:
        return self.gamma / self.sigma2

    @property
    def shape0(self) -> float:
        return self.delta / 2.0

    def check_theta(self, theta) -> None:
        if not (isinstance(theta, numbers.Real) and theta > 0 and math.isfinite(theta)):
            raise InputError(f"CIR dual parameter must be a positive float, got {theta!r}")

    def in_proof_range(self, theta) -> bool:
        return theta >= self.stationary_theta

    def check_observation(self, y) -> int:
        if isinstance(y, (list, tuple, np.ndarray)):
            if len(y) != 1:
                raise InputError(f"CIR observation must be a single count, got {y!r}")
            (y,) = y
        if not (isinstance(y, numbers.Integral) or float(y).is_integer()) or y < 0:
            raise InputError(f"CIR observation must be a non-negative integer count, got {y!r}")
        return int(y)

    def _m(self, m) -> int:
        (mm,) = as_multiindex(m)
        return mm

    def log_h(self, x, m, theta):
        x = np.asarray(x, dtype=float)
        if np.any(x < 0):
            raise InputError(f"CIR state must be non-negative, got {x}")
        mm = self._m(m)
        a0 = self.shape0
        g = self.stationary_theta
        with np.errstate(divide="ignore"):
            xm = mm * np.log(x) if mm > 0 else np.zeros_like(x)
        out = (math.lgamma(a0) - math.lgamma(a0 + mm) - a0 * math.log(g)
               + (a0 + mm) * math.log(theta) + xm - (theta - g) * x)
        return float(out) if out.ndim == 0 else out

    def conjugate_update(self, y, m, theta):
        y = self.check_observation(y)
        return (self._m(m) + y,), theta + self.lambda_em

    def log_predictive_const(self, m, theta, y) -> float:
        # negative binomial: Poisson(lambda*x) mixed over Gamma(a, theta)
        y = self.check_observation(y)
        a = self.shape0 + self._m(m)
        lam = self.lambda_em
        return (math.lgamma(a + y) - math.lgamma(a) - math.lgamma(y + 1)
                + a * math.log(theta / (theta + lam)) + y * math.log(lam / (theta + lam)))

    def log_emission(self, x, y):
        x = np.asarray(x, dtype=float)
        rate = self.lambda_em * x
        with np.errstate(divide="ignore"):
            return y * np.log(rate) - rate - math.lgamma(y + 1) if y > 0 else -rate

    def theta_flow(self, theta, t: float) -> float:
        g = self.stationary_theta
        if t == 0:
            return theta
        # g*theta*e^{2gt} / (theta*e^{2gt} + g - theta), written to avoid overflow
        e = math.exp(-2.0 * self.gamma * t)
        return g * theta / (theta + (g - theta) * e)

    def rho_integral(self, theta, t: float) -> float:
        """``int_0^t Theta_s ds = log(1 + theta*(e^{2 gamma t} - 1)/g) / (2 sigma2)``."""
        g = self.stationary_theta
        if t == 0:
            return 0.0
        x = 2.0 * self.gamma * t
        if x < 30.0:
            val = math.log1p(theta * math.expm1(x) / g)
        else:
            val = x + math.log(theta / g) + math.log1p((g - theta) / theta * math.exp(-x))
        return val / (2.0 * self.sigma2)

    def survival_prob(self, t: float, theta) -> float:
        """Success probability of the binomial thinning over ``t``."""
        g = self.stationary_theta
        return 1.0 / (1.0 + theta * math.expm1(2.0 * self.gamma * t) / g)

    def binomial_transition(self, m: int, i: int, t: float, theta) -> float:
        """``p_{m, m-i}(t; theta)`` as a binomial pmf."""
        if not 0 <= i <= m:
            raise ValueError(f"need 0 <= i <= m, got i={i}, m={m}")
        q = self.survival_prob(t, theta)
        k = m - i
        # scalar pmf without the scipy.stats call overhead
        if q == 1.0:
            return float(k == m)
        log_pmf = (math.lgamma(m + 1) - math.lgamma(k + 1) - math.lgamma(i + 1)
                   + (k * math.log(q) if k else 0.0) + i * math.log1p(-q))
        return math.exp(log_pmf)

    def level_probabilities(self, total: int, t: float, theta) -> np.ndarray:
        drops = np.arange(total + 1)
        return binom.pmf(total - drops, total, self.survival_prob(t, theta))

    @functools.cached_property
    def _spec(self) -> DeathKernelSpec:
        two_s2 = 2.0 * self.sigma2
        return DeathKernelSpec(lambda n: two_s2, self.rho_integral, 1, name="cir")

    def death_kernel_spec(self) -> DeathKernelSpec:
        return self._spec

    def component_moments(self, m, theta):
        a = self.shape0 + self._m(m)
        return a / theta, a * (a + 1) / theta**2

    def log_stationary_density(self, x):
        x = np.asarray(x, dtype=float)
        a, g = self.shape0, self.stationary_theta
        with np.errstate(divide="ignore"):
            return a * math.log(g) - math.lgamma(a) + (a - 1) * np.log(x) - g * x

    def to_config(self) -> dict:
        return {"model": "cir", "delta": self.delta, "gamma": self.gamma,
                "sigma2": self.sigma2, "lambda_em": self.lambda_em}



@dataclass(frozen=True)
class OUModel(Model):
    """Ornstein-Uhlenbeck signal ``dX = -(sigma2/alpha)(X - gamma) dt + sqrt(2*sigma2) dB``.

    Stationary law ``Normal(gamma, alpha)``; observations are
    ``Normal(X, lambda_em)``. The dual parameter is ``(mu, tau)``, the mean
    and variance of a Gaussian component, and there is no death component.
    """

    gamma: float
    alpha: float
    sigma2: float
    lambda_em: float

    variant: ClassVar[str] = "ou"
    dim: ClassVar[int] = 0

    def __post_init__(self):
        g = float(self.gamma)
        if not math.isfinite(g):
            raise InputError(f"gamma must be finite, got {g!r}")
        object.__setattr__(self, "gamma", g)
        for name in ("alpha", "sigma2", "lambda_em"):
            object.__setattr__(self, name, _positive(name, getattr(self, name)))

    @property
    def stationary_theta(self):
        return (self.gamma, self.alpha)

    def check_theta(self, theta) -> None:
        try:
            mu, tau = theta
        except (TypeError, ValueError):
            raise InputError(f"OU dual parameter must be (mean, variance), got {theta!r}") from None
        if not (math.isfinite(mu) and tau > 0 and math.isfinite(tau)):
            raise InputError(f"OU dual parameter needs finite mean and positive variance, got {theta!r}")

    def in_proof_range(self, theta) -> bool:
        return theta[1] < self.alpha

    def check_observation(self, y) -> float:
        if isinstance(y, (list, tuple, np.ndarray)):
            if len(y) != 1:
                raise InputError(f"OU observation must be a single real, got {y!r}")
            (y,) = y
        y = float(y)
        if not math.isfinite(y):
            raise InputError(f"OU observation must be finite, got {y!r}")
        return y

    def log_h(self, x, m, theta):
        mu, tau = theta
        x = np.asarray(x, dtype=float)
        out = (0.5 * math.log(self.alpha / tau) - (x - mu) ** 2 / (2 * tau)
               + (x - self.gamma) ** 2 / (2 * self.alpha))
        return float(out) if out.ndim == 0 else out

    def conjugate_update(self, y, m, theta):
        c = self.check_observation(y)
        mu, tau = theta
        lam = self.lambda_em
        return (), ((lam * mu + tau * c) / (lam + tau), lam * tau / (lam + tau))

    def log_predictive_const(self, m, theta, y) -> float:
        c = self.check_observation(y)
        mu, tau = theta
        v = tau + self.lambda_em
        return -0.5 * math.log(2 * math.pi * v) - (c - mu) ** 2 / (2 * v)

    def log_emission(self, x, y):
        x = np.asarray(x, dtype=float)
        v = self.lambda_em
        return -0.5 * math.log(2 * math.pi * v) - (y - x) ** 2 / (2 * v)

    def theta_flow(self, theta, t: float):
        mu, tau = theta
        if t == 0:
            return (mu, tau)
        r = self.sigma2 / self.alpha
        e1 = math.exp(-r * t)
        e2 = math.exp(-2 * r * t)
        return (self.gamma + (mu - self.gamma) * e1, self.alpha + (tau - self.alpha) * e2)

    def rho_integral(self, theta, t: float) -> float:
        raise InputError("OU model has no death component")

    def component_moments(self, m, theta):
        mu, tau = theta
        return mu, tau + mu * mu

    def log_stationary_density(self, x):
        x = np.asarray(x, dtype=float)
        return -0.5 * math.log(2 * math.pi * self.alpha) - (x - self.gamma) ** 2 / (2 * self.alpha)

    def to_config(self) -> dict:
        return {"model": "ou", "gamma": self.gamma, "alpha": self.alpha,
                "sigma2": self.sigma2, "lambda_em": self.lambda_em}



@dataclass(frozen=True)
class WFModel(Model):
    """K-type Wright-Fisher diffusion with parent-independent mutation.

    Stationary law ``Dirichlet(alpha)``; observations are multinomial counts
    with cell probabilities ``X``. Components are ``Dirichlet(alpha + m)``;
    there is no deterministic dual component (``theta`` is ``None``).
    """

    alpha: tuple

    variant: ClassVar[str] = "wf"

    def __post_init__(self):
        a = tuple(_positive(f"alpha[{i}]", v) for i, v in enumerate(self.alpha))
        if len(a) < 2:
            raise InputError(f"WF model needs at least two types, got {len(a)}")
        object.__setattr__(self, "alpha", a)

    @property
    def dim(self) -> int:
        return len(self.alpha)

    @property
    def total_alpha(self) -> float:
        return math.fsum(self.alpha)

    @property
    def stationary_theta(self):
        return None

    def check_theta(self, theta) -> None:
        if theta is not None:
            raise InputError(f"WF model has no dual parameter, got {theta!r}")

    def check_observation(self, y) -> MultiIndex:
        try:
            out = as_multiindex(y)
        except (TypeError, ValueError) as exc:
            raise InputError(f"WF observation must be non-negative integer counts: {exc}") from None
        if len(out) != self.dim:
            raise InputError(f"WF observation must have {self.dim} counts, got {len(out)}")
        return out

    def check_state(self, x) -> np.ndarray:
        """Validate simplex point(s) of shape ``(..., K)`` and renormalise."""
        x = np.asarray(x, dtype=float)
        if x.shape[-1:] != (self.dim,):
            raise InputError(f"WF state must have {self.dim} coordinates, got shape {x.shape}")
        if np.any(x < -SIMPLEX_TOL) or np.any(np.abs(x.sum(axis=-1) - 1.0) > SIMPLEX_TOL):
            raise InputError(f"WF state must lie in the simplex, got {x}")
        x = np.clip(x, 0.0, None)
        return x / x.sum(axis=-1, keepdims=True)

    def _m(self, m) -> MultiIndex:
        m = as_multiindex(m)
        if len(m) != self.dim:
            raise InputError(f"expected a {self.dim}-dimensional multi-index, got {m}")
        return m

    def log_h(self, x, m, theta=None):
        x = self.check_state(x)
        m = self._m(m)
        out = math.lgamma(self.total_alpha + sum(m)) - math.lgamma(self.total_alpha)
        for aj, mj in zip(self.alpha, m):
            out += math.lgamma(aj) - math.lgamma(aj + mj)
        mv = np.asarray(m, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(mv > 0, mv * np.log(x), 0.0)
        res = out + terms.sum(axis=-1)
        return float(res) if res.ndim == 0 else res

    def conjugate_update(self, y, m, theta=None):
        y = self.check_observation(y)
        m = self._m(m)
        return tuple(a + b for a, b in zip(m, y)), None

    def log_predictive_const(self, m, theta, y) -> float:
        # Dirichlet-multinomial pmf with parameters alpha + m
        y = self.check_observation(y)
        m = self._m(m)
        beta = [a + b for a, b in zip(self.alpha, m)]
        n = sum(y)
        B = math.fsum(beta)
        out = math.lgamma(n + 1) + math.lgamma(B) - math.lgamma(B + n)
        for bj, yj in zip(beta, y):
            out += math.lgamma(bj + yj) - math.lgamma(bj) - math.lgamma(yj + 1)
        return out

    def log_emission(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y)
        n = int(y.sum())
        const = math.lgamma(n + 1) - float(np.sum(gammaln(y + 1)))
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(y > 0, y * np.log(x), 0.0)
        return const + terms.sum(axis=-1)

    def theta_flow(self, theta, t: float):
        return None

    def rho_integral(self, theta, t: float) -> float:
        return float(t)

    @functools.cached_property
    def _spec(self) -> DeathKernelSpec:
        A = self.total_alpha
        return DeathKernelSpec(lambda n: (A + n - 1) / 2.0, self.rho_integral, self.dim, name="wf")

    def death_kernel_spec(self) -> DeathKernelSpec:
        return self._spec

    def component_moments(self, m, theta=None):
        beta = np.asarray(self.alpha) + np.asarray(self._m(m))
        B = beta.sum()
        return beta / B, beta * (beta + 1) / (B * (B + 1))

    def log_stationary_density(self, x):
        x = np.asarray(x, dtype=float)
        a = np.asarray(self.alpha)
        const = math.lgamma(self.total_alpha) - float(np.sum(gammaln(a)))
        with np.errstate(divide="ignore"):
            return const + np.sum((a - 1) * np.log(x), axis=-1)

    def to_config(self) -> dict:
        return {"model": "wf", "alpha": list(self.alpha)}



def make_model(variant: str, **params) -> Model:
    """Build a model from its variant tag and named parameters."""
    variant = variant.lower()
    classes = {"cir": CIRModel, "ou": OUModel, "wf": WFModel}
    if variant not in classes:
        raise InputError(f"unknown model variant {variant!r}; expected one of {sorted(classes)}")
    cls = classes[variant]
    fields = [f.name for f in dataclasses.fields(cls) if f.init]
    unknown = sorted(set(params) - set(fields))
    if unknown:
        raise InputError(f"parameters {unknown} do not apply to the {variant} model")
    missing = [f for f in fields if params.get(f) is None]
    if missing:
        raise InputError(f"{variant} model is missing required parameter(s): {', '.join(missing)}")
    return cls(**params)
