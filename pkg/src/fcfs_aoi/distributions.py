"""Service-time laws.

Every law exposes its first two moments, a sampler, and the Laplace transform
``L(a) = E[exp(-a S)]`` together with its first two derivatives in ``a``.
Exponential, gamma and hyper-exponential transforms are closed form; the
log-normal and Pareto transforms are computed by adaptive Gauss-Kronrod
quadrature (QUADPACK via ``scipy.integrate.quad``).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Any, Callable, ClassVar, Mapping

import numpy as np
from scipy import integrate

from .errors import ConfigError, InfiniteMoment, QuadratureFailure

# Required absolute accuracy of every quadrature-backed transform.
QUAD_ABS_TOL = 1e-10
# What we actually ask QUADPACK for; tighter so finite differences stay clean.
_QUAD_REQUEST = dict(epsabs=1e-14, epsrel=1e-13, limit=400)


def _quad(f: Callable[[float], float], lo: float, hi: float, relative=False, **kw) -> float:
    opts = dict(_QUAD_REQUEST, epsabs=0.0) if relative else _QUAD_REQUEST
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        out = integrate.quad(f, lo, hi, full_output=1, **opts, **kw)
    value, err = out[0], out[1]
    if not math.isfinite(value) or err > QUAD_ABS_TOL * max(1.0, abs(value)):
        raise QuadratureFailure(
            f"quadrature on [{lo}, {hi}] did not converge (estimate {value!r}, error {err:.3g})"
        )
    return value


class ServiceDistribution:
    """Common interface; concrete laws are frozen dataclasses below."""

    kind: ClassVar[str]

    def mean(self) -> float:
        raise NotImplementedError

    def second_moment(self) -> float:
        raise NotImplementedError

    @property
    def mu(self) -> float:
        """Service rate ``mu = 1 / E[S]``."""
        return 1.0 / self.mean()

    def variance(self) -> float:
        return self.second_moment() - self.mean() ** 2

    def sample(self, rng: np.random.Generator, size=None):
        raise NotImplementedError

    def _weighted(self, a: float, n: int) -> float:
        """``E[S**n exp(-a S)]`` for ``a > 0``."""
        raise NotImplementedError

    def laplace(self, a: float) -> float:
        _check_point(a)
        if a == 0.0:
            return 1.0
        return self._weighted(a, 0)

    def laplace_complement(self, a: float) -> float:
        """``1 - L(a)`` with full relative accuracy as ``a -> 0``."""
        _check_point(a)
        if a == 0.0:
            return 0.0
        return self._complement(a)

    def _complement(self, a: float) -> float:
        return 1.0 - self._weighted(a, 0)

    def laplace_d1(self, a: float) -> float:
        """``dL/da = -E[S exp(-a S)]``."""
        _check_point(a)
        if a == 0.0:
            return -self.mean()
        return -self._weighted(a, 1)

    def laplace_d2(self, a: float) -> float:
        """``d2L/da2 = E[S**2 exp(-a S)]``."""
        _check_point(a)
        if a == 0.0:
            return self.second_moment()
        return self._weighted(a, 2)

    def to_config(self) -> dict[str, Any]:
        raise NotImplementedError


def _check_point(a: float) -> None:
    if not a >= 0.0:
        raise ValueError(f"Laplace transform evaluated at negative or NaN point {a!r}")


def _positive(name: str, value: float) -> float:
    value = float(value)
    if not (value > 0.0 and math.isfinite(value)):
        raise ValueError(f"{name} must be positive and finite, got {value!r}")
    return value


@dataclass(frozen=True)
class Exponential(ServiceDistribution):
    rate: float

    kind: ClassVar[str] = "exponential"

    def __post_init__(self):
        object.__setattr__(self, "rate", _positive("rate", self.rate))

    def mean(self):
        return 1.0 / self.rate

    def second_moment(self):
        return 2.0 / self.rate**2

    def sample(self, rng, size=None):
        return rng.exponential(1.0 / self.rate, size)

    def _weighted(self, a, n):
        mu = self.rate
        return math.factorial(n) * mu / (mu + a) ** (n + 1)

    def _complement(self, a):
        return a / (self.rate + a)

    def to_config(self):
        return {"kind": self.kind, "rate": self.rate}


@dataclass(frozen=True)
class Gamma(ServiceDistribution):
    shape: float
    rate: float

    kind: ClassVar[str] = "gamma"

    def __post_init__(self):
        object.__setattr__(self, "shape", _positive("shape", self.shape))
        object.__setattr__(self, "rate", _positive("rate", self.rate))

    def mean(self):
        return self.shape / self.rate

    def second_moment(self):
        k, b = self.shape, self.rate
        return k * (k + 1) / b**2

    def sample(self, rng, size=None):
        return rng.gamma(self.shape, 1.0 / self.rate, size)

    def _weighted(self, a, n):
        # E[S^n e^{-aS}] = (k)_n / (b+a)^n * (b/(b+a))^k
        k, b = self.shape, self.rate
        rising = 1.0
        for i in range(n):
            rising *= k + i
        return rising / (b + a) ** n * (b / (b + a)) ** k

    def _complement(self, a):
        k, b = self.shape, self.rate
        return -math.expm1(k * math.log1p(-a / (b + a)))

    def to_config(self):
        return {"kind": self.kind, "shape": self.shape, "rate": self.rate}


@dataclass(frozen=True)
class HyperExponential(ServiceDistribution):
    weights: tuple[float, ...]
    rates: tuple[float, ...]

    kind: ClassVar[str] = "hyperexponential"

    def __post_init__(self):
        w = tuple(float(x) for x in self.weights)
        r = tuple(_positive("rate", x) for x in self.rates)
        if len(w) != len(r) or not w:
            raise ValueError("weights and rates must be non-empty and of equal length")
        if any(x < 0 for x in w) or abs(math.fsum(w) - 1.0) > 1e-12:
            raise ValueError(f"weights must be non-negative and sum to 1, got {w}")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "rates", r)

    def mean(self):
        return math.fsum(p / g for p, g in zip(self.weights, self.rates))

    def second_moment(self):
        return math.fsum(2.0 * p / g**2 for p, g in zip(self.weights, self.rates))

    def sample(self, rng, size=None):
        scales = 1.0 / np.asarray(self.rates)
        idx = rng.choice(len(scales), size=size, p=self.weights)
        return rng.exponential(scales[idx])

    def _weighted(self, a, n):
        fact = math.factorial(n)
        return math.fsum(p * fact * g / (g + a) ** (n + 1) for p, g in zip(self.weights, self.rates))

    def _complement(self, a):
        return math.fsum(p * a / (g + a) for p, g in zip(self.weights, self.rates))

    def to_config(self):
        return {"kind": self.kind, "weights": list(self.weights), "rates": list(self.rates)}


@dataclass(frozen=True)
class LogNormal(ServiceDistribution):
    location: float
    scale: float

    kind: ClassVar[str] = "lognormal"

    def __post_init__(self):
        loc = float(self.location)
        if not math.isfinite(loc):
            raise ValueError(f"location must be finite, got {loc!r}")
        object.__setattr__(self, "location", loc)
        object.__setattr__(self, "scale", _positive("scale", self.scale))

    def mean(self):
        return math.exp(self.location + self.scale**2 / 2)

    def second_moment(self):
        return math.exp(2 * self.location + 2 * self.scale**2)

    def sample(self, rng, size=None):
        return rng.lognormal(self.location, self.scale, size)

    def _weighted(self, a, n):
        # Integrate over z with S = exp(nu + sigma z); the standard normal
        # factor confines the mass to |z - n sigma| < 40.
        nu, sig = self.location, self.scale
        log_norm = -0.5 * math.log(2 * math.pi)

        def f(z):
            ls = nu + sig * z
            return math.exp(log_norm - 0.5 * z * z + n * ls - a * math.exp(ls))

        c = n * sig
        return _quad(f, c - 40.0, c) + _quad(f, c, c + 40.0)

    def _complement(self, a):
        nu, sig = self.location, self.scale
        log_norm = -0.5 * math.log(2 * math.pi)

        def f(z):
            return -math.expm1(-a * math.exp(nu + sig * z)) * math.exp(log_norm - 0.5 * z * z)

        return _quad(f, -40.0, sig, relative=True) + _quad(f, sig, sig + 40.0, relative=True)

    def to_config(self):
        return {"kind": self.kind, "location": self.location, "scale": self.scale}


@dataclass(frozen=True)
class Pareto(ServiceDistribution):
    scale: float
    shape: float

    kind: ClassVar[str] = "pareto"

    def __post_init__(self):
        object.__setattr__(self, "scale", _positive("scale", self.scale))
        alpha = _positive("shape", self.shape)
        if alpha <= 1.0:
            raise InfiniteMoment(f"Pareto shape {alpha} <= 1 has an infinite mean")
        object.__setattr__(self, "shape", alpha)

    def mean(self):
        a, w = self.shape, self.scale
        return a * w / (a - 1)

    def second_moment(self):
        a, w = self.shape, self.scale
        if a <= 2.0:
            raise InfiniteMoment(f"Pareto shape {a} <= 2 has an infinite second moment")
        return a * w * w / (a - 2)

    def sample(self, rng, size=None):
        return self.scale * (1.0 + rng.pareto(self.shape, size))

    def _weighted(self, a, n):
        # u = (w/s)^alpha maps [w, inf) onto (0, 1] with unit density, leaving
        # the algebraic factor u^(-n/alpha) to QUADPACK's 'alg' weight.
        w, alpha = self.scale, self.shape
        inv = 1.0 / alpha

        def f(u):
            return math.exp(-a * w * u ** (-inv)) if u > 0.0 else 0.0

        return w**n * _quad(f, 0.0, 1.0, weight="alg", wvar=(-n * inv, 0.0))

    def _complement(self, a):
        w, inv = self.scale, 1.0 / self.shape

        def f(u):
            return -math.expm1(-a * w * u ** (-inv)) if u > 0.0 else 1.0

        return _quad(f, 0.0, 1.0, relative=True)

    def to_config(self):
        return {"kind": self.kind, "scale": self.scale, "shape": self.shape}


_KINDS = {
    "exponential": (Exponential, ("rate",)),
    "gamma": (Gamma, ("shape", "rate")),
    "hyperexponential": (HyperExponential, ("weights", "rates")),
    "lognormal": (LogNormal, ("location", "scale")),
    "pareto": (Pareto, ("scale", "shape")),
}


def from_config(cfg: Mapping[str, Any]) -> ServiceDistribution:
    """Build a law from a mapping like ``{"kind": "gamma", "shape": 2, "rate": 2}``."""
    if not isinstance(cfg, Mapping) or "kind" not in cfg:
        raise ConfigError(f"service must be a table with a 'kind' field, got {cfg!r}")
    kind = str(cfg["kind"]).lower().replace("-", "").replace("_", "")
    if kind not in _KINDS:
        raise ConfigError(f"unknown service kind {cfg['kind']!r}; expected one of {sorted(_KINDS)}")
    cls, fields = _KINDS[kind]
    extra = set(cfg) - set(fields) - {"kind"}
    missing = [f for f in fields if f not in cfg]
    if missing or extra:
        raise ConfigError(
            f"service kind {kind!r} needs fields {list(fields)}"
            + (f"; missing {missing}" if missing else "")
            + (f"; unexpected {sorted(extra)}" if extra else "")
        )
    try:
        if kind == "hyperexponential":
            return cls(tuple(cfg["weights"]), tuple(cfg["rates"]))
        return cls(*(cfg[f] for f in fields))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {kind} parameters: {exc}") from exc
