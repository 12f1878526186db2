"""Exact average AoI of the two-source M/M/1 FCFS queue.

The only non-closed-form ingredient is

    Psi = int_0^inf int_0^inf (t + tau) exp(-mu (t + rho1 tau))
              * sum_m sum_j m P_{m|j}(tau) (lambda2 t)^j / j!  dtau dt

where ``P_{m|j}(tau)`` is the transient occupancy distribution of an M/M/1
queue (arrival rate lambda2, service rate mu) started with ``j`` customers.
That distribution is evaluated in Bessel / Marcum-Q form::

    P_{m|j}(tau) = e^{-(l+mu) tau} [ r^{(m-j)/2} I_{m-j}(x) + r^{(m-j-1)/2} I_{m+j+1}(x) ]
                   + r^m (1 - r) (1 - Q_{m+j+2}(sqrt(2 l tau), sqrt(2 mu tau)))

with ``r = l / mu`` and ``x = 2 sqrt(l mu) tau``, and checked against
uniformization of the truncated birth-death chain (:func:`ctmc_oracle`).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import integrate, special

from . import specfun
from .analytic import QueueConfig
from .distributions import Exponential
from .errors import NotExponential, QuadratureFailure, TruncationFailure, Unstable


@dataclass(frozen=True)
class TransientQuery:
    j: int
    m: int
    lambda2: float
    mu: float
    tau: float

    def __post_init__(self):
        if self.j < 0 or self.m < 0:
            raise ValueError("occupancies must be non-negative")
        if self.tau < 0:
            raise ValueError("tau must be non-negative")
        if not self.mu > 0 or self.lambda2 < 0:
            raise ValueError("need mu > 0 and lambda2 >= 0")
        if self.lambda2 >= self.mu:
            raise Unstable(f"rho2 = {self.lambda2 / self.mu:.6g} is not below 1")


# ---------------------------------------------------------------------------
# transient occupancy distribution


def _death_only(ms, js, mu, tau):
    # lambda2 = 0: the queue only drains, one Poisson(mu) departure at a time
    ms, js = np.broadcast_arrays(np.asarray(ms), np.asarray(js))
    k = js - ms
    mt = mu * tau
    out = np.zeros(ms.shape)
    inner = (k >= 0) & (ms > 0)
    out[inner] = np.exp(k[inner] * math.log(mt) - mt - special.gammaln(k[inner] + 1.0))
    empty = ms == 0
    # P(at least j departures) = P(Poisson(mu tau) >= j)
    out[empty] = np.where(js[empty] == 0, 1.0, special.pdtrc(js[empty] - 1, mt))
    return out


def transient_block(ms, js, lambda2: float, mu: float, tau: float, *, printed_form: bool = False):
    """``P_{m|j}(tau)`` on broadcast integer arrays ``ms`` and ``js``.

    ``printed_form`` swaps the first Bessel term for the ``r^{(m-1)/2} I_{m-1}``
    variant that appears in some printed sources; that variant disagrees with
    the birth-death chain unless ``j == 1`` and exists only for tests.
    """
    ms, js = np.broadcast_arrays(np.asarray(ms, dtype=np.int64), np.asarray(js, dtype=np.int64))
    if tau == 0.0:
        return (ms == js).astype(float)
    if lambda2 == 0.0:
        return _death_only(ms, js, mu, tau)
    log_r = math.log(lambda2 / mu)
    x = 2.0 * math.sqrt(lambda2 * mu) * tau
    shift = -(lambda2 + mu) * tau
    top = int(max(ms.max(), 0) + max(js.max(), 0) + 1)
    log_i = specfun.log_bessel_i(np.arange(top + 1), x)

    first_order = np.abs(ms - 1) if printed_form else np.abs(ms - js)
    first_pow = (ms - 1) / 2.0 if printed_form else (ms - js) / 2.0
    t1 = np.exp(first_pow * log_r + log_i[first_order] + shift)
    t2 = np.exp((ms - js - 1) / 2.0 * log_r + log_i[ms + js + 1] + shift)
    comp = specfun.marcum_q_complement_orders(top + 1, math.sqrt(2 * lambda2 * tau), math.sqrt(2 * mu * tau))
    r = lambda2 / mu
    t3 = np.exp(ms * log_r) * (1.0 - r) * comp[ms + js + 1]  # order m+j+2 sits at index m+j+1
    return t1 + t2 + t3


def transient_prob(q: TransientQuery, *, printed_form: bool = False) -> float:
    """Probability that the queue holds ``q.m`` customers ``q.tau`` after holding ``q.j``."""
    p = float(transient_block(q.m, q.j, q.lambda2, q.mu, q.tau, printed_form=printed_form))
    if not math.isfinite(p):
        raise TruncationFailure(f"transient probability not finite for {q}")
    return p


# ---------------------------------------------------------------------------
# uniformization oracle


def _poisson_upper(mean: float, tail: float) -> int:
    """Smallest n with P(Poisson(mean) > n) < tail."""
    if mean == 0.0:
        return 0
    n = int(mean + 5.0 * math.sqrt(mean) + 5)
    while special.pdtrc(n, mean) >= tail:
        n += max(1, int(math.sqrt(mean)))
    return n


def ctmc_distribution(j: int, lambda2: float, mu: float, tau: float, *, level: int | None = None, tail: float = 1e-13):
    """Occupancy distribution after ``tau`` by uniformization of the truncated chain.

    The chain is cut at ``level`` (default: large enough that reaching it needs
    more arrivals than a Poisson tail of mass ``tail`` allows, and at least 200).
    """
    if level is None:
        level = max(200, j + _poisson_upper(lambda2 * tau, tail) + 1)
    rate = lambda2 + mu
    p = np.zeros(level + 1)
    p[j] = 1.0
    if tau == 0.0:
        return p
    up, down = lambda2 / rate, mu / rate
    steps = _poisson_upper(rate * tau, tail)
    n = np.arange(steps + 1)
    weights = np.exp(n * math.log(rate * tau) - rate * tau - special.gammaln(n + 1.0))
    out = weights[0] * p
    for w in weights[1:]:
        nxt = np.empty_like(p)
        # stay: boundary 0 cannot serve, boundary `level` cannot admit
        stay = np.full_like(p, 1.0 - up - down)
        stay[0] += down
        stay[-1] += up
        nxt[:] = stay * p
        nxt[1:] += up * p[:-1]
        nxt[:-1] += down * p[1:]
        p = nxt
        out += w * p
    return out


def ctmc_oracle(q: TransientQuery) -> float:
    dist = ctmc_distribution(q.j, q.lambda2, q.mu, q.tau)
    return float(dist[q.m]) if q.m < len(dist) else 0.0


# ---------------------------------------------------------------------------
# Psi


@dataclass(frozen=True)
class Truncation:
    """Series and domain cut-offs for Psi; ``None`` means derive from ``abs_tol``."""

    m_max: int | None = None
    j_max: int | None = None
    t_max: float | None = None
    tau_max: float | None = None
    abs_tol: float = 1e-7


@dataclass(frozen=True)
class PsiParams:
    mu: float
    rho1: float
    lambda2: float
    truncation: Truncation = field(default_factory=Truncation)

    def __post_init__(self):
        if not (self.mu > 0 and self.rho1 > 0 and self.lambda2 >= 0):
            raise ValueError("need mu > 0, rho1 > 0, lambda2 >= 0")
        if self.rho1 + self.lambda2 / self.mu >= 1.0:
            raise Unstable(f"rho = {self.rho1 + self.lambda2 / self.mu:.6g} is not below 1")
        if self.truncation.abs_tol <= 0:
            raise ValueError("abs_tol must be positive")

    @property
    def lambda1(self) -> float:
        return self.rho1 * self.mu

    @property
    def rho2(self) -> float:
        return self.lambda2 / self.mu


def _tail_poly_exp(coeffs, rate: float, lo: float) -> float:
    """int_lo^inf sum_n coeffs[n] s^n exp(-rate s) ds."""
    total = 0.0
    for n, c in enumerate(coeffs):
        # int_lo^inf s^n e^{-rs} ds = Gamma(n+1, r lo) / r^{n+1}
        total += c * special.gammaincc(n + 1, rate * lo) * math.factorial(n) / rate ** (n + 1)
    return total


def _grow(fn, start: float, target: float) -> float:
    x = start
    while fn(x) >= target:
        x *= 1.25
        if x > 1e9:
            raise TruncationFailure("could not bound integration domain")
    return x


@dataclass(frozen=True)
class _Plan:
    t_max: float
    tau_max: float
    j_max: int
    m_tail: float  # Poisson tail allowed when choosing m_max per tau
    m_max: int | None


def _plan(p: PsiParams) -> _Plan:
    tr = p.truncation
    mu, l1, l2 = p.mu, p.lambda1, p.lambda2
    c = mu - l2  # t-decay rate after absorbing e^{-lambda2 t}
    budget = tr.abs_tol / 10.0
    # E_j(tau) <= j + lambda2 tau, so the summed bracket is <= lambda2 (t + tau).
    # t-tail:  int_T^inf int_0^inf lambda2 (t+tau)^2 e^{-c t - l1 tau} dtau dt
    t_max = tr.t_max or _grow(
        lambda T: l2 * _tail_poly_exp([2 / l1**3, 2 / l1**2, 1 / l1], c, T), 10.0 / c, budget
    )
    tau_max = tr.tau_max or _grow(
        lambda T: l2 * _tail_poly_exp([2 / c**3, 2 / c**2, 1 / c], l1, T), 10.0 / l1, budget
    )
    kernel = 1.0 / (c * c * l1) + 1.0 / (c * l1 * l1)  # int int (t+tau) e^{-ct - l1 tau}
    scale = kernel * (1.0 + l2 * (t_max + tau_max))
    if tr.j_max is not None:
        j_max = tr.j_max
    else:
        j_max = _poisson_upper(l2 * t_max, budget / scale)
    return _Plan(t_max, tau_max, j_max, budget / scale, tr.m_max)


def _m_cap(plan: _Plan, l2: float, tau: float) -> int:
    if plan.m_max is not None:
        return plan.m_max
    # occupancy <= j + arrivals during tau
    return plan.j_max + _poisson_upper(l2 * tau, plan.m_tail) + 1


def mean_occupancy(lambda2: float, mu: float, tau: float, j_max: int, m_max: int) -> np.ndarray:
    """``E_j(tau) = sum_m m P_{m|j}(tau)`` for ``j = 0..j_max``."""
    ms = np.arange(m_max + 1)[:, None]
    js = np.arange(j_max + 1)[None, :]
    block = transient_block(ms, js, lambda2, mu, tau)
    return (ms * block).sum(axis=0)


def _quad(f, lo, hi, epsabs, what):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, err, *_ = integrate.quad(f, lo, hi, epsabs=epsabs, epsrel=1e-13, limit=500, full_output=1)
    if not math.isfinite(val) or err > 2 * epsabs:
        raise QuadratureFailure(f"{what}: error estimate {err:.3g} exceeds {epsabs:.3g}")
    return val


def psi(p: PsiParams, *, method: str = "iterated") -> float:
    """The transient double integral for the tagged source.

    ``method="iterated"`` integrates both variables by adaptive quadrature.
    ``method="reduced"`` does the t-integral in closed form
    (``int (t+tau) e^{-mu t} (l t)^j / j! dt = r^j ((j+1)/mu^2 + tau/mu)``)
    and is used as an independent cross-check.
    """
    if p.lambda2 == 0.0:
        return 0.0
    if method not in ("iterated", "reduced"):
        raise ValueError(f"unknown method {method!r}")
    mu, l1, l2 = p.mu, p.lambda1, p.lambda2
    plan = _plan(p)
    tol = p.truncation.abs_tol
    js = np.arange(plan.j_max + 1)
    c = mu - l2
    log_fact = special.gammaln(js + 1.0)
    inner_tol = tol * l1 / 4.0

    def occupancy(tau):
        return mean_occupancy(l2, mu, tau, plan.j_max, _m_cap(plan, l2, tau))

    if method == "reduced":
        t_weight = (p.rho2 ** js) * ((js + 1) / mu**2)
        tau_weight = (p.rho2 ** js) / mu

        def outer(tau):
            e = occupancy(tau)
            return math.exp(-l1 * tau) * float(np.dot(t_weight + tau * tau_weight, e))

    else:

        def outer(tau):
            e = occupancy(tau)

            def inner(t):
                if t == 0.0:
                    return tau * e[0]
                lt = l2 * t
                pois = np.exp(js * math.log(lt) - lt - log_fact)
                return (t + tau) * math.exp(-c * t) * float(np.dot(pois, e))

            return math.exp(-l1 * tau) * _quad(inner, 0.0, plan.t_max, inner_tol, "psi inner integral")

    return _quad(outer, 0.0, plan.tau_max, tol / 4.0, "psi outer integral")


def psi_for(cfg: QueueConfig, truncation: Truncation | None = None, **kw) -> float:
    params = PsiParams(cfg.mu, cfg.rho1, cfg.lambda2, truncation or Truncation())
    return psi(params, **kw)


def _require_mm1(cfg: QueueConfig) -> None:
    if not isinstance(cfg.service, Exponential):
        raise NotExponential(f"exact formula needs exponential service, got {type(cfg.service).__name__}")
    cfg.require_stable()


def long_cross_moment_exact(cfg: QueueConfig, truncation: Truncation | None = None, **kw) -> float:
    """``E[X W ; long event]`` for M/M/1, i.e. ``lambda1 (1 - rho) Psi``."""
    _require_mm1(cfg)
    return cfg.lambda1 * (1.0 - cfg.rho) * psi_for(cfg, truncation, **kw)


def aoi_exact_mm1(cfg: QueueConfig, truncation: Truncation | None = None, **kw) -> float:
    """Exact average AoI of source 1 in the two-source M/M/1 FCFS queue."""
    _require_mm1(cfg)
    mu, r1, r2, r = cfg.mu, cfg.rho1, cfg.rho2, cfg.rho
    closed = (
        1.0 / r1
        + r / (1.0 - r)
        + (2.0 * r2 - 1.0) * (r - 1.0) / (1.0 - r2) ** 2
        + 2.0 * r1 * r2 * (r - 1.0) / (1.0 - r2) ** 3
    ) / mu
    return cfg.lambda1**2 * (1.0 - r) * psi_for(cfg, truncation, **kw) + closed


def with_tolerance(p: PsiParams, abs_tol: float) -> PsiParams:
    return replace(p, truncation=replace(p.truncation, abs_tol=abs_tol))
