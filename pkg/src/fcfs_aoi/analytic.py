"""Steady-state M/G/1 quantities and the average-AoI formulas built on them.

Source 1 is the tagged source; all other sources are folded into source 2.
Each AoI formula is assembled the same way::

    AoI = 1/lambda1 + 1/mu + lambda1 * (brief + long)

where ``brief`` is the exact contribution of the event "packet i arrives
before packet i-1 leaves" to ``E[X W]`` and ``long`` is the contribution of
the complementary event, which is exact only for exponential service and is
approximated three different ways otherwise.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, NamedTuple

from .distributions import ServiceDistribution
from .errors import Unstable


@dataclass(frozen=True)
class QueueConfig:
    """Two-source FCFS queue: tagged rate, aggregate interfering rate, service law."""

    lambda1: float
    lambda2: float
    service: ServiceDistribution

    def __post_init__(self):
        if not self.lambda1 > 0:
            raise ValueError(f"lambda1 must be positive, got {self.lambda1!r}")
        if not self.lambda2 >= 0:
            raise ValueError(f"lambda2 must be non-negative, got {self.lambda2!r}")

    @classmethod
    def from_rates(cls, rates: Iterable[float], service: ServiceDistribution, tagged: int = 0):
        """Fold a C-source system into (tagged, everyone else)."""
        rates = [float(r) for r in rates]
        return cls(rates[tagged], sum(rates) - rates[tagged], service)

    @property
    def mu(self) -> float:
        return self.service.mu

    @property
    def lam(self) -> float:
        return self.lambda1 + self.lambda2

    @property
    def rho1(self) -> float:
        return self.lambda1 * self.service.mean()

    @property
    def rho2(self) -> float:
        return self.lambda2 * self.service.mean()

    @property
    def rho(self) -> float:
        return self.lam * self.service.mean()

    @property
    def stable(self) -> bool:
        return self.rho < 1.0

    def require_stable(self) -> None:
        if not self.stable:
            raise Unstable(f"total load rho = {self.rho:.6g} is not below 1")


class LaplaceT(NamedTuple):
    value: float
    d1: float
    d2: float


def mean_wait(cfg: QueueConfig) -> float:
    """Pollaczek-Khinchine mean waiting time ``lambda E[S^2] / (2 (1 - rho))``."""
    cfg.require_stable()
    return cfg.lam * cfg.service.second_moment() / (2.0 * (1.0 - cfg.rho))


def mean_delay(cfg: QueueConfig) -> float:
    """Mean system time, waiting plus one service."""
    return mean_wait(cfg) + cfg.service.mean()


def laplace_system_time(cfg: QueueConfig, a: float) -> LaplaceT:
    """Laplace transform of the M/G/1 FCFS system time and its first two derivatives at ``a``."""
    cfg.require_stable()
    if a == 0.0:
        return LaplaceT(1.0, -mean_delay(cfg), float("nan"))
    if not a > 0:
        raise ValueError(f"evaluation point must be positive, got {a!r}")
    s = cfg.service
    ls, ls1, ls2 = s.laplace(a), s.laplace_d1(a), s.laplace_d2(a)
    lam, c = cfg.lam, 1.0 - cfg.rho
    # L_T = N / D
    num = c * a * ls
    num1 = c * (ls + a * ls1)
    num2 = c * (2.0 * ls1 + a * ls2)
    den = a - lam * s.laplace_complement(a)  # O(a); 1 - ls would lose digits
    den1 = 1.0 + lam * ls1
    den2 = lam * ls2
    cross = num1 * den - num * den1
    value = num / den
    d1 = cross / den**2
    d2 = (num2 * den - num * den2) / den**2 - 2.0 * den1 * cross / den**3
    return LaplaceT(value, d1, d2)


def p_long(cfg: QueueConfig) -> float:
    """P(next tagged packet arrives after the previous one departs) = L_T(lambda1)."""
    return laplace_system_time(cfg, cfg.lambda1).value


def p_brief(cfg: QueueConfig) -> float:
    return 1.0 - p_long(cfg)


def p_brief_closed_form(cfg: QueueConfig) -> float:
    """The same probability written directly in terms of ``L_S(lambda1)``.

    Degenerates (0/0) when ``lambda * L_S(lambda1) == lambda2``; kept as a
    cross-check for :func:`p_brief`.
    """
    cfg.require_stable()
    l1, l2, lam, rho = cfg.lambda1, cfg.lambda2, cfg.lam, cfg.rho
    ls = cfg.service.laplace(l1)
    return (ls * (lam + (rho - 1.0) * l1) - l2) / (lam * ls - l2)


def brief_cross_moment(cfg: QueueConfig) -> float:
    """``E[X W ; brief event]``: exact for any service law."""
    l1, rho2, mu = cfg.lambda1, cfg.rho2, cfg.mu
    lt, lt1, lt2 = laplace_system_time(cfg, l1)
    ew = mean_wait(cfg)
    residual = (ew + 1.0 / mu) / l1 - lt1 / l1 + 2.0 * lt / l1**2 - 2.0 / l1**2
    queued = rho2 * (2.0 / l1**2 - lt2 + 2.0 * lt1 / l1 - 2.0 * lt / l1**2)
    return residual + queued


def _assemble(cfg: QueueConfig, long_part: float) -> float:
    l1 = cfg.lambda1
    return 1.0 / l1 + 1.0 / cfg.mu + l1 * (brief_cross_moment(cfg) + long_part)


def long_cross_moment_approx(cfg: QueueConfig, which: int) -> float:
    """Approximate ``E[X W ; long event]`` under approximation 1, 2 or 3."""
    l1, l2, rho2, mu = cfg.lambda1, cfg.lambda2, cfg.rho2, cfg.mu
    lt, lt1, lt2 = laplace_system_time(cfg, l1)
    if which == 1:
        # residual service ignored, queue ~ arrivals during previous system time
        return rho2 * (lt2 - lt1 / l1)
    if which == 2:
        # as 1, plus one full mean service for the packet in service
        return rho2 * lt2 - (rho2 / l1 + 1.0 / mu) * lt1 + lt / (mu * l1)
    if which == 3:
        # stationary source-2-only M/G/1 queue length and residual service
        k = l2 * cfg.service.second_moment() / (2.0 * (1.0 - rho2))
        return k * (lt / l1 - lt1)
    raise ValueError(f"approximation index must be 1, 2 or 3, got {which!r}")


def aoi_approx(cfg: QueueConfig, which: int) -> float:
    cfg.require_stable()
    return _assemble(cfg, long_cross_moment_approx(cfg, which))


def aoi_approx1(cfg: QueueConfig) -> float:
    return aoi_approx(cfg, 1)


def aoi_approx2(cfg: QueueConfig) -> float:
    return aoi_approx(cfg, 2)


def aoi_approx3(cfg: QueueConfig) -> float:
    return aoi_approx(cfg, 3)


def aoi_from_long_cross_moment(cfg: QueueConfig, long_part: float) -> float:
    """Average AoI of source 1 given an externally computed long-event term."""
    cfg.require_stable()
    return _assemble(cfg, long_part)


def aoi_single_source_mg1(lam: float, service: ServiceDistribution) -> float:
    """Exact average AoI of a single-source M/G/1 FCFS queue."""
    cfg = QueueConfig(lam, 0.0, service)
    cfg.require_stable()
    rho = cfg.rho
    return (
        service.mean()
        + lam * service.second_moment() / (2.0 * (1.0 - rho))
        + (1.0 - rho) / (lam * service.laplace(lam))
    )
