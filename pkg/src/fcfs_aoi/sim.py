"""Simulation of the single-server FCFS queue fed by independent Poisson sources.

Departures follow from the Lindley recursion in closed (cumulative-max) form,
so a replication is a handful of vectorized numpy passes.  Average AoI is the
exact area under the sawtooth between consecutive deliveries divided by the
window length; nothing is time-sampled.
"""
from __future__ import annotations

import csv
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .analytic import QueueConfig
from .distributions import ServiceDistribution
from .errors import NoDeliveries

TRACE_COLUMNS = ("source", "gen_time", "arrive_service", "depart", "wait")


@dataclass(frozen=True)
class SimSpec:
    cfg: QueueConfig
    horizon: int = 500_000  # expected number of arrivals (all sources) per replication
    warmup: float = 0.1
    seed: int = 0
    replications: int = 20
    workers: int = 1
    trace_path: str | None = None  # per-packet CSV of replication 0

    def __post_init__(self):
        if not 0.0 <= self.warmup <= 0.5:
            raise ValueError("warmup must lie in [0, 0.5]")
        if self.replications < 1 or self.horizon < 1:
            raise ValueError("replications and horizon must be positive")


@dataclass(frozen=True)
class Estimate:
    """Mean of per-replication values with its standard error."""

    mean: float
    std_error: float
    per_replication: tuple[float, ...]
    n_effective: int = 0

    @classmethod
    def of(cls, values: Sequence[float], n_effective: int = 0, batches: Sequence[float] | None = None):
        v = np.asarray(values, dtype=float)
        if len(v) > 1:
            se = float(v.std(ddof=1) / math.sqrt(len(v)))
        elif batches is not None and len(batches) > 1:
            b = np.asarray(batches, dtype=float)
            se = float(b.std(ddof=1) / math.sqrt(len(b)))
        else:
            se = float("nan")
        return cls(float(v.mean()), se, tuple(float(x) for x in v), n_effective)


AoiEstimate = Estimate


@dataclass(frozen=True)
class SourceStats:
    aoi: Estimate
    mean_delay: Estimate
    mean_wait: Estimate


@dataclass(frozen=True)
class SimResult:
    sources: dict[int, SourceStats]
    mean_wait: Estimate  # all packets
    mean_in_system: Estimate  # time average over the measurement window
    throughput: Estimate  # arrivals per unit time, all sources


@dataclass(frozen=True)
class ConditionalMoments:
    long_cross: Estimate  # E[W X ; long]  = E[W X | long] P(long)
    brief_cross: Estimate  # E[W X ; brief]
    p_brief: Estimate
    p_long: Estimate


# ---------------------------------------------------------------------------
# one replication


@dataclass
class Trace:
    """Merged per-packet record of one replication, in arrival order."""

    arrival: np.ndarray
    source: np.ndarray
    service: np.ndarray
    start: np.ndarray = field(init=False)
    depart: np.ndarray = field(init=False)

    def __post_init__(self):
        self.start, self.depart = fcfs_departures(self.arrival, self.service)

    @property
    def wait(self) -> np.ndarray:
        return self.start - self.arrival


def fcfs_departures(arrival: np.ndarray, service: np.ndarray):
    """Service start and departure times of a single FCFS server.

    ``d_n = max(a_n, d_{n-1}) + s_n`` unrolls to
    ``d_n = C_n + max_{k<=n} (a_k - C_{k-1})`` with ``C`` the cumulative service.
    """
    arrival = np.asarray(arrival, dtype=float)
    service = np.asarray(service, dtype=float)
    if np.any(np.diff(arrival) < 0):
        raise ValueError("arrivals must be sorted")
    cum = np.cumsum(service)
    depart = cum + np.maximum.accumulate(arrival - (cum - service))
    start = depart - service
    # Rounding in the cumulative form can leave start a few ulps before arrival.
    start = np.maximum(start, arrival)
    depart = start + service
    if np.any(np.diff(depart) < 0):
        raise AssertionError("FCFS violated: departures out of arrival order")
    return start, depart


def _poisson_times(rng: np.random.Generator, rate: float, t_end: float) -> np.ndarray:
    if rate == 0.0:
        return np.empty(0)
    chunk = int(rate * t_end + 10 * math.sqrt(rate * t_end) + 16)
    times = np.cumsum(rng.exponential(1.0 / rate, chunk))
    while times[-1] < t_end:
        more = times[-1] + np.cumsum(rng.exponential(1.0 / rate, chunk))
        times = np.concatenate([times, more])
    return times[times < t_end]


def generate_trace(rates: Sequence[float], service: ServiceDistribution, t_end: float, seed_seq: np.random.SeedSequence) -> Trace:
    """Arrivals on ``[0, t_end)`` for each source, merged in time order.

    Each source owns two child streams (arrivals, service times), so changing
    one source's rate leaves the other source's randomness untouched.
    """
    children = seed_seq.spawn(2 * len(rates))
    times, srcs, svc, seqs = [], [], [], []
    for c, rate in enumerate(rates):
        arr_rng = np.random.default_rng(children[2 * c])
        svc_rng = np.random.default_rng(children[2 * c + 1])
        t = _poisson_times(arr_rng, rate, t_end)
        times.append(t)
        srcs.append(np.full(len(t), c + 1))
        svc.append(np.asarray(service.sample(svc_rng, len(t)), dtype=float))
        seqs.append(np.arange(len(t)))
    t = np.concatenate(times)
    s = np.concatenate(srcs)
    order = np.lexsort((np.concatenate(seqs), s, t))  # time, then source, then sequence
    return Trace(t[order], s[order], np.concatenate(svc)[order])


def aoi_window(gen: np.ndarray, depart: np.ndarray, t0: float):
    """Time-average AoI over ``[first delivery >= t0, last delivery]``.

    Returns ``(average, n_trapezoids, trapezoid_areas, window_length)``.
    Between deliveries i-1 and i the age grows from ``d_{i-1} - g_{i-1}`` to
    ``d_i - g_{i-1}``; the area is the difference of two isosceles triangles.
    """
    keep = depart >= t0
    g, d = gen[keep], depart[keep]
    if len(d) < 2:
        raise NoDeliveries("fewer than two deliveries in the measurement window")
    prev_g = g[:-1]
    areas = 0.5 * ((d[1:] - prev_g) ** 2 - (d[:-1] - prev_g) ** 2)
    span = d[-1] - d[0]
    return float(areas.sum() / span), len(areas), areas, span


def _time_in_window(a: np.ndarray, d: np.ndarray, t0: float, t1: float) -> float:
    return float(np.clip(np.minimum(d, t1) - np.maximum(a, t0), 0.0, None).sum())


def _batch_aoi(gen, depart, t0, batches=20):
    keep = depart >= t0
    g, d = gen[keep], depart[keep]
    out = []
    for part in np.array_split(np.arange(len(d)), batches):
        if len(part) >= 2:
            out.append(aoi_window(g[part], d[part], -np.inf)[0])
    return out


def _replicate(args):
    spec, rep_seq, write_trace = args
    cfg = spec.cfg
    rates = (cfg.lambda1, cfg.lambda2)
    t_end = spec.horizon / cfg.lam
    t0 = spec.warmup * t_end
    tr = generate_trace(rates, cfg.service, t_end, rep_seq)
    if write_trace and spec.trace_path:
        write_trace_csv(spec.trace_path, tr)
    wait = tr.wait
    post = tr.arrival >= t0
    out = {"sources": {}}
    for c in (1, 2):
        if rates[c - 1] == 0.0:
            continue
        sel = tr.source == c
        avg, n, _, _ = aoi_window(tr.arrival[sel], tr.depart[sel], t0)
        ps = sel & post
        out["sources"][c] = {
            "aoi": avg,
            "n": n,
            "batches": _batch_aoi(tr.arrival[sel], tr.depart[sel], t0),
            "wait": float(wait[ps].mean()),
            "delay": float((tr.depart[ps] - tr.arrival[ps]).mean()),
        }
    out["wait"] = float(wait[post].mean())
    out["in_system"] = _time_in_window(tr.arrival, tr.depart, t0, t_end) / (t_end - t0)
    out["throughput"] = float(np.count_nonzero(post & (tr.arrival < t_end)) / (t_end - t0))
    # conditional moments for the tagged source
    sel = np.flatnonzero(tr.source == 1)
    a1, d1, w1 = tr.arrival[sel], tr.depart[sel], wait[sel]
    k = np.flatnonzero(a1[1:] >= t0) + 1  # packets i with a predecessor, arriving post-warmup
    x = a1[k] - a1[k - 1]
    t_prev = d1[k - 1] - a1[k - 1]
    wx = w1[k] * x
    long = t_prev < x
    out["long_cross"] = float(np.where(long, wx, 0.0).mean())
    out["brief_cross"] = float(np.where(long, 0.0, wx).mean())
    out["p_long"] = float(long.mean())
    return out


def _run(spec: SimSpec):
    cfg = spec.cfg
    if not cfg.stable:
        warnings.warn(f"simulating an unstable queue (rho = {cfg.rho:.4g}); estimates will not converge", RuntimeWarning)
    seqs = np.random.SeedSequence(spec.seed).spawn(spec.replications)
    jobs = [(spec, s, i == 0) for i, s in enumerate(seqs)]
    if spec.workers > 1:
        with ProcessPoolExecutor(spec.workers) as pool:
            return list(pool.map(_replicate, jobs))
    return [_replicate(j) for j in jobs]


def _summarize(reps) -> SimResult:
    sources = {}
    for c in reps[0]["sources"]:
        rs = [r["sources"][c] for r in reps]
        sources[c] = SourceStats(
            aoi=Estimate.of([r["aoi"] for r in rs], sum(r["n"] for r in rs), rs[0]["batches"]),
            mean_delay=Estimate.of([r["delay"] for r in rs]),
            mean_wait=Estimate.of([r["wait"] for r in rs]),
        )
    return SimResult(
        sources=sources,
        mean_wait=Estimate.of([r["wait"] for r in reps]),
        mean_in_system=Estimate.of([r["in_system"] for r in reps]),
        throughput=Estimate.of([r["throughput"] for r in reps]),
    )


def simulate(spec: SimSpec) -> SimResult:
    """Per-source AoI, delay and waiting-time estimates over independent replications."""
    return _summarize(_run(spec))


def simulate_conditional_moments(spec: SimSpec) -> ConditionalMoments:
    """Empirical split of ``E[X W]`` for source 1 into brief and long events."""
    return _moments(_run(spec))


def simulate_with_moments(spec: SimSpec) -> tuple[SimResult, ConditionalMoments]:
    """Both summaries from one set of replications."""
    reps = _run(spec)
    return _summarize(reps), _moments(reps)


def _moments(reps) -> ConditionalMoments:
    p_long = [r["p_long"] for r in reps]
    return ConditionalMoments(
        long_cross=Estimate.of([r["long_cross"] for r in reps]),
        brief_cross=Estimate.of([r["brief_cross"] for r in reps]),
        p_brief=Estimate.of([1.0 - p for p in p_long]),
        p_long=Estimate.of(p_long),
    )


def write_trace_csv(path: str | Path, tr: Trace) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_COLUMNS)
        for row in zip(tr.source, tr.arrival, tr.start, tr.depart, tr.wait):
            w.writerow([int(row[0])] + [repr(float(v)) for v in row[1:]])
