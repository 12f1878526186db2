import csv
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fcfs_aoi.analytic import QueueConfig, mean_wait, p_long
from fcfs_aoi.distributions import Exponential, Gamma
from fcfs_aoi.errors import NoDeliveries
from fcfs_aoi.sim import (
    TRACE_COLUMNS,
    SimSpec,
    Trace,
    aoi_window,
    fcfs_departures,
    simulate,
    simulate_conditional_moments,
)
from oracles import lindley_loop, sawtooth_area


def test_hand_trace_single_source():
    # arrivals at 1 and 2, service 0.5 each: deliveries at 1.5 and 2.5;
    # the age climbs from 0.5 to 1.5 over (1.5, 2.5), area 1, average 1
    start, depart = fcfs_departures(np.array([1.0, 2.0]), np.array([0.5, 0.5]))
    assert depart.tolist() == [1.5, 2.5]
    avg, n, areas, span = aoi_window(np.array([1.0, 2.0]), depart, 0.0)
    assert (avg, n, span) == (1.0, 1, 1.0)
    assert areas.tolist() == [1.0]


def test_hand_trace_with_queueing():
    # three packets at 0, 0.2, 0.4 with unit service queue behind each other
    start, depart = fcfs_departures(np.array([0.0, 0.2, 0.4]), np.array([1.0, 1.0, 1.0]))
    assert depart.tolist() == [1.0, 2.0, 3.0]
    assert (start - np.array([0.0, 0.2, 0.4])).tolist() == pytest.approx([0.0, 0.8, 1.6])
    # ages: 1 -> 2 over (1, 2), then 1.8 -> 2.8 over (2, 3)
    avg, n, _, _ = aoi_window(np.array([0.0, 0.2, 0.4]), depart, 0.0)
    assert avg == pytest.approx((1.5 + 2.3) / 2)


def test_hand_trace_two_sources():
    tr = Trace(np.array([0.0, 0.5, 1.0, 4.0]), np.array([1, 2, 1, 2]), np.array([1.0, 1.0, 1.0, 1.0]))
    assert tr.depart.tolist() == [1.0, 2.0, 3.0, 5.0]
    assert tr.wait.tolist() == [0.0, 0.5, 1.0, 0.0]
    sel = tr.source == 1
    # source 1 deliveries at 1 and 3 carrying generation times 0 and 1: ages 1 -> 3
    assert aoi_window(tr.arrival[sel], tr.depart[sel], 0.0)[0] == pytest.approx(2.0)


arrays = st.integers(1, 60).flatmap(
    lambda n: st.tuples(
        st.lists(st.floats(min_value=0.0, max_value=3.0), min_size=n, max_size=n),
        st.lists(st.floats(min_value=1e-3, max_value=3.0), min_size=n, max_size=n),
    )
)


@given(arrays)
def test_vectorized_departures_match_loop(data):
    gaps, service = map(np.array, data)
    arrival = np.cumsum(gaps)
    start, depart = fcfs_departures(arrival, service)
    ref = lindley_loop(arrival, service)
    assert np.allclose(depart, ref, rtol=1e-12, atol=1e-12)
    assert np.all(np.diff(depart) >= 0)  # FCFS order
    assert np.all(start >= arrival)
    assert np.all(start[1:] >= depart[:-1] - 1e-12)


@given(arrays)
def test_window_average_matches_piecewise_area(data):
    gaps, service = map(np.array, data)
    if len(gaps) < 2:
        return
    arrival = np.cumsum(gaps)
    _, depart = fcfs_departures(arrival, service)
    if depart[-1] == depart[0]:
        return
    avg, n, areas, span = aoi_window(arrival, depart, -np.inf)
    assert n == len(arrival) - 1
    assert areas.sum() == pytest.approx(sawtooth_area(arrival, depart), rel=1e-12, abs=1e-12)
    assert avg * span == pytest.approx(areas.sum(), rel=1e-12, abs=1e-12)
    # age just after each delivery equals that packet's system time, and it is positive
    assert np.all(depart - arrival > 0)


def test_unsorted_arrivals_rejected():
    with pytest.raises(ValueError):
        fcfs_departures(np.array([1.0, 0.5]), np.array([1.0, 1.0]))


def test_determinism():
    spec = SimSpec(QueueConfig(0.3, 0.4, Gamma(2.0, 2.0)), horizon=20_000, seed=11, replications=4)
    a, b = simulate(spec), simulate(spec)
    assert a == b
    c = simulate(SimSpec(spec.cfg, horizon=20_000, seed=12, replications=4))
    assert c.sources[1].aoi.per_replication != a.sources[1].aoi.per_replication


def test_parallel_replications_match_serial():
    base = SimSpec(QueueConfig(0.3, 0.4, Exponential(1.0)), horizon=20_000, seed=5, replications=3)
    par = SimSpec(base.cfg, horizon=20_000, seed=5, replications=3, workers=2)
    assert simulate(base) == simulate(par)


def test_streams_are_per_source():
    # changing source 2's rate leaves source 1's arrivals untouched
    from fcfs_aoi.sim import generate_trace

    seq = np.random.SeedSequence(3)
    t1 = generate_trace((0.3, 0.2), Exponential(1.0), 1000.0, seq)
    t2 = generate_trace((0.3, 0.5), Exponential(1.0), 1000.0, np.random.SeedSequence(3))
    assert np.array_equal(t1.arrival[t1.source == 1], t2.arrival[t2.source == 1])
    assert np.array_equal(t1.service[t1.source == 1], t2.service[t2.source == 1])


def test_single_source_mm1():
    res = simulate(SimSpec(QueueConfig(0.5, 0.0, Exponential(1.0)), horizon=500_000, seed=2))
    est = res.sources[1].aoi
    assert 2 not in res.sources
    assert abs(est.mean - 3.5) < 3 * est.std_error
    assert est.n_effective > 20 * 0.9 * 500_000 * 0.85


def test_symmetric_sources_agree():
    res = simulate(SimSpec(QueueConfig(0.3, 0.3, Exponential(1.0)), horizon=200_000, seed=4))
    a, b = res.sources[1].aoi, res.sources[2].aoi
    assert abs(a.mean - b.mean) < 3 * math.hypot(a.std_error, b.std_error)


def test_littles_law_and_waiting_time():
    cfg = QueueConfig(0.3, 0.4, Gamma(2.0, 2.0))
    res = simulate(SimSpec(cfg, horizon=200_000, seed=9))
    n = res.mean_in_system
    lam_t = cfg.lam * (res.mean_wait.mean + cfg.service.mean())
    assert abs(n.mean - lam_t) < 3 * math.hypot(n.std_error, cfg.lam * res.mean_wait.std_error)
    assert abs(res.mean_wait.mean - mean_wait(cfg)) < 3 * res.mean_wait.std_error
    assert abs(res.throughput.mean - cfg.lam) < 3 * res.throughput.std_error


def test_conditional_moments_brief_probability():
    cfg = QueueConfig(0.3, 0.4, Exponential(1.0))
    cm = simulate_conditional_moments(SimSpec(cfg, horizon=200_000, seed=21))
    assert abs(cm.p_long.mean - p_long(cfg)) < 3 * cm.p_long.std_error
    assert cm.p_brief.mean + cm.p_long.mean == pytest.approx(1.0)
    assert cm.long_cross.mean > 0 and cm.brief_cross.mean > 0


def test_rare_tagged_source_is_almost_always_long():
    cfg = QueueConfig(0.002, 0.5, Exponential(1.0))
    cm = simulate_conditional_moments(SimSpec(cfg, horizon=200_000, seed=1, replications=5))
    assert cm.p_long.mean > 0.99


def test_no_deliveries():
    cfg = QueueConfig(1e-7, 0.5, Exponential(1.0))
    with pytest.raises(NoDeliveries):
        simulate(SimSpec(cfg, horizon=1000, seed=1, replications=2))


def test_unstable_warns():
    cfg = QueueConfig(0.6, 0.6, Exponential(1.0))
    with pytest.warns(RuntimeWarning, match="unstable"):
        simulate(SimSpec(cfg, horizon=2000, seed=1, replications=2))


def test_single_replication_uses_batch_error():
    res = simulate(SimSpec(QueueConfig(0.3, 0.3, Exponential(1.0)), horizon=50_000, seed=1, replications=1))
    assert res.sources[1].aoi.std_error > 0


def test_trace_file(tmp_path):
    path = tmp_path / "trace.csv"
    simulate(SimSpec(QueueConfig(0.3, 0.3, Exponential(1.0)), horizon=500, seed=1, replications=2, trace_path=str(path)))
    with open(path) as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == TRACE_COLUMNS
    body = np.array(rows[1:], dtype=float)
    src, gen, start, dep, wait = body.T
    assert set(src) <= {1.0, 2.0}
    assert np.allclose(start - gen, wait)
    assert np.all(np.diff(dep) >= 0)


def test_spec_validation():
    cfg = QueueConfig(0.3, 0.3, Exponential(1.0))
    with pytest.raises(ValueError):
        SimSpec(cfg, warmup=0.6)
    with pytest.raises(ValueError):
        SimSpec(cfg, replications=0)
