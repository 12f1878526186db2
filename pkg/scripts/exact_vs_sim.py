"""Exact two-source M/M/1 age against simulation, with the three approximations alongside.

    python scripts/exact_vs_sim.py --lambda2 0.6 --lambda1 0.05 0.1 0.2 0.3 0.35
"""
import argparse
import dataclasses

from fcfs_aoi.analytic import QueueConfig, aoi_approx
from fcfs_aoi.distributions import Exponential
from fcfs_aoi.sim import SimSpec, simulate
from fcfs_aoi.transient import aoi_exact_mm1


@dataclasses.dataclass
class Setup:
    lambda1: tuple[float, ...]
    lambda2: float = 0.6
    mu: float = 1.0
    horizon: int = 500_000
    replications: int = 20
    seed: int = 2024


def table(s: Setup):
    print(f"{'lambda1':>8} {'exact':>10} {'sim':>10} {'+-':>8} {'z':>6} {'approx1':>9} {'approx2':>9} {'approx3':>9}")
    for l1 in s.lambda1:
        cfg = QueueConfig(l1, s.lambda2, Exponential(s.mu))
        exact = aoi_exact_mm1(cfg)
        est = simulate(SimSpec(cfg, s.horizon, seed=s.seed, replications=s.replications)).sources[1].aoi
        z = (est.mean - exact) / est.std_error
        approx = " ".join(f"{aoi_approx(cfg, k):9.4f}" for k in (1, 2, 3))
        print(f"{l1:8.4f} {exact:10.5f} {est.mean:10.5f} {est.std_error:8.5f} {z:+6.2f} {approx}")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--lambda1", type=float, nargs="+", default=[0.05, 0.1, 0.2, 0.3, 0.35])
    ap.add_argument("--lambda2", type=float, default=0.6)
    ap.add_argument("--mu", type=float, default=1.0)
    ap.add_argument("--horizon", type=int, default=500_000)
    ap.add_argument("--replications", type=int, default=20)
    ap.add_argument("--seed", type=int, default=2024)
    a = ap.parse_args(argv)
    table(Setup(tuple(a.lambda1), a.lambda2, a.mu, a.horizon, a.replications, a.seed))


if __name__ == "__main__":
    main()
