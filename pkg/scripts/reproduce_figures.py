"""Run every bundled preset sweep and print the error report for each.

    python scripts/reproduce_figures.py --out results/ [--presets fig4 fig9] [--workers 4]

CSV files land in --out, one per preset. Exits non-zero if any preset
misses the tolerance recorded in its [compare] table.
"""
import argparse
import dataclasses
import sys
import time
from pathlib import Path

from fcfs_aoi import cli

PRESETS = ("fig4", "fig5", "fig6", "fig7", "fig8", "fig9")


@dataclasses.dataclass
class RunConfig:
    out: Path
    presets: tuple[str, ...] = PRESETS
    workers: int = 1
    seed: int | None = None


def run_preset(name: str, rc: RunConfig) -> bool:
    doc = cli.load_toml(cli.preset_path(name))
    spec = cli.sweep_from(doc)
    spec = dataclasses.replace(spec, workers=rc.workers)
    if rc.seed is not None:
        spec = dataclasses.replace(spec, sim=dataclasses.replace(spec.sim, seed=rc.seed))
    t0 = time.perf_counter()
    rows = cli.run_sweep(spec)
    path = rc.out / f"{name}.csv"
    cli.write_csv(rows, path)
    print(f"{name}: {len(rows)} rows in {time.perf_counter() - t0:.1f} s -> {path}")

    cmp = doc.get("compare", {})
    report = cli.compare_report([path], reference=cmp.get("reference", "simulate"), methods=cmp.get("methods"))
    print(cli.format_report(report))
    tol = cmp.get("tol")
    if tol is None:
        return True
    ok = all(e.max_rel <= tol for e in report)
    print(f"  gate max_rel <= {tol}: {'ok' if ok else 'exceeded'}\n")
    return ok


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("results"))
    ap.add_argument("--presets", nargs="+", default=list(PRESETS), choices=PRESETS)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--seed", type=int)
    a = ap.parse_args(argv)
    rc = RunConfig(a.out, tuple(a.presets), a.workers, a.seed)
    rc.out.mkdir(parents=True, exist_ok=True)
    results = [run_preset(name, rc) for name in rc.presets]
    return 0 if all(results) else 3


if __name__ == "__main__":
    sys.exit(main())
