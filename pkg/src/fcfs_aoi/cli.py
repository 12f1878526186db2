"""Command-line front end and sweep harness.

Experiments are described by TOML files (bundled presets live in
``fcfs_aoi/presets``)::

    [service]
    kind = "exponential"
    rate = 1.0

    [sweep]
    lambda1 = { min = 0.05, max = 0.35, steps = 7 }
    lambda2 = [0.6]
    methods = ["exact_mm1", "simulate"]

    [sim]
    horizon = 500000
    replications = 20
    seed = 1

Exit codes: 0 ok, 1 usage or config error, 2 numeric failure, 3 tolerance gate.
"""
from __future__ import annotations

import argparse
import csv
import io
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np
import tomli

from . import analytic, transient
from .analytic import QueueConfig
from .distributions import Exponential, ServiceDistribution, from_config
from .errors import AoiError, ConfigError, GridMismatch, NotExponential, Unstable
from .sim import SimSpec, simulate

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_TOLERANCE = 0, 1, 2, 3

METHODS = ("exact_mm1", "approx1", "approx2", "approx3", "simulate", "delay")
AOI_METHODS = METHODS[:5]
CSV_COLUMNS = ("lambda1", "lambda2", "method", "value", "std_error", "runtime_ms", "status")


@dataclass(frozen=True)
class Grid:
    min: float
    max: float
    steps: int

    def values(self) -> list[float]:
        if self.steps == 1:
            return [float(self.min)]
        return [round(float(v), 12) for v in np.linspace(self.min, self.max, self.steps)]


@dataclass(frozen=True)
class SimOverrides:
    horizon: int = 500_000
    replications: int = 20
    warmup: float = 0.1
    seed: int = 1


@dataclass(frozen=True)
class SweepSpec:
    lambda1: Grid
    lambda2: tuple[float, ...]
    service: ServiceDistribution
    methods: tuple[str, ...]
    sim: SimOverrides = field(default_factory=SimOverrides)
    output: str | None = None
    workers: int = 1
    timing: bool = True  # False blanks runtime_ms so the file is byte-reproducible

    def __post_init__(self):
        if not self.methods:
            raise ConfigError("sweep.methods: at least one method is required")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ConfigError(f"sweep.methods: unknown {bad}; choose from {list(METHODS)}")
        if not self.lambda2:
            raise ConfigError("sweep.lambda2: at least one value is required")
        if self.lambda1.steps < 1 or self.lambda1.min <= 0 or self.lambda1.max < self.lambda1.min:
            raise ConfigError("sweep.lambda1: need 0 < min <= max and steps >= 1")
        if any(v < 0 for v in self.lambda2):
            raise ConfigError("sweep.lambda2: rates must be non-negative")

    def points(self):
        """Grid order: lambda2 outer, lambda1 inner, methods innermost."""
        for l2 in self.lambda2:
            for l1 in self.lambda1.values():
                for m in self.methods:
                    yield l1, float(l2), m


# ---------------------------------------------------------------------------
# config parsing


def load_toml(path: str | Path) -> dict[str, Any]:
    try:
        with open(path, "rb") as fh:
            return tomli.load(fh)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc


def _table(doc: Mapping, key: str, required=True) -> Mapping:
    value = doc.get(key)
    if value is None:
        if required:
            raise ConfigError(f"missing [{key}] table")
        return {}
    if not isinstance(value, Mapping):
        raise ConfigError(f"{key}: expected a table")
    return value


def _number(tbl: Mapping, key: str, where: str, kind=float):
    try:
        v = tbl[key]
    except KeyError:
        raise ConfigError(f"{where}.{key}: required field missing") from None
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where}.{key}: expected a number, got {v!r}")
    if kind is int and int(v) != v:
        raise ConfigError(f"{where}.{key}: expected an integer, got {v!r}")
    return kind(v)


def sim_overrides(doc: Mapping) -> SimOverrides:
    tbl = _table(doc, "sim", required=False)
    extra = set(tbl) - {"horizon", "replications", "warmup", "seed"}
    if extra:
        raise ConfigError(f"sim: unexpected fields {sorted(extra)}")
    d = SimOverrides()
    kw = {}
    for key, kind in (("horizon", int), ("replications", int), ("warmup", float), ("seed", int)):
        if key in tbl:
            kw[key] = _number(tbl, key, "sim", kind)
    return replace(d, **kw)


def service_from(doc: Mapping) -> ServiceDistribution:
    return from_config(_table(doc, "service"))


def sweep_from(doc: Mapping) -> SweepSpec:
    sw = _table(doc, "sweep")
    extra = set(sw) - {"lambda1", "lambda2", "methods", "output", "workers"}
    if extra:
        raise ConfigError(f"sweep: unexpected fields {sorted(extra)}")
    g = sw.get("lambda1")
    if not isinstance(g, Mapping):
        raise ConfigError("sweep.lambda1: expected a table {min, max, steps}")
    grid = Grid(_number(g, "min", "sweep.lambda1"), _number(g, "max", "sweep.lambda1"),
                _number(g, "steps", "sweep.lambda1", int))
    l2 = sw.get("lambda2")
    if isinstance(l2, (int, float)) and not isinstance(l2, bool):
        l2 = [l2]
    if not isinstance(l2, list) or not all(isinstance(v, (int, float)) for v in l2):
        raise ConfigError("sweep.lambda2: expected a number or a list of numbers")
    methods = sw.get("methods")
    if not isinstance(methods, list):
        raise ConfigError("sweep.methods: expected a list of method names")
    workers = sw.get("workers", 1)
    if not isinstance(workers, int) or workers < 1:
        raise ConfigError("sweep.workers: expected a positive integer")
    return SweepSpec(grid, tuple(float(v) for v in l2), service_from(doc), tuple(methods),
                     sim_overrides(doc), sw.get("output"), workers)


def preset_path(name: str) -> Path:
    """Resolve a bundled preset such as ``fig4`` or ``fig4.cfg``."""
    fname = name if name.endswith(".cfg") else f"{name}.cfg"
    p = resources.files("fcfs_aoi") / "presets" / fname
    if not p.is_file():
        raise ConfigError(f"no bundled preset named {name!r}")
    return Path(str(p))


def resolve_config(arg: str) -> Path:
    p = Path(arg)
    return p if p.exists() else preset_path(arg)


# ---------------------------------------------------------------------------
# evaluation


@dataclass(frozen=True)
class Row:
    lambda1: float
    lambda2: float
    method: str
    value: float
    std_error: float | None
    runtime_ms: float | None
    status: str


def evaluate(method: str, cfg: QueueConfig, sim: SimOverrides) -> tuple[float, float | None]:
    if method == "exact_mm1":
        return transient.aoi_exact_mm1(cfg), None
    if method in ("approx1", "approx2", "approx3"):
        return analytic.aoi_approx(cfg, int(method[-1])), None
    if method == "delay":
        return analytic.mean_delay(cfg), None
    if method == "simulate":
        cfg.require_stable()
        est = simulate(SimSpec(cfg, sim.horizon, sim.warmup, sim.seed, sim.replications)).sources[1].aoi
        return est.mean, est.std_error
    raise ValueError(f"unknown method {method!r}")


def _status(exc: Exception) -> str:
    if isinstance(exc, Unstable):
        return "unstable"
    if isinstance(exc, NotExponential):
        return "not_exponential"
    return f"failed:{type(exc).__name__}"


def _point(args) -> Row:
    l1, l2, method, service, sim, timing = args
    t0 = time.perf_counter()
    try:
        cfg = QueueConfig(l1, l2, service)
        value, se = evaluate(method, cfg, sim)
        status = "ok"
    except (AoiError, ArithmeticError, ValueError, TypeError) as exc:
        value, se, status = float("nan"), None, _status(exc)
    ms = (time.perf_counter() - t0) * 1e3 if timing else None
    return Row(l1, l2, method, value, se, ms, status)


def run_sweep(spec: SweepSpec) -> list[Row]:
    """Evaluate every (lambda1, lambda2, method) point; rows come back in grid order.

    Every simulated point uses the same seed, so neighbouring points share
    random streams and their differences are less noisy.
    """
    jobs = [(l1, l2, m, spec.service, spec.sim, spec.timing) for l1, l2, m in spec.points()]
    if spec.workers > 1:
        with ProcessPoolExecutor(spec.workers) as pool:
            return list(pool.map(_point, jobs))
    return [_point(j) for j in jobs]


def _fmt(v: float | None) -> str:
    if v is None:
        return ""
    return repr(float(v))


def write_csv(rows: Sequence[Row], out) -> None:
    """Write rows with the fixed header; ``out`` is a path or a text stream."""
    if isinstance(out, (str, Path)):
        with open(out, "w", newline="") as fh:
            write_csv(rows, fh)
        return
    w = csv.writer(out, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        ms = "" if r.runtime_ms is None else f"{r.runtime_ms:.3f}"
        w.writerow([_fmt(r.lambda1), _fmt(r.lambda2), r.method, _fmt(r.value), _fmt(r.std_error), ms, r.status])


def read_csv(path: str | Path) -> list[Row]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
            raise ConfigError(f"{path}: header must be {','.join(CSV_COLUMNS)}")
        rows = []
        for line, d in enumerate(reader, start=2):
            try:
                rows.append(Row(
                    float(d["lambda1"]), float(d["lambda2"]), d["method"], float(d["value"]),
                    float(d["std_error"]) if d["std_error"] else None,
                    float(d["runtime_ms"]) if d["runtime_ms"] else None,
                    d["status"],
                ))
            except ValueError as exc:
                raise ConfigError(f"{path}:{line}: {exc}") from exc
    return rows


# ---------------------------------------------------------------------------
# comparison


@dataclass(frozen=True)
class MethodError:
    method: str
    reference: str
    n: int
    max_rel: float
    mean_rel: float
    min_diff: float  # min over points of (value - reference)


def _by_key(rows: Sequence[Row], method: str) -> dict[tuple[float, float], Row]:
    return {(r.lambda1, r.lambda2): r for r in rows if r.method == method}


def _errors(method: str, ref_name: str, rows: dict, ref: dict) -> MethodError:
    if set(rows) != set(ref):
        raise GridMismatch(
            f"{method} and {ref_name} are not on the same (lambda1, lambda2) grid: "
            f"{len(set(rows) ^ set(ref))} points differ"
        )
    rel, diff = [], []
    for key in sorted(ref):
        a, b = rows[key], ref[key]
        if a.status != "ok" or b.status != "ok":
            continue
        diff.append(a.value - b.value)
        rel.append(abs(a.value - b.value) / abs(b.value) if b.value != 0 else (0.0 if a.value == 0 else math.inf))
    if not rel:
        return MethodError(method, ref_name, 0, math.nan, math.nan, math.nan)
    return MethodError(method, ref_name, len(rel), max(rel), float(np.mean(rel)), min(diff))


def compare_report(paths: Sequence[str | Path], reference: str = "simulate",
                   methods: Sequence[str] | None = None) -> list[MethodError]:
    """Error statistics of each method against a reference.

    With one file every AoI method in it is compared with ``reference`` from
    the same file.  With two files each method present in both is compared
    with its counterpart in the first file.  ``methods`` restricts the report.
    """
    keep = set(methods) if methods else set(METHODS)
    if len(paths) == 1:
        rows = read_csv(paths[0])
        present = [m for m in AOI_METHODS if any(r.method == m for r in rows)]
        if reference not in present:
            raise ConfigError(f"{paths[0]}: reference method {reference!r} has no rows")
        ref = _by_key(rows, reference)
        return [_errors(m, reference, _by_key(rows, m), ref) for m in present if m != reference and m in keep]
    if len(paths) == 2:
        base, other = read_csv(paths[0]), read_csv(paths[1])
        shared = [m for m in METHODS if m in keep
                  and any(r.method == m for r in base) and any(r.method == m for r in other)]
        if not shared:
            raise GridMismatch("the two files share no method")
        return [_errors(m, f"{m}@{Path(paths[0]).name}", _by_key(other, m), _by_key(base, m)) for m in shared]
    raise ConfigError("compare takes one or two CSV files")


def format_report(report: Sequence[MethodError]) -> str:
    buf = io.StringIO()
    buf.write(f"{'method':<10} {'reference':<22} {'n':>4} {'max_rel':>12} {'mean_rel':>12} {'min_diff':>12}\n")
    for e in report:
        buf.write(f"{e.method:<10} {e.reference:<22} {e.n:>4} {e.max_rel:>12.4e} {e.mean_rel:>12.4e} {e.min_diff:>12.4e}\n")
    return buf.getvalue()


# ---------------------------------------------------------------------------
# argument handling


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _service_arg(args) -> ServiceDistribution:
    if args.service:
        try:
            doc = tomli.loads(f"service = {args.service}")
        except tomli.TOMLDecodeError as exc:
            raise ConfigError(f"--service: {exc}") from exc
        return from_config(doc["service"])
    if args.config:
        return service_from(load_toml(resolve_config(args.config)))
    return Exponential(args.mu)


def _queue_args(p):
    p.add_argument("--lambda1", type=float, required=True)
    p.add_argument("--lambda2", type=float, default=0.0)
    _service_flags(p)


def _service_flags(p):
    p.add_argument("--config", help="TOML file (or preset name) with a [service] table")
    p.add_argument("--service", help='inline table, e.g. \'{kind="gamma", shape=2, rate=2}\'')
    p.add_argument("--mu", type=float, default=1.0, help="exponential service rate if no service is given")
    p.add_argument("--out", help="write the result as a one-row CSV")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fcfs-aoi", description="Average AoI in a multi-source FCFS queue.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("exact-mm1", help="exact AoI of source 1, exponential service")
    _queue_args(p)
    p.add_argument("--tol", type=float, default=1e-7, help="absolute tolerance on the double integral")

    p = sub.add_parser("approx", help="closed-form approximations for general service")
    _queue_args(p)
    p.add_argument("--which", choices=("1", "2", "3", "all"), default="all")

    p = sub.add_parser("single-mg1", help="exact AoI of a single-source M/G/1 queue")
    p.add_argument("--lam", type=float, required=True)
    _service_flags(p)

    p = sub.add_parser("simulate", help="discrete-event simulation")
    _queue_args(p)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--horizon", type=int, default=500_000)
    p.add_argument("--replications", type=int, default=20)
    p.add_argument("--warmup", type=float, default=0.1)
    p.add_argument("--trace", help="per-packet CSV of the first replication")

    p = sub.add_parser("sweep", help="run a parameter sweep described by a config file")
    p.add_argument("--config", required=True, help="TOML file or bundled preset name (fig4 ... fig9)")
    p.add_argument("--out", help="CSV path (default: sweep.output, else stdout)")
    p.add_argument("--seed", type=int, help="override sim.seed")
    p.add_argument("--workers", type=int, help="override sweep.workers")
    p.add_argument("--no-timing", action="store_true", help="leave runtime_ms empty")

    p = sub.add_parser("compare", help="error statistics between methods or files")
    p.add_argument("csv", nargs="+")
    p.add_argument("--reference", default="simulate")
    p.add_argument("--tol", type=float, help="fail (exit 3) if any max relative error exceeds this")
    p.add_argument("--methods", nargs="+", choices=METHODS, help="only report these methods")
    p.add_argument("--config", help="take reference/tol from a [compare] table")
    p.add_argument("--out", help="also write the report to this file")
    return parser


def _emit_rows(rows, out):
    if out:
        write_csv(rows, out)
    for r in rows:
        se = f" +- {r.std_error:.6g}" if r.std_error is not None else ""
        print(f"{r.method}: {r.value:.10g}{se} [{r.status}]")


def _single(method, args, sim=None) -> int:
    service = _service_arg(args)
    cfg = QueueConfig(args.lambda1, args.lambda2, service)
    t0 = time.perf_counter()
    if method == "exact_mm1":
        value, se = transient.aoi_exact_mm1(cfg, transient.Truncation(abs_tol=args.tol)), None
    else:
        value, se = evaluate(method, cfg, sim)
    _emit_rows([Row(cfg.lambda1, cfg.lambda2, method, value, se, (time.perf_counter() - t0) * 1e3, "ok")], args.out)
    return EXIT_OK


def _run(args) -> int:
    cmd = args.command
    if cmd == "exact-mm1":
        return _single("exact_mm1", args)
    if cmd == "approx":
        methods = ("approx1", "approx2", "approx3") if args.which == "all" else (f"approx{args.which}",)
        cfg = QueueConfig(args.lambda1, args.lambda2, _service_arg(args))
        rows = []
        for m in methods:
            t0 = time.perf_counter()
            value = analytic.aoi_approx(cfg, int(m[-1]))
            rows.append(Row(cfg.lambda1, cfg.lambda2, m, value, None, (time.perf_counter() - t0) * 1e3, "ok"))
        _emit_rows(rows, args.out)
        return EXIT_OK
    if cmd == "single-mg1":
        service = _service_arg(args)
        value = analytic.aoi_single_source_mg1(args.lam, service)
        _emit_rows([Row(args.lam, 0.0, "single_mg1", value, None, None, "ok")], args.out)
        return EXIT_OK
    if cmd == "simulate":
        cfg = QueueConfig(args.lambda1, args.lambda2, _service_arg(args))
        spec = SimSpec(cfg, args.horizon, args.warmup, args.seed, args.replications, trace_path=args.trace)
        res = simulate(spec)
        rows = []
        for c, st in res.sources.items():
            print(f"source {c}: aoi {st.aoi.mean:.8g} +- {st.aoi.std_error:.3g}  "
                  f"delay {st.mean_delay.mean:.8g} +- {st.mean_delay.std_error:.3g}  "
                  f"wait {st.mean_wait.mean:.8g} +- {st.mean_wait.std_error:.3g}")
        a = res.sources[1].aoi
        rows.append(Row(cfg.lambda1, cfg.lambda2, "simulate", a.mean, a.std_error, None, "ok"))
        if args.out:
            write_csv(rows, args.out)
        return EXIT_OK
    if cmd == "sweep":
        spec = sweep_from(load_toml(resolve_config(args.config)))
        if args.seed is not None:
            spec = replace(spec, sim=replace(spec.sim, seed=args.seed))
        if args.workers is not None:
            spec = replace(spec, workers=args.workers)
        if args.no_timing:
            spec = replace(spec, timing=False)
        rows = run_sweep(spec)
        out = args.out or spec.output
        if out:
            write_csv(rows, out)
            bad = sum(r.status != "ok" for r in rows)
            print(f"wrote {len(rows)} rows to {out} ({bad} not ok)")
        else:
            write_csv(rows, sys.stdout)
        return EXIT_OK
    if cmd == "compare":
        reference, tol, methods = args.reference, args.tol, args.methods
        if args.config:
            tbl = _table(load_toml(resolve_config(args.config)), "compare", required=False)
            reference = tbl.get("reference", reference)
            methods = methods or tbl.get("methods")
            if tol is None and "tol" in tbl:
                tol = _number(tbl, "tol", "compare")
        report = compare_report(args.csv, reference, methods)
        text = format_report(report)
        print(text, end="")
        if args.out:
            Path(args.out).write_text(text)
        if tol is not None and any(not (e.max_rel <= tol) for e in report if e.n):
            print(f"tolerance gate failed: max relative error above {tol:g}", file=sys.stderr)
            return EXIT_TOLERANCE
        return EXIT_OK
    raise AssertionError(cmd)


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _run(args)
    except (ConfigError, GridMismatch) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (AoiError, ArithmeticError, ValueError, TypeError) as exc:
        print(f"numeric failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
