"""Experiment runner: config in, CSVs and plot data out.

Exit codes separate failure classes so scripts can branch on them:
0 success, 2 config schema, 3 config constraint, 4 unknown enum value,
5 file I/O, 6 runtime.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

from .containers import memory_footprint
from .core import (STRATEGIES, SimConfig, WorkerNode, config_from_json,
                   default_config)
from .errors import (AucracError, ConstraintError, InputError, SchemaError,
                     UnknownEnumError)
from .sim import run

EXIT_OK = 0
EXIT_SCHEMA = 2
EXIT_CONSTRAINT = 3
EXIT_ENUM = 4
EXIT_IO = 5
EXIT_RUNTIME = 6

SWEEP_VARS = ("devices", "workers", "strategy")

RESULTS_HEADER = ("sweep_var,sweep_value,strategy,seed,mean_completion_s,"
                  "p95_completion_s,deadline_miss,fairness_jain,mn_profit,"
                  "peak_mem_mb,mean_cpu_frac")

_AGG_METRICS = ("mean_completion_s", "p95_completion_s", "deadline_miss",
                "fairness_jain", "mn_profit", "peak_mem_mb", "mean_cpu_frac")

FIGURES = ("completion_vs_devices", "memory_vs_tasks", "cpu_vs_tasks", "fairness_table")

log = logging.getLogger("aucrac")


def load_config(path: str) -> SimConfig:
    """Read and validate a JSON config file. Unknown keys are errors."""
    with open(path, "r", encoding="utf-8") as fh:
        return config_from_json(fh.read())


@dataclass(frozen=True)
class ExperimentSpec:
    """A full sweep: base config, the swept variable, strategies, seeds."""

    base: SimConfig
    sweep_var: str = "devices"
    sweep_values: tuple = (10, 20, 30, 40, 50)
    strategies: tuple = STRATEGIES
    seeds: tuple = tuple(range(30))
    out_dir: str = "results"
    jobs: int = 1

    def __post_init__(self):
        if self.sweep_var not in SWEEP_VARS:
            raise UnknownEnumError("sweep_var", f"must be one of {SWEEP_VARS}, got {self.sweep_var!r}")
        if not self.sweep_values:
            raise ConstraintError("sweep_values", "must be non-empty")
        if not self.seeds:
            raise ConstraintError("seeds", "must be non-empty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConstraintError("seeds", "must be distinct")
        for s in self.strategies:
            if s not in STRATEGIES:
                raise UnknownEnumError("strategy", f"must be one of {STRATEGIES}, got {s!r}")
        if not isinstance(self.jobs, int) or self.jobs < 1:
            raise ConstraintError("jobs", "must be a positive integer")
        object.__setattr__(self, "sweep_values", tuple(self.sweep_values))
        object.__setattr__(self, "strategies", tuple(self.strategies))
        object.__setattr__(self, "seeds", tuple(self.seeds))


def _configs_for(spec: ExperimentSpec):
    """Deterministic run order: sweep value, then strategy, then seed."""
    combos = []
    for value in spec.sweep_values:
        if spec.sweep_var == "strategy":
            strategies = (value,)
        else:
            strategies = spec.strategies
        for strategy in strategies:
            for seed in spec.seeds:
                cfg = spec.base
                if spec.sweep_var == "devices":
                    cfg = replace(cfg, num_devices=int(value))
                elif spec.sweep_var == "workers":
                    cfg = replace(cfg, num_workers=int(value))
                cfg = replace(cfg, strategy=strategy, seed=int(seed))
                combos.append((value, strategy, int(seed), cfg))
    return combos


def _run_one(config: SimConfig):
    return run(config).metrics


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def run_experiment(spec: ExperimentSpec) -> tuple:
    """Run the sweep; write results.csv and aggregate.csv under out_dir.

    Reruns of the same spec produce byte-identical files.
    """
    combos = _configs_for(spec)
    log.info("running %d simulations (%s sweep, %d seeds)",
             len(combos), spec.sweep_var, len(spec.seeds))
    if spec.jobs > 1:
        with ProcessPoolExecutor(max_workers=spec.jobs) as pool:
            metrics = list(pool.map(_run_one, [c[-1] for c in combos], chunksize=4))
    else:
        metrics = [_run_one(c[-1]) for c in combos]

    os.makedirs(spec.out_dir, exist_ok=True)
    results_path = os.path.join(spec.out_dir, "results.csv")
    rows = []
    for (value, strategy, seed, _cfg), m in zip(combos, metrics):
        rows.append((value, strategy, seed, (
            m.mean_completion_s, m.p95_completion_s, float(m.deadline_miss),
            m.fairness_jain, m.mn_profit,
            max(m.peak_memory_mb) if m.peak_memory_mb else 0.0,
            m.mean_cpu_frac,
        )))
    with open(results_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(RESULTS_HEADER + "\n")
        for value, strategy, seed, vals in rows:
            cells = [spec.sweep_var, _fmt(value), strategy, str(seed)]
            cells.extend(_fmt(v) for v in vals)
            fh.write(",".join(cells) + "\n")

    # aggregate across seeds, population stddev so a single seed reads as 0
    agg_path = os.path.join(spec.out_dir, "aggregate.csv")
    groups = {}
    for value, strategy, _seed, vals in rows:
        groups.setdefault((value, strategy), []).append(vals)
    with open(agg_path, "w", encoding="utf-8", newline="\n") as fh:
        header = ["sweep_var", "sweep_value", "strategy", "n_seeds"]
        for name in _AGG_METRICS:
            header.extend((f"{name}_mean", f"{name}_std"))
        fh.write(",".join(header) + "\n")
        for (value, strategy), rows_v in groups.items():
            cells = [spec.sweep_var, _fmt(value), strategy, str(len(rows_v))]
            for i in range(len(_AGG_METRICS)):
                xs = [r[i] for r in rows_v]
                mean = sum(xs) / len(xs)
                var = max(0.0, sum(x * x for x in xs) / len(xs) - mean * mean)
                cells.extend((_fmt(mean), _fmt(math.sqrt(var))))
            fh.write(",".join(cells) + "\n")
    log.info("wrote %s and %s", results_path, agg_path)
    return results_path, agg_path


def _read_results(path: str):
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if not lines:
        raise InputError(f"{path} is empty")
    header = lines[0].split(",")
    expected = RESULTS_HEADER.split(",")
    for col in expected:
        if col not in header:
            raise SchemaError(col, f"missing column in {path}")
    if header != expected:
        raise SchemaError("header", f"columns must be exactly {RESULTS_HEADER!r}")
    rows = []
    for ln in lines[1:]:
        cells = ln.split(",")
        rows.append(dict(zip(header, cells)))
    if not rows:
        raise InputError(f"{path} has no data rows")
    return rows


def _reference_node() -> WorkerNode:
    cfg = default_config()
    t = cfg.node_templates[0]
    return WorkerNode(id="ref", cpu=t.cpu, memory=t.memory_mb, power=t.power_w,
                      unit_cost=t.unit_cost, time_const=t.time_const_s,
                      executor_mode=t.executor_mode, executor=cfg.executor)


def emit_plot_data(results_csv: str, figure: str, out_dir: str | None = None) -> list:
    """Write two-column data files for one figure; returns the paths written.

    Series from the results feed the completion and fairness figures; the
    memory and CPU versus task count figures come from the executor load
    model evaluated at the default settings, one series per executor mode.
    """
    if figure not in FIGURES:
        raise UnknownEnumError("figure", f"must be one of {FIGURES}, got {figure!r}")
    rows = _read_results(results_csv)
    if out_dir is None:
        out_dir = os.path.dirname(os.path.abspath(results_csv))
    os.makedirs(out_dir, exist_ok=True)
    written = []

    def write_series(name: str, pairs):
        path = os.path.join(out_dir, f"{name}.csv")
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("x,y\n")
            for x, y in pairs:
                fh.write(f"{_fmt(x)},{_fmt(y)}\n")
        written.append(path)

    if figure == "completion_vs_devices":
        series = {}
        for r in rows:
            key = (r["strategy"], float(r["sweep_value"]))
            series.setdefault(key, []).append(float(r["mean_completion_s"]))
        strategies = sorted({s for s, _ in series}, key=lambda s: (STRATEGIES.index(s)
                            if s in STRATEGIES else len(STRATEGIES), s))
        for strategy in strategies:
            pairs = sorted((x, sum(v) / len(v)) for (s, x), v in series.items()
                           if s == strategy)
            write_series(f"completion_vs_devices__{strategy}", pairs)
    elif figure == "fairness_table":
        by_strategy = {}
        for r in rows:
            by_strategy.setdefault(r["strategy"], []).append(float(r["fairness_jain"]))
        path = os.path.join(out_dir, "fairness_table.csv")
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("strategy,fairness_jain_mean\n")
            for strategy in sorted(by_strategy, key=lambda s: (STRATEGIES.index(s)
                                   if s in STRATEGIES else len(STRATEGIES), s)):
                vals = by_strategy[strategy]
                fh.write(f"{strategy},{_fmt(sum(vals) / len(vals))}\n")
        written.append(path)
    elif figure == "memory_vs_tasks":
        node = _reference_node()
        counts = range(0, 51, 5)
        for mode in ("container", "vm"):
            write_series(f"memory_vs_tasks__{mode}",
                         [(k, memory_footprint(node, k, mode)) for k in counts])
    elif figure == "cpu_vs_tasks":
        cfg = default_config().executor
        counts = range(0, 51, 5)
        for mode in ("container", "vm"):
            scale = 1.0 + (cfg.vm_cpu_overhead_frac if mode == "vm" else 0.0)
            write_series(f"cpu_vs_tasks__{mode}",
                         [(k, min(1.0, k * cfg.cpu_share_per_task * scale)) for k in counts])
    return written


def _parse_seeds(text: str) -> tuple:
    text = text.strip()
    try:
        if ".." in text:
            lo, hi = text.split("..", 1)
            return tuple(range(int(lo), int(hi) + 1))
        return tuple(int(s) for s in text.split(","))
    except ValueError as exc:
        raise SchemaError("seeds", f"cannot parse {text!r}: {exc}") from exc


def _parse_sweep(text: str) -> tuple:
    if "=" not in text:
        raise SchemaError("sweep", f"expected var=v1,v2,..., got {text!r}")
    var, _, values = text.partition("=")
    var = var.strip()
    if var not in SWEEP_VARS:
        raise UnknownEnumError("sweep", f"must sweep one of {SWEEP_VARS}, got {var!r}")
    vals = [v.strip() for v in values.split(",") if v.strip()]
    if not vals:
        raise SchemaError("sweep", "needs at least one value")
    if var == "strategy":
        return var, tuple(vals)
    try:
        return var, tuple(int(v) for v in vals)
    except ValueError as exc:
        raise SchemaError("sweep", f"{var} values must be integers: {exc}") from exc


def _setup_logging():
    level_name = os.environ.get("AUCRAC_LOG", "info").lower()
    if level_name == "off":
        logging.disable(logging.CRITICAL)
        return
    level = logging.DEBUG if level_name == "trace" else logging.INFO
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="aucrac",
                                description="Run offloading simulations and export CSV results.")
    p.add_argument("--config", help="JSON config file; defaults to the built-in config")
    p.add_argument("--sweep", help="sweep spec, e.g. devices=10,20,30,40,50")
    p.add_argument("--seeds", help="seed list '0,1,2' or range '0..29' (default 0..29)")
    p.add_argument("--strategy", help="one strategy name, or 'all' (default: all)")
    p.add_argument("--mode", choices=("literal", "repaired"), help="auction mode override")
    p.add_argument("--win-rule", choices=("highest", "lowest"), help="win rule override")
    p.add_argument("--out", default="results", help="output directory (default ./results)")
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p.add_argument("--emit-plots", help="comma list of figures, or 'all'")
    return p


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config) if args.config else default_config()
        if args.mode:
            config = replace(config, auction_mode=args.mode)
        if args.win_rule:
            config = replace(config, win_rule=args.win_rule)
        strategies = STRATEGIES
        if args.strategy and args.strategy != "all":
            if args.strategy not in STRATEGIES:
                raise UnknownEnumError("strategy", f"must be one of {STRATEGIES}, got {args.strategy!r}")
            strategies = (args.strategy,)
            config = replace(config, strategy=args.strategy)
        sweep_var, sweep_values = ("devices", (config.num_devices,))
        if args.sweep:
            sweep_var, sweep_values = _parse_sweep(args.sweep)
        seeds = _parse_seeds(args.seeds) if args.seeds else tuple(range(30))
        spec = ExperimentSpec(base=config, sweep_var=sweep_var, sweep_values=sweep_values,
                              strategies=strategies, seeds=seeds, out_dir=args.out,
                              jobs=args.jobs)
        results_path, _agg = run_experiment(spec)
        if args.emit_plots:
            figures = FIGURES if args.emit_plots == "all" else tuple(
                f.strip() for f in args.emit_plots.split(",") if f.strip())
            for figure in figures:
                for path in emit_plot_data(results_path, figure, out_dir=args.out):
                    log.info("wrote %s", path)
    except SchemaError as exc:
        print(f"config schema error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except UnknownEnumError as exc:
        print(f"unknown value: {exc}", file=sys.stderr)
        return EXIT_ENUM
    except ConstraintError as exc:
        print(f"config constraint violated: {exc}", file=sys.stderr)
        return EXIT_CONSTRAINT
    except FileNotFoundError as exc:
        print(f"file error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"file error: {exc}", file=sys.stderr)
        return EXIT_IO
    except AucracError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
