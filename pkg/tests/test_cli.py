"""Experiment runner: sweeps, CSV output, plot data, exit codes."""

import json
import os

import pytest

from aucrac.cli import (EXIT_CONSTRAINT, EXIT_ENUM, EXIT_IO, EXIT_OK,
                        EXIT_SCHEMA, RESULTS_HEADER, ExperimentSpec,
                        _configs_for, _parse_seeds, _parse_sweep,
                        emit_plot_data, load_config, main, run_experiment)
from aucrac.core import default_config
from aucrac.errors import (ConstraintError, InputError, SchemaError,
                           UnknownEnumError)


def _tiny_spec(out_dir, **kw):
    base = default_config(num_devices=2, num_workers=2)
    args = dict(base=base, sweep_var="devices", sweep_values=(2, 3),
                strategies=("mct", "round_robin"), seeds=(0, 1),
                out_dir=str(out_dir), jobs=1)
    args.update(kw)
    return ExperimentSpec(**args)


# --- parsing helpers ------------------------------------------------------

def test_seed_range_parsing():
    assert _parse_seeds("0..4") == (0, 1, 2, 3, 4)
    assert _parse_seeds("1,3,5") == (1, 3, 5)
    with pytest.raises(SchemaError):
        _parse_seeds("one,two")


def test_sweep_parsing():
    assert _parse_sweep("devices=10,20") == ("devices", (10, 20))
    assert _parse_sweep("workers=4") == ("workers", (4,))
    assert _parse_sweep("strategy=aucrac,mct") == ("strategy", ("aucrac", "mct"))
    with pytest.raises(SchemaError):
        _parse_sweep("devices")
    with pytest.raises(SchemaError):
        _parse_sweep("devices=ten")
    with pytest.raises(UnknownEnumError):
        _parse_sweep("gravity=9,8")


# --- spec validation ------------------------------------------------------

def test_spec_rejects_duplicate_seeds(tmp_path):
    with pytest.raises(ConstraintError):
        _tiny_spec(tmp_path, seeds=(1, 1))


def test_spec_rejects_empty_sweep(tmp_path):
    with pytest.raises(ConstraintError):
        _tiny_spec(tmp_path, sweep_values=())


def test_spec_rejects_unknown_strategy(tmp_path):
    with pytest.raises(UnknownEnumError):
        _tiny_spec(tmp_path, strategies=("sorcery",))


def test_spec_rejects_bad_jobs(tmp_path):
    with pytest.raises(ConstraintError):
        _tiny_spec(tmp_path, jobs=0)


def test_strategy_sweep_collapses_the_strategy_axis(tmp_path):
    spec = _tiny_spec(tmp_path, sweep_var="strategy",
                      sweep_values=("mct", "greedy"), seeds=(0,))
    combos = _configs_for(spec)
    assert [(v, s) for v, s, _, _ in combos] == [("mct", "mct"), ("greedy", "greedy")]


def test_run_order_is_value_strategy_seed(tmp_path):
    combos = _configs_for(_tiny_spec(tmp_path))
    assert [(v, s, seed) for v, s, seed, _ in combos] == [
        (2, "mct", 0), (2, "mct", 1), (2, "round_robin", 0), (2, "round_robin", 1),
        (3, "mct", 0), (3, "mct", 1), (3, "round_robin", 0), (3, "round_robin", 1)]


# --- experiment output ----------------------------------------------------

def test_results_file_has_the_exact_header_and_rows(tmp_path):
    results, agg = run_experiment(_tiny_spec(tmp_path))
    lines = open(results, encoding="utf-8").read().splitlines()
    assert lines[0] == RESULTS_HEADER
    assert len(lines) == 1 + 8  # 2 values x 2 strategies x 2 seeds
    assert os.path.exists(agg)


def test_rerun_is_byte_identical(tmp_path):
    spec_a = _tiny_spec(tmp_path / "a")
    spec_b = _tiny_spec(tmp_path / "b")
    ra, aa = run_experiment(spec_a)
    rb, ab = run_experiment(spec_b)
    assert open(ra, "rb").read() == open(rb, "rb").read()
    assert open(aa, "rb").read() == open(ab, "rb").read()


def test_parallel_jobs_change_nothing(tmp_path):
    ra, aa = run_experiment(_tiny_spec(tmp_path / "serial"))
    rp, ap = run_experiment(_tiny_spec(tmp_path / "parallel", jobs=2))
    assert open(ra, "rb").read() == open(rp, "rb").read()
    assert open(aa, "rb").read() == open(ap, "rb").read()


def test_aggregate_reports_zero_spread_for_one_seed(tmp_path):
    spec = _tiny_spec(tmp_path, seeds=(0,), sweep_values=(2,), strategies=("mct",))
    _, agg = run_experiment(spec)
    header, row = open(agg, encoding="utf-8").read().splitlines()
    cols = dict(zip(header.split(","), row.split(",")))
    assert cols["n_seeds"] == "1"
    assert float(cols["mean_completion_s_std"]) == 0.0


# --- plot data ------------------------------------------------------------

def test_completion_figure_writes_one_series_per_strategy(tmp_path):
    results, _ = run_experiment(_tiny_spec(tmp_path))
    paths = emit_plot_data(results, "completion_vs_devices")
    names = sorted(os.path.basename(p) for p in paths)
    assert names == ["completion_vs_devices__mct.csv",
                     "completion_vs_devices__round_robin.csv"]
    body = open(paths[0], encoding="utf-8").read().splitlines()
    assert body[0] == "x,y"
    assert len(body) == 3  # two swept device counts


def test_fairness_table_lists_each_strategy_once(tmp_path):
    results, _ = run_experiment(_tiny_spec(tmp_path))
    (path,) = emit_plot_data(results, "fairness_table")
    lines = open(path, encoding="utf-8").read().splitlines()
    assert lines[0] == "strategy,fairness_jain_mean"
    assert [ln.split(",")[0] for ln in lines[1:]] == ["round_robin", "mct"]


def test_memory_figure_shows_vm_above_container(tmp_path):
    results, _ = run_experiment(_tiny_spec(tmp_path))
    paths = emit_plot_data(results, "memory_vs_tasks")

    def read(path):
        rows = open(path, encoding="utf-8").read().splitlines()[1:]
        return {float(r.split(",")[0]): float(r.split(",")[1]) for r in rows}

    container = read([p for p in paths if os.path.basename(p).endswith("container.csv")][0])
    vm = read([p for p in paths if os.path.basename(p).endswith("vm.csv")][0])
    assert set(container) == set(vm)
    for count in sorted(container):
        if count >= 1:
            assert vm[count] > container[count]
    xs = sorted(container)
    assert all(container[a] < container[b] for a, b in zip(xs, xs[1:]))


def test_cpu_figure_saturates_at_one(tmp_path):
    results, _ = run_experiment(_tiny_spec(tmp_path))
    paths = emit_plot_data(results, "cpu_vs_tasks")
    for path in paths:
        for row in open(path, encoding="utf-8").read().splitlines()[1:]:
            assert 0.0 <= float(row.split(",")[1]) <= 1.0


def test_plot_data_guards(tmp_path):
    results, _ = run_experiment(_tiny_spec(tmp_path))
    with pytest.raises(UnknownEnumError):
        emit_plot_data(results, "pie_chart")
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    with pytest.raises(InputError):
        emit_plot_data(str(empty), "fairness_table")
    wrong = tmp_path / "wrong.csv"
    wrong.write_text("sweep_var,strategy\n")
    with pytest.raises(SchemaError):
        emit_plot_data(str(wrong), "fairness_table")


# --- config loading and exit codes ----------------------------------------

def _write_config(tmp_path, doc):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(doc))
    return str(path)


def test_load_config_round_trip(tmp_path):
    path = _write_config(tmp_path, {"num_devices": 3, "strategy": "greedy"})
    cfg = load_config(path)
    assert cfg.num_devices == 3
    assert cfg.strategy == "greedy"


def test_main_runs_a_tiny_sweep(tmp_path):
    path = _write_config(tmp_path, {"num_devices": 2, "num_workers": 2})
    code = main(["--config", path, "--sweep", "devices=2", "--seeds", "0",
                 "--strategy", "mct", "--out", str(tmp_path / "out")])
    assert code == EXIT_OK
    assert os.path.exists(tmp_path / "out" / "results.csv")
    assert os.path.exists(tmp_path / "out" / "aggregate.csv")


def test_main_emits_requested_plots(tmp_path):
    path = _write_config(tmp_path, {"num_devices": 2, "num_workers": 2})
    out = tmp_path / "out"
    code = main(["--config", path, "--sweep", "devices=2", "--seeds", "0",
                 "--strategy", "mct", "--out", str(out),
                 "--emit-plots", "fairness_table,memory_vs_tasks"])
    assert code == EXIT_OK
    assert os.path.exists(out / "fairness_table.csv")
    assert os.path.exists(out / "memory_vs_tasks__vm.csv")


def test_main_missing_config_file_is_io_error(tmp_path):
    assert main(["--config", str(tmp_path / "nope.json")]) == EXIT_IO


def test_main_unknown_key_is_schema_error(tmp_path):
    path = _write_config(tmp_path, {"num_devicez": 2})
    assert main(["--config", path]) == EXIT_SCHEMA


def test_main_bad_enum_is_enum_error(tmp_path):
    path = _write_config(tmp_path, {"strategy": "sorcery"})
    assert main(["--config", path]) == EXIT_ENUM


def test_main_constraint_violation_is_constraint_error(tmp_path):
    path = _write_config(tmp_path, {"num_workers": 1})
    assert main(["--config", path]) == EXIT_CONSTRAINT


def test_main_rejects_unknown_strategy_flag(tmp_path):
    path = _write_config(tmp_path, {"num_devices": 2, "num_workers": 2})
    assert main(["--config", path, "--strategy", "sorcery"]) == EXIT_ENUM


def test_main_rejects_bad_seed_text(tmp_path):
    path = _write_config(tmp_path, {"num_devices": 2, "num_workers": 2})
    assert main(["--config", path, "--seeds", "x..y"]) == EXIT_SCHEMA
