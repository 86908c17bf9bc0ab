import json

import numpy as np
import pytest

from graphbench.errors import ContractError
from graphbench.experiments import (
    ExperimentSpec,
    measure_batch_time,
    parse_experiment_text,
    resolve_cell,
    run_dirichlet_baseline,
    run_experiment,
    run_single_cell,
)
from graphbench.models import ModelConfig, count_params


def tiny_spec(**kw):
    base = dict(name="unit", sweep="layers", task="matching",
                archs=("commnet",), values=(1,), trials=2, seed=3,
                n_iters=4, eval_instances=2, hidden_dim=8,
                inner_steps=2, time_batches=False)
    base.update(kw)
    return ExperimentSpec(**base)


def test_parse_experiment_text():
    text = """
    # depth sweep
    name = demo
    sweep = layers
    task = clustering
    archs = gated_gcn, glstm
    values = 1, 2, 4
    trials = 3
    hidden_dim = 16
    q_noise = 0.15
    residual = false
    n_iters = 10   # short
    """
    spec = parse_experiment_text(text)
    assert spec.name == "demo"
    assert spec.archs == ("gated_gcn", "glstm")
    assert spec.values == (1, 2, 4)
    assert spec.trials == 3
    assert spec.q_noise == 0.15
    assert spec.residual is False
    assert spec.n_iters == 10


def test_parse_learning_speed_defaults_single_value():
    spec = parse_experiment_text(
        "name=ls\nsweep=learning_speed\ntask=matching\n"
        "archs=commnet\nhidden_dim=8\n")
    assert spec.values == (0,)


def test_parse_rejects_malformed_text():
    good = "name=x\nsweep=layers\ntask=matching\narchs=commnet\nvalues=1\nhidden_dim=8\n"
    with pytest.raises(ContractError):
        parse_experiment_text(good + "bogus_key=1\n")
    with pytest.raises(ContractError):
        parse_experiment_text(good + "name=y\n")
    with pytest.raises(ContractError):
        parse_experiment_text(good + "residual=maybe\n")
    with pytest.raises(ContractError):
        parse_experiment_text("name=x\nsweep=layers\n")
    with pytest.raises(ContractError):
        parse_experiment_text(good.replace("name=x\n", "") + "no equals here\n")


def test_spec_validation():
    with pytest.raises(ContractError):
        tiny_spec(sweep="width")
    with pytest.raises(ContractError):
        tiny_spec(task="coloring")
    with pytest.raises(ContractError):
        tiny_spec(archs=("resnet",))
    with pytest.raises(ContractError):
        tiny_spec(trials=0)
    with pytest.raises(ContractError):
        tiny_spec(values=())
    with pytest.raises(ContractError):
        tiny_spec(sweep="budget", values=(1000,))  # hidden_dim must be dropped
    with pytest.raises(ContractError):
        tiny_spec(hidden_dim=None)  # no width and no budget
    with pytest.raises(ContractError):
        tiny_spec(sweep="noise", values=(1.5,))


def test_resolve_cell_applies_sweep_value():
    cfg, s = resolve_cell(tiny_spec(values=(4,)), "commnet", 4, 0)
    assert cfg.n_layers == 4 and cfg.hidden_dim == 8

    cfg, s = resolve_cell(tiny_spec(sweep="noise", values=(0.25,)), "commnet", 0.25, 0)
    assert s.q_noise == 0.25

    cfg, s = resolve_cell(tiny_spec(sweep="inner_steps", values=(5,)), "commnet", 5, 0)
    assert cfg.inner_steps == 5

    spec = tiny_spec(sweep="budget", values=(2000,), hidden_dim=None)
    cfg, s = resolve_cell(spec, "commnet", 2000, 0)
    assert count_params(cfg) <= 2000
    bigger = ModelConfig(**{**cfg.__dict__, "hidden_dim": cfg.hidden_dim + 1})
    assert count_params(bigger) > 2000

    # trials get distinct seeds, same trial twice gets the same seed
    _, s0 = resolve_cell(spec, "commnet", 2000, 0)
    _, s1 = resolve_cell(spec, "commnet", 2000, 1)
    _, s0b = resolve_cell(spec, "commnet", 2000, 0)
    assert s0.seed != s1.seed
    assert s0.seed == s0b.seed


def test_curve_only_recorded_for_learning_speed():
    _, s = resolve_cell(tiny_spec(curve_every=50), "commnet", 1, 0)
    assert s.curve_every == 0
    ls = tiny_spec(sweep="learning_speed", values=(0,), curve_every=2)
    _, s = resolve_cell(ls, "commnet", 0, 0)
    assert s.curve_every == 2


def test_run_single_cell_records():
    rec = run_single_cell(tiny_spec(), "commnet", 1, 0)
    assert rec["error"] is None
    assert 0.0 <= rec["final_accuracy"] <= 1.0
    assert rec["spec_hash"] == tiny_spec().spec_hash()
    assert len(rec["eval_accuracies"]) == 2

    # an unmeetable budget becomes an error record, not an exception
    spec = tiny_spec(sweep="budget", values=(10,), hidden_dim=None)
    rec = run_single_cell(spec, "commnet", 10, 0)
    assert rec["error"].startswith("BudgetError")


def test_run_experiment_resumes_and_rerenders_identically(tmp_path):
    spec = tiny_spec()
    d1 = tmp_path / "one"
    summary = run_experiment(spec, d1)
    assert (d1 / "spec.json").exists()
    assert len(list((d1 / "cells").glob("*.json"))) == 2
    csv1 = (d1 / "results.csv").read_bytes()
    sum1 = (d1 / "summary.json").read_bytes()
    assert summary["groups"][0]["n_trials_ok"] == 2

    # same directory again: everything reused, bytes unchanged
    run_experiment(spec, d1)
    assert (d1 / "results.csv").read_bytes() == csv1
    assert (d1 / "summary.json").read_bytes() == sum1

    # fresh directory: deterministic accuracy columns, identical csv
    d2 = tmp_path / "two"
    run_experiment(spec, d2)
    assert (d2 / "results.csv").read_bytes() == csv1


def test_run_experiment_rejects_spec_change(tmp_path):
    d = tmp_path / "exp"
    run_experiment(tiny_spec(), d)
    with pytest.raises(ContractError):
        run_experiment(tiny_spec(seed=999), d)


def test_run_experiment_parallel_matches_serial(tmp_path):
    spec = tiny_spec()
    d1 = tmp_path / "serial"
    d2 = tmp_path / "parallel"
    run_experiment(spec, d1, workers=1)
    run_experiment(spec, d2, workers=2)
    assert (d1 / "results.csv").read_bytes() == (d2 / "results.csv").read_bytes()


def test_learning_speed_writes_curves(tmp_path):
    spec = tiny_spec(sweep="learning_speed", values=(0,), trials=1,
                     n_iters=4, curve_every=2, curve_instances=1)
    run_experiment(spec, tmp_path / "ls")
    lines = (tmp_path / "ls" / "learning_speed.csv").read_text().splitlines()
    assert lines[0] == "# graphbench learning curve v1"
    assert lines[1] == "architecture,trial,seconds,accuracy"
    assert len(lines) == 2 + 2  # snapshots at iterations 2 and 4
    for row in lines[2:]:
        arch, trial, seconds, acc = row.split(",")
        assert arch == "commnet"
        assert 0.0 <= float(acc) <= 1.0


def test_measure_batch_time_reports_median():
    cfg = ModelConfig(arch="commnet", n_layers=1, hidden_dim=8,
                      input_dim=3, n_classes=2, inner_steps=1)
    rec = measure_batch_time(cfg, "matching", 0.1, seed=0, n_graphs=2, repeats=3)
    assert rec["n_graphs"] == 2
    assert len(rec["repeat_ms"]) == 3
    assert rec["batch_time_ms"] == float(np.median(rec["repeat_ms"]))
    assert rec["batch_time_ms"] > 0.0


def test_dirichlet_baseline_summary():
    rec = run_dirichlet_baseline(0.1, n_instances=2, seed=0)
    assert rec["schema"] == "graphbench-dirichlet v1"
    assert len(rec["accuracies"]) == 2
    assert 0.0 <= rec["accuracy_mean"] <= 1.0
