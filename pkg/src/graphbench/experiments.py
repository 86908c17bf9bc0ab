"""Sweep orchestration: many training runs, one results table.

An experiment is a grid of cells (architecture x sweep value x trial).
Each finished cell is written to ``<out>/cells/*.json`` keyed by a hash of
the experiment spec, so an interrupted sweep resumes where it stopped and
a repeated run with the same master seed re-renders every output file
byte-for-byte from the stored cells (wall-clock numbers are measured once
and cached, never re-measured).

Sweep kinds:

    noise           vary inter-community edge probability q
    layers          vary depth L
    budget          vary the parameter budget (width solved per cell)
    inner_steps     vary recurrent steps T inside each layer
    learning_speed  single configuration, record accuracy-vs-time curves

Outputs: ``results.csv`` (architecture, sweep_value, accuracy_mean,
accuracy_std, batch_time_ms), ``summary.json`` (aggregates plus every cell
record with its seed), and for learning_speed sweeps ``learning_speed.csv``.
"""

import hashlib
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .dirichlet import CG_TOL, dirichlet_assign
from .errors import BudgetError, ContractError, SolverError, TrainingDivergedError
from .generators import TASKS, make_clustering_instance
from .models import ARCHITECTURES, GraphModel, ModelConfig, solve_hidden_for_budget
from .seeding import derive_seed
from .tensor import Tape, backward
from .training import (
    TrainSettings,
    accuracy,
    make_instance_fn,
    task_dims,
    train,
    weighted_loss,
)

SWEEP_KINDS = ("noise", "layers", "budget", "inner_steps", "learning_speed")


@dataclass
class ExperimentSpec:
    name: str
    sweep: str
    task: str
    archs: tuple
    values: tuple
    trials: int = 5
    seed: int = 0
    n_iters: int = 5000
    eval_instances: int = 100
    q_noise: float = 0.1
    budget: int = None
    hidden_dim: int = None
    n_layers: int = 6
    inner_steps: int = 3
    residual: bool = True
    use_norm: bool = True
    optimizer: str = "auto"
    learning_rate: float = None
    curve_every: int = 250
    curve_instances: int = 20
    time_batches: bool = True

    def __post_init__(self):
        object.__setattr__(self, "archs", tuple(self.archs))
        object.__setattr__(self, "values", tuple(self.values))
        validate_spec(self)

    def canonical_json(self):
        return json.dumps(asdict(self), sort_keys=True)

    def spec_hash(self):
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()[:16]


def validate_spec(spec):
    if spec.sweep not in SWEEP_KINDS:
        raise ContractError(f"unknown sweep kind {spec.sweep!r}")
    if spec.task not in TASKS:
        raise ContractError(f"unknown task {spec.task!r}")
    for arch in spec.archs:
        if arch not in ARCHITECTURES:
            raise ContractError(f"unknown architecture {arch!r}")
    if not spec.archs:
        raise ContractError("at least one architecture is required")
    if spec.trials < 1:
        raise ContractError("trials must be >= 1")
    if not spec.values:
        raise ContractError("at least one sweep value is required")
    if spec.sweep == "budget":
        if spec.hidden_dim is not None:
            raise ContractError("budget sweeps solve the width; drop hidden_dim")
        if any(int(v) < 1 for v in spec.values):
            raise ContractError("budgets must be positive")
    else:
        if spec.hidden_dim is None and spec.budget is None:
            raise ContractError("set hidden_dim or budget")
    if spec.sweep == "noise" and any(not 0.0 <= float(v) <= 1.0 for v in spec.values):
        raise ContractError("noise values must lie in [0, 1]")
    if spec.sweep in ("layers", "inner_steps") and any(int(v) < 1 for v in spec.values):
        raise ContractError(f"{spec.sweep} values must be >= 1")


def resolve_cell(spec, arch, value, trial):
    """(ModelConfig, TrainSettings) for one grid cell."""
    input_dim, n_classes = task_dims(spec.task)
    q = spec.q_noise
    n_layers = spec.n_layers
    inner = spec.inner_steps
    budget = spec.budget
    if spec.sweep == "noise":
        q = float(value)
    elif spec.sweep == "layers":
        n_layers = int(value)
    elif spec.sweep == "inner_steps":
        inner = int(value)
    elif spec.sweep == "budget":
        budget = int(value)

    if spec.hidden_dim is not None and spec.sweep != "budget":
        hidden = spec.hidden_dim
    else:
        hidden = solve_hidden_for_budget(arch, n_layers, budget,
                                         input_dim, n_classes, spec.use_norm)

    config = ModelConfig(arch=arch, n_layers=n_layers, hidden_dim=hidden,
                         input_dim=input_dim, n_classes=n_classes,
                         inner_steps=inner, residual=spec.residual,
                         use_norm=spec.use_norm)
    settings = TrainSettings(
        task=spec.task, q_noise=q, n_iters=spec.n_iters,
        optimizer=spec.optimizer, learning_rate=spec.learning_rate,
        seed=derive_seed(spec.seed, spec.name, arch, value, trial),
        eval_instances=spec.eval_instances,
        curve_every=spec.curve_every if spec.sweep == "learning_speed" else 0,
        curve_instances=spec.curve_instances)
    return config, settings


def run_single_cell(spec, arch, value, trial):
    """Train one cell and summarize it; failures become error records."""
    base = {
        "schema": "graphbench-cell v1",
        "spec_hash": spec.spec_hash(),
        "arch": arch,
        "sweep_value": value,
        "trial": trial,
    }
    try:
        config, settings = resolve_cell(spec, arch, value, trial)
    except BudgetError as exc:
        base.update({"error": f"BudgetError: {exc}", "seed": None})
        return base
    base["seed"] = settings.seed
    base["model"] = asdict(config)
    try:
        report, _ = train(config, settings)
    except (TrainingDivergedError, SolverError) as exc:
        base.update({"error": f"{type(exc).__name__}: {exc}"})
        return base
    base.update({
        "error": None,
        "optimizer": report.optimizer_kind,
        "initial_lr": report.initial_lr,
        "final_accuracy": report.final_accuracy,
        "final_accuracy_std_instances": report.final_accuracy_std,
        "eval_accuracies": report.eval_accuracies,
        "decay_events": [list(e) for e in report.decay_events],
        "time_per_100_iters_ms": report.time_per_100_iters_ms(),
        "final_rolling_loss": report.rolling_losses()[-1],
        "accuracy_curve": [list(e) for e in report.accuracy_curve],
    })
    return base


def measure_batch_time(config, task, q_noise, seed, n_graphs=100, repeats=3):
    """Median wall time (ms) for forward+backward over a batch of graphs.

    Instances are generated up front; the timed section covers only model
    compute, which is what distinguishes the architectures.
    """
    instance_fn = make_instance_fn(task, q_noise, derive_seed(seed, "timing-data"))
    instances = [instance_fn(derive_seed(seed, "timing", k)) for k in range(n_graphs)]
    model = GraphModel(config, seed=derive_seed(seed, "timing-init"))
    _, n_classes = task_dims(task)
    repeat_ms = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        for inst in instances:
            with Tape() as tape:
                logits = model.forward(inst.node_features(),
                                       inst.graph.adjacency, training=True)
                loss = weighted_loss(logits, inst.targets, n_classes)
            model.zero_grads()
            backward(loss)
        repeat_ms.append((time.perf_counter() - t0) * 1000.0)
    return {"batch_time_ms": float(np.median(repeat_ms)),
            "repeat_ms": repeat_ms, "n_graphs": n_graphs}


# ---------------------------------------------------------------------------
# the resumable store

def _value_token(value):
    return str(value).replace(".", "p").replace("-", "m")


def _cell_path(out_dir, arch, value, trial):
    return os.path.join(out_dir, "cells", f"{arch}-v{_value_token(value)}-t{trial}.json")


def _timing_path(out_dir, arch, value):
    return os.path.join(out_dir, "cells", f"time-{arch}-v{_value_token(value)}.json")


def _write_json(path, payload):
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


def _load_record(path, spec_hash):
    with open(path, encoding="utf-8") as fh:
        rec = json.load(fh)
    if rec.get("spec_hash") != spec_hash:
        raise ContractError(
            f"{path} belongs to a different experiment spec; use a fresh out dir")
    return rec


def _cell_worker(args):
    spec_dict, arch, value, trial = args
    return run_single_cell(ExperimentSpec(**spec_dict), arch, value, trial)


def run_experiment(spec: ExperimentSpec, out_dir, workers=1):
    """Run (or resume) every cell, then render the output files.

    Returns the summary dict that is also written to summary.json.
    """
    os.makedirs(os.path.join(out_dir, "cells"), exist_ok=True)
    spec_path = os.path.join(out_dir, "spec.json")
    if os.path.exists(spec_path):
        with open(spec_path, encoding="utf-8") as fh:
            existing = json.load(fh)
        if existing != json.loads(spec.canonical_json()):
            raise ContractError(
                f"{out_dir} already holds a different experiment; use a fresh dir")
    else:
        _write_json(spec_path, json.loads(spec.canonical_json()))

    spec_hash = spec.spec_hash()
    grid = [(arch, value, trial)
            for arch in spec.archs
            for value in spec.values
            for trial in range(spec.trials)]
    pending = [(a, v, t) for (a, v, t) in grid
               if not os.path.exists(_cell_path(out_dir, a, v, t))]

    if pending and workers > 1:
        args = [(asdict(spec), a, v, t) for (a, v, t) in pending]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for (a, v, t), rec in zip(pending, pool.map(_cell_worker, args)):
                _write_json(_cell_path(out_dir, a, v, t), rec)
    else:
        for a, v, t in pending:
            rec = run_single_cell(spec, a, v, t)
            _write_json(_cell_path(out_dir, a, v, t), rec)

    cells = {(a, v, t): _load_record(_cell_path(out_dir, a, v, t), spec_hash)
             for (a, v, t) in grid}

    timings = {}
    if spec.time_batches:
        for arch in spec.archs:
            for value in spec.values:
                path = _timing_path(out_dir, arch, value)
                if os.path.exists(path):
                    timings[(arch, value)] = _load_record(path, spec_hash)
                    continue
                try:
                    config, _ = resolve_cell(spec, arch, value, 0)
                except BudgetError as exc:
                    rec = {"schema": "graphbench-timing v1", "spec_hash": spec_hash,
                           "arch": arch, "sweep_value": value,
                           "error": f"BudgetError: {exc}"}
                else:
                    rec = measure_batch_time(
                        config, spec.task,
                        spec.q_noise if spec.sweep != "noise" else float(value),
                        seed=derive_seed(spec.seed, spec.name, "timing", arch, value))
                    rec.update({"schema": "graphbench-timing v1",
                                "spec_hash": spec_hash, "arch": arch,
                                "sweep_value": value, "error": None})
                _write_json(path, rec)
                timings[(arch, value)] = rec

    summary = _summarize(spec, cells, timings)
    _write_json(os.path.join(out_dir, "summary.json"), summary)
    _write_results_csv(spec, summary, os.path.join(out_dir, "results.csv"))
    if spec.sweep == "learning_speed":
        _write_curves_csv(spec, cells, os.path.join(out_dir, "learning_speed.csv"))
    return summary


def _summarize(spec, cells, timings):
    groups = []
    for arch in spec.archs:
        for value in spec.values:
            recs = [cells[(arch, value, t)] for t in range(spec.trials)]
            ok = [r for r in recs if r.get("error") is None]
            accs = [r["final_accuracy"] for r in ok]
            timing = timings.get((arch, value), {})
            groups.append({
                "architecture": arch,
                "sweep_value": value,
                "n_trials_ok": len(ok),
                "accuracy_mean": float(np.mean(accs)) if accs else float("nan"),
                "accuracy_std": float(np.std(accs)) if accs else float("nan"),
                "batch_time_ms": timing.get("batch_time_ms", float("nan")),
                "trial_seeds": [r.get("seed") for r in recs],
                "errors": [r["error"] for r in recs if r.get("error")],
            })
    ordered_cells = [cells[(a, v, t)]
                     for a in spec.archs for v in spec.values
                     for t in range(spec.trials)]
    return {
        "schema": "graphbench-experiment v1",
        "spec": json.loads(spec.canonical_json()),
        "spec_hash": spec.spec_hash(),
        "groups": groups,
        "cells": ordered_cells,
    }


def _fmt_float(x, digits=6):
    if isinstance(x, float) and not np.isfinite(x):
        return "nan"
    return f"{x:.{digits}f}"


def _write_results_csv(spec, summary, path):
    lines = ["# graphbench results v1",
             "architecture,sweep_value,accuracy_mean,accuracy_std,batch_time_ms"]
    for g in summary["groups"]:
        lines.append(
            f"{g['architecture']},{g['sweep_value']},"
            f"{_fmt_float(g['accuracy_mean'])},{_fmt_float(g['accuracy_std'])},"
            f"{_fmt_float(g['batch_time_ms'], 3)}")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def _write_curves_csv(spec, cells, path):
    lines = ["# graphbench learning curve v1",
             "architecture,trial,seconds,accuracy"]
    for arch in spec.archs:
        for value in spec.values:
            for t in range(spec.trials):
                rec = cells[(arch, value, t)]
                if rec.get("error") is not None:
                    continue
                for seconds, acc in rec.get("accuracy_curve", []):
                    lines.append(f"{arch},{t},{seconds:.3f},{acc:.6f}")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# spec files

_INT_KEYS = {"trials", "seed", "n_iters", "eval_instances", "budget",
             "hidden_dim", "n_layers", "inner_steps", "curve_every",
             "curve_instances"}
_FLOAT_KEYS = {"q_noise", "learning_rate"}
_BOOL_KEYS = {"residual", "use_norm", "time_batches"}
_STR_KEYS = {"name", "sweep", "task", "optimizer"}


def _parse_number(token):
    try:
        return int(token)
    except ValueError:
        return float(token)


def parse_experiment_text(text):
    """key=value experiment format; '#' starts a comment, lists are comma-split."""
    fields = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ContractError(f"line {lineno}: expected key=value, got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key in fields:
            raise ContractError(f"line {lineno}: duplicate key {key!r}")
        if key == "archs":
            fields[key] = tuple(v.strip() for v in value.split(",") if v.strip())
        elif key == "values":
            fields[key] = tuple(_parse_number(v.strip())
                                for v in value.split(",") if v.strip())
        elif key in _INT_KEYS:
            fields[key] = int(value)
        elif key in _FLOAT_KEYS:
            fields[key] = float(value)
        elif key in _BOOL_KEYS:
            if value not in ("true", "false"):
                raise ContractError(f"line {lineno}: {key} must be true or false")
            fields[key] = value == "true"
        elif key in _STR_KEYS:
            fields[key] = value
        else:
            raise ContractError(f"line {lineno}: unknown key {key!r}")
    if fields.get("sweep") == "learning_speed" and "values" not in fields:
        fields["values"] = (0,)
    missing = {"name", "sweep", "task", "archs", "values"} - set(fields)
    if missing:
        raise ContractError(f"missing required keys: {sorted(missing)}")
    return ExperimentSpec(**fields)


def parse_experiment_file(path):
    with open(path, encoding="utf-8") as fh:
        return parse_experiment_text(fh.read())


# ---------------------------------------------------------------------------
# the non-learned baseline

def run_dirichlet_baseline(q_noise, n_instances, seed, tol=CG_TOL):
    """Mean accuracy of harmonic label propagation on fresh clustering graphs."""
    accs = []
    flagged_total = 0
    for k in range(n_instances):
        inst = make_clustering_instance(q_noise, derive_seed(seed, "dirichlet", k))
        res = dirichlet_assign(inst.graph, inst.seed_mask, inst.targets,
                               n_classes=10, tol=tol)
        accs.append(accuracy(res.assignment, inst.targets))
        flagged_total += int(res.flagged.sum())
    return {
        "schema": "graphbench-dirichlet v1",
        "q_noise": q_noise,
        "n_instances": n_instances,
        "seed": seed,
        "accuracy_mean": float(np.mean(accs)),
        "accuracy_std": float(np.std(accs)),
        "accuracies": accs,
        "flagged_nodes_total": flagged_total,
    }
