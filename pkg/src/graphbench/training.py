"""Single-run training loop and its reporting.

One fresh task instance is generated per iteration (batch size is one
graph), the weighted cross-entropy is backpropagated, and the optimizer
steps. Learning-rate decay is plateau-based: mean loss over consecutive
non-overlapping 100-iteration blocks must keep strictly decreasing,
otherwise the rate is divided by 1.25 (with a 200-iteration cooldown after
each decay and a floor of 1e-6).

Wall-clock numbers are measured once and carried inside the TrainReport;
everything written to disk is rendered from the report, so a report
reloaded from JSON reproduces its CSV and summary byte-for-byte.
"""

import json
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ContractError, TrainingDivergedError
from .generators import (
    TASK_CLUSTERING,
    TASK_MATCHING,
    TASKS,
    make_clustering_instance,
    make_matching_instance,
    make_pattern,
)
from .models import GraphModel, ModelConfig
from .seeding import derive_seed
from .tensor import backward, softmax_cross_entropy, Tape

ADAM_DEFAULT_LR = 0.00075
GLSTM_SGD_LR = {TASK_MATCHING: 0.075, TASK_CLUSTERING: 0.0075}


def task_dims(task):
    """(input_dim, n_classes) for a task name."""
    if task == TASK_MATCHING:
        return 3, 2
    if task == TASK_CLUSTERING:
        return 11, 10
    raise ContractError(f"unknown task {task!r}")


def default_optimizer(arch, task):
    """Per-architecture training defaults: SGD for glstm, Adam otherwise."""
    if arch == "glstm":
        return "sgd", GLSTM_SGD_LR[task]
    return "adam", ADAM_DEFAULT_LR


class Sgd:
    kind = "sgd"

    def __init__(self, lr):
        self.lr = float(lr)

    def step(self, params):
        for _, p in params.items():
            if p.grad is None:
                continue
            p.data -= self.lr * p.grad


class Adam:
    kind = "adam"

    def __init__(self, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = float(lr)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {}
        self.v = {}

    def step(self, params):
        self.t += 1
        correct1 = 1.0 - self.beta1 ** self.t
        correct2 = 1.0 - self.beta2 ** self.t
        for name, p in params.items():
            if p.grad is None:
                continue
            g = p.grad
            m = self.m.setdefault(name, np.zeros_like(p.data))
            v = self.v.setdefault(name, np.zeros_like(p.data))
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p.data -= self.lr * (m / correct1) / (np.sqrt(v / correct2) + self.eps)


def make_optimizer(kind, lr):
    if kind == "adam":
        return Adam(lr)
    if kind == "sgd":
        return Sgd(lr)
    raise ContractError(f"unknown optimizer {kind!r}")


class PlateauSchedule:
    """Divide the rate by 1.25 whenever block-mean loss stops strictly falling.

    Blocks are consecutive non-overlapping windows of ``window`` iterations.
    After a decay the next comparison waits until two fresh blocks exist
    (a ``2 * window`` iteration cooldown), so both sides of the comparison
    are measured at the new rate. The rate never drops below ``floor``.
    """

    def __init__(self, lr0, window=100, factor=1.25, floor=1e-6):
        self.lr = float(lr0)
        self.window = window
        self.factor = factor
        self.floor = floor
        self.block_means = []
        self._last_decay_len = None

    def observe(self, block_mean):
        """Record one completed block; return the new rate if a decay fired."""
        self.block_means.append(float(block_mean))
        if len(self.block_means) < 2:
            return None
        if (self._last_decay_len is not None
                and len(self.block_means) - self._last_decay_len < 2):
            return None
        if self.block_means[-1] < self.block_means[-2]:
            return None
        new_lr = max(self.lr / self.factor, self.floor)
        if new_lr == self.lr:
            return None
        self.lr = new_lr
        self._last_decay_len = len(self.block_means)
        return new_lr


def class_weights_for(targets, n_classes):
    """w_c = n / (n_classes * count_c); absent classes get weight zero."""
    targets = np.asarray(targets)
    counts = np.bincount(targets, minlength=n_classes)
    weights = np.zeros(n_classes)
    present = counts > 0
    weights[present] = targets.size / (n_classes * counts[present])
    return weights


def weighted_loss(logits, targets, n_classes, mask=None):
    """Cross-entropy with inverse-frequency class weights from this graph."""
    weights = class_weights_for(targets, n_classes)
    return softmax_cross_entropy(logits, targets, weights, mask=mask)


def accuracy(logits_or_pred, targets):
    """Mean per-class recall over the classes present in ``targets``."""
    arr = np.asarray(logits_or_pred)
    pred = arr.argmax(axis=1) if arr.ndim == 2 else arr
    targets = np.asarray(targets)
    recalls = []
    for c in np.unique(targets):
        in_class = targets == c
        recalls.append(float((pred[in_class] == c).mean()))
    return float(np.mean(recalls))


def make_instance_fn(task, q_noise, run_seed):
    """Instance generator for one run; matching fixes one pattern per run."""
    if task == TASK_MATCHING:
        pattern = make_pattern(derive_seed(run_seed, "pattern"))
        return lambda seed: make_matching_instance(q_noise, seed, pattern)[0]
    if task == TASK_CLUSTERING:
        return lambda seed: make_clustering_instance(q_noise, seed)
    raise ContractError(f"unknown task {task!r}")


def evaluate(model, instances):
    """Inference-mode accuracy per instance; returns (mean, per-instance list)."""
    accs = []
    for inst in instances:
        logits = model.forward(inst.node_features(), inst.graph.adjacency,
                               training=False)
        accs.append(accuracy(logits.data, inst.targets))
    return float(np.mean(accs)), accs


@dataclass
class TrainSettings:
    task: str
    q_noise: float = 0.1
    n_iters: int = 5000
    optimizer: str = "auto"
    learning_rate: float = None
    seed: int = 0
    eval_instances: int = 100
    curve_every: int = 0
    curve_instances: int = 20

    def __post_init__(self):
        if self.task not in TASKS:
            raise ContractError(f"unknown task {self.task!r}")
        if self.n_iters < 1:
            raise ContractError("n_iters must be >= 1")


@dataclass
class TrainReport:
    config: ModelConfig
    settings: TrainSettings
    optimizer_kind: str
    initial_lr: float
    losses: list
    lrs: list
    elapsed_ms: list
    block_time_ms: list
    decay_events: list
    accuracy_curve: list
    eval_accuracies: list
    final_accuracy: float
    final_accuracy_std: float
    schema: str = field(default="graphbench-train-report v1")

    def rolling_losses(self, window=100):
        out = []
        csum = 0.0
        buf = []
        for v in self.losses:
            buf.append(v)
            csum += v
            if len(buf) > window:
                csum -= buf.pop(0)
            out.append(csum / len(buf))
        return out

    def time_per_100_iters_ms(self):
        if not self.block_time_ms:
            return self.elapsed_ms[-1] if self.elapsed_ms else 0.0
        return float(np.median(self.block_time_ms))

    def to_state(self):
        d = asdict(self)
        d["config"] = asdict(self.config)
        d["settings"] = asdict(self.settings)
        return d

    @classmethod
    def from_state(cls, d):
        d = dict(d)
        d["config"] = ModelConfig(**d["config"])
        d["settings"] = TrainSettings(**d["settings"])
        d["decay_events"] = [tuple(e) for e in d["decay_events"]]
        d["accuracy_curve"] = [tuple(e) for e in d["accuracy_curve"]]
        return cls(**d)


def train(config: ModelConfig, settings: TrainSettings):
    """Run one training job; returns (TrainReport, trained GraphModel)."""
    input_dim, n_classes = task_dims(settings.task)
    if config.input_dim != input_dim or config.n_classes != n_classes:
        raise ContractError(
            f"model dims ({config.input_dim}, {config.n_classes}) do not match "
            f"task {settings.task!r} dims ({input_dim}, {n_classes})")

    run_seed = settings.seed
    model = GraphModel(config, seed=derive_seed(run_seed, "init"))
    params = model.parameters()

    kind, lr0 = (settings.optimizer, settings.learning_rate)
    if kind == "auto":
        kind, auto_lr = default_optimizer(config.arch, settings.task)
        lr0 = auto_lr if lr0 is None else lr0
    elif lr0 is None:
        _, lr0 = default_optimizer(config.arch, settings.task)
    opt = make_optimizer(kind, lr0)
    sched = PlateauSchedule(lr0)

    instance_fn = make_instance_fn(settings.task, settings.q_noise, run_seed)
    curve_set = []
    if settings.curve_every:
        curve_set = [instance_fn(derive_seed(run_seed, "curve", k))
                     for k in range(settings.curve_instances)]

    losses = []
    lrs = []
    elapsed_ms = []
    block_time_ms = []
    decay_events = []
    curve = []
    train_clock = 0.0
    last_block_clock = 0.0

    for it in range(1, settings.n_iters + 1):
        t0 = time.perf_counter()
        inst = instance_fn(derive_seed(run_seed, "train", it))
        # rebinding tape each iteration releases the previous graph
        with Tape() as tape:
            logits = model.forward(inst.node_features(), inst.graph.adjacency,
                                   training=True)
            loss = weighted_loss(logits, inst.targets, n_classes)
        loss_val = loss.item()
        if not np.isfinite(loss_val):
            raise TrainingDivergedError(
                f"non-finite loss at iteration {it}",
                iteration=it, learning_rate=opt.lr)
        model.zero_grads()
        backward(loss)
        opt.step(params)
        train_clock += time.perf_counter() - t0

        losses.append(loss_val)
        lrs.append(opt.lr)
        elapsed_ms.append(train_clock * 1000.0)

        if it % 100 == 0:
            block_time_ms.append(train_clock * 1000.0 - last_block_clock)
            last_block_clock = train_clock * 1000.0
            new_lr = sched.observe(np.mean(losses[-100:]))
            if new_lr is not None:
                opt.lr = new_lr
                decay_events.append((it, new_lr))

        if settings.curve_every and (it % settings.curve_every == 0
                                     or it == settings.n_iters):
            acc, _ = evaluate(model, curve_set)
            curve.append((train_clock, acc))

    eval_insts = [instance_fn(derive_seed(run_seed, "eval", k))
                  for k in range(settings.eval_instances)]
    final_mean, eval_accs = evaluate(model, eval_insts)

    report = TrainReport(
        config=config,
        settings=settings,
        optimizer_kind=kind,
        initial_lr=float(lr0),
        losses=losses,
        lrs=lrs,
        elapsed_ms=elapsed_ms,
        block_time_ms=block_time_ms,
        decay_events=decay_events,
        accuracy_curve=curve,
        eval_accuracies=eval_accs,
        final_accuracy=final_mean,
        final_accuracy_std=float(np.std(eval_accs)),
    )
    return report, model


# ---------------------------------------------------------------------------
# deterministic rendering

def write_series_csv(report: TrainReport, path):
    """Per-iteration series: iteration, loss, rolling_loss, lr, elapsed_ms."""
    rolling = report.rolling_losses()
    lines = ["# graphbench train series v1",
             "iteration,loss,rolling_loss,lr,elapsed_ms"]
    for i in range(len(report.losses)):
        lines.append(f"{i + 1},{report.losses[i]:.17g},{rolling[i]:.17g},"
                     f"{report.lrs[i]:.17g},{report.elapsed_ms[i]:.3f}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def summary_dict(report: TrainReport):
    return {
        "schema": "graphbench-train-summary v1",
        "config": asdict(report.config),
        "settings": asdict(report.settings),
        "optimizer": {"kind": report.optimizer_kind, "lr": report.initial_lr},
        "final_accuracy_mean": report.final_accuracy,
        "final_accuracy_std": report.final_accuracy_std,
        "eval_accuracies": report.eval_accuracies,
        "decay_events": [list(e) for e in report.decay_events],
        "time_per_100_iters_ms": report.time_per_100_iters_ms(),
        "total_train_seconds": (report.elapsed_ms[-1] / 1000.0
                                if report.elapsed_ms else 0.0),
        "accuracy_curve": [list(e) for e in report.accuracy_curve],
        "final_loss_rolling_mean": report.rolling_losses()[-1],
    }


def write_summary_json(report: TrainReport, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(summary_dict(report), fh, indent=2, sort_keys=True)
        fh.write("\n")
