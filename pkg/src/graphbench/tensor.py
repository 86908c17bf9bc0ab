"""Dense float64 tensors with taped reverse-mode differentiation.

Operations executed inside a ``with Tape() as tape:`` block are recorded
in execution order (which is already topological for define-by-run code);
:func:`backward` replays the tape once, in reverse. Gradients of leaf
tensors accumulate across backward calls until the caller zeroes them.

The tape owns the recorded graph. Tensors hold only a weak reference back
to it, so the graph never forms a reference cycle and is freed by plain
refcounting the moment the tape is dropped; a training loop that rebinds
its tape each iteration runs in constant memory. The flip side: to call
:func:`backward` after the ``with`` block ends, keep the tape bound to a
variable until then.

Outside a tape, the same operations run forward-only with no recording,
which is how evaluation passes avoid autodiff overhead.
"""

import weakref

import numpy as np

from . import kernels
from .errors import (
    ContractError,
    DegenerateBatchError,
    EmptyLossError,
    GraphStructureError,
    ShapeError,
)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_tape", "__weakref__")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._tape = None

    @property
    def shape(self):
        return self.data.shape

    def item(self):
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


class Tape:
    """Ordered record of differentiable operations.

    Each entry is (output tensor, backward rule). Entries are appended in
    execution order, so every operation's inputs appear before it.
    """

    def __init__(self):
        self.ops = []
        self._self_ref = weakref.ref(self)

    def __enter__(self):
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _TAPE_STACK.pop()
        assert popped is self
        return False


_TAPE_STACK = []


def active_tape():
    return _TAPE_STACK[-1] if _TAPE_STACK else None


def _result(data, inputs, make_backward):
    """Create an op result; record a backward rule if a tape is active.

    make_backward is called lazily (only when recording) and must return
    a function mapping the output gradient to calls of acc(input, grad).
    """
    tape = active_tape()
    needs = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=needs)
    if needs:
        out._tape = tape._self_ref
        tape.ops.append((out, make_backward()))
    return out


def backward(loss):
    """Populate .grad on every requires_grad tensor reachable from loss.

    Gradients accumulate into existing .grad buffers; callers zero them
    between steps. Intermediate flow is kept separate per call, so two
    consecutive backwards double leaf gradients exactly.
    """
    if loss.data.size != 1:
        raise ContractError("backward requires a scalar loss")
    tape = loss._tape() if loss._tape is not None else None
    if tape is None:
        raise ContractError(
            "loss is not attached to a live tape; compute it inside "
            "'with Tape() as tape:' and keep the tape bound until backward")
    flows = {}
    holders = {}

    def acc(t, g):
        if not t.requires_grad:
            return
        key = id(t)
        if key in flows:
            flows[key] += g
        else:
            flows[key] = np.array(g, dtype=np.float64)
            holders[key] = t

    acc(loss, np.ones_like(loss.data))
    for out, rule in reversed(tape.ops):
        g = flows.get(id(out))
        if g is None:
            continue
        rule(g, acc)
    for key, g in flows.items():
        t = holders[key]
        if t.grad is None:
            t.grad = g
        else:
            t.grad += g


# ---------------------------------------------------------------------------
# elementwise and linear-algebra ops
# ---------------------------------------------------------------------------


def _check_same_shape(a, b, op):
    if a.data.shape != b.data.shape:
        raise ShapeError(f"{op}: shapes {a.data.shape} and {b.data.shape} differ")


def matmul(a, b):
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.data.shape} x {b.data.shape}")
    data = a.data @ b.data

    def make():
        def rule(g, acc):
            acc(a, g @ b.data.T)
            acc(b, a.data.T @ g)

        return rule

    return _result(data, (a, b), make)


def add(a, b):
    _check_same_shape(a, b, "add")

    def make():
        def rule(g, acc):
            acc(a, g)
            acc(b, g)

        return rule

    return _result(a.data + b.data, (a, b), make)


def sub(a, b):
    _check_same_shape(a, b, "sub")

    def make():
        def rule(g, acc):
            acc(a, g)
            acc(b, -g)

        return rule

    return _result(a.data - b.data, (a, b), make)


def hadamard(a, b):
    _check_same_shape(a, b, "hadamard")

    def make():
        def rule(g, acc):
            acc(a, g * b.data)
            acc(b, g * a.data)

        return rule

    return _result(a.data * b.data, (a, b), make)


def scale(x, c):
    c = float(c)

    def make():
        def rule(g, acc):
            acc(x, g * c)

        return rule

    return _result(x.data * c, (x,), make)


def one_minus(x):
    def make():
        def rule(g, acc):
            acc(x, -g)

        return rule

    return _result(1.0 - x.data, (x,), make)


def bias_add(x, b):
    """Add a length-d bias row to every row of an n x d matrix.

    The only broadcasting the library performs.
    """
    if x.data.ndim != 2 or b.data.ndim != 1 or x.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"bias_add: shapes {x.data.shape} and {b.data.shape}")

    def make():
        def rule(g, acc):
            acc(x, g)
            acc(b, g.sum(axis=0))

        return rule

    return _result(x.data + b.data, (x, b), make)


def sigmoid(x):
    data = 1.0 / (1.0 + np.exp(-x.data))

    def make():
        def rule(g, acc):
            acc(x, g * data * (1.0 - data))

        return rule

    return _result(data, (x,), make)


def tanh(x):
    data = np.tanh(x.data)

    def make():
        def rule(g, acc):
            acc(x, g * (1.0 - data * data))

        return rule

    return _result(data, (x,), make)


def relu(x):
    data = np.maximum(x.data, 0.0)

    def make():
        mask = x.data > 0.0

        def rule(g, acc):
            acc(x, g * mask)

        return rule

    return _result(data, (x,), make)


def sum_all(x):
    def make():
        def rule(g, acc):
            acc(x, np.full_like(x.data, float(g)))

        return rule

    return _result(np.asarray(x.data.sum()), (x,), make)


# ---------------------------------------------------------------------------
# graph aggregation ops (hot path, kernel-backed)
# ---------------------------------------------------------------------------


def gather_rows(x, idx):
    """Select rows x[idx]; gradient scatter-adds back into x."""
    idx = np.asarray(idx, dtype=np.int64)
    if x.data.ndim != 2:
        raise ShapeError("gather_rows expects a 2-d tensor")
    n = x.data.shape[0]
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise ContractError(f"gather_rows: indices must lie in [0, {n})")

    def make():
        def rule(g, acc):
            acc(x, kernels.scatter_rows(g, idx, n))

        return rule

    return _result(x.data[idx], (x,), make)


def scatter_rows(x, idx, n_out):
    """Accumulate row e of x into output row idx[e]."""
    idx = np.asarray(idx, dtype=np.int64)
    if x.data.ndim != 2 or idx.shape[0] != x.data.shape[0]:
        raise ShapeError("scatter_rows: one index per row required")
    if idx.size and (idx.min() < 0 or idx.max() >= n_out):
        raise GraphStructureError("scatter index out of range")

    def make():
        def rule(g, acc):
            acc(x, g[idx])

        return rule

    return _result(kernels.scatter_rows(x.data, idx, n_out), (x,), make)


def neighbor_sum(h, adj):
    """Row i of the result is the sum of h rows over in-neighbors of i."""
    if h.data.ndim != 2:
        raise ShapeError("neighbor_sum expects a 2-d tensor")
    if adj.n_nodes != h.data.shape[0]:
        raise GraphStructureError(
            f"adjacency has {adj.n_nodes} nodes, features have {h.data.shape[0]} rows"
        )
    data = kernels.neighbor_sum(h.data, adj.src, adj.dst, adj.n_nodes)

    def make():
        def rule(g, acc):
            # scatter along reversed edges
            acc(h, kernels.neighbor_sum(g, adj.dst, adj.src, adj.n_nodes))

        return rule

    return _result(data, (h,), make)


def gated_neighbor_sum(h, gates, adj):
    """Row i = sum over in-edges (j -> i) of gates_e * h_j, differentiable in both."""
    if h.data.ndim != 2 or gates.data.ndim != 2:
        raise ShapeError("gated_neighbor_sum expects 2-d tensors")
    if gates.data.shape != (adj.n_edges, h.data.shape[1]):
        raise GraphStructureError(
            f"expected one gate row per edge: {gates.data.shape} vs {adj.n_edges} edges"
        )
    if adj.n_nodes != h.data.shape[0]:
        raise GraphStructureError("adjacency / feature size mismatch")
    data = kernels.gated_neighbor_sum(h.data, gates.data, adj.src, adj.dst, adj.n_nodes)

    def make():
        def rule(g, acc):
            acc(h, kernels.gated_neighbor_sum(g, gates.data, adj.dst, adj.src, adj.n_nodes))
            acc(gates, h.data[adj.src] * g[adj.dst])

        return rule

    return _result(data, (h, gates), make)


# ---------------------------------------------------------------------------
# batch normalization over the node dimension
# ---------------------------------------------------------------------------


def batch_norm(x, gamma, beta, running_mean, running_var, training,
               momentum=0.1, eps=1e-5, update_running=None):
    """Normalize each feature column over nodes, then apply a learned affine.

    Training mode uses the current graph's statistics and updates the
    running buffers in place (momentum 0.1) unless ``update_running`` is
    set to False; inference mode reads the running buffers. The batch is
    the node set of one graph.
    """
    if x.data.ndim != 2:
        raise ShapeError("batch_norm expects a 2-d tensor")
    n = x.data.shape[0]
    if update_running is None:
        update_running = training
    if training:
        if n < 2:
            raise DegenerateBatchError("batch norm needs at least 2 nodes in training mode")
        mean = x.data.mean(axis=0)
        var = x.data.var(axis=0)
        if update_running:
            running_mean *= 1.0 - momentum
            running_mean += momentum * mean
            running_var *= 1.0 - momentum
            running_var += momentum * var
    else:
        mean = running_mean
        var = running_var
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mean) * inv_std
    data = xhat * gamma.data + beta.data

    def make():
        def rule(g, acc):
            acc(gamma, (g * xhat).sum(axis=0))
            acc(beta, g.sum(axis=0))
            gx = g * gamma.data
            if training:
                acc(x, inv_std / n * (
                    n * gx - gx.sum(axis=0) - xhat * (gx * xhat).sum(axis=0)
                ))
            else:
                acc(x, gx * inv_std)

        return rule

    return _result(data, (x, gamma, beta), make)


# ---------------------------------------------------------------------------
# loss
# ---------------------------------------------------------------------------


def softmax_cross_entropy(logits, targets, class_weights, mask=None):
    """Weighted mean of per-node cross-entropy, numerically stabilized.

    targets: int class index per node.
    class_weights: one non-negative weight per class.
    mask: optional boolean per node; False rows are excluded from the mean.
    """
    targets = np.asarray(targets, dtype=np.int64)
    class_weights = np.asarray(class_weights, dtype=np.float64)
    n, n_classes = logits.data.shape
    if targets.shape != (n,):
        raise ShapeError("one target per logit row required")
    if targets.size and (targets.min() < 0 or targets.max() >= n_classes):
        raise ContractError("target class out of range")
    if (class_weights < 0).any() or not (class_weights > 0).any():
        raise ContractError("class weights must be non-negative and not all zero")
    if mask is None:
        mask = np.ones(n, dtype=bool)
    else:
        mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise EmptyLossError("all nodes masked out of the loss")

    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    log_p = shifted - log_z[:, None]
    w = class_weights[targets] * mask
    w_total = w.sum()
    per_node = -log_p[np.arange(n), targets]
    data = np.asarray((w * per_node).sum() / w_total)

    def make():
        def rule(g, acc):
            p = np.exp(log_p)
            p[np.arange(n), targets] -= 1.0
            acc(logits, p * (float(g) * w / w_total)[:, None])

        return rule

    return _result(data, (logits,), make)
