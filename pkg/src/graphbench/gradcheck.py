"""Central-difference validation of every backward rule.

Each check builds a scalar from one op (or one full layer, or a whole
model with its loss), backpropagates, then perturbs every input entry by
+-eps and compares. Errors are relative with a floor of one in the
denominator, so near-zero gradients are compared absolutely.

Run as a library (``run_all``) or through ``graphbench gradcheck``, which
exits nonzero when any check fails.
"""

from dataclasses import dataclass

import numpy as np

from .generators import SbmParams, sbm_generate
from .models import _LAYER_TYPES, GraphModel, ModelConfig
from .tensor import (
    Tape,
    Tensor,
    add,
    backward,
    batch_norm,
    bias_add,
    gather_rows,
    gated_neighbor_sum,
    hadamard,
    matmul,
    neighbor_sum,
    one_minus,
    relu,
    scale,
    scatter_rows,
    sigmoid,
    softmax_cross_entropy,
    sub,
    sum_all,
    tanh,
)
from .training import weighted_loss

DEFAULT_EPS = 1e-5
DEFAULT_TOL = 1e-4


@dataclass
class CheckResult:
    name: str
    max_rel_err: float
    tol: float
    passed: bool


def finite_diff(scalar_fn, arr, eps=DEFAULT_EPS):
    """Central-difference gradient of scalar_fn with respect to arr (in place)."""
    grad = np.zeros_like(arr)
    flat = arr.ravel()
    gflat = grad.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        up = scalar_fn()
        flat[i] = orig - eps
        down = scalar_fn()
        flat[i] = orig
        gflat[i] = (up - down) / (2.0 * eps)
    return grad


def _max_rel_err(analytic, numeric):
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1.0)
    return float(np.max(np.abs(analytic - numeric) / denom))


def run_check(name, forward_fn, wrt, eps=DEFAULT_EPS, tol=DEFAULT_TOL):
    """forward_fn rebuilds the scalar Tensor from the current wrt data."""
    with Tape() as tape:
        loss = forward_fn()
    for _, t in wrt:
        t.grad = None
    backward(loss)
    worst = 0.0
    for _, t in wrt:
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        numeric = finite_diff(lambda: forward_fn().item(), t.data, eps)
        worst = max(worst, _max_rel_err(analytic, numeric))
    return CheckResult(name=name, max_rel_err=worst, tol=tol, passed=worst < tol)


def _param(rng, *shape):
    return Tensor(rng.normal(size=shape), requires_grad=True)


def _away_from_zero(rng, *shape, gap=0.1):
    raw = rng.uniform(gap, 1.0, size=shape)
    sign = np.where(rng.random(shape) < 0.5, -1.0, 1.0)
    return Tensor(raw * sign, requires_grad=True)


def _scalarize(out, proj):
    return sum_all(hadamard(out, proj))


def _test_graph(seed):
    return sbm_generate(SbmParams(0.7, 0.3, (3, 4, 4)), seed)


def op_checks(seed=0):
    """(name, forward_fn, wrt) triples covering every differentiable op."""
    rng = np.random.default_rng(seed)
    checks = []

    x = _param(rng, 4, 3)
    w = _param(rng, 3, 5)
    proj = Tensor(rng.normal(size=(4, 5)))
    checks.append(("matmul", lambda: _scalarize(matmul(x, w), proj),
                   [("x", x), ("w", w)]))

    a = _param(rng, 5, 4)
    b = _param(rng, 5, 4)
    proj2 = Tensor(rng.normal(size=(5, 4)))
    checks.append(("add", lambda: _scalarize(add(a, b), proj2),
                   [("a", a), ("b", b)]))
    checks.append(("sub", lambda: _scalarize(sub(a, b), proj2),
                   [("a", a), ("b", b)]))
    checks.append(("hadamard", lambda: _scalarize(hadamard(a, b), proj2),
                   [("a", a), ("b", b)]))
    checks.append(("scale", lambda: _scalarize(scale(a, -1.7), proj2), [("a", a)]))
    checks.append(("one_minus", lambda: _scalarize(one_minus(a), proj2), [("a", a)]))

    bias = _param(rng, 4)
    checks.append(("bias_add", lambda: _scalarize(bias_add(a, bias), proj2),
                   [("a", a), ("bias", bias)]))

    s = _param(rng, 6, 3)
    proj3 = Tensor(rng.normal(size=(6, 3)))
    checks.append(("sigmoid", lambda: _scalarize(sigmoid(s), proj3), [("s", s)]))
    checks.append(("tanh", lambda: _scalarize(tanh(s), proj3), [("s", s)]))
    r = _away_from_zero(rng, 6, 3)
    checks.append(("relu", lambda: _scalarize(relu(r), proj3), [("r", r)]))
    checks.append(("sum_all", lambda: scale(sum_all(s), 0.5), [("s", s)]))

    g = _param(rng, 6, 4)
    idx = np.array([0, 2, 2, 5, 1, 0, 3])
    proj4 = Tensor(rng.normal(size=(7, 4)))
    checks.append(("gather_rows", lambda: _scalarize(gather_rows(g, idx), proj4),
                   [("g", g)]))
    sc = _param(rng, 7, 4)
    proj5 = Tensor(rng.normal(size=(8, 4)))
    checks.append(("scatter_rows",
                   lambda: _scalarize(scatter_rows(sc, idx, 8), proj5),
                   [("sc", sc)]))

    graph = _test_graph(seed + 1)
    adj = graph.adjacency
    h = _param(rng, graph.n_nodes, 4)
    projn = Tensor(rng.normal(size=(graph.n_nodes, 4)))
    checks.append(("neighbor_sum",
                   lambda: _scalarize(neighbor_sum(h, adj), projn), [("h", h)]))
    gates = Tensor(rng.uniform(0.1, 0.9, size=(adj.n_edges, 4)), requires_grad=True)
    checks.append(("gated_neighbor_sum",
                   lambda: _scalarize(gated_neighbor_sum(h, gates, adj), projn),
                   [("h", h), ("gates", gates)]))

    bx = _param(rng, 7, 4)
    gamma = Tensor(rng.uniform(0.5, 1.5, size=4), requires_grad=True)
    beta = _param(rng, 4)
    projb = Tensor(rng.normal(size=(7, 4)))

    def bn_train():
        return _scalarize(batch_norm(bx, gamma, beta, np.zeros(4), np.ones(4),
                                     training=True), projb)

    checks.append(("batch_norm_train", bn_train,
                   [("x", bx), ("gamma", gamma), ("beta", beta)]))

    run_mean = rng.normal(size=4)
    run_var = rng.uniform(0.5, 2.0, size=4)

    def bn_eval():
        return _scalarize(batch_norm(bx, gamma, beta, run_mean.copy(),
                                     run_var.copy(), training=False), projb)

    checks.append(("batch_norm_eval", bn_eval,
                   [("x", bx), ("gamma", gamma), ("beta", beta)]))

    logits = _param(rng, 8, 3)
    targets = rng.integers(0, 3, size=8)
    weights = rng.uniform(0.5, 2.0, size=3)
    mask = np.ones(8, dtype=bool)
    mask[rng.integers(0, 8, size=2)] = False
    checks.append(("softmax_cross_entropy",
                   lambda: softmax_cross_entropy(logits, targets, weights),
                   [("logits", logits)]))
    checks.append(("softmax_cross_entropy_masked",
                   lambda: softmax_cross_entropy(logits, targets, weights, mask=mask),
                   [("logits", logits)]))
    return checks


def layer_checks(seed=0, hidden=4, inner_steps=2):
    """One full layer of every architecture, norm on, params and input."""
    checks = []
    graph = _test_graph(seed + 2)
    adj = graph.adjacency
    for i, (arch, layer_cls) in enumerate(sorted(_LAYER_TYPES.items())):
        rng = np.random.default_rng(seed + 10 + i)
        layer = layer_cls(rng, hidden, inner_steps, use_norm=True)
        x = _param(rng, graph.n_nodes, hidden)
        proj = Tensor(rng.normal(size=(graph.n_nodes, hidden)))
        wrt = [("x", x)] + layer.named_tensors()

        def forward(layer=layer, x=x, proj=proj):
            return _scalarize(layer(x, adj, "train"), proj)

        checks.append((f"layer_{arch}", forward, wrt))
    return checks


def model_checks(seed=0):
    """End-to-end: residual two-layer model plus the weighted loss."""
    rng = np.random.default_rng(seed + 50)
    graph = _test_graph(seed + 3)
    config = ModelConfig(arch="gated_gcn", n_layers=2, hidden_dim=4,
                         input_dim=5, n_classes=3, residual=True, use_norm=True)
    model = GraphModel(config, seed=seed + 51)
    feats = rng.normal(size=(graph.n_nodes, 5))
    targets = rng.integers(0, 3, size=graph.n_nodes)

    def forward():
        logits = model.forward(feats, graph.adjacency, training=True)
        return weighted_loss(logits, targets, 3)

    return [("model_gated_gcn_loss", forward, model.named_tensors())]


def run_all(seed=0, eps=DEFAULT_EPS, tol=DEFAULT_TOL):
    results = []
    for name, fn, wrt in op_checks(seed) + layer_checks(seed) + model_checks(seed):
        results.append(run_check(name, fn, wrt, eps=eps, tol=tol))
    return results


def main(seed=0, stream=None):
    import sys
    stream = stream or sys.stdout
    results = run_all(seed=seed)
    failed = 0
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        stream.write(f"{status} {r.name}: max rel err {r.max_rel_err:.3e} "
                     f"(tol {r.tol:.0e})\n")
        failed += 0 if r.passed else 1
    stream.write(f"{len(results) - failed}/{len(results)} gradient checks passed\n")
    return 1 if failed else 0
