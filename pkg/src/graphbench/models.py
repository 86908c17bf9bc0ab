"""Graph architectures behind one layer interface.

Every layer maps (node features n x H, adjacency) -> node features n x H,
so layers stack to any depth and the identity skip connection is always
shape-compatible. Three layer families are recurrent (they run
``inner_steps`` update iterations inside each layer); three are
single-pass convolutions.

    vrnn       h_i <- sum_j A sigma(B sigma(U x_i + V h_j)),  h(0) = 0
    ggnn       GRU cell driven by the neighbor sum,            h(0) = x
    glstm      LSTM cell with per-edge forget gates,           h(0) = c(0) = 0
    commnet    ReLU(U h_i + sum_j V h_j)
    edge_gcn   ReLU(sum_j eta_ij * V h_j)
    gated_gcn  ReLU(U h_i + sum_j eta_ij * V h_j)

with edge gates eta_ij = sigmoid(A h_i + B h_j). Neighbor-transform biases
are added once per node after aggregation, which keeps gated_gcn with all
gates forced to one bit-for-bit equal to commnet.
"""

import json
from dataclasses import asdict, dataclass

import numpy as np

from .adjacency import SparseAdjacency
from .errors import BudgetError, ContractError
from .tensor import (
    Tensor,
    add,
    batch_norm,
    bias_add,
    gather_rows,
    gated_neighbor_sum,
    hadamard,
    matmul,
    neighbor_sum,
    one_minus,
    relu,
    scatter_rows,
    sigmoid,
    sum_all,
    tanh,
)

ARCHITECTURES = ("vrnn", "ggnn", "glstm", "commnet", "edge_gcn", "gated_gcn")
RECURRENT_ARCHITECTURES = ("vrnn", "ggnn", "glstm")

# weight-matrix count per layer, used by the closed-form parameter count
_LINEARS_PER_LAYER = {
    "vrnn": 4,
    "ggnn": 6,
    "glstm": 8,
    "commnet": 2,
    "edge_gcn": 3,
    "gated_gcn": 4,
}


@dataclass(frozen=True)
class ModelConfig:
    arch: str
    n_layers: int
    hidden_dim: int
    input_dim: int
    n_classes: int
    inner_steps: int = 3
    residual: bool = True
    use_norm: bool = True

    def __post_init__(self):
        if self.arch not in ARCHITECTURES:
            raise ContractError(f"unknown architecture {self.arch!r}")
        if self.n_layers < 1 or self.hidden_dim < 1:
            raise ContractError("n_layers and hidden_dim must be >= 1")
        if self.inner_steps < 1:
            raise ContractError("inner_steps must be >= 1")

    def to_json(self):
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text):
        return cls(**json.loads(text))


class Linear:
    """Dense map x @ W + b, initialized uniform in +-1/sqrt(fan_in)."""

    def __init__(self, rng, in_dim, out_dim):
        bound = 1.0 / np.sqrt(in_dim)
        self.weight = Tensor(rng.uniform(-bound, bound, (in_dim, out_dim)),
                             requires_grad=True)
        self.bias = Tensor(rng.uniform(-bound, bound, out_dim), requires_grad=True)

    def __call__(self, x):
        return bias_add(matmul(x, self.weight), self.bias)

    def named_tensors(self):
        return [("weight", self.weight), ("bias", self.bias)]

    def named_buffers(self):
        return []


class BatchNorm:
    """Per-feature normalization over the nodes of the current graph.

    Modes: "train" normalizes with the graph's own statistics and updates
    the running buffers; "batch" normalizes the same way without touching
    the buffers (the evaluation default, since the batch is the graph
    itself); "running" normalizes with the stored running statistics.
    """

    def __init__(self, dim):
        self.gamma = Tensor(np.ones(dim), requires_grad=True)
        self.beta = Tensor(np.zeros(dim), requires_grad=True)
        self.running_mean = np.zeros(dim)
        self.running_var = np.ones(dim)

    def __call__(self, x, mode):
        if mode == "train":
            return batch_norm(x, self.gamma, self.beta,
                              self.running_mean, self.running_var, training=True)
        if mode == "batch":
            return batch_norm(x, self.gamma, self.beta,
                              self.running_mean, self.running_var, training=True,
                              update_running=False)
        if mode == "running":
            return batch_norm(x, self.gamma, self.beta,
                              self.running_mean, self.running_var, training=False)
        raise ContractError(f"unknown norm mode {mode!r}")

    def named_tensors(self):
        return [("gamma", self.gamma), ("beta", self.beta)]

    def named_buffers(self):
        return [("running_mean", self.running_mean), ("running_var", self.running_var)]


def edge_gates(h, adj, gate_center, gate_neighbor):
    """Per-edge gate vectors eta_e = sigmoid(A h_dst + B h_src), one row per directed edge."""
    ah = gate_center(h)
    bh = gate_neighbor(h)
    return sigmoid(add(gather_rows(ah, adj.dst), gather_rows(bh, adj.src)))


def residual_wrap(layer_output, layer_input):
    """Identity skip connection: layer_output + layer_input (equal widths)."""
    return add(layer_output, layer_input)


class _Layer:
    def named_modules(self):
        return self._modules

    def named_tensors(self):
        out = []
        for name, mod in self._modules:
            out.extend((f"{name}.{k}", t) for k, t in mod.named_tensors())
        return out

    def named_buffers(self):
        out = []
        for name, mod in self._modules:
            out.extend((f"{name}.{k}", b) for k, b in mod.named_buffers())
        return out


class VrnnLayer(_Layer):
    """Fixed-point iteration of a two-level perceptron over in-edges.

    Starting from h = 0, each step recomputes every node as the sum over
    in-edges of out_map(sigma(mid_map(sigma(input_map(x_dst) + state_map(h_src))))).
    """

    arch = "vrnn"

    def __init__(self, rng, hidden_dim, inner_steps, use_norm=True):
        self.hidden_dim = hidden_dim
        self.inner_steps = inner_steps
        self.input_map = Linear(rng, hidden_dim, hidden_dim)
        self.state_map = Linear(rng, hidden_dim, hidden_dim)
        self.mid_map = Linear(rng, hidden_dim, hidden_dim)
        self.out_map = Linear(rng, hidden_dim, hidden_dim)
        self.norm = BatchNorm(hidden_dim) if use_norm else None
        self._modules = [("input_map", self.input_map), ("state_map", self.state_map),
                         ("mid_map", self.mid_map), ("out_map", self.out_map)]
        if self.norm:
            self._modules.append(("norm", self.norm))

    def __call__(self, x, adj, mode):
        n = x.data.shape[0]
        ux = self.input_map(x)
        ux_dst = gather_rows(ux, adj.dst)
        h = Tensor(np.zeros((n, self.hidden_dim)))
        for _ in range(self.inner_steps):
            vh = self.state_map(h)
            inner = sigmoid(add(ux_dst, gather_rows(vh, adj.src)))
            per_edge = self.out_map(sigmoid(self.mid_map(inner)))
            h = scatter_rows(per_edge, adj.dst, n)
            if self.norm:
                h = self.norm(h, mode)
        return h


class GgnnLayer(_Layer):
    """GRU cell whose neighborhood input is the plain neighbor sum; h starts at x."""

    arch = "ggnn"

    def __init__(self, rng, hidden_dim, inner_steps, use_norm=True):
        self.hidden_dim = hidden_dim
        self.inner_steps = inner_steps
        self.update_in = Linear(rng, hidden_dim, hidden_dim)
        self.update_nb = Linear(rng, hidden_dim, hidden_dim)
        self.reset_in = Linear(rng, hidden_dim, hidden_dim)
        self.reset_nb = Linear(rng, hidden_dim, hidden_dim)
        self.cand_in = Linear(rng, hidden_dim, hidden_dim)
        self.cand_nb = Linear(rng, hidden_dim, hidden_dim)
        self.norm = BatchNorm(hidden_dim) if use_norm else None
        self._modules = [("update_in", self.update_in), ("update_nb", self.update_nb),
                         ("reset_in", self.reset_in), ("reset_nb", self.reset_nb),
                         ("cand_in", self.cand_in), ("cand_nb", self.cand_nb)]
        if self.norm:
            self._modules.append(("norm", self.norm))

    def __call__(self, x, adj, mode):
        h = x
        for _ in range(self.inner_steps):
            agg = neighbor_sum(h, adj)
            if self.norm:
                agg = self.norm(agg, mode)
            z = sigmoid(add(self.update_in(h), self.update_nb(agg)))
            r = sigmoid(add(self.reset_in(h), self.reset_nb(agg)))
            cand = tanh(add(self.cand_in(hadamard(h, r)), self.cand_nb(agg)))
            h = add(hadamard(one_minus(z), h), hadamard(z, cand))
        return h


class GlstmLayer(_Layer):
    """LSTM cell over the neighbor sum with a sigmoid forget gate per edge.

    h and c start at zero each layer; the layer input x feeds every gate at
    every step. Cell mixing uses the neighbors' previous-step cells, so the
    whole node set updates simultaneously.
    """

    arch = "glstm"

    def __init__(self, rng, hidden_dim, inner_steps, use_norm=True):
        self.hidden_dim = hidden_dim
        self.inner_steps = inner_steps
        self.in_gate_in = Linear(rng, hidden_dim, hidden_dim)
        self.in_gate_nb = Linear(rng, hidden_dim, hidden_dim)
        self.out_gate_in = Linear(rng, hidden_dim, hidden_dim)
        self.out_gate_nb = Linear(rng, hidden_dim, hidden_dim)
        self.cell_in = Linear(rng, hidden_dim, hidden_dim)
        self.cell_nb = Linear(rng, hidden_dim, hidden_dim)
        self.forget_in = Linear(rng, hidden_dim, hidden_dim)
        self.forget_nb = Linear(rng, hidden_dim, hidden_dim)
        self.norm = BatchNorm(hidden_dim) if use_norm else None
        self._modules = [("in_gate_in", self.in_gate_in), ("in_gate_nb", self.in_gate_nb),
                         ("out_gate_in", self.out_gate_in), ("out_gate_nb", self.out_gate_nb),
                         ("cell_in", self.cell_in), ("cell_nb", self.cell_nb),
                         ("forget_in", self.forget_in), ("forget_nb", self.forget_nb)]
        if self.norm:
            self._modules.append(("norm", self.norm))

    def __call__(self, x, adj, mode):
        n = x.data.shape[0]
        ui = self.in_gate_in(x)
        uo = self.out_gate_in(x)
        uc = self.cell_in(x)
        uf_dst = gather_rows(self.forget_in(x), adj.dst)
        h = Tensor(np.zeros((n, self.hidden_dim)))
        c = Tensor(np.zeros((n, self.hidden_dim)))
        for _ in range(self.inner_steps):
            agg = neighbor_sum(h, adj)
            if self.norm:
                agg = self.norm(agg, mode)
            gate_in = sigmoid(add(ui, self.in_gate_nb(agg)))
            gate_out = sigmoid(add(uo, self.out_gate_nb(agg)))
            cand = tanh(add(uc, self.cell_nb(agg)))
            forget = sigmoid(add(uf_dst, gather_rows(self.forget_nb(h), adj.src)))
            c = add(hadamard(gate_in, cand), gated_neighbor_sum(c, forget, adj))
            h = hadamard(gate_out, tanh(c))
        return h


class CommnetLayer(_Layer):
    """ReLU(U h_i + sum_j V h_j); the neighbor bias is added once per node."""

    arch = "commnet"

    def __init__(self, rng, hidden_dim, inner_steps=1, use_norm=True):
        self.hidden_dim = hidden_dim
        self.center = Linear(rng, hidden_dim, hidden_dim)
        self.neighbor = Linear(rng, hidden_dim, hidden_dim)
        self.norm = BatchNorm(hidden_dim) if use_norm else None
        self._modules = [("center", self.center), ("neighbor", self.neighbor)]
        if self.norm:
            self._modules.append(("norm", self.norm))

    def __call__(self, h, adj, mode):
        nb = bias_add(neighbor_sum(matmul(h, self.neighbor.weight), adj),
                      self.neighbor.bias)
        pre = add(self.center(h), nb)
        if self.norm:
            pre = self.norm(pre, mode)
        return relu(pre)


class EdgeGcnLayer(_Layer):
    """ReLU(sum_j eta_ij * V h_j) with no center-vertex term."""

    arch = "edge_gcn"

    def __init__(self, rng, hidden_dim, inner_steps=1, use_norm=True):
        self.hidden_dim = hidden_dim
        self.neighbor = Linear(rng, hidden_dim, hidden_dim)
        self.gate_center = Linear(rng, hidden_dim, hidden_dim)
        self.gate_neighbor = Linear(rng, hidden_dim, hidden_dim)
        self.norm = BatchNorm(hidden_dim) if use_norm else None
        self._modules = [("neighbor", self.neighbor), ("gate_center", self.gate_center),
                         ("gate_neighbor", self.gate_neighbor)]
        if self.norm:
            self._modules.append(("norm", self.norm))

    def __call__(self, h, adj, mode, gates=None):
        if gates is None:
            gates = edge_gates(h, adj, self.gate_center, self.gate_neighbor)
        pre = bias_add(gated_neighbor_sum(matmul(h, self.neighbor.weight), gates, adj),
                       self.neighbor.bias)
        if self.norm:
            pre = self.norm(pre, mode)
        return relu(pre)


class GatedGcnLayer(_Layer):
    """ReLU(U h_i + sum_j eta_ij * V h_j), gates computed from this layer's input."""

    arch = "gated_gcn"

    def __init__(self, rng, hidden_dim, inner_steps=1, use_norm=True):
        self.hidden_dim = hidden_dim
        self.center = Linear(rng, hidden_dim, hidden_dim)
        self.neighbor = Linear(rng, hidden_dim, hidden_dim)
        self.gate_center = Linear(rng, hidden_dim, hidden_dim)
        self.gate_neighbor = Linear(rng, hidden_dim, hidden_dim)
        self.norm = BatchNorm(hidden_dim) if use_norm else None
        self._modules = [("center", self.center), ("neighbor", self.neighbor),
                         ("gate_center", self.gate_center),
                         ("gate_neighbor", self.gate_neighbor)]
        if self.norm:
            self._modules.append(("norm", self.norm))

    def __call__(self, h, adj, mode, gates=None):
        if gates is None:
            gates = edge_gates(h, adj, self.gate_center, self.gate_neighbor)
        nb = bias_add(gated_neighbor_sum(matmul(h, self.neighbor.weight), gates, adj),
                      self.neighbor.bias)
        pre = add(self.center(h), nb)
        if self.norm:
            pre = self.norm(pre, mode)
        return relu(pre)


_LAYER_TYPES = {
    "vrnn": VrnnLayer,
    "ggnn": GgnnLayer,
    "glstm": GlstmLayer,
    "commnet": CommnetLayer,
    "edge_gcn": EdgeGcnLayer,
    "gated_gcn": GatedGcnLayer,
}


def _norm_mode(training, use_running_stats):
    if training:
        return "train"
    return "running" if use_running_stats else "batch"


class GraphModel:
    """Input embedding, a stack of identical-width layers, and a linear readout."""

    def __init__(self, config: ModelConfig, seed=0):
        self.config = config
        rng = np.random.default_rng(seed)
        h = config.hidden_dim
        self.embed = Linear(rng, config.input_dim, h)
        layer_cls = _LAYER_TYPES[config.arch]
        self.layers = [layer_cls(rng, h, config.inner_steps, config.use_norm)
                       for _ in range(config.n_layers)]
        self.readout = Linear(rng, h, config.n_classes)

    def forward(self, features, adj: SparseAdjacency, training: bool,
                use_running_stats=False):
        """features: ndarray n x input_dim. Returns logit Tensor n x n_classes.

        training=True normalizes with graph statistics and updates running
        buffers. training=False also normalizes with graph statistics (the
        batch is the graph) but leaves buffers alone; pass
        use_running_stats=True to normalize with the stored running
        statistics instead.
        """
        mode = _norm_mode(training, use_running_stats)
        h = self.embed(Tensor(np.asarray(features, dtype=np.float64)))
        for layer in self.layers:
            out = layer(h, adj, mode)
            h = residual_wrap(out, h) if self.config.residual else out
        return self.readout(h)

    def hidden_states(self, features, adj, training=False, use_running_stats=False):
        """Node features after the last layer, before the readout."""
        mode = _norm_mode(training, use_running_stats)
        h = self.embed(Tensor(np.asarray(features, dtype=np.float64)))
        for layer in self.layers:
            out = layer(h, adj, mode)
            h = residual_wrap(out, h) if self.config.residual else out
        return h

    def named_tensors(self):
        out = [("embed.weight", self.embed.weight), ("embed.bias", self.embed.bias)]
        for i, layer in enumerate(self.layers):
            out.extend((f"layers.{i}.{k}", t) for k, t in layer.named_tensors())
        out.extend([("readout.weight", self.readout.weight),
                    ("readout.bias", self.readout.bias)])
        return out

    def named_buffers(self):
        out = []
        for i, layer in enumerate(self.layers):
            out.extend((f"layers.{i}.{k}", b) for k, b in layer.named_buffers())
        return out

    def parameters(self):
        return dict(self.named_tensors())

    def num_params(self):
        return sum(t.data.size for _, t in self.named_tensors())

    def zero_grads(self):
        for _, t in self.named_tensors():
            t.grad = None

    def save(self, path):
        arrays = {f"param:{k}": t.data for k, t in self.named_tensors()}
        arrays.update({f"buffer:{k}": b for k, b in self.named_buffers()})
        np.savez(path, __config__=np.array(self.config.to_json()), **arrays)

    @classmethod
    def load(cls, path):
        with np.load(path, allow_pickle=False) as blob:
            config = ModelConfig.from_json(str(blob["__config__"]))
            model = cls(config, seed=0)
            params = dict(model.named_tensors())
            buffers = dict(model.named_buffers())
            for key in blob.files:
                if key.startswith("param:"):
                    params[key[6:]].data = blob[key].astype(np.float64)
                elif key.startswith("buffer:"):
                    buf = buffers[key[7:]]
                    buf[...] = blob[key]
        return model


def count_params(config: ModelConfig):
    """Exact learnable-scalar count: weights, biases, and norm affine terms."""
    h = config.hidden_dim
    per_linear = h * h + h
    per_layer = _LINEARS_PER_LAYER[config.arch] * per_linear
    if config.use_norm:
        per_layer += 2 * h
    embed = config.input_dim * h + h
    readout = h * config.n_classes + config.n_classes
    return embed + config.n_layers * per_layer + readout


def solve_hidden_for_budget(arch, n_layers, budget, input_dim, n_classes,
                            use_norm=True):
    """Largest hidden width whose parameter count fits the budget.

    The count is monotone increasing in the width, so bisection applies.
    """

    def count(h):
        return count_params(ModelConfig(arch=arch, n_layers=n_layers, hidden_dim=h,
                                        input_dim=input_dim, n_classes=n_classes,
                                        use_norm=use_norm))

    if count(1) > budget:
        raise BudgetError(
            f"budget {budget} cannot fit {arch} with {n_layers} layers (min {count(1)})"
        )
    hi = 2
    while count(hi) <= budget:
        hi *= 2
    lo = hi // 2  # count(lo) <= budget < count(hi)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if count(mid) <= budget:
            lo = mid
        else:
            hi = mid
    return lo
