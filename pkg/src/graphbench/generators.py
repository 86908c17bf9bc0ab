"""Stochastic block model task generators.

Two node-classification tasks on SBM graphs:

* ``matching``: a fixed 20-node pattern graph (drawn once per run) is
  embedded edge-exact into a fresh 10-community host graph; the model must
  label which nodes belong to the pattern. Node inputs are a one-hot code
  of a ternary node signal; the pattern keeps its signal, so the task is
  solvable but the same code values also appear all over the host.
* ``clustering``: a 10-community SBM with exactly one labeled seed node
  per community; the model must propagate the seed labels to everyone
  else. Node inputs are the seed's community one-hot plus an "unlabeled"
  indicator column.

All draws flow through numpy Generators seeded explicitly, so instances
are reproducible byte-for-byte through the text serialization below.
"""

from dataclasses import dataclass

import numpy as np

from .adjacency import SparseAdjacency
from .errors import ContractError, InsufficientSamplesError
from .seeding import derive_seed

TASK_MATCHING = "matching"
TASK_CLUSTERING = "clustering"
TASKS = (TASK_MATCHING, TASK_CLUSTERING)

N_SIGNALS = 3
PATTERN_SIZE = 20
PATTERN_INTRA_P = 0.5
HOST_COMMUNITIES = 10
HOST_SIZE_RANGE = (15, 25)
HOST_INTRA_P = 0.5
CLUSTER_COMMUNITIES = 10
CLUSTER_SIZE_RANGE = (5, 25)
CLUSTER_INTRA_P = 0.5


@dataclass(frozen=True)
class SbmParams:
    intra_p: float
    inter_q: float
    community_sizes: tuple

    def __post_init__(self):
        if not (0.0 <= self.inter_q <= 1.0 and 0.0 <= self.intra_p <= 1.0):
            raise ContractError("edge probabilities must lie in [0, 1]")
        if len(self.community_sizes) == 0 or any(s < 1 for s in self.community_sizes):
            raise ContractError("community sizes must be positive")


@dataclass
class Graph:
    n_nodes: int
    adjacency: SparseAdjacency
    signal: np.ndarray
    community: np.ndarray
    n_communities: int


@dataclass
class TaskInstance:
    graph: Graph
    task: str
    targets: np.ndarray
    seed_mask: np.ndarray = None

    @property
    def n_classes(self):
        return 2 if self.task == TASK_MATCHING else CLUSTER_COMMUNITIES

    @property
    def input_dim(self):
        return N_SIGNALS if self.task == TASK_MATCHING else CLUSTER_COMMUNITIES + 1

    def node_features(self):
        """Input encoding: n x 3 signal one-hot (matching) or
        n x 11 seed-label one-hot plus unlabeled flag (clustering)."""
        n = self.graph.n_nodes
        if self.task == TASK_MATCHING:
            return np.eye(N_SIGNALS)[self.graph.signal]
        feats = np.zeros((n, CLUSTER_COMMUNITIES + 1))
        seeded = self.seed_mask
        feats[np.nonzero(seeded)[0], self.targets[seeded]] = 1.0
        feats[~seeded, CLUSTER_COMMUNITIES] = 1.0
        return feats


def _sbm_edge_pairs(rng, sizes, intra_p, inter_q):
    """Draw undirected SBM edges block by block.

    Draw order is fixed (each block's internal pairs, then its cross pairs
    against every later block), so a given generator state always yields
    the same graph.
    """
    sizes = np.asarray(sizes, dtype=np.int64)
    starts = np.concatenate(([0], np.cumsum(sizes)))
    chunks = []
    for a in range(len(sizes)):
        ii, jj = np.triu_indices(sizes[a], k=1)
        keep = rng.random(ii.size) < intra_p
        chunks.append(np.column_stack((ii[keep] + starts[a], jj[keep] + starts[a])))
        for b in range(a + 1, len(sizes)):
            mask = rng.random((sizes[a], sizes[b])) < inter_q
            ii, jj = np.nonzero(mask)
            chunks.append(np.column_stack((ii + starts[a], jj + starts[b])))
    pairs = np.concatenate(chunks) if chunks else np.zeros((0, 2), dtype=np.int64)
    community = np.repeat(np.arange(len(sizes)), sizes)
    return pairs, community


def sbm_generate(params: SbmParams, rng_seed):
    """One SBM graph with a uniform ternary signal on every node."""
    rng = np.random.default_rng(rng_seed)
    pairs, community = _sbm_edge_pairs(rng, params.community_sizes,
                                       params.intra_p, params.inter_q)
    n = int(np.sum(params.community_sizes))
    signal = rng.integers(0, N_SIGNALS, size=n)
    adj = SparseAdjacency.from_undirected(n, pairs)
    return Graph(n_nodes=n, adjacency=adj, signal=signal,
                 community=community, n_communities=len(params.community_sizes))


def make_pattern(rng_seed):
    """The 20-node pattern graph: a single dense block plus its signal."""
    params = SbmParams(intra_p=PATTERN_INTRA_P, inter_q=0.0,
                       community_sizes=(PATTERN_SIZE,))
    return sbm_generate(params, rng_seed)


def make_matching_instance(q_noise, rng_seed, pattern=None):
    """Host graph with the pattern embedded as an extra community.

    Pattern edges and signals are copied verbatim; host communities and all
    cross edges (including host-to-pattern, at probability ``q_noise``) are
    fresh draws. Returns (instance, pattern) so callers can reuse the
    pattern across a series of instances.
    """
    rng = np.random.default_rng(rng_seed)
    if pattern is None:
        pattern = make_pattern(derive_seed(rng_seed, "pattern"))
    if pattern.n_nodes != PATTERN_SIZE:
        raise ContractError(f"pattern must have {PATTERN_SIZE} nodes")

    host_sizes = rng.integers(HOST_SIZE_RANGE[0], HOST_SIZE_RANGE[1] + 1,
                              size=HOST_COMMUNITIES)
    host_pairs, host_comm = _sbm_edge_pairs(rng, host_sizes, HOST_INTRA_P, q_noise)
    host_n = int(host_sizes.sum())
    n = host_n + PATTERN_SIZE

    cross = rng.random((host_n, PATTERN_SIZE)) < q_noise
    ci, cj = np.nonzero(cross)
    pattern_pairs = pattern.adjacency.undirected_pairs() + host_n
    pairs = np.concatenate([host_pairs,
                            np.column_stack((ci, cj + host_n)),
                            pattern_pairs])

    signal = np.concatenate([rng.integers(0, N_SIGNALS, size=host_n),
                             pattern.signal])
    community = np.concatenate([host_comm,
                                np.full(PATTERN_SIZE, HOST_COMMUNITIES)])
    targets = np.zeros(n, dtype=np.int64)
    targets[host_n:] = 1

    graph = Graph(n_nodes=n, adjacency=SparseAdjacency.from_undirected(n, pairs),
                  signal=signal, community=community,
                  n_communities=HOST_COMMUNITIES + 1)
    return TaskInstance(graph=graph, task=TASK_MATCHING, targets=targets), pattern


def make_clustering_instance(q_noise, rng_seed):
    """Ten-community SBM with one uniformly chosen seed node per community."""
    rng = np.random.default_rng(rng_seed)
    sizes = rng.integers(CLUSTER_SIZE_RANGE[0], CLUSTER_SIZE_RANGE[1] + 1,
                         size=CLUSTER_COMMUNITIES)
    pairs, community = _sbm_edge_pairs(rng, sizes, CLUSTER_INTRA_P, q_noise)
    n = int(sizes.sum())

    starts = np.concatenate(([0], np.cumsum(sizes)))
    seed_mask = np.zeros(n, dtype=bool)
    for c in range(CLUSTER_COMMUNITIES):
        seed_mask[starts[c] + rng.integers(0, sizes[c])] = True

    graph = Graph(n_nodes=n, adjacency=SparseAdjacency.from_undirected(n, pairs),
                  signal=np.zeros(n, dtype=np.int64), community=community,
                  n_communities=CLUSTER_COMMUNITIES)
    return TaskInstance(graph=graph, task=TASK_CLUSTERING,
                        targets=community.copy(), seed_mask=seed_mask)


# ---------------------------------------------------------------------------
# text serialization (canonical, so equal instances serialize byte-for-byte)

def graph_to_text(graph: Graph):
    lines = ["graphbench-graph v1",
             f"n_nodes {graph.n_nodes}",
             f"n_communities {graph.n_communities}",
             "nodes"]
    for i in range(graph.n_nodes):
        lines.append(f"{graph.signal[i]} {graph.community[i]}")
    lines.append("edges")
    for i, j in graph.adjacency.undirected_pairs():
        lines.append(f"{i} {j}")
    lines.append("end")
    return "\n".join(lines) + "\n"


def instance_to_text(inst: TaskInstance):
    graph = inst.graph
    lines = ["graphbench-instance v1",
             f"task {inst.task}",
             f"n_nodes {graph.n_nodes}",
             f"n_communities {graph.n_communities}",
             "nodes"]
    for i in range(graph.n_nodes):
        seeded = int(inst.seed_mask[i]) if inst.seed_mask is not None else 0
        lines.append(f"{graph.signal[i]} {graph.community[i]} {inst.targets[i]} {seeded}")
    lines.append("edges")
    for i, j in graph.adjacency.undirected_pairs():
        lines.append(f"{i} {j}")
    lines.append("end")
    return "\n".join(lines) + "\n"


def _parse_header(lines, magic, fields):
    if not lines or lines[0] != magic:
        raise ContractError(f"expected header {magic!r}")
    values = {}
    pos = 1
    for name in fields:
        try:
            key, raw = lines[pos].split(" ", 1)
        except (IndexError, ValueError):
            raise ContractError(f"missing header field {name!r}") from None
        if key != name:
            raise ContractError(f"expected field {name!r}, found {key!r}")
        values[name] = raw
        pos += 1
    return values, pos


def _parse_sections(lines, pos, n_nodes, node_width):
    if lines[pos] != "nodes":
        raise ContractError("expected 'nodes' section")
    pos += 1
    rows = []
    for i in range(n_nodes):
        parts = lines[pos + i].split()
        if len(parts) != node_width:
            raise ContractError(f"node line {i} must have {node_width} fields")
        rows.append([int(p) for p in parts])
    pos += n_nodes
    if lines[pos] != "edges":
        raise ContractError("expected 'edges' section")
    pos += 1
    pairs = []
    while lines[pos] != "end":
        parts = lines[pos].split()
        if len(parts) != 2:
            raise ContractError("edge lines must have two fields")
        pairs.append((int(parts[0]), int(parts[1])))
        pos += 1
    node_rows = np.asarray(rows, dtype=np.int64).reshape(n_nodes, node_width)
    pair_arr = np.asarray(pairs, dtype=np.int64).reshape(len(pairs), 2)
    return node_rows, pair_arr


def graph_from_text(text):
    lines = text.splitlines()
    header, pos = _parse_header(lines, "graphbench-graph v1",
                                ["n_nodes", "n_communities"])
    n = int(header["n_nodes"])
    rows, pairs = _parse_sections(lines, pos, n, node_width=2)
    return Graph(n_nodes=n,
                 adjacency=SparseAdjacency.from_undirected(n, pairs),
                 signal=rows[:, 0], community=rows[:, 1],
                 n_communities=int(header["n_communities"]))


def instance_from_text(text):
    lines = text.splitlines()
    header, pos = _parse_header(lines, "graphbench-instance v1",
                                ["task", "n_nodes", "n_communities"])
    task = header["task"]
    if task not in TASKS:
        raise ContractError(f"unknown task {task!r}")
    n = int(header["n_nodes"])
    rows, pairs = _parse_sections(lines, pos, n, node_width=4)
    graph = Graph(n_nodes=n,
                  adjacency=SparseAdjacency.from_undirected(n, pairs),
                  signal=rows[:, 0], community=rows[:, 1],
                  n_communities=int(header["n_communities"]))
    seed_mask = rows[:, 3].astype(bool) if task == TASK_CLUSTERING else None
    return TaskInstance(graph=graph, task=task, targets=rows[:, 2],
                        seed_mask=seed_mask)


def save_instance(inst, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(instance_to_text(inst))


def load_instance(path):
    with open(path, encoding="utf-8") as fh:
        return instance_from_text(fh.read())


def save_graph(graph, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(graph_to_text(graph))


def load_graph(path):
    with open(path, encoding="utf-8") as fh:
        return graph_from_text(fh.read())


# ---------------------------------------------------------------------------
# distribution sanity check

@dataclass
class SbmStats:
    n_graphs: int
    intra_density: float
    inter_density: float
    intra_z: float
    inter_z: float
    flags: list


def _z_score(edges, possible, prob):
    if possible == 0:
        return 0.0
    if prob in (0.0, 1.0):
        return 0.0 if edges == possible * prob else float("inf")
    mean = possible * prob
    sd = np.sqrt(possible * prob * (1.0 - prob))
    return float((edges - mean) / sd)


def validate_sbm_stats(graphs, intra_p, inter_q, min_samples=100):
    """Pooled intra/inter edge-density check against the target probabilities.

    Densities are binomial proportions, so the pooled z-scores should stay
    small; |z| > 4 raises a flag rather than an exception because a single
    extreme draw is legitimate.
    """
    if len(graphs) < min_samples:
        raise InsufficientSamplesError(
            f"need at least {min_samples} graphs, got {len(graphs)}")
    intra_edges = inter_edges = 0
    intra_possible = inter_possible = 0
    for g in graphs:
        pairs = g.adjacency.undirected_pairs()
        if pairs.size:
            same = g.community[pairs[:, 0]] == g.community[pairs[:, 1]]
            intra_edges += int(same.sum())
            inter_edges += int((~same).sum())
        sizes = np.bincount(g.community, minlength=g.n_communities)
        block_pairs = int((sizes * (sizes - 1) // 2).sum())
        intra_possible += block_pairs
        inter_possible += g.n_nodes * (g.n_nodes - 1) // 2 - block_pairs
    intra_z = _z_score(intra_edges, intra_possible, intra_p)
    inter_z = _z_score(inter_edges, inter_possible, inter_q)
    flags = []
    if abs(intra_z) > 4.0:
        flags.append(f"intra-community density off target (z={intra_z:.2f})")
    if abs(inter_z) > 4.0:
        flags.append(f"inter-community density off target (z={inter_z:.2f})")
    return SbmStats(
        n_graphs=len(graphs),
        intra_density=intra_edges / max(intra_possible, 1),
        inter_density=inter_edges / max(inter_possible, 1),
        intra_z=intra_z,
        inter_z=inter_z,
        flags=flags,
    )
