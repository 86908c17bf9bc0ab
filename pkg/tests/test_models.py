import numpy as np
import pytest

from graphbench.adjacency import SparseAdjacency
from graphbench.errors import BudgetError, ContractError
from graphbench.generators import SbmParams, sbm_generate
from graphbench.models import (
    ARCHITECTURES,
    CommnetLayer,
    GatedGcnLayer,
    GgnnLayer,
    GlstmLayer,
    GraphModel,
    ModelConfig,
    VrnnLayer,
    count_params,
    residual_wrap,
    solve_hidden_for_budget,
)
from graphbench.tensor import Tensor


def small_graph(seed=0):
    return sbm_generate(SbmParams(0.6, 0.3, (4, 4, 4)), seed)


def config_for(arch, **kw):
    base = dict(arch=arch, n_layers=2, hidden_dim=6, input_dim=5, n_classes=3,
                inner_steps=2, residual=True, use_norm=True)
    base.update(kw)
    return ModelConfig(**base)


def test_config_validation():
    with pytest.raises(ContractError):
        ModelConfig(arch="transformer", n_layers=1, hidden_dim=4,
                    input_dim=3, n_classes=2)
    with pytest.raises(ContractError):
        config_for("ggnn", inner_steps=0)
    with pytest.raises(ContractError):
        config_for("ggnn", n_layers=0)


def test_count_params_matches_constructed_model():
    for arch in ARCHITECTURES:
        for use_norm in (True, False):
            cfg = config_for(arch, use_norm=use_norm)
            model = GraphModel(cfg, seed=1)
            assert model.num_params() == count_params(cfg), arch


def test_budget_solver_maximal():
    for arch in ARCHITECTURES:
        for budget in (25_000, 100_000):
            h = solve_hidden_for_budget(arch, 6, budget, 11, 10)
            below = count_params(config_for(arch, n_layers=6, hidden_dim=h,
                                            input_dim=11, n_classes=10))
            above = count_params(config_for(arch, n_layers=6, hidden_dim=h + 1,
                                            input_dim=11, n_classes=10))
            assert below <= budget < above, (arch, budget, h)


def test_budget_solver_infeasible():
    with pytest.raises(BudgetError):
        solve_hidden_for_budget("glstm", 6, 10, 11, 10)


def test_init_is_deterministic_and_in_bounds():
    cfg = config_for("gated_gcn")
    a = GraphModel(cfg, seed=3)
    b = GraphModel(cfg, seed=3)
    for (name, ta), (_, tb) in zip(a.named_tensors(), b.named_tensors()):
        assert np.array_equal(ta.data, tb.data), name
    bound = 1.0 / np.sqrt(cfg.hidden_dim)
    w = dict(a.named_tensors())["layers.0.center.weight"].data
    assert np.abs(w).max() <= bound


def permute_instance(graph, feats, perm):
    pos = np.argsort(perm)  # old index -> new index
    pairs = graph.adjacency.undirected_pairs()
    new_pairs = np.sort(np.column_stack((pos[pairs[:, 0]], pos[pairs[:, 1]])), axis=1)
    adj = SparseAdjacency.from_undirected(graph.n_nodes, new_pairs)
    return adj, feats[perm]


def test_permutation_equivariance_all_architectures():
    graph = small_graph(2)
    rng = np.random.default_rng(0)
    feats = rng.normal(size=(graph.n_nodes, 5))
    perm = rng.permutation(graph.n_nodes)
    adj_p, feats_p = permute_instance(graph, feats, perm)
    for arch in ARCHITECTURES:
        model = GraphModel(config_for(arch), seed=4)
        base = model.forward(feats, graph.adjacency, training=False).data
        permuted = model.forward(feats_p, adj_p, training=False).data
        assert np.abs(permuted - base[perm]).max() < 1e-10, arch


def test_unit_gates_reduce_gated_to_commnet_bitwise():
    rng = np.random.default_rng(7)
    gated = GatedGcnLayer(rng, 6, use_norm=True)
    plain = CommnetLayer(np.random.default_rng(8), 6, use_norm=True)
    # share the U/V weights and the norm state
    plain.center.weight.data = gated.center.weight.data.copy()
    plain.center.bias.data = gated.center.bias.data.copy()
    plain.neighbor.weight.data = gated.neighbor.weight.data.copy()
    plain.neighbor.bias.data = gated.neighbor.bias.data.copy()
    plain.norm.gamma.data = gated.norm.gamma.data.copy()
    plain.norm.beta.data = gated.norm.beta.data.copy()

    graph = small_graph(3)
    h = Tensor(np.random.default_rng(9).normal(size=(graph.n_nodes, 6)))
    ones = Tensor(np.ones((graph.adjacency.n_edges, 6)))
    out_gated = gated(h, graph.adjacency, "batch", gates=ones)
    out_plain = plain(h, graph.adjacency, "batch")
    assert np.array_equal(out_gated.data, out_plain.data)


def test_ggnn_zero_weights_halves_state_each_step():
    # zero weights and biases: z = r = 0.5, candidate = 0, so h <- 0.5 h
    graph = small_graph(4)
    layer = GgnnLayer(np.random.default_rng(0), 4, inner_steps=3, use_norm=False)
    for _, t in layer.named_tensors():
        t.data[...] = 0.0
    x = Tensor(np.random.default_rng(1).normal(size=(graph.n_nodes, 4)))
    out = layer(x, graph.adjacency, "batch")
    assert np.allclose(out.data, 0.125 * x.data)


def test_glstm_zero_weights_gives_zero_output():
    graph = small_graph(5)
    layer = GlstmLayer(np.random.default_rng(0), 4, inner_steps=2, use_norm=False)
    for _, t in layer.named_tensors():
        t.data[...] = 0.0
    x = Tensor(np.random.default_rng(1).normal(size=(graph.n_nodes, 4)))
    out = layer(x, graph.adjacency, "batch")
    assert np.array_equal(out.data, np.zeros_like(x.data))


def test_commnet_zero_weights_yields_bias_rows():
    graph = small_graph(6)
    layer = CommnetLayer(np.random.default_rng(2), 4, use_norm=False)
    layer.center.weight.data[...] = 0.0
    layer.neighbor.weight.data[...] = 0.0
    x = Tensor(np.random.default_rng(1).normal(size=(graph.n_nodes, 4)))
    out = layer(x, graph.adjacency, "batch")
    expect = np.maximum(layer.center.bias.data + layer.neighbor.bias.data, 0.0)
    assert np.allclose(out.data, np.tile(expect, (graph.n_nodes, 1)))


def test_vrnn_zero_output_map_is_silent():
    graph = small_graph(7)
    layer = VrnnLayer(np.random.default_rng(3), 4, inner_steps=2, use_norm=False)
    layer.out_map.weight.data[...] = 0.0
    layer.out_map.bias.data[...] = 0.0
    x = Tensor(np.random.default_rng(1).normal(size=(graph.n_nodes, 4)))
    out = layer(x, graph.adjacency, "batch")
    assert np.array_equal(out.data, np.zeros_like(x.data))


def test_residual_wrap_and_model_flag():
    a = Tensor(np.ones((2, 3)))
    b = Tensor(np.full((2, 3), 2.0))
    assert np.array_equal(residual_wrap(a, b).data, np.full((2, 3), 3.0))

    graph = small_graph(8)
    feats = np.random.default_rng(2).normal(size=(graph.n_nodes, 5))
    for residual in (True, False):
        cfg = config_for("commnet", residual=residual, use_norm=False)
        model = GraphModel(cfg, seed=5)
        for i in range(cfg.n_layers):
            for _, t in model.layers[i].named_tensors():
                t.data[...] = 0.0  # silent layers: output relu(0) = 0
        got = model.forward(feats, graph.adjacency, training=False).data
        h = model.embed(Tensor(feats)).data
        if residual:
            expect = h @ model.readout.weight.data + model.readout.bias.data
        else:
            expect = np.tile(model.readout.bias.data, (graph.n_nodes, 1))
        assert np.allclose(got, expect), residual


def test_embed_and_readout_bias_rows_on_zero_input():
    cfg = config_for("commnet")
    model = GraphModel(cfg, seed=6)
    zero = Tensor(np.zeros((4, cfg.input_dim)))
    out = model.embed(zero)
    assert np.allclose(out.data, np.tile(model.embed.bias.data, (4, 1)))


def test_checkpoint_roundtrip_exact(tmp_path):
    graph = small_graph(9)
    feats = np.random.default_rng(3).normal(size=(graph.n_nodes, 5))
    for arch in ("gated_gcn", "glstm"):
        cfg = config_for(arch)
        model = GraphModel(cfg, seed=7)
        # make running buffers non-trivial before saving
        model.forward(feats, graph.adjacency, training=True)
        path = tmp_path / f"{arch}.npz"
        model.save(path)
        loaded = GraphModel.load(path)
        assert loaded.config == cfg
        for (name, ta), (_, tb) in zip(model.named_tensors(),
                                       loaded.named_tensors()):
            assert np.array_equal(ta.data, tb.data), name
        for (name, ba), (_, bb) in zip(model.named_buffers(),
                                       loaded.named_buffers()):
            assert np.array_equal(ba, bb), name
        a = model.forward(feats, graph.adjacency, training=False,
                          use_running_stats=True).data
        b = loaded.forward(feats, graph.adjacency, training=False,
                           use_running_stats=True).data
        assert np.array_equal(a, b)


def test_recurrent_layers_run_inner_steps():
    # same weights, different inner step counts: outputs must differ
    graph = small_graph(10)
    x = Tensor(np.random.default_rng(4).normal(size=(graph.n_nodes, 4)))
    one = GgnnLayer(np.random.default_rng(5), 4, inner_steps=1, use_norm=False)
    three = GgnnLayer(np.random.default_rng(5), 4, inner_steps=3, use_norm=False)
    a = one(x, graph.adjacency, "batch").data
    b = three(x, graph.adjacency, "batch").data
    assert not np.allclose(a, b)
