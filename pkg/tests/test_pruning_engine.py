import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import operator_norm
from spectral_frg.embedding import EmbeddingConfig, embed_model, embed_spectral
from spectral_frg.errors import ConfigurationError, IntegrityError, ParameterError, ShapeError
from spectral_frg.model_io import (
    DUPLICATE_COPY,
    DUPLICATE_SOURCE,
    Model,
    OperatorDescriptor,
    generate_synthetic,
)
from spectral_frg.pruning_engine import (
    ProbeConfig,
    PruningPlan,
    apply,
    compress_cluster,
    functional_deviation,
    l1_norm,
    largest_param_fraction,
    load_plan,
    plan,
    save_plan,
    score_operators,
)
from spectral_frg.redundancy_graph import build_frg, cluster
from spectral_frg.spectral_core import fs_distance

PROBE = ProbeConfig(radius_R=1.0, n_samples=64, seed=0)


@pytest.fixture(scope="module")
def probe_setup(probe_model):
    g = build_frg(embed_model(probe_model, EmbeddingConfig()), probe_model.names)
    return probe_model, g, cluster(g, 0.1)


def single(w, b=None, act="relu"):
    ops = [OperatorDescriptor("l", "linear", "w", "b" if b is not None else None, activation=act)]
    store = {"w": np.asarray(w, float)}
    if b is not None:
        store["b"] = np.asarray(b, float)
    return Model("m", ops, store)


def test_magnitude_l1():
    assert l1_norm(single([[3.0, -1.0]]), "l") == 4


def test_duplicate_scores_zero(probe_setup):
    model, g, _ = probe_setup
    s = score_operators(g, model, "qmfrg")
    assert s[DUPLICATE_SOURCE] == 0 and s[DUPLICATE_COPY] == 0
    assert all(v > 0 for k, v in s.items() if k not in (DUPLICATE_SOURCE, DUPLICATE_COPY))


def test_random_scores_deterministic(probe_setup):
    model, g, _ = probe_setup
    assert score_operators(g, model, "random", 7) == score_operators(g, model, "random", 7)
    assert score_operators(g, model, "random", 7) != score_operators(g, model, "random", 8)


def test_unknown_strategy(probe_setup):
    model, g, c = probe_setup
    with pytest.raises(ConfigurationError):
        score_operators(g, model, "greedy")
    with pytest.raises(ConfigurationError):
        plan(g, c, model, "greedy", 0.1)


@pytest.mark.parametrize("target", [1.0, 1.5, -0.1])
def test_bad_target(probe_setup, target):
    model, g, c = probe_setup
    with pytest.raises(ParameterError):
        plan(g, c, model, "qmfrg", target)


@pytest.mark.parametrize("strategy", ["qmfrg", "magnitude", "random"])
def test_zero_target_empty(probe_setup, strategy):
    model, g, c = probe_setup
    p = plan(g, c, model, strategy, 0.0)
    assert p.actions == [] and p.achieved_sparsity == 0 and p.deviation_bound == 0
    pruned = apply(p, model)
    assert pruned.names == model.names
    for k, v in model.store.items():
        assert pruned.store[k].tobytes() == v.tobytes()


def test_qmfrg_drops_duplicate_first(probe_setup):
    model, g, c = probe_setup
    p = plan(g, c, model, "qmfrg", 1e-6)
    assert p.dropped == [DUPLICATE_COPY]
    assert p.substitutes == {DUPLICATE_COPY: DUPLICATE_SOURCE}
    assert p.deviation_bound == 0


def test_qmfrg_prefers_duplicates(probe_setup):
    model, g, c = probe_setup
    p = plan(g, c, model, "qmfrg", 0.9)
    mag = l1_norm(model, DUPLICATE_COPY)
    order = p.dropped
    pos = order.index(DUPLICATE_COPY)
    for name in order[:pos]:
        i = g.index(name)
        assert not (g.nearest_distance(i) > 0.1 and l1_norm(model, name) <= 2 * mag)


def test_qmfrg_keeps_last_cluster_member(probe_setup):
    model, g, c = probe_setup
    p = plan(g, c, model, "qmfrg", 0.95)
    assert not {DUPLICATE_SOURCE, DUPLICATE_COPY} <= set(p.dropped)


@settings(max_examples=25, deadline=None)
@given(st.sampled_from(["qmfrg", "magnitude", "random"]), st.floats(0, 0.99), st.floats(0, 0.99),
       st.integers(0, 50))
def test_prefix_and_conservation(strategy, s1, s2, seed):
    model = generate_synthetic("duplicate_probe", 0)
    g = build_frg(embed_model(model, EmbeddingConfig()), model.names)
    c = cluster(g, 0.1)
    lo, hi = sorted((s1, s2))
    a = plan(g, c, model, strategy, lo, seed)
    b = plan(g, c, model, strategy, hi, seed)
    assert b.actions[: len(a.actions)] == a.actions
    for p in (a, b):
        removed = sum(model.param_count(n) for n in p.dropped)
        assert p.removed_params == removed and p.total_params == sum(model.param_count(n) for n in model.names)
        assert p.achieved_sparsity == removed / p.total_params
        assert p.achieved_sparsity <= p.sparsity_target + largest_param_fraction(model)
        assert len(set(p.dropped)) == len(p.dropped)


def test_plan_bytes_deterministic(tmp_path, probe_setup):
    model, g, c = probe_setup
    for i in range(2):
        save_plan(plan(g, c, model, "qmfrg", 0.5, 3, delta=0.2), tmp_path / f"{i}.json")
    assert (tmp_path / "0.json").read_bytes() == (tmp_path / "1.json").read_bytes()
    back = load_plan(tmp_path / "0.json")
    assert back.to_json() == (tmp_path / "0.json").read_text()


def test_plan_document_fields(probe_setup):
    model, g, c = probe_setup
    d = plan(g, c, model, "magnitude", 0.3).to_dict()
    for key in ("strategy", "seed", "sparsity_target", "achieved_sparsity", "actions",
                "deviation_bound", "tool_version"):
        assert key in d


def test_stage_singletons_protected(resnet_model):
    g = build_frg(embed_model(resnet_model, EmbeddingConfig(method="random_feature")), resnet_model.names)
    p = plan(g, cluster(g, 0.1), resnet_model, "magnitude", 0.95)
    assert "conv1" not in p.dropped and "fc" not in p.dropped


def test_drop_duplicate_keeps_surviving_signatures(probe_setup):
    model, g, c = probe_setup
    pruned = apply(plan(g, c, model, "qmfrg", 1e-6), model)
    assert DUPLICATE_COPY not in pruned.names
    for op in pruned.operators:
        a = embed_spectral(op, model.store)
        b = embed_spectral(op, pruned.store)
        assert np.array_equal(a.singular_values, b.singular_values)


def test_apply_rejects_bad_plans(probe_setup):
    model, *_ = probe_setup
    before = {k: v.copy() for k, v in model.store.items()}
    for actions in ([{"action": "drop", "operator": "probe.0"}, {"action": "drop", "operator": "ghost"}],
                    [{"action": "drop", "operator": "probe.0"}, {"action": "truncate", "operator": "probe.0", "rank": 1}],
                    [{"action": "merge", "operator": "probe.0"}]):
        with pytest.raises(IntegrityError):
            apply(PruningPlan("qmfrg", 0.1, 0, actions, 0, 0), model)
    for k, v in before.items():
        assert np.array_equal(model.store[k], v)


def test_truncate_full_rank_reproduces(probe_model):
    name = "probe.5"
    sig = embed_spectral(probe_model.operator(name), probe_model.store)
    q = len(sig)
    out = apply(PruningPlan("qmfrg", 0, 0, [{"action": "truncate", "operator": name, "rank": q}], 0, 0),
                probe_model)
    op = probe_model.operator(name)
    for key in (op.weight_key, op.bias_key):
        a, b = probe_model.store[key], out.store[key]
        assert np.linalg.norm(a - b) <= 1e-10 * np.linalg.norm(a)


def test_truncate_keeps_missing_bias():
    m = single(np.random.default_rng(0).standard_normal((4, 4)))
    out = apply(PruningPlan("qmfrg", 0, 0, [{"action": "truncate", "operator": "l", "rank": 2}], 0, 0), m)
    assert set(out.store) == {"w"}
    assert out.store["w"].shape == (4, 4) and out.store["w"].dtype == m.store["w"].dtype


def test_delta_plan_adds_truncations(probe_setup):
    model, g, c = probe_setup
    p = plan(g, c, model, "qmfrg", 0.2, delta=0.3)
    assert p.truncated
    for name, q in p.truncated.items():
        assert name not in p.dropped
        assert q < len(embed_spectral(model.operator(name), model.store))
    assert plan(g, c, model, "qmfrg", 0.2, delta=0.0).truncated == {}


def test_compress_cluster_examples():
    # augmented spectrum (sqrt 2.5, sqrt 1.5, 1) has p = (0.5, 0.3, 0.2)
    m = single(np.diag(np.sqrt([2.5, 1.5])))
    assert compress_cluster(["l"], m, 0.3)["rank"] == 2
    act = compress_cluster(["l"], m, 0.0)
    assert act["rank"] == 3 and act["mass_loss"] == 0
    rank1 = single(np.zeros((3, 3)))
    assert compress_cluster(["l"], rank1, 5.0)["rank"] == 1
    with pytest.raises(ParameterError):
        compress_cluster([], m, 0.1)
    with pytest.raises(ParameterError):
        compress_cluster(["l"], m, -1)


def test_compress_cluster_mass_loss_bound():
    m = single(np.random.default_rng(1).standard_normal((6, 6)), np.zeros(6))
    for delta in (0.05, 0.3, 1.0):
        a = compress_cluster(["l"], m, delta)
        assert a["mass_loss"] <= -np.expm1(-delta) + 1e-12


def test_functional_deviation_identical(probe_model):
    s = functional_deviation(probe_model, probe_model, PROBE)
    assert s.mean == s.max == 0 == s.surviving_max


def test_functional_deviation_scaling_oracle():
    rng = np.random.default_rng(3)
    w, b = rng.standard_normal((5, 7)), rng.standard_normal(5)
    a = single(w, b)
    s = functional_deviation(a, single(1.01 * w, b), ProbeConfig(1.0, 500, 0))
    assert 0 <= s.mean <= s.max <= 0.01 * operator_norm(w) + 1e-12
    assert s.max > 0


def test_functional_deviation_shape_error():
    with pytest.raises(ShapeError):
        functional_deviation(single(np.ones((2, 3))), single(np.ones((2, 4))), PROBE)


def test_functional_deviation_uses_substitute(probe_setup):
    model, g, c = probe_setup
    p = plan(g, c, model, "qmfrg", 1e-6)
    s = functional_deviation(model, apply(p, model), PROBE, p.substitutes)
    assert s.per_operator[DUPLICATE_COPY] == (0.0, 0.0)
    # without the substitute the dropped operator is compared with zero
    s0 = functional_deviation(model, apply(p, model), PROBE)
    assert s0.per_operator[DUPLICATE_COPY][1] > 0
