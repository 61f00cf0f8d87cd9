"""One-shot operator-level pruning plans, their application, and deviation probes.

Three strategies rank operators for removal (lowest score first):

``magnitude``
    L1 norm of the weight tensor.
``random``
    a uniform draw from PCG64 seeded with ``(seed, operator index)``.
``qmfrg``
    L1 norm times the operator's distance to its nearest neighbour in the
    redundancy graph, divided by pi/2. Operators with a near-duplicate score
    close to zero and go first.

Operators are dropped whole until the removed parameter fraction reaches the
target. An operator that is the only member of its manifest stage is never
dropped; under ``qmfrg`` the last surviving member of a multi-member cluster
is also kept, so every dropped redundant operator has a stand-in.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Mapping

import numpy as np

from spectral_frg import __version__
from spectral_frg.bound_verifier import AffineOperator, deviations, make_rng, sample_ball
from spectral_frg.embedding import embed_spectral
from spectral_frg.errors import ConfigurationError, IntegrityError, ParameterError, ShapeError
from spectral_frg.model_io import Model, drop_operators, reshape_for_augment
from spectral_frg.redundancy_graph import ClusterAssignment, RedundancyGraph, representatives
from spectral_frg.spectral_core import (
    HALF_PI,
    SpectralSignature,
    activation,
    augment,
    equivalence_bound,
    low_rank_truncate,
    nonzero_rank,
    rank_select,
    spectral_probabilities,
)

STRATEGIES = ("qmfrg", "magnitude", "random")
PLAN_FORMAT = "spectral-frg/pruning-plan"


def _check_strategy(strategy: str) -> None:
    if strategy not in STRATEGIES:
        raise ConfigurationError(f"unknown strategy {strategy!r}; expected one of {list(STRATEGIES)}")


def l1_norm(model: Model, name: str) -> float:
    return float(np.abs(np.asarray(model.store[model.operator(name).weight_key], np.float64)).sum())


def score_operators(g: RedundancyGraph, model: Model, strategy: str, seed: int = 0) -> dict[str, float]:
    _check_strategy(strategy)
    if list(g.node_names) != model.names:
        raise ConfigurationError("graph nodes do not match the model manifest")
    scores = {}
    for i, name in enumerate(model.names):
        if strategy == "random":
            scores[name] = float(make_rng((seed, i)).random())
        elif strategy == "magnitude":
            scores[name] = l1_norm(model, name)
        else:
            scores[name] = l1_norm(model, name) * g.nearest_distance(i) / HALF_PI
    return scores


@dataclass
class PruningPlan:
    strategy: str
    sparsity_target: float
    seed: int
    actions: list[dict]
    achieved_sparsity: float
    deviation_bound: float
    removed_params: int = 0
    total_params: int = 0
    substitutes: dict[str, str | None] = field(default_factory=dict)
    delta: float | None = None
    radius_R: float = 1.0

    @property
    def dropped(self) -> list[str]:
        return [a["operator"] for a in self.actions if a["action"] == "drop"]

    @property
    def truncated(self) -> dict[str, int]:
        return {a["operator"]: a["rank"] for a in self.actions if a["action"] == "truncate"}

    def to_dict(self) -> dict:
        return {
            "format": PLAN_FORMAT,
            "tool_version": __version__,
            "strategy": self.strategy,
            "sparsity_target": self.sparsity_target,
            "seed": self.seed,
            "delta": self.delta,
            "radius_R": self.radius_R,
            "actions": self.actions,
            "substitutes": self.substitutes,
            "achieved_sparsity": self.achieved_sparsity,
            "removed_params": self.removed_params,
            "total_params": self.total_params,
            "deviation_bound": self.deviation_bound,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_dict(cls, d: Mapping) -> "PruningPlan":
        try:
            return cls(
                strategy=d["strategy"],
                sparsity_target=d["sparsity_target"],
                seed=d["seed"],
                actions=list(d["actions"]),
                achieved_sparsity=d["achieved_sparsity"],
                deviation_bound=d["deviation_bound"],
                removed_params=d.get("removed_params", 0),
                total_params=d.get("total_params", 0),
                substitutes=dict(d.get("substitutes", {})),
                delta=d.get("delta"),
                radius_R=d.get("radius_R", 1.0),
            )
        except KeyError as exc:
            raise ConfigurationError(f"plan document missing field {exc}") from None


def save_plan(p: PruningPlan, path) -> None:
    Path(path).write_text(p.to_json())


def load_plan(path) -> PruningPlan:
    return PruningPlan.from_dict(json.loads(Path(path).read_text()))


def _zero_operator_signature(model: Model, name: str) -> SpectralSignature:
    # augment(0) has a single unit singular value from the homogeneous row
    w, _ = reshape_for_augment(model.operator(name), model.store)
    values = np.zeros(min(w.shape) + 1)
    values[0] = 1.0
    return SpectralSignature.from_values(values, "zero")


def compress_cluster(members, model: Model, delta: float, representative: str | None = None) -> dict:
    """Truncate action for the cluster's representative (default: first member).

    The rank is the smallest one keeping spectral mass ``>= exp(-delta)``.
    """
    if not members:
        raise ParameterError("cannot compress an empty cluster")
    if delta < 0:
        raise ParameterError(f"delta must be non-negative, got {delta}")
    rep = representative if representative is not None else members[0]
    sig = embed_spectral(model.operator(rep), model.store)
    q = rank_select(sig, delta)
    loss = float(spectral_probabilities(sig)[q:].sum())
    return {"action": "truncate", "operator": rep, "rank": q, "mass_loss": loss}


def plan(
    g: RedundancyGraph,
    clusters: ClusterAssignment,
    model: Model,
    strategy: str,
    sparsity_target: float,
    seed: int = 0,
    *,
    delta: float | None = None,
    radius_R: float = 1.0,
    norm_eq_tolerance: float = 1e-9,
    signatures: Mapping | None = None,
) -> PruningPlan:
    """Build a one-shot plan.

    ``signatures`` optionally maps operator names to precomputed spectral
    signatures (used for the deviation bound). With ``delta`` set and ``strategy == "qmfrg"``, the surviving
    representative of every cluster additionally gets a low-rank truncation
    when that actually lowers its rank.
    """
    _check_strategy(strategy)
    if not 0 <= sparsity_target < 1:
        raise ParameterError(f"sparsity target must be in [0, 1), got {sparsity_target}")
    scores = score_operators(g, model, strategy, seed)
    names = model.names
    reps = representatives(g, clusters)
    cluster_size = Counter(clusters.labels.values())
    is_rep = {n: reps[clusters.labels[n]] == n and cluster_size[clusters.labels[n]] > 1
              for n in names}

    if strategy == "qmfrg":
        order = sorted(range(len(names)), key=lambda i: (scores[names[i]], is_rep[names[i]], i))
    else:
        order = sorted(range(len(names)), key=lambda i: (scores[names[i]], i))

    params = {n: model.param_count(n) for n in names}
    total = sum(params.values())
    target = Fraction(sparsity_target)
    stage_size = Counter(op.stage for op in model.operators)
    cluster_left = Counter(cluster_size)
    removed = 0
    dropped: list[str] = []
    for i in order:
        if Fraction(removed, total) >= target:
            break
        name = names[i]
        op = model.operators[i]
        c = clusters.labels[name]
        if stage_size[op.stage] == 1:
            continue
        if strategy == "qmfrg" and cluster_size[c] > 1 and cluster_left[c] == 1:
            continue
        dropped.append(name)
        removed += params[name]
        cluster_left[c] -= 1

    sig_cache = dict(signatures or {})

    def sig_of(n):
        if n not in sig_cache:
            sig_cache[n] = embed_spectral(model.operator(n), model.store)
        return sig_cache[n]

    dropped_set = set(dropped)
    substitutes: dict[str, str | None] = {}
    bound = 0.0
    for name in dropped:
        c = clusters.labels[name]
        survivors = [m for m in clusters.members(c) if m not in dropped_set]
        ref = None
        if survivors:
            ref = reps[c] if reps[c] in survivors else min(
                survivors, key=lambda m: (g.distances[g.index(name), g.index(m)], g.index(m)))
        substitutes[name] = ref
        ref_sig = sig_of(ref) if ref is not None else _zero_operator_signature(model, name)
        act = activation(model.operator(name).activation)
        bound += equivalence_bound(sig_of(name), ref_sig, act, radius_R, norm_eq_tolerance)

    actions = [{"action": "drop", "operator": n} for n in dropped]
    if delta is not None and strategy == "qmfrg":
        for c in range(clusters.n_clusters):
            survivors = [m for m in clusters.members(c) if m not in dropped_set]
            if not survivors:
                continue
            rep = reps[c] if reps[c] in survivors else survivors[0]
            act = compress_cluster(survivors, model, delta, representative=rep)
            if act["rank"] < nonzero_rank(sig_of(rep)):
                actions.append(act)

    return PruningPlan(
        strategy=strategy,
        sparsity_target=float(sparsity_target),
        seed=int(seed),
        actions=actions,
        achieved_sparsity=float(Fraction(removed, total)),
        deviation_bound=float(bound),
        removed_params=int(removed),
        total_params=int(total),
        substitutes=substitutes,
        delta=delta,
        radius_R=float(radius_R),
    )


def apply(p: PruningPlan, model: Model) -> Model:
    """Return a new model with the plan's actions applied; the input is untouched.

    Truncated operators are replaced by the de-augmented rank-q reconstruction
    in their original dtype and shape. An operator without a bias tensor
    keeps having none (the reconstructed bias column is discarded).
    """
    seen = set()
    for a in p.actions:
        name = a.get("operator")
        if name not in model.names:
            raise IntegrityError(f"plan action references missing operator {name!r}")
        if name in seen:
            raise IntegrityError(f"plan references operator {name!r} more than once")
        if a.get("action") not in ("drop", "truncate"):
            raise IntegrityError(f"unknown plan action {a.get('action')!r}")
        seen.add(name)

    store = dict(model.store)
    for name, q in p.truncated.items():
        op = model.operator(name)
        w, b = reshape_for_augment(op, model.store)
        approx = low_rank_truncate(augment(w, b), q)
        orig = model.store[op.weight_key]
        store[op.weight_key] = approx.weight.reshape(orig.shape).astype(orig.dtype)
        if op.bias_key is not None:
            store[op.bias_key] = approx.bias.astype(model.store[op.bias_key].dtype)
    return drop_operators(Model(model.name, list(model.operators), store), p.dropped)


@dataclass(frozen=True)
class ProbeConfig:
    radius_R: float = 1.0
    n_samples: int = 64
    seed: int = 0

    def __post_init__(self):
        if not self.radius_R > 0:
            raise ConfigurationError(f"probe radius must be positive, got {self.radius_R}")
        if self.n_samples < 1:
            raise ConfigurationError(f"probe needs at least one sample, got {self.n_samples}")


@dataclass(frozen=True)
class DeviationStats:
    mean: float
    max: float
    surviving_mean: float
    surviving_max: float
    per_operator: dict[str, tuple[float, float]]


def _affine(model: Model, name: str) -> AffineOperator:
    w, b = reshape_for_augment(model.operator(name), model.store)
    return AffineOperator(name, w, b)


def functional_deviation(
    original: Model,
    pruned: Model,
    probe: ProbeConfig,
    substitutes: Mapping[str, str | None] | None = None,
) -> DeviationStats:
    """Sampled output deviation of every original operator.

    Operators present in ``pruned`` are compared with their pruned version.
    Removed operators are compared with their substitute from ``substitutes``
    (inputs and outputs zero-padded as needed), or with the zero operator,
    whose output is ``act(0)``. Samples for operator ``i`` come from
    PCG64 seeded with ``(probe.seed, i)``, uniform in the radius-``R`` ball.
    """
    substitutes = substitutes or {}
    per_op = {}
    all_devs = []
    surv_devs = []
    for i, op in enumerate(original.operators):
        a = _affine(original, op.name)
        if op.name in pruned.names:
            b = _affine(pruned, op.name)
            if b.d_in != a.d_in:
                raise ShapeError(
                    f"operator {op.name!r}: input dimension {a.d_in} vs {b.d_in} after pruning"
                )
        elif substitutes.get(op.name) is not None:
            b = _affine(pruned, substitutes[op.name])
        else:
            b = AffineOperator("zero", np.zeros((a.d_out, a.d_in)))
        x = sample_ball(probe.n_samples, max(a.d_in, b.d_in), probe.radius_R,
                        make_rng((probe.seed, i)))
        dev = deviations(a, b, activation(op.activation), x)
        per_op[op.name] = (float(dev.mean()), float(dev.max()))
        all_devs.append(dev)
        if op.name in pruned.names:
            surv_devs.append(dev)
    flat = np.concatenate(all_devs)
    surv = np.concatenate(surv_devs) if surv_devs else np.zeros(1)
    return DeviationStats(
        mean=float(flat.mean()),
        max=float(flat.max()),
        surviving_mean=float(surv.mean()),
        surviving_max=float(surv.max()),
        per_operator=per_op,
    )


def largest_param_fraction(model: Model) -> float:
    counts = [model.param_count(n) for n in model.names]
    return max(counts) / sum(counts)


__all__ = [
    "DeviationStats",
    "ProbeConfig",
    "PruningPlan",
    "STRATEGIES",
    "apply",
    "compress_cluster",
    "functional_deviation",
    "l1_norm",
    "largest_param_fraction",
    "load_plan",
    "plan",
    "save_plan",
    "score_operators",
]
