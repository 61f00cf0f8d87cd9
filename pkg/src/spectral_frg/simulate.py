"""Sparsity sweep over the synthetic ResNet-18-like operator set.

For each sparsity and strategy a one-shot plan is built on the redundancy
graph of random-feature embeddings, applied, and probed for functional
deviation. The mean pairwise Fubini-Study distance is a property of the
unpruned operator set, so it repeats on every row.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

from spectral_frg.embedding import EmbeddingConfig, embed_model, embed_spectral
from spectral_frg.model_io import generate_synthetic
from spectral_frg.pruning_engine import STRATEGIES, ProbeConfig, apply, functional_deviation, plan
from spectral_frg.redundancy_graph import build_frg, cluster
from spectral_frg.spectral_core import mean_pairwise_distance

SPARSITIES = (0.50, 0.70, 0.90, 0.95)
CSV_COLUMNS = ("sparsity", "strategy", "mean_fs", "mean_deviation", "max_deviation",
               "achieved_sparsity")


@dataclass(frozen=True)
class SweepRow:
    sparsity: float
    strategy: str
    mean_fs: float
    mean_deviation: float
    max_deviation: float
    achieved_sparsity: float


def run_sweep(seed: int = 0, *, cluster_eps: float = 0.1, probe: ProbeConfig | None = None,
              embedding: EmbeddingConfig | None = None) -> list[SweepRow]:
    probe = probe or ProbeConfig(seed=seed)
    embedding = embedding or EmbeddingConfig(method="random_feature", seed=seed)
    model = generate_synthetic("resnet18_like", seed)
    g = build_frg(embed_model(model, embedding), model.names, embedding.method)
    clusters = cluster(g, cluster_eps)
    mean_fs = mean_pairwise_distance(g.distances)
    signatures = {op.name: embed_spectral(op, model.store) for op in model.operators}
    rows = []
    for s in SPARSITIES:
        for strategy in STRATEGIES:
            p = plan(g, clusters, model, strategy, s, seed, radius_R=probe.radius_R,
                     signatures=signatures)
            stats = functional_deviation(model, apply(p, model), probe, p.substitutes)
            rows.append(SweepRow(s, strategy, mean_fs, stats.mean, stats.max,
                                 p.achieved_sparsity))
    return rows


def _fmt(x: float) -> str:
    return f"{x:.10g}"


def rows_to_csv(rows) -> str:
    out = io.StringIO()
    out.write(",".join(CSV_COLUMNS) + "\n")
    for r in rows:
        out.write(",".join([_fmt(r.sparsity), r.strategy, _fmt(r.mean_fs),
                            _fmt(r.mean_deviation), _fmt(r.max_deviation),
                            _fmt(r.achieved_sparsity)]) + "\n")
    return out.getvalue()


def rows_to_plot_data(rows) -> str:
    """Whitespace columns, one block per strategy separated by two blank lines."""
    blocks = []
    for strategy in STRATEGIES:
        lines = [f"# strategy {strategy}", "# sparsity mean_deviation"]
        lines += [f"{_fmt(r.sparsity)} {_fmt(r.mean_deviation)}"
                  for r in rows if r.strategy == strategy]
        blocks.append("\n".join(lines) + "\n")
    return "\n\n".join(blocks)
