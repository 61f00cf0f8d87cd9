"""Which strategy finds the planted duplicate layer first?

Plans one drop on the duplicate_probe model with qmfrg and with the random
strategy over many seeds, and reports how often each removes the copy.
"""

import argparse

from spectral_frg.embedding import EmbeddingConfig, embed_model
from spectral_frg.model_io import DUPLICATE_COPY, generate_synthetic
from spectral_frg.pruning_engine import plan
from spectral_frg.redundancy_graph import build_frg, cluster


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=20)
    args = ap.parse_args()

    model = generate_synthetic("duplicate_probe", 0)
    g = build_frg(embed_model(model, EmbeddingConfig()), model.names)
    c = cluster(g, 0.1)
    target = 1 / sum(model.param_count(n) for n in model.names)

    for strategy in ("qmfrg", "magnitude"):
        p = plan(g, c, model, strategy, target)
        print(f"{strategy:<10} drops {p.dropped} (bound {p.deviation_bound:.4g})")
    hits = sum(plan(g, c, model, "random", target, s).dropped == [DUPLICATE_COPY]
               for s in range(args.seeds))
    print(f"random     drops the duplicate in {hits}/{args.seeds} seeds")


if __name__ == "__main__":
    main()
