"""``spectral-frg`` command-line interface."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from spectral_frg import __version__
from spectral_frg.bound_verifier import (
    AffineOperator,
    counterexample_suite,
    verify_pair,
    violation_fraction,
    write_reports,
)
from spectral_frg.config import RunConfig, load_config
from spectral_frg.embedding import EmbeddingConfig, embed_model, embed_spectral
from spectral_frg.errors import ConfigurationError, SpectralFRGError
from spectral_frg.model_io import (
    generate_synthetic,
    load_model,
    read_cost_table,
    reshape_for_augment,
    save_model,
    write_container,
    write_manifest,
)
from spectral_frg.pruning_engine import STRATEGIES, apply, functional_deviation, plan, save_plan
from spectral_frg.redundancy_graph import build_frg, cluster, save_graph
from spectral_frg.simulate import rows_to_csv, rows_to_plot_data, run_sweep
from spectral_frg.spectral_core import (
    ACTIVATIONS,
    activation,
    fs_distance,
    w2_distance,
    weighted_fs_distance,
)


def _config(args) -> RunConfig:
    return load_config(args.config) if args.config else RunConfig()


def _emit(doc, out=None) -> None:
    text = json.dumps(doc, sort_keys=True, indent=2) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _graph(model, cfg: RunConfig, method: str | None):
    emb = cfg.embedding
    if method is not None:
        emb = EmbeddingConfig(method, emb.bucket_dim, emb.target_dim, emb.seed)
    return build_frg(embed_model(model, emb), model.names, emb.method)


def cmd_generate(args) -> int:
    model = generate_synthetic(args.profile, args.seed)
    save_model(model, args.model, args.manifest)
    print(f"wrote {len(model.operators)} operators to {args.model} and {args.manifest}")
    return 0


def cmd_signature(args) -> int:
    model = load_model(args.model, args.manifest)
    records = []
    for op in model.operators:
        sig = embed_spectral(op, model.store)
        records.append({
            "name": op.name,
            "spectrum": [float(x) for x in sig.singular_values],
            "frobenius_norm": sig.frobenius_norm,
        })
    _emit({"model_name": model.name, "tool_version": __version__, "signatures": records},
          args.out)
    return 0


def cmd_distance(args) -> int:
    cfg = _config(args)
    model = load_model(args.model, args.manifest)
    op_a, op_b = model.operator(args.a), model.operator(args.b)
    sa, sb = embed_spectral(op_a, model.store), embed_spectral(op_b, model.store)
    record = {"a": op_a.name, "b": op_b.name, "fs": fs_distance(sa, sb), "w2": w2_distance(sa, sb)}
    if args.weighted:
        source = args.costs or cfg.cost_table_path
        if source is None:
            raise ConfigurationError("--weighted needs a cost table (--costs or cost_table_path)")
        table = read_cost_table(source)
        record["cost_table"] = table.target
        record["weighted_fs"] = weighted_fs_distance([(sa, sb, op_a.hw_op)], table.costs)
    _emit(record)
    return 0


def cmd_graph(args) -> int:
    cfg = _config(args)
    model = load_model(args.model, args.manifest)
    g = _graph(model, cfg, args.embedding)
    save_graph(g, args.out)
    print(f"graph over {len(g)} operators ({len(g) * (len(g) - 1) // 2} pairs) -> {args.out}")
    return 0


def cmd_cluster(args) -> int:
    cfg = _config(args)
    model = load_model(args.model, args.manifest)
    g = _graph(model, cfg, args.embedding)
    eps = cfg.cluster_eps if args.eps is None else args.eps
    c = cluster(g, eps)
    if args.graph_out:
        save_graph(g, args.graph_out)
    _emit(c.to_dict(), args.out)
    if args.out:
        print(f"{c.n_clusters} clusters at eps={eps} -> {args.out}")
    return 0


def cmd_prune(args) -> int:
    cfg = _config(args)
    model = load_model(args.model, args.manifest)
    g = _graph(model, cfg, args.embedding)
    clusters = cluster(g, cfg.cluster_eps)
    p = plan(g, clusters, model, args.strategy, args.sparsity, args.seed, delta=args.delta,
             radius_R=cfg.probe.radius_R, norm_eq_tolerance=cfg.norm_eq_tolerance)
    pruned = apply(p, model)
    save_plan(p, args.out_plan)
    write_container(pruned.store, args.out_model)
    if args.out_manifest:
        write_manifest(pruned, args.out_manifest)
    stats = functional_deviation(model, pruned, cfg.probe, p.substitutes)
    print(f"achieved_sparsity {p.achieved_sparsity:.10g}")
    print(f"deviation_bound {p.deviation_bound:.10g}")
    print(f"functional_deviation mean {stats.mean:.10g} max {stats.max:.10g}")
    return 0


def cmd_verify_bound(args) -> int:
    cfg = _config(args)
    if args.counterexamples:
        dim, n = args.counterexamples
        act = activation(args.activation or "relu")
        reports = counterexample_suite(dim, n, args.seed, act=act, R=args.radius,
                                       n_samples=args.samples)
    else:
        if not (args.model and args.manifest and args.a and args.b):
            raise ConfigurationError("verify-bound needs --model, --manifest, --a and --b, "
                                     "or --counterexamples DIM N")
        model = load_model(args.model, args.manifest)
        ops = []
        for name in (args.a, args.b):
            w, b = reshape_for_augment(model.operator(name), model.store)
            ops.append(AffineOperator(name, w, b))
        act = activation(args.activation or model.operator(args.a).activation)
        reports = [verify_pair(ops[0], ops[1], act, args.radius, args.samples, args.seed,
                               norm_eq_tolerance=cfg.norm_eq_tolerance)]
    if args.out:
        write_reports(reports, args.out)
    else:
        for r in reports:
            print(json.dumps(r.to_dict(), sort_keys=True))
    n_bad = sum(r.violated for r in reports)
    print(f"{n_bad}/{len(reports)} pairs violate the bound "
          f"(fraction {violation_fraction(reports):.4g})", file=sys.stderr)
    return 0


def cmd_simulate(args) -> int:
    rows = run_sweep(args.seed)
    Path(args.out_csv).write_text(rows_to_csv(rows))
    if args.out_plot:
        Path(args.out_plot).write_text(rows_to_plot_data(rows))
    print(f"{len(rows)} rows -> {args.out_csv}")
    return 0


def _model_args(p, required=True):
    p.add_argument("--model", required=required, help="safetensors container")
    p.add_argument("--manifest", required=required, help="manifest JSON")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spectral-frg", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--config", help="RunConfig JSON file")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a seeded synthetic model")
    p.add_argument("--profile", choices=["resnet18_like", "duplicate_probe"], required=True)
    p.add_argument("--seed", type=int, default=0)
    _model_args(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("signature", help="spectral signature of every operator")
    _model_args(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_signature)

    p = sub.add_parser("distance", help="FS / W2 distance between two operators")
    _model_args(p)
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--weighted", action="store_true", help="also report the cost-weighted FS")
    p.add_argument("--costs", help="cost table file or bundled name (ascend, mlu)")
    p.set_defaults(func=cmd_distance)

    for name, func, help_ in (("graph", cmd_graph, "build the redundancy graph"),
                              ("cluster", cmd_cluster, "cluster the redundancy graph")):
        p = sub.add_parser(name, help=help_)
        _model_args(p)
        p.add_argument("--embedding", choices=["spectral", "random_feature"])
        if name == "cluster":
            p.add_argument("--eps", type=float, help="linkage threshold in radians")
            p.add_argument("--graph-out", dest="graph_out")
            p.add_argument("--out")
        else:
            p.add_argument("--out", required=True)
        p.set_defaults(func=func)

    p = sub.add_parser("prune", help="plan and apply one-shot pruning")
    _model_args(p)
    p.add_argument("--strategy", choices=STRATEGIES, required=True)
    p.add_argument("--sparsity", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--delta", type=float, help="relative-entropy budget for low-rank truncation")
    p.add_argument("--embedding", choices=["spectral", "random_feature"])
    p.add_argument("--out-plan", dest="out_plan", required=True)
    p.add_argument("--out-model", dest="out_model", required=True)
    p.add_argument("--out-manifest", dest="out_manifest")
    p.set_defaults(func=cmd_prune)

    p = sub.add_parser("verify-bound", help="check the deviation bound on operator pairs")
    _model_args(p, required=False)
    p.add_argument("--a")
    p.add_argument("--b")
    p.add_argument("--counterexamples", nargs=2, type=int, metavar=("DIM", "N"))
    p.add_argument("--activation", choices=sorted(ACTIVATIONS))
    p.add_argument("--radius", type=float, default=1.0)
    p.add_argument("--samples", type=int, default=256)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="JSON-lines report file")
    p.set_defaults(func=cmd_verify_bound)

    p = sub.add_parser("simulate", help="sparsity x strategy sweep on the ResNet-18-like set")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-csv", dest="out_csv", required=True)
    p.add_argument("--out-plot", dest="out_plot")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (SpectralFRGError, OSError) as exc:
        print(f"spectral-frg {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
