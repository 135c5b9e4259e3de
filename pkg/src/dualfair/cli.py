"""Command-line entry point (``dualfair``).

Every subcommand takes ``--seed``, ``--config`` (a JSON object) and
``--out``.  Values given on the command line win over the config file,
which wins over built-in defaults.  Outputs are written deterministically.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import experiments as ex
from .errors import DualFairError
from .fairembed import TrainConfig, train, write_training_log
from .features import WalkConfig, node2vec_features, read_embedding, write_embedding
from .generators import SyntheticSpec, attach_correlated_attributes, generate
from .graph import dataset_stats, default_attr_path, load_graph, save_graph
from .linegraph import save_line_graph, to_line_graph
from .metrics import fairness_report
from .partition import read_partition, similarity_graph, spectral_clustering, write_partition


def _load_config(path):
    if path is None:
        return {}
    with open(path, encoding="utf-8") as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise DualFairError(f"{path}: config must be a JSON object")
    return cfg


def _write_json(obj, path):
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _pick(args, cfg, name, default=None):
    v = getattr(args, name, None)
    if v is not None:
        return v
    return cfg.get(name, default)


def _graph(args):
    attrs = args.attrs
    if attrs is None:
        guess = default_attr_path(args.edges)
        attrs = str(guess) if guess.exists() else None
    return load_graph(args.edges, attrs, group_column=args.group_column, id_column=args.id_column)


def _truth(path):
    return None if path is None else read_partition(path).assignment


def _pipeline_config(cfg, seed):
    return ex.PipelineConfig.from_dict(cfg.get("pipeline", cfg)).seeded(seed)


# --- subcommands -------------------------------------------------------------


def cmd_generate(args, cfg):
    sizes = _pick(args, cfg, "groups", [100, 100])
    if isinstance(sizes, str):
        sizes = [int(t) for t in sizes.split(",")]
    fields = {k: v for k, v in cfg.items() if k in SyntheticSpec.__dataclass_fields__}
    fields.update(model=_pick(args, cfg, "model", "sbm"), node_count=int(sum(sizes)),
                  group_sizes=tuple(sizes), seed=args.seed)
    for key in ("p_in", "p_out", "mu", "beta"):
        if getattr(args, key) is not None:
            fields[key] = getattr(args, key)
    for key in ("block_sizes", "group_sizes"):
        if isinstance(fields.get(key), list):
            fields[key] = tuple(fields[key])
    g, comms = generate(SyntheticSpec(**fields), return_communities=True)
    dim = int(_pick(args, cfg, "attr_dim", 0))
    if dim > 0:
        g = attach_correlated_attributes(g, dim, float(_pick(args, cfg, "correlation", 0.5)), args.seed)
    out = Path(args.out)
    save_graph(g, out, default_attr_path(out))
    with open(f"{out}.communities", "w", encoding="utf-8") as fh:
        for i, c in enumerate(comms):
            fh.write(f"{i}\t{c}\n")
    print(f"wrote {out} ({g.node_count} nodes, {g.edge_count} edges)")


def cmd_stats(args, cfg):
    _write_json(dataset_stats(_graph(args)).as_dict(), args.out)


def cmd_linegraph(args, cfg):
    lg = to_line_graph(_graph(args))
    save_line_graph(lg, args.out)
    print(f"wrote {args.out} ({lg.graph.node_count} line nodes, {lg.graph.edge_count} edges)")


def cmd_embed(args, cfg):
    g = _graph(args)
    target = _pick(args, cfg, "target", "co")
    if target == "co":
        h, glog, llog = ex.co_embedding(g, _pipeline_config(cfg, args.seed))
        write_training_log(glog, f"{args.out}.graph-log.csv")
        write_training_log(llog, f"{args.out}.line-log.csv")
    else:
        walk = WalkConfig.from_dict({**cfg.get("walk", {}), "seed": args.seed})
        tcfg = TrainConfig.from_dict({**cfg.get("train", {}), "seed": args.seed})
        if target == "line":
            lg = to_line_graph(g)
            g = lg.graph.with_attributes(node2vec_features(lg.graph, walk))
        elif g.attributes is None:
            g = g.with_attributes(node2vec_features(g, walk))
        res = train(g, tcfg)
        h = res.embedding
        write_training_log(res.log, f"{args.out}.log.csv")
    write_embedding(h, args.out, binary=args.binary)


def cmd_partition(args, cfg):
    k = int(_pick(args, cfg, "clusters", 2))
    if args.vanilla:
        p = ex.vanilla_spectral(_graph(args), k, args.seed)
    else:
        h = read_embedding(args.embedding)
        s = similarity_graph(h, int(_pick(args, cfg, "k_nn", 10)))
        p = spectral_clustering(s, k, args.seed, bool(cfg.get("normalized_laplacian", False)))
    write_partition(p, args.out)


def cmd_pipeline(args, cfg):
    g = _graph(args)
    pcfg = _pipeline_config(cfg, args.seed)
    if args.clusters is not None:
        pcfg = ex.PipelineConfig.from_dict({**pcfg.to_dict(), "clusters": args.clusters})
    res = ex.run_pipeline(g, pcfg, _truth(args.truth))
    write_partition(res.partition, args.out)
    _write_json(res.report.to_dict(), f"{args.out}.report.json")
    print(res.report.table())


def cmd_report(args, cfg):
    g = _graph(args)
    rep = fairness_report(g, read_partition(args.partition), _truth(args.truth))
    _write_json(rep.to_dict(), args.out)


def cmd_random_clustering(args, cfg):
    g = _graph(args)
    trials = int(_pick(args, cfg, "trials", 500))
    k_min = int(_pick(args, cfg, "k_min", 2))
    k_max = int(_pick(args, cfg, "k_max", 10))
    res = ex.random_clustering_experiment(g, trials, (k_min, k_max), args.seed)
    ex.write_scatter(res, args.out)
    _write_json({"pearson_r": res.r, "degenerate": res.degenerate, "trials": trials}, f"{args.out}.json")
    print(f"pearson R = {res.r:.6f}" + (" (degenerate)" if res.degenerate else ""))


def cmd_linkpred(args, cfg):
    g = _graph(args)
    res = ex.link_prediction_experiment(g, read_partition(args.partition),
                                        float(_pick(args, cfg, "fraction", 0.15)),
                                        _pick(args, cfg, "communities", "groups"))
    _write_json({
        "modred": {str(c): v for c, v in sorted(res.per_cluster.items())},
        "sum_abs_modred": res.sum_abs,
        "links_added": {str(c): int(len(v)) for c, v in sorted(res.added.items())},
        "skipped": {str(c): v for c, v in sorted(res.skipped.items())},
    }, args.out)


def cmd_export_labels(args, cfg):
    ex.export_pseudo_labels(read_partition(args.partition), args.out)


def cmd_probe(args, cfg):
    h = read_embedding(args.embedding)
    g = _graph(args) if args.edges else None
    labels = ex.load_pseudo_labels(args.labels)
    if labels.max() > 1:
        raise DualFairError("probe labels must be binary; use a two-cluster partition")
    res = ex.linear_probe_classifier(h, labels, None if g is None else g.groups, args.seed,
                                     float(_pick(args, cfg, "test_fraction", 0.3)))
    _write_json({"accuracy": res.accuracy, "delta_sp": res.sp, "delta_eo": res.eo,
                 "test_size": int(len(res.test_index))}, args.out)


# --- parser ------------------------------------------------------------------


def _common(p, out_required=True):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", help="JSON file of default options")
    p.add_argument("--out", required=out_required, help="output path")


def _graph_args(p, required=True):
    p.add_argument("--edges", required=required, help="edge list (u v per line)")
    p.add_argument("--attrs", help="attribute CSV (default: <edges stem>.attrs.csv if present)")
    p.add_argument("--group-column", default="group")
    p.add_argument("--id-column")


def build_parser():
    ap = argparse.ArgumentParser(prog="dualfair", description="Fair graph partitioning toolkit")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="sample a synthetic attributed graph")
    _common(p)
    p.add_argument("--model", choices=("sbm", "ws", "lfr"))
    p.add_argument("--groups", help="comma-separated group sizes, e.g. 200,200")
    p.add_argument("--p-in", dest="p_in", type=float)
    p.add_argument("--p-out", dest="p_out", type=float)
    p.add_argument("--mu", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--attr-dim", dest="attr_dim", type=int)
    p.add_argument("--correlation", type=float)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("stats", help="dataset statistics as JSON")
    _common(p, out_required=False)
    _graph_args(p)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("linegraph", help="write the line graph")
    _common(p)
    _graph_args(p)
    p.set_defaults(func=cmd_linegraph)

    p = sub.add_parser("embed", help="train fair embeddings")
    _common(p)
    _graph_args(p)
    p.add_argument("--target", choices=("co", "graph", "line"))
    p.add_argument("--binary", action="store_true", help="write the compact binary format")
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("partition", help="spectral partition of an embedding")
    _common(p)
    p.add_argument("--embedding")
    p.add_argument("--clusters", type=int)
    p.add_argument("--k-nn", dest="k_nn", type=int)
    p.add_argument("--vanilla", action="store_true", help="cluster the raw adjacency instead")
    _graph_args(p, required=False)
    p.set_defaults(func=cmd_partition)

    p = sub.add_parser("pipeline", help="embed, partition and report in one go")
    _common(p)
    _graph_args(p)
    p.add_argument("--clusters", type=int)
    p.add_argument("--truth", help="partition file with reference labels")
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("report", help="fairness report of a partition")
    _common(p, out_required=False)
    _graph_args(p)
    p.add_argument("--partition", required=True)
    p.add_argument("--truth")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("experiment", help="experiment harnesses")
    esub = p.add_subparsers(dest="experiment", required=True)
    e = esub.add_parser("random-clustering", help="node vs edge balance scatter")
    _common(e)
    _graph_args(e)
    e.add_argument("--trials", type=int)
    e.add_argument("--k-min", dest="k_min", type=int)
    e.add_argument("--k-max", dest="k_max", type=int)
    e.set_defaults(func=cmd_random_clustering)
    e = esub.add_parser("linkpred", help="Adamic-Adar link addition and Modred")
    _common(e)
    _graph_args(e)
    e.add_argument("--partition", required=True)
    e.add_argument("--fraction", type=float)
    e.add_argument("--communities", choices=ex.COMMUNITY_MODES)
    e.set_defaults(func=cmd_linkpred)

    p = sub.add_parser("export-labels", help="write cluster ids as pseudo labels")
    _common(p)
    p.add_argument("--partition", required=True)
    p.set_defaults(func=cmd_export_labels)

    p = sub.add_parser("probe", help="linear probe with fairness gaps")
    _common(p, out_required=False)
    p.add_argument("--embedding", required=True)
    p.add_argument("--labels", required=True, help="pseudo-label file (node, label)")
    _graph_args(p, required=False)
    p.set_defaults(func=cmd_probe)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args, _load_config(args.config))
    except (DualFairError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
