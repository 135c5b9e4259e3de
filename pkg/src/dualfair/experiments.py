"""Experiment harnesses built on the library.

Random-clustering balance study, the end-to-end fair partition pipeline and
its vanilla baseline, pseudo-label export, a linear probe for downstream
fairness gaps, and the Adamic-Adar link-prediction study.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ._rng import stream
from .errors import (ConfigError, DualFairError, InputError, ShapeError, SplitError, StageError,
                     UndefinedMetricError)
from .fairembed import TrainConfig, co_embed, train
from .features import WalkConfig, node2vec_features
from .generators import SyntheticSpec, generate
from .graph import induced_subgraph
from .linegraph import to_line_graph
from .metrics import (Partition, edge_balance, equal_opportunity, fairness_report, modred, node_balance,
                      statistical_parity)
from .partition import SimilarityGraph, read_partition, similarity_graph, spectral_clustering, write_partition

log = logging.getLogger(__name__)


# --- correlation ---------------------------------------------------------------

def pearson(x, y):
    """Sample Pearson correlation; returns ``(r, degenerate)``.

    A zero-variance input makes r undefined; it is reported as 0.0 with
    ``degenerate=True``.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if len(x) != len(y):
        raise ShapeError(f"length mismatch: {len(x)} vs {len(y)}")
    if len(x) < 2:
        raise ShapeError("need at least two points")
    dx, dy = x - x.mean(), y - y.mean()
    sxx, syy = float(dx @ dx), float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        return 0.0, True
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r)), False


# --- random clustering study -----------------------------------------------------

@dataclass(frozen=True)
class ScatterPoint:
    trial: int
    k: int
    min_nb: float
    min_eb: float
    cluster_sizes: tuple


@dataclass
class ScatterResult:
    points: list
    r: float
    degenerate: bool

    @property
    def min_nb(self):
        return np.array([p.min_nb for p in self.points])

    @property
    def min_eb(self):
        return np.array([p.min_eb for p in self.points])


def random_partition(n, k, rng, max_tries=1000):
    """Uniform i.i.d. assignment to ``k`` clusters, redrawn until none is empty.

    When ``k`` is close to ``n`` redraws rarely succeed; after ``max_tries``
    one random node is pinned to each cluster and the rest drawn uniformly.
    """
    if not 1 <= k <= n:
        raise ConfigError(f"cannot split {n} nodes into {k} nonempty clusters")
    for _ in range(max_tries):
        a = rng.integers(k, size=n)
        if len(np.unique(a)) == k:
            return Partition(a)
    log.info("random_partition: falling back to pinned seeds for k=%d, n=%d", k, n)
    a = rng.integers(k, size=n)
    a[rng.permutation(n)[:k]] = np.arange(k)
    return Partition(a)


def random_clustering_experiment(g, trials=500, k_range=(2, 10), seed=0):
    """Min node balance vs min edge balance over random partitions.

    Each trial uses its own stream, draws ``k`` uniformly from the inclusive
    ``k_range`` and assigns nodes uniformly at random.
    """
    if trials < 2:
        raise ConfigError("need at least two trials")
    k_lo, k_hi = k_range
    if not 1 <= k_lo <= k_hi:
        raise ConfigError(f"bad k range {k_range}")
    points = []
    for t in range(trials):
        rng = stream(seed, f"random-clustering/{t}")
        k = int(rng.integers(k_lo, k_hi + 1))
        p = random_partition(g.node_count, k, rng)
        _, min_nb, _ = node_balance(g, p)
        _, min_eb, _ = edge_balance(g, p)
        points.append(ScatterPoint(t, k, min_nb, min_eb, tuple(int(s) for s in p.sizes())))
    r, degenerate = pearson([p.min_nb for p in points], [p.min_eb for p in points])
    return ScatterResult(points, r, degenerate)


def write_scatter(result, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("trial,k,min_nb,min_eb\n")
        for p in result.points:
            fh.write(f"{p.trial},{p.k},{p.min_nb!r},{p.min_eb!r}\n")


def group_separated_graph(node_count=1000, p_in=0.02, seed=0):
    """Two-group SBM whose blocks are the groups, with no cross-block edges.

    No cluster of any partition can hold an inter-group edge, so every edge
    balance is 0 while random clusters stay demographically mixed.
    """
    half = node_count // 2
    spec = SyntheticSpec("sbm", node_count, (half, node_count - half), seed=seed, p_in=p_in,
                         p_out=0.0, align_groups=True)
    return generate(spec)


def regime_points(result, nb_threshold=0.5):
    """Points with min node balance above the threshold and zero min edge balance."""
    return [p for p in result.points if p.min_nb > nb_threshold and p.min_eb == 0.0]


# --- end-to-end pipeline ---------------------------------------------------------

@dataclass(frozen=True)
class PipelineConfig:
    clusters: int = 2
    k_nn: int = 10
    co_mode: str = "mean"
    normalized_laplacian: bool = False
    walk: WalkConfig = field(default_factory=WalkConfig)
    train_graph: TrainConfig = field(default_factory=TrainConfig)
    train_line: TrainConfig = field(default_factory=TrainConfig)
    seed: int = 0

    @classmethod
    def from_dict(cls, d):
        d = dict(d or {})
        nested = {"walk": WalkConfig, "train_graph": TrainConfig, "train_line": TrainConfig}
        for key, kind in nested.items():
            if key in d and isinstance(d[key], dict):
                d[key] = kind.from_dict(d[key])
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown pipeline config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self):
        return {
            "clusters": self.clusters, "k_nn": self.k_nn, "co_mode": self.co_mode,
            "normalized_laplacian": self.normalized_laplacian, "walk": self.walk.to_dict(),
            "train_graph": self.train_graph.to_dict(), "train_line": self.train_line.to_dict(),
            "seed": self.seed,
        }

    def seeded(self, seed):
        """Copy with every stage seed derived from ``seed``."""
        return PipelineConfig(
            self.clusters, self.k_nn, self.co_mode, self.normalized_laplacian,
            WalkConfig.from_dict({**self.walk.to_dict(), "seed": seed}),
            TrainConfig.from_dict({**self.train_graph.to_dict(), "seed": seed}),
            TrainConfig.from_dict({**self.train_line.to_dict(), "seed": seed + 1}),
            seed,
        )


@dataclass
class PipelineResult:
    partition: Partition
    embedding: np.ndarray
    report: object
    graph_log: list
    line_log: list


class _stage:
    def __init__(self, name):
        self.name = name

    def __enter__(self):
        log.info("stage %s", self.name)

    def __exit__(self, kind, exc, tb):
        wrap = (DualFairError, ArithmeticError, ValueError)
        if isinstance(exc, wrap) and not isinstance(exc, StageError):
            raise StageError(self.name, exc) from exc
        return False


def co_embedding(g, cfg):
    """Fair co-embedding of ``g``; returns ``(H, graph_log, line_log)``."""
    with _stage("linegraph"):
        lg = to_line_graph(g)
    with _stage("line-features"):
        lg = lg.with_attributes(node2vec_features(lg.graph, cfg.walk))
    with _stage("graph-features"):
        if g.attributes is None:
            g = g.with_attributes(node2vec_features(g, cfg.walk))
    with _stage("train-graph"):
        rg = train(g, cfg.train_graph)
    with _stage("train-line"):
        rl = train(lg.graph, cfg.train_line)
    with _stage("co-embed"):
        h = co_embed(rg.embedding, rl.embedding, lg, mode=cfg.co_mode)
    return h, rg.log, rl.log


def run_pipeline(g, cfg=None, truth=None):
    """Graph -> fair co-embedding -> spectral partition -> fairness report."""
    cfg = cfg or PipelineConfig()
    if g.group_count != 2:
        raise ConfigError("the pipeline needs exactly two demographic groups")
    h, glog, llog = co_embedding(g, cfg)
    with _stage("similarity"):
        s = similarity_graph(h, min(cfg.k_nn, g.node_count - 1))
    with _stage("spectral"):
        p = spectral_clustering(s, cfg.clusters, cfg.seed, cfg.normalized_laplacian)
    with _stage("metrics"):
        report = fairness_report(g, p, truth)
    return PipelineResult(p, h, report, glog, llog)


def vanilla_spectral(g, k, seed=0, normalized=False):
    """Spectral clustering on the raw adjacency matrix."""
    w = g.adjacency.astype(np.float64).tocsr()
    return spectral_clustering(SimilarityGraph(w, g.node_count), k, seed, normalized)


# --- pseudo labels and downstream probe ------------------------------------------

def export_pseudo_labels(p, path):
    write_partition(p, path)


def load_pseudo_labels(path):
    return read_partition(path).assignment


@dataclass
class ProbeResult:
    predictions: np.ndarray
    test_index: np.ndarray
    accuracy: float
    sp: float
    eo: float | None
    weights: np.ndarray


def _fit_logistic(x, y, iters, lr, l2):
    w = np.zeros(x.shape[1])
    for _ in range(iters):
        z = x @ w
        prob = np.exp(-np.logaddexp(0.0, -z))
        w -= lr * (x.T @ (prob - y) / len(y) + l2 * np.r_[w[:-1], 0.0])
    return w


def linear_probe_classifier(h, labels, groups=None, seed=0, test_fraction=0.3, iters=500, lr=0.5, l2=1e-3):
    """Logistic regression by full-batch gradient descent on a random split.

    Features are standardised with training-split statistics.  With
    ``groups`` the statistical-parity and equal-opportunity gaps of the
    test predictions are computed too (``eo`` is None when a group has no
    positive test label).
    """
    h = np.asarray(h, dtype=np.float64)
    y = np.asarray(labels).ravel()
    if len(h) != len(y):
        raise ShapeError("one label per embedding row required")
    if not np.all((y == 0) | (y == 1)):
        raise ConfigError("labels must be binary")
    y = y.astype(np.float64)
    groups = None if groups is None else np.asarray(groups).ravel()
    n = len(y)
    perm = stream(seed, "probe-split").permutation(n)
    n_test = int(round(test_fraction * n))
    test, tr = np.sort(perm[:n_test]), np.sort(perm[n_test:])
    if n_test == 0 or len(tr) == 0 or y[tr].min() == y[tr].max():
        raise SplitError("split leaves an empty side or a single training class")
    if groups is not None and len(np.unique(groups[test])) < 2:
        raise SplitError("both groups must appear in the test split")
    mu, sd = h[tr].mean(axis=0), h[tr].std(axis=0)
    x = (h - mu) / np.where(sd > 0, sd, 1.0)
    x = np.hstack([x, np.ones((n, 1))])
    w = _fit_logistic(x[tr], y[tr], iters, lr, l2)
    pred = (x[test] @ w > 0).astype(np.int64)
    acc = float(np.mean(pred == y[test]))
    sp_gap = eo_gap = None
    if groups is not None:
        sp_gap = statistical_parity(pred, groups[test])
        try:
            eo_gap = equal_opportunity(pred, y[test].astype(np.int64), groups[test])
        except UndefinedMetricError:
            eo_gap = None
    return ProbeResult(pred, test, acc, sp_gap, eo_gap, w)


def group_probe_accuracy(h, groups, seed=0):
    """Held-out accuracy of a linear probe predicting the group from ``h``."""
    return linear_probe_classifier(h, groups, None, seed).accuracy


# --- link prediction -------------------------------------------------------------

def _aa_weights(g):
    d = g.degrees.astype(np.float64)
    # a common neighbour is adjacent to both endpoints, so its degree is >= 2
    return np.where(d > 1, 1.0 / np.log(np.where(d > 1, d, 2.0)), 0.0)


def adamic_adar(g, pairs):
    """Adamic-Adar score of each ``(x, y)`` non-edge."""
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    if len(pairs) == 0:
        return np.empty(0)
    if pairs.min() < 0 or pairs.max() >= g.node_count:
        raise InputError("pair endpoint out of range")
    a = g.adjacency
    xs, ys = pairs[:, 0], pairs[:, 1]
    if np.any(xs == ys):
        raise InputError("pair endpoints must differ")
    existing = np.asarray(a[xs, ys]).ravel() != 0
    if existing.any():
        i = int(np.flatnonzero(existing)[0])
        raise InputError(f"pair ({xs[i]}, {ys[i]}) is already an edge")
    common = a[xs].multiply(a[ys])
    return np.asarray(common @ _aa_weights(g)).ravel()


def _all_scores(g):
    a = g.adjacency.astype(np.float64)
    s = (a @ sp.diags(_aa_weights(g)) @ a).toarray()
    return s


def top_links(g, count):
    """The ``count`` best-scoring non-edges with positive score.

    Ties are broken by ``(min id, max id)`` in lexicographic order.
    """
    n = g.node_count
    s = _all_scores(g)
    iu, ju = np.triu_indices(n, k=1)
    score = s[iu, ju]
    free = np.asarray(g.adjacency[iu, ju]).ravel() == 0
    keep = free & (score > 0)
    iu, ju, score = iu[keep], ju[keep], score[keep]
    order = np.lexsort((ju, iu, -score))[:count]
    return np.stack([iu[order], ju[order]], axis=1), score[order]


@dataclass
class LinkPredResult:
    per_cluster: dict
    sum_abs: float
    added: dict
    skipped: dict


COMMUNITY_MODES = ("groups", "clusters")


def link_prediction_experiment(g, p, add_fraction=0.15, communities="groups"):
    """Per-cluster Adamic-Adar link addition and the resulting Modred.

    For each cluster the top ``ceil(add_fraction * m_c)`` scored non-edges of
    its induced subgraph are added (``m_c`` = the cluster's edge count).  With
    ``communities="groups"`` Modred is measured on the cluster subgraph with
    demographic groups as communities; with ``"clusters"`` it is measured on
    the whole graph with the partition as communities.  The input graph is
    never modified.
    """
    if not 0.0 < add_fraction <= 1.0:
        raise ConfigError("add_fraction must lie in (0, 1]")
    if communities not in COMMUNITY_MODES:
        raise ConfigError(f"communities must be one of {COMMUNITY_MODES}")
    if len(p.assignment) != g.node_count:
        raise ShapeError("partition does not cover the graph")
    per, added, skipped = {}, {}, {}
    for c in range(p.k):
        members = p.members(c)
        sub, idx = induced_subgraph(g, members)
        if sub.edge_count == 0:
            log.warning("cluster %d has no edges; skipped", c)
            skipped[c] = "no edges"
            continue
        count = math.ceil(add_fraction * sub.edge_count)
        links, _ = top_links(sub, count)
        if len(links) == 0:
            log.warning("cluster %d has no positively scored candidate links; skipped", c)
            skipped[c] = "no candidates"
            continue
        try:
            if communities == "groups":
                after = sub.with_edges(np.vstack([sub.edges, links]))
                res = modred(sub, after, sub.groups)
            else:
                after = g.with_edges(np.vstack([g.edges, idx[links]]))
                res = modred(g, after, p.assignment)
        except UndefinedMetricError as exc:
            log.warning("cluster %d skipped: %s", c, exc)
            skipped[c] = str(exc)
            continue
        per[c] = res.signed
        added[c] = idx[links]
    return LinkPredResult(per, float(sum(abs(v) for v in per.values())), added, skipped)


__all__ = [
    "pearson",
    "ScatterPoint",
    "ScatterResult",
    "random_partition",
    "random_clustering_experiment",
    "write_scatter",
    "group_separated_graph",
    "regime_points",
    "PipelineConfig",
    "PipelineResult",
    "co_embedding",
    "run_pipeline",
    "vanilla_spectral",
    "export_pseudo_labels",
    "load_pseudo_labels",
    "ProbeResult",
    "linear_probe_classifier",
    "group_probe_accuracy",
    "adamic_adar",
    "top_links",
    "LinkPredResult",
    "link_prediction_experiment",
]
