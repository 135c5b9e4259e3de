"""Fairness and utility metrics for graph partitions.

Balances are computed per cluster and summarised by their minimum and mean.
Everything here is a pure function of immutable inputs.
"""

from __future__ import annotations

import itertools
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import ShapeError, UndefinedMetricError, UnsupportedError

EXHAUSTIVE_ACC_LIMIT = 8


@dataclass(frozen=True, eq=False)
class Partition:
    """Cluster assignment with dense ids ``0..k-1`` (every id used)."""

    assignment: np.ndarray
    k: int

    def __init__(self, assignment, k=None):
        a = np.asarray(assignment, dtype=np.int64).reshape(-1)
        if a.size and a.min() < 0:
            raise ShapeError("cluster ids must be nonnegative")
        kk = (int(a.max()) + 1 if a.size else 0) if k is None else int(k)
        used = np.bincount(a, minlength=kk) if a.size else np.zeros(kk, dtype=np.int64)
        if len(used) != kk or np.any(used == 0):
            raise ShapeError(f"cluster ids are not dense in [0, {kk})")
        a.setflags(write=False)
        object.__setattr__(self, "assignment", a)
        object.__setattr__(self, "k", kk)

    @classmethod
    def from_labels(cls, labels):
        """Relabel arbitrary labels densely in order of first appearance."""
        labels = np.asarray(labels).reshape(-1)
        _, first, inverse = np.unique(labels, return_index=True, return_inverse=True)
        order = np.argsort(np.argsort(first))
        return cls(order[inverse.reshape(-1)])

    def __len__(self):
        return len(self.assignment)

    def members(self, j):
        return np.flatnonzero(self.assignment == j)

    def sizes(self):
        return np.bincount(self.assignment, minlength=self.k)

    def __eq__(self, other):
        return isinstance(other, Partition) and self.k == other.k and np.array_equal(
            self.assignment, other.assignment)

    __hash__ = None


@dataclass
class FairnessReport:
    per_cluster_nb: list
    per_cluster_eb: list
    min_nb: float
    mean_nb: float
    min_eb: float
    mean_eb: float
    degenerate_eb_clusters: list = field(default_factory=list)
    acc: float | None = None
    sp: float | None = None
    eo: float | None = None
    q: float | None = None
    sum_abs_modred: float | None = None

    TABLE_ROWS = (("ACC", "acc"), ("Min/NB", "min_nb"), ("Mean/NB", "mean_nb"),
                  ("Min/EB", "min_eb"), ("Mean/EB", "mean_eb"))

    def to_dict(self):
        return {k: (list(v) if isinstance(v, (list, tuple)) else v) for k, v in asdict(self).items()}

    def table(self):
        lines = []
        for label, key in self.TABLE_ROWS:
            v = getattr(self, key)
            lines.append(f"{label:<8} {'-' if v is None else f'{v:.3f}'}")
        return "\n".join(lines)


def _check_lengths(g, p):
    if len(p.assignment) != g.node_count:
        raise ShapeError(f"partition covers {len(p.assignment)} nodes, graph has {g.node_count}")


def group_counts(g, p):
    """``(k, h)`` matrix: entry ``(j, i)`` counts nodes of group ``i`` in cluster ``j``."""
    _check_lengths(g, p)
    h = g.group_count
    flat = np.bincount(p.assignment * h + g.groups, minlength=p.k * h)
    return flat.reshape(p.k, h)


def _require_groups(g):
    if g.group_count < 2:
        raise UnsupportedError("balance metrics need at least two demographic groups")


def _summary(values):
    arr = np.asarray(values, dtype=np.float64)
    return [float(v) for v in arr], float(arr.min()), float(arr.mean())


def node_balance(g, p):
    """Per-cluster node balance plus its min and mean.

    The min over ordered pairs of group counts reduces to smallest/largest, so
    a cluster missing any group scores 0.
    """
    _require_groups(g)
    counts = group_counts(g, p)
    nb = counts.min(axis=1) / counts.max(axis=1)
    return _summary(nb)


def inter_edge_count(g, p):
    """Inter-group edges with both endpoints inside each cluster."""
    _check_lengths(g, p)
    cu = p.assignment[g.edges[:, 0]]
    cv = p.assignment[g.edges[:, 1]]
    keep = (cu == cv) & g.inter_mask
    return np.bincount(cu[keep], minlength=p.k).astype(np.int64)


def _cross_pairs(counts):
    """Sum over group pairs i<j of n_i*n_j, with empty groups counted as 1."""
    n = np.where(counts == 0, 1, counts).astype(np.float64)
    total = n.sum(axis=1)
    return (total * total - (n * n).sum(axis=1)) / 2.0


def edge_balance_values(ie, counts):
    """Vectorised edge balance from IE counts and a ``(k, h)`` count matrix.

    Returns ``(eb, degenerate)``.  Clusters whose pair count is at most 1 have
    ``log(pairs) <= 0``; they get 1 if they hold an inter edge, else 0.
    """
    ie = np.asarray(ie, dtype=np.float64)
    pairs = _cross_pairs(np.asarray(counts))
    degenerate = pairs <= 1.0
    num = np.log(np.where(ie == 0, 1.0, ie))
    den = np.log(np.where(degenerate, 2.0, pairs))
    eb = np.where(degenerate, (ie >= 1).astype(np.float64), num / den)
    return np.clip(eb, 0.0, 1.0), degenerate


def edge_balance(g, p, return_flags=False):
    """Per-cluster edge balance plus its min and mean (natural log)."""
    _require_groups(g)
    eb, degenerate = edge_balance_values(inter_edge_count(g, p), group_counts(g, p))
    out = _summary(eb)
    if return_flags:
        return (*out, [int(j) for j in np.flatnonzero(degenerate)])
    return out


def clustering_accuracy(pred, truth):
    """Best fraction of agreement over one-to-one maps from clusters to classes."""
    pred_labels = pred.assignment if isinstance(pred, Partition) else np.asarray(pred)
    truth = np.asarray(truth)
    if len(pred_labels) != len(truth):
        raise ShapeError(f"length mismatch: {len(pred_labels)} predictions vs {len(truth)} labels")
    if len(truth) == 0:
        raise UndefinedMetricError("accuracy of an empty labelling")
    _, p_idx = np.unique(pred_labels, return_inverse=True)
    _, t_idx = np.unique(truth, return_inverse=True)
    size = max(p_idx.max(), t_idx.max()) + 1
    conf = np.zeros((size, size), dtype=np.int64)
    np.add.at(conf, (p_idx.reshape(-1), t_idx.reshape(-1)), 1)
    if size <= EXHAUSTIVE_ACC_LIMIT:
        rows = np.arange(size)
        best = max(int(conf[rows, list(perm)].sum()) for perm in itertools.permutations(range(size)))
    else:
        r, c = linear_sum_assignment(conf, maximize=True)
        best = int(conf[r, c].sum())
    return best / len(truth)


def _binary(x, name):
    x = np.asarray(x).reshape(-1)
    if not np.all((x == 0) | (x == 1)):
        raise UnsupportedError(f"{name} must be binary (0/1)")
    return x.astype(np.int64)


def statistical_parity(pred, groups):
    """|P(yhat=1 | s=0) - P(yhat=1 | s=1)|."""
    pred, groups = _binary(pred, "predictions"), _binary(groups, "groups")
    if len(pred) != len(groups):
        raise ShapeError("predictions and groups differ in length")
    rates = []
    for s in (0, 1):
        sel = groups == s
        if not sel.any():
            raise UndefinedMetricError(f"group {s} is empty")
        rates.append(pred[sel].mean())
    return float(abs(rates[0] - rates[1]))


def equal_opportunity(pred, truth, groups):
    """|P(yhat=1 | y=1, s=0) - P(yhat=1 | y=1, s=1)|."""
    pred, truth, groups = _binary(pred, "predictions"), _binary(truth, "labels"), _binary(groups, "groups")
    if not (len(pred) == len(truth) == len(groups)):
        raise ShapeError("predictions, labels and groups differ in length")
    rates = []
    for s in (0, 1):
        sel = (groups == s) & (truth == 1)
        if not sel.any():
            raise UndefinedMetricError(f"group {s} has no positive labels")
        rates.append(pred[sel].mean())
    return float(abs(rates[0] - rates[1]))


def modularity(g, communities):
    """Newman modularity over ordered pairs, self terms included."""
    c = np.asarray(communities).reshape(-1)
    if len(c) != g.node_count:
        raise ShapeError("one community label per node required")
    m = g.edge_count
    if m == 0:
        raise UndefinedMetricError("modularity of a graph without edges")
    _, c = np.unique(c, return_inverse=True)
    c = c.reshape(-1)
    cu, cv = c[g.edges[:, 0]], c[g.edges[:, 1]]
    internal = int(np.count_nonzero(cu == cv))
    degree_sum = np.bincount(c, weights=g.degrees.astype(np.float64))
    return float(internal / m - np.sum((degree_sum / (2.0 * m)) ** 2))


@dataclass(frozen=True)
class ModredResult:
    signed: float
    absolute: float
    q_gt: float
    q_pred: float


def modred(g_before, g_after, communities):
    """Relative modularity reduction after links were added.

    Positive when the new links lower modularity, i.e. when they favour
    connections across communities.
    """
    if g_before.node_count != g_after.node_count:
        raise ShapeError("graphs must share the node set")
    q_gt = modularity(g_before, communities)
    if q_gt == 0.0:
        raise UndefinedMetricError("ground-truth modularity is zero")
    q_pred = modularity(g_after, communities)
    signed = (q_gt - q_pred) / q_gt
    return ModredResult(signed=float(signed), absolute=float(abs(signed)), q_gt=q_gt, q_pred=q_pred)


def fairness_report(g, p, truth=None):
    nb, min_nb, mean_nb = node_balance(g, p)
    eb, min_eb, mean_eb, flags = edge_balance(g, p, return_flags=True)
    acc = None if truth is None else clustering_accuracy(p, truth)
    return FairnessReport(nb, eb, min_nb, mean_nb, min_eb, mean_eb, flags, acc=acc)


__all__ = [
    "Partition",
    "FairnessReport",
    "ModredResult",
    "group_counts",
    "node_balance",
    "inter_edge_count",
    "edge_balance",
    "edge_balance_values",
    "clustering_accuracy",
    "statistical_parity",
    "equal_opportunity",
    "modularity",
    "modred",
    "fairness_report",
]
