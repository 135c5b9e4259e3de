"""Line-graph transformation with inter/intra edge labels moved onto nodes."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp

from .errors import EmptyLineGraphError
from .graph import Graph, write_edge_list

INTRA = 0
INTER = 1


@dataclass(frozen=True, eq=False)
class LineGraph:
    """Line graph of a source graph.

    ``graph.groups`` holds the line-node labels (1 = the source edge joins two
    groups).  ``edge_index[n]`` is the ``(i, j)`` source pair, ``i < j``, of
    line-node ``n``; line-nodes follow the source graph's sorted edge order.
    """

    graph: Graph
    edge_index: np.ndarray
    source_node_count: int

    @property
    def line_groups(self):
        return self.graph.groups

    def with_attributes(self, attributes):
        return replace(self, graph=self.graph.with_attributes(attributes))

    def incidence(self):
        """Sparse ``(source nodes x line nodes)`` incidence matrix."""
        m = len(self.edge_index)
        rows = self.edge_index.ravel()
        cols = np.repeat(np.arange(m), 2)
        return sp.csr_matrix((np.ones(2 * m), (rows, cols)), shape=(self.source_node_count, m))


def to_line_graph(g):
    """Build the line graph of ``g``.

    Edges are bucketed by endpoint and every pair inside a bucket becomes a
    line-graph edge, so the cost is proportional to the sum of squared degrees.
    """
    if g.edge_count == 0:
        raise EmptyLineGraphError("graph has no edges; its line graph is empty")
    edges = g.edges
    m = len(edges)
    ends = edges.ravel()
    line_ids = np.repeat(np.arange(m, dtype=np.int64), 2)
    order = np.argsort(ends, kind="stable")
    ends, line_ids = ends[order], line_ids[order]
    bounds = np.flatnonzero(np.diff(ends)) + 1
    starts = np.concatenate([[0], bounds])
    stops = np.concatenate([bounds, [len(ends)]])
    chunks = []
    for a, b in zip(starts, stops):
        d = b - a
        if d < 2:
            continue
        bucket = line_ids[a:b]
        iu, ju = np.triu_indices(d, k=1)
        chunks.append(np.stack([bucket[iu], bucket[ju]], axis=1))
    pairs = np.concatenate(chunks) if chunks else np.empty((0, 2), dtype=np.int64)
    # two distinct simple edges share at most one endpoint
    if len(pairs):
        lo = np.minimum(pairs[:, 0], pairs[:, 1])
        hi = np.maximum(pairs[:, 0], pairs[:, 1])
        assert len(np.unique(lo * m + hi)) == len(pairs), "duplicate line-graph edge"
    labels = g.inter_mask.astype(np.int64)
    lg = Graph(m, pairs, labels, group_count=2)
    return LineGraph(graph=lg, edge_index=edges.copy(), source_node_count=g.node_count)


def predicted_line_stats(g):
    """``(|V^L|, |E^L|)`` from source degrees alone."""
    d = g.degrees
    return g.edge_count, int(np.sum(d * (d - 1) // 2))


def save_line_graph(lg, path):
    """Edge list at ``path`` plus ``path.map`` (id -> "i,j") and ``path.groups``."""
    write_edge_list(lg.graph, path)
    with open(f"{path}.map", "w", encoding="utf-8") as fh:
        for n, (i, j) in enumerate(lg.edge_index):
            fh.write(f"{n}\t{i},{j}\n")
    with open(f"{path}.groups", "w", encoding="utf-8") as fh:
        for n, s in enumerate(lg.line_groups):
            fh.write(f"{n}\t{s}\n")


__all__ = ["LineGraph", "to_line_graph", "predicted_line_stats", "save_line_graph", "INTER", "INTRA"]
