"""Undirected attributed graphs with demographic group labels."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import ParseError, RangeError, SchemaError, SelfLoopError, UnsupportedError


def _canonical_edges(edges, n):
    arr = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if arr.size and (arr.min() < 0 or arr.max() >= n):
        bad = arr[(arr < 0).any(axis=1) | (arr >= n).any(axis=1)][0]
        raise RangeError(f"edge ({bad[0]}, {bad[1]}) references a node outside [0, {n})")
    if np.any(arr[:, 0] == arr[:, 1]):
        u = int(arr[arr[:, 0] == arr[:, 1]][0, 0])
        raise SelfLoopError(f"self-loop on node {u}")
    lo = np.minimum(arr[:, 0], arr[:, 1])
    hi = np.maximum(arr[:, 0], arr[:, 1])
    canon = np.unique(np.stack([lo, hi], axis=1), axis=0) if len(arr) else arr
    return np.ascontiguousarray(canon, dtype=np.int64)


@dataclass(frozen=True, eq=False)
class Graph:
    """Simple undirected graph on nodes ``0..node_count-1``.

    ``edges`` is stored canonically: each unordered pair once as ``(u, v)`` with
    ``u < v``, rows sorted lexicographically.  Instances are immutable; every
    transformation returns a new graph.
    """

    node_count: int
    edges: np.ndarray
    groups: np.ndarray
    attributes: np.ndarray | None = None
    group_count: int = 0
    node_ids: tuple | None = field(default=None, repr=False)

    def __init__(self, node_count, edges, groups, attributes=None, group_count=None, node_ids=None):
        n = int(node_count)
        if n < 0:
            raise RangeError("node_count must be nonnegative")
        groups = np.asarray(groups, dtype=np.int64).reshape(-1)
        if len(groups) != n:
            raise SchemaError(f"expected {n} group labels, got {len(groups)}")
        if n and groups.min() < 0:
            raise RangeError("group ids must be nonnegative")
        inferred = int(groups.max()) + 1 if n else 0
        h = inferred if group_count is None else int(group_count)
        if h < inferred:
            raise RangeError(f"group id {inferred - 1} is outside [0, {h})")
        if attributes is not None:
            attributes = np.asarray(attributes, dtype=np.float64)
            if attributes.ndim != 2 or attributes.shape[0] != n:
                raise SchemaError(f"attribute matrix must have shape ({n}, d), got {attributes.shape}")
            attributes.setflags(write=False)
        canon = _canonical_edges(edges, n)
        canon.setflags(write=False)
        groups.setflags(write=False)
        object.__setattr__(self, "node_count", n)
        object.__setattr__(self, "edges", canon)
        object.__setattr__(self, "groups", groups)
        object.__setattr__(self, "attributes", attributes)
        object.__setattr__(self, "group_count", h)
        object.__setattr__(self, "node_ids", None if node_ids is None else tuple(node_ids))

    @property
    def edge_count(self):
        return len(self.edges)

    @property
    def attr_dim(self):
        return 0 if self.attributes is None else self.attributes.shape[1]

    @cached_property
    def adjacency(self):
        """Binary symmetric adjacency as CSR."""
        n = self.node_count
        u, v = self.edges[:, 0], self.edges[:, 1]
        data = np.ones(2 * len(u), dtype=np.float64)
        a = sp.csr_matrix((data, (np.concatenate([u, v]), np.concatenate([v, u]))), shape=(n, n))
        a.sort_indices()
        return a

    @cached_property
    def degrees(self):
        return np.bincount(self.edges.ravel(), minlength=self.node_count).astype(np.int64)

    def neighbors(self, u):
        a = self.adjacency
        return a.indices[a.indptr[u]:a.indptr[u + 1]]

    @cached_property
    def inter_mask(self):
        """True for edges whose endpoints lie in different groups."""
        g = self.groups
        return g[self.edges[:, 0]] != g[self.edges[:, 1]]

    def with_attributes(self, attributes):
        return Graph(self.node_count, self.edges, self.groups, attributes, self.group_count, self.node_ids)

    def with_edges(self, edges):
        return Graph(self.node_count, edges, self.groups, self.attributes, self.group_count, self.node_ids)

    def same_structure(self, other):
        """Structural equality: nodes, edges, groups and attributes."""
        if self.node_count != other.node_count or self.group_count != other.group_count:
            return False
        if not np.array_equal(self.edges, other.edges) or not np.array_equal(self.groups, other.groups):
            return False
        if (self.attributes is None) != (other.attributes is None):
            return False
        return self.attributes is None or np.array_equal(self.attributes, other.attributes)

    def __repr__(self):
        return (f"Graph(nodes={self.node_count}, edges={self.edge_count}, "
                f"groups={self.group_count}, attr_dim={self.attr_dim})")


@dataclass(frozen=True)
class DatasetStats:
    node_count: int
    edge_count: int
    inter_count: int
    intra_count: int
    group_ratio: float
    inter_ratio: float
    intra_ratio: float

    def as_dict(self):
        return dict(self.__dict__)


def dataset_stats(g):
    """Table-style summary: sizes, inter/intra edge counts and densities.

    The ratios divide by the number of node pairs that *could* be connected
    across (resp. within) groups if the graph were complete.
    """
    if g.group_count < 2:
        raise UnsupportedError("dataset statistics need at least two demographic groups")
    sizes = np.bincount(g.groups, minlength=g.group_count).astype(np.int64)
    inter = int(g.inter_mask.sum())
    intra = g.edge_count - inter
    total_pairs = g.node_count * (g.node_count - 1) // 2
    intra_pairs = int(sum(int(s) * (int(s) - 1) // 2 for s in sizes))
    inter_pairs = total_pairs - intra_pairs
    nonempty = sizes[sizes > 0]
    group_ratio = float(nonempty.min() / sizes.max()) if len(nonempty) == g.group_count else 0.0
    return DatasetStats(
        node_count=g.node_count,
        edge_count=g.edge_count,
        inter_count=inter,
        intra_count=intra,
        group_ratio=group_ratio,
        inter_ratio=inter / inter_pairs if inter_pairs else 0.0,
        intra_ratio=intra / intra_pairs if intra_pairs else 0.0,
    )


def induced_subgraph(g, nodes):
    """Subgraph on ``nodes`` reindexed densely in ascending id order.

    Returns ``(subgraph, index_map)`` where ``index_map[new_id] = old_id``.
    """
    idx = np.unique(np.asarray(list(nodes) if not isinstance(nodes, np.ndarray) else nodes, dtype=np.int64))
    if idx.size and (idx[0] < 0 or idx[-1] >= g.node_count):
        raise RangeError(f"node ids must lie in [0, {g.node_count})")
    remap = np.full(g.node_count, -1, dtype=np.int64)
    remap[idx] = np.arange(len(idx))
    e = remap[g.edges]
    keep = (e >= 0).all(axis=1)
    attrs = None if g.attributes is None else g.attributes[idx]
    ids = None if g.node_ids is None else [g.node_ids[i] for i in idx]
    sub = Graph(len(idx), e[keep], g.groups[idx], attrs, g.group_count, ids)
    return sub, idx


# --- file formats ------------------------------------------------------------

def read_edge_list(path, id_lookup=None):
    """Parse a whitespace separated edge list; '#' starts a comment."""
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ParseError(f"expected two columns, got {len(parts)}", lineno, path)
            if id_lookup is not None:
                try:
                    pairs.append((id_lookup[parts[0]], id_lookup[parts[1]]))
                except KeyError as exc:
                    raise RangeError(f"{path}:{lineno}: unknown node id {exc.args[0]!r}") from None
                continue
            try:
                u, v = int(parts[0]), int(parts[1])
            except ValueError:
                raise ParseError(f"non-integer node id in {line!r}", lineno, path) from None
            if u < 0 or v < 0:
                raise RangeError(f"{path}:{lineno}: negative node id")
            if u == v:
                raise SelfLoopError(f"{path}:{lineno}: self-loop on node {u}")
            pairs.append((u, v))
    return np.asarray(pairs, dtype=np.int64).reshape(-1, 2)


def _parse_id(text):
    text = text.strip()
    try:
        f = float(text)
    except ValueError:
        return text
    return str(int(f)) if f.is_integer() else text


def read_attributes(path, group_column="group", id_column=None):
    """Read the per-node attribute table.

    Returns ``(groups, attributes or None, external_ids or None)``.  Every
    column except the group and id columns must be numeric.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path}: empty attribute file") from None
        if group_column not in header:
            raise SchemaError(f"{path}: group column {group_column!r} not found in header {header}")
        if id_column is not None and id_column not in header:
            raise SchemaError(f"{path}: id column {id_column!r} not found in header")
        gi = header.index(group_column)
        ii = header.index(id_column) if id_column is not None else None
        feat_cols = [j for j in range(len(header)) if j != gi and j != ii]
        groups, rows, ids = [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, got {len(row)}", lineno, path)
            try:
                gval = float(row[gi])
            except ValueError:
                raise ParseError(f"group value {row[gi]!r} is not an integer", lineno, path) from None
            if not gval.is_integer() or gval < 0:
                raise ParseError(f"group value {row[gi]!r} is not a nonnegative integer", lineno, path)
            groups.append(int(gval))
            try:
                rows.append([float(row[j]) for j in feat_cols])
            except ValueError:
                raise ParseError("non-numeric attribute value", lineno, path) from None
            if ii is not None:
                ids.append(_parse_id(row[ii]))
    attrs = np.asarray(rows, dtype=np.float64).reshape(len(groups), len(feat_cols)) if feat_cols else None
    return np.asarray(groups, dtype=np.int64), attrs, (ids if ii is not None else None)


def load_graph(edge_path, attr_path=None, group_column="group", id_column=None):
    """Load a graph from an edge list and an optional attribute table.

    Without an attribute file every node is placed in group 0 and the node
    count is ``max id + 1``.  With ``id_column`` the edge file refers to the
    external ids of that column, which are mapped to row positions.
    """
    groups = attrs = ids = None
    if attr_path is not None:
        groups, attrs, ids = read_attributes(attr_path, group_column, id_column)
    lookup = None
    if ids is not None:
        lookup = {}
        for pos, ext in enumerate(ids):
            if ext in lookup:
                raise SchemaError(f"{attr_path}: duplicate node id {ext!r}")
            lookup[ext] = pos
    edges = read_edge_list(edge_path, lookup)
    if groups is None:
        n = int(edges.max()) + 1 if len(edges) else 0
        groups = np.zeros(n, dtype=np.int64)
    n = len(groups)
    present = np.bincount(groups, minlength=int(groups.max()) + 1 if n else 0)
    if np.any(present == 0):
        missing = int(np.flatnonzero(present == 0)[0])
        raise SchemaError(f"{attr_path}: group {missing} has no members")
    if len(edges) and edges.max() >= n:
        raise RangeError(f"{edge_path}: node id {int(edges.max())} out of range for {n} nodes")
    return Graph(n, edges, groups, attrs, node_ids=ids)


def write_edge_list(g, path):
    with open(path, "w", encoding="utf-8") as fh:
        for u, v in g.edges:
            fh.write(f"{u}\t{v}\n")


def format_float(x):
    return repr(float(x))


def write_attributes(g, path, group_column="group"):
    header = [group_column] + [f"x{j}" for j in range(g.attr_dim)]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(g.node_count):
            row = [str(int(g.groups[i]))]
            if g.attributes is not None:
                row += [format_float(x) for x in g.attributes[i]]
            w.writerow(row)


def write_id_map(g, path):
    if g.node_ids is None:
        return
    with open(path, "w", encoding="utf-8") as fh:
        for i, ext in enumerate(g.node_ids):
            fh.write(f"{i}\t{ext}\n")


def save_graph(g, edge_path, attr_path=None, group_column="group"):
    write_edge_list(g, edge_path)
    if attr_path is not None:
        write_attributes(g, attr_path, group_column)


def default_attr_path(edge_path):
    p = Path(edge_path)
    return p.with_name(p.stem + ".attrs.csv")


__all__ = [
    "Graph",
    "DatasetStats",
    "dataset_stats",
    "induced_subgraph",
    "load_graph",
    "save_graph",
    "read_edge_list",
    "read_attributes",
    "write_edge_list",
    "write_attributes",
    "write_id_map",
    "default_attr_path",
    "format_float",
]
