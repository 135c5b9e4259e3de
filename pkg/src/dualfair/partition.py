"""Final cluster assignment: kNN cosine graph, spectral embedding, k-means."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.linalg import ArpackError, eigsh

from ._rng import stream
from .errors import ConfigError, DegenerateError, NumericalError, ParseError
from .metrics import Partition

log = logging.getLogger(__name__)

DENSE_EIGEN_LIMIT = 2000
EIGEN_TOL = 1e-8
KMEANS_RESEEDS = 5


@dataclass(frozen=True, eq=False)
class SimilarityGraph:
    """Symmetric nonnegative weights with an empty diagonal."""

    weights: sp.csr_matrix
    node_count: int

    @property
    def degrees(self):
        return np.asarray(self.weights.sum(axis=1)).ravel()


def _unit_rows(h):
    h = np.asarray(h, dtype=np.float64)
    norms = np.linalg.norm(h, axis=1)
    return h / np.where(norms > 0, norms, 1.0)[:, None]


def knn_indices(h, k_nn, chunk=1024):
    """Each row's ``k_nn`` most cosine-similar other rows (ties: lower index)."""
    u = _unit_rows(h)
    n = len(u)
    out = np.empty((n, k_nn), dtype=np.int64)
    for a in range(0, n, chunk):
        sims = u[a:a + chunk] @ u.T
        rows = np.arange(a, min(a + chunk, n))
        sims[rows - a, rows] = -np.inf
        out[a:a + chunk] = np.argsort(-sims, axis=1, kind="stable")[:, :k_nn]
    return out


def similarity_graph(h, k_nn=10):
    """Mutual-or kNN graph with ``max(0, cosine)`` weights."""
    h = np.asarray(h, dtype=np.float64)
    n = len(h)
    if k_nn <= 0:
        raise ConfigError("k_nn must be positive")
    if k_nn >= n:
        raise ConfigError(f"k_nn={k_nn} must be smaller than the node count {n}")
    nbrs = knn_indices(h, k_nn)
    u = _unit_rows(h)
    rows = np.repeat(np.arange(n), k_nn)
    cols = nbrs.ravel()
    w = np.maximum(0.0, np.einsum("ij,ij->i", u[rows], u[cols]))
    w = np.minimum(w, 1.0)
    a = sp.csr_matrix((w, (rows, cols)), shape=(n, n))
    a = a.maximum(a.T).tocsr()
    a.setdiag(0)
    a.eliminate_zeros()
    a.sort_indices()
    return SimilarityGraph(a, n)


def laplacian(s, normalized=False):
    """``D - W``, or the symmetric normalised ``I - D^-1/2 W D^-1/2``."""
    w = s.weights if isinstance(s, SimilarityGraph) else sp.csr_matrix(s)
    d = np.asarray(w.sum(axis=1)).ravel()
    if not normalized:
        return (sp.diags(d) - w).tocsr()
    inv = np.where(d > 0, 1.0 / np.sqrt(np.where(d > 0, d, 1.0)), 0.0)
    return (sp.identity(len(d)) - sp.diags(inv) @ w @ sp.diags(inv)).tocsr()


def smallest_eigenvectors(lap, k):
    """Eigenpairs for the ``k`` smallest eigenvalues of a symmetric matrix."""
    n = lap.shape[0]
    try:
        if n <= DENSE_EIGEN_LIMIT or k >= n - 1:
            vals, vecs = scipy.linalg.eigh(lap.toarray(), subset_by_index=[0, k - 1])
        else:
            vals, vecs = eigsh(lap.tocsc(), k=k, sigma=-1e-3, which="LM", tol=EIGEN_TOL)
            order = np.argsort(vals, kind="stable")
            vals, vecs = vals[order], vecs[:, order]
    except (np.linalg.LinAlgError, ArpackError, RuntimeError) as exc:
        raise NumericalError(f"eigensolver failed: {exc}") from exc
    if not (np.all(np.isfinite(vals)) and np.all(np.isfinite(vecs))):
        raise NumericalError("eigensolver returned non-finite values")
    return vals, vecs


def spectral_clustering(s, k, seed=0, normalized=False):
    """Cluster a similarity graph into ``k`` parts.

    The rows of the ``k`` bottom Laplacian eigenvectors are clustered with
    k-means (rows are unit-normalised first in the normalised variant).
    """
    n = s.node_count
    if k < 2 and n > 1:
        raise ConfigError("k must be at least 2")
    if k > n:
        raise ConfigError(f"k={k} exceeds node count {n}")
    if k == n:
        return Partition(np.arange(n))
    _, vecs = smallest_eigenvectors(laplacian(s, normalized), k)
    if normalized:
        vecs = _unit_rows(vecs)
    return kmeans(vecs, k, seed)


@dataclass
class KMeansResult:
    partition: Partition
    centers: np.ndarray
    inertia: float
    history: list
    iterations: int
    attempt: int


def _sq_dists(x, c):
    d = (x * x).sum(axis=1)[:, None] - 2.0 * x @ c.T + (c * c).sum(axis=1)[None, :]
    return np.maximum(d, 0.0)


def _plus_plus(x, k, rng):
    n = len(x)
    centers = [int(rng.integers(n))]
    closest = _sq_dists(x, x[centers]).ravel()
    for _ in range(1, k):
        total = closest.sum()
        if total <= 0:
            break
        nxt = int(np.searchsorted(np.cumsum(closest), rng.random() * total, side="right"))
        nxt = min(nxt, n - 1)
        centers.append(nxt)
        closest = np.minimum(closest, _sq_dists(x, x[[nxt]]).ravel())
    return x[centers].copy()


def kmeans_details(points, k, seed=0, tol=1e-6, max_iter=300):
    """Lloyd's algorithm from k-means++ seeds.

    Stops when the summed squared centre shift drops to ``tol`` or after
    ``max_iter`` sweeps.  A run that leaves a cluster empty is re-seeded.
    """
    x = np.asarray(points, dtype=np.float64)
    if x.ndim != 2:
        raise ConfigError("points must be a 2-D matrix")
    n = len(x)
    if not 1 <= k <= n:
        raise ConfigError(f"k={k} must lie in [1, {n}]")
    if len(np.unique(x, axis=0)) < k:
        raise DegenerateError(f"fewer than {k} distinct points")
    for attempt in range(KMEANS_RESEEDS):
        rng = stream(seed + attempt * 7919, "kmeans")
        centers = _plus_plus(x, k, rng)
        if len(centers) < k:
            continue
        history = []
        labels = None
        it = 0
        for it in range(1, max_iter + 1):
            d = _sq_dists(x, centers)
            labels = np.argmin(d, axis=1)
            history.append(float(d[np.arange(n), labels].sum()))
            counts = np.bincount(labels, minlength=k)
            if np.any(counts == 0):
                break
            new = np.zeros_like(centers)
            np.add.at(new, labels, x)
            new /= counts[:, None]
            shift = float(((new - centers) ** 2).sum())
            centers = new
            if shift <= tol:
                break
        d = _sq_dists(x, centers)
        labels = np.argmin(d, axis=1)
        if np.all(np.bincount(labels, minlength=k) > 0):
            inertia = float(d[np.arange(n), labels].sum())
            history.append(inertia)
            return KMeansResult(Partition.from_labels(labels), centers, inertia, history, it, attempt)
        log.warning("k-means left an empty cluster (attempt %d); re-seeding", attempt)
    raise DegenerateError(f"k-means produced an empty cluster after {KMEANS_RESEEDS} seeds")


def kmeans(points, k, seed=0, tol=1e-6, max_iter=300):
    return kmeans_details(points, k, seed, tol, max_iter).partition


# --- persistence -------------------------------------------------------------

def write_partition(p, path):
    with open(path, "w", encoding="utf-8") as fh:
        for i, c in enumerate(p.assignment):
            fh.write(f"{i}\t{c}\n")


def read_partition(path):
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ParseError("expected 'node cluster'", lineno, path)
            try:
                pairs.append((int(parts[0]), int(parts[1])))
            except ValueError as exc:
                raise ParseError(f"non-integer field: {exc}", lineno, path) from None
    if not pairs:
        return Partition(np.empty(0, dtype=np.int64))
    arr = np.asarray(pairs)
    if not np.array_equal(np.sort(arr[:, 0]), np.arange(len(arr))):
        raise ParseError("node ids must cover 0..n-1 exactly once", None, path)
    out = np.empty(len(arr), dtype=np.int64)
    out[arr[:, 0]] = arr[:, 1]
    return Partition(out)


__all__ = [
    "SimilarityGraph",
    "similarity_graph",
    "knn_indices",
    "laplacian",
    "smallest_eigenvectors",
    "spectral_clustering",
    "kmeans",
    "kmeans_details",
    "KMeansResult",
    "write_partition",
    "read_partition",
]
