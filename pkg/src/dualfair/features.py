"""node2vec-style features: biased second-order walks and skip-gram training.

Used to give line-graph nodes (and optionally plain nodes) real-valued
attributes.  Training is explicit minibatch SGD with negative sampling, run
single-threaded so a fixed seed reproduces the matrix bit for bit.
"""

from __future__ import annotations

import struct
from dataclasses import asdict, dataclass

import numpy as np
import scipy.sparse as sp

from ._rng import stream
from .errors import ConfigError, ShapeError
from .graph import format_float

BINARY_MAGIC = b"DFEMB001"


@dataclass(frozen=True)
class WalkConfig:
    walks_per_node: int = 10
    walk_length: int = 10
    window: int = 5
    dim: int = 64
    negatives: int = 5
    p: float = 1.0
    q: float = 1.0
    epochs: int = 3
    learning_rate: float = 0.025
    batch_size: int = 512
    seed: int = 0

    def __post_init__(self):
        for name in ("walks_per_node", "walk_length", "window", "dim", "negatives", "batch_size"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be a positive integer")
        if self.epochs < 0:
            raise ConfigError("epochs must be nonnegative")
        if self.window >= self.walk_length:
            raise ConfigError("window must be smaller than walk_length")
        if self.dim < 2:
            raise ConfigError("dim must be at least 2")
        if self.p <= 0 or self.q <= 0 or self.learning_rate <= 0:
            raise ConfigError("p, q and learning_rate must be positive")

    @classmethod
    def from_dict(cls, d):
        known = {k: v for k, v in (d or {}).items() if k in cls.__dataclass_fields__}
        unknown = set(d or {}) - set(known)
        if unknown:
            raise ConfigError(f"unknown walk config keys: {sorted(unknown)}")
        return cls(**known)

    def to_dict(self):
        return asdict(self)


def walk_matrix(g, cfg):
    """All walks as an int array ``(walks_per_node * n, walk_length)``.

    Row ``r * n + v`` is the ``r``-th walk from node ``v``.  Positions after a
    dead end hold -1.  The return/in-out bias is realised by rejection
    sampling: a uniform neighbour ``x`` of the current node is accepted with
    probability ``w(x) / max(w)``, where ``w`` is ``1/p`` for stepping back, 1
    for a neighbour of the previous node and ``1/q`` otherwise.
    """
    n, length = g.node_count, cfg.walk_length
    adj = g.adjacency
    indptr, indices = adj.indptr.astype(np.int64), adj.indices.astype(np.int64)
    deg = np.diff(indptr)
    rng = stream(cfg.seed, "walks")
    starts = np.tile(np.arange(n, dtype=np.int64), cfg.walks_per_node)
    walks = np.full((len(starts), length), -1, dtype=np.int64)
    walks[:, 0] = starts
    if length == 1 or n == 0:
        return walks
    edge_keys = np.repeat(np.arange(n, dtype=np.int64), deg) * n + indices  # sorted (CSR, sorted rows)
    w_back, w_far = 1.0 / cfg.p, 1.0 / cfg.q
    w_max = max(w_back, 1.0, w_far)
    uniform_bias = cfg.p == 1.0 and cfg.q == 1.0

    def uniform_neighbor(cur):
        pick = np.minimum((rng.random(len(cur)) * deg[cur]).astype(np.int64), deg[cur] - 1)
        return indices[indptr[cur] + pick]

    alive = deg[starts] > 0
    rows = np.flatnonzero(alive)
    walks[rows, 1] = uniform_neighbor(starts[rows])
    for t in range(2, length):
        rows = rows[deg[walks[rows, t - 1]] > 0]
        cur, prev = walks[rows, t - 1], walks[rows, t - 2]
        if uniform_bias:
            walks[rows, t] = uniform_neighbor(cur)
            continue
        chosen = np.full(len(rows), -1, dtype=np.int64)
        pending = np.arange(len(rows))
        while len(pending):
            x = uniform_neighbor(cur[pending])
            pv = prev[pending]
            keys = pv * n + x
            pos = np.minimum(np.searchsorted(edge_keys, keys), len(edge_keys) - 1)
            near = edge_keys[pos] == keys
            weight = np.where(x == pv, w_back, np.where(near, 1.0, w_far))
            accept = rng.random(len(pending)) * w_max < weight
            chosen[pending[accept]] = x[accept]
            pending = pending[~accept]
        walks[rows, t] = chosen
    return walks


def random_walks(g, cfg):
    """Biased walks as a list of node-id arrays (isolated starts give length 1)."""
    return [row[row >= 0] for row in walk_matrix(g, cfg)]


def _as_matrix(walks, length=None):
    if isinstance(walks, np.ndarray) and walks.ndim == 2:
        return walks
    walks = list(walks)
    length = length or max(len(w) for w in walks)
    out = np.full((len(walks), length), -1, dtype=np.int64)
    for i, w in enumerate(walks):
        out[i, :len(w)] = w
    return out


def context_pairs(walks, window):
    """(center, context) pairs within ``window`` steps, both directions."""
    w = _as_matrix(walks)
    centers, contexts = [], []
    for d in range(1, window + 1):
        a, b = w[:, :-d].ravel(), w[:, d:].ravel()
        ok = (a >= 0) & (b >= 0)
        centers += [a[ok], b[ok]]
        contexts += [b[ok], a[ok]]
    if not centers:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    return np.concatenate(centers), np.concatenate(contexts)


def _log_sigmoid(x):
    return -np.logaddexp(0.0, -x)


def _sigmoid(x):
    return np.exp(-np.logaddexp(0.0, -x))


def _skipgram_terms(V, U, centers, contexts, negatives):
    vc, uo, un = V[centers], U[contexts], U[negatives]
    pos = np.einsum("bd,bd->b", vc, uo)
    neg = np.einsum("bd,bkd->bk", vc, un)
    loss = -(_log_sigmoid(pos).sum() + _log_sigmoid(-neg).sum())
    g_pos = _sigmoid(pos) - 1.0
    g_neg = _sigmoid(neg)
    d_vc = g_pos[:, None] * uo + np.einsum("bk,bkd->bd", g_neg, un)
    d_uo = g_pos[:, None] * vc
    d_un = (g_neg[:, :, None] * vc[:, None, :]).reshape(-1, V.shape[1])
    return float(loss), d_vc, d_uo, d_un


def skipgram_loss_and_grad(V, U, centers, contexts, negatives):
    """Negative-sampling loss summed over a batch, with dense gradients.

    ``loss = -sum[log s(u_o . v_c) + sum_k log s(-u_k . v_c)]``.
    """
    loss, d_vc, d_uo, d_un = _skipgram_terms(V, U, centers, contexts, negatives)
    gV = np.zeros_like(V)
    gU = np.zeros_like(U)
    np.add.at(gV, centers, d_vc)
    np.add.at(gU, contexts, d_uo)
    np.add.at(gU, negatives.ravel(), d_un)
    return loss, gV, gU


def _scatter_rows(rows, grads):
    """Sum gradient rows sharing an index; returns ``(unique_rows, sums)``."""
    uniq, inv = np.unique(rows, return_inverse=True)
    m = sp.csr_matrix((np.ones(len(rows)), (inv.reshape(-1), np.arange(len(rows)))),
                      shape=(len(uniq), len(rows)))
    return uniq, m @ grads


def init_embedding(node_count, cfg):
    rng = stream(cfg.seed, "skipgram-init")
    return (rng.random((node_count, cfg.dim)) - 0.5) / cfg.dim


def train_skipgram(walks, cfg, node_count=None):
    """Skip-gram with negative sampling over walk co-occurrences.

    Returns the input (centre) vectors, shape ``(node_count, dim)``.  Negatives
    are drawn from walk frequencies raised to 0.75; the learning rate decays
    linearly towards zero over all updates.
    """
    w = _as_matrix(walks)
    if w.size == 0:
        raise ShapeError("no walks to train on")
    n = int(node_count if node_count is not None else w.max() + 1)
    V = init_embedding(n, cfg)
    if cfg.epochs == 0:
        return V
    U = np.zeros_like(V)
    centers, contexts = context_pairs(w, cfg.window)
    if len(centers) == 0:
        return V
    freq = np.bincount(w[w >= 0], minlength=n).astype(np.float64) ** 0.75
    cdf = np.cumsum(freq / freq.sum())
    cdf[-1] = 1.0
    rng = stream(cfg.seed, "skipgram-train")
    bs = cfg.batch_size
    batches_per_epoch = -(-len(centers) // bs)
    total = batches_per_epoch * cfg.epochs
    step = 0
    for _ in range(cfg.epochs):
        order = rng.permutation(len(centers))
        for b in range(batches_per_epoch):
            idx = order[b * bs:(b + 1) * bs]
            c, o = centers[idx], contexts[idx]
            negs = np.searchsorted(cdf, rng.random((len(idx), cfg.negatives)), side="right")
            negs = np.minimum(negs, n - 1)
            lr = cfg.learning_rate * max(1e-4, 1.0 - step / total)
            _, d_vc, d_uo, d_un = _skipgram_terms(V, U, c, o, negs)
            rows, gv = _scatter_rows(c, d_vc)
            V[rows] -= lr * gv
            rows, gu = _scatter_rows(np.concatenate([o, negs.ravel()]), np.vstack([d_uo, d_un]))
            U[rows] -= lr * gu
            step += 1
    return V


def node2vec_features(g, cfg=None):
    cfg = cfg or WalkConfig()
    return train_skipgram(walk_matrix(g, cfg), cfg, node_count=g.node_count)


# --- persistence -------------------------------------------------------------

def write_embedding(h, path, binary=False):
    h = np.asarray(h, dtype=np.float64)
    if h.ndim != 2:
        raise ShapeError("embedding must be a 2-D matrix")
    n, d = h.shape
    if binary:
        with open(path, "wb") as fh:
            fh.write(BINARY_MAGIC)
            fh.write(struct.pack("<qq", n, d))
            fh.write(np.ascontiguousarray(h, dtype="<f4").tobytes())
        return
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{n} {d}\n")
        for row in h:
            fh.write(" ".join(format_float(x) for x in row) + "\n")


def read_embedding(path):
    with open(path, "rb") as fh:
        head = fh.read(len(BINARY_MAGIC))
        if head == BINARY_MAGIC:
            n, d = struct.unpack("<qq", fh.read(16))
            data = np.frombuffer(fh.read(), dtype="<f4")
            if data.size != n * d:
                raise ShapeError(f"{path}: expected {n * d} floats, found {data.size}")
            return data.reshape(n, d).astype(np.float64)
    with open(path, encoding="utf-8") as fh:
        n, d = (int(t) for t in fh.readline().split())
        rows = [np.array(line.split(), dtype=np.float64) for line in fh if line.strip()]
    h = np.vstack(rows) if rows else np.empty((0, d))
    if h.shape != (n, d):
        raise ShapeError(f"{path}: header says {(n, d)}, body has {h.shape}")
    return h


__all__ = [
    "WalkConfig",
    "walk_matrix",
    "random_walks",
    "context_pairs",
    "skipgram_loss_and_grad",
    "train_skipgram",
    "init_embedding",
    "node2vec_features",
    "write_embedding",
    "read_embedding",
]
