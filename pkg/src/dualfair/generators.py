"""Synthetic attributed graphs: SBM, Watts-Strogatz and LFR-style benchmarks.

Every random draw comes from a stream keyed by ``(seed, purpose)`` so the
same spec always yields the same graph.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._rng import stream
from .errors import GenerationError, SpecError
from .graph import Graph

MODELS = ("sbm", "ws", "lfr")


@dataclass(frozen=True)
class SyntheticSpec:
    model: str
    node_count: int
    group_sizes: tuple
    seed: int = 0
    # sbm
    p_in: float = 0.1
    p_out: float = 0.01
    block_sizes: tuple | None = None
    align_groups: bool = False
    # ws
    k_ring: int = 4
    beta: float = 0.1
    # lfr
    tau1: float = 2.5
    tau2: float = 1.5
    mu: float = 0.1
    avg_degree: float = 10.0
    max_degree: int = 50
    min_community: int | None = None
    max_community: int | None = None
    max_retries: int = 20

    def blocks(self):
        return tuple(self.block_sizes) if self.block_sizes is not None else tuple(self.group_sizes)


def _validate(spec):
    if spec.model not in MODELS:
        raise SpecError(f"unknown model {spec.model!r}; expected one of {MODELS}")
    n = spec.node_count
    if n < 1:
        raise SpecError("node_count must be positive")
    if any(s < 0 for s in spec.group_sizes) or sum(spec.group_sizes) != n:
        raise SpecError(f"group sizes {tuple(spec.group_sizes)} must be nonnegative and sum to {n}")
    if spec.model == "sbm":
        for name in ("p_in", "p_out"):
            p = getattr(spec, name)
            if not 0.0 <= p <= 1.0:
                raise SpecError(f"{name}={p} is not a probability")
        blocks = spec.blocks()
        if any(s < 1 for s in blocks) or sum(blocks) != n:
            raise SpecError(f"block sizes {blocks} must be positive and sum to {n}")
        if spec.align_groups and tuple(blocks) != tuple(spec.group_sizes):
            raise SpecError("align_groups requires block sizes equal to group sizes")
    elif spec.model == "ws":
        if spec.k_ring < 0 or spec.k_ring % 2 or spec.k_ring >= n:
            raise SpecError(f"k_ring={spec.k_ring} must be even and smaller than node_count")
        if not 0.0 <= spec.beta <= 1.0:
            raise SpecError(f"beta={spec.beta} is not a probability")
    else:
        if spec.tau1 <= 1.0 or spec.tau2 <= 1.0:
            raise SpecError("LFR exponents must exceed 1")
        if not 0.0 <= spec.mu <= 1.0:
            raise SpecError(f"mu={spec.mu} is not a probability")
        if not 1.0 <= spec.avg_degree <= spec.max_degree < n:
            raise SpecError("need 1 <= avg_degree <= max_degree < node_count")
    if spec.align_groups and spec.model != "sbm":
        raise SpecError("align_groups is only defined for sbm")


def _group_labels(spec, rng):
    labels = np.repeat(np.arange(len(spec.group_sizes)), spec.group_sizes)
    if spec.align_groups:
        return labels
    return rng.permutation(labels)


def _bernoulli_positions(total, p, rng):
    """Sorted indices in ``[0, total)`` kept independently with probability p."""
    if total == 0 or p <= 0.0:
        return np.empty(0, dtype=np.int64)
    if p >= 1.0:
        return np.arange(total, dtype=np.int64)
    out = []
    pos = -1
    while True:
        batch = max(16, int(1.1 * (total - pos) * p) + 16)
        gaps = rng.geometric(p, size=batch)
        steps = pos + np.cumsum(gaps)
        out.append(steps[steps < total])
        if steps[-1] >= total:
            break
        pos = int(steps[-1])
    return np.concatenate(out).astype(np.int64)


def _triangle_pairs(t, s):
    """Decode row-major strict upper-triangle indices of an ``s x s`` matrix."""
    t = t.astype(np.float64)
    i = (s - 2 - np.floor(np.sqrt(-8.0 * t + 4.0 * s * (s - 1) - 7.0) / 2.0 - 0.5)).astype(np.int64)
    j = (t + i + 1 - s * (s - 1) // 2 + (s - i) * ((s - i) - 1) // 2).astype(np.int64)
    return i, j


def _sbm(spec, rng):
    blocks = spec.blocks()
    offsets = np.concatenate([[0], np.cumsum(blocks)])
    chunks = []
    for a, sa in enumerate(blocks):
        for b in range(a, len(blocks)):
            sb = blocks[b]
            if a == b:
                t = _bernoulli_positions(sa * (sa - 1) // 2, spec.p_in, rng)
                i, j = _triangle_pairs(t, sa)
            else:
                t = _bernoulli_positions(sa * sb, spec.p_out, rng)
                i, j = t // sb, t % sb
            chunks.append(np.stack([i + offsets[a], j + offsets[b]], axis=1))
    communities = np.repeat(np.arange(len(blocks)), blocks)
    return np.concatenate(chunks), communities


def _watts_strogatz(spec, rng):
    n, half = spec.node_count, spec.k_ring // 2
    adj = [set() for _ in range(n)]
    for j in range(1, half + 1):
        for i in range(n):
            v = (i + j) % n
            adj[i].add(v)
            adj[v].add(i)
    # rewire each lattice edge (i, i+j) with probability beta, avoiding loops and duplicates
    for j in range(1, half + 1):
        coins = rng.random(n)
        for i in range(n):
            v = (i + j) % n
            if coins[i] >= spec.beta or v not in adj[i]:
                continue
            if len(adj[i]) >= n - 1:
                continue
            while True:
                w = int(rng.integers(n))
                if w != i and w not in adj[i]:
                    break
            adj[i].discard(v)
            adj[v].discard(i)
            adj[i].add(w)
            adj[w].add(i)
    edges = [(i, v) for i in range(n) for v in adj[i] if i < v]
    return np.asarray(edges, dtype=np.int64).reshape(-1, 2), np.zeros(n, dtype=np.int64)


def _powerlaw_sample(rng, size, exponent, lo, hi):
    support = np.arange(lo, hi + 1, dtype=np.float64)
    w = support ** (-exponent)
    return rng.choice(support.astype(np.int64), size=size, p=w / w.sum())


def _powerlaw_mean(exponent, lo, hi):
    support = np.arange(lo, hi + 1, dtype=np.float64)
    w = support ** (-exponent)
    return float((support * w).sum() / w.sum())


def _wire_stubs(nodes, targets, rng, forbid=None, rounds=30):
    """Configuration-model pairing towards per-node stub targets.

    Loops, duplicates and forbidden pairs are discarded, and the stubs they
    consumed are re-paired for a few rounds.
    """
    realized = np.zeros(len(nodes), dtype=np.int64)
    pos = {int(v): i for i, v in enumerate(nodes)}
    seen = set()
    out = []
    for _ in range(rounds):
        stubs = rng.permutation(np.repeat(nodes, np.maximum(targets - realized, 0)))
        if len(stubs) < 2:
            break
        stubs = stubs[: len(stubs) // 2 * 2]
        u, v = stubs[0::2], stubs[1::2]
        keep = u != v
        if forbid is not None:
            keep &= ~forbid(u, v)
        for a, b in zip(u[keep].tolist(), v[keep].tolist()):
            key = (a, b) if a < b else (b, a)
            if key in seen:
                continue
            seen.add(key)
            realized[pos[a]] += 1
            realized[pos[b]] += 1
            out.append(key)
    return out


def _lfr(spec, rng):
    n, mu = spec.node_count, spec.mu
    dmax = spec.max_degree
    dmin = min(range(1, dmax + 1), key=lambda d: abs(_powerlaw_mean(spec.tau1, d, dmax) - spec.avg_degree))
    degrees = _powerlaw_sample(rng, n, spec.tau1, dmin, dmax)
    # stochastic rounding keeps the expected external share equal to mu
    internal = np.floor((1.0 - mu) * degrees + rng.random(n)).astype(np.int64)
    cmin = spec.min_community or max(dmin + 1, 20)
    cmax = spec.max_community or max(cmin + 1, int(internal.max()) + 1, dmax)
    if cmin > n:
        raise SpecError("minimum community size exceeds node_count")
    for _ in range(spec.max_retries):
        sizes = []
        while sum(sizes) < n:
            sizes.append(int(_powerlaw_sample(rng, 1, spec.tau2, cmin, cmax)[0]))
        sizes[-1] -= sum(sizes) - n
        if sizes[-1] < cmin:
            short = sizes.pop()
            for t in range(short):
                sizes[t % len(sizes)] += 1
        sizes = np.asarray(sizes, dtype=np.int64)
        if internal.max() > sizes.max() - 1:
            continue
        communities = np.full(n, -1, dtype=np.int64)
        free = sizes.copy()
        ok = True
        for node in np.argsort(-internal, kind="stable"):
            fits = np.flatnonzero((free > 0) & (sizes - 1 >= internal[node]))
            if len(fits) == 0:
                ok = False
                break
            c = int(rng.choice(fits))
            communities[node] = c
            free[c] -= 1
        if ok:
            break
    else:
        raise GenerationError(f"could not place nodes into communities after {spec.max_retries} retries")
    edges = []
    for c in range(len(sizes)):
        members = np.flatnonzero(communities == c)
        edges += _wire_stubs(members, internal[members], rng)
    crossing = lambda u, v: communities[u] == communities[v]  # noqa: E731
    edges += _wire_stubs(np.arange(n), degrees - internal, rng, forbid=crossing)
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    return edges, communities


def generate(spec, return_communities=False):
    """Generate the graph described by ``spec``.

    Demographic groups follow ``group_sizes`` (contiguous, then shuffled unless
    ``align_groups``).  With ``return_communities`` the planted block or
    community labels are returned as well.
    """
    _validate(spec)
    seed = spec.seed
    if spec.model == "sbm":
        edges, comms = _sbm(spec, stream(seed, "sbm-edges"))
    elif spec.model == "ws":
        edges, comms = _watts_strogatz(spec, stream(seed, "ws-edges"))
    else:
        edges, comms = _lfr(spec, stream(seed, "lfr-edges"))
    groups = _group_labels(spec, stream(seed, "groups"))
    g = Graph(spec.node_count, edges, groups, group_count=len(spec.group_sizes))
    return (g, comms) if return_communities else g


def group_means(h, dim, seed=0):
    """Unit mean vectors, one per group; orthogonal axes when ``h <= dim``."""
    if h <= dim:
        return np.eye(dim)[:h]
    m = stream(seed, "attr-means").standard_normal((h, dim))
    return m / np.linalg.norm(m, axis=1, keepdims=True)


def attach_correlated_attributes(g, dim, correlation, seed=0):
    """Attributes ``rho * mean[group] + (1 - rho) * N(0, I)``."""
    if dim < 1:
        raise SpecError("attribute dimension must be at least 1")
    if not 0.0 <= correlation <= 1.0:
        raise SpecError("correlation must lie in [0, 1]")
    means = group_means(max(g.group_count, 1), dim, seed)
    noise = stream(seed, "attr-noise").standard_normal((g.node_count, dim))
    x = correlation * means[g.groups] + (1.0 - correlation) * noise
    return g.with_attributes(x)


def mixing_fraction(g, communities):
    """Fraction of edges joining different communities."""
    if g.edge_count == 0:
        return 0.0
    c = np.asarray(communities)
    return float(np.mean(c[g.edges[:, 0]] != c[g.edges[:, 1]]))


__all__ = [
    "SyntheticSpec",
    "generate",
    "attach_correlated_attributes",
    "group_means",
    "mixing_fraction",
    "MODELS",
]
