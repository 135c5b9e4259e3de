"""Adversarially debiased MLP embeddings and their node/edge fusion.

The encoder is a three-layer perceptron (batch norm, tanh and dropout on the
hidden layers) trained without message passing: graph structure enters only
through a neighbourhood-contrastive term over the 2-hop adjacency.  A small
discriminator tries to recover the binary group from the embedding while the
encoder is pushed to make that impossible.

All gradients are written out by hand in numpy, which keeps training fully
deterministic and lets the tests check every derivative against finite
differences.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp

from ._rng import stream
from .errors import ConfigError, ShapeError, TrainingError

log = logging.getLogger(__name__)

BN_EPS = 1e-5
BN_MOMENTUM = 0.1
ENCODER_ADV = ("negated", "confusion")
DISC_INPUT = ("unit", "standardize")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 256
    lr: float = 0.01
    disc_lr: float = 0.01
    momentum: float = 0.9
    adv_weight: float = 1.0
    warmup_fraction: float = 0.1
    tau: float = 1.0
    dropout: float = 0.1
    hidden: tuple = (256, 256)
    embed_dim: int = 64
    disc_hidden: int = 32
    binarize_mask: bool = False
    standardize: bool = True
    clip_norm: float | None = 5.0
    encoder_adv: str = "negated"
    disc_steps: int = 1
    disc_input: str = "unit"
    seed: int = 0

    def __post_init__(self):
        if self.disc_input not in DISC_INPUT:
            raise ConfigError(f"disc_input must be one of {DISC_INPUT}")
        if self.disc_steps < 1:
            raise ConfigError("disc_steps must be at least 1")
        if self.epochs < 0 or self.batch_size < 2:
            raise ConfigError("epochs must be >= 0 and batch_size >= 2")
        if self.lr <= 0 or self.disc_lr <= 0:
            raise ConfigError("learning rates must be positive")
        if self.adv_weight < 0:
            raise ConfigError("adv_weight must be nonnegative")
        if self.tau <= 0:
            raise ConfigError("tau must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must lie in [0, 1)")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError("momentum must lie in [0, 1)")
        if self.encoder_adv not in ENCODER_ADV:
            raise ConfigError(f"encoder_adv must be one of {ENCODER_ADV}")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))

    @classmethod
    def from_dict(cls, d):
        d = dict(d or {})
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self):
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d


# --- MLP building blocks -------------------------------------------------------

def _init_affine(rng, fan_in, fan_out):
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out)), np.zeros(fan_out)


@dataclass
class MLP:
    """Stack of affine layers.  Hidden layers: [batch norm] -> tanh -> [dropout]."""

    name: str
    dims: tuple
    norm: bool
    dropout: float

    @property
    def n_layers(self):
        return len(self.dims) - 1

    def init(self, rng, params, buffers):
        for l in range(self.n_layers):
            W, b = _init_affine(rng, self.dims[l], self.dims[l + 1])
            params[f"{self.name}.W{l}"] = W
            params[f"{self.name}.b{l}"] = b
            if self.norm and l < self.n_layers - 1:
                params[f"{self.name}.gamma{l}"] = np.ones(self.dims[l + 1])
                params[f"{self.name}.beta{l}"] = np.zeros(self.dims[l + 1])
                buffers[f"{self.name}.mean{l}"] = np.zeros(self.dims[l + 1])
                buffers[f"{self.name}.var{l}"] = np.ones(self.dims[l + 1])

    def forward(self, params, buffers, x, train, rng=None):
        cache = []
        h = x
        for l in range(self.n_layers):
            a = h @ params[f"{self.name}.W{l}"] + params[f"{self.name}.b{l}"]
            if l == self.n_layers - 1:
                cache.append({"h": h})
                return a, cache
            c = {"h": h}
            if self.norm:
                if train:
                    mu, var = a.mean(axis=0), a.var(axis=0)
                else:
                    mu, var = buffers[f"{self.name}.mean{l}"], buffers[f"{self.name}.var{l}"]
                inv = 1.0 / np.sqrt(var + BN_EPS)
                xhat = (a - mu) * inv
                c.update(xhat=xhat, inv=inv, mu=mu, var=var)
                a = params[f"{self.name}.gamma{l}"] * xhat + params[f"{self.name}.beta{l}"]
            z = np.tanh(a)
            c["t"] = z
            if train and self.dropout > 0.0:
                mask = (rng.random(z.shape) >= self.dropout) / (1.0 - self.dropout)
                c["mask"] = mask
                z = z * mask
            cache.append(c)
            h = z
        return h, cache

    def backward(self, params, dout, cache):
        grads = {}
        d = dout
        for l in reversed(range(self.n_layers)):
            c = cache[l]
            if l < self.n_layers - 1:
                if "mask" in c:
                    d = d * c["mask"]
                d = d * (1.0 - c["t"] ** 2)
                if self.norm:
                    xhat, inv = c["xhat"], c["inv"]
                    grads[f"{self.name}.gamma{l}"] = (d * xhat).sum(axis=0)
                    grads[f"{self.name}.beta{l}"] = d.sum(axis=0)
                    dx = d * params[f"{self.name}.gamma{l}"]
                    m = dx.shape[0]
                    d = inv / m * (m * dx - dx.sum(axis=0) - xhat * (dx * xhat).sum(axis=0))
            grads[f"{self.name}.W{l}"] = c["h"].T @ d
            grads[f"{self.name}.b{l}"] = d.sum(axis=0)
            d = d @ params[f"{self.name}.W{l}"].T
        return d, grads

    def update_running_stats(self, buffers, cache):
        if not self.norm:
            return
        for l in range(self.n_layers - 1):
            m = cache[l]["xhat"].shape[0]
            unbiased = cache[l]["var"] * m / max(m - 1, 1)
            buffers[f"{self.name}.mean{l}"] = (1 - BN_MOMENTUM) * buffers[f"{self.name}.mean{l}"] + BN_MOMENTUM * cache[l]["mu"]
            buffers[f"{self.name}.var{l}"] = (1 - BN_MOMENTUM) * buffers[f"{self.name}.var{l}"] + BN_MOMENTUM * unbiased


@dataclass
class ModelParams:
    """Encoder, mirrored decoder and discriminator weights."""

    attr_dim: int
    hidden: tuple
    embed_dim: int
    disc_hidden: int
    dropout: float
    params: dict = field(default_factory=dict)
    buffers: dict = field(default_factory=dict)

    def __post_init__(self):
        dims = (self.attr_dim, *self.hidden, self.embed_dim)
        self.encoder = MLP("enc", dims, norm=True, dropout=self.dropout)
        self.decoder = MLP("dec", tuple(reversed(dims)), norm=True, dropout=self.dropout)
        self.discriminator = MLP("disc", (self.embed_dim, self.disc_hidden, 1), norm=False, dropout=0.0)

    @classmethod
    def initialize(cls, attr_dim, cfg, seed=None):
        m = cls(attr_dim, tuple(cfg.hidden), cfg.embed_dim, cfg.disc_hidden, cfg.dropout)
        rng = stream(cfg.seed if seed is None else seed, "fairembed-init")
        for net in (m.encoder, m.decoder, m.discriminator):
            net.init(rng, m.params, m.buffers)
        return m

    def names(self, prefix):
        return [k for k in self.params if k.startswith(prefix + ".")]

    def encode(self, x, train=False, rng=None):
        return self.encoder.forward(self.params, self.buffers, x, train, rng)

    def copy(self):
        m = ModelParams(self.attr_dim, self.hidden, self.embed_dim, self.disc_hidden, self.dropout)
        m.params = {k: v.copy() for k, v in self.params.items()}
        m.buffers = {k: v.copy() for k, v in self.buffers.items()}
        return m


# --- losses ----------------------------------------------------------------------

def two_hop_mask(g, binarize=False):
    """Sparse A @ A with the diagonal removed (counts of length-2 walks)."""
    a = g.adjacency
    a2 = (a @ a).tocsr()
    a2.setdiag(0)
    a2.eliminate_zeros()
    if binarize:
        a2.data[:] = 1.0
    a2.sort_indices()
    return a2


def _unit_rows(z):
    norms = np.sqrt((z * z).sum(axis=1)) + 1e-12
    return z / norms[:, None], norms


def _unit_rows_backward(du, u, norms):
    return (du - u * (u * du).sum(axis=1, keepdims=True)) / norms[:, None]


def _standardize_batch(z):
    inv = 1.0 / np.sqrt(z.var(axis=0) + BN_EPS)
    return (z - z.mean(axis=0)) * inv, inv


def _standardize_batch_backward(du, u, inv):
    m = du.shape[0]
    return inv / m * (m * du - du.sum(axis=0) - u * (du * u).sum(axis=0))


def contrastive_term(z, weights, tau):
    """Neighbourhood-contrastive loss on cosine similarities and its gradient.

    ``-log(sum_ij w_ij e_ij / sum_{i != k} e_ik)`` with ``e = exp(cos / tau)``.
    Returns ``(0, zeros)`` when no pair in the batch carries weight.
    """
    w = np.asarray(weights, dtype=np.float64)
    b = z.shape[0]
    if not np.any(w > 0):
        return 0.0, np.zeros_like(z)
    u, norms = _unit_rows(z)
    s = u @ u.T
    e = np.exp(s / tau)
    off = 1.0 - np.eye(b)
    num = (w * e).sum()
    den = (off * e).sum()
    loss = math.log(den) - math.log(num)
    ds = (off * e / den - w * e / num) / tau
    return loss, _unit_rows_backward((ds + ds.T) @ u, u, norms)


def _batch_weights(mask, batch):
    sub = mask[batch][:, batch]
    return sub.toarray() if sp.issparse(sub) else np.asarray(sub)


def _reconstruction(model, x, w, tau, train, rng):
    z, enc_cache = model.encoder.forward(model.params, model.buffers, x, train, rng)
    xr, dec_cache = model.decoder.forward(model.params, model.buffers, z, train, rng)
    diff = xr - x
    mse = float((diff * diff).mean())
    dxr = 2.0 * diff / diff.size
    contrast, dz_c = contrastive_term(z, w, tau)
    dz_dec, dec_grads = model.decoder.backward(model.params, dxr, dec_cache)
    return {
        "loss": mse + contrast, "mse": mse, "contrast": contrast,
        "z": z, "enc_cache": enc_cache, "dec_cache": dec_cache, "dz": dz_dec + dz_c,
        "dec_grads": dec_grads,
    }


def _adversarial(model, z, s, target=None, mode="unit"):
    # the discriminator sees a scale-free view of the embedding: its scale is
    # unconstrained (cosine similarity and batch norm ignore it) and would
    # otherwise be inflated until the discriminator's tanh units saturate
    if mode == "unit":
        u, norms = _unit_rows(z)
    else:
        u, inv = _standardize_batch(z)
    logit, cache = model.discriminator.forward(model.params, model.buffers, u, train=True)
    logit = logit[:, 0]
    y = s if target is None else np.full_like(s, target)
    loss = float(np.mean(np.logaddexp(0.0, logit) - y * logit))
    prob = np.exp(-np.logaddexp(0.0, -logit))
    dlogit = ((prob - y) / len(s))[:, None]
    du, disc_grads = model.discriminator.backward(model.params, dlogit, cache)
    dz = _unit_rows_backward(du, u, norms) if mode == "unit" else _standardize_batch_backward(du, u, inv)
    acc = float(np.mean((logit > 0) == (s == 1)))
    return loss, dz, disc_grads, acc


def _features(g):
    if g.attributes is None:
        raise ConfigError("graph has no attributes; generate features first")
    return g.attributes


def reconstruction_loss(model, g, mask, batch, cfg, rng=None, train=True):
    """Reconstruction objective on one batch and its encoder/decoder gradients.

    Mean squared reconstruction error plus the contrastive term over the
    batch's 2-hop weights.  Returns ``(loss, grads, parts)``.
    """
    batch = np.asarray(batch)
    if len(batch) < 2:
        raise ConfigError("the contrastive term needs a batch of at least two nodes")
    x = _features(g)[batch]
    r = _reconstruction(model, x, _batch_weights(mask, batch), cfg.tau, train, rng)
    _, enc_grads = model.encoder.backward(model.params, r["dz"], r["enc_cache"])
    grads = {**enc_grads, **r["dec_grads"]}
    return r["loss"], grads, {"mse": r["mse"], "contrast": r["contrast"]}


@dataclass
class AdversarialResult:
    loss: float
    disc_grads: dict
    encoder_grads: dict
    accuracy: float


def adversarial_loss(model, g, batch, cfg, rng=None, train=True):
    """Discriminator cross-entropy on the batch embedding.

    ``disc_grads`` minimise the loss (the discriminator's move); the encoder
    plays against it, so its update uses ``-encoder_grads``.  Returns None
    when the batch holds a single group.
    """
    batch = np.asarray(batch)
    s = g.groups[batch].astype(np.float64)
    if s.min() == s.max():
        return None
    z, enc_cache = model.encode(_features(g)[batch], train, rng)
    loss, dz, disc_grads, acc = _adversarial(model, z, s, mode=cfg.disc_input)
    _, enc_grads = model.encoder.backward(model.params, dz, enc_cache)
    return AdversarialResult(loss, disc_grads, enc_grads, acc)


def minimax_objective(model, x, w, s, cfg, adv_weight, rng=None, train=True):
    """Encoder-side objective and its gradients.

    With ``cfg.encoder_adv == "negated"`` this is ``L_R - adv_weight * L_A``.
    With ``"confusion"`` the encoder instead minimises
    ``L_R + adv_weight * CE(D(F(x)), 1/2)``, pulling the discriminator towards
    an uninformative 0.5 rather than towards confidently wrong answers.
    """
    r = _reconstruction(model, x, w, cfg.tau, train, rng)
    dz = r["dz"]
    loss = r["loss"]
    adv = None
    if s is not None and s.min() != s.max() and adv_weight > 0:
        if cfg.encoder_adv == "confusion":
            adv, _, _, _ = _adversarial(model, r["z"], s, mode=cfg.disc_input)
            conf, dz_a, _, _ = _adversarial(model, r["z"], s, target=0.5, mode=cfg.disc_input)
            loss += adv_weight * conf
            dz = dz + adv_weight * dz_a
        else:
            adv, dz_a, _, _ = _adversarial(model, r["z"], s, mode=cfg.disc_input)
            loss -= adv_weight * adv
            dz = dz - adv_weight * dz_a
    _, enc_grads = model.encoder.backward(model.params, dz, r["enc_cache"])
    grads = {**enc_grads, **r["dec_grads"]}
    return loss, grads, {"rec": r["loss"], "adv": adv, "enc_cache": r["enc_cache"],
                         "dec_cache": r["dec_cache"]}


# --- training --------------------------------------------------------------------

class _Momentum:
    def __init__(self, lr, momentum, clip):
        self.lr, self.momentum, self.clip = lr, momentum, clip
        self.velocity = {}

    def step(self, params, grads):
        if self.clip is not None:
            norm = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
            if norm > self.clip:
                grads = {k: g * (self.clip / norm) for k, g in grads.items()}
        for k, g in grads.items():
            v = self.velocity.get(k)
            v = -self.lr * g if v is None else self.momentum * v - self.lr * g
            self.velocity[k] = v
            params[k] = params[k] + v


@dataclass
class EpochLog:
    epoch: int
    rec_loss: float
    adv_loss: float
    disc_acc: float
    skipped_adv: int = 0


@dataclass
class TrainResult:
    embedding: np.ndarray
    log: list
    model: ModelParams
    initial_rec_loss: float | None = None
    final_rec_loss: float | None = None


def standardize(x):
    mu = x.mean(axis=0)
    sd = x.std(axis=0)
    return (x - mu) / np.where(sd > 0, sd, 1.0)


def _batches(order, size):
    out = [order[i:i + size] for i in range(0, len(order), size)]
    if len(out) > 1 and len(out[-1]) < 2:
        out[-2] = np.concatenate([out[-2], out.pop()])
    return out


def full_reconstruction_loss(model, x, mask, cfg):
    """Evaluation-mode reconstruction objective over all nodes."""
    w = mask.toarray() if sp.issparse(mask) else mask
    return _reconstruction(model, x, w, cfg.tau, False, None)["loss"]


def train(g, cfg=None, track_loss=False):
    """Train the debiased encoder on ``g`` and embed every node.

    ``g.groups`` must be binary (for a line graph: inter/intra labels).  Each
    batch first takes a discriminator step, then an encoder/decoder step on
    ``L_R - lambda * L_A``; lambda ramps up linearly over the warm-up epochs.
    The returned embedding is the evaluation-mode encoder output.
    """
    cfg = cfg or TrainConfig()
    x = _features(g)
    if g.group_count > 2:
        raise ConfigError("the adversary supports binary groups only")
    if cfg.standardize:
        x = standardize(x)
    n = g.node_count
    s_all = g.groups.astype(np.float64)
    mask = two_hop_mask(g, cfg.binarize_mask)
    model = ModelParams.initialize(x.shape[1], cfg)
    initial = full_reconstruction_loss(model, x, mask, cfg) if track_loss and n >= 2 else None
    enc_opt = _Momentum(cfg.lr, cfg.momentum, cfg.clip_norm)
    disc_opt = _Momentum(cfg.disc_lr, cfg.momentum, cfg.clip_norm)
    shuffle = stream(cfg.seed, "fairembed-batches")
    noise = stream(cfg.seed, "fairembed-dropout")
    warm = max(1, int(math.ceil(cfg.warmup_fraction * cfg.epochs)))
    history = []
    disc_names = model.names("disc")
    for epoch in range(cfg.epochs):
        lam = cfg.adv_weight * min(1.0, (epoch + 1) / warm)
        rec_sum = adv_sum = acc_sum = 0.0
        seen = adv_seen = skipped = 0
        for batch in _batches(shuffle.permutation(n), cfg.batch_size):
            xb, sb = x[batch], s_all[batch]
            wb = _batch_weights(mask, batch)
            two_groups = sb.min() != sb.max()
            if two_groups and lam > 0:
                z, _ = model.encode(xb, True, noise)
                for _ in range(cfg.disc_steps):
                    adv, _, disc_grads, acc = _adversarial(model, z, sb, mode=cfg.disc_input)
                    disc_opt.step(model.params, {k: disc_grads[k] for k in disc_names})
                adv_sum += adv * len(batch)
                acc_sum += acc * len(batch)
                adv_seen += len(batch)
            else:
                skipped += 1
            loss, grads, parts = minimax_objective(model, xb, wb, sb if two_groups else None, cfg, lam, noise)
            if not np.isfinite(loss):
                raise TrainingError("loss is not finite", epoch)
            enc_opt.step(model.params, grads)
            model.encoder.update_running_stats(model.buffers, parts["enc_cache"])
            model.decoder.update_running_stats(model.buffers, parts["dec_cache"])
            rec_sum += parts["rec"] * len(batch)
            seen += len(batch)
        entry = EpochLog(epoch, rec_sum / max(seen, 1),
                         adv_sum / adv_seen if adv_seen else float("nan"),
                         acc_sum / adv_seen if adv_seen else float("nan"), skipped)
        if not np.isfinite(entry.rec_loss):
            raise TrainingError("reconstruction loss is not finite", epoch)
        history.append(entry)
    emb, _ = model.encode(x, train=False)
    if not np.all(np.isfinite(emb)):
        raise TrainingError("embedding contains non-finite values", cfg.epochs)
    final = full_reconstruction_loss(model, x, mask, cfg) if track_loss and n >= 2 else None
    return TrainResult(emb, history, model, initial, final)


def write_training_log(history, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("epoch,L_R,L_A,disc_acc\n")
        for e in history:
            fh.write(f"{e.epoch},{e.rec_loss!r},{e.adv_loss!r},{e.disc_acc!r}\n")


# --- co-embedding -----------------------------------------------------------------

def co_embed(h_g, h_l, lg, mode="mean"):
    """Fuse node and line-node embeddings.

    ``mode="mean"`` adds to each node the average embedding of its incident
    edges; ``mode="literal"`` divides the incident sum by the node count
    instead.  Isolated nodes keep their node embedding.
    """
    h_g = np.asarray(h_g, dtype=np.float64)
    h_l = np.asarray(h_l, dtype=np.float64)
    if h_g.ndim != 2 or h_l.ndim != 2 or h_g.shape[1] != h_l.shape[1]:
        raise ShapeError(f"embedding dims differ: {h_g.shape} vs {h_l.shape}")
    if h_g.shape[0] != lg.source_node_count or h_l.shape[0] != len(lg.edge_index):
        raise ShapeError("embedding rows do not match the graph and its line graph")
    inc = lg.incidence()
    summed = inc @ h_l
    if mode == "mean":
        deg = np.asarray(inc.sum(axis=1)).ravel()
        return h_g + summed / np.where(deg > 0, deg, 1.0)[:, None]
    if mode == "literal":
        return h_g + summed / h_g.shape[0]
    raise ConfigError(f"unknown co-embedding mode {mode!r}")


__all__ = [
    "TrainConfig",
    "ModelParams",
    "MLP",
    "two_hop_mask",
    "contrastive_term",
    "reconstruction_loss",
    "adversarial_loss",
    "AdversarialResult",
    "minimax_objective",
    "train",
    "TrainResult",
    "EpochLog",
    "co_embed",
    "standardize",
    "full_reconstruction_loss",
    "write_training_log",
]
