"""Projection-head adaptation: the trainable part of the pipeline.

A head is a small stack of affine layers (relu between, identity last) whose
normalized output feeds the supervised contrastive loss. The default shape
maps input_dim -> input_dim (relu) -> 128 (identity). Training runs AdamW on
float64 working copies of the weights; the stored head stays float32.

Batching: gradient steps use the full support batch when it has at most
FULL_BATCH_LIMIT rows, otherwise shuffled minibatches of MINIBATCH rows.
Minibatches that end up without any positive pair are skipped (they carry no
gradient); the epoch loss is the mean over evaluated batches.

Head files use the PROJHD01 format described next to save_head.
"""

from __future__ import annotations

import os
import struct
import time
from dataclasses import dataclass, field

import numpy as np

from .datastore import EmbeddingStore
from .errors import (
    BadMagic,
    DimensionMismatch,
    EmptyBatch,
    InvalidDimension,
    InvalidSpec,
    NonFiniteLoss,
    TruncatedFile,
)
from .losses import LossConfig, SupConBatch, checked_batch, supcon_loss_and_grad
from .veccore import Rng, l2_normalize

HEAD_MAGIC = b"PROJHD01"
ACT_RELU = "relu"
ACT_IDENTITY = "identity"
_ACT_CODES = {ACT_RELU: 0, ACT_IDENTITY: 1}
_ACT_NAMES = {0: ACT_RELU, 1: ACT_IDENTITY}

DEFAULT_OUTPUT_DIM = 128
FULL_BATCH_LIMIT = 256
MINIBATCH = 64


@dataclass
class Layer:
    weights: np.ndarray  # (out_dim, in_dim) float32
    bias: np.ndarray  # (out_dim,) float32
    activation: str

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float32)
        self.bias = np.asarray(self.bias, dtype=np.float32)
        if self.weights.ndim != 2:
            raise InvalidDimension(f"layer weights ndim {self.weights.ndim}")
        if self.bias.shape != (self.weights.shape[0],):
            raise DimensionMismatch(
                f"bias {self.bias.shape} vs out_dim {self.weights.shape[0]}"
            )
        if self.activation not in _ACT_CODES:
            raise InvalidSpec(f"unknown activation {self.activation!r}")


@dataclass
class ProjectionHead:
    layers: list[Layer]

    def __post_init__(self):
        if not self.layers:
            raise InvalidDimension("head needs at least one layer")
        for a, b in zip(self.layers, self.layers[1:]):
            if b.weights.shape[1] != a.weights.shape[0]:
                raise DimensionMismatch(
                    f"layer chain breaks: {a.weights.shape[0]} -> {b.weights.shape[1]}"
                )

    @property
    def input_dim(self) -> int:
        return int(self.layers[0].weights.shape[1])

    @property
    def output_dim(self) -> int:
        return int(self.layers[-1].weights.shape[0])

    def copy(self) -> "ProjectionHead":
        return ProjectionHead(
            [Layer(l.weights.copy(), l.bias.copy(), l.activation) for l in self.layers]
        )


def init_head(input_dim: int, hidden_dim: int, output_dim: int, seed: int) -> ProjectionHead:
    """Two-layer head with scaled-uniform fan-in init, U(-1/sqrt(in), 1/sqrt(in))."""
    if min(input_dim, hidden_dim, output_dim) < 1:
        raise InvalidDimension(
            f"dims must be positive: {input_dim}, {hidden_dim}, {output_dim}"
        )
    rng = Rng(seed)
    layers = []
    shapes = [(hidden_dim, input_dim, ACT_RELU), (output_dim, hidden_dim, ACT_IDENTITY)]
    for k, (out_d, in_d, act) in enumerate(shapes):
        child = rng.split(f"layer{k}")
        bound = 1.0 / np.sqrt(in_d)
        w = (child.uniform(out_d * in_d).reshape(out_d, in_d) * 2.0 - 1.0) * bound
        b = (child.uniform(out_d) * 2.0 - 1.0) * bound
        layers.append(Layer(w.astype(np.float32), b.astype(np.float32), act))
    return ProjectionHead(layers)


def default_head(input_dim: int, seed: int) -> ProjectionHead:
    return init_head(input_dim, input_dim, DEFAULT_OUTPUT_DIM, seed)


def _forward_raw(params: list[np.ndarray], acts: list[str], X: np.ndarray):
    """Float64 forward pass; returns (raw output, per-layer caches)."""
    h = np.asarray(X, dtype=np.float64)
    caches = []
    for k, act in enumerate(acts):
        w, b = params[2 * k], params[2 * k + 1]
        a = h @ w.T + b
        caches.append((h, a))
        h = np.maximum(a, 0.0) if act == ACT_RELU else a
    return h, caches


def _backward(params, acts, caches, d_out):
    """Gradients for every weight/bias given dLoss/d(raw output)."""
    grads = [None] * len(params)
    dh = d_out
    for k in range(len(acts) - 1, -1, -1):
        h_in, a = caches[k]
        da = dh * (a > 0.0) if acts[k] == ACT_RELU else dh
        grads[2 * k] = da.T @ h_in
        grads[2 * k + 1] = da.sum(axis=0)
        if k > 0:
            dh = da @ params[2 * k]
    return grads


def project(head: ProjectionHead, x) -> np.ndarray:
    """Project one vector or a batch and L2-normalize the result (float32)."""
    X = np.asarray(x, dtype=np.float64)
    single = X.ndim == 1
    if single:
        X = X.reshape(1, -1)
    if X.shape[1] != head.input_dim:
        raise DimensionMismatch(f"input dim {X.shape[1]} vs head {head.input_dim}")
    acts = [l.activation for l in head.layers]
    params = []
    for l in head.layers:
        params.extend([l.weights.astype(np.float64), l.bias.astype(np.float64)])
    raw, _ = _forward_raw(params, acts, X)
    out = l2_normalize(raw)
    return out[0] if single else out


class AdamW:
    """Decoupled-weight-decay Adam over a list of float64 arrays.

    Defaults: betas (0.9, 0.999), eps 1e-8, weight_decay applied as
    p -= lr * wd * p before the moment update, decay skipped for 1-D
    parameters (biases).
    """

    def __init__(self, params, lr, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.01):
        self.params = params
        self.lr = float(lr)
        self.b1, self.b2 = betas
        self.eps = float(eps)
        self.weight_decay = float(weight_decay)
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, grads, lr_scale: float = 1.0) -> None:
        self.t += 1
        lr = self.lr * lr_scale
        bc1 = 1.0 - self.b1**self.t
        bc2 = 1.0 - self.b2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            if self.weight_decay and p.ndim > 1:
                p -= lr * self.weight_decay * p
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * (g * g)
            p -= lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


@dataclass(frozen=True)
class TrainConfig:
    """Contrastive training knobs; defaults follow the adapted pipeline."""

    epochs: int = 50
    learning_rate: float = 1e-4
    temperature: float = 0.07
    weight_decay: float = 0.01
    seed: int = 0
    batch_size: int | None = None  # None: full batch up to FULL_BATCH_LIMIT, else 64
    average_anchors: bool = True
    warmup_epochs: int = 0  # optional linear warmup to learning_rate

    def __post_init__(self):
        if self.epochs < 1:
            raise InvalidSpec(f"epochs must be >= 1, got {self.epochs}")
        if self.learning_rate <= 0:
            raise InvalidSpec(f"learning_rate must be positive, got {self.learning_rate}")
        if self.batch_size is not None and self.batch_size < 2:
            raise InvalidSpec("batch_size must be >= 2 when given")
        if self.warmup_epochs < 0:
            raise InvalidSpec("warmup_epochs must be >= 0")


@dataclass
class TrainReport:
    epoch_losses: list[float] = field(default_factory=list)
    batch_mode: str = "full"
    wall_time_s: float = 0.0

    @property
    def final_loss(self) -> float:
        return self.epoch_losses[-1] if self.epoch_losses else float("nan")

    @property
    def initial_loss(self) -> float:
        return self.epoch_losses[0] if self.epoch_losses else float("nan")


def train_projection(
    head: ProjectionHead, batch: SupConBatch, cfg: TrainConfig | None = None
) -> tuple[ProjectionHead, TrainReport]:
    """Fit a copy of `head` to the support batch with the supervised loss.

    Deterministic for a fixed (head, batch, cfg): shuffles and nothing else
    draw from streams derived from cfg.seed. Raises NonFiniteLoss with the
    epoch index if the loss degenerates; raises NoPositives straight away if
    no anchor has a positive partner.
    """
    cfg = cfg or TrainConfig()
    if not isinstance(batch, SupConBatch):
        batch = SupConBatch.build(*batch)
    batch.validate()
    n = batch.embeddings.shape[0]
    if batch.embeddings.shape[1] != head.input_dim:
        raise DimensionMismatch(
            f"batch dim {batch.embeddings.shape[1]} vs head {head.input_dim}"
        )
    loss_cfg = LossConfig(temperature=cfg.temperature, average_anchors=cfg.average_anchors)
    checked_batch(batch)  # fail fast if the whole batch is degenerate

    acts = [l.activation for l in head.layers]
    params = []
    for l in head.layers:
        params.extend([l.weights.astype(np.float64), l.bias.astype(np.float64)])
    opt = AdamW(params, lr=cfg.learning_rate, weight_decay=cfg.weight_decay)

    if cfg.batch_size is not None:
        bs = cfg.batch_size
    elif n <= FULL_BATCH_LIMIT:
        bs = n
    else:
        bs = MINIBATCH
    full_batch = bs >= n

    rng = Rng(cfg.seed)
    X = batch.embeddings.astype(np.float64)
    y = batch.labels.astype(np.int64)
    report = TrainReport(batch_mode="full" if full_batch else f"minibatch{bs}")
    started = time.perf_counter()

    for epoch in range(cfg.epochs):
        if full_batch:
            order = np.arange(n)
        else:
            order = rng.split(f"shuffle|{epoch}").permutation(n)
        losses = []
        for lo in range(0, n, bs):
            sel = order[lo : lo + bs]
            if sel.size < 2:
                continue
            yb = y[sel]
            same = yb[:, None] == yb[None, :]
            np.fill_diagonal(same, False)
            if not same.any():
                continue  # no positives in this minibatch, no gradient signal
            raw, caches = _forward_raw(params, acts, X[sel])
            if not np.all(np.isfinite(raw)):
                # distinguish divergence from bad input: the batch was checked
                # up front, so non-finite projections mean the optimizer blew up
                raise NonFiniteLoss(
                    epoch, f"training diverged: non-finite projections at epoch {epoch}"
                )
            loss, d_raw = supcon_loss_and_grad(SupConBatch.build(raw, yb), loss_cfg)
            if not np.isfinite(loss):
                raise NonFiniteLoss(epoch)
            grads = _backward(params, acts, caches, d_raw)
            lr_scale = (
                min(1.0, (epoch + 1) / cfg.warmup_epochs) if cfg.warmup_epochs else 1.0
            )
            opt.step(grads, lr_scale=lr_scale)
            losses.append(loss)
        if not losses:
            raise EmptyBatch("every minibatch was degenerate this epoch")
        report.epoch_losses.append(float(np.mean(losses)))

    report.wall_time_s = time.perf_counter() - started
    for p in params:
        # the loss guard sees pre-step forwards only; a diverging final step
        # would otherwise surface far away as a bad-data complaint
        if not np.all(np.isfinite(p)):
            raise NonFiniteLoss(
                cfg.epochs - 1,
                f"training diverged: non-finite weights after {cfg.epochs} epochs",
            )
    trained = ProjectionHead(
        [
            Layer(
                params[2 * k].astype(np.float32),
                params[2 * k + 1].astype(np.float32),
                acts[k],
            )
            for k in range(len(acts))
        ]
    )
    return trained, report


def adapt_store(head: ProjectionHead, store: EmbeddingStore) -> EmbeddingStore:
    """Project every record through the head; output vectors are unit-norm."""
    if len(store) == 0:
        raise EmptyBatch("cannot adapt an empty store")
    if store.dim != head.input_dim:
        raise DimensionMismatch(f"store dim {store.dim} vs head input {head.input_dim}")
    projected = project(head, store.vectors())
    return store.with_vectors(
        projected, meta_update={"adapted": {"output_dim": head.output_dim}}
    )


def normalize_store(store: EmbeddingStore) -> EmbeddingStore:
    """Identity adaptation: unit-normalize every vector, dim unchanged."""
    if len(store) == 0:
        raise EmptyBatch("cannot normalize an empty store")
    return store.with_vectors(l2_normalize(store.vectors()))


def save_head(head: ProjectionHead, path: str) -> None:
    """PROJHD01: magic, u32 layer count; per layer u32 out, u32 in, u8 act,
    then row-major f32 weights and f32 bias. Little-endian throughout."""
    parts = [HEAD_MAGIC, struct.pack("<I", len(head.layers))]
    for l in head.layers:
        out_d, in_d = l.weights.shape
        parts.append(struct.pack("<IIB", out_d, in_d, _ACT_CODES[l.activation]))
        parts.append(np.ascontiguousarray(l.weights, dtype="<f4").tobytes())
        parts.append(np.ascontiguousarray(l.bias, dtype="<f4").tobytes())
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(b"".join(parts))
    os.replace(tmp, path)


def load_head(path: str) -> ProjectionHead:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < len(HEAD_MAGIC) + 4:
        raise TruncatedFile(f"{path}: too short for a head file")
    if blob[:8] != HEAD_MAGIC:
        raise BadMagic(f"{path}: expected {HEAD_MAGIC!r}, got {blob[:8]!r}")
    (n_layers,) = struct.unpack_from("<I", blob, 8)
    offset = 12
    layers = []
    for k in range(n_layers):
        if offset + 9 > len(blob):
            raise TruncatedFile(f"{path}: layer {k} header at {offset}")
        out_d, in_d, act = struct.unpack_from("<IIB", blob, offset)
        offset += 9
        if act not in _ACT_NAMES:
            raise TruncatedFile(f"{path}: layer {k} activation code {act}")
        need = 4 * (out_d * in_d + out_d)
        if offset + need > len(blob):
            raise TruncatedFile(f"{path}: layer {k} data ends past file end")
        w = np.frombuffer(blob, dtype="<f4", count=out_d * in_d, offset=offset)
        offset += 4 * out_d * in_d
        b = np.frombuffer(blob, dtype="<f4", count=out_d, offset=offset)
        offset += 4 * out_d
        layers.append(
            Layer(w.reshape(out_d, in_d).copy(), b.copy(), _ACT_NAMES[act])
        )
    if offset != len(blob):
        raise TruncatedFile(f"{path}: {len(blob) - offset} trailing bytes")
    return ProjectionHead(layers)
