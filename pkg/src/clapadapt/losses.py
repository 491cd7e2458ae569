"""Contrastive objectives over embedding batches.

Two losses, one temperature-scaled cosine-similarity family:

* `infonce_symmetric`: the paired audio-text alignment loss, the mean of the
  audio-to-text and text-to-audio cross-entropies over an N x N similarity
  matrix whose diagonal holds the matched pairs.
* `supcon_loss` / `supcon_grad`: the label-supervised loss where, for each
  anchor, every other same-label sample is a positive and all other samples
  are the contrast set. Anchors without positives are skipped; NoPositives is
  raised only when no anchor has one.

Inputs are normalized internally (the losses are functions of directions
only), so gradients are taken with respect to the raw vectors and flow
through the normalization. All math runs in float64; hot paths live in
kernels.py.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import (
    DimensionMismatch,
    EmptyBatch,
    InvalidSpec,
    LengthMismatch,
    NonFiniteInput,
    NoPositives,
    ZeroNorm,
)
from .veccore import NORM_FLOOR

DEFAULT_TEMPERATURE = 0.07


@dataclass(frozen=True)
class LossConfig:
    """Shared knobs: softmax temperature and anchor averaging.

    average_anchors=True divides the supervised loss by the number of
    contributing anchors; False leaves the plain sum over anchors.
    """

    temperature: float = DEFAULT_TEMPERATURE
    average_anchors: bool = True

    def __post_init__(self):
        if not (self.temperature > 0.0 and np.isfinite(self.temperature)):
            raise InvalidSpec(f"temperature must be positive, got {self.temperature}")


@dataclass
class SupConBatch:
    """A batch of raw embeddings with integer class labels."""

    embeddings: np.ndarray  # (n, dim) float
    labels: np.ndarray  # (n,) int64

    @classmethod
    def build(cls, embeddings, labels) -> "SupConBatch":
        e = np.asarray(embeddings, dtype=np.float64)
        l = np.asarray(labels, dtype=np.int64)
        if e.ndim != 2:
            raise DimensionMismatch(f"embeddings must be 2-D, got ndim={e.ndim}")
        if l.ndim != 1:
            raise DimensionMismatch(f"labels must be 1-D, got ndim={l.ndim}")
        if e.shape[0] != l.shape[0]:
            raise LengthMismatch(f"{e.shape[0]} embeddings vs {l.shape[0]} labels")
        return cls(e, l)

    def validate(self) -> None:
        if self.embeddings.shape[0] == 0:
            raise EmptyBatch("empty contrastive batch")
        if not np.all(np.isfinite(self.embeddings)):
            raise NonFiniteInput("batch embeddings contain non-finite entries")
        norms = np.sqrt(np.einsum("ij,ij->i", self.embeddings, self.embeddings))
        bad = np.where(norms <= NORM_FLOOR)[0]
        if bad.size:
            raise ZeroNorm(f"batch row {bad[0]} has zero norm")

    def positive_counts(self) -> np.ndarray:
        same = self.labels[:, None] == self.labels[None, :]
        np.fill_diagonal(same, False)
        return same.sum(axis=1)


def _directional_ce(logits: np.ndarray) -> float:
    # mean over rows of (logsumexp(row) - diagonal), max-subtracted
    mx = logits.max(axis=1)
    lse = mx + np.log(np.exp(logits - mx[:, None]).sum(axis=1))
    return float(np.mean(lse - np.diag(logits)))


def _paired_logits(queries, keys, cfg: LossConfig) -> np.ndarray:
    q = np.asarray(queries, dtype=np.float64)
    k = np.asarray(keys, dtype=np.float64)
    if q.ndim != 2 or k.ndim != 2:
        raise DimensionMismatch("paired batches must be 2-D")
    if q.shape != k.shape:
        raise DimensionMismatch(f"paired batch shapes differ: {q.shape} vs {k.shape}")
    if q.shape[0] == 0:
        raise EmptyBatch("empty paired batch")
    if not (np.all(np.isfinite(q)) and np.all(np.isfinite(k))):
        raise NonFiniteInput("paired batch contains non-finite entries")
    qn = np.sqrt(np.einsum("ij,ij->i", q, q))
    kn = np.sqrt(np.einsum("ij,ij->i", k, k))
    if np.any(qn <= NORM_FLOOR) or np.any(kn <= NORM_FLOOR):
        raise ZeroNorm("paired batch contains a zero-norm row")
    return (q / qn[:, None]) @ (k / kn[:, None]).T / cfg.temperature


def infonce_directional(queries, keys, cfg: LossConfig | None = None) -> float:
    """Cross-entropy of each query against all keys, matched pairs on the diagonal."""
    cfg = cfg or LossConfig()
    return _directional_ce(_paired_logits(queries, keys, cfg))


def infonce_symmetric(audio, text, cfg: LossConfig | None = None) -> float:
    """Mean of the audio-to-text and text-to-audio directional losses.

    A single perfectly matched pair (N=1) yields exactly 0.0: the one-entry
    logsumexp equals the diagonal logit after max subtraction.
    """
    cfg = cfg or LossConfig()
    logits = _paired_logits(audio, text, cfg)
    return 0.5 * (_directional_ce(logits) + _directional_ce(logits.T))


def checked_batch(batch: SupConBatch) -> SupConBatch:
    """Validate a batch for supervised training: finite, nonzero rows, and
    at least one anchor with a positive."""
    if not isinstance(batch, SupConBatch):
        batch = SupConBatch.build(*batch)
    batch.validate()
    if not np.any(batch.positive_counts() > 0):
        raise NoPositives(
            f"no anchor in this batch of {len(batch.labels)} has a same-label partner"
        )
    return batch


def supcon_loss(batch: SupConBatch, cfg: LossConfig | None = None) -> float:
    cfg = cfg or LossConfig()
    batch = checked_batch(batch)
    loss, _ = kernels.supcon_value_grad(
        batch.embeddings, batch.labels, cfg.temperature, cfg.average_anchors, False
    )
    return loss


def supcon_grad(batch: SupConBatch, cfg: LossConfig | None = None) -> np.ndarray:
    cfg = cfg or LossConfig()
    batch = checked_batch(batch)
    _, grad = kernels.supcon_value_grad(
        batch.embeddings, batch.labels, cfg.temperature, cfg.average_anchors, True
    )
    return grad


def supcon_loss_and_grad(
    batch: SupConBatch, cfg: LossConfig | None = None
) -> tuple[float, np.ndarray]:
    """One fused evaluation; what the projection trainer calls every step."""
    cfg = cfg or LossConfig()
    batch = checked_batch(batch)
    return kernels.supcon_value_grad(
        batch.embeddings, batch.labels, cfg.temperature, cfg.average_anchors, True
    )
