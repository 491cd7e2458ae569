"""Joint fine-tuning: projection head plus the last two audio encoder
blocks, trained with the supervised contrastive objective on a k-shot
support set, then dumped as an adapted store over every manifest row.

The dumped store carries the same ids, languages, splits, and labels as a
plain extraction over the same manifest, so the evaluation harness can
consume it as an externally adapted store without any special casing. The
encoder bundle is modified in place; load a fresh bundle to get frozen
weights back.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import torch
from clapadapt.datastore import EmbeddingRecord, EmbeddingStore

from .audio import prepare_clip
from .encoder import EncoderBundle, load_encoder
from .errors import ExtractorError, SpecError, TrainingDiverged, UnreadableAudio
from .extract import _check_rate, _normalize_rows
from .manifest import AudioItem
from .specs import ExtractionSpec

log = logging.getLogger("clap_extractor")

FULL_BATCH_CAP = 256  # above this, shuffled minibatches of MINIBATCH
MINIBATCH = 64


@dataclass(frozen=True)
class FinetuneConfig:
    epochs: int = 50
    head_lr: float = 1e-4
    encoder_lr: float | None = None  # None: head_lr / 10
    weight_decay: float = 0.01
    temperature: float = 0.07
    head_hidden: int | None = None  # None: encoder embed_dim
    head_out: int = 128

    def validate(self) -> None:
        if self.epochs < 1:
            raise SpecError(f"epochs must be >= 1, got {self.epochs}")
        if self.head_lr <= 0 or (self.encoder_lr is not None and self.encoder_lr <= 0):
            raise SpecError("learning rates must be > 0")
        if self.temperature <= 0:
            raise SpecError(f"temperature must be > 0, got {self.temperature}")
        if self.head_out < 1 or (self.head_hidden is not None and self.head_hidden < 1):
            raise SpecError("head widths must be >= 1")

    def resolved_encoder_lr(self) -> float:
        # fine-tuning wants a gentler encoder step than the fresh head
        return self.encoder_lr if self.encoder_lr is not None else self.head_lr / 10.0


def sample_support(items: list[AudioItem], k: int, seed: int) -> list[AudioItem]:
    """k train-split items per (language, label), clamped to what exists.

    Groups are visited in sorted order and each draws from the shared
    generator, so the result is a pure function of (manifest, k, seed).
    """
    if k < 1:
        raise SpecError(f"k must be >= 1; 0-shot fine-tuning is the frozen store (got {k})")
    groups: dict[tuple[str, int], list[AudioItem]] = {}
    for it in items:
        if it.split == "train":
            groups.setdefault((it.language, it.label), []).append(it)
    if not groups:
        raise SpecError("manifest has no train-split rows to sample support from")
    rng = np.random.default_rng(seed)
    support = []
    for key in sorted(groups):
        pool = sorted(groups[key], key=lambda it: it.id)
        picks = rng.permutation(len(pool))[: min(k, len(pool))]
        support.extend(pool[i] for i in sorted(picks))
    return support


def _build_head(embed_dim: int, cfg: FinetuneConfig, gen: torch.Generator) -> torch.nn.Sequential:
    hidden = cfg.head_hidden if cfg.head_hidden is not None else embed_dim
    head = torch.nn.Sequential(
        torch.nn.Linear(embed_dim, hidden),
        torch.nn.ReLU(),
        torch.nn.Linear(hidden, cfg.head_out),
    )
    with torch.no_grad():
        for module in head:
            if isinstance(module, torch.nn.Linear):
                bound = module.in_features ** -0.5
                for p in module.parameters():
                    p.copy_(torch.empty_like(p).uniform_(-bound, bound, generator=gen))
    return head


def supcon_loss(z: torch.Tensor, labels: torch.Tensor, tau: float) -> torch.Tensor:
    """Anchors average the log-probability of their positives; anchors
    without positives are skipped; all-skipped is the caller's error."""
    n = z.shape[0]
    eye = torch.eye(n, dtype=torch.bool)
    pos = (labels[:, None] == labels[None, :]) & ~eye
    counts = pos.sum(dim=1)
    keep = counts > 0
    if not bool(keep.any()):
        return torch.tensor(float("nan"))
    sim = (z @ z.T) / tau
    sim = sim.masked_fill(eye, float("-inf"))
    logprob = sim - torch.logsumexp(sim, dim=1, keepdim=True)
    # zero the -inf diagonal before masking, else -inf * 0 poisons the sum
    logprob = logprob.masked_fill(eye, 0.0)
    per_anchor = (logprob * pos.to(z.dtype)).sum(dim=1)[keep] / counts[keep].to(z.dtype)
    return -per_anchor.mean()


def finetune_and_dump(items: list[AudioItem], k: int, seed: int,
                      cfg: FinetuneConfig, spec: ExtractionSpec,
                      bundle: EncoderBundle | None = None) -> EmbeddingStore:
    """Train head + last two audio blocks on the k-shot support, then
    embed every readable manifest row through the tuned pipeline.

    Unreadable support files are an error (skipping would silently shrink
    k); unreadable non-support files are skipped with a metadata note, as
    in plain extraction.
    """
    cfg.validate()
    spec.validate()
    if bundle is None:
        bundle = load_encoder(spec.checkpoint)
    _check_rate(spec, bundle)

    support = sample_support(items, k, seed)
    sup_waves, sup_labels = [], []
    for it in support:
        try:
            sup_waves.append(prepare_clip(it.path, spec))
        except UnreadableAudio as e:
            raise UnreadableAudio(f"support clip {it.id}: {e}") from e
        sup_labels.append(it.label)
    X = torch.from_numpy(np.stack(sup_waves))
    y = torch.tensor(sup_labels, dtype=torch.long)
    if int(torch.bincount(y).max()) < 2:
        raise SpecError("support set has no same-class pair; nothing to contrast")

    gen = torch.Generator().manual_seed(seed)
    head = _build_head(bundle.embed_dim, cfg, gen)
    bundle.freeze()
    encoder_params = [p for blk in bundle.audio_blocks()[-2:] for p in blk.parameters()]
    for p in encoder_params:
        p.requires_grad_(True)
    optim = torch.optim.AdamW(
        [
            {"params": list(head.parameters()), "lr": cfg.head_lr},
            {"params": encoder_params, "lr": cfg.resolved_encoder_lr()},
        ],
        weight_decay=cfg.weight_decay,
    )

    n = len(y)
    final_loss = float("nan")
    for epoch in range(cfg.epochs):
        if n > FULL_BATCH_CAP:
            order = torch.randperm(n, generator=gen)
            batches = [order[i:i + MINIBATCH] for i in range(0, n, MINIBATCH)]
        else:
            batches = [torch.arange(n)]
        epoch_losses = []
        for sel in batches:
            yb = y[sel]
            if int(torch.bincount(yb).max()) < 2:
                continue  # this shuffle slice has no positive pair
            z = torch.nn.functional.normalize(head(bundle.embed_audio(X[sel])), dim=1)
            loss = supcon_loss(z, yb, cfg.temperature)
            if not torch.isfinite(loss):
                raise TrainingDiverged(epoch, f"non-finite loss at epoch {epoch}")
            optim.zero_grad()
            loss.backward()
            optim.step()
            epoch_losses.append(float(loss.detach()))
        if not epoch_losses:
            raise SpecError("no minibatch had a same-class pair")
        final_loss = float(np.mean(epoch_losses))
    for p in list(head.parameters()) + encoder_params:
        if not torch.all(torch.isfinite(p)):
            raise TrainingDiverged(cfg.epochs - 1,
                                   f"non-finite weights after {cfg.epochs} epochs")

    head.eval()
    kept, waves, skipped = [], [], []
    for it in items:
        try:
            waves.append(prepare_clip(it.path, spec))
        except UnreadableAudio as e:
            log.warning("skipping %s: %s", it.id, e)
            skipped.append({"id": it.id, "path": it.path, "error": str(e)})
            continue
        kept.append(it)
    if not kept:
        raise ExtractorError(f"no readable audio among {len(items)} manifest rows")
    chunks = []
    with torch.inference_mode():
        for start in range(0, len(waves), spec.batch_size):
            batch = torch.from_numpy(np.stack(waves[start:start + spec.batch_size]))
            chunks.append(head(bundle.embed_audio(batch)).cpu().numpy().astype(np.float64))
    vectors = _normalize_rows(np.concatenate(chunks, axis=0))

    store = EmbeddingStore(
        dim=cfg.head_out,
        languages=sorted({it.language for it in kept}),
        records=[EmbeddingRecord(it.id, it.language, it.split, it.label, vec)
                 for it, vec in zip(kept, vectors)],
        meta={**spec.meta(), "kind": "audio-adapted", "strategy": "projection_ft",
              "shot": k, "seed": seed, "epochs": cfg.epochs,
              "head_lr": cfg.head_lr, "encoder_lr": cfg.resolved_encoder_lr(),
              "final_loss": final_loss, "support_ids": [it.id for it in support],
              "skipped": skipped},
    )
    store.validate()
    return store
