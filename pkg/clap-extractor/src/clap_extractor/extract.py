"""Embed manifests and prompts into CLAPEMB1 stores.

The stores are built through the harness's own datastore API, which makes
bit-compatibility a non-issue: whatever it writes, it reads. Vectors are
L2-normalized float32; unreadable clips are logged, skipped, and noted in
the store metadata so the sidecar manifest records exactly what is missing.
"""

from __future__ import annotations

import logging

import numpy as np
import torch
from clapadapt.datastore import EmbeddingRecord, EmbeddingStore

from .audio import prepare_clip
from .encoder import EncoderBundle, load_encoder
from .errors import ExtractorError, SpecError, UnreadableAudio
from .manifest import AudioItem
from .specs import ExtractionSpec, PromptSpec

log = logging.getLogger("clap_extractor")

PROMPT_LANGUAGE = "prompt"


def _check_rate(spec: ExtractionSpec, bundle: EncoderBundle) -> None:
    if spec.sampling_rate != bundle.sampling_rate:
        raise SpecError(
            f"spec sampling_rate {spec.sampling_rate} != encoder requirement "
            f"{bundle.sampling_rate} ({bundle.checkpoint})")


def _normalize_rows(mat: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(mat, axis=1)
    if not np.all(np.isfinite(mat)) or np.any(norms < 1e-12):
        raise ExtractorError("encoder produced a non-finite or zero embedding")
    return (mat / norms[:, None]).astype(np.float32)


def embed_clips(waves: list[np.ndarray], spec: ExtractionSpec,
                bundle: EncoderBundle) -> np.ndarray:
    """Batched inference over prepared clips -> unit-norm (N, d) float32."""
    chunks = []
    with torch.inference_mode():
        for start in range(0, len(waves), spec.batch_size):
            batch = torch.from_numpy(np.stack(waves[start:start + spec.batch_size]))
            chunks.append(bundle.embed_audio(batch).cpu().numpy().astype(np.float64))
    return _normalize_rows(np.concatenate(chunks, axis=0))


def extract_audio(items: list[AudioItem], spec: ExtractionSpec,
                  bundle: EncoderBundle | None = None) -> EmbeddingStore:
    """Embed every readable clip of the manifest into a store.

    Unreadable clips are skipped; each skip is logged and recorded under
    meta["skipped"] as {id, path, error}. An empty result (nothing
    readable) is an error, not an empty store.
    """
    spec.validate()
    if not items:
        raise SpecError("manifest has no items")
    if bundle is None:
        bundle = load_encoder(spec.checkpoint)
    _check_rate(spec, bundle)

    kept, waves, skipped = [], [], []
    for item in items:
        try:
            waves.append(prepare_clip(item.path, spec))
        except UnreadableAudio as e:
            log.warning("skipping %s: %s", item.id, e)
            skipped.append({"id": item.id, "path": item.path, "error": str(e)})
            continue
        kept.append(item)
    if not kept:
        raise ExtractorError(f"no readable audio among {len(items)} manifest rows")

    vectors = embed_clips(waves, spec, bundle)
    records = [
        EmbeddingRecord(it.id, it.language, it.split, it.label, vec)
        for it, vec in zip(kept, vectors)
    ]
    store = EmbeddingStore(
        dim=bundle.embed_dim,
        languages=sorted({it.language for it in kept}),
        records=records,
        meta={**spec.meta(), "kind": "audio", "skipped": skipped},
    )
    store.validate()
    return store


def extract_prompts(prompts: PromptSpec, spec: ExtractionSpec,
                    bundle: EncoderBundle | None = None) -> EmbeddingStore:
    """Embed one prompt per class into a two-record prototype store.

    Record ids are p0/p1; the prompt texts live in meta["prompts"] keyed by
    label, which is where the harness's prototype reader looks for them.
    """
    spec.validate()
    pairs = prompts.ordered()
    if bundle is None:
        bundle = load_encoder(spec.checkpoint)
    vectors = _normalize_rows(
        bundle.embed_text([text for _, text in pairs]).cpu().numpy().astype(np.float64))
    records = [
        EmbeddingRecord(f"p{label}", PROMPT_LANGUAGE, "train", label, vec)
        for (label, _), vec in zip(pairs, vectors)
    ]
    store = EmbeddingStore(
        dim=bundle.embed_dim,
        languages=[PROMPT_LANGUAGE],
        records=records,
        meta={**spec.meta(), "kind": "prompts",
              "prompts": {str(label): text for label, text in pairs}},
    )
    store.validate()
    return store
