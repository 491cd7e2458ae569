"""Binary embedding store, few-shot support sampling, synthetic corpora.

File format (all little-endian), sidecar manifest at <path>.manifest.json:

    magic   8 bytes  b"CLAPEMB1"
    dim     u32
    count   u64
    then per record:
        id_len   u16
        id       id_len bytes, UTF-8
        language u8   (index into the manifest language table)
        split    u8   (0 = train, 1 = test)
        label    u8   (0 or 1)
        vector   dim * f32

The manifest is canonical JSON (sorted keys, no spaces, trailing newline)
holding format, dim, count, the language table, and a free-form meta object.
`store_hash` is the first 16 hex chars of sha256 over binary blob + manifest,
and is embedded in every result file downstream so merges can refuse
mismatched data.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    BadMagic,
    DataError,
    DimensionMismatch,
    DuplicateId,
    InvalidSpec,
    ManifestError,
    NonFiniteInput,
    TruncatedFile,
    UnknownLanguage,
)
from .veccore import NORM_FLOOR, Rng, l2_normalize

MAGIC = b"CLAPEMB1"
SPLIT_TRAIN = "train"
SPLIT_TEST = "test"
_SPLIT_CODES = {SPLIT_TRAIN: 0, SPLIT_TEST: 1}
_SPLIT_NAMES = {0: SPLIT_TRAIN, 1: SPLIT_TEST}


@dataclass
class EmbeddingRecord:
    id: str
    language: str
    split: str
    label: int
    vector: np.ndarray  # (dim,) float32


@dataclass
class EmbeddingStore:
    dim: int
    languages: list[str]
    records: list[EmbeddingRecord]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self._by_id = None

    def __len__(self) -> int:
        return len(self.records)

    def _index(self) -> dict:
        if self._by_id is None:
            self._by_id = {r.id: r for r in self.records}
        return self._by_id

    def by_id(self, rec_id: str) -> EmbeddingRecord:
        rec = self._index().get(rec_id)
        if rec is None:
            raise DataError(f"id {rec_id!r} not in store")
        return rec

    def has_id(self, rec_id: str) -> bool:
        return rec_id in self._index()

    def select(self, language=None, split=None, label=None, ids=None) -> list[EmbeddingRecord]:
        """Records matching all given filters, in store order."""
        idset = set(ids) if ids is not None else None
        out = []
        for r in self.records:
            if language is not None and r.language != language:
                continue
            if split is not None and r.split != split:
                continue
            if label is not None and r.label != label:
                continue
            if idset is not None and r.id not in idset:
                continue
            out.append(r)
        return out

    def subset(self, ids) -> "EmbeddingStore":
        """New store with only `ids`, preserving store order; meta carried over."""
        want = set(ids)
        missing = want - set(self._index())
        if missing:
            raise DataError(f"{len(missing)} ids not in store, e.g. {sorted(missing)[0]!r}")
        recs = [r for r in self.records if r.id in want]
        return EmbeddingStore(self.dim, list(self.languages), recs, dict(self.meta))

    def vectors(self, ids=None) -> np.ndarray:
        """(n, dim) float32 matrix; `ids` order when given, store order otherwise."""
        if ids is None:
            recs = self.records
        else:
            recs = [self.by_id(i) for i in ids]
        if not recs:
            return np.zeros((0, self.dim), dtype=np.float32)
        return np.stack([r.vector for r in recs]).astype(np.float32)

    def labels(self, ids=None) -> np.ndarray:
        recs = self.records if ids is None else [self.by_id(i) for i in ids]
        return np.array([r.label for r in recs], dtype=np.int64)

    def with_vectors(self, matrix: np.ndarray, meta_update: dict | None = None) -> "EmbeddingStore":
        """Clone with replaced vectors (same ids/order); dim may change."""
        m = np.asarray(matrix, dtype=np.float32)
        if m.shape[0] != len(self.records):
            raise DimensionMismatch(f"{m.shape[0]} rows for {len(self.records)} records")
        meta = dict(self.meta)
        if meta_update:
            meta.update(meta_update)
        recs = [replace(r, vector=m[i].copy()) for i, r in enumerate(self.records)]
        return EmbeddingStore(int(m.shape[1]), list(self.languages), recs, meta)

    def validate(self) -> None:
        if self.dim <= 0:
            raise DimensionMismatch(f"store dim must be positive, got {self.dim}")
        if not (0 < len(self.languages) <= 255):
            raise ManifestError(f"{len(self.languages)} languages (need 1..255)")
        if len(set(self.languages)) != len(self.languages):
            raise ManifestError("duplicate language names")
        lang_set = set(self.languages)
        seen = set()
        for r in self.records:
            if r.id in seen:
                raise DuplicateId(f"duplicate record id {r.id!r}")
            seen.add(r.id)
            if r.language not in lang_set:
                raise UnknownLanguage(f"record {r.id!r} language {r.language!r}")
            if r.split not in _SPLIT_CODES:
                raise ManifestError(f"record {r.id!r} split {r.split!r}")
            if r.label not in (0, 1):
                raise ManifestError(f"record {r.id!r} label {r.label!r} (binary task)")
            if r.vector.shape != (self.dim,):
                raise DimensionMismatch(
                    f"record {r.id!r} vector shape {r.vector.shape}, store dim {self.dim}"
                )
            if not np.all(np.isfinite(r.vector)):
                raise NonFiniteInput(f"record {r.id!r} vector has non-finite entries")


def _canon_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n"


def manifest_path(path: str) -> str:
    return f"{path}.manifest.json"


def serialize_store(store: EmbeddingStore) -> tuple[bytes, str]:
    """(binary blob, manifest text); validates first."""
    store.validate()
    lang_index = {name: i for i, name in enumerate(store.languages)}
    parts = [MAGIC, struct.pack("<IQ", store.dim, len(store.records))]
    for r in store.records:
        rid = r.id.encode("utf-8")
        if len(rid) > 0xFFFF:
            raise DataError(f"id too long: {len(rid)} bytes")
        parts.append(struct.pack("<H", len(rid)))
        parts.append(rid)
        parts.append(
            struct.pack("<BBB", lang_index[r.language], _SPLIT_CODES[r.split], r.label)
        )
        parts.append(np.ascontiguousarray(r.vector, dtype="<f4").tobytes())
    manifest = _canon_json(
        {
            "format": "CLAPEMB1",
            "dim": store.dim,
            "count": len(store.records),
            "languages": store.languages,
            "meta": store.meta,
        }
    )
    return b"".join(parts), manifest


def store_hash(store: EmbeddingStore) -> str:
    blob, manifest = serialize_store(store)
    return hashlib.sha256(blob + manifest.encode("utf-8")).hexdigest()[:16]


def write_store(store: EmbeddingStore, path: str) -> str:
    """Write blob + manifest atomically (tmp file, rename); returns store_hash."""
    blob, manifest = serialize_store(store)
    for target, data in ((path, blob), (manifest_path(path), manifest.encode("utf-8"))):
        tmp = f"{target}.tmp"
        with open(tmp, "wb") as fh:
            fh.write(data)
        os.replace(tmp, target)
    return hashlib.sha256(blob + manifest.encode("utf-8")).hexdigest()[:16]


def read_store(path: str) -> EmbeddingStore:
    mpath = manifest_path(path)
    if not os.path.exists(mpath):
        raise ManifestError(f"manifest missing: {mpath}")
    try:
        with open(mpath, "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise ManifestError(f"unparsable manifest {mpath}: {e}") from e
    if manifest.get("format") != "CLAPEMB1":
        raise ManifestError(f"manifest format {manifest.get('format')!r}")
    languages = manifest.get("languages")
    if not isinstance(languages, list) or not all(isinstance(x, str) for x in languages):
        raise ManifestError("manifest languages must be a list of strings")

    with open(path, "rb") as fh:
        blob = fh.read()
    head_size = len(MAGIC) + 12
    if len(blob) < head_size:
        raise TruncatedFile(f"{path}: {len(blob)} bytes is shorter than the header")
    if blob[: len(MAGIC)] != MAGIC:
        raise BadMagic(f"{path}: expected {MAGIC!r}, got {blob[:8]!r}")
    dim, count = struct.unpack_from("<IQ", blob, len(MAGIC))
    if dim <= 0:
        raise ManifestError(f"{path}: dim {dim}")
    if manifest.get("dim") != dim or manifest.get("count") != count:
        raise ManifestError(
            f"manifest dim/count {manifest.get('dim')}/{manifest.get('count')} "
            f"vs binary {dim}/{count}"
        )

    offset = head_size
    vec_bytes = 4 * dim
    records = []
    seen = set()
    for k in range(count):
        if offset + 2 > len(blob):
            raise TruncatedFile(f"{path}: record {k} id length at {offset}")
        (id_len,) = struct.unpack_from("<H", blob, offset)
        offset += 2
        end = offset + id_len + 3 + vec_bytes
        if end > len(blob):
            raise TruncatedFile(f"{path}: record {k} ends at {end} > {len(blob)}")
        rid = blob[offset : offset + id_len].decode("utf-8")
        offset += id_len
        lang_idx, split_code, label = struct.unpack_from("<BBB", blob, offset)
        offset += 3
        if rid in seen:
            raise DuplicateId(f"{path}: duplicate id {rid!r}")
        seen.add(rid)
        if lang_idx >= len(languages):
            raise ManifestError(f"{path}: record {rid!r} language index {lang_idx}")
        if split_code not in _SPLIT_NAMES:
            raise ManifestError(f"{path}: record {rid!r} split code {split_code}")
        if label not in (0, 1):
            raise ManifestError(f"{path}: record {rid!r} label {label}")
        vec = np.frombuffer(blob, dtype="<f4", count=dim, offset=offset).astype(np.float32)
        offset += vec_bytes
        records.append(
            EmbeddingRecord(rid, languages[lang_idx], _SPLIT_NAMES[split_code], label, vec)
        )
    if offset != len(blob):
        raise TruncatedFile(f"{path}: {len(blob) - offset} trailing bytes after last record")

    store = EmbeddingStore(dim, languages, records, manifest.get("meta") or {})
    store.validate()
    return store


# few-shot support sampling


@dataclass
class SupportItem:
    language: str
    label: int
    ids: list[str]
    available: int


@dataclass
class SupportSet:
    shot: int
    seed: int
    items: list[SupportItem]

    def all_ids(self) -> list[str]:
        out = []
        for item in self.items:
            out.extend(item.ids)
        return out

    def total(self) -> int:
        return sum(len(item.ids) for item in self.items)

    def clamped(self) -> list[tuple[str, int, int]]:
        """(language, label, available) wherever fewer than `shot` existed."""
        return [
            (it.language, it.label, it.available)
            for it in self.items
            if it.available < self.shot
        ]


def sample_support(store, shot: int, seed: int, languages=None, within_ids=None) -> SupportSet:
    """Draw up to `shot` train-split records per (language, label).

    Each cell draws from its own child RNG stream keyed by language and
    label, so the selection for one cell never depends on which other
    languages are in play. Cells with fewer than `shot` eligible records are
    clamped to what exists, never an error.
    """
    if shot < 0:
        raise InvalidSpec(f"shot must be >= 0, got {shot}")
    if languages is None:
        languages = list(store.languages)
    else:
        unknown = [l for l in languages if l not in store.languages]
        if unknown:
            raise UnknownLanguage(f"not in store: {unknown}")
    root = Rng(seed)
    items = []
    for lang in languages:
        for label in (0, 1):
            elig = store.select(language=lang, split=SPLIT_TRAIN, label=label, ids=within_ids)
            if shot == 0 or not elig:
                items.append(SupportItem(lang, label, [], len(elig)))
                continue
            child = root.split(f"support|{lang}|{label}")
            take = min(shot, len(elig))
            picks = child.sample(len(elig), take)
            items.append(SupportItem(lang, label, [elig[i].id for i in picks], len(elig)))
    return SupportSet(shot, seed, items)


# synthetic corpora


@dataclass(frozen=True)
class SyntheticSpec:
    """Two unit-variance Gaussian clusters per language, one per class.

    Class c has mean language_offset + (2c - 1) * (separation / 2) * e0, where
    e0 is the first basis vector and language_offset is a fixed random
    direction of norm language_offset_scale drawn per language. label_noise
    flips each recorded label independently; ids keep the generating cluster.
    """

    languages: int
    dim: int
    per_class_train: int
    per_class_test: int
    separation: float
    language_offset_scale: float = 0.5
    label_noise: float = 0.0
    seed: int = 0
    normalize: bool = True

    def validate(self) -> None:
        if not (1 <= self.languages <= 255):
            raise InvalidSpec(f"languages must be 1..255, got {self.languages}")
        if self.dim < 2:
            raise InvalidSpec(f"dim must be >= 2, got {self.dim}")
        if self.per_class_train < 0 or self.per_class_test < 0:
            raise InvalidSpec("per-class counts must be >= 0")
        if self.per_class_train + self.per_class_test < 1:
            raise InvalidSpec("need at least one sample per class")
        if self.separation < 0:
            raise InvalidSpec(f"separation must be >= 0, got {self.separation}")
        if not (0.0 <= self.label_noise <= 1.0):
            raise InvalidSpec(f"label_noise must be in [0, 1], got {self.label_noise}")
        if self.language_offset_scale < 0:
            raise InvalidSpec("language_offset_scale must be >= 0")


def _interleave_is_train(i: int, n_train: int, n_total: int) -> bool:
    # Bresenham walk: exactly n_train train slots, spread evenly, no randomness
    return (i + 1) * n_train // n_total > i * n_train // n_total


def make_synthetic(spec: SyntheticSpec) -> EmbeddingStore:
    spec.validate()
    rng = Rng(spec.seed)
    languages = [f"lang{i:02d}" for i in range(spec.languages)]
    n_per = spec.per_class_train + spec.per_class_test
    records = []
    for lang in languages:
        if spec.language_offset_scale > 0:
            g = rng.split(f"offset|{lang}").normal(spec.dim)
            offset = spec.language_offset_scale * g / np.sqrt(g @ g)
        else:
            offset = np.zeros(spec.dim)
        for cls in (0, 1):
            mean = offset.copy()
            mean[0] += (2 * cls - 1) * spec.separation / 2.0
            child = rng.split(f"samples|{lang}|{cls}")
            X = child.normal(n_per * spec.dim).reshape(n_per, spec.dim) + mean
            noise_rng = rng.split(f"noise|{lang}|{cls}")
            for i in range(n_per):
                label = cls
                if spec.label_noise > 0 and noise_rng.uniform() < spec.label_noise:
                    label = 1 - cls
                split = (
                    SPLIT_TRAIN
                    if _interleave_is_train(i, spec.per_class_train, n_per)
                    else SPLIT_TEST
                )
                records.append(
                    EmbeddingRecord(
                        f"{lang}-c{cls}-{i:04d}", lang, split, label, X[i].astype(np.float32)
                    )
                )
    if spec.normalize:
        matrix = l2_normalize(np.stack([r.vector for r in records]))
        for i, r in enumerate(records):
            r.vector = matrix[i]
    meta = {
        "synthetic": {
            "languages": spec.languages,
            "dim": spec.dim,
            "per_class_train": spec.per_class_train,
            "per_class_test": spec.per_class_test,
            "separation": spec.separation,
            "language_offset_scale": spec.language_offset_scale,
            "label_noise": spec.label_noise,
            "seed": spec.seed,
            "normalize": spec.normalize,
        }
    }
    return EmbeddingStore(spec.dim, languages, records, meta)
