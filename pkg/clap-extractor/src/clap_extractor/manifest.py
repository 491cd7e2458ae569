"""Audio manifest reader: delimited text, columns path, id, language,
split, label. Tab or comma delimited (sniffed from the first line); a
header row spelling out the column names is allowed and skipped."""

from __future__ import annotations

import csv
from dataclasses import dataclass

from .errors import SpecError

COLUMNS = ("path", "id", "language", "split", "label")
_SPLITS = {"train", "test"}


@dataclass(frozen=True)
class AudioItem:
    path: str
    id: str
    language: str
    split: str
    label: int


def read_audio_manifest(path: str) -> list[AudioItem]:
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            text = fh.read()
    except OSError as e:
        raise SpecError(f"cannot read manifest {path}: {e}") from e
    first = text.splitlines()[0] if text.strip() else ""
    delim = "\t" if "\t" in first else ","
    rows = [r for r in csv.reader(text.splitlines(), delimiter=delim) if r]
    if rows and tuple(c.strip().lower() for c in rows[0]) == COLUMNS:
        rows = rows[1:]
    if not rows:
        raise SpecError(f"manifest {path} has no data rows")
    items, seen = [], set()
    for n, row in enumerate(rows, start=1):
        if len(row) != len(COLUMNS):
            raise SpecError(f"{path} row {n}: expected {len(COLUMNS)} columns, got {len(row)}")
        clip, rid, language, split, label = (c.strip() for c in row)
        if not clip or not rid or not language:
            raise SpecError(f"{path} row {n}: path, id, and language must be non-empty")
        if rid in seen:
            raise SpecError(f"{path} row {n}: duplicate id {rid!r}")
        seen.add(rid)
        if split not in _SPLITS:
            raise SpecError(f"{path} row {n}: split must be train or test, got {split!r}")
        if label not in ("0", "1"):
            raise SpecError(f"{path} row {n}: label must be 0 or 1, got {label!r}")
        items.append(AudioItem(clip, rid, language, split, int(label)))
    return items


def write_audio_manifest(path: str, items: list[AudioItem], delimiter: str = "\t") -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        writer.writerow(COLUMNS)
        for it in items:
            writer.writerow([it.path, it.id, it.language, it.split, str(it.label)])
