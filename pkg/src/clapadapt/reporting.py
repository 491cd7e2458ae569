"""Result records on disk and the tables assembled from them.

One machine-readable delimited file carries per-cell records; the renderers
here rebuild the headline table (best value per language and strategy, with
the winning shot in parentheses), the per-setting appendix tables, the
lolo-minus-crosslingual delta table, and the per-shot mean curves from those
records. Files written by different stores never merge: each file embeds the
hash of the store it was computed from.
"""

import csv
import io
import json

import numpy as np

from .errors import DataError, ManifestError, MissingCounterpart
from .experiments import CurvePoint, DeltaRow, ResultTable

RESULT_FORMAT = "clapadapt-results v1"

COLUMNS = [
    "setting",
    "language",
    "strategy",
    "shot",
    "status",
    "error",
    "seed",
    "chosen_classifier",
    "anchored_classifier",
    "best",
    "best_classifier",
    "macro_f1",
    "accuracy",
    "f1_class0",
    "f1_class1",
    "svm_macro_f1",
    "svm_accuracy",
    "mlp_macro_f1",
    "mlp_accuracy",
    "support_total",
    "support_clamps",
    "train_size",
    "test_size",
    "test_digest",
]

_REQUIRED = ("setting", "language", "strategy", "shot", "macro_f1")


def _fnum(x) -> str:
    # shortest float repr round-trips and is stable across runs
    return repr(float(x))


def config_hash(config: dict) -> str:
    """16-hex digest of a canonical JSON rendering of a resolved config."""
    import hashlib

    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


# row model


class ResultRow:
    """One record from a results file; missing numeric fields stay None."""

    __slots__ = tuple(COLUMNS)

    def __init__(self, **kw):
        for c in COLUMNS:
            setattr(self, c, kw.get(c))

    def group(self):
        return self.setting, self.language, self.strategy

    def candidates(self):
        """(macro, accuracy, classifier) options this row offers for best-row
        selection; the per-classifier breakdown when present, the headline
        metrics otherwise. Missing accuracy sorts as 0."""
        out = []
        for name in ("svm", "mlp"):
            m = getattr(self, f"{name}_macro_f1")
            if m is not None:
                a = getattr(self, f"{name}_accuracy")
                out.append((m, 0.0 if a is None else a, name))
        if not out and self.macro_f1 is not None:
            out.append((self.macro_f1, 0.0 if self.accuracy is None else self.accuracy,
                        self.chosen_classifier or ""))
        return out


def rows_from_table(table: ResultTable) -> list[ResultRow]:
    rows = []
    for cell in table.cells:
        kw = {
            "setting": cell.setting,
            "language": cell.language,
            "strategy": cell.strategy,
            "shot": cell.shot,
            "status": cell.status,
            "error": cell.error,
            "anchored_classifier": cell.anchored_classifier,
            "best": 1 if cell.best else 0,
            "best_classifier": cell.best_classifier,
        }
        r = cell.result
        if r is not None:
            kw.update(
                seed=f"{r.seed:016x}",
                chosen_classifier=r.chosen_classifier,
                macro_f1=r.macro_f1,
                accuracy=r.accuracy,
                f1_class0=r.per_class_f1[0],
                f1_class1=r.per_class_f1[1],
                support_total=r.support_total,
                support_clamps="; ".join(r.support_clamps),
                train_size=r.train_size,
                test_size=r.test_size,
                test_digest=r.test_digest,
            )
            if r.svm is not None:
                kw.update(svm_macro_f1=r.svm.macro_f1, svm_accuracy=r.svm.accuracy)
            if r.mlp is not None:
                kw.update(mlp_macro_f1=r.mlp.macro_f1, mlp_accuracy=r.mlp.accuracy)
        rows.append(ResultRow(**kw))
    return rows


# file io

_INT_FIELDS = ("shot", "best", "support_total", "train_size", "test_size")
_FLOAT_FIELDS = (
    "macro_f1", "accuracy", "f1_class0", "f1_class1",
    "svm_macro_f1", "svm_accuracy", "mlp_macro_f1", "mlp_accuracy",
)


def _cell_str(row: ResultRow, col: str) -> str:
    v = getattr(row, col)
    if v is None:
        return ""
    if col in _FLOAT_FIELDS:
        return _fnum(v)
    return str(v)


def write_results(rows: list[ResultRow], path: str, meta: dict) -> None:
    """Write records plus `# key=value` header comments (format tag first)."""
    buf = io.StringIO()
    buf.write(f"# {RESULT_FORMAT}\n")
    for key in sorted(meta):
        buf.write(f"# {key}={meta[key]}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for row in rows:
        w.writerow([_cell_str(row, c) for c in COLUMNS])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())


def read_results(path: str) -> tuple[list[ResultRow], dict]:
    """Parse a results file; hand-written files may omit any column beyond
    setting/language/strategy/shot/macro_f1 and all comments."""
    meta = {}
    body = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.startswith("#"):
                text = line[1:].strip()
                if "=" in text:
                    key, _, value = text.partition("=")
                    meta[key.strip()] = value.strip()
                continue
            if line.strip():
                body.append(line)
    if not body:
        raise ManifestError(f"{path}: no rows")
    reader = csv.DictReader(body)
    header = reader.fieldnames or []
    missing = [c for c in _REQUIRED if c not in header]
    if missing:
        raise ManifestError(f"{path}: missing required columns {missing}")
    rows = []
    for rec in reader:
        kw = {}
        for col in COLUMNS:
            raw = rec.get(col)
            if raw is None or raw == "":
                continue
            try:
                if col in _INT_FIELDS:
                    kw[col] = int(raw)
                elif col in _FLOAT_FIELDS:
                    kw[col] = float(raw)
                else:
                    kw[col] = raw
            except ValueError as exc:
                raise ManifestError(f"{path}: bad {col} value {raw!r}") from exc
        row = ResultRow(**kw)
        if row.status is None:
            row.status = "ok"
        rows.append(row)
    return rows, meta


def merge_results(parsed: list[tuple[list[ResultRow], dict]]) -> list[ResultRow]:
    """Concatenate rows from several files; files that declare a store hash
    must all declare the same one."""
    hashes = {m["store_hash"] for _, m in parsed if "store_hash" in m}
    if len(hashes) > 1:
        raise DataError(f"refusing to merge results from different stores: {sorted(hashes)}")
    out = []
    for rows, _ in parsed:
        out.extend(rows)
    return out


# best-row selection over parsed rows


def best_rows(rows: list[ResultRow]) -> dict:
    """(setting, language, strategy) -> (row, macro, accuracy, classifier, shot).

    Joint maximum over shots and classifiers: macro-F1 decides, accuracy
    breaks ties, and a full tie keeps the earliest candidate with shots
    scanned ascending and the SVM first.
    """
    groups: dict = {}
    for row in rows:
        if row.status != "ok" or row.macro_f1 is None:
            continue
        groups.setdefault(row.group(), []).append(row)
    out = {}
    for key, members in groups.items():
        members.sort(key=lambda r: r.shot)
        best = None
        for row in members:
            for m, a, name in row.candidates():
                if best is None or (m, a) > (best[1], best[2]):
                    best = (row, m, a, name, row.shot)
        if best is not None:
            out[key] = best
    return out


def compute_deltas(rows: list[ResultRow]) -> list[DeltaRow]:
    """Best lolo minus best crosslingual macro-F1 per (language, strategy)."""
    best = best_rows(rows)
    languages: list[str] = []
    strategies: list[str] = []
    for row in rows:
        if row.language not in languages:
            languages.append(row.language)
        if row.strategy not in strategies:
            strategies.append(row.strategy)
    out = []
    for lang in languages:
        for strat in strategies:
            lolo = best.get(("lolo", lang, strat))
            cross = best.get(("crosslingual", lang, strat))
            if lolo is None or cross is None:
                missing = "lolo" if lolo is None else "crosslingual"
                raise MissingCounterpart(
                    f"no usable {missing} result for language={lang!r}, strategy={strat!r}"
                )
            out.append(DeltaRow(lang, strat, lolo[1], cross[1]))
    return out


def compute_curves(rows: list[ResultRow]) -> list[CurvePoint]:
    """Mean headline macro-F1 across languages, per (setting, strategy, shot)."""
    settings: list[str] = []
    strategies: list[str] = []
    shots: set[int] = set()
    for row in rows:
        if row.setting not in settings:
            settings.append(row.setting)
        if row.strategy not in strategies:
            strategies.append(row.strategy)
        if row.shot is not None:
            shots.add(row.shot)
    out = []
    for setting in settings:
        for strat in strategies:
            for shot in sorted(shots):
                vals = [
                    r.macro_f1
                    for r in rows
                    if r.status == "ok" and r.macro_f1 is not None
                    and (r.setting, r.strategy, r.shot) == (setting, strat, shot)
                ]
                if vals:
                    out.append(CurvePoint(setting, strat, shot, float(np.mean(vals)), len(vals)))
    return out


# rendering

_SETTING_ORDER = ("crosslingual", "lolo", "monolingual")
_STRATEGY_ORDER = ("frozen", "projection_only", "projection_ft")


def _ordered(values, order):
    ranked = [v for v in order if v in values]
    return ranked + [v for v in values if v not in ranked]


def _aligned(table: list[list[str]]) -> str:
    widths = [max(len(row[i]) for row in table) for i in range(len(table[0]))]
    lines = []
    for j, row in enumerate(table):
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
        if j == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def main_table_data(rows: list[ResultRow]) -> dict:
    """Per setting: {language: {strategy: (macro, shot)}} plus per-strategy
    unweighted means over the languages that have a value."""
    best = best_rows(rows)
    data: dict = {}
    for (setting, lang, strat), (_row, m, _a, _n, shot) in best.items():
        data.setdefault(setting, {}).setdefault(lang, {})[strat] = (m, shot)
    out = {}
    for setting, langs in data.items():
        strategies = _ordered({s for v in langs.values() for s in v}, _STRATEGY_ORDER)
        means = {}
        for strat in strategies:
            vals = [v[strat][0] for v in langs.values() if strat in v]
            means[strat] = float(np.mean(vals)) if vals else None
        out[setting] = {"languages": langs, "strategies": strategies, "means": means}
    return out


def render_main_table(rows: list[ResultRow]) -> str:
    """Best macro-F1 per language and strategy, winning shot in parentheses,
    one block per setting, unweighted mean row at the bottom."""
    data = main_table_data(rows)
    blocks = []
    for setting in _ordered(data.keys(), _SETTING_ORDER):
        block = data[setting]
        strategies = block["strategies"]
        table = [["Language"] + list(strategies)]
        for lang in sorted(block["languages"]):
            row = [lang]
            for strat in strategies:
                cell = block["languages"][lang].get(strat)
                row.append("--" if cell is None else f"{cell[0]:.2f} ({cell[1]}-shot)")
            table.append(row)
        mean_row = ["Mean"]
        for strat in strategies:
            m = block["means"][strat]
            mean_row.append("--" if m is None else f"{m:.2f}")
        table.append(mean_row)
        blocks.append(f"== {setting}: best macro-F1 across shots ==\n" + _aligned(table))
    return "\n".join(blocks)


def render_appendix_tables(rows: list[ResultRow]) -> str:
    """Per (setting, strategy): Language | Macro-F1 | Accuracy | Best shot."""
    best = best_rows(rows)
    keys = sorted(
        {(s, st) for (s, _l, st) in best},
        key=lambda k: (_SETTING_ORDER.index(k[0]) if k[0] in _SETTING_ORDER else 99,
                       _STRATEGY_ORDER.index(k[1]) if k[1] in _STRATEGY_ORDER else 99),
    )
    blocks = []
    for setting, strat in keys:
        table = [["Language", "Macro-F1", "Accuracy", "Best shot"]]
        langs = sorted({l for (s, l, st) in best if (s, st) == (setting, strat)})
        for lang in langs:
            _row, m, a, _name, shot = best[(setting, lang, strat)]
            table.append([lang, f"{m:.2f}", f"{a:.2f}", f"{shot}-shot"])
        blocks.append(f"== {setting} / {strat}: best per language ==\n" + _aligned(table))
    return "\n".join(blocks)


def render_delta_table(deltas: list[DeltaRow]) -> str:
    table = [["Language", "Strategy", "LOLO", "Cross-lingual", "Delta"]]
    for d in deltas:
        table.append([
            d.language, d.strategy,
            f"{d.lolo_macro_f1:.2f}", f"{d.crosslingual_macro_f1:.2f}",
            f"{d.delta:+.2f}",
        ])
    return "== lolo minus crosslingual, best macro-F1 ==\n" + _aligned(table)


def render_curves(curves: list[CurvePoint]) -> str:
    table = [["Setting", "Strategy", "Shot", "Mean macro-F1", "Languages"]]
    for c in curves:
        table.append([c.setting, c.strategy, str(c.shot), f"{c.mean_macro_f1:.2f}", str(c.n_languages)])
    return "== mean macro-F1 across languages per shot ==\n" + _aligned(table)


def render_report(rows: list[ResultRow], include_deltas: bool = True) -> str:
    parts = [render_main_table(rows), render_appendix_tables(rows)]
    if include_deltas:
        settings = {r.setting for r in rows}
        if {"lolo", "crosslingual"} <= settings:
            parts.append(render_delta_table(compute_deltas(rows)))
    parts.append(render_curves(compute_curves(rows)))
    return "\n".join(parts)


# delimited emitters for plotting


def write_deltas(deltas: list[DeltaRow], path: str, meta: dict) -> None:
    buf = io.StringIO()
    buf.write(f"# {RESULT_FORMAT}\n")
    for key in sorted(meta):
        buf.write(f"# {key}={meta[key]}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["language", "strategy", "lolo_macro_f1", "crosslingual_macro_f1", "delta"])
    for d in deltas:
        w.writerow([d.language, d.strategy, _fnum(d.lolo_macro_f1),
                    _fnum(d.crosslingual_macro_f1), _fnum(d.delta)])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())


def write_curves(curves: list[CurvePoint], path: str, meta: dict) -> None:
    buf = io.StringIO()
    buf.write(f"# {RESULT_FORMAT}\n")
    for key in sorted(meta):
        buf.write(f"# {key}={meta[key]}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["setting", "strategy", "shot", "mean_macro_f1", "n_languages"])
    for c in curves:
        w.writerow([c.setting, c.strategy, c.shot, _fnum(c.mean_macro_f1), c.n_languages])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())


def write_table_text(text: str, path: str, meta: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# {RESULT_FORMAT}\n")
        for key in sorted(meta):
            fh.write(f"# {key}={meta[key]}\n")
        fh.write(text)
