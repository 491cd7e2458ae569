"""Split construction, metrics, single experiments, shot sweeps, and deltas.

Three evaluation settings share one pipeline: build the train/test split for
the target language, draw a per-class support set from the train side, adapt
the embeddings per the chosen strategy, fit the downstream classifiers on the
adapted train vectors, and score the adapted test vectors. Every cell of a
sweep derives its own seed from the master seed and the cell coordinates, so
results never depend on execution order or the number of worker threads.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace
import hashlib
import time

import numpy as np

from .datastore import (
    SPLIT_TEST,
    SPLIT_TRAIN,
    EmbeddingStore,
    SupportSet,
    read_store,
    sample_support,
    store_hash,
)
from .adapters import TrainConfig, adapt_store, default_head, init_head, train_projection
from .classify import (
    ClassifierScore,
    MlpConfig,
    SvmConfig,
    predict_mlp,
    predict_svm,
    select_classifier,
    train_mlp,
    train_svm,
)
from .errors import (
    ClapAdaptError,
    EmptyBatch,
    EmptySplit,
    InvalidSpec,
    LeakageError,
    LengthMismatch,
    MissingCounterpart,
    UnknownLanguage,
    attach_stage,
)
from .losses import SupConBatch
from .veccore import MASK64, Rng, fnv1a64

SETTINGS = ("monolingual", "crosslingual", "lolo")
STRATEGIES = ("frozen", "projection_only", "projection_ft")
SHOTS = (0, 1, 5, 10, 25, 50)
CLASSIFIERS = ("svm", "mlp", "auto")

# strategies runnable without an externally adapted store
DEFAULT_SWEEP_STRATEGIES = ("frozen", "projection_only")


# metrics (all percentages in [0, 100])


def _check_labels(preds, golds):
    p = np.asarray(preds, dtype=np.int64).ravel()
    g = np.asarray(golds, dtype=np.int64).ravel()
    if p.shape[0] != g.shape[0]:
        raise LengthMismatch(f"{p.shape[0]} predictions vs {g.shape[0]} golds")
    if p.shape[0] == 0:
        raise EmptyBatch("no predictions to score")
    for name, arr in (("predictions", p), ("golds", g)):
        bad = arr[(arr != 0) & (arr != 1)]
        if bad.size:
            raise InvalidSpec(f"{name} contain non-binary label {int(bad[0])}")
    return p, g


def binary_confusion(preds, golds) -> dict:
    """Per-class true/false positive and false negative counts for {0, 1}."""
    p, g = _check_labels(preds, golds)
    out = {}
    for c in (0, 1):
        tp = int(np.sum((p == c) & (g == c)))
        fp = int(np.sum((p == c) & (g != c)))
        fn = int(np.sum((p != c) & (g == c)))
        out[c] = (tp, fp, fn)
    return out


def per_class_f1(preds, golds) -> tuple[float, float]:
    """F1 per class in percent; a class with no TP, FP, or FN scores 0."""
    conf = binary_confusion(preds, golds)
    scores = []
    for c in (0, 1):
        tp, fp, fn = conf[c]
        denom = 2 * tp + fp + fn
        scores.append(0.0 if denom == 0 else 100.0 * 2 * tp / denom)
    return scores[0], scores[1]


def macro_f1(preds, golds) -> float:
    """Unweighted mean of the two per-class F1 scores, in percent."""
    f0, f1 = per_class_f1(preds, golds)
    return (f0 + f1) / 2.0


def accuracy(preds, golds) -> float:
    """Fraction of exact label matches, in percent."""
    p, g = _check_labels(preds, golds)
    return 100.0 * float(np.mean(p == g))


def mean_within_class_cosine(vectors, labels) -> float:
    """Mean pairwise cosine similarity among same-class rows, averaged over
    the classes that have at least two members. Rows are normalized first,
    so the value reflects direction clustering only."""
    X = np.asarray(vectors, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64).ravel()
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise LengthMismatch(f"vectors {X.shape} vs {y.shape[0]} labels")
    norms = np.sqrt(np.einsum("ij,ij->i", X, X))
    if np.any(norms <= 0):
        raise EmptyBatch("zero-norm row in cosine computation")
    U = X / norms[:, None]
    per_class = []
    for c in np.unique(y):
        rows = U[y == c]
        m = rows.shape[0]
        if m < 2:
            continue
        gram = rows @ rows.T
        # off-diagonal mean over m*(m-1) ordered pairs
        per_class.append((gram.sum() - m) / (m * (m - 1)))
    if not per_class:
        raise EmptyBatch("no class has two or more members")
    return float(np.mean(per_class))


# per-cell seeds


def canonical_cell(setting: str, language: str, shot: int, strategy: str):
    """Fold the two spellings of "no adaptation" into one cell identity.

    shot=0 means no support set, so every strategy degenerates to frozen
    embeddings; the frozen strategy ignores the support set, so its shot is
    irrelevant. Both collapse to (shot=0, frozen), which is what makes the
    frozen results shot-independent and the 0-shot results strategy-
    independent, bit for bit.
    """
    if shot == 0 or strategy == "frozen":
        return setting, language, 0, "frozen"
    return setting, language, shot, strategy


def cell_seed(master_seed: int, setting: str, language: str, shot: int, strategy: str) -> int:
    s, l, k, st = canonical_cell(setting, language, shot, strategy)
    return (master_seed ^ fnv1a64(f"{s}|{l}|{k}|{st}".encode())) & MASK64


# experiment configuration


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything one experiment cell needs, hyperparameters included.

    The projection_ft strategy consumes embeddings adapted elsewhere (the
    encoder-side pipeline dumps them as a plain store); ft_store_path points
    at that store and the cell applies no further adaptation of its own.
    """

    setting: str
    target_language: str
    shot: int
    strategy: str = "projection_only"
    classifier: str = "auto"
    master_seed: int = 0
    # projection-head training
    temperature: float = 0.07
    epochs: int = 50
    learning_rate: float = 1e-4
    weight_decay: float = 0.01
    warmup_epochs: int = 0
    batch_size: int | None = None
    head_hidden: int | None = None  # None: hidden width = input dim
    # downstream classifiers
    svm_c: float = 1.0
    svm_gamma: float | str = "scale"
    svm_tol: float = 1e-3
    svm_max_passes: int = 10_000
    mlp_hidden: int = 100
    mlp_max_epochs: int = 200
    mlp_learning_rate: float = 1e-3
    mlp_weight_decay: float = 1e-4
    ft_store_path: str | None = None
    allow_custom_shot: bool = False

    def validate(self) -> None:
        if self.setting not in SETTINGS:
            raise InvalidSpec(f"setting must be one of {SETTINGS}, got {self.setting!r}")
        if self.strategy not in STRATEGIES:
            raise InvalidSpec(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        if self.classifier not in CLASSIFIERS:
            raise InvalidSpec(f"classifier must be one of {CLASSIFIERS}, got {self.classifier!r}")
        if self.shot < 0:
            raise InvalidSpec(f"shot must be >= 0, got {self.shot}")
        if self.shot not in SHOTS and not self.allow_custom_shot:
            raise InvalidSpec(f"shot {self.shot} not in {SHOTS}; pass allow_custom_shot to override")
        canon = self.canonical()
        if canon.strategy == "projection_ft" and not canon.ft_store_path:
            raise InvalidSpec("projection_ft requires an externally adapted store")
        if self.master_seed < 0 or self.master_seed > MASK64:
            raise InvalidSpec("master_seed must fit in 64 bits")

    def canonical(self) -> "ExperimentConfig":
        s, l, k, st = canonical_cell(self.setting, self.target_language, self.shot, self.strategy)
        if (k, st) == (self.shot, self.strategy):
            return self
        return replace(self, shot=k, strategy=st, ft_store_path=None)

    def seed(self) -> int:
        return cell_seed(self.master_seed, self.setting, self.target_language, self.shot, self.strategy)

    def echo(self) -> dict:
        """Canonical config as a plain dict, for embedding in results."""
        canon = self.canonical()
        out = {}
        for f in fields(canon):
            if f.name in ("ft_store_path", "allow_custom_shot"):
                continue
            out[f.name] = getattr(canon, f.name)
        return out


# split plans


@dataclass
class SplitPlan:
    setting: str
    target_language: str
    train_ids: list[str]
    test_ids: list[str]
    train_languages: list[str]
    support_ids: list[str] = field(default_factory=list)

    def validate(self, store: EmbeddingStore) -> None:
        train = set(self.train_ids)
        test = set(self.test_ids)
        support = set(self.support_ids)
        if train & test:
            raise LeakageError(f"{len(train & test)} ids appear in both train and test")
        if not support <= train:
            raise LeakageError(f"{len(support - train)} support ids fall outside train")
        if self.setting == "lolo":
            for rid in self.train_ids:
                if store.by_id(rid).language == self.target_language:
                    raise LeakageError(f"target-language id {rid!r} in lolo train set")


def build_split(setting: str, target_language: str, store: EmbeddingStore) -> SplitPlan:
    """Assemble train/test id sets for one setting and target language.

    monolingual: target train vs target test. crosslingual: every language's
    train split vs target test. lolo: every other language's train split vs
    target test.
    """
    if setting not in SETTINGS:
        raise InvalidSpec(f"setting must be one of {SETTINGS}, got {setting!r}")
    if target_language not in store.languages:
        raise UnknownLanguage(f"{target_language!r} not in store languages {store.languages}")
    if setting == "monolingual":
        train_languages = [target_language]
    elif setting == "crosslingual":
        train_languages = list(store.languages)
    else:
        train_languages = [l for l in store.languages if l != target_language]
    train_ids = sorted(
        r.id for r in store.select(split=SPLIT_TRAIN) if r.language in train_languages
    )
    test_ids = sorted(r.id for r in store.select(language=target_language, split=SPLIT_TEST))
    if not train_ids:
        raise EmptySplit(f"no train records for setting={setting}, target={target_language}")
    if not test_ids:
        raise EmptySplit(f"no test records for language {target_language!r}")
    plan = SplitPlan(setting, target_language, train_ids, test_ids, train_languages)
    plan.validate(store)
    return plan


# single experiment


@dataclass
class ClassifierOutcome:
    name: str
    macro_f1: float
    accuracy: float
    f1_class0: float
    f1_class1: float
    detail: str = ""  # convergence / early-stop note, not part of metrics

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "macro_f1": self.macro_f1,
            "accuracy": self.accuracy,
            "f1_class0": self.f1_class0,
            "f1_class1": self.f1_class1,
            "detail": self.detail,
        }


@dataclass
class EvaluationResult:
    """One cell's outcome. `timings` is wall-clock bookkeeping and is excluded
    from the canonical serialization so reruns compare bit for bit."""

    config: dict
    seed: int
    store_hash: str
    train_size: int
    test_size: int
    support_total: int
    support_clamps: list[str]
    adaptation: str  # "frozen" | "trained" | "identity (degenerate support)" | "external"
    chosen_classifier: str
    macro_f1: float
    accuracy: float
    per_class_f1: tuple[float, float]
    svm: ClassifierOutcome | None
    mlp: ClassifierOutcome | None
    test_digest: str
    timings: dict = field(default_factory=dict)

    def to_dict(self, include_timings: bool = False) -> dict:
        out = {
            "config": dict(self.config),
            "seed": f"{self.seed:016x}",
            "store_hash": self.store_hash,
            "train_size": self.train_size,
            "test_size": self.test_size,
            "support_total": self.support_total,
            "support_clamps": list(self.support_clamps),
            "adaptation": self.adaptation,
            "chosen_classifier": self.chosen_classifier,
            "macro_f1": self.macro_f1,
            "accuracy": self.accuracy,
            "per_class_f1": list(self.per_class_f1),
            "svm": self.svm.to_dict() if self.svm else None,
            "mlp": self.mlp.to_dict() if self.mlp else None,
            "test_digest": self.test_digest,
        }
        if include_timings:
            out["timings"] = dict(self.timings)
        return out

    def canonical_json(self) -> str:
        import json

        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))


def _support_batch(store: EmbeddingStore, support: SupportSet):
    ids = support.all_ids()
    X = store.vectors(ids)
    y = store.labels(ids)
    return X, y


def _digest_test(ids: list[str], X: np.ndarray) -> str:
    h = hashlib.sha256()
    for rid in ids:
        h.update(rid.encode("utf-8"))
        h.update(b"\x00")
    h.update(np.ascontiguousarray(X, dtype=np.float32).tobytes())
    return h.hexdigest()[:16]


def _stage(stage_name):
    """Decorator-free helper: re-raise library errors tagged with the stage."""

    class _Ctx:
        def __enter__(self):
            return self

        def __exit__(self, exc_type, exc, tb):
            if exc is not None and isinstance(exc, ClapAdaptError):
                attach_stage(exc, stage_name)
            return False

    return _Ctx()


def run_experiment(cfg: ExperimentConfig, store: EmbeddingStore) -> EvaluationResult:
    """Run one cell end to end; fully deterministic for a fixed config.

    Pipeline: build the split, sample the support set, adapt the embeddings
    (identity for frozen, head training for projection_only, an external
    pre-adapted store for projection_ft), train the requested classifiers on
    the adapted train vectors, and score the adapted test vectors. Any
    library error is re-raised with its pipeline stage prefixed.
    """
    cfg.validate()
    canon = cfg.canonical()
    seed = canon.seed()
    rng = Rng(seed)
    timings = {}
    t0 = time.perf_counter()

    with _stage("build_split"):
        plan = build_split(canon.setting, canon.target_language, store)

    support = None
    support_clamps: list[str] = []
    support_total = 0
    if canon.shot > 0:
        with _stage("sample_support"):
            support = sample_support(
                store,
                canon.shot,
                rng.split("support").seed,
                languages=plan.train_languages,
            )
            plan.support_ids = support.all_ids()
            plan.validate(store)
            support_total = support.total()
            support_clamps = [
                f"{lang}/{label}: {avail} of {canon.shot}"
                for lang, label, avail in support.clamped()
            ]
    timings["split_s"] = time.perf_counter() - t0

    t1 = time.perf_counter()
    adapted = store
    adaptation = "frozen"
    with _stage("adapt"):
        if canon.strategy == "projection_only":
            X_s, y_s = _support_batch(store, support)
            counts = np.bincount(y_s, minlength=2)
            if int(counts.max(initial=0)) < 2:
                # no same-class pair anywhere: the contrastive loss has no
                # positives, so training would leave a random untrained head;
                # fall back to the frozen embeddings and record why
                adaptation = "identity (degenerate support)"
                support_clamps.append("no same-class support pair; identity adaptation")
            else:
                if canon.head_hidden is not None:
                    head = init_head(store.dim, canon.head_hidden, 128, rng.split("head-init").seed)
                else:
                    head = default_head(store.dim, rng.split("head-init").seed)
                tcfg = TrainConfig(
                    epochs=canon.epochs,
                    learning_rate=canon.learning_rate,
                    temperature=canon.temperature,
                    weight_decay=canon.weight_decay,
                    seed=rng.split("train").seed,
                    batch_size=canon.batch_size,
                    warmup_epochs=canon.warmup_epochs,
                )
                trained, _report = train_projection(head, SupConBatch.build(X_s, y_s), tcfg)
                adapted = adapt_store(trained, store)
                adaptation = "trained"
        elif canon.strategy == "projection_ft":
            ext = read_store(cfg.ft_store_path)
            mine = {r.id for r in store.records}
            theirs = {r.id for r in ext.records}
            if mine != theirs:
                raise InvalidSpec(
                    f"external store ids differ from base store "
                    f"({len(mine - theirs)} missing, {len(theirs - mine)} extra)"
                )
            for r in store.records:
                other = ext.by_id(r.id)
                if (other.language, other.split, other.label) != (r.language, r.split, r.label):
                    raise InvalidSpec(f"external store disagrees on record {r.id!r}")
            adapted = ext
            adaptation = "external"
    timings["adapt_s"] = time.perf_counter() - t1

    t2 = time.perf_counter()
    with _stage("train_classifier"):
        X_tr = adapted.vectors(plan.train_ids).astype(np.float64)
        y_tr = adapted.labels(plan.train_ids)
        X_te = adapted.vectors(plan.test_ids).astype(np.float64)
        y_te = adapted.labels(plan.test_ids)
        test_digest = _digest_test(plan.test_ids, X_te)

        svm_out = mlp_out = None
        preds = {}
        if canon.classifier in ("svm", "auto"):
            scfg = SvmConfig(
                C=canon.svm_c,
                gamma=canon.svm_gamma,
                tol=canon.svm_tol,
                max_passes=canon.svm_max_passes,
                seed=rng.split("svm").seed,
            )
            model = train_svm(X_tr, y_tr, scfg)
            p = predict_svm(model, X_te)
            preds["svm"] = p
            f0, f1 = per_class_f1(p, y_te)
            svm_out = ClassifierOutcome(
                "svm", macro_f1(p, y_te), accuracy(p, y_te), f0, f1,
                detail="" if model.converged else f"pass cap hit ({model.passes})",
            )
        if canon.classifier in ("mlp", "auto"):
            mcfg = MlpConfig(
                hidden=canon.mlp_hidden,
                max_epochs=canon.mlp_max_epochs,
                learning_rate=canon.mlp_learning_rate,
                weight_decay=canon.mlp_weight_decay,
                seed=rng.split("mlp").seed,
            )
            model = train_mlp(X_tr, y_tr, mcfg)
            p = predict_mlp(model, X_te)
            preds["mlp"] = p
            f0, f1 = per_class_f1(p, y_te)
            mlp_out = ClassifierOutcome(
                "mlp", macro_f1(p, y_te), accuracy(p, y_te), f0, f1,
                detail=f"epochs {model.epochs_run}",
            )
    timings["classify_s"] = time.perf_counter() - t2

    with _stage("evaluate"):
        if canon.classifier == "auto":
            chosen = select_classifier(
                ClassifierScore("svm", svm_out.macro_f1, svm_out.accuracy, test_digest),
                ClassifierScore("mlp", mlp_out.macro_f1, mlp_out.accuracy, test_digest),
            )
        else:
            chosen = canon.classifier
        headline = svm_out if chosen == "svm" else mlp_out
    timings["total_s"] = time.perf_counter() - t0

    return EvaluationResult(
        config=cfg.echo(),
        seed=seed,
        store_hash=store_hash(store),
        train_size=len(plan.train_ids),
        test_size=len(plan.test_ids),
        support_total=support_total,
        support_clamps=support_clamps,
        adaptation=adaptation,
        chosen_classifier=chosen,
        macro_f1=headline.macro_f1,
        accuracy=headline.accuracy,
        per_class_f1=(headline.f1_class0, headline.f1_class1),
        svm=svm_out,
        mlp=mlp_out,
        test_digest=test_digest,
        timings=timings,
    )


# sweeps


@dataclass
class SweepCell:
    """One grid point, keyed by the axes as requested (pre-canonicalization),
    so a table keeps distinct frozen@5 and projection_only@0 rows even though
    both compute the same canonical cell."""

    setting: str
    language: str
    strategy: str
    shot: int
    status: str = "ok"  # "ok" | "error"
    error: str = ""
    result: EvaluationResult | None = None
    anchored_classifier: str = ""
    best: bool = False
    best_classifier: str = ""

    def group(self):
        return self.setting, self.language, self.strategy


@dataclass
class ResultTable:
    cells: list[SweepCell]
    store_hash: str
    master_seed: int
    anchor_shot: int
    anchors: dict = field(default_factory=dict)  # (setting, language) or +strategy -> name

    def ok_cells(self) -> list[SweepCell]:
        return [c for c in self.cells if c.status == "ok"]


def _best_candidates(cell: SweepCell):
    """(macro, accuracy, classifier) triples this cell offers."""
    out = []
    r = cell.result
    for outcome in (r.svm, r.mlp):
        if outcome is not None:
            out.append((outcome.macro_f1, outcome.accuracy, outcome.name))
    return out


def mark_best_rows(cells: list[SweepCell]) -> None:
    """Flag, per (setting, language, strategy), the winning (shot, classifier).

    Macro-F1 decides; accuracy breaks ties. A full tie keeps the earliest
    candidate in scan order, which runs shots ascending with the SVM first,
    so the cheaper shot and the conventional classifier win exact ties.
    """
    groups: dict = {}
    for cell in cells:
        if cell.status == "ok":
            groups.setdefault(cell.group(), []).append(cell)
    for group_cells in groups.values():
        group_cells.sort(key=lambda c: c.shot)
        best_cell = None
        best_key = None
        best_name = ""
        for cell in group_cells:
            for m, a, name in _best_candidates(cell):
                if best_key is None or (m, a) > best_key:
                    best_key = (m, a)
                    best_cell = cell
                    best_name = name
        if best_cell is not None:
            best_cell.best = True
            best_cell.best_classifier = best_name


def _anchor_key(cell: SweepCell, anchor_shot: int):
    # at the default anchor of 0 every strategy shares the frozen cell, so
    # the anchor is per (setting, language); a nonzero override anchors each
    # strategy on its own row
    if anchor_shot == 0:
        return cell.setting, cell.language
    return cell.setting, cell.language, cell.strategy


def apply_anchors(cells: list[SweepCell], anchor_shot: int) -> dict:
    """Per-language classifier choice pinned at one reference shot.

    The per-cell auto selection may flip between shots; the anchored column
    records the choice made once at `anchor_shot` and reused, mirroring a
    selection rule that is not varied between shot sizes."""
    anchors: dict = {}
    for cell in cells:
        if cell.status != "ok":
            continue
        canon_shot = canonical_cell(cell.setting, cell.language, cell.shot, cell.strategy)[2]
        if canon_shot == anchor_shot or cell.shot == anchor_shot:
            anchors.setdefault(_anchor_key(cell, anchor_shot), cell.result.chosen_classifier)
    for cell in cells:
        cell.anchored_classifier = anchors.get(_anchor_key(cell, anchor_shot), "")
    return anchors


def sweep(
    store: EmbeddingStore,
    languages=None,
    shots=SHOTS,
    settings=SETTINGS,
    strategies=DEFAULT_SWEEP_STRATEGIES,
    *,
    master_seed: int = 0,
    classifier: str = "auto",
    anchor_shot: int = 0,
    jobs: int = 1,
    config_overrides: dict | None = None,
    ft_store_resolver=None,
) -> ResultTable:
    """Run the full cross product of the axes; each cell is independent.

    A cell that raises a library error is recorded with its error string and
    the sweep continues. `ft_store_resolver(setting, language, shot)` maps a
    projection_ft cell to its externally adapted store path; without one,
    projection_ft cells record a config error. `jobs` sets the worker thread
    count and has no effect on results.
    """
    if languages is None:
        languages = list(store.languages)
    languages = list(languages)
    shots = list(shots)
    settings = list(settings)
    strategies = list(strategies)
    if not (languages and shots and settings and strategies):
        raise InvalidSpec("every sweep axis needs at least one value")
    for s in settings:
        if s not in SETTINGS:
            raise InvalidSpec(f"unknown setting {s!r}")
    for s in strategies:
        if s not in STRATEGIES:
            raise InvalidSpec(f"unknown strategy {s!r}")
    if jobs < 1:
        raise InvalidSpec(f"jobs must be >= 1, got {jobs}")
    overrides = dict(config_overrides or {})

    cells = [
        SweepCell(setting=s, language=l, strategy=st, shot=k)
        for s in settings
        for l in languages
        for st in strategies
        for k in shots
    ]

    # cells that canonicalize identically (frozen at any shot, anything at
    # shot 0) share one computation; the result object is treated read-only
    buckets: dict = {}
    for cell in cells:
        key = canonical_cell(cell.setting, cell.language, cell.shot, cell.strategy)
        if key[3] == "projection_ft":
            if ft_store_resolver is None:
                cell.status = "error"
                cell.error = "InvalidSpec: projection_ft requires an externally adapted store"
                continue
            key = key + (ft_store_resolver(cell.setting, cell.language, cell.shot),)
        buckets.setdefault(key, []).append(cell)

    def run_bucket(item) -> None:
        key, members = item
        setting, language, shot, strategy = key[:4]
        kwargs = dict(overrides)
        if len(key) == 5:
            kwargs["ft_store_path"] = key[4]
        cfg = ExperimentConfig(
            setting=setting,
            target_language=language,
            shot=shot,
            strategy=strategy,
            classifier=classifier,
            master_seed=master_seed,
            **kwargs,
        )
        try:
            result = run_experiment(cfg, store)
            for cell in members:
                cell.result = result
        except ClapAdaptError as exc:
            text = f"{type(exc).__name__}: {exc}"
            for cell in members:
                cell.status = "error"
                cell.error = text

    items = list(buckets.items())
    if jobs == 1:
        for item in items:
            run_bucket(item)
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            list(pool.map(run_bucket, items))

    anchors = apply_anchors(cells, anchor_shot)
    mark_best_rows(cells)
    return ResultTable(
        cells=cells,
        store_hash=store_hash(store),
        master_seed=master_seed,
        anchor_shot=anchor_shot,
        anchors=anchors,
    )


# deltas and curves


@dataclass
class DeltaRow:
    language: str
    strategy: str
    lolo_macro_f1: float
    crosslingual_macro_f1: float

    @property
    def delta(self) -> float:
        return self.lolo_macro_f1 - self.crosslingual_macro_f1


@dataclass
class CurvePoint:
    setting: str
    strategy: str
    shot: int
    mean_macro_f1: float
    n_languages: int


def _best_value(cells: list[SweepCell]) -> float | None:
    for cell in cells:
        if cell.best:
            candidates = _best_candidates(cell)
            if not candidates:
                return None
            return max(candidates, key=lambda t: (t[0], t[1]))[0]
    return None


def lolo_delta(table: ResultTable) -> tuple[list[DeltaRow], list[CurvePoint]]:
    """Per (language, strategy): best lolo macro-F1 minus best crosslingual
    macro-F1, plus mean-over-languages macro-F1 curves per shot."""
    by_group: dict = {}
    languages: list[str] = []
    strategies: list[str] = []
    for cell in table.cells:
        by_group.setdefault(cell.group(), []).append(cell)
        if cell.language not in languages:
            languages.append(cell.language)
        if cell.strategy not in strategies:
            strategies.append(cell.strategy)

    rows = []
    for lang in languages:
        for strat in strategies:
            lolo = _best_value(by_group.get(("lolo", lang, strat), []))
            cross = _best_value(by_group.get(("crosslingual", lang, strat), []))
            if lolo is None or cross is None:
                missing = "lolo" if lolo is None else "crosslingual"
                raise MissingCounterpart(
                    f"no usable {missing} result for language={lang!r}, strategy={strat!r}"
                )
            rows.append(DeltaRow(lang, strat, lolo, cross))

    curves = []
    seen_settings = []
    shots_seen: list[int] = []
    for cell in table.cells:
        if cell.setting not in seen_settings:
            seen_settings.append(cell.setting)
        if cell.shot not in shots_seen:
            shots_seen.append(cell.shot)
    for setting in seen_settings:
        for strat in strategies:
            for shot in sorted(shots_seen):
                vals = [
                    c.result.macro_f1
                    for c in table.cells
                    if c.status == "ok"
                    and (c.setting, c.strategy, c.shot) == (setting, strat, shot)
                ]
                if vals:
                    curves.append(
                        CurvePoint(setting, strat, shot, float(np.mean(vals)), len(vals))
                    )
    return rows, curves
