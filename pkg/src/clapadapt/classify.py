"""Binary classifiers over adapted embeddings.

Three ways to label a vector:

* zero-shot: cosine similarity against one prototype per class. Prototypes
  come either from a two-record prompt store (one embedded prompt per class)
  or, prompt-free, from normalized class means of a training split.
* svm: C-SVM with RBF kernel solved by the SMO kernel on a precomputed Gram
  matrix. gamma="scale" resolves to 1 / (dim * Var(X)).
* mlp: one hidden layer (100 relu units) to two logits, softmax cross-entropy,
  AdamW, early stopping on loss plateau.

Labels are always {0, 1}. SVM internally maps label 1 to +1. Non-convergence
of SMO within the pass budget is a recorded flag on the model, not an error.

Model files: SVMMDL01 and MLPMDL01, little-endian, layouts documented on the
save functions.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass

import numpy as np

from . import kernels
from .adapters import AdamW
from .datastore import SPLIT_TRAIN, EmbeddingStore
from .errors import (
    BadMagic,
    DataError,
    DimensionMismatch,
    EmptyBatch,
    InvalidSpec,
    LengthMismatch,
    MismatchedSplit,
    NonFiniteLoss,
    SingleClass,
    TruncatedFile,
)
from .veccore import Rng, l2_normalize

SVM_MAGIC = b"SVMMDL01"
MLP_MAGIC = b"MLPMDL01"


def _check_xy(X, labels):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if X.ndim != 2:
        raise DimensionMismatch(f"training matrix must be 2-D, got ndim={X.ndim}")
    if y.ndim != 1 or y.shape[0] != X.shape[0]:
        raise LengthMismatch(f"{X.shape[0]} rows vs {y.shape[0]} labels")
    if X.shape[0] == 0:
        raise EmptyBatch("empty training set")
    if not np.all(np.isin(y, (0, 1))):
        raise DataError("labels must be 0 or 1")
    if len(np.unique(y)) < 2:
        raise SingleClass("training set has a single class")
    return X, y


# zero-shot


@dataclass(frozen=True)
class PromptPrototype:
    label: int
    text: str
    vector: np.ndarray  # unit-norm float32


def prototypes_from_store(store: EmbeddingStore) -> list[PromptPrototype]:
    """A prompt store holds exactly two records, one per label; the prompt
    text may live in meta["prompts"] keyed by label, else the record id."""
    if len(store) != 2:
        raise InvalidSpec(f"prompt store must hold exactly 2 records, got {len(store)}")
    labels = sorted(r.label for r in store.records)
    if labels != [0, 1]:
        raise InvalidSpec(f"prompt store labels must be {{0, 1}}, got {labels}")
    texts = store.meta.get("prompts", {})
    out = []
    for r in sorted(store.records, key=lambda r: r.label):
        text = texts.get(str(r.label), r.id) if isinstance(texts, dict) else r.id
        out.append(PromptPrototype(r.label, text, l2_normalize(r.vector)))
    return out


def prototypes_from_class_means(
    store: EmbeddingStore, languages=None, split: str = SPLIT_TRAIN
) -> list[PromptPrototype]:
    """Prompt-free prototypes: normalized per-class mean of a split."""
    out = []
    for label in (0, 1):
        rows = [
            r.vector
            for r in store.records
            if r.label == label
            and r.split == split
            and (languages is None or r.language in languages)
        ]
        if not rows:
            raise SingleClass(f"no {split} records with label {label} to average")
        out.append(
            PromptPrototype(label, f"class-{label} mean", l2_normalize(np.mean(rows, axis=0)))
        )
    return out


def zero_shot_predict(prototypes: list[PromptPrototype], X) -> np.ndarray:
    """Label of the most cosine-similar prototype for each row; exact ties
    resolve to the smaller label."""
    protos = sorted(prototypes, key=lambda p: p.label)
    if [p.label for p in protos] != [0, 1]:
        raise InvalidSpec("need exactly one prototype per label {0, 1}")
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 1
    if single:
        X = X.reshape(1, -1)
    if X.shape[1] != protos[0].vector.shape[0]:
        raise DimensionMismatch(
            f"vectors dim {X.shape[1]} vs prototypes {protos[0].vector.shape[0]}"
        )
    U = np.asarray(l2_normalize(X), dtype=np.float64)
    P = np.stack([p.vector for p in protos]).astype(np.float64)
    sims = U @ P.T
    preds = np.argmax(sims, axis=1).astype(np.int64)  # argmax takes the first max
    return preds[0] if single else preds


# RBF-kernel SVM on the SMO kernel


@dataclass(frozen=True)
class SvmConfig:
    C: float = 1.0
    gamma: float | str = "scale"
    tol: float = 1e-3
    max_passes: int = 10_000
    seed: int = 0

    def __post_init__(self):
        if self.C <= 0:
            raise InvalidSpec(f"C must be positive, got {self.C}")
        if isinstance(self.gamma, str):
            if self.gamma != "scale":
                raise InvalidSpec(f"gamma must be a positive float or 'scale', got {self.gamma!r}")
        elif self.gamma <= 0:
            raise InvalidSpec(f"gamma must be positive, got {self.gamma}")


@dataclass
class SvmModel:
    support_vectors: np.ndarray  # (m, dim) float32
    dual_coef: np.ndarray  # (m,) float64, alpha_i * y_i
    bias: float
    gamma: float
    C: float
    converged: bool
    passes: int


def resolve_gamma(gamma, X) -> float:
    if gamma == "scale":
        var = float(np.asarray(X, dtype=np.float64).var())
        if var < 1e-12:
            var = 1.0  # constant features: fall back to 1/dim
        return 1.0 / (X.shape[1] * var)
    return float(gamma)


def train_svm(X, labels, cfg: SvmConfig | None = None) -> SvmModel:
    cfg = cfg or SvmConfig()
    X, y01 = _check_xy(X, labels)
    y = (2.0 * y01 - 1.0).astype(np.float64)
    gamma = resolve_gamma(cfg.gamma, X)
    K = kernels.rbf_gram(X, gamma=gamma)
    pool = Rng(cfg.seed).split("smo").uniform(1024)
    alphas, bias, passes, converged = kernels.smo_solve(
        K, y, cfg.C, cfg.tol, cfg.max_passes, pool
    )
    keep = alphas > 1e-10
    return SvmModel(
        support_vectors=X[keep].astype(np.float32),
        dual_coef=(alphas * y)[keep],
        bias=float(bias),
        gamma=gamma,
        C=cfg.C,
        converged=bool(converged),
        passes=int(passes),
    )


def svm_decision(model: SvmModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if model.support_vectors.shape[0] == 0:
        return np.full(X.shape[0], model.bias)
    K = kernels.rbf_gram(model.support_vectors.astype(np.float64), X, gamma=model.gamma)
    return model.dual_coef @ K + model.bias


def predict_svm(model: SvmModel, X) -> np.ndarray:
    return (svm_decision(model, X) > 0.0).astype(np.int64)


def save_svm(model: SvmModel, path: str) -> None:
    """SVMMDL01: magic, u32 dim, u32 n_sv, f64 bias/gamma/C, u8 converged,
    u32 passes, then n_sv*dim f32 support vectors, n_sv f64 dual coefs."""
    m, dim = model.support_vectors.shape
    parts = [
        SVM_MAGIC,
        struct.pack(
            "<IIdddBI", dim, m, model.bias, model.gamma, model.C,
            1 if model.converged else 0, model.passes,
        ),
        np.ascontiguousarray(model.support_vectors, dtype="<f4").tobytes(),
        np.ascontiguousarray(model.dual_coef, dtype="<f8").tobytes(),
    ]
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(b"".join(parts))
    os.replace(tmp, path)


def load_svm(path: str) -> SvmModel:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != SVM_MAGIC:
        raise BadMagic(f"{path}: expected {SVM_MAGIC!r}, got {blob[:8]!r}")
    header = struct.calcsize("<IIdddBI")
    if len(blob) < 8 + header:
        raise TruncatedFile(f"{path}: header incomplete")
    dim, m, bias, gamma, C, conv, passes = struct.unpack_from("<IIdddBI", blob, 8)
    offset = 8 + header
    need = 4 * m * dim + 8 * m
    if len(blob) != offset + need:
        raise TruncatedFile(f"{path}: expected {offset + need} bytes, found {len(blob)}")
    sv = np.frombuffer(blob, dtype="<f4", count=m * dim, offset=offset).reshape(m, dim)
    offset += 4 * m * dim
    coef = np.frombuffer(blob, dtype="<f8", count=m, offset=offset)
    return SvmModel(sv.copy(), coef.copy(), bias, gamma, C, bool(conv), passes)


# small MLP


@dataclass(frozen=True)
class MlpConfig:
    hidden: int = 100
    max_epochs: int = 200
    learning_rate: float = 1e-3
    weight_decay: float = 1e-4
    tol: float = 1e-4  # minimum loss improvement that resets the plateau count
    patience: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.hidden < 1 or self.max_epochs < 1 or self.patience < 1:
            raise InvalidSpec("hidden, max_epochs, patience must all be >= 1")
        if self.learning_rate <= 0:
            raise InvalidSpec("learning_rate must be positive")


@dataclass
class MlpModel:
    w1: np.ndarray  # (hidden, dim) float32
    b1: np.ndarray
    w2: np.ndarray  # (2, hidden) float32
    b2: np.ndarray
    epochs_run: int
    final_loss: float


def _mlp_logits(w1, b1, w2, b2, X):
    h = np.maximum(X @ w1.T + b1, 0.0)
    return h @ w2.T + b2, h


def train_mlp(X, labels, cfg: MlpConfig | None = None) -> MlpModel:
    cfg = cfg or MlpConfig()
    X, y = _check_xy(X, labels)
    n, dim = X.shape
    rng = Rng(cfg.seed)
    bound1 = 1.0 / np.sqrt(dim)
    bound2 = 1.0 / np.sqrt(cfg.hidden)
    w1 = (rng.split("w1").uniform(cfg.hidden * dim).reshape(cfg.hidden, dim) * 2 - 1) * bound1
    b1 = np.zeros(cfg.hidden)
    w2 = (rng.split("w2").uniform(2 * cfg.hidden).reshape(2, cfg.hidden) * 2 - 1) * bound2
    b2 = np.zeros(2)
    params = [w1, b1, w2, b2]
    opt = AdamW(params, lr=cfg.learning_rate, weight_decay=cfg.weight_decay)

    onehot = np.zeros((n, 2))
    onehot[np.arange(n), y] = 1.0
    best = np.inf
    plateau = 0
    epochs_run = 0
    loss = np.inf
    for epoch in range(cfg.max_epochs):
        logits, h = _mlp_logits(w1, b1, w2, b2, X)
        mx = logits.max(axis=1, keepdims=True)
        e = np.exp(logits - mx)
        p = e / e.sum(axis=1, keepdims=True)
        lse = mx.ravel() + np.log(e.sum(axis=1))
        loss = float(np.mean(lse - logits[np.arange(n), y]))
        if not np.isfinite(loss):
            raise NonFiniteLoss(epoch)
        d_logits = (p - onehot) / n
        dw2 = d_logits.T @ h
        db2 = d_logits.sum(axis=0)
        dh = d_logits @ w2
        da = dh * (h > 0.0)
        dw1 = da.T @ X
        db1 = da.sum(axis=0)
        opt.step([dw1, db1, dw2, db2])
        epochs_run = epoch + 1
        if best - loss >= cfg.tol:
            best = loss
            plateau = 0
        else:
            plateau += 1
            if plateau >= cfg.patience:
                break
    return MlpModel(
        w1.astype(np.float32), b1.astype(np.float32),
        w2.astype(np.float32), b2.astype(np.float32),
        epochs_run, loss,
    )


def predict_mlp(model: MlpModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    logits, _ = _mlp_logits(
        model.w1.astype(np.float64), model.b1.astype(np.float64),
        model.w2.astype(np.float64), model.b2.astype(np.float64), X,
    )
    return np.argmax(logits, axis=1).astype(np.int64)  # exact tie -> label 0


def save_mlp(model: MlpModel, path: str) -> None:
    """MLPMDL01: magic, u32 dim, u32 hidden, u32 epochs_run, f64 final_loss,
    then f32 arrays w1 (hidden x dim), b1, w2 (2 x hidden), b2."""
    hidden, dim = model.w1.shape
    parts = [
        MLP_MAGIC,
        struct.pack("<IIId", dim, hidden, model.epochs_run, model.final_loss),
        np.ascontiguousarray(model.w1, dtype="<f4").tobytes(),
        np.ascontiguousarray(model.b1, dtype="<f4").tobytes(),
        np.ascontiguousarray(model.w2, dtype="<f4").tobytes(),
        np.ascontiguousarray(model.b2, dtype="<f4").tobytes(),
    ]
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(b"".join(parts))
    os.replace(tmp, path)


def load_mlp(path: str) -> MlpModel:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != MLP_MAGIC:
        raise BadMagic(f"{path}: expected {MLP_MAGIC!r}, got {blob[:8]!r}")
    header = struct.calcsize("<IIId")
    if len(blob) < 8 + header:
        raise TruncatedFile(f"{path}: header incomplete")
    dim, hidden, epochs_run, final_loss = struct.unpack_from("<IIId", blob, 8)
    offset = 8 + header
    sizes = [hidden * dim, hidden, 2 * hidden, 2]
    if len(blob) != offset + 4 * sum(sizes):
        raise TruncatedFile(f"{path}: expected {offset + 4 * sum(sizes)} bytes, found {len(blob)}")
    arrays = []
    for count in sizes:
        arrays.append(np.frombuffer(blob, dtype="<f4", count=count, offset=offset).copy())
        offset += 4 * count
    return MlpModel(
        arrays[0].reshape(hidden, dim), arrays[1],
        arrays[2].reshape(2, hidden), arrays[3],
        epochs_run, final_loss,
    )


# selection


@dataclass(frozen=True)
class ClassifierScore:
    """Metrics one classifier earned on one test split; test_digest identifies
    the exact evaluation set so scores from different splits never compare."""

    name: str
    macro_f1: float
    accuracy: float
    test_digest: str


def select_classifier(svm_score: ClassifierScore, mlp_score: ClassifierScore) -> str:
    """Higher macro-F1 wins; exact tie goes to the SVM."""
    if svm_score.test_digest != mlp_score.test_digest:
        raise MismatchedSplit(
            f"scores come from different test splits: "
            f"{svm_score.test_digest} vs {mlp_score.test_digest}"
        )
    return "svm" if svm_score.macro_f1 >= mlp_score.macro_f1 else "mlp"
