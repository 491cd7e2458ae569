"""Exception hierarchy.

Three families map onto CLI exit codes: usage errors are argparse's domain
(exit 2), DataError covers malformed inputs and impossible requests (exit 3),
NumericError covers runtime numerical failures (exit 4). Everything raised by
this package derives from ClapAdaptError so callers can catch one root.

NoConvergence is deliberately absent: SMO non-convergence is a soft condition
reported on the model object, not an exception.
"""

from __future__ import annotations


class ClapAdaptError(Exception):
    """Root of all package errors."""


class DataError(ClapAdaptError):
    """Bad inputs: malformed files, impossible splits, contract violations."""


class NumericError(ClapAdaptError):
    """Numerical failure at runtime: non-finite losses, degenerate norms."""


# vector / loss preconditions

class ZeroNorm(NumericError):
    """A vector's L2 norm underflowed the 1e-12 floor where a direction was required."""


class NonFiniteInput(DataError):
    """An input array contains NaN or infinity."""


class DimensionMismatch(DataError):
    """Operands disagree on vector dimension or batch length."""


class LengthMismatch(DataError):
    """Paired sequences (embeddings vs labels, golds vs predictions) differ in length."""


class EmptyBatch(DataError):
    """A batch-valued operation received zero rows."""


class NoPositives(DataError):
    """Every anchor in a supervised contrastive batch lacks a same-label partner."""


class NonFiniteLoss(NumericError):
    """Training produced a NaN/inf loss; carries the epoch where it happened."""

    def __init__(self, epoch: int, message: str = ""):
        self.epoch = epoch
        super().__init__(message or f"non-finite loss at epoch {epoch}")


class InvalidDimension(DataError):
    """A layer or store dimension is zero, negative, or inconsistent."""


# store / file format

class StoreError(DataError):
    """Base for embedding-store file problems."""


class BadMagic(StoreError):
    """File does not start with the expected format tag."""


class TruncatedFile(StoreError):
    """File ended early, or carries trailing bytes beyond the declared records."""


class DuplicateId(StoreError):
    """Two records share an id within one store."""


class ManifestError(StoreError):
    """Sidecar manifest missing, unparsable, or inconsistent with the binary."""


class UnknownLanguage(DataError):
    """A requested language is not present in the store."""


class InvalidSpec(DataError):
    """A synthetic-data or experiment specification fails validation."""


# classification / experiments

class SingleClass(DataError):
    """Classifier training set contains only one label."""


class MismatchedSplit(DataError):
    """Two results being compared were not computed on the same test split."""


class EmptySplit(DataError):
    """A split plan produced an empty train or test side."""


class MissingCounterpart(DataError):
    """A paired result (e.g. the cross-lingual row for a leave-one-out row) is absent."""


class LeakageError(DataError):
    """A split plan violated isolation (train/test overlap or forbidden language)."""


def attach_stage(exc: Exception, stage: str) -> Exception:
    """Tag an exception with the pipeline stage it surfaced in.

    Keeps the original type (callers still catch SingleClass etc.) while the
    message gains a stable "stage: " prefix used in sweep error columns.
    """
    prefix = f"{stage}: "
    if exc.args and isinstance(exc.args[0], str):
        if not exc.args[0].startswith(prefix):
            exc.args = (prefix + exc.args[0],) + exc.args[1:]
    else:
        exc.args = (prefix + exc.__class__.__name__,)
    setattr(exc, "stage", stage)
    return exc
