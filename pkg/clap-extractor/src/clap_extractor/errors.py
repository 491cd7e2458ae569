"""Error taxonomy. Callers distinguish three situations: a bad request or
manifest (SpecError), one clip that cannot be decoded (UnreadableAudio,
skippable), and an encoder that cannot be brought up at all
(CheckpointLoadFailure, fatal). TrainingDiverged mirrors the numeric
failure mode of the harness's own projection training."""


class ExtractorError(Exception):
    """Base for everything this package raises on purpose."""


class SpecError(ExtractorError):
    """Invalid spec, manifest, or argument combination."""


class UnreadableAudio(ExtractorError):
    """One audio file could not be read or decoded. Extraction logs and
    skips these; fine-tuning raises when the file is part of the support."""


class CheckpointLoadFailure(ExtractorError):
    """The encoder checkpoint could not be loaded."""


class TrainingDiverged(ExtractorError):
    """Fine-tuning produced a non-finite loss or non-finite weights."""

    def __init__(self, epoch: int, message: str = ""):
        self.epoch = epoch
        super().__init__(message or f"non-finite loss at epoch {epoch}")
