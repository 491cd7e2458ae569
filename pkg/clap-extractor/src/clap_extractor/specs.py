"""Extraction and prompt specs.

The default checkpoint is the pretrained audio-text dual encoder the
pipeline was built around; its feature extractor wants 48 kHz input and
produces 512-dim embeddings. The fixed clip duration is a pipeline choice
(long enough for typical short social clips) and is recorded in every
emitted store's metadata so downstream numbers can be traced to it.
"""

from dataclasses import dataclass, field

from .errors import SpecError

DEFAULT_CHECKPOINT = "laion/clap-htsat-unfused"
PAD_TRUNCATE = "pad-truncate"  # zero-pad the tail / cut the tail


@dataclass(frozen=True)
class ExtractionSpec:
    checkpoint: str = DEFAULT_CHECKPOINT
    sampling_rate: int = 48_000
    clip_seconds: float = 10.0
    pad_policy: str = PAD_TRUNCATE
    batch_size: int = 8

    def validate(self) -> None:
        if self.clip_seconds <= 0:
            raise SpecError(f"clip_seconds must be > 0, got {self.clip_seconds}")
        if self.sampling_rate <= 0:
            raise SpecError(f"sampling_rate must be > 0, got {self.sampling_rate}")
        if self.batch_size < 1:
            raise SpecError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.pad_policy != PAD_TRUNCATE:
            raise SpecError(f"unknown pad_policy {self.pad_policy!r}")
        if not self.checkpoint:
            raise SpecError("checkpoint identifier is empty")

    @property
    def clip_samples(self) -> int:
        return int(round(self.clip_seconds * self.sampling_rate))

    def meta(self) -> dict:
        """Provenance block stamped into every emitted store."""
        return {
            "source": "clap-extractor",
            "checkpoint": self.checkpoint,
            "sampling_rate": self.sampling_rate,
            "clip_seconds": self.clip_seconds,
            "pad_policy": self.pad_policy,
        }


@dataclass(frozen=True)
class PromptSpec:
    """Exactly one prompt text per class of the binary task."""

    prompts: dict = field(default_factory=dict)  # label -> text

    def validate(self) -> None:
        keys = set(self.prompts)
        if keys != {0, 1}:
            raise SpecError(f"need exactly one prompt per class {{0, 1}}, got keys {sorted(keys)}")
        for label, text in self.prompts.items():
            if not isinstance(text, str) or not text.strip():
                raise SpecError(f"prompt for class {label} is empty")

    def ordered(self) -> list:
        self.validate()
        return [(0, self.prompts[0]), (1, self.prompts[1])]
